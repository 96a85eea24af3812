import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from omnicon.core import (ConfigurationError, ConstraintFamily, LinearConstraints, ProtocolError,
                          TabularConstraints, UnsupportedQuery)
from omnicon.env import (AdaptiveAdversary, IIDAdversary, OutcomeDistribution, Prefix, SamplerDistribution,
                         ScriptedAdversary, SubsequenceDef, active_subsequences, expected_constraint,
                         make_adversary)


def empty_prefix(t, T, d=2):
    return Prefix(t, T, np.zeros((t - 1, 2)), np.zeros((t - 1, d)), np.zeros((t - 1, d)))


# --- distributions ---

def test_distribution_validation():
    with pytest.raises(ConfigurationError):
        OutcomeDistribution([[0.5, 1.5]])
    with pytest.raises(ConfigurationError):
        OutcomeDistribution([[0.5], [0.2]], [0.7, 0.7])
    d = OutcomeDistribution([[0.0, 1.0], [1.0, 0.0]], [0.25, 0.75])
    assert d.mean().tolist() == [0.75, 0.25]


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_sampling_reproducible(seed):
    dist = OutcomeDistribution(np.random.default_rng(seed).random((4, 2)))
    a = [dist.sample(np.random.default_rng(seed)).tolist() for _ in range(3)]
    r1, r2 = np.random.default_rng(seed), np.random.default_rng(seed)
    assert [dist.sample(r1).tolist() for _ in range(20)] == [dist.sample(r2).tolist() for _ in range(20)]
    assert a[0] == a[1] == a[2]


def test_sampler_distribution_refuses_expectations(rng):
    handle = SamplerDistribution(lambda r: r.random(2), 2)
    assert handle.sample(rng).shape == (2,)
    fam = ConstraintFamily([LinearConstraints([[[0.0, 0.0]]], [[-1.0]])])
    with pytest.raises(UnsupportedQuery):
        expected_constraint(handle, fam, 0)
    with pytest.raises(UnsupportedQuery):
        handle.mean()


# --- expected constraint ---

def test_expected_constraint_point_mass():
    fam = ConstraintFamily([LinearConstraints([[[0.5, -0.25]]], [[0.1]])])
    y = np.array([0.4, 0.8])
    assert np.array_equal(expected_constraint(OutcomeDistribution.point_mass(y), fam, 0), fam.matrix(y)[0])


def test_expected_constraint_symmetric_pair():
    fam = ConstraintFamily([LinearConstraints([[[0.8]]], [[-0.4]])])
    handle = OutcomeDistribution([[0.0], [1.0]])
    assert expected_constraint(handle, fam, 0).tolist() == [0.0]


def test_expected_constraint_matches_naive_sum(rng):
    fam = ConstraintFamily([TabularConstraints(3, rng.uniform(-1, 1, (2, 2, 9)), 2)])
    pts, probs = rng.random((5, 2)), rng.dirichlet(np.ones(5))
    handle = OutcomeDistribution(pts, probs / probs.sum())
    for a in range(2):
        for j in range(2):
            naive = math.fsum(handle.probs[k] * fam.matrix(pts[k])[a, j] for k in range(5))
            assert expected_constraint(handle, fam, a)[j] == pytest.approx(naive, abs=1e-15)


def test_empirical_constraint_means_within_four_sigma():
    rng = np.random.default_rng(17)
    fam = ConstraintFamily([LinearConstraints([[[0.5, 0.5]], [[-1.0, 0.0]]], [[-0.5], [0.3]])])
    handle = OutcomeDistribution(rng.random((4, 2)), rng.dirichlet(np.ones(4)))
    n = 100_000
    samples = np.array([fam.matrix(handle.sample(rng)) for _ in range(n)])
    for a in range(2):
        exact = expected_constraint(handle, fam, a)[0]
        sd = samples[:, a, 0].std()
        assert abs(samples[:, a, 0].mean() - exact) <= 4 * sd / math.sqrt(n) + 1e-12


# --- adversaries ---

def test_iid_same_handle_every_round(rng):
    dist = OutcomeDistribution([[0.2, 0.3]])
    adv = IIDAdversary(10, 2, rng, dist)
    handles = [adv.next_round(t, empty_prefix(t, 10))[1] for t in range(1, 11)]
    assert all(h.params() == dist.params() for h in handles)


def test_scripted_rows_in_order(tmp_path, rng):
    path = tmp_path / "script.csv"
    path.write_text("x0,s0_y0,s0_y1,s0_p,s1_y0,s1_y1,s1_p\n"
                    "0.5,0.1,0.2,0.5,0.9,0.8,0.5\n"
                    "0.7,0.3,0.3,1.0,,,\n")
    adv = ScriptedAdversary.from_csv(path, 2, 2, rng)
    x1, h1 = adv.next_round(1, empty_prefix(1, 2))
    x2, h2 = adv.next_round(2, empty_prefix(2, 2))
    assert x1.tolist() == [0.5] and h1.points.tolist() == [[0.1, 0.2], [0.9, 0.8]]
    assert x2.tolist() == [0.7] and h2.points.tolist() == [[0.3, 0.3]] and h2.probs.tolist() == [1.0]
    with pytest.raises(ProtocolError):
        adv.next_round(3, empty_prefix(3, 2))


def test_adaptive_parity_toggle_matches_script(rng):
    even, odd = OutcomeDistribution([[1.0, 0.0]]), OutcomeDistribution([[0.0, 1.0]])
    adv = AdaptiveAdversary(20, 2, rng, lambda t, prefix, r: even if t % 2 == 0 else odd)
    for t in range(1, 21):
        assert adv.next_round(t, empty_prefix(t, 20))[1] is (even if t % 2 == 0 else odd)


def test_masking_preset_sets_flag_by_round(rng):
    adv = make_adversary("masking", {"coord": 1, "period": 3, "phase": 1, "background": [[0.4, 0.0]]}, 9, 2, rng)
    for t in range(1, 10):
        handle = adv.next_round(t, empty_prefix(t, 9))[1]
        assert handle.points.tolist() == [[0.4, 1.0 if t % 3 == 1 else 0.0]]


def test_flipper_reads_only_the_prefix(rng):
    adv = make_adversary("constraint-flipper", {"coord": 0, "pivot": 0.5}, 10, 1, rng)
    high = adv.next_round(1, Prefix(1, 10, np.zeros((0, 2)), np.zeros((0, 1)), np.zeros((0, 1))))[1]
    low_prefix = Prefix(2, 10, np.zeros((1, 2)), np.array([[0.9]]), np.zeros((1, 1)))
    assert high.mean()[0] > 0.5 and adv.next_round(2, low_prefix)[1].mean()[0] < 0.5


def test_unknown_preset(rng):
    with pytest.raises(ConfigurationError):
        make_adversary("chaotic", {}, 5, 1, rng)


# --- subsequences ---

def test_single_full_subsequence_always_active():
    full = [SubsequenceDef("all-rounds", "interval", {"start": 1, "end": 50})]
    assert all(active_subsequences(full, t, [0.0]).tolist() == [True] for t in range(1, 51))


def test_overlapping_intervals():
    defs = [SubsequenceDef("a", "interval", {"start": 1, "end": 50}),
            SubsequenceDef("b", "interval", {"start": 26, "end": 100})]
    assert active_subsequences(defs, 30, [0.0]).tolist() == [True, True]
    assert active_subsequences(defs, 10, [0.0]).tolist() == [True, False]
    assert [d.length(100) for d in defs] == [50, 75]


def test_feature_threshold_matches_indicator(rng):
    defs = [SubsequenceDef("hi", "feature-threshold", {"coord": 1, "theta": 0.4}),
            SubsequenceDef("lo", "feature-threshold", {"coord": 1, "theta": 0.4, "above": False})]
    for t in range(1, 200):
        x = rng.random(2)
        assert active_subsequences(defs, t, x).tolist() == [bool(x[1] > 0.4), not bool(x[1] > 0.4)]
    assert defs[0].length(100) is None


def test_uncovered_round_is_a_protocol_error():
    defs = [SubsequenceDef("even", "periodic", {"period": 2, "phase": 0})]
    assert defs[0].length(9) == 4
    with pytest.raises(ProtocolError):
        active_subsequences(defs, 3, [0.0])


def test_scripted_subsequence_and_validation():
    s = SubsequenceDef("picked", "scripted", {"rounds": [2, 5, 11]})
    assert [s.contains(t, None) for t in range(1, 7)] == [False, True, False, False, True, False]
    assert s.length(10) == 2
    with pytest.raises(ConfigurationError):
        SubsequenceDef("bad", "interval", {"start": 1})
    with pytest.raises(ConfigurationError):
        SubsequenceDef("bad", "lunar", {})
