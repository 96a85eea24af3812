import math
from decimal import Decimal, getcontext

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from omnicon.agents import (CandidateLedger, EliminationAgent, FeasibilityExhausted, constrained_best_response,
                            responsible_index, step_alg1, step_alg2, step_alg3, step_alg4, tau_subsequence,
                            threshold_tau, union_candidates)
from omnicon.core import (AgentSpec, ConfigurationError, ConstraintFamily, InvariantViolation, LinearConstraints,
                          LinearUtility, ProtocolError, TabularConstraints)


def linear_family(g, h):
    return ConstraintFamily([LinearConstraints(g, h)])


def random_tabular_family(rng, A, J, d=2, r=3):
    return ConstraintFamily([TabularConstraints(r, rng.uniform(-1, 1, (A, J, r ** d)), d)])


def precise_tau(T, A, N, J, delta):
    getcontext().prec = 50
    arg = Decimal(A) * N * J * T / Decimal(delta)
    return float(4 * (Decimal(T) * arg.ln()).sqrt())


# --- constrained best response ---

def test_cbr_picks_higher_prediction():
    u = LinearUtility([[1.0, 0.0], [0.0, 1.0]])
    assert constrained_best_response(u, [0, 1], [0.7, 0.3]) == 0


def test_cbr_singleton_forced(rng):
    u = LinearUtility([[1.0, 0.0], [0.0, 1.0]])
    for _ in range(20):
        assert constrained_best_response(u, [1], rng.random(2)) == 1


def test_cbr_matches_exhaustive_scan(rng):
    for _ in range(200):
        u = LinearUtility(rng.uniform(0, 1 / 3, (6, 3)))
        mask = rng.random(6) < 0.5
        if not mask.any():
            mask[rng.integers(6)] = True
        p = rng.random(3)
        best, best_val = None, -math.inf
        for a in range(6):
            if mask[a]:
                val = sum(u.weights[a, i] * p[i] for i in range(3)) + u.offsets[a]
                if val > best_val + 1e-15:
                    best, best_val = a, val
        assert constrained_best_response(u, mask, p) == best


def test_cbr_ties_and_empty_set():
    u = LinearUtility([[0.5], [0.5], [0.2]])
    assert constrained_best_response(u, [1, 0, 2], [0.3]) == 0
    with pytest.raises(FeasibilityExhausted):
        constrained_best_response(u, np.zeros(3, dtype=bool), [0.3])
    with pytest.raises(ConfigurationError):
        constrained_best_response(u, [5], [0.3])


# --- realized elimination ---

def test_alg1_eliminates_violator():
    fam = linear_family([[[0.0, 0.0]], [[1.0, 0.0]]], [[-1.0], [-0.5]])
    ledger = CandidateLedger.create(1, 2, 1)
    removed = step_alg1(ledger, np.array([0.8, 0.2]), fam)
    assert removed.tolist() == [1] and ledger.candidates[0].tolist() == [True, False]


def test_alg1_no_violation_no_elimination():
    fam = linear_family([[[0.0, 0.0]], [[1.0, 0.0]]], [[-1.0], [-0.5]])
    ledger = CandidateLedger.create(1, 2, 1)
    assert step_alg1(ledger, np.array([0.3, 0.9]), fam).size == 0
    assert ledger.candidates.all()


def test_alg1_matches_hand_simulation():
    # 3 actions, 2 constraints; y = (0.6, 0.3)
    g = [[[0.0, 0.0], [0.0, 0.0]],
         [[1.0, 0.0], [0.0, 0.0]],
         [[0.0, 0.0], [0.0, 1.0]]]
    h = [[-1.0, -1.0], [-0.7, -1.0], [-1.0, -0.2]]
    ledger = CandidateLedger.create(1, 3, 2)
    removed = step_alg1(ledger, np.array([0.6, 0.3]), linear_family(g, h))
    # action 1: 0.6 - 0.7 < 0 stays; action 2: 0.3 - 0.2 > 0 goes
    assert removed.tolist() == [2] and ledger.candidates[0].tolist() == [True, True, False]


def test_alg1_zero_is_not_a_violation():
    ledger = CandidateLedger.create(1, 1, 1)
    step_alg1(ledger, np.array([0.5]), linear_family([[[1.0]]], [[-0.5]]))
    assert ledger.candidates[0, 0]


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_alg1_monotone_and_preserves_benchmark(seed):
    rng = np.random.default_rng(seed)
    fam = random_tabular_family(rng, 5, 2)
    ys = rng.random((30, 2))
    ledger = CandidateLedger.create(1, 5, 2)
    history = []
    for y in ys:
        before = ledger.candidates.copy()
        step_alg1(ledger, y, fam)
        assert not (ledger.candidates & ~before).any()
        history.append(ledger.candidates[0].copy())
    bench = ~np.array([fam.violated(y) for y in ys]).any(axis=0)
    assert all((bench <= h).all() for h in history)


# --- threshold elimination ---

def test_alg2_threshold_crossing():
    ledger = CandidateLedger.create(2, 1, 1, tau=5.0)
    ledger.v[0, 0] = 4.5
    fam = linear_family([[[0.0]]], [[0.8]])
    assert step_alg2(ledger, 0, np.array([0.3]), fam)
    assert ledger.v[0, 0] == pytest.approx(5.3) and not ledger.candidates[0, 0]


def test_alg2_slack_round_lowers_accumulator():
    ledger = CandidateLedger.create(2, 1, 2, tau=5.0)
    fam = linear_family([[[0.0], [0.0]]], [[-1.0, -1.0]])
    assert not step_alg2(ledger, 0, np.array([0.3]), fam)
    assert ledger.v.tolist() == [[-1.0, -1.0]] and ledger.candidates[0, 0]


def test_alg2_refuses_non_candidate():
    ledger = CandidateLedger.create(2, 2, 1, tau=1.0)
    ledger.candidates[0, 1] = False
    with pytest.raises(InvariantViolation):
        step_alg2(ledger, 1, np.array([0.3]), linear_family([[[0.0]], [[0.0]]], [[-1.0], [-1.0]]))


def test_alg2_matches_from_scratch_recomputation(rng):
    fam = random_tabular_family(rng, 3, 2)
    ledger = CandidateLedger.create(2, 3, 2, tau=2.0)
    played, ys = [], []
    for t in range(20):
        cands = np.flatnonzero(ledger.candidates[0])
        if cands.size == 0:
            break
        a = int(rng.choice(cands))
        y = rng.random(2)
        step_alg2(ledger, a, y, fam)
        played.append(a)
        ys.append(y)
        for b in range(3):
            for j in range(2):
                oracle = math.fsum(fam.matrix(ys[s])[b, j] for s in range(len(ys)) if played[s] == b)
                assert ledger.v[b, j] == pytest.approx(oracle, abs=1e-12)
            ever_over = any(
                any(math.fsum(fam.matrix(ys[s])[b, j] for s in range(k + 1) if played[s] == b) > 2.0
                    for j in range(2)) for k in range(len(ys)) if played[k] == b)
            assert ledger.candidates[0, b] == (not ever_over)


# --- thresholds ---

def test_tau_closed_form_value():
    tau = threshold_tau(10_000, 10, 1, 1, 0.05)
    assert tau == pytest.approx(precise_tau(10_000, 10, 1, 1, 0.05), rel=1e-13)
    assert tau == pytest.approx(1523.6, abs=0.05)


def test_tau_unit_logarithm():
    assert threshold_tau(1, 1, 1, 1, 1 / math.e) == pytest.approx(4.0, rel=1e-14)


def test_tau_monotone_in_horizon():
    values = [threshold_tau(T, 4, 2, 3, 0.05) for T in (2 ** k for k in range(1, 20))]
    assert all(b > a for a, b in zip(values, values[1:]))
    ratios = [b / a for a, b in zip(values, values[1:])]
    assert all(math.sqrt(2) <= r < 1.6 for r in ratios)


def test_tau_rejects_bad_inputs():
    with pytest.raises(ConfigurationError):
        threshold_tau(10, 1, 1, 1, 1.0)
    with pytest.raises(ConfigurationError):
        threshold_tau(10, 1, 1, 1, 0.0)
    with pytest.raises(ConfigurationError):
        threshold_tau(0, 1, 1, 1, 0.5)


def test_tau_subsequence_values():
    assert tau_subsequence(1, 1, 1, 1, 1, 1 / math.e) == pytest.approx(4.0, rel=1e-14)
    assert tau_subsequence(4096, 8, 2, 3, 2, 0.05) == pytest.approx(precise_tau(4096, 8, 2, 2 * 9, 0.05),
                                                                    rel=1e-13)
    values = [tau_subsequence(n, 8, 2, 3, 2, 0.05) for n in range(1, 5000, 37)]
    assert all(b >= a for a, b in zip(values, values[1:]))


# --- union and per-subsequence realized elimination ---

def test_union_of_two_sets():
    ledger = CandidateLedger.create(3, 2, 1, 2)
    ledger.candidates[:] = [[True, False], [False, True]]
    assert union_candidates(ledger, [True, True]).tolist() == [True, True]


def test_union_idempotent_and_oracle(rng):
    ledger = CandidateLedger.create(3, 4, 1, 3)
    ledger.candidates[:] = [True, False, True, False]
    assert union_candidates(ledger, [True, True, True]).tolist() == [True, False, True, False]
    for _ in range(100):
        ledger = CandidateLedger.create(3, 6, 1, 4)
        ledger.candidates[:] = rng.random((4, 6)) < 0.5
        active = rng.random(4) < 0.6
        if not active.any():
            with pytest.raises(ProtocolError):
                union_candidates(ledger, active)
            continue
        bits = 0
        for s in range(4):
            if active[s]:
                bits |= sum(1 << a for a in range(6) if ledger.candidates[s, a])
        assert union_candidates(ledger, active).tolist() == [bool(bits >> a & 1) for a in range(6)]


def test_alg3_single_subsequence_reduces_to_alg1(rng):
    fam = random_tabular_family(rng, 4, 2)
    one = CandidateLedger.create(1, 4, 2)
    sub = CandidateLedger.create(3, 4, 2, 1)
    for y in rng.random((25, 2)):
        step_alg1(one, y, fam)
        step_alg3(sub, y, fam, [True])
        assert np.array_equal(one.candidates, sub.candidates)


def test_alg3_violation_hits_all_active_sets():
    fam = linear_family([[[0.0]], [[1.0]]], [[-1.0], [-0.5]])
    ledger = CandidateLedger.create(3, 2, 1, 3)
    removed = step_alg3(ledger, np.array([0.9]), fam, [True, True, False])
    assert {s: r.tolist() for s, r in removed.items()} == {0: [1], 1: [1]}
    assert ledger.candidates[:, 1].tolist() == [False, False, True]


def test_alg3_matches_independent_replays(rng):
    fam = random_tabular_family(rng, 5, 1)
    T = 40
    active = rng.random((T, 3)) < 0.5
    active[~active.any(axis=1), 0] = True
    ys = rng.random((T, 2))
    ledger = CandidateLedger.create(3, 5, 1, 3)
    for t in range(T):
        step_alg3(ledger, ys[t], fam, active[t])
    for s in range(3):
        solo = CandidateLedger.create(1, 5, 1)
        for t in range(T):
            if active[t, s]:
                step_alg1(solo, ys[t], fam)
        assert np.array_equal(solo.candidates[0], ledger.candidates[s])


# --- responsible index ---

def test_responsible_single_and_min_rule():
    ledger = CandidateLedger.create(4, 2, 1, 3, taus=[1.0, 1.0, 1.0])
    ledger.candidates[:] = [[True, True], [False, True], [True, False]]
    assert responsible_index(ledger, 0, [True, False, False]) == 0
    assert responsible_index(ledger, 0, [True, False, True]) == 0
    assert responsible_index(ledger, 0, [False, True, True]) == 2
    with pytest.raises(InvariantViolation):
        responsible_index(ledger, 1, [False, False, True])


def test_responsible_matches_linear_scan(rng):
    for _ in range(200):
        ledger = CandidateLedger.create(4, 3, 1, 5, taus=np.ones(5))
        ledger.candidates[:] = rng.random((5, 3)) < 0.5
        active = rng.random(5) < 0.5
        a = int(rng.integers(3))
        scan = next((i for i in range(5) if active[i] and ledger.candidates[i, a]), None)
        if scan is None:
            with pytest.raises(InvariantViolation):
                responsible_index(ledger, a, active)
        else:
            assert responsible_index(ledger, a, active) == scan


# --- attributed elimination ---

def test_alg4_single_subsequence_reduces_to_alg2(rng):
    fam = random_tabular_family(rng, 3, 2)
    two = CandidateLedger.create(2, 3, 2, tau=1.5)
    four = CandidateLedger.create(4, 3, 2, 1, taus=[1.5])
    for _ in range(60):
        cands = np.flatnonzero(two.candidates[0])
        if cands.size == 0:
            break
        a = int(rng.choice(cands))
        y = rng.random(2)
        e2 = step_alg2(two, a, y, fam)
        e4 = step_alg4(four, a, y, fam, [True], responsible_index(four, a, [True]))
        assert e2 == e4
        assert np.array_equal(two.candidates, four.candidates)
        assert np.array_equal(two.v, four.w[:, :, 0, 0])


def test_alg4_inactive_subsequence_untouched():
    fam = linear_family([[[1.0]]], [[-0.5]])
    ledger = CandidateLedger.create(4, 1, 1, 2, taus=[10.0, 10.0])
    step_alg4(ledger, 0, np.array([0.9]), fam, [True, False], 0)
    assert ledger.w[0, 0, 0, 0] == pytest.approx(0.4)
    assert ledger.w[..., 1].tolist() == [[[0.0, 0.0]]]


def test_alg4_masking_script_eliminates_through_cross_accumulator():
    from omnicon.acceptance import crippled_step_alg4, masking_script, recompute_w, replay_masking
    ledger, removed, history = replay_masking(step_alg4)
    family, _, _ = masking_script()
    assert removed[0] == 6
    assert np.allclose(ledger.w, recompute_w(history, family, 2, 2), atol=1e-12, rtol=0)
    assert ledger.w[1, 0, 0, 0] <= 0.0 and ledger.w[1, 0, 0, 1] == 3.0
    _, removed_crippled, _ = replay_masking(crippled_step_alg4)
    assert removed_crippled[0] is None


def test_alg4_responsible_rule_uses_own_threshold():
    fam = linear_family([[[1.0]]], [[0.0]])
    ledger = CandidateLedger.create(4, 1, 1, 2, taus=[5.0, 0.5], threshold_rule="responsible")
    assert not step_alg4(ledger, 0, np.array([1.0]), fam, [True, True], 0)
    checked = CandidateLedger.create(4, 1, 1, 2, taus=[5.0, 0.5])
    assert step_alg4(checked, 0, np.array([1.0]), fam, [True, True], 0)
    assert checked.candidates[:, 0].tolist() == [False, True]


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_alg4_only_touches_played_action_and_active_columns(seed):
    rng = np.random.default_rng(seed)
    fam = random_tabular_family(rng, 4, 2)
    ledger = CandidateLedger.create(4, 4, 2, 3, taus=[3.0, 3.0, 3.0])
    for _ in range(30):
        active = rng.random(3) < 0.6
        if not active.any():
            active[0] = True
        view = union_candidates(ledger, active)
        if not view.any():
            break
        a = int(rng.choice(np.flatnonzero(view)))
        r = responsible_index(ledger, a, active)
        before_w, before_c = ledger.w.copy(), ledger.candidates.copy()
        step_alg4(ledger, a, rng.random(2), fam, active, r)
        changed = np.argwhere(ledger.w != before_w)
        assert all(c[0] == a and c[2] == r and active[c[3]] for c in changed)
        assert not (ledger.candidates & ~before_c).any()
        assert (ledger.candidates == before_c)[np.arange(3) != r].all()


# --- the agent wrapper ---

def _spec(mode):
    return AgentSpec("x", LinearUtility([[0.2], [0.9]]),
                     linear_family([[[0.0]], [[1.0]]], [[-1.0], [-0.5]]), mode)


def test_agent_selects_ledger_by_mode():
    assert EliminationAgent(_spec("realization"), 100, 1, 0.05).algorithm == 1
    assert EliminationAgent(_spec("expectation"), 100, 1, 0.05).algorithm == 2
    assert EliminationAgent(_spec("realization"), 100, 1, 0.05, 2).algorithm == 3
    agent = EliminationAgent(_spec("expectation"), 100, 1, 0.05, 2, [60, 40])
    assert agent.algorithm == 4
    assert agent.ledger.taus.tolist() == [tau_subsequence(60, 2, 1, 2, 1, 0.05),
                                          tau_subsequence(40, 2, 1, 2, 1, 0.05)]


def test_agent_realization_round():
    agent = EliminationAgent(_spec("realization"), 10, 1, 0.05)
    view = agent.view()
    assert agent.act([0.5], view) == 1
    agent.observe(1, np.array([0.9]))
    assert agent.view().tolist() == [True, False]
    with pytest.raises(ValueError):
        agent.view()[0] = False
