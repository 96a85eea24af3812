import math
from decimal import Decimal, getcontext

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from conftest import make_transcript
from omnicon.core import AgentSpec, ConstraintFamily, LinearConstraints, LinearUtility, TabularConstraints
from omnicon.metrics import (FULL_HORIZON, ccv, compute_benchmarks, external_regret, swap_regret,
                             swap_regret_bruteforce, theorem_bounds)


def spec_with(family, A, d=1, weights=None):
    w = np.full((A, d), 0.5 / d) if weights is None else weights
    return AgentSpec("agent0", LinearUtility(w), family)


def scalar_constraint_spec(values_by_round, A):
    """Agent whose constraint c(a, y) is looked up from y[0] in {0, 1/T, ...} via a tabular table."""
    T = len(values_by_round)
    table = np.zeros((A, 1, T))
    for t, row in enumerate(values_by_round):
        table[:, 0, t] = row
    return spec_with(ConstraintFamily([TabularConstraints(T, table, 1)]), A), \
        [[(t + 0.5) / T] for t in range(T)]


# --- benchmarks ---

def test_benchmark_all_safe():
    fam = ConstraintFamily([LinearConstraints(np.zeros((3, 2, 1)), -np.ones((3, 2)))])
    tr = make_transcript([[0.1], [0.7]], [0, 1], active=[[True], [False]], n_actions=3)
    b = compute_benchmarks(tr, [spec_with(fam, 3)], expectation=False)
    assert b.get("agent0", FULL_HORIZON).all() and b.get("agent0", "s0").all()


def test_benchmark_violation_only_inside_subsequence():
    spec, ys = scalar_constraint_spec([[-1, -1], [-1, 0.5], [-1, -1]], 2)
    tr = make_transcript(ys, [0, 0, 0], active=[[False, True], [True, False], [False, True]], n_actions=2)
    b = compute_benchmarks(tr, [spec], expectation=False)
    assert b.get("agent0", "s0").tolist() == [True, False]
    assert b.get("agent0", "s1").tolist() == [True, True]
    assert b.get("agent0", FULL_HORIZON).tolist() == [True, False]


def test_benchmark_order_independent_and_monotone(rng):
    fam = ConstraintFamily([TabularConstraints(4, rng.uniform(-1, 0.15, (4, 2, 16)), 2)])
    spec = spec_with(fam, 4, 2)
    T = 60
    ys = rng.random((T, 2))
    active = rng.random((T, 2)) < 0.5
    outcomes = [([y], [1.0]) for y in ys]
    fwd = compute_benchmarks(make_transcript(ys, np.zeros(T), active=active, outcomes=outcomes, n_actions=4),
                             [spec])
    rev = compute_benchmarks(make_transcript(ys[::-1], np.zeros(T), active=active[::-1],
                                             outcomes=outcomes[::-1], n_actions=4), [spec])
    for kind in ("realized", "expectation"):
        for sid in (FULL_HORIZON, "s0", "s1"):
            assert np.array_equal(fwd.get("agent0", sid, kind), rev.get("agent0", sid, kind))
            # fewer rounds can only enlarge the benchmark
            assert (fwd.get("agent0", FULL_HORIZON, kind) <= fwd.get("agent0", sid, kind)).all()
    manual = np.ones(4, dtype=bool)
    for y in ys:
        for a in range(4):
            if any(fam.matrix(y)[a, j] > 0 for j in range(2)):
                manual[a] = False
    assert fwd.get("agent0").tolist() == manual.tolist()


def test_expectation_benchmark_uses_distribution():
    fam = ConstraintFamily([LinearConstraints([[[0.8]], [[1.0]]], [[-0.4], [-0.4]])])
    outcomes = [([[0.0], [1.0]], [0.5, 0.5])] * 3
    tr = make_transcript([[1.0], [0.0], [1.0]], [0, 0, 0], outcomes=outcomes, n_actions=2)
    b = compute_benchmarks(tr, [spec_with(fam, 2)])
    assert b.get("agent0", kind="realized").tolist() == [False, False]
    assert b.get("agent0", kind="expectation").tolist() == [True, False]


# --- ccv ---

def test_ccv_no_violations():
    fam = ConstraintFamily([LinearConstraints(np.zeros((2, 2, 1)), -0.3 * np.ones((2, 2)))])
    tr = make_transcript([[0.2]] * 5, [0, 1, 0, 1, 1], n_actions=2)
    assert ccv(tr, 0, spec_with(fam, 2)) <= 0
    assert ccv(tr, 0, spec_with(fam, 2), variant="positive-part") == 0.0


def test_ccv_single_round_max_over_constraints():
    fam = ConstraintFamily([LinearConstraints(np.zeros((1, 2, 1)), [[0.3, -0.2]])])
    tr = make_transcript([[0.5]], [0], n_actions=1)
    assert ccv(tr, 0, spec_with(fam, 1)) == 0.3
    assert ccv(tr, 0, spec_with(fam, 1), variant="positive-part") == 0.3


def test_ccv_matches_naive_summation(rng):
    fam = ConstraintFamily([TabularConstraints(5, rng.uniform(-1, 1, (3, 2, 5)), 1)])
    spec = spec_with(fam, 3)
    ys = rng.random((100, 1))
    actions = rng.integers(0, 3, 100)
    rounds = rng.random(100) < 0.7
    tr = make_transcript(ys, actions, n_actions=3)
    for variant, f in (("signed", lambda v: v), ("positive-part", lambda v: max(v, 0.0))):
        naive = max(math.fsum(f(fam.matrix(ys[t])[actions[t], j]) for t in range(100) if rounds[t])
                    for j in range(2))
        assert ccv(tr, 0, spec, rounds, variant) == naive


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_signed_ccv_never_exceeds_positive_part(seed):
    rng = np.random.default_rng(seed)
    fam = ConstraintFamily([TabularConstraints(4, rng.uniform(-1, 1, (3, 2, 4)), 1)])
    tr = make_transcript(rng.random((30, 1)), rng.integers(0, 3, 30), n_actions=3)
    spec = spec_with(fam, 3)
    assert ccv(tr, 0, spec) <= ccv(tr, 0, spec, variant="positive-part")


# --- regret ---

def regret_fixture(U, actions):
    T, A = U.shape
    tr = make_transcript(np.zeros((T, 1)), actions, n_actions=A)
    return tr, spec_with(ConstraintFamily([LinearConstraints(np.zeros((A, 1, 1)), -np.ones((A, 1)))]), A)


def test_external_regret_zero_for_best_fixed_action(rng):
    U = rng.random((20, 3))
    best = int(np.argmax(U.sum(axis=0)))
    tr, spec = regret_fixture(U, np.full(20, best))
    assert external_regret(tr, 0, spec, [True] * 3, utilities=U).value == 0.0


def test_external_regret_singleton(rng):
    U = rng.random((15, 3))
    actions = rng.integers(0, 3, 15)
    tr, spec = regret_fixture(U, actions)
    value = external_regret(tr, 0, spec, [False, True, False], utilities=U).value
    assert value == math.fsum(U[t, 1] - U[t, actions[t]] for t in range(15))


def test_external_regret_matches_scan(rng):
    U = rng.random((40, 5))
    actions = rng.integers(0, 5, 40)
    B = np.array([True, False, True, True, False])
    tr, spec = regret_fixture(U, actions)
    scan = max(math.fsum(U[t, b] - U[t, actions[t]] for t in range(40)) for b in (0, 2, 3))
    assert external_regret(tr, 0, spec, B, utilities=U).value == scan


def test_swap_regret_zero_when_slices_optimal():
    U = np.array([[0.9, 0.1], [0.8, 0.3], [0.2, 0.7], [0.1, 0.6]])
    tr, spec = regret_fixture(U, [0, 0, 1, 1])
    assert swap_regret(tr, 0, spec, [True, True], utilities=U).value == 0.0


def test_swap_regret_matches_all_maps(rng):
    for _ in range(20):
        U = rng.random((12, 3))
        actions = rng.integers(0, 3, 12)
        B = np.array([True, True, False])
        tr, spec = regret_fixture(U, actions)
        assert swap_regret(tr, 0, spec, B, utilities=U).value == swap_regret_bruteforce(U, actions, B)


def test_empty_benchmark_is_undefined(rng):
    U = rng.random((5, 2))
    tr, spec = regret_fixture(U, [0] * 5)
    assert swap_regret(tr, 0, spec, [False, False], utilities=U).undefined
    assert external_regret(tr, 0, spec, [False, False], utilities=U).value is None


@settings(max_examples=150, deadline=None)
@given(st.integers(1, 4).flatmap(lambda A: st.tuples(
    arrays(np.float64, st.tuples(st.integers(1, 15), st.just(A)), elements=st.floats(0, 1)),
    st.lists(st.booleans(), min_size=A, max_size=A), st.integers(0, 2 ** 32 - 1))))
def test_swap_decomposition_equals_brute_force_exactly(case):
    U, B, seed = case
    B = np.array(B)
    assume(B.any() and B.sum() ** U.shape[1] <= 4096)
    actions = np.random.default_rng(seed).integers(0, U.shape[1], U.shape[0])
    tr, spec = regret_fixture(U, actions)
    swap = swap_regret(tr, 0, spec, B, utilities=U).value
    assert swap == swap_regret_bruteforce(U, actions, B)
    assert external_regret(tr, 0, spec, B, utilities=U).value <= swap


# --- closed-form bounds ---

def test_bounds_realized():
    assert theorem_bounds(1000, 8, 1, 3, 0.05)["realized_ccv"] == 8
    assert theorem_bounds(1000, 8, 1, 3, 0.05, subsequence_lengths=[10, 20, 30])["subsequence_realized_ccv"] == 24


def test_bound_expectation_formula():
    getcontext().prec = 50
    tau = 4 * (Decimal(10_000) * (Decimal(10 * 10_000) / Decimal("0.05")).ln()).sqrt()
    value = theorem_bounds(10_000, 10, 1, 1, 0.05)["expectation_ccv"]
    assert value == pytest.approx(float(10 * tau + 10), rel=1e-13)
    assert value == pytest.approx(10 * 1523.6 + 10, abs=0.5)
