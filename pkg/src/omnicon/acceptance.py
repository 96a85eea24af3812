"""Acceptance criteria P1-P12, runnable as a suite ("fast" or "full").

Each criterion builds its own instances, runs them through the harness (or
the step functions directly) and returns a :class:`CriterionResult`. Runs
shared between criteria are cached on the suite object. Every forecaster
run's solver gap is collected for the certificate check.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .agents import CandidateLedger, responsible_index, step_alg4, threshold_tau, union_candidates
from .core import (AgentSpec, ConstraintFamily, LinearConstraints, LinearUtility, TabularConstraints,
                   ThresholdConstraints)
from .env import SubsequenceDef
from .forecast import solve_minmax
from .harness import RunConfig, loglog_slope, run_simulation
from .metrics import swap_regret, swap_regret_bruteforce


@dataclass
class CriterionResult:
    id: str
    passed: bool
    summary: str
    elapsed: float = 0.0
    details: dict = field(default_factory=dict)

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.id}: {self.summary} [{self.elapsed:.1f}s]"


@dataclass(frozen=True)
class SuiteSize:
    p1_seeds: int
    p1_T: int
    p4_seeds: int
    p4_T: int
    p5_seeds: int
    p5_T: int
    p6_seeds: int
    p6_T: int
    p7_horizons: tuple
    p7_seeds: int
    p10_instances: int
    p1_budget: float = 120.0
    p7_budget: float = 600.0


SUITES = {
    "full": SuiteSize(50, 10_000, 200, 1000, 50, 8192, 20, 4096, (512, 1024, 2048, 4096, 8192), 10, 200),
    "fast": SuiteSize(5, 2000, 40, 1000, 4, 2048, 4, 2048, (256, 512, 1024, 2048), 3, 50),
}


# --- instance builders -----------------------------------------------------


def _bounded_linear(rng, A: int, d: int, safe: int | None = 0) -> LinearConstraints:
    g = rng.uniform(-0.5, 0.5, (A, 1, d))
    h = rng.uniform(-0.4, 0.3, (A, 1))
    span = np.abs(h) + np.abs(g).sum(axis=2)
    factor = np.where(span > 0.99, 0.99 / span, 1.0)
    g, h = g * factor[:, :, None], h * factor
    if safe is not None:
        g[safe], h[safe] = 0.0, -0.5
    return LinearConstraints(g, h)


def _threshold(rng, A: int, d: int, safe: int | None = 0) -> ThresholdConstraints:
    coord = rng.integers(0, d, (A, 1))
    theta = rng.uniform(0.2, 0.8, (A, 1))
    above = rng.uniform(0.05, 1.0, (A, 1))
    below = -rng.uniform(0.05, 1.0, (A, 1))
    flip = rng.random((A, 1)) < 0.5
    above, below = np.where(flip, below, above), np.where(flip, above, below)
    if safe is not None:
        above[safe], below[safe] = -0.5, -0.5
    return ThresholdConstraints(coord, theta, above, below, d=d)


def _tabular(rng, A: int, d: int, r: int = 3, safe: int | None = 0) -> TabularConstraints:
    table = rng.uniform(-1.0, 0.3, (A, 1, r ** d))
    if safe is not None:
        table[safe] = -0.5
    return TabularConstraints(r, table, d)


def _utility(rng, A: int, d: int, dull: int | None = 0) -> LinearUtility:
    w = rng.uniform(0.0, 1.0 / d, (A, d))
    if dull is not None:
        w[dull] *= 0.3
    return LinearUtility(w)


def _iid_params(rng, d: int, k: int = 5) -> dict:
    return {"distribution": {"support": rng.random((k, d)).round(6).tolist(),
                             "probs": rng.dirichlet(np.ones(k)).tolist()}}


def p1_config(seed: int, source: str, T: int) -> RunConfig:
    """|A| = 8, J = 3 (linear, threshold and tabular), d = 2; action 0 never violates."""
    rng = np.random.default_rng(1000 + seed)
    A, d = 8, 2
    agent = AgentSpec("agent", _utility(rng, A, d),
                      ConstraintFamily([_bounded_linear(rng, A, d), _threshold(rng, A, d), _tabular(rng, A, d)]))
    return RunConfig(T=T, d=d, agents=[agent], adversary="benign-iid", adversary_params=_iid_params(rng, d),
                     seed=seed, prediction_source=source, name=f"p1-{source}")


def p4_config(seed: int, T: int) -> RunConfig:
    """One expectation-mode agent, outcomes uniform on {0, 1}^2.

    Expected constraint values: action 0 (0, -1), action 1 (-0.1, -1),
    action 2 (0.2, -1) and action 3 (-1, 0), so the benchmark is {0, 1, 3}.
    """
    g = np.zeros((4, 2, 2))
    h = np.full((4, 2), -1.0)
    g[0, 0], h[0, 0] = (2.0, 0.0), -1.0
    g[1, 0], h[1, 0] = (0.0, 1.8), -1.0
    g[2, 0], h[2, 0] = (1.6, 0.0), -0.6
    g[3, 1], h[3, 1] = (1.0, 1.0), -1.0
    weights = [[0.3, 0.2], [0.2, 0.3], [0.5, 0.5], [0.25, 0.25]]
    agent = AgentSpec("agent", LinearUtility(weights), ConstraintFamily([LinearConstraints(g, h)]), "expectation")
    support = [[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]]
    return RunConfig(T=T, d=2, agents=[agent], adversary="benign-iid",
                     adversary_params={"distribution": {"support": support}}, seed=seed, name="p4")


P4_BENCHMARK = np.array([True, True, False, True])


def p5_subsequences(T: int) -> list[SubsequenceDef]:
    first = int(round(T * 5000 / 8192))
    second = int(round(T * 3000 / 8192))
    return [SubsequenceDef("early", "interval", {"start": 1, "end": first}),
            SubsequenceDef("late", "interval", {"start": second, "end": T}),
            SubsequenceDef("every-third", "periodic", {"period": 3, "phase": 0})]


def p5_config(seed: int, T: int) -> RunConfig:
    """|A| = 6 realized agent over three overlapping subsequences."""
    rng = np.random.default_rng(5000 + seed)
    A, d = 6, 2
    agent = AgentSpec("agent", _utility(rng, A, d),
                      ConstraintFamily([_bounded_linear(rng, A, d), _threshold(rng, A, d)]))
    return RunConfig(T=T, d=d, agents=[agent], adversary="constraint-flipper",
                     adversary_params={"high": _iid_params(rng, d, 3)["distribution"],
                                       "low": _iid_params(rng, d, 3)["distribution"]},
                     subsequences=p5_subsequences(T), seed=seed, name="p5")


def p6_config(seed: int, T: int) -> RunConfig:
    """Masking adversary: coordinate 0 is 1 on even rounds and 0 on odd rounds.

    Action 1 has c = 2 y_0 - 1: +1 on even rounds, -1 on odd ones, so its
    violations cancel over all rounds but not over the even rounds.
    """
    g = np.zeros((3, 1, 2))
    h = np.array([[-1.0], [-1.0], [0.0]])
    g[1, 0, 0] = 2.0
    g[2, 0, 1] = 1.0
    h[2, 0] = -0.5
    agent = AgentSpec("agent", LinearUtility(np.zeros((3, 2)), [0.3, 0.9, 0.6]),
                      ConstraintFamily([LinearConstraints(g, h)]), "expectation")
    subs = [SubsequenceDef("all-rounds", "interval", {"start": 1, "end": T}),
            SubsequenceDef("even", "periodic", {"period": 2, "phase": 0})]
    return RunConfig(T=T, d=2, agents=[agent], adversary="masking",
                     adversary_params={"coord": 0, "period": 2, "phase": 0,
                                       "background": [[0.0, 0.25], [0.0, 0.75]]},
                     subsequences=subs, seed=seed, name="p6")


def p7_agents(seed: int, mode: str = "realization") -> list[AgentSpec]:
    """Two agents with three actions each; action 0 never violates.

    Utilities cross: action 1 pays on coordinate 0, action 2 on coordinate 1
    and action 0 a blend, so the best response depends on the prediction.
    """
    rng = np.random.default_rng(7000 + seed)
    agents = []
    for n in range(2):
        weights = np.array([[0.35, 0.35], [0.8, 0.0], [0.0, 0.8]]) + rng.uniform(-0.1, 0.1, (3, 2))
        weights = np.maximum(weights, 0.0)
        g = np.zeros((3, 1, 2))
        h = np.full((3, 1), -1.0)
        g[1, 0] = rng.uniform(-0.3, 0.3, 2)
        h[1, 0] = rng.uniform(-0.6, -0.1)
        family = ConstraintFamily([LinearConstraints(g, h), _threshold(rng, 3, 2)])
        agents.append(AgentSpec(f"agent{n}", LinearUtility(weights), family, mode))
    return agents


def p7_config(seed: int, T: int, mode: str = "realization") -> RunConfig:
    rng = np.random.default_rng(7500 + seed)
    return RunConfig(T=T, d=2, agents=p7_agents(seed, mode), adversary="benign-iid",
                     adversary_params=_iid_params(rng, 2, 4), grid={"m": 9}, seed=seed,
                     name=f"p7-{mode}")


# --- the hand-built masking script -----------------------------------------


def masking_script(T: int = 10):
    """Even rounds violate (+1), odd rounds have slack (-1); S1 = all rounds, S2 = even rounds."""
    ys = [np.array([1.0 if t % 2 == 0 else 0.0]) for t in range(1, T + 1)]
    active = [np.array([True, t % 2 == 0]) for t in range(1, T + 1)]
    family = ConstraintFamily([LinearConstraints([[[0.0]], [[2.0]]], [[-1.0], [-1.0]])])
    return family, ys, active


def crippled_step_alg4(ledger: CandidateLedger, a: int, y, constraints, active, r: int) -> bool:
    """Test double: each subsequence only measures violations charged to itself."""
    c = constraints.matrix(y)[a]
    ledger.w[a, :, r, r] += c
    if (ledger.w[a, :, r, r] > ledger.taus[r]).any():
        ledger.candidates[r, a] = False
        return True
    return False


def replay_masking(step: Callable, tau: float = 2.5, T: int = 10):
    """Play the preferred action (1) whenever available; returns elimination rounds per subsequence."""
    family, ys, active = masking_script(T)
    ledger = CandidateLedger.create(4, 2, 1, 2, taus=[tau, tau])
    removed = {0: None, 1: None}
    history = []
    for t, (y, act) in enumerate(zip(ys, active), start=1):
        view = union_candidates(ledger, act)
        a = 1 if view[1] else 0
        r = responsible_index(ledger, a, act)
        before = ledger.candidates.copy()
        step(ledger, a, y, family, act, r)
        history.append((a, r, y, act))
        for s in (0, 1):
            if before[s, 1] and not ledger.candidates[s, 1]:
                removed[s] = t
    return ledger, removed, history


def recompute_w(history, constraints, n_actions: int, n_subs: int) -> np.ndarray:
    """Attributed accumulators rebuilt from scratch with plain loops."""
    J = constraints.n_constraints
    w = np.zeros((n_actions, J, n_subs, n_subs))
    for a, r, y, act in history:
        c = constraints.matrix(y)[a]
        for s in range(n_subs):
            if act[s]:
                for j in range(J):
                    w[a, j, r, s] = math.fsum([w[a, j, r, s], c[j]])
    return w


# --- the suite -------------------------------------------------------------


def _mesh_min(points: np.ndarray, C: np.ndarray, s: np.ndarray, steps: int) -> float:
    """Minimum of the worst-case objective over all distributions with weights in multiples of 1/steps.

    Enumerates compositions of ``steps`` into as many parts as rows; d = 1.
    """
    K = C.shape[0]
    best = math.inf
    grid = np.arange(steps + 1)
    for head in itertools.product(range(steps + 1), repeat=K - 3):
        used = sum(head)
        if used > steps:
            continue
        rest = steps - used
        a = grid[:rest + 1][:, None]
        b = grid[None, :rest + 1]
        ok = a + b <= rest
        a, b = np.broadcast_to(a, ok.shape)[ok], np.broadcast_to(b, ok.shape)[ok]
        c = rest - a - b
        weights = np.empty((a.size, K))
        weights[:, :K - 3] = np.array(head, dtype=float)
        weights[:, K - 3], weights[:, K - 2], weights[:, K - 1] = a, b, c
        weights /= steps
        B = weights @ C[:, 0]
        vals = weights @ s + np.maximum(0.0, -B)
        best = min(best, float(vals.min()))
    return best


P9_INSTANCES = [
    # event table over 5 grid points, (D1, D2) per event
    (np.array([[1, 0], [1, 0], [0, 1], [0, 1], [0, 1]]), (0.3, -0.2)),
    (np.array([[1, 1], [1, 0], [1, 0], [0, 1], [0, 0]]), (-0.25, 0.4)),
    (np.array([[0, 1], [1, 1], [1, 0], [1, 0], [1, 1]]), (0.12, -0.36)),
    (np.array([[1, 0], [0, 1], [1, 0], [0, 1], [1, 1]]), (0.05, 0.05)),
]


def _q_from_diffs(diffs) -> np.ndarray:
    """Expert weights (2 events, d = 1) whose plus-minus differences equal ``diffs``."""
    q = np.zeros((2, 1, 2))
    base = 0.25
    for e, diff in enumerate(diffs):
        q[e, 0, 0] = base + diff / 2
        q[e, 0, 1] = base - diff / 2
    return q


class AcceptanceSuite:
    def __init__(self, suite: str = "full", log: Callable[[str], None] | None = None,
                 size: SuiteSize | None = None):
        if suite not in SUITES:
            raise ValueError(f"unknown suite {suite!r}")
        self.name = suite
        self.size = size or SUITES[suite]
        self.log = log or (lambda msg: None)
        self.gaps: list[tuple[str, float]] = []
        self._p1 = None
        self._p7: dict[str, dict] = {}
        self.timings: dict[str, float] = {}

    def _run(self, config: RunConfig, tag: str) -> dict:
        body = run_simulation(config).body
        if config.prediction_source == "forecaster":
            self.gaps.append((tag, body["solver"]["max_gap"]))
        return body

    # shared runs
    def p1_runs(self):
        if self._p1 is None:
            start = time.perf_counter()
            runs = []
            for source in ("forecaster", "uniform", "flipped"):
                for seed in range(self.size.p1_seeds):
                    runs.append((source, seed, self._run(p1_config(seed, source, self.size.p1_T), "P1")))
            self.timings["P1"] = time.perf_counter() - start
            self._p1 = runs
        return self._p1

    def p7_runs(self, mode: str):
        if mode not in self._p7:
            start = time.perf_counter()
            table = {}
            for T in self.size.p7_horizons:
                table[T] = [self._run(p7_config(seed, T, mode), f"P7-{mode}")
                            for seed in range(self.size.p7_seeds)]
            self.timings[f"P7-{mode}"] = time.perf_counter() - start
            self._p7[mode] = table
        return self._p7[mode]

    @staticmethod
    def _rows(body, name):
        return [row for row in body["bounds"] if row["name"] == name]

    # criteria
    def P1(self) -> CriterionResult:
        runs = self.p1_runs()
        worst = max(self._rows(b, "realized_ccv")[0]["measured"] for _, _, b in runs)
        bad = [(src, seed) for src, seed, b in runs if self._rows(b, "realized_ccv")[0]["verdict"] != "pass"]
        elapsed = self.timings["P1"]
        ok = not bad and elapsed < self.size.p1_budget
        return CriterionResult("P1", ok, f"{len(runs)} runs, max signed CCV {worst:.6g} <= 8, "
                               f"violations {len(bad)}, runtime {elapsed:.1f}s (budget {self.size.p1_budget:.0f}s)",
                               details={"bad": bad, "runtime": elapsed})

    def P2(self) -> CriterionResult:
        runs = self.p1_runs()
        bad, slack = [], math.inf
        for src, seed, b in runs:
            row = self._rows(b, "realized_ccv_positive")[0]
            slack = min(slack, row["bound"] - row["measured"])
            if row["verdict"] != "pass":
                bad.append((src, seed))
        return CriterionResult("P2", not bad, f"{len(runs)} runs, CCV+ <= |A| - |benchmark| on all, "
                               f"min slack {slack:.6g}, violations {len(bad)}")

    def P3(self) -> CriterionResult:
        runs = self.p1_runs()
        fails = sum(self._rows(b, "benchmark_preservation")[0]["measured"] for _, _, b in runs)
        return CriterionResult("P3", fails == 0, f"{len(runs)} runs, rounds with benchmark outside candidates: {fails}")

    def P4(self) -> CriterionResult:
        start = time.perf_counter()
        n, T = self.size.p4_seeds, self.size.p4_T
        lost, ccv_bad = 0, 0
        bound = None
        for seed in range(n):
            body = self._run(p4_config(seed, T), "P4")
            final = np.zeros(4, dtype=bool)
            final[body["ledgers"]["agent"]["candidates"][0]] = True
            lost += bool((P4_BENCHMARK & ~final).any())
            row = self._rows(body, "expectation_ccv")[0]
            bound = row["bound"]
            ccv_bad += row["verdict"] != "pass"
        allowed = 0.05 + 3 * math.sqrt(0.05 * 0.95 / n)
        frac = lost / n
        expected_bound = 4 * 4 * math.sqrt(T * math.log(4 * 1 * 2 * T / 0.05)) + 4
        ok = frac <= allowed and ccv_bad == 0 and abs(bound - expected_bound) < 1e-9
        return CriterionResult("P4", ok, f"benchmark lost in {lost}/{n} runs (allowed fraction {allowed:.4f}); "
                               f"CCV bound {bound:.1f} violated in {ccv_bad} runs",
                               elapsed=time.perf_counter() - start)

    def P5(self) -> CriterionResult:
        start = time.perf_counter()
        bad, worst = 0, -math.inf
        for seed in range(self.size.p5_seeds):
            body = self._run(p5_config(seed, self.size.p5_T), "P5")
            for row in self._rows(body, "subsequence_realized_ccv"):
                worst = max(worst, row["measured"])
                bad += row["verdict"] != "pass" or row["bound"] != 18.0
        return CriterionResult("P5", bad == 0, f"{self.size.p5_seeds} runs x 3 subsequences, max CCV(S) "
                               f"{worst:.6g} <= 18, violations {bad}", elapsed=time.perf_counter() - start)

    def P6(self) -> CriterionResult:
        start = time.perf_counter()
        bad, worst_ratio = 0, 0.0
        for seed in range(self.size.p6_seeds):
            body = self._run(p6_config(seed, self.size.p6_T), "P6")
            for row in self._rows(body, "subsequence_expectation_ccv"):
                worst_ratio = max(worst_ratio, row["measured"] / row["bound"])
                bad += row["verdict"] != "pass"
        full, removed_full, history = replay_masking(step_alg4)
        crippled, removed_crippled, _ = replay_masking(crippled_step_alg4)
        family, _, _ = masking_script()
        w_ok = np.allclose(full.w, recompute_w(history, family, 2, 2), rtol=0, atol=1e-12)
        script_ok = removed_full[0] is not None and removed_crippled[0] is None and w_ok
        ok = bad == 0 and script_ok
        return CriterionResult("P6", ok, f"{self.size.p6_seeds} masking runs, worst CCV/bound {worst_ratio:.3f}, "
                               f"violations {bad}; script: attributed ledger removes masked action from S1 at "
                               f"round {removed_full[0]}, crippled variant at {removed_crippled[0]}, "
                               f"w oracle match {w_ok}", elapsed=time.perf_counter() - start)

    def _slope_checks(self, mode: str):
        table = self.p7_runs(mode)
        Ts = sorted(table)
        d, N, A = 2, 2, 3
        n_events = N * A
        bias = [float(np.mean([b["events"]["max_bias"] for b in table[T]])) for T in Ts]
        kind = "realized" if mode == "realization" else "expectation"
        regrets, regret_ok = {}, True
        for agent in ("agent0", "agent1"):
            per_T = []
            for T in Ts:
                vals = []
                for body in table[T]:
                    row = next(r for r in body["metrics"] if r["agent"] == agent and r["subsequence"] == "all"
                               and r["metric"] == "swap_regret" and r["variant"] == kind)
                    vals.append(row["value"])
                    L = max(np.abs(np.array(a["utility"]["weights"])).sum(axis=1).max()
                            for a in body["config"]["agents"] if a["id"] == agent)
                    limit = 20 * L * A * math.sqrt(T * math.log(d * A * N * T / 0.05))
                    regret_ok &= row["value"] is not None and row["value"] <= limit
                per_T.append(float(np.mean([max(v, 0.0) for v in vals])))
            regrets[agent] = per_T
        bias_slope = loglog_slope(Ts, bias)
        T_max = Ts[-1]
        bias_limit = 20 * math.sqrt(T_max * math.log(d * n_events * T_max))
        regret_slopes = {a: loglog_slope(Ts, v) for a, v in regrets.items()}
        return Ts, bias, bias_slope, bias_limit, regrets, regret_slopes, regret_ok

    def P7(self) -> CriterionResult:
        Ts, bias, slope, limit, *_ = self._slope_checks("realization")
        elapsed = self.timings["P7-realization"]
        ok = slope <= 0.75 and bias[-1] <= limit and elapsed < self.size.p7_budget
        return CriterionResult("P7", ok, f"mean max event bias {[round(b, 2) for b in bias]} at T={Ts}; "
                               f"log-log slope {slope:.3f} <= 0.75; bias at T={Ts[-1]} {bias[-1]:.2f} <= "
                               f"{limit:.1f}; runtime {elapsed:.1f}s", elapsed=elapsed)

    def P8(self) -> CriterionResult:
        Ts, _, _, _, regrets, slopes, regret_ok = self._slope_checks("realization")
        ok = all(s <= 0.75 for s in slopes.values()) and regret_ok
        return CriterionResult("P8", ok, f"mean swap regret {{{', '.join(f'{a}: {[round(v, 2) for v in r]}' for a, r in regrets.items())}}}; "
                               f"slopes {{{', '.join(f'{a}: {s:.3f}' for a, s in slopes.items())}}} <= 0.75; "
                               f"within 20 L |A| sqrt(T ln) at every T: {regret_ok}")

    def P9(self) -> CriterionResult:
        start = time.perf_counter()
        worst = max((g for _, g in self.gaps), default=0.0)
        gap_ok = worst <= 1e-3
        points = np.linspace(0.0, 1.0, 5)[:, None]
        diffs = []
        for table, d in P9_INSTANCES:
            q = _q_from_diffs(d)
            sol = solve_minmax(points, table, q, epsilon=1e-3)
            D = q[..., 0] - q[..., 1]
            C = table @ D
            s = (C * points).sum(axis=1)
            mesh = _mesh_min(points, C, s, 200)
            diffs.append(abs(sol.value - mesh))
        mesh_ok = max(diffs) <= 2e-3
        return CriterionResult("P9", gap_ok and mesh_ok, f"max certified gap over {len(self.gaps)} forecaster "
                               f"runs {worst:.3g} <= 1e-3; mesh deviations {[f'{x:.2g}' for x in diffs]} <= 2e-3",
                               elapsed=time.perf_counter() - start)

    def P10(self) -> CriterionResult:
        start = time.perf_counter()
        rng = np.random.default_rng(10)
        mismatches = 0
        for _ in range(self.size.p10_instances):
            A = int(rng.integers(1, 5))
            T = int(rng.integers(1, 21))
            U = rng.integers(0, 65, (T, A)) / 64.0
            actions = rng.integers(0, A, T)
            B = np.zeros(A, dtype=bool)
            B[rng.choice(A, size=int(rng.integers(1, min(A, 3) + 1)), replace=False)] = True
            decomposed = _swap_from_table(U, actions, B)
            brute = swap_regret_bruteforce(U, actions, B)
            mismatches += decomposed != brute
        return CriterionResult("P10", mismatches == 0, f"{self.size.p10_instances} random instances, "
                               f"exact mismatches {mismatches}", elapsed=time.perf_counter() - start)

    def P11(self) -> CriterionResult:
        start = time.perf_counter()
        configs = [p7_config(0, 512), p6_config(1, 512), p5_config(2, 512), p1_config(3, "flipped", 512)]
        same = []
        for config in configs:
            first = run_simulation(config).body_bytes()
            second = run_simulation(config).body_bytes()
            same.append(first == second)
        return CriterionResult("P11", all(same), f"{len(configs)} configs rerun, byte-identical bodies: {same}",
                               elapsed=time.perf_counter() - start)

    def P12(self) -> CriterionResult:
        Ts, bias, slope, limit, regrets, slopes, regret_ok = self._slope_checks("expectation")
        elapsed = self.timings["P7-expectation"]
        ok = slope <= 0.75 and bias[-1] <= limit and all(s <= 0.75 for s in slopes.values()) and regret_ok
        return CriterionResult("P12", ok, f"expectation agents: bias {[round(b, 2) for b in bias]}, slope "
                               f"{slope:.3f}; swap-regret slopes {{{', '.join(f'{a}: {s:.3f}' for a, s in slopes.items())}}}; "
                               f"within bound at every T: {regret_ok}", elapsed=elapsed)

    ORDER = ("P1", "P2", "P3", "P4", "P5", "P6", "P7", "P8", "P10", "P11", "P12", "P9")

    def run(self, ids=None) -> list[CriterionResult]:
        results = []
        for cid in ids or self.ORDER:
            start = time.perf_counter()
            result = getattr(self, cid)()
            if not result.elapsed:
                result.elapsed = time.perf_counter() - start
            self.log(result.line())
            results.append(result)
        order = {cid: i for i, cid in enumerate(("P1", "P2", "P3", "P4", "P5", "P6", "P7", "P8", "P9",
                                                 "P10", "P11", "P12"))}
        return sorted(results, key=lambda r: order[r.id])


def _swap_from_table(U: np.ndarray, actions: np.ndarray, B: np.ndarray) -> float:
    """Per-action decomposition on a raw utility table (the metrics path, minus the transcript)."""
    from .core import Transcript
    T, A = U.shape
    stub = Transcript(d=1, agent_ids=["x"], subsequence_ids=[], x=np.zeros((T, 0)), p=np.zeros((T, 1)),
                      y=np.zeros((T, 1)), actions=actions[:, None], responsible=np.full((T, 1), -1),
                      active=np.zeros((T, 0), dtype=bool), candidates=np.zeros((T, 1, 1, A), dtype=bool),
                      support_offsets=np.zeros(T + 1, dtype=np.int64), support_points=np.zeros((0, 1)),
                      support_probs=np.zeros(0), outcome_offsets=np.zeros(T + 1, dtype=np.int64),
                      outcome_points=np.zeros((0, 1)), outcome_probs=np.zeros(0))
    return swap_regret(stub, 0, None, B, None, utilities=U).value


def verify(suite: str = "fast", log: Callable[[str], None] = print) -> bool:
    results = AcceptanceSuite(suite, log).run()
    return all(r.passed for r in results)
