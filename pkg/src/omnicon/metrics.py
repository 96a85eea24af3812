"""Post-hoc measurements: benchmark sets, cumulative constraint violation,
constrained external and swap regret, per-action bias and closed-form bounds.

Every function here is a pure function of a transcript and the agent
definitions; nothing reads live ledgers.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .agents import tau_subsequence, threshold_tau
from .core import AgentSpec, ConfigurationError, Transcript, UnsupportedQuery

FULL_HORIZON = "all"
EXPECTATION_TOL = 1e-12


def round_sets(transcript: Transcript) -> dict[str, np.ndarray]:
    """Boolean round masks for the full horizon and every subsequence."""
    out = {FULL_HORIZON: np.ones(transcript.T, dtype=bool)}
    for s, sid in enumerate(transcript.subsequence_ids):
        out[sid] = transcript.active[:, s].copy()
    return out


def realized_violations(transcript: Transcript, spec: AgentSpec) -> np.ndarray:
    """(T, |A|) mask: does action a violate some constraint at y_t."""
    C = spec.constraints
    return np.array([C.violated(y) for y in transcript.y]).reshape(transcript.T, -1)


def expected_constraints(transcript: Transcript, spec: AgentSpec) -> np.ndarray:
    """(T, |A|, J) exact expectations over each round's recorded outcome distribution."""
    C = spec.constraints
    out = np.empty((transcript.T, spec.n_actions, C.n_constraints))
    memo: dict[bytes, np.ndarray] = {}
    for t in range(1, transcript.T + 1):
        dist = transcript.outcome_distribution(t)
        if dist is None:
            raise UnsupportedQuery(f"round {t} has no recorded outcome distribution")
        points, probs = dist
        key = points.tobytes() + probs.tobytes()
        hit = memo.get(key)
        if hit is None:
            hit = sum(w * C.matrix(y) for w, y in zip(probs, points))
            memo[key] = hit
        out[t - 1] = hit
    return out


@dataclass
class BenchmarkSets:
    """Per agent id and round-set id, a boolean mask over actions."""

    realized: dict[str, dict[str, np.ndarray]]
    expectation: dict[str, dict[str, np.ndarray]] | None

    def get(self, agent_id: str, sub: str = FULL_HORIZON, kind: str = "realized") -> np.ndarray:
        table = self.realized if kind == "realized" else self.expectation
        if table is None:
            raise UnsupportedQuery("expectation benchmarks were not computed")
        return table[agent_id][sub]

    def to_dict(self) -> dict:
        def lists(table):
            return {a: {s: np.flatnonzero(m).tolist() for s, m in subs.items()} for a, subs in table.items()}
        out = {"realized": lists(self.realized)}
        if self.expectation is not None:
            out["expectation"] = lists(self.expectation)
        return out


def compute_benchmarks(transcript: Transcript, agents: Sequence[AgentSpec],
                       expectation: bool = True) -> BenchmarkSets:
    """Actions satisfying every constraint on every round of each round set.

    Expectation sets need every round's outcome distribution in the
    transcript; a missing one raises :class:`UnsupportedQuery`.
    """
    sets = round_sets(transcript)
    realized, expected = {}, {} if expectation else None
    for spec in agents:
        viol = realized_violations(transcript, spec)
        realized[spec.id] = {sid: ~viol[mask].any(axis=0) for sid, mask in sets.items()}
        if expectation:
            ev = (expected_constraints(transcript, spec) > EXPECTATION_TOL).any(axis=2)
            expected[spec.id] = {sid: ~ev[mask].any(axis=0) for sid, mask in sets.items()}
    return BenchmarkSets(realized, expected)


def _played(transcript: Transcript, n: int, rounds) -> np.ndarray:
    mask = transcript.actions[:, n] >= 0
    if rounds is not None:
        mask &= np.asarray(rounds, dtype=bool)
    return mask


def played_constraints(transcript: Transcript, n: int, spec: AgentSpec) -> np.ndarray:
    """(T, J) constraint values of the played action; zero on truncated rounds."""
    out = np.zeros((transcript.T, spec.constraints.n_constraints))
    for t, (a, y) in enumerate(zip(transcript.actions[:, n], transcript.y)):
        if a >= 0:
            out[t] = spec.constraints.matrix(y)[a]
    return out


CCV_VARIANTS = ("signed", "positive-part")


def ccv(transcript: Transcript, n: int, spec: AgentSpec, rounds=None, variant: str = "signed",
        values: np.ndarray | None = None) -> float:
    """max_j of the summed (signed or positive-part) constraint values over the rounds.

    Sums are exactly rounded so comparisons against integral bounds are exact.
    """
    if variant not in CCV_VARIANTS:
        raise ConfigurationError(f"variant must be one of {CCV_VARIANTS}")
    vals = played_constraints(transcript, n, spec) if values is None else values
    vals = vals[_played(transcript, n, rounds)]
    if variant == "positive-part":
        vals = np.maximum(vals, 0.0)
    if vals.shape[0] == 0:
        return 0.0
    return max(math.fsum(vals[:, j]) for j in range(vals.shape[1]))


@dataclass(frozen=True)
class RegretResult:
    """A regret value, or ``None`` with ``undefined`` set when the benchmark is empty."""

    value: float | None

    @property
    def undefined(self) -> bool:
        return self.value is None

    def to_json(self):
        return self.value


def utility_table(transcript: Transcript, spec: AgentSpec) -> np.ndarray:
    """(T, |A|) realized utilities."""
    return spec.utility.matrix(transcript.y).T


def external_regret(transcript: Transcript, n: int, spec: AgentSpec, benchmark, rounds=None,
                    utilities: np.ndarray | None = None) -> RegretResult:
    """max_{b in B} sum over rounds of u(b, y_t) - u(a_t, y_t)."""
    B = np.flatnonzero(np.asarray(benchmark, dtype=bool))
    if B.size == 0:
        return RegretResult(None)
    U = utility_table(transcript, spec) if utilities is None else utilities
    mask = _played(transcript, n, rounds)
    played = U[mask, transcript.actions[mask, n]]
    return RegretResult(float(max(math.fsum(U[mask, b] - played) for b in B)))


def swap_regret(transcript: Transcript, n: int, spec: AgentSpec, benchmark, rounds=None,
                utilities: np.ndarray | None = None) -> RegretResult:
    """Best modification rule into B, computed one played action at a time."""
    B = np.flatnonzero(np.asarray(benchmark, dtype=bool))
    if B.size == 0:
        return RegretResult(None)
    U = utility_table(transcript, spec) if utilities is None else utilities
    mask = _played(transcript, n, rounds)
    actions = transcript.actions[:, n]
    chosen = []
    for a in np.unique(actions[mask]):
        slice_ = mask & (actions == a)
        diffs = {int(b): U[slice_, b] - U[slice_, a] for b in B}
        sums = {b: math.fsum(v) for b, v in diffs.items()}
        top = max(sums.values())
        tied = [b for b, v in sums.items() if v == top]
        # rounded sums can tie while exact sums differ; settle exactly
        best = tied[0] if len(tied) == 1 else max(tied, key=lambda b: sum(map(Fraction, diffs[b])))
        chosen.append(diffs[best])
    # one correctly rounded sum over the optimal map's differences, as the brute force takes
    return RegretResult(math.fsum(np.concatenate(chosen)) if chosen else 0.0)


def swap_regret_bruteforce(utilities: np.ndarray, actions: np.ndarray, benchmark) -> float | None:
    """Exhaustive maximum over all maps from the action set into B."""
    B = np.flatnonzero(np.asarray(benchmark, dtype=bool))
    if B.size == 0:
        return None
    T, A = utilities.shape
    rows = np.arange(T)
    best = -math.inf
    for phi in itertools.product(B, repeat=A):
        phi = np.array(phi)
        best = max(best, math.fsum(utilities[rows, phi[actions]] - utilities[rows, actions]))
    return best


def action_bias(transcript: Transcript, n: int, n_actions: int, rounds=None) -> np.ndarray:
    """Per action a, the l_inf norm of the summed residual p_t - y_t over rounds where a was played."""
    mask = _played(transcript, n, rounds)
    residual = transcript.p - transcript.y
    out = np.zeros(n_actions)
    for a in range(n_actions):
        sel = mask & (transcript.actions[:, n] == a)
        if sel.any():
            out[a] = float(np.abs(residual[sel].sum(axis=0)).max())
    return out


def theorem_bounds(T: int, A: int, N: int, J: int, delta: float, lipschitz: float = 1.0,
                   subsequence_lengths: Sequence[int] | None = None, d: int = 1) -> dict[str, float]:
    """Closed-form guarantees for the configured sizes.

    Keys: realized CCV (single horizon and per subsequence), expectation CCV
    (single horizon and the per-subsequence sum form), and the swap-regret
    scale 2 L |A| sqrt(T ln(d |A| |N| T / delta)) used with a constant.
    """
    out = {
        "realized_ccv": float(A),
        "expectation_ccv": A * threshold_tau(T, A, N, J, delta) + A,
        "swap_regret_scale": 2.0 * lipschitz * A * math.sqrt(T * math.log(d * A * N * T / delta)),
    }
    if subsequence_lengths:
        k = len(subsequence_lengths)
        out["subsequence_realized_ccv"] = float(A * k)
        out["subsequence_expectation_ccv"] = sum(
            A * tau_subsequence(max(int(n), 1), A, N, k, J, delta) for n in subsequence_lengths) + A * k
    return out
