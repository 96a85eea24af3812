"""Downstream agents: constrained best response plus four elimination ledgers.

* realization mode, one horizon: drop every candidate that violates a
  constraint at the revealed outcome;
* expectation mode, one horizon: accumulate the played action's constraint
  values and drop it once an accumulator strictly exceeds a threshold;
* realization mode, subsequences: the first rule run per active subsequence;
* expectation mode, subsequences: accumulators attributed to a responsible
  subsequence so slack on one subsequence cannot hide violations on another.

Ledger state is plain numpy arrays; the step functions mutate it in place and
report what was eliminated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import (AgentSpec, ConfigurationError, ConstraintFamily, InvariantViolation,
                   LinearUtility, ProtocolError)


class FeasibilityExhausted(RuntimeError):
    """An agent's candidate set became empty, so no constrained best response exists."""


def _as_mask(C, n_actions: int) -> np.ndarray:
    if isinstance(C, np.ndarray) and C.dtype == bool:
        if C.shape != (n_actions,):
            raise ConfigurationError(f"candidate mask has shape {C.shape}, expected ({n_actions},)")
        return C
    mask = np.zeros(n_actions, dtype=bool)
    for a in C:
        if not 0 <= int(a) < n_actions:
            raise ConfigurationError(f"action {a} out of range")
        mask[int(a)] = True
    return mask


def constrained_best_response(u: LinearUtility, C, p) -> int:
    """argmax over C of the predicted utility; ties go to the lowest index.

    ``C`` is either a boolean mask over actions or an iterable of indices.
    """
    mask = _as_mask(C, u.n_actions)
    if not mask.any():
        raise FeasibilityExhausted("constrained best response over an empty candidate set")
    values = np.where(mask, u.values(p), -np.inf)
    return int(np.argmax(values))


def threshold_tau(T: int, A: int, N: int, J: int, delta: float) -> float:
    """Elimination threshold for the single-horizon expectation ledger."""
    if not 0.0 < delta < 1.0:
        raise ConfigurationError(f"delta must lie in (0, 1), got {delta}")
    if min(T, A, N, J) < 1:
        raise ConfigurationError("T, |A|, |N| and J must all be at least 1")
    arg = A * N * J * T / delta
    if arg <= 1.0:
        raise ConfigurationError("logarithm argument must exceed 1")
    return 4.0 * math.sqrt(T * math.log(arg))


def tau_subsequence(S_len: int, A: int, N: int, S_count: int, J: int, delta: float) -> float:
    """Elimination threshold for one subsequence of length ``S_len``."""
    if S_len < 1 or S_count < 1:
        raise ConfigurationError("subsequence length and count must be at least 1")
    return threshold_tau(S_len, A, N, J * S_count * S_count, delta)


def _kahan_add(total: np.ndarray, comp: np.ndarray, idx, values) -> None:
    """Compensated in-place addition total[idx] += values."""
    y = values - comp[idx]
    t = total[idx] + y
    comp[idx] = (t - total[idx]) - y
    total[idx] = t


@dataclass
class CandidateLedger:
    """Candidate sets and violation accumulators for one agent.

    ``candidates`` has one row per subsequence (a single row without
    subsequences). ``v`` is (|A|, J) for the expectation ledger; ``w`` is
    (|A|, J, |S|, |S|) indexed [action, constraint, responsible, measured].
    """

    algorithm: int
    candidates: np.ndarray
    n_constraints: int
    v: np.ndarray | None = None
    w: np.ndarray | None = None
    tau: float | None = None
    taus: np.ndarray | None = None
    threshold_rule: str = "checked"
    _comp: np.ndarray | None = field(default=None, repr=False)

    @classmethod
    def create(cls, algorithm: int, n_actions: int, n_constraints: int, n_subsequences: int = 0,
               tau: float | None = None, taus=None, threshold_rule: str = "checked") -> "CandidateLedger":
        if algorithm not in (1, 2, 3, 4):
            raise ConfigurationError(f"unknown elimination algorithm {algorithm}")
        uses_subs = algorithm in (3, 4)
        if uses_subs and n_subsequences < 1:
            raise ConfigurationError("subsequence ledgers need at least one subsequence")
        rows = n_subsequences if uses_subs else 1
        ledger = cls(algorithm, np.ones((rows, n_actions), dtype=bool), n_constraints,
                     threshold_rule=threshold_rule)
        if algorithm == 2:
            if tau is None:
                raise ConfigurationError("expectation ledger needs a threshold")
            ledger.tau = float(tau)
            ledger.v = np.zeros((n_actions, n_constraints))
            ledger._comp = np.zeros_like(ledger.v)
        elif algorithm == 4:
            if threshold_rule not in ("checked", "responsible"):
                raise ConfigurationError("threshold_rule must be 'checked' or 'responsible'")
            ledger.taus = np.array(taus, dtype=float)
            if ledger.taus.shape != (n_subsequences,):
                raise ConfigurationError("one threshold per subsequence is required")
            ledger.w = np.zeros((n_actions, n_constraints, n_subsequences, n_subsequences))
            ledger._comp = np.zeros_like(ledger.w)
        return ledger

    @property
    def n_actions(self) -> int:
        return self.candidates.shape[1]

    def snapshot(self) -> dict:
        out = {"algorithm": self.algorithm,
               "candidates": [np.flatnonzero(row).tolist() for row in self.candidates]}
        if self.v is not None:
            out["v"] = self.v.tolist()
        if self.w is not None:
            out["w"] = self.w.tolist()
        return out


def _require(ledger: CandidateLedger, algorithm: int) -> None:
    if ledger.algorithm != algorithm:
        raise ConfigurationError(f"ledger runs algorithm {ledger.algorithm}, not {algorithm}")


def step_alg1(ledger: CandidateLedger, y, constraints: ConstraintFamily) -> np.ndarray:
    """Remove every candidate with a strictly positive constraint value at y."""
    _require(ledger, 1)
    violated = constraints.violated(y)
    removed = ledger.candidates[0] & violated
    ledger.candidates[0] &= ~violated
    return np.flatnonzero(removed)


def step_alg2(ledger: CandidateLedger, a: int, y, constraints: ConstraintFamily) -> bool:
    """Accumulate the played action's constraint values; eliminate it past the threshold."""
    _require(ledger, 2)
    if not ledger.candidates[0, a]:
        raise InvariantViolation(f"played action {a} is not a candidate")
    _kahan_add(ledger.v, ledger._comp, a, constraints.matrix(y)[a])
    if (ledger.v[a] > ledger.tau).any():
        ledger.candidates[0, a] = False
        return True
    return False


def union_candidates(ledger: CandidateLedger, active) -> np.ndarray:
    """Union of the candidate sets of the active subsequences, as a mask."""
    active = np.asarray(active, dtype=bool)
    if not active.any():
        raise ProtocolError("no active subsequence: the family does not cover this round")
    return ledger.candidates[active].any(axis=0)


def step_alg3(ledger: CandidateLedger, y, constraints: ConstraintFamily, active) -> dict[int, np.ndarray]:
    """Apply the realized elimination rule to every active subsequence's set."""
    _require(ledger, 3)
    active = np.asarray(active, dtype=bool)
    violated = constraints.violated(y)
    removed = {}
    for s in np.flatnonzero(active):
        removed[int(s)] = np.flatnonzero(ledger.candidates[s] & violated)
        ledger.candidates[s] &= ~violated
    return removed


def responsible_index(ledger: CandidateLedger, a: int, active) -> int:
    """Smallest active subsequence index whose candidate set contains a (0-based)."""
    active = np.asarray(active, dtype=bool)
    qualifying = np.flatnonzero(active & ledger.candidates[:, a])
    if qualifying.size == 0:
        raise InvariantViolation(f"action {a} is not a candidate of any active subsequence")
    return int(qualifying[0])


def step_alg4(ledger: CandidateLedger, a: int, y, constraints: ConstraintFamily, active,
              r: int) -> bool:
    """Charge the played action's constraint values to the responsible subsequence.

    The accumulator w[a, :, r, S] grows for every active S. The action leaves
    the responsible subsequence's set (only) once some w[a, j, r, S] exceeds
    the threshold of S (or of r under the "responsible" rule).
    """
    _require(ledger, 4)
    active = np.asarray(active, dtype=bool)
    if not (active[r] and ledger.candidates[r, a]):
        raise InvariantViolation(f"action {a} is not a candidate of responsible subsequence {r}")
    c = constraints.matrix(y)[a]
    for s in np.flatnonzero(active):
        _kahan_add(ledger.w, ledger._comp, (a, slice(None), r, s), c)
    limits = ledger.taus if ledger.threshold_rule == "checked" else np.full_like(ledger.taus, ledger.taus[r])
    if (ledger.w[a, :, r, :] > limits[None, :]).any():
        ledger.candidates[r, a] = False
        return True
    return False


class EliminationAgent:
    """Runs one agent through the protocol with the ledger matching its mode.

    Realization agents use the realized elimination rule and expectation
    agents the threshold rule; configuring subsequences switches both to
    their per-subsequence forms.
    """

    def __init__(self, spec: AgentSpec, T: int, n_agents: int, delta: float,
                 n_subsequences: int = 0, subsequence_lengths=None,
                 threshold_rule: str = "checked"):
        self.spec = spec
        A, J = spec.n_actions, spec.constraints.n_constraints
        expectation = spec.mode == "expectation"
        self.n_subsequences = n_subsequences
        if n_subsequences == 0:
            algorithm = 2 if expectation else 1
            tau = threshold_tau(T, A, n_agents, J, delta) if expectation else None
            self.ledger = CandidateLedger.create(algorithm, A, J, tau=tau)
        else:
            algorithm = 4 if expectation else 3
            taus = None
            if expectation:
                lengths = subsequence_lengths if subsequence_lengths is not None else [T] * n_subsequences
                taus = [tau_subsequence(max(int(n), 1), A, n_agents, n_subsequences, J, delta)
                        for n in lengths]
            self.ledger = CandidateLedger.create(algorithm, A, J, n_subsequences, taus=taus,
                                                 threshold_rule=threshold_rule)
        self.algorithm = algorithm
        self.exhausted = False

    @property
    def id(self) -> str:
        return self.spec.id

    def view(self, active=None) -> np.ndarray:
        """Read-only mask of the set the agent best-responds over this round."""
        if self.n_subsequences == 0:
            out = self.ledger.candidates[0].copy()
        else:
            out = union_candidates(self.ledger, active)
        out.setflags(write=False)
        return out

    def act(self, p, view: np.ndarray) -> int:
        return constrained_best_response(self.spec.utility, view, p)

    def observe(self, a: int, y, active=None) -> int:
        """Step the ledger after y is revealed. Returns the responsible index or -1."""
        C = self.spec.constraints
        if self.algorithm == 1:
            step_alg1(self.ledger, y, C)
        elif self.algorithm == 2:
            step_alg2(self.ledger, a, y, C)
        elif self.algorithm == 3:
            step_alg3(self.ledger, y, C, active)
        else:
            r = responsible_index(self.ledger, a, active)
            step_alg4(self.ledger, a, y, C, active, r)
            return r
        return -1
