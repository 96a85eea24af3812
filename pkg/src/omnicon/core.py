"""Domain types shared by every module: outcomes, utilities, constraints, agents
and the run transcript.

Outcomes and predictions live in the hypercube [0, 1]^d. Utilities are affine
in the outcome, one weight vector and offset per action. Constraint families
return a full (|A|, J) matrix for a given outcome so callers can vectorise.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Any, Iterable, Sequence

import numpy as np


class ConfigurationError(ValueError):
    """Invalid run configuration or model definition."""


class ConstraintRangeError(RuntimeError):
    """A constraint evaluator produced NaN or a value outside [-1, 1]."""


class ProtocolError(RuntimeError):
    """The interaction protocol was violated (e.g. a round with no active subsequence)."""


class UnsupportedQuery(RuntimeError):
    """An expectation was requested from a distribution that cannot provide it."""


class InvariantViolation(RuntimeError):
    """An internal invariant that the algorithms guarantee did not hold."""


MAX_VERTEX_DIM = 20


def _as_float_array(values, name: str, ndim: int) -> np.ndarray:
    arr = np.array(values, dtype=float)
    if arr.ndim != ndim:
        raise ConfigurationError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ConfigurationError(f"{name} contains non-finite values")
    arr.setflags(write=False)
    return arr


class Outcome:
    """A point of [0, 1]^d. Used both for outcomes y_t and predictions p_t."""

    __slots__ = ("coords",)

    def __init__(self, coords: Iterable[float], d: int | None = None):
        arr = np.array(list(coords) if not isinstance(coords, np.ndarray) else coords, dtype=float)
        if arr.ndim != 1:
            raise ConfigurationError(f"outcome must be a vector, got shape {arr.shape}")
        if d is not None and arr.shape[0] != d:
            raise ConfigurationError(f"outcome has length {arr.shape[0]}, expected {d}")
        if not np.all(np.isfinite(arr)) or np.any(arr < 0.0) or np.any(arr > 1.0):
            raise ConfigurationError(f"outcome coordinates must lie in [0, 1]: {arr.tolist()}")
        arr.setflags(write=False)
        self.coords = arr

    def __setattr__(self, name, value):
        if hasattr(self, name):
            raise AttributeError("Outcome is immutable")
        super().__setattr__(name, value)

    @property
    def d(self) -> int:
        return self.coords.shape[0]

    def __array__(self, dtype=None, copy=None):
        return self.coords if dtype is None else self.coords.astype(dtype)

    def __eq__(self, other):
        return isinstance(other, Outcome) and np.array_equal(self.coords, other.coords)

    def __hash__(self):
        return hash(self.coords.tobytes())

    def __repr__(self):
        return f"Outcome({self.coords.tolist()})"


def hypercube_vertices(d: int) -> np.ndarray:
    """All 2^d vertices of [0, 1]^d, as rows."""
    if d > MAX_VERTEX_DIM:
        raise ConfigurationError(f"refusing to enumerate 2^{d} vertices (d > {MAX_VERTEX_DIM})")
    return np.array(list(itertools.product((0.0, 1.0), repeat=d)), dtype=float).reshape(-1, d)


class LinearUtility:
    """u(a, y) = <w_a, y> + b_a for a finite action set.

    The evaluation order is fixed (offset first, then coordinates left to
    right) so single-point and batched evaluations agree bit for bit; the
    constrained best response relies on this for consistent tie-breaking.
    """

    def __init__(self, weights, offsets=None):
        self.weights = _as_float_array(weights, "utility weights", 2)
        n_actions, _ = self.weights.shape
        if offsets is None:
            offsets = np.zeros(n_actions)
        self.offsets = _as_float_array(offsets, "utility offsets", 1)
        if self.offsets.shape[0] != n_actions:
            raise ConfigurationError("one utility offset per action is required")
        if n_actions < 1:
            raise ConfigurationError("at least one action is required")

    @property
    def n_actions(self) -> int:
        return self.weights.shape[0]

    @property
    def d(self) -> int:
        return self.weights.shape[1]

    @property
    def lipschitz(self) -> float:
        return lipschitz_constant(self)

    def values(self, y) -> np.ndarray:
        """Utilities of every action at one outcome, shape (|A|,)."""
        y = np.asarray(y, dtype=float)
        if y.shape != (self.d,):
            raise ConfigurationError(f"outcome has shape {y.shape}, utility expects ({self.d},)")
        out = self.offsets.copy()
        for i in range(self.d):
            out += self.weights[:, i] * y[i]
        return out

    def matrix(self, points) -> np.ndarray:
        """Utilities of every action at many outcomes, shape (|A|, n)."""
        points = np.asarray(points, dtype=float)
        if points.ndim != 2 or points.shape[1] != self.d:
            raise ConfigurationError(f"points must have shape (n, {self.d})")
        out = np.repeat(self.offsets[:, None], points.shape[0], axis=1)
        for i in range(self.d):
            out += self.weights[:, i][:, None] * points[:, i][None, :]
        return out

    def to_dict(self) -> dict:
        return {"weights": self.weights.tolist(), "offsets": self.offsets.tolist()}


def eval_utility(u: LinearUtility, a: int, y) -> float:
    if not 0 <= a < u.n_actions:
        raise ConfigurationError(f"action {a} out of range for {u.n_actions} actions")
    y = np.asarray(y, dtype=float)
    if y.shape != (u.d,):
        raise ConfigurationError(f"outcome has shape {y.shape}, utility expects ({u.d},)")
    value = u.offsets[a]
    for i in range(u.d):
        value = value + u.weights[a, i] * y[i]
    return float(value)


def lipschitz_constant(u: LinearUtility) -> float:
    """Tight l_inf -> utility Lipschitz constant: the largest l1 norm of a weight vector."""
    return float(np.max(np.abs(u.weights).sum(axis=1)))


def validate_utility_range(u: LinearUtility) -> list[str]:
    """One diagnostic per (action, vertex) where the utility leaves [0, 1]."""
    vertices = hypercube_vertices(u.d)
    values = u.matrix(vertices)
    problems = []
    for a, k in zip(*np.nonzero((values < 0.0) | (values > 1.0))):
        v = tuple(int(c) for c in vertices[k])
        problems.append(f"action {a}: u(a, {v}) = {values[a, k]:.12g} outside [0, 1]")
    return problems


# --- constraints -----------------------------------------------------------


class ConstraintComponent:
    """A block of constraints evaluated jointly for every action."""

    kind = "abstract"
    n_actions: int
    n_constraints: int
    d: int

    def matrix(self, y: np.ndarray) -> np.ndarray:  # pragma: no cover - interface
        raise NotImplementedError

    def to_dict(self) -> dict:  # pragma: no cover - interface
        raise NotImplementedError


class LinearConstraints(ConstraintComponent):
    """c_j(a, y) = <g_{a,j}, y> + h_{a,j}."""

    kind = "linear"

    def __init__(self, g, h):
        self.g = _as_float_array(g, "linear constraint g", 3)
        self.h = _as_float_array(h, "linear constraint h", 2)
        self.n_actions, self.n_constraints, self.d = self.g.shape
        if self.h.shape != (self.n_actions, self.n_constraints):
            raise ConfigurationError("linear constraint h must have shape (|A|, J)")
        # range over the hypercube is attained at vertices
        lo = self.h + np.minimum(self.g, 0).sum(axis=2)
        hi = self.h + np.maximum(self.g, 0).sum(axis=2)
        if lo.min() < -1.0 or hi.max() > 1.0:
            raise ConfigurationError("linear constraint leaves [-1, 1] on the hypercube")

    def matrix(self, y):
        out = self.h.copy()
        for i in range(self.d):
            out += self.g[:, :, i] * y[i]
        return out

    def to_dict(self):
        return {"kind": self.kind, "g": self.g.tolist(), "h": self.h.tolist()}


class ThresholdConstraints(ConstraintComponent):
    """Step constraints: c_j(a, y) = above if y[coord] > theta else below."""

    kind = "threshold"

    def __init__(self, coord, theta, above=None, below=None, d: int | None = None):
        self.coord = np.array(coord, dtype=int)
        self.theta = _as_float_array(theta, "threshold theta", 2)
        if self.coord.shape != self.theta.shape:
            raise ConfigurationError("threshold coord and theta must share shape (|A|, J)")
        self.above = _as_float_array(np.ones_like(self.theta) if above is None else above,
                                     "threshold above", 2)
        self.below = _as_float_array(-np.ones_like(self.theta) if below is None else below,
                                     "threshold below", 2)
        for arr in (self.above, self.below):
            if arr.shape != self.theta.shape or np.abs(arr).max() > 1.0:
                raise ConfigurationError("threshold values must have shape (|A|, J) and lie in [-1, 1]")
        self.n_actions, self.n_constraints = self.theta.shape
        self.d = int(d) if d is not None else int(self.coord.max()) + 1
        if self.coord.min() < 0 or self.coord.max() >= self.d:
            raise ConfigurationError("threshold coordinate out of range")

    def matrix(self, y):
        return np.where(y[self.coord] > self.theta, self.above, self.below)

    def to_dict(self):
        return {"kind": self.kind, "coord": self.coord.tolist(), "theta": self.theta.tolist(),
                "above": self.above.tolist(), "below": self.below.tolist(), "d": self.d}


class TabularConstraints(ConstraintComponent):
    """Explicit values per (action, constraint, cell) of a uniform partition of [0, 1]^d.

    ``table`` has shape (|A|, J, r**d); cell index is sum_k cell_k * r**k with
    cell_k = min(floor(y_k * r), r - 1).
    """

    kind = "tabular"

    def __init__(self, resolution: int, table, d: int):
        self.resolution = int(resolution)
        self.d = int(d)
        self.table = _as_float_array(table, "tabular constraint table", 3)
        if self.resolution < 1 or self.table.shape[2] != self.resolution ** self.d:
            raise ConfigurationError("tabular table must have r**d cells")
        if np.abs(self.table).max() > 1.0:
            raise ConfigurationError("tabular constraint values must lie in [-1, 1]")
        self.n_actions, self.n_constraints, _ = self.table.shape
        self._strides = self.resolution ** np.arange(self.d)

    def cell(self, y) -> int:
        idx = np.minimum(np.floor(np.asarray(y) * self.resolution), self.resolution - 1).astype(int)
        return int(idx @ self._strides)

    def matrix(self, y):
        return self.table[:, :, self.cell(y)]

    def to_dict(self):
        return {"kind": self.kind, "resolution": self.resolution, "d": self.d,
                "table": self.table.tolist()}


_CACHE_LIMIT = 8192


class ConstraintFamily:
    """J constraint functions c_j: A x Y -> [-1, 1], stacked from components.

    Out-of-range or NaN evaluations raise :class:`ConstraintRangeError`;
    nothing is clamped. Evaluations are memoised per outcome since finite
    support adversaries revisit the same few points.
    """

    def __init__(self, components: Sequence[ConstraintComponent]):
        if not components:
            raise ConfigurationError("a constraint family needs at least one component")
        self.components = tuple(components)
        n_actions = {c.n_actions for c in self.components}
        dims = {c.d for c in self.components}
        if len(n_actions) != 1 or len(dims) != 1:
            raise ConfigurationError("constraint components disagree on |A| or d")
        self.n_actions = n_actions.pop()
        self.d = dims.pop()
        self.n_constraints = sum(c.n_constraints for c in self.components)
        self._cache: dict[bytes, np.ndarray] = {}
        self._violated: dict[bytes, np.ndarray] = {}

    def matrix(self, y) -> np.ndarray:
        """All constraint values at y, shape (|A|, J). Read-only."""
        y = np.asarray(y, dtype=float)
        key = y.tobytes()
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        if y.shape != (self.d,):
            raise ConfigurationError(f"outcome has shape {y.shape}, constraints expect ({self.d},)")
        parts = [c.matrix(y) for c in self.components]
        out = parts[0] if len(parts) == 1 else np.concatenate(parts, axis=1)
        out = np.array(out, dtype=float)
        if np.isnan(out).any() or np.abs(out).max() > 1.0:
            bad = np.argwhere(np.isnan(out) | (np.abs(out) > 1.0))[0]
            raise ConstraintRangeError(
                f"c_{bad[1]}(a={bad[0]}, y={y.tolist()}) = {out[bad[0], bad[1]]!r} outside [-1, 1]")
        out.setflags(write=False)
        if len(self._cache) < _CACHE_LIMIT:
            self._cache[key] = out
        return out

    def violated(self, y) -> np.ndarray:
        """Mask of actions with some strictly positive constraint value at y. Read-only."""
        key = np.asarray(y, dtype=float).tobytes()
        hit = self._violated.get(key)
        if hit is None:
            hit = (self.matrix(y) > 0.0).any(axis=1)
            hit.setflags(write=False)
            if len(self._violated) < _CACHE_LIMIT:
                self._violated[key] = hit
        return hit

    def evaluate(self, a: int, y) -> np.ndarray:
        return self.matrix(y)[a]

    def expected(self, a: int, distribution) -> np.ndarray:
        """E_{y ~ distribution}[c(a, y)] by exact finite-support summation."""
        return distribution.expectation(lambda y: self.matrix(y)[a])

    def to_dict(self) -> list[dict]:
        return [c.to_dict() for c in self.components]


def constraint_component_from_dict(spec: dict, d: int) -> ConstraintComponent:
    kind = spec.get("kind")
    try:
        if kind == "linear":
            return LinearConstraints(spec["g"], spec["h"])
        if kind == "threshold":
            return ThresholdConstraints(spec["coord"], spec["theta"], spec.get("above"),
                                        spec.get("below"), d=spec.get("d", d))
        if kind == "tabular":
            return TabularConstraints(spec["resolution"], spec["table"], spec.get("d", d))
    except KeyError as exc:
        raise ConfigurationError(f"{kind} constraint is missing field {exc}") from None
    raise ConfigurationError(f"unknown constraint kind {kind!r}")


MODES = ("realization", "expectation")


@dataclass(frozen=True)
class AgentSpec:
    """A downstream agent: utility, constraints and which benchmark it targets."""

    id: str
    utility: LinearUtility
    constraints: ConstraintFamily
    mode: str = "realization"

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigurationError(f"agent {self.id}: mode must be one of {MODES}")
        if self.utility.n_actions != self.constraints.n_actions:
            raise ConfigurationError(f"agent {self.id}: utility and constraints disagree on |A|")
        if self.utility.d != self.constraints.d:
            raise ConfigurationError(f"agent {self.id}: utility and constraints disagree on d")

    @property
    def n_actions(self) -> int:
        return self.utility.n_actions

    def to_dict(self) -> dict:
        return {"id": self.id, "mode": self.mode, "utility": self.utility.to_dict(),
                "constraints": self.constraints.to_dict()}


def check_unique_ids(agents: Sequence[AgentSpec]) -> None:
    seen = set()
    for agent in agents:
        if agent.id in seen:
            raise ConfigurationError(f"duplicate agent identifier {agent.id!r}")
        seen.add(agent.id)


# --- transcript ------------------------------------------------------------


@dataclass
class RoundRecord:
    t: int
    x: np.ndarray
    support: np.ndarray
    probs: np.ndarray
    p: np.ndarray
    y: np.ndarray
    actions: np.ndarray
    responsible: np.ndarray


@dataclass
class Transcript:
    """Column-oriented record of a full run.

    ``candidates[t, n, s, a]`` says whether action a was in agent n's
    candidate set for subsequence s (s = 0 without subsequences) when round
    t was predicted; agents with fewer actions are padded with False. ``actions`` is -1 for an agent whose run was
    truncated; ``responsible`` is -1 unless the agent attributes rounds.
    Rounds are numbered 1..T and stored in order.
    """

    d: int
    agent_ids: list[str]
    subsequence_ids: list[str]
    x: np.ndarray
    p: np.ndarray
    y: np.ndarray
    actions: np.ndarray
    responsible: np.ndarray
    active: np.ndarray
    candidates: np.ndarray
    support_offsets: np.ndarray
    support_points: np.ndarray
    support_probs: np.ndarray
    outcome_offsets: np.ndarray
    outcome_points: np.ndarray
    outcome_probs: np.ndarray
    seed: int = 0
    config_digest: str = ""
    metadata: dict[str, Any] = field(default_factory=dict)

    @property
    def T(self) -> int:
        return self.p.shape[0]

    def __len__(self) -> int:
        return self.T

    @property
    def rounds(self) -> np.ndarray:
        return np.arange(1, self.T + 1)

    def support(self, t: int) -> tuple[np.ndarray, np.ndarray]:
        """Prediction distribution of round t (1-based): (points, probabilities)."""
        lo, hi = self.support_offsets[t - 1], self.support_offsets[t]
        return self.support_points[lo:hi], self.support_probs[lo:hi]

    def outcome_distribution(self, t: int) -> tuple[np.ndarray, np.ndarray] | None:
        lo, hi = self.outcome_offsets[t - 1], self.outcome_offsets[t]
        if hi == lo:
            return None
        return self.outcome_points[lo:hi], self.outcome_probs[lo:hi]

    def record(self, t: int) -> RoundRecord:
        points, probs = self.support(t)
        return RoundRecord(t, self.x[t - 1], points, probs, self.p[t - 1], self.y[t - 1],
                           self.actions[t - 1], self.responsible[t - 1])

    def union_view(self, n: int) -> np.ndarray:
        """(T, |A|) mask of the set agent n best-responded over at each round."""
        cand = self.candidates[:, n]
        if not self.subsequence_ids:
            return cand[:, 0].copy()
        return (cand & self.active[:, :, None]).any(axis=1)

    def validate(self) -> None:
        T = self.T
        for name in ("x", "y", "actions", "responsible", "candidates"):
            if getattr(self, name).shape[0] != T:
                raise InvariantViolation(f"transcript column {name} has wrong length")
        if self.support_offsets.shape[0] != T + 1:
            raise InvariantViolation("support offsets must have T + 1 entries")
        for t in range(1, T + 1):
            points, probs = self.support(t)
            if points.shape[0] == 0 or not np.any(np.all(points == self.p[t - 1], axis=1)):
                raise InvariantViolation(f"round {t}: sampled prediction is not in its support")
            if abs(probs.sum() - 1.0) > 1e-9:
                raise InvariantViolation(f"round {t}: prediction probabilities do not sum to 1")

    # persistence: a single compressed columnar file
    _ARRAYS = ("x", "p", "y", "actions", "responsible", "active", "candidates",
               "support_offsets", "support_points", "support_probs",
               "outcome_offsets", "outcome_points", "outcome_probs")

    def save(self, path) -> None:
        import json
        meta = {"d": self.d, "agent_ids": self.agent_ids, "subsequence_ids": self.subsequence_ids,
                "seed": self.seed, "config_digest": self.config_digest, "metadata": self.metadata}
        np.savez_compressed(path, meta=np.array(json.dumps(meta, sort_keys=True)),
                            **{name: getattr(self, name) for name in self._ARRAYS})

    @classmethod
    def load(cls, path) -> "Transcript":
        import json
        with np.load(path, allow_pickle=False) as data:
            meta = json.loads(str(data["meta"]))
            arrays = {name: data[name] for name in cls._ARRAYS}
        return cls(d=meta["d"], agent_ids=meta["agent_ids"], subsequence_ids=meta["subsequence_ids"],
                   seed=meta["seed"], config_digest=meta["config_digest"],
                   metadata=meta.get("metadata", {}), **arrays)
