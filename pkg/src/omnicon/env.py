"""Adversaries and subsequence definitions.

An adversary emits a context and a sealed outcome distribution each round
before the prediction is drawn. Distributions have finite support, so
expectations of constraints are exact sums.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .core import ConfigurationError, ConstraintFamily, ProtocolError, UnsupportedQuery


class OutcomeDistribution:
    """Finite-support distribution over [0, 1]^d. Immutable once built."""

    __slots__ = ("points", "probs", "_cdf")

    def __init__(self, points, probs=None):
        pts = np.array(points, dtype=float)
        if pts.ndim == 1:
            pts = pts[None, :]
        if pts.ndim != 2 or pts.shape[0] == 0:
            raise ConfigurationError("support must be a non-empty (k, d) array")
        if not np.all(np.isfinite(pts)) or pts.min() < 0.0 or pts.max() > 1.0:
            raise ConfigurationError("support points must lie in [0, 1]^d")
        pr = np.full(pts.shape[0], 1.0 / pts.shape[0]) if probs is None else np.array(probs, dtype=float)
        if pr.shape != (pts.shape[0],) or pr.min() < 0.0 or abs(pr.sum() - 1.0) > 1e-9:
            raise ConfigurationError("probabilities must be non-negative, one per point, summing to 1")
        pts.setflags(write=False)
        pr.setflags(write=False)
        self.points = pts
        self.probs = pr
        self._cdf = np.cumsum(pr)

    @classmethod
    def point_mass(cls, y) -> "OutcomeDistribution":
        return cls([y], [1.0])

    @property
    def d(self) -> int:
        return self.points.shape[1]

    @property
    def has_support(self) -> bool:
        return True

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        k = int(np.searchsorted(self._cdf, rng.random() * self._cdf[-1], side="right"))
        return self.points[min(k, self.points.shape[0] - 1)]

    def mean(self) -> np.ndarray:
        return self.probs @ self.points

    def expectation(self, fn: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
        """Exact E[fn(y)] by summation over the support."""
        total = None
        for w, y in zip(self.probs, self.points):
            term = w * np.asarray(fn(y), dtype=float)
            total = term if total is None else total + term
        return total

    def params(self) -> tuple:
        return (self.points.tobytes(), self.probs.tobytes())


class SamplerDistribution:
    """A distribution known only through a sampler; expectations are refused."""

    def __init__(self, sampler: Callable[[np.random.Generator], np.ndarray], d: int):
        self._sampler = sampler
        self.d = d

    @property
    def has_support(self) -> bool:
        return False

    def sample(self, rng):
        y = np.asarray(self._sampler(rng), dtype=float)
        if y.shape != (self.d,) or y.min() < 0.0 or y.max() > 1.0:
            raise ConfigurationError("sampler produced an invalid outcome")
        return y

    def mean(self):
        raise UnsupportedQuery("distribution has no recorded support")

    def expectation(self, fn):
        raise UnsupportedQuery("distribution has no recorded support")


def expected_constraint(handle, constraints: ConstraintFamily, a: int) -> np.ndarray:
    """E_{y ~ handle}[c_j(a, y)] for every j."""
    return handle.expectation(lambda y: constraints.matrix(y)[a])


class Prefix(NamedTuple):
    """Read-only view of the rounds before t (round t has not been predicted yet)."""

    t: int
    T: int
    x: np.ndarray
    y: np.ndarray
    p: np.ndarray


# --- adversaries -----------------------------------------------------------


class Adversary:
    """Base class: contexts default to (t / T, uniform noise)."""

    kind = "abstract"

    def __init__(self, T: int, d: int, rng: np.random.Generator, context_dim: int = 2):
        self.T = T
        self.d = d
        self.rng = rng
        self.context_dim = context_dim

    def default_context(self, t: int) -> np.ndarray:
        return np.array([t / self.T, self.rng.random()])

    def next_round(self, t: int, prefix: Prefix):  # pragma: no cover - interface
        raise NotImplementedError


class IIDAdversary(Adversary):
    """Same outcome distribution every round."""

    kind = "iid"

    def __init__(self, T, d, rng, distribution: OutcomeDistribution):
        super().__init__(T, d, rng)
        if distribution.d != d:
            raise ConfigurationError("distribution dimension does not match d")
        self.distribution = distribution

    def next_round(self, t, prefix):
        return self.default_context(t), self.distribution


class ScriptedAdversary(Adversary):
    """Per-round contexts and distributions read from a table (row t-1 at round t)."""

    kind = "scripted"

    def __init__(self, T, d, rng, contexts: Sequence, distributions: Sequence[OutcomeDistribution]):
        if len(contexts) != len(distributions):
            raise ConfigurationError("scripted contexts and distributions differ in length")
        ctx = [np.asarray(x, dtype=float) for x in contexts]
        super().__init__(T, d, rng, context_dim=ctx[0].shape[0] if ctx else 0)
        self.contexts = ctx
        self.distributions = list(distributions)
        if any(dist.d != d for dist in self.distributions):
            raise ConfigurationError("scripted distribution dimension does not match d")

    def next_round(self, t, prefix):
        if t > len(self.distributions):
            raise ProtocolError(f"script has {len(self.distributions)} rows, round {t} requested")
        return self.contexts[t - 1], self.distributions[t - 1]

    @classmethod
    def from_csv(cls, path, T, d, rng) -> "ScriptedAdversary":
        """Columns x0.., then s{k}_y{i} and s{k}_p per support point; blank cells skip a point."""
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            header = reader.fieldnames or []
            xcols = sorted((c for c in header if c.startswith("x") and c[1:].isdigit()),
                           key=lambda c: int(c[1:]))
            ks = sorted({int(c[1:].split("_")[0]) for c in header
                         if c.startswith("s") and c.endswith("_p")})
            contexts, dists = [], []
            for row in reader:
                contexts.append([float(row[c]) for c in xcols])
                points, probs = [], []
                for k in ks:
                    if not row.get(f"s{k}_p", "").strip():
                        continue
                    try:
                        points.append([float(row[f"s{k}_y{i}"]) for i in range(d)])
                    except KeyError as exc:
                        raise ConfigurationError(f"scripted table lacks column {exc}") from None
                    probs.append(float(row[f"s{k}_p"]))
                dists.append(OutcomeDistribution(points, probs))
        return cls(T, d, rng, contexts, dists)


class AdaptiveAdversary(Adversary):
    """Distribution chosen by ``policy(t, prefix, rng)`` from the history so far.

    The policy returns ``(x, handle)`` or just a handle, in which case the
    default context is used. It never sees the current round's prediction.
    """

    kind = "adaptive"

    def __init__(self, T, d, rng, policy: Callable):
        super().__init__(T, d, rng)
        self.policy = policy

    def next_round(self, t, prefix):
        out = self.policy(t, prefix, self.rng)
        if isinstance(out, tuple):
            return np.asarray(out[0], dtype=float), out[1]
        return self.default_context(t), out


def _default_support(d: int) -> OutcomeDistribution:
    lo, hi = np.full(d, 0.25), np.full(d, 0.75)
    alt = np.where(np.arange(d) % 2 == 0, 0.25, 0.75)
    return OutcomeDistribution([lo, hi, alt, 1.0 - alt])


def _dist_param(params: dict, key: str, default: OutcomeDistribution) -> OutcomeDistribution:
    spec = params.get(key)
    if spec is None:
        return default
    return OutcomeDistribution(spec["support"], spec.get("probs"))


def make_adversary(preset: str, params: dict, T: int, d: int, rng: np.random.Generator) -> Adversary:
    """Build a named preset.

    * ``benign-iid``: one fixed distribution (``distribution`` param).
    * ``masking``: coordinate ``coord`` is 1 on rounds with t % period == phase
      and 0 otherwise; the other coordinates follow ``background``.
    * ``constraint-flipper``: plays ``high`` while the prefix mean of
      coordinate ``coord`` is below ``pivot`` and ``low`` otherwise.
    * ``scripted``: rows from the CSV file at ``path``.
    """
    params = dict(params or {})
    if preset == "benign-iid":
        return IIDAdversary(T, d, rng, _dist_param(params, "distribution", _default_support(d)))
    if preset == "masking":
        coord = int(params.get("coord", 0))
        period = int(params.get("period", 2))
        phase = int(params.get("phase", 0))
        if not 0 <= coord < d or period < 1:
            raise ConfigurationError("masking preset needs 0 <= coord < d and period >= 1")
        background = np.array(params.get("background", [[0.5] * d]), dtype=float)

        def with_flag(flag):
            pts = background.copy()
            pts[:, coord] = flag
            return OutcomeDistribution(pts)

        on, off = with_flag(1.0), with_flag(0.0)

        def policy(t, prefix, rng_):
            return on if t % period == phase else off

        return AdaptiveAdversary(T, d, rng, policy)
    if preset == "constraint-flipper":
        coord = int(params.get("coord", 0))
        pivot = float(params.get("pivot", 0.5))
        high = _dist_param(params, "high", OutcomeDistribution([[0.9] * d, [0.7] * d]))
        low = _dist_param(params, "low", OutcomeDistribution([[0.1] * d, [0.3] * d]))

        def policy(t, prefix, rng_):
            if prefix.y.shape[0] == 0:
                return high
            return high if prefix.y[:, coord].mean() < pivot else low

        return AdaptiveAdversary(T, d, rng, policy)
    if preset == "scripted":
        if "path" not in params:
            raise ConfigurationError("scripted preset needs a 'path'")
        return ScriptedAdversary.from_csv(params["path"], T, d, rng)
    raise ConfigurationError(f"unknown adversary preset {preset!r}")


ADVERSARY_PRESETS = ("benign-iid", "masking", "constraint-flipper", "scripted")


# --- subsequences ----------------------------------------------------------

SUBSEQUENCE_KINDS = ("interval", "periodic", "feature-threshold", "scripted")


@dataclass(frozen=True)
class SubsequenceDef:
    """Indicator of a subsequence of rounds, a function of (t, x_t) only.

    interval: start <= t <= end (1-based, inclusive); periodic: t % period ==
    phase; feature-threshold: x[coord] > theta (or <= with above=False);
    scripted: t in rounds.
    """

    id: str
    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in SUBSEQUENCE_KINDS:
            raise ConfigurationError(f"unknown subsequence kind {self.kind!r}")
        required = {"interval": ("start", "end"), "periodic": ("period",),
                    "feature-threshold": ("coord", "theta"), "scripted": ("rounds",)}[self.kind]
        missing = [k for k in required if k not in self.params]
        if missing:
            raise ConfigurationError(f"subsequence {self.id}: missing {missing}")
        if self.kind == "scripted":
            object.__setattr__(self, "_rounds", frozenset(int(r) for r in self.params["rounds"]))

    def contains(self, t: int, x) -> bool:
        p = self.params
        if self.kind == "interval":
            return p["start"] <= t <= p["end"]
        if self.kind == "periodic":
            return t % p["period"] == p.get("phase", 0)
        if self.kind == "feature-threshold":
            above = np.asarray(x)[p["coord"]] > p["theta"]
            return bool(above) if p.get("above", True) else not bool(above)
        return t in self._rounds

    def length(self, T: int) -> int | None:
        """Number of rounds in [1, T], or None when it depends on contexts."""
        p = self.params
        if self.kind == "interval":
            return max(0, min(p["end"], T) - max(p["start"], 1) + 1)
        if self.kind == "periodic":
            return sum(1 for t in range(1, T + 1) if t % p["period"] == p.get("phase", 0))
        if self.kind == "scripted":
            return sum(1 for t in self._rounds if 1 <= t <= T)
        return None

    def to_dict(self) -> dict:
        return {"id": self.id, "kind": self.kind, **self.params}


def active_subsequences(defs: Sequence[SubsequenceDef], t: int, x) -> np.ndarray:
    """Boolean mask of the subsequences containing round t."""
    mask = np.fromiter((s.contains(t, x) for s in defs), dtype=bool, count=len(defs))
    if not mask.any():
        raise ProtocolError(f"round {t} is covered by no subsequence")
    return mask
