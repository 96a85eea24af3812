"""Conditionally unbiased forecasting against decision-calibration events.

Each event is an indicator of the form "agent n best-responds with action a"
(optionally gated on membership in a subsequence). The forecaster keeps one
pair of signed experts per (event, coordinate), weights them exponentially in
their accumulated bias, and each round plays the minimax distribution over
candidate predictions against the worst outcome.

The per-round game is small: its value is linear in the outcome, so the max
player's pure strategies are hypercube vertices and a mixed strategy is just
a point of [0, 1]^d. Candidate predictions that trigger the same events share
a coefficient vector, so only the cheapest member of each group matters. The
reduced game is solved exactly as a linear program by enumerating bases;
scipy's HiGHS is the fallback.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import _kernels
from .core import AgentSpec, ConfigurationError, LinearUtility, hypercube_vertices


class SolverError(RuntimeError):
    """The minimax solver could not certify the requested duality gap."""

    def __init__(self, message: str, gap: float):
        super().__init__(f"{message} (achieved gap {gap:.3g})")
        self.gap = gap


# --- events and expert state ----------------------------------------------


@dataclass(frozen=True)
class Event:
    """Indicator that agent ``agent_index`` picks ``action`` (in subsequence ``subsequence``)."""

    agent_index: int
    agent_id: str
    action: int
    subsequence: int | None
    utility: LinearUtility = field(repr=False, compare=False)

    @property
    def label(self) -> tuple:
        return (self.agent_id, self.action, self.subsequence)

    def evaluate(self, view: np.ndarray, active, p) -> float:
        """Value at candidate prediction p given the agent's current view and active set."""
        from .agents import constrained_best_response
        if self.subsequence is not None and not active[self.subsequence]:
            return 0.0
        if not np.any(view):
            return 0.0
        return float(constrained_best_response(self.utility, view, p) == self.action)


def register_events(agents: Sequence[AgentSpec], n_subsequences: int = 0) -> list[Event]:
    """One event per (agent, action), or per (agent, action, subsequence).

    Ordering is agent-major, then action, then subsequence, so the event of
    (n, a, s) sits at ``offset[n] + a * max(1, |S|) + s``.
    """
    events = []
    for n, spec in enumerate(agents):
        for a in range(spec.n_actions):
            if n_subsequences == 0:
                events.append(Event(n, spec.id, a, None, spec.utility))
            else:
                events.extend(Event(n, spec.id, a, s, spec.utility) for s in range(n_subsequences))
    return events


def learning_rate(T: int, d: int, n_events: int) -> float:
    """Exponential-weights rate tuned for 2 d |E| experts and increments in [-1, 1]."""
    return math.sqrt(8.0 * math.log(2 * d * n_events) / T)


@dataclass
class ExpertState:
    """Accumulated signed bias per (event, coordinate); the minus expert mirrors it."""

    G: np.ndarray
    eta: float

    @classmethod
    def initial(cls, n_events: int, d: int, eta: float) -> "ExpertState":
        if eta <= 0:
            raise ConfigurationError("learning rate must be positive")
        return cls(np.zeros((n_events, d)), float(eta))

    @property
    def signed(self) -> np.ndarray:
        """(|E|, d, 2) view with the plus expert first."""
        return np.stack([self.G, -self.G], axis=-1)


def compute_weights(state: ExpertState) -> np.ndarray:
    """Softmax over the 2 d |E| experts, shape (|E|, d, 2)."""
    h = 0.5 * state.eta * state.signed
    w = np.exp(h - h.max())
    return w / w.sum()


def _coefficients(state: ExpertState) -> np.ndarray:
    """q(plus) - q(minus) per (event, coordinate), without building q."""
    h = 0.5 * state.eta * state.G
    m = np.abs(h).max() if h.size else 0.0
    up, down = np.exp(h - m), np.exp(-h - m)
    return (up - down) / (up.sum() + down.sum())


# --- the per-round game ----------------------------------------------------


def _game_rows(points: np.ndarray, event_values: np.ndarray, q: np.ndarray):
    D = q[..., 0] - q[..., 1]
    C = np.asarray(event_values, dtype=float) @ D
    s = np.einsum("ki,ki->k", C, points)
    return C, s


def _inner_max_rows(psi: np.ndarray, C: np.ndarray, s: np.ndarray):
    B = psi @ C
    y = (B < 0).astype(float)
    return float(psi @ s + np.maximum(0.0, -B).sum()), y


def inner_max(psi, points, event_values, q):
    """Worst-case objective of a prediction distribution and the maximising vertex.

    The objective is sum_i A_i - B_i y_i, so the max sets y_i = 1 exactly
    when B_i < 0.
    """
    C, s = _game_rows(np.asarray(points, dtype=float), event_values, q)
    return _inner_max_rows(np.asarray(psi, dtype=float), C, s)


_BASIS_CACHE: dict[tuple[int, int], np.ndarray] = {}
_MAX_BASES = 50_000


def _bases(K: int, d: int) -> np.ndarray | None:
    key = (K, d)
    if key not in _BASIS_CACHE:
        if math.comb(K + 2 * d, d + 1) > _MAX_BASES:
            _BASIS_CACHE[key] = None
        else:
            out = []
            for combo in itertools.combinations(range(K + 2 * d), d + 1):
                if combo[0] >= K:
                    continue
                bounds = [j - K for j in combo if j >= K]
                coords = [b % d for b in bounds]
                if len(set(coords)) != len(coords):
                    continue
                out.append(combo)
            _BASIS_CACHE[key] = np.array(out, dtype=np.intp).reshape(-1, d + 1)
    return _BASIS_CACHE[key]


@dataclass
class GameSolution:
    psi: np.ndarray
    y: np.ndarray
    value: float
    lower: float

    @property
    def gap(self) -> float:
        return self.value - self.lower


def _certify(psi, y, C, s) -> GameSolution:
    upper, _ = _inner_max_rows(psi, C, s)
    lower = float(np.min(s - C @ y))
    return GameSolution(psi, y, upper, min(lower, upper))


def _solve_bases(C: np.ndarray, s: np.ndarray, tol: float = 1e-9) -> GameSolution | None:
    """max z s.t. z + c_k . y <= s_k, 0 <= y <= 1, by enumerating bases.

    Row duals of a primal and dual feasible basis give the minimiser's
    distribution.
    """
    K, d = C.shape
    combos = _bases(K, d)
    if combos is None or combos.shape[0] == 0:
        return None
    n = d + 1
    normals = np.zeros((K + 2 * d, n))
    normals[:K, 0] = 1.0
    normals[:K, 1:] = C
    normals[K:K + d, 1:] = -np.eye(d)
    normals[K + d:, 1:] = np.eye(d)
    rhs = np.concatenate([s, np.zeros(d), np.ones(d)])
    M = normals[combos]
    ok = np.abs(np.linalg.det(M)) > 1e-10
    M[~ok] = np.eye(n)
    x = np.linalg.solve(M, rhs[combos][..., None])[..., 0]
    feasible = ok & (x @ normals.T <= rhs + tol).all(axis=1)
    if not feasible.any():
        return None
    z = x[feasible, 0].max()
    cand = np.flatnonzero(feasible & (x[:, 0] >= z - tol))
    e0 = np.zeros((cand.size, n, 1))
    e0[:, 0, 0] = 1.0
    lam = np.linalg.solve(np.swapaxes(M[cand], 1, 2), e0)[..., 0]
    dual = np.flatnonzero((lam >= -tol).all(axis=1))
    if dual.size == 0:
        return None
    best = dual[0]
    rows = combos[cand[best]]
    psi = np.zeros(K)
    np.add.at(psi, rows[rows < K], np.maximum(lam[best][rows < K], 0.0))
    total = psi.sum()
    if total <= 0:
        return None
    y = np.clip(x[cand[best], 1:], 0.0, 1.0)
    return _certify(psi / total, y, C, s)


def _solve_linprog(C: np.ndarray, s: np.ndarray) -> GameSolution:
    from scipy.optimize import linprog
    K, d = C.shape
    res = linprog(np.r_[-1.0, np.zeros(d)], A_ub=np.hstack([np.ones((K, 1)), C]), b_ub=s,
                  bounds=[(None, None)] + [(0.0, 1.0)] * d, method="highs")
    if res.status != 0:
        raise SolverError(f"linear program failed: {res.message}", math.inf)
    psi = np.maximum(-res.ineqlin.marginals, 0.0)
    psi = psi / psi.sum() if psi.sum() > 0 else np.full(K, 1.0 / K)
    return _certify(psi, np.clip(res.x[1:], 0.0, 1.0), C, s)


def _solve_hedge(C: np.ndarray, s: np.ndarray, epsilon: float) -> GameSolution:
    """Multiplicative weights for the minimiser against best-responding vertices."""
    K, d = C.shape
    vertices = hypercube_vertices(d)
    payoff = s[:, None] - C @ vertices.T
    span = max(payoff.max() - payoff.min(), 1e-300)
    budget = 10 * math.ceil(1.0 / epsilon ** 2)
    rate = math.sqrt(8.0 * math.log(max(K, 2)) / budget)
    loss = np.zeros(K)
    psi_sum = np.zeros(K)
    y_sum = np.zeros(d)
    best = None
    for it in range(1, budget + 1):
        w = np.exp(-rate * (loss - loss.min()) / span)
        psi = w / w.sum()
        _, y = _inner_max_rows(psi, C, s)
        psi_sum += psi
        y_sum += y
        loss += s - C @ y
        if it % 64 == 0 or it == budget:
            sol = _certify(psi_sum / it, y_sum / it, C, s)
            if best is None or sol.gap < best.gap:
                best = sol
            if best.gap <= epsilon:
                return best
    raise SolverError(f"multiplicative weights did not reach gap {epsilon}", best.gap)


SOLVER_METHODS = ("exact", "lp", "mw")


def solve_game(C: np.ndarray, s: np.ndarray, epsilon: float = 1e-3, method: str = "exact") -> GameSolution:
    """Solve min over rows, max over y in [0, 1]^d of psi . (s - C y)."""
    C = np.asarray(C, dtype=float)
    s = np.asarray(s, dtype=float)
    if epsilon <= 0:
        raise ConfigurationError("gap tolerance must be positive")
    if method not in SOLVER_METHODS:
        raise ConfigurationError(f"solver method must be one of {SOLVER_METHODS}")
    K, d = C.shape
    scale = max(np.abs(C).max(initial=0.0), np.abs(s).max(initial=0.0))
    if scale == 0.0:
        psi = np.zeros(K)
        psi[0] = 1.0
        return GameSolution(psi, np.zeros(d), 0.0, 0.0)
    if K == 1:
        # the single row is optimal; its maximising vertex certifies a zero gap
        y = (C[0] < 0).astype(float)
        value = float(s[0] - C[0] @ y)
        return GameSolution(np.ones(1), y, value, value)
    if method == "mw":
        sol = _solve_hedge(C / scale, s / scale, epsilon / scale)
        return _certify(sol.psi, sol.y, C, s)
    sol = None
    if method == "exact":
        combos = _bases(K, d)
        if combos is not None and _kernels.HAVE_NUMBA:
            found, psi, y, upper, lower = _kernels.solve_bases(C, s, combos, 1e-9)
            if found:
                sol = GameSolution(psi, y, upper, lower)
        elif combos is not None:
            sol = _solve_bases(C / scale, s / scale)
            if sol is not None:
                sol = _certify(sol.psi, sol.y, C, s)
    if sol is None or sol.gap > epsilon:
        sol = _solve_linprog(C, s)
    if sol.gap > epsilon:
        raise SolverError("linear program solution failed certification", sol.gap)
    return sol


# --- prediction grid and spec-level operations -----------------------------


class PredictionGrid:
    """Finite set of candidate predictions in [0, 1]^d, without duplicates."""

    def __init__(self, points, descriptor: dict | None = None):
        pts = np.array(points, dtype=float)
        if pts.ndim != 2 or pts.shape[0] == 0:
            raise ConfigurationError("prediction grid must be a non-empty (n, d) array")
        if not np.all(np.isfinite(pts)) or pts.min() < 0.0 or pts.max() > 1.0:
            raise ConfigurationError("prediction grid points must lie in [0, 1]^d")
        if np.unique(pts, axis=0).shape[0] != pts.shape[0]:
            raise ConfigurationError("prediction grid contains duplicate points")
        pts.setflags(write=False)
        self.points = pts
        self.descriptor = descriptor or {"kind": "explicit", "points": pts.tolist()}

    @classmethod
    def uniform(cls, d: int, m: int) -> "PredictionGrid":
        if m < 2:
            raise ConfigurationError("a uniform grid needs at least 2 points per coordinate")
        axis = np.linspace(0.0, 1.0, m)
        pts = np.array(list(itertools.product(axis, repeat=d)), dtype=float)
        return cls(pts, {"kind": "uniform", "m": m})

    @classmethod
    def default(cls, d: int) -> "PredictionGrid":
        if d > 3:
            raise ConfigurationError("d > 3 requires an explicit prediction grid")
        return cls.uniform(d, 9)

    @classmethod
    def from_config(cls, spec: dict | None, d: int) -> "PredictionGrid":
        if not spec:
            return cls.default(d)
        if "points" in spec:
            grid = cls(spec["points"])
            if grid.d != d:
                raise ConfigurationError("explicit grid dimension does not match d")
            return grid
        return cls.uniform(d, int(spec.get("m", 9)))

    @property
    def d(self) -> int:
        return self.points.shape[1]

    def __len__(self) -> int:
        return self.points.shape[0]


def event_table(events: Sequence[Event], views: Sequence[np.ndarray], active, points) -> np.ndarray:
    """Event values at each candidate prediction, shape (n_points, |E|)."""
    points = np.asarray(points, dtype=float)
    out = np.zeros((points.shape[0], len(events)))
    for k, p in enumerate(points):
        for e, event in enumerate(events):
            out[k, e] = event.evaluate(views[event.agent_index], active, p)
    return out


@dataclass
class MinmaxSolution:
    probs: np.ndarray
    value: float
    lower: float
    y: np.ndarray

    @property
    def gap(self) -> float:
        return self.value - self.lower


def solve_minmax(points, event_values, q, epsilon: float = 1e-3, method: str = "exact") -> MinmaxSolution:
    """Minimax distribution over ``points`` with a certified duality gap.

    Points with identical event vectors share their coefficient row, so each
    such group is represented by its cheapest member.
    """
    points = np.asarray(points, dtype=float)
    C, s = _game_rows(points, event_values, q)
    _, group = np.unique(C, axis=0, return_inverse=True)
    group = group.ravel()
    order = np.lexsort((s, group))
    reps = order[np.r_[0, np.flatnonzero(np.diff(group[order])) + 1]]
    sol = solve_game(C[reps], s[reps], epsilon, method)
    probs = np.zeros(points.shape[0])
    probs[reps] = sol.psi
    value, _ = _inner_max_rows(probs, C, s)
    lower = float(np.min(s - C @ sol.y))
    return MinmaxSolution(probs, value, min(lower, value), sol.y)


def sample_prediction(points, probs, rng: np.random.Generator) -> tuple[int, np.ndarray]:
    """Draw a support index and its point from the prediction distribution."""
    probs = np.asarray(probs, dtype=float)
    cdf = np.cumsum(probs)
    k = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
    k = min(k, probs.shape[0] - 1)
    while probs[k] <= 0.0:
        k -= 1
    return k, np.asarray(points)[k]


def record_outcome(state: ExpertState, event_values, points, probs, y) -> ExpertState:
    """Add each expert's bias increment, averaged over the prediction distribution.

    Pass a single point with probability 1 to update on the sampled
    prediction alone.
    """
    event_values = np.atleast_2d(np.asarray(event_values, dtype=float))
    residual = np.atleast_2d(np.asarray(points, dtype=float)) - np.asarray(y, dtype=float)
    weights = np.asarray(probs, dtype=float).reshape(-1)
    state.G += (event_values * weights[:, None]).T @ residual
    return state


def conditional_bias(transcript, events: Sequence[Event]) -> tuple[np.ndarray, np.ndarray]:
    """Per-event l_inf norm of the summed residual and the event's firing count.

    An event fires at round t when the agent's recorded action matches it
    (and its subsequence is active); recorded actions are the agents' best
    responses to the sampled prediction.
    """
    residual = transcript.p - transcript.y
    bias = np.zeros(len(events))
    counts = np.zeros(len(events), dtype=int)
    for e, event in enumerate(events):
        fires = transcript.actions[:, event.agent_index] == event.action
        if event.subsequence is not None:
            fires &= transcript.active[:, event.subsequence]
        counts[e] = int(fires.sum())
        bias[e] = float(np.abs(residual[fires].sum(axis=0)).max()) if counts[e] else 0.0
    return bias, counts


# --- the per-round engine --------------------------------------------------


@dataclass
class PredictionDistribution:
    """One round's forecast: support points, probabilities and the event pattern of each."""

    points: np.ndarray
    probs: np.ndarray
    patterns: np.ndarray
    value: float
    lower: float
    refinements: int
    groups: int

    @property
    def gap(self) -> float:
        return self.value - self.lower


class Forecaster:
    """Decision-calibrated forecaster for a fixed set of agents.

    ``predict`` takes each agent's current best-response set (a mask) and the
    active subsequences; ``update`` takes the revealed outcome. With
    ``refine`` on, the max player's optimal outcome is added as an extra
    candidate while the game value exceeds ``refine_tol``, which removes the
    discretisation error where an outcome mean and a best-response boundary
    fall in the same grid cell. Each round's residual value adds at most that
    much to the bias bound.
    """

    def __init__(self, agents: Sequence[AgentSpec], grid: PredictionGrid, T: int,
                 n_subsequences: int = 0, eta: float | None = None, epsilon: float = 1e-3,
                 method: str = "exact", refine: bool = True, max_refinements: int = 16,
                 refine_tol: float = 1e-4, update: str = "expected"):
        if update not in ("expected", "sampled"):
            raise ConfigurationError("update must be 'expected' or 'sampled'")
        if any(spec.utility.d != grid.d for spec in agents):
            raise ConfigurationError("grid dimension does not match the agents' outcome dimension")
        self.agents = list(agents)
        self.grid = grid
        self.d = grid.d
        self.n_subsequences = n_subsequences
        self.width = max(1, n_subsequences)
        self.events = register_events(self.agents, n_subsequences)
        self.n_events = len(self.events)
        self.offsets = np.cumsum([0] + [spec.n_actions * self.width for spec in self.agents])[:-1]
        self.state = ExpertState.initial(self.n_events, self.d,
                                         eta if eta is not None else learning_rate(T, self.d, self.n_events))
        self.epsilon = epsilon
        self.method = method
        self.refine = refine
        self.max_refinements = max_refinements
        self.refine_tol = refine_tol
        self.update_rule = update
        self._utility_grid = [spec.utility.matrix(grid.points) for spec in self.agents]
        self._cbr_cache: list[dict[bytes, np.ndarray]] = [{} for _ in self.agents]
        self._group_cache: dict[tuple, tuple] = {}
        self._all_subs = np.arange(self.width)

    @property
    def eta(self) -> float:
        return self.state.eta

    def _grid_responses(self, n: int, view: np.ndarray) -> np.ndarray:
        key = view.tobytes()
        hit = self._cbr_cache[n].get(key)
        if hit is None:
            if not view.any():
                hit = np.full(len(self.grid), -1)
            else:
                masked = np.where(view[:, None], self._utility_grid[n], -np.inf)
                hit = masked.argmax(axis=0)
            self._cbr_cache[n][key] = hit
        return hit

    def _groups(self, views):
        """Response groups of the grid for these views (cached per view tuple)."""
        key = tuple(v.tobytes() for v in views)
        hit = self._group_cache.get(key)
        if hit is None:
            responses = np.stack([self._grid_responses(n, v) for n, v in enumerate(views)], axis=1)
            patterns, group = np.unique(responses, axis=0, return_inverse=True)
            group = group.ravel()
            counts = np.bincount(group, minlength=patterns.shape[0])
            members = np.zeros((patterns.shape[0], counts.max()), dtype=np.int64)
            order = np.argsort(group, kind="stable")
            starts = np.r_[0, np.cumsum(counts)[:-1]]
            for g in range(patterns.shape[0]):
                members[g, :counts[g]] = order[starts[g]:starts[g] + counts[g]]
            base = np.where(patterns >= 0, self.offsets[None, :] + patterns * self.width, -1)
            hit = (patterns, base.astype(np.int64), members, counts.astype(np.int64))
            self._group_cache[key] = hit
        return hit

    def _pattern_at(self, p, views) -> np.ndarray:
        from .agents import constrained_best_response
        return np.array([constrained_best_response(spec.utility, views[n], p) if views[n].any() else -1
                         for n, spec in enumerate(self.agents)])

    def predict(self, views: Sequence[np.ndarray], active=None) -> PredictionDistribution:
        if self.n_subsequences:
            if active is None:
                raise ConfigurationError("active subsequences are required")
            active = np.asarray(active, dtype=bool)
            active_idx = np.flatnonzero(active)
        else:
            active = None
            active_idx = self._all_subs
        patterns, base, members, counts = self._groups(views)
        rows_c, reps, rows_s, D = _kernels.group_rows(self.state.G, self.state.eta, base, active_idx,
                                                      self.grid.points, members, counts)
        rows_p, rows_pat = self.grid.points[reps], patterns
        sol = solve_game(rows_c, rows_s, self.epsilon, self.method)
        refinements = 0
        while self.refine and sol.value > self.refine_tol and refinements < self.max_refinements:
            y = sol.y
            if np.any(np.all(rows_p == y, axis=1)):
                break
            pat = self._pattern_at(y, views)
            idx = self.event_indices(pat, active)
            c = D[idx].sum(axis=0)
            rows_c = np.vstack([rows_c, c])
            rows_s = np.r_[rows_s, float(c @ y)]
            rows_p = np.vstack([rows_p, y])
            rows_pat = np.vstack([rows_pat, pat])
            sol = solve_game(rows_c, rows_s, self.epsilon, self.method)
            refinements += 1
        keep = np.flatnonzero(sol.psi > 0.0)
        probs = sol.psi[keep]
        return PredictionDistribution(rows_p[keep], probs / probs.sum(), rows_pat[keep],
                                      sol.value, sol.lower, refinements, patterns.shape[0])

    def event_indices(self, pattern, active=None) -> np.ndarray:
        """Indices of the events that fire for an action pattern."""
        subs = np.arange(self.width) if active is None else np.flatnonzero(active)
        idx = [self.offsets[n] + a * self.width + subs for n, a in enumerate(pattern) if a >= 0]
        return np.concatenate(idx) if idx else np.zeros(0, dtype=int)

    def update(self, dist: PredictionDistribution, y, active=None, sampled: int | None = None) -> None:
        """Fold in the revealed outcome (averaged over the support, or the sampled point)."""
        active = None if not self.n_subsequences else np.asarray(active, dtype=bool)
        y = np.asarray(y, dtype=float)
        if self.update_rule == "sampled":
            if sampled is None:
                raise ConfigurationError("sampled update needs the sampled support index")
            support = [(sampled, 1.0)]
        else:
            support = list(enumerate(dist.probs))
        for k, w in support:
            idx = self.event_indices(dist.patterns[k], active)
            self.state.G[idx] += w * (dist.points[k] - y)

    def entropy(self) -> float:
        q = compute_weights(self.state).ravel()
        q = q[q > 0]
        return float(-(q * np.log(q)).sum())
