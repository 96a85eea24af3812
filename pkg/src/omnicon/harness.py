"""Run orchestration: configuration, the round loop, reports and sweeps.

One round, in order: the adversary emits a context and an outcome
distribution; the forecaster (or a baseline source) produces a prediction
distribution and a sampled prediction; each agent best-responds over its
current set; the outcome is drawn; ledgers step; the forecaster updates.
"""

from __future__ import annotations

import csv
import dataclasses
import datetime as _dt
import hashlib
import itertools
import json
import math
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from .agents import EliminationAgent, FeasibilityExhausted
from .core import (AgentSpec, ConfigurationError, ConstraintFamily, InvariantViolation, LinearUtility,
                   Transcript, check_unique_ids, constraint_component_from_dict, validate_utility_range)
from .env import (ADVERSARY_PRESETS, OutcomeDistribution, Prefix, SubsequenceDef, active_subsequences,
                  make_adversary)
from .forecast import Forecaster, PredictionGrid, SOLVER_METHODS, conditional_bias, register_events
from .metrics import (FULL_HORIZON, action_bias, ccv, compute_benchmarks, external_regret,
                      played_constraints, round_sets, swap_regret, theorem_bounds, utility_table)

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

SCHEMA_VERSION = 1
PREDICTION_SOURCES = ("forecaster", "uniform", "flipped")
CSV_COLUMNS = ("agent", "subsequence", "metric", "variant", "value")


# --- configuration ---------------------------------------------------------


def agent_from_dict(spec: dict, d: int) -> AgentSpec:
    try:
        utility = LinearUtility(spec["utility"]["weights"], spec["utility"].get("offsets"))
        components = [constraint_component_from_dict(c, d) for c in spec["constraints"]]
        return AgentSpec(str(spec["id"]), utility, ConstraintFamily(components),
                         spec.get("mode", "realization"))
    except KeyError as exc:
        raise ConfigurationError(f"agent definition is missing {exc}") from None


def subsequence_from_dict(spec: dict) -> SubsequenceDef:
    spec = dict(spec)
    try:
        return SubsequenceDef(str(spec.pop("id")), spec.pop("kind"), spec)
    except KeyError as exc:
        raise ConfigurationError(f"subsequence definition is missing {exc}") from None


@dataclass
class RunConfig:
    """Everything that determines a run. ``out_dir`` and ``diagnostics`` do not affect the trajectory."""

    T: int
    d: int
    agents: list[AgentSpec]
    adversary: str = "benign-iid"
    adversary_params: dict = field(default_factory=dict)
    subsequences: list[SubsequenceDef] = field(default_factory=list)
    grid: dict | None = None
    eta: float | None = None
    epsilon: float = 1e-3
    delta: float = 0.05
    seed: int = 0
    prediction_source: str = "forecaster"
    solver: str = "exact"
    refine: bool = True
    update: str = "expected"
    threshold_rule: str = "checked"
    diagnostics: bool = False
    save_transcript: bool = False
    out_dir: str | None = None
    name: str = "run"

    def validate(self) -> None:
        if not isinstance(self.T, int) or self.T < 1:
            raise ConfigurationError("T must be a positive integer")
        if self.d < 1:
            raise ConfigurationError("d must be at least 1")
        if not 0.0 < self.delta < 1.0:
            raise ConfigurationError("delta must lie in (0, 1)")
        if self.epsilon <= 0:
            raise ConfigurationError("epsilon must be positive")
        if self.adversary not in ADVERSARY_PRESETS:
            raise ConfigurationError(f"unknown adversary preset {self.adversary!r}")
        if self.prediction_source not in PREDICTION_SOURCES:
            raise ConfigurationError(f"prediction_source must be one of {PREDICTION_SOURCES}")
        if self.solver not in SOLVER_METHODS:
            raise ConfigurationError(f"solver must be one of {SOLVER_METHODS}")
        if not self.agents:
            raise ConfigurationError("at least one agent is required")
        check_unique_ids(self.agents)
        for spec in self.agents:
            if spec.utility.d != self.d:
                raise ConfigurationError(f"agent {spec.id}: outcome dimension differs from d")
            problems = validate_utility_range(spec.utility)
            if problems:
                raise ConfigurationError(f"agent {spec.id}: utility leaves [0, 1]: {problems[0]}")
        ids = [s.id for s in self.subsequences]
        if len(set(ids)) != len(ids) or FULL_HORIZON in ids:
            raise ConfigurationError(f"subsequence ids must be unique and not {FULL_HORIZON!r}")

    def to_dict(self) -> dict:
        """Canonical form; the digest is computed from it (paths excluded)."""
        return {
            "T": self.T, "d": self.d, "name": self.name,
            "agents": [a.to_dict() for a in self.agents],
            "adversary": {"preset": self.adversary, "params": self.adversary_params},
            "subsequences": [s.to_dict() for s in self.subsequences],
            "grid": self.grid, "eta": self.eta, "epsilon": self.epsilon, "delta": self.delta,
            "seed": self.seed, "prediction_source": self.prediction_source, "solver": self.solver,
            "refine": self.refine, "update": self.update, "threshold_rule": self.threshold_rule,
            "diagnostics": self.diagnostics,
        }

    def digest(self) -> str:
        return hashlib.sha256(canonical_json(self.to_dict()).encode()).hexdigest()

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        doc = dict(doc)
        try:
            d = int(doc["d"])
            T = int(doc["T"])
        except KeyError as exc:
            raise ConfigurationError(f"config is missing {exc}") from None
        adversary = doc.get("adversary", {})
        if isinstance(adversary, str):
            adversary = {"preset": adversary}
        known = {f.name for f in dataclasses.fields(cls)}
        extra = set(doc) - known - {"agents", "adversary", "subsequences"}
        if extra:
            raise ConfigurationError(f"unknown config keys: {sorted(extra)}")
        kwargs = {k: v for k, v in doc.items() if k in known and k not in
                  ("T", "d", "agents", "adversary", "adversary_params", "subsequences")}
        config = cls(T=T, d=d, agents=[agent_from_dict(a, d) for a in doc.get("agents", [])],
                     adversary=adversary.get("preset", "benign-iid"),
                     adversary_params=adversary.get("params", {}),
                     subsequences=[subsequence_from_dict(s) for s in doc.get("subsequences", [])],
                     **kwargs)
        config.validate()
        return config

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            with open(path, "rb") as fh:
                doc = tomllib.load(fh)
        except (OSError, tomllib.TOMLDecodeError) as exc:
            raise ConfigurationError(f"cannot read config {path}: {exc}") from None
        return cls.from_dict(doc)


def named_stream(seed: int, name: str) -> np.random.Generator:
    """Independent generator for one named purpose, derived from the run seed."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(zlib.crc32(name.encode()),)))


# --- JSON helpers ----------------------------------------------------------


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        value = float(obj)
        if math.isnan(value):
            return None
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return value
    return obj


def canonical_json(obj) -> str:
    return json.dumps(_plain(obj), sort_keys=True, separators=(",", ":"))


# --- the run ---------------------------------------------------------------


@dataclass
class RunResult:
    report: dict
    transcript: Transcript
    rows: list[dict]

    @property
    def body(self) -> dict:
        return self.report["body"]

    def body_bytes(self) -> bytes:
        return canonical_json(self.report["body"]).encode()


def run_simulation(config: RunConfig,
                   adversary_factory: Callable[[int, int, np.random.Generator], Any] | None = None) -> RunResult:
    """Execute T rounds of the protocol, then measure everything."""
    config.validate()
    T, d = config.T, config.d
    rng_adv = named_stream(config.seed, "adversary")
    rng_out = named_stream(config.seed, "outcome")
    rng_pred = named_stream(config.seed, "forecaster")
    if adversary_factory is not None:
        adversary = adversary_factory(T, d, rng_adv)
    else:
        adversary = make_adversary(config.adversary, config.adversary_params, T, d, rng_adv)

    defs = config.subsequences
    n_subs = len(defs)
    width = max(1, n_subs)
    planned = [n if n is not None else T for n in (s.length(T) for s in defs)]
    specs = config.agents
    N = len(specs)
    agents = [EliminationAgent(spec, T, N, config.delta, n_subs, planned, config.threshold_rule)
              for spec in specs]
    forecaster = None
    if config.prediction_source == "forecaster":
        grid = PredictionGrid.from_config(config.grid, d)
        forecaster = Forecaster(specs, grid, T, n_subs, config.eta, config.epsilon, config.solver,
                                config.refine, update=config.update)

    A_max = max(spec.n_actions for spec in specs)
    x = np.zeros((T, adversary.context_dim))
    p = np.zeros((T, d))
    y = np.zeros((T, d))
    actions = np.full((T, N), -1, dtype=np.int64)
    responsible = np.full((T, N), -1, dtype=np.int64)
    active_log = np.zeros((T, n_subs), dtype=bool)
    candidates = np.zeros((T, N, width, A_max), dtype=bool)
    sup_off, sup_pts, sup_pr = [0], [], []
    out_off, out_pts, out_pr = [0], [], []
    exhausted = [None] * N
    empty = [np.zeros(spec.n_actions, dtype=bool) for spec in specs]
    gaps = np.zeros(T)
    values = np.zeros(T)
    refinements = np.zeros(T, dtype=np.int64)
    diag = {"entropy": [], "gap": [], "support": [], "refinements": []} if config.diagnostics else None

    for t in range(1, T + 1):
        i = t - 1
        prefix = Prefix(t, T, x[:i], y[:i], p[:i])
        xt, handle = adversary.next_round(t, prefix)
        x[i] = xt
        active = None
        if n_subs:
            active = active_subsequences(defs, t, xt)
            active_log[i] = active
        views = []
        for n, agent in enumerate(agents):
            candidates[i, n, :, :specs[n].n_actions] = agent.ledger.candidates
            views.append(empty[n] if exhausted[n] else agent.view(active))

        k = 0
        if forecaster is not None:
            dist = forecaster.predict(views, active)
            cdf = np.cumsum(dist.probs)
            k = min(int(np.searchsorted(cdf, rng_pred.random() * cdf[-1], side="right")), len(cdf) - 1)
            pt = dist.points[k]
            support, probs = dist.points, dist.probs
            gaps[i], values[i], refinements[i] = dist.gap, dist.value, dist.refinements
            if diag is not None:
                diag["entropy"].append(forecaster.entropy())
                diag["gap"].append(dist.gap)
                diag["support"].append(len(probs))
                diag["refinements"].append(dist.refinements)
        else:
            pt = rng_pred.random(d) if config.prediction_source == "uniform" else 1.0 - handle.mean()
            support, probs = pt[None, :], np.ones(1)
        p[i] = pt
        sup_pts.append(support)
        sup_pr.append(probs)
        sup_off.append(sup_off[-1] + len(probs))

        for n, agent in enumerate(agents):
            if exhausted[n]:
                continue
            try:
                a = agent.act(pt, views[n])
            except FeasibilityExhausted:
                exhausted[n] = t
                continue
            if forecaster is not None and a != dist.patterns[k][n]:
                raise InvariantViolation(f"round {t}: agent {specs[n].id} played {a}, "
                                         f"forecaster expected {dist.patterns[k][n]}")
            actions[i, n] = a

        yt = handle.sample(rng_out)
        y[i] = yt
        if handle.has_support:
            out_pts.append(handle.points)
            out_pr.append(handle.probs)
            out_off.append(out_off[-1] + len(handle.probs))
        else:
            out_off.append(out_off[-1])

        for n, agent in enumerate(agents):
            if actions[i, n] >= 0:
                responsible[i, n] = agent.observe(int(actions[i, n]), yt, active)
        if forecaster is not None:
            forecaster.update(dist, yt, active, sampled=k)

    transcript = Transcript(
        d=d, agent_ids=[s.id for s in specs], subsequence_ids=[s.id for s in defs],
        x=x, p=p, y=y, actions=actions, responsible=responsible, active=active_log,
        candidates=candidates,
        support_offsets=np.array(sup_off, dtype=np.int64),
        support_points=np.concatenate(sup_pts).reshape(-1, d),
        support_probs=np.concatenate(sup_pr),
        outcome_offsets=np.array(out_off, dtype=np.int64),
        outcome_points=np.concatenate(out_pts).reshape(-1, d) if out_pts else np.zeros((0, d)),
        outcome_probs=np.concatenate(out_pr) if out_pr else np.zeros(0),
        seed=config.seed, config_digest=config.digest(),
        metadata={"prediction_source": config.prediction_source},
    )
    solver = {"max_gap": float(gaps.max()), "max_value": float(values.max()) if forecaster else 0.0,
              "mean_refinements": float(refinements.mean()), "max_refinements": int(refinements.max()),
              "epsilon": config.epsilon,
              "eta": forecaster.eta if forecaster else None,
              "rounds_over_epsilon": int((gaps > config.epsilon).sum())}
    final = [agent.ledger.candidates.copy() for agent in agents]
    report, rows = build_report(config, transcript, agents, final, exhausted, solver, diag)
    result = RunResult(report, transcript, rows)
    if config.out_dir:
        write_outputs(result, Path(config.out_dir), config.save_transcript)
    return result


# --- reporting -------------------------------------------------------------


def _bound_row(name, agent, sub, measured, bound, kind="deterministic", verdict=None):
    if verdict is None:
        verdict = "n/a" if measured is None else ("pass" if measured <= bound else "fail")
    return {"name": name, "agent": agent, "subsequence": sub, "measured": measured, "bound": bound,
            "kind": kind, "verdict": verdict}


def _preservation_failures(views: np.ndarray, bench: np.ndarray, rounds, final=None) -> int:
    """Rounds (plus the post-run state, if given) where the benchmark is not inside the view."""
    missing = (bench[None, :] & ~views).any(axis=1)
    failures = int(missing[rounds].sum())
    if final is not None:
        failures += int((bench & ~final).any())
    return failures


def build_report(config: RunConfig, transcript: Transcript, agents: Sequence[EliminationAgent],
                 final: Sequence[np.ndarray], exhausted, solver: dict, diag) -> tuple[dict, list[dict]]:
    specs = config.agents
    N, T, d = len(specs), transcript.T, transcript.d
    sets = round_sets(transcript)
    has_expectation = bool(np.all(np.diff(transcript.outcome_offsets) > 0))
    bench = compute_benchmarks(transcript, specs, expectation=has_expectation)
    n_subs = len(config.subsequences)
    lengths = [int(m.sum()) for sid, m in sets.items() if sid != FULL_HORIZON]
    planned = [n if n is not None else T for n in (s.length(T) for s in config.subsequences)]
    rows, bounds, flags = [], [], {}

    for n, spec in enumerate(specs):
        A = spec.n_actions
        J = spec.constraints.n_constraints
        L = spec.utility.lipschitz
        U = utility_table(transcript, spec)
        cvals = played_constraints(transcript, n, spec)
        kinds = ["realized"] + (["expectation"] if has_expectation else [])
        flags[spec.id] = {"feasibility_exhausted": exhausted[n] is not None,
                          "truncated_at": exhausted[n], "benchmark_empty": {}}
        union = transcript.union_view(n)[:, :A]
        limits = theorem_bounds(T, A, N, J, config.delta, L, planned or None, d)
        algorithm = agents[n].algorithm
        for sid, mask in sets.items():
            def emit(metric, variant, value):
                rows.append({"agent": spec.id, "subsequence": sid, "metric": metric,
                             "variant": variant, "value": value})
            emit("ccv", "signed", ccv(transcript, n, spec, mask, "signed", cvals))
            emit("ccv", "positive-part", ccv(transcript, n, spec, mask, "positive-part", cvals))
            emit("rounds", "count", int(mask.sum()))
            biases = action_bias(transcript, n, A, mask)
            emit("action_bias", "max", float(biases.max()))
            emit("action_bias", "sum", float(biases.sum()))
            for kind in kinds:
                B = bench.get(spec.id, sid, kind)
                emit("benchmark_size", kind, int(B.sum()))
                flags[spec.id]["benchmark_empty"][f"{sid}/{kind}"] = not B.any()
                ext = external_regret(transcript, n, spec, B, mask, U)
                swp = swap_regret(transcript, n, spec, B, mask, U)
                emit("external_regret", kind, ext.value)
                emit("swap_regret", kind, swp.value)
            # swap regret is controlled by per-action bias whenever the benchmark stays available
            kind = "expectation" if spec.mode == "expectation" and has_expectation else "realized"
            B = bench.get(spec.id, sid, kind)
            swp = swap_regret(transcript, n, spec, B, mask, U).value
            kept = _preservation_failures(union, B, mask) == 0
            bounds.append(_bound_row("swap_regret_vs_bias", spec.id, sid, swp if kept else None,
                                     2.0 * L * float(biases.sum())))

        if algorithm in (1, 2):
            kind = "realized" if algorithm == 1 else "expectation"
            cand = transcript.candidates[:, n, 0, :A]
            signed = ccv(transcript, n, spec, None, "signed", cvals)
            if algorithm == 1:
                B = bench.get(spec.id, FULL_HORIZON, "realized")
                bounds.append(_bound_row("realized_ccv", spec.id, FULL_HORIZON, signed, limits["realized_ccv"]))
                bounds.append(_bound_row("realized_ccv_positive", spec.id, FULL_HORIZON,
                                         ccv(transcript, n, spec, None, "positive-part", cvals),
                                         float(A - int(B.sum()))))
                fails = _preservation_failures(cand, B, slice(None), final[n][0])
                bounds.append(_bound_row("benchmark_preservation", spec.id, FULL_HORIZON, fails, 0))
            else:
                bounds.append(_bound_row("expectation_ccv", spec.id, FULL_HORIZON, signed,
                                         limits["expectation_ccv"]))
                if has_expectation:
                    B = bench.get(spec.id, FULL_HORIZON, "expectation")
                    fails = _preservation_failures(cand, B, slice(None), final[n][0])
                    bounds.append(_bound_row("benchmark_preservation", spec.id, FULL_HORIZON, fails, 0,
                                             kind="high-probability"))
        else:
            for s, sub in enumerate(config.subsequences):
                mask = sets[sub.id]
                signed = ccv(transcript, n, spec, mask, "signed", cvals)
                cand = transcript.candidates[:, n, s, :A]
                if algorithm == 3:
                    bounds.append(_bound_row("subsequence_realized_ccv", spec.id, sub.id, signed,
                                             limits["subsequence_realized_ccv"]))
                    B = bench.get(spec.id, sub.id, "realized")
                    fails = _preservation_failures(cand, B, slice(None), final[n][s])
                    fails += _preservation_failures(union, B, mask)
                    bounds.append(_bound_row("benchmark_preservation", spec.id, sub.id, fails, 0))
                else:
                    bounds.append(_bound_row("subsequence_expectation_ccv", spec.id, sub.id, signed,
                                             limits["subsequence_expectation_ccv"]))
                    if has_expectation:
                        B = bench.get(spec.id, sub.id, "expectation")
                        fails = _preservation_failures(cand, B, slice(None), final[n][s])
                        bounds.append(_bound_row("benchmark_preservation", spec.id, sub.id, fails, 0,
                                                 kind="high-probability"))

    events = register_events(specs, n_subs)
    ev_bias, ev_count = conditional_bias(transcript, events)
    sub_ids = [s.id for s in config.subsequences]
    event_rows = [{"agent": e.agent_id, "action": e.action,
                   "subsequence": None if e.subsequence is None else sub_ids[e.subsequence],
                   "bias": float(b), "count": int(c)} for e, b, c in zip(events, ev_bias, ev_count)]
    body = {
        "schema_version": SCHEMA_VERSION,
        "name": config.name,
        "config_digest": config.digest(),
        "config": config.to_dict(),
        "seed": config.seed,
        "T": T,
        "subsequence_lengths": dict(zip(sub_ids, lengths)),
        "metrics": rows,
        "events": {"rows": event_rows, "max_bias": float(ev_bias.max()) if len(ev_bias) else 0.0,
                   "n_experts": 2 * d * len(events)},
        "solver": solver,
        "bounds": bounds,
        "flags": flags,
        "ledgers": {spec.id: agents[n].ledger.snapshot() for n, spec in enumerate(specs)},
        "transcript_path": "transcript.npz" if config.save_transcript else None,
    }
    if diag is not None:
        body["diagnostics"] = diag
    body = _plain(body)
    header = {"generated_at": _dt.datetime.now(_dt.timezone.utc).isoformat(),
              "body_digest": hashlib.sha256(canonical_json(body).encode()).hexdigest()}
    return {"header": header, "body": body}, rows


def write_outputs(result: RunResult, out_dir: Path, save_transcript: bool = False) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "report.json", "w") as fh:
        json.dump(_plain(result.report), fh, sort_keys=True, indent=1)
    write_csv(result.rows, out_dir / "metrics.csv")
    if save_transcript:
        result.transcript.save(out_dir / "transcript.npz")


def write_csv(rows: Sequence[dict], path, columns=CSV_COLUMNS) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(columns), extrasaction="ignore")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: ("" if row.get(k) is None else row.get(k)) for k in columns})


# --- sweeps ----------------------------------------------------------------


def _with_axis(config: RunConfig, axis: str, value, seed: int) -> RunConfig:
    if axis.startswith("adversary."):
        params = dict(config.adversary_params)
        params[axis.split(".", 1)[1]] = value
        new = dataclasses.replace(config, adversary_params=params)
    elif axis in {f.name for f in dataclasses.fields(RunConfig)}:
        new = dataclasses.replace(config, **{axis: value})
    else:
        raise ConfigurationError(f"unknown sweep axis {axis!r}")
    return dataclasses.replace(new, seed=seed, out_dir=None)


def _sweep_member(args):
    config, axis, value, seed = args
    try:
        result = run_simulation(config)
        return {"axis_value": value, "seed": seed, "report": result.report, "rows": result.rows,
                "error": None}
    except Exception as exc:  # a failed member is recorded, the sweep continues
        return {"axis_value": value, "seed": seed, "report": None, "rows": [],
                "error": f"{type(exc).__name__}: {exc}"}


@dataclass
class SweepResult:
    axis: str
    members: list[dict]
    aggregate: list[dict]

    @property
    def failures(self) -> list[dict]:
        return [m for m in self.members if m["error"]]


def aggregate_rows(members: Sequence[dict]) -> list[dict]:
    """Mean and max of every metric over the seeds of each axis value."""
    groups: dict[tuple, list[float]] = {}
    for m in members:
        for row in m["rows"]:
            if row["value"] is None:
                continue
            key = (m["axis_value"], row["agent"], row["subsequence"], row["metric"], row["variant"])
            groups.setdefault(key, []).append(float(row["value"]))
        if m["report"] is not None:
            key = (m["axis_value"], "*", FULL_HORIZON, "event_bias", "max")
            groups.setdefault(key, []).append(m["report"]["body"]["events"]["max_bias"])
    out = []
    for (value, agent, sub, metric, variant), vals in sorted(groups.items(), key=lambda kv: str(kv[0])):
        out.append({"axis_value": value, "agent": agent, "subsequence": sub, "metric": metric,
                    "variant": variant, "mean": math.fsum(vals) / len(vals), "max": max(vals),
                    "count": len(vals)})
    return out


def run_sweep(template: RunConfig, axis: str, values: Sequence, seeds: Sequence[int],
              workers: int = 1, out_dir: str | None = None) -> SweepResult:
    """Cartesian product of axis values and seeds; members are independent runs."""
    jobs = [(_with_axis(template, axis, v, s), axis, v, s) for v, s in itertools.product(values, seeds)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            members = list(pool.map(_sweep_member, jobs))
    else:
        members = [_sweep_member(job) for job in jobs]
    result = SweepResult(axis, members, aggregate_rows(members))
    if out_dir:
        path = Path(out_dir)
        path.mkdir(parents=True, exist_ok=True)
        for m in members:
            if m["report"] is not None:
                name = f"report_{axis}={m['axis_value']}_seed={m['seed']}.json"
                with open(path / name, "w") as fh:
                    json.dump(m["report"], fh, sort_keys=True, indent=1)
        write_csv(result.aggregate, path / "aggregate.csv",
                  ("axis_value", "agent", "subsequence", "metric", "variant", "mean", "max", "count"))
        with open(path / "failures.json", "w") as fh:
            json.dump([{k: m[k] for k in ("axis_value", "seed", "error")} for m in result.failures], fh,
                      indent=1)
    return result


def loglog_slope(xs: Sequence[float], ys: Sequence[float], floor: float = 1.0) -> float:
    """Least-squares slope of log(max(y, floor)) against log(x)."""
    lx = np.log(np.asarray(xs, dtype=float))
    ly = np.log(np.maximum(np.asarray(ys, dtype=float), floor))
    return float(np.polyfit(lx, ly, 1)[0])
