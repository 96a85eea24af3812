"""Command line entry point: run, sweep, verify and inspect.

Exit codes: 0 success, 1 a verify criterion failed, 2 configuration error,
3 runtime error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .core import ConfigurationError, Transcript
from .harness import RunConfig, run_simulation, run_sweep, write_outputs

EXIT_OK, EXIT_VERIFY, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3


def _load(args) -> RunConfig:
    if not args.config:
        raise ConfigurationError("--config PATH is required")
    config = RunConfig.load(args.config)
    if args.seed is not None:
        config.seed = args.seed
    if args.diagnostics:
        config.diagnostics = True
    config.validate()
    return config


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def cmd_run(args) -> int:
    config = _load(args)
    result = run_simulation(config)
    out = Path(args.out or config.out_dir or "out")
    write_outputs(result, out, config.save_transcript)
    failed = [b for b in result.body["bounds"] if b["verdict"] == "fail"]
    print(f"wrote {out / 'report.json'} ({len(result.body['bounds'])} bound rows, {len(failed)} failing)")
    return EXIT_OK


def cmd_sweep(args) -> int:
    config = _load(args)
    values = [_parse_value(v) for v in args.values.split(",")]
    seeds = range(args.seeds) if args.seed is None else range(args.seed, args.seed + args.seeds)
    result = run_sweep(config, args.axis, values, list(seeds), args.workers, args.out or "sweep")
    print(f"{len(result.members)} runs, {len(result.failures)} failed; outputs in {args.out or 'sweep'}")
    for member in result.failures:
        print(f"  {args.axis}={member['axis_value']} seed={member['seed']}: {member['error']}")
    return EXIT_OK


def cmd_verify(args) -> int:
    from .acceptance import AcceptanceSuite

    results = AcceptanceSuite(args.suite, print).run()
    passed = sum(r.passed for r in results)
    print(f"{passed}/{len(results)} criteria passed")
    if args.out:
        path = Path(args.out)
        path.mkdir(parents=True, exist_ok=True)
        doc = [{"id": r.id, "passed": r.passed, "summary": r.summary, "elapsed": r.elapsed} for r in results]
        (path / "verify.json").write_text(json.dumps(doc, indent=1))
    return EXIT_OK if passed == len(results) else EXIT_VERIFY


def _inspect_report(doc: dict) -> None:
    body = doc.get("body", doc)
    print(f"run {body.get('name')!r} seed={body.get('seed')} T={body.get('T')} digest={body.get('config_digest', '')[:12]}")
    solver = body.get("solver", {})
    if solver:
        print("solver: " + ", ".join(f"{k}={v}" for k, v in solver.items()))
    print("bounds:")
    for row in body.get("bounds", []):
        measured = "undefined" if row["measured"] is None else f"{row['measured']:.6g}"
        print(f"  {row['verdict']:>4}  {row['name']:<32} {row['agent']:<10} {str(row['subsequence']):<12} "
              f"{measured:>12} <= {row['bound']:.6g}")
    print(f"max event bias: {body.get('events', {}).get('max_bias')}")
    for agent, flags in body.get("flags", {}).items():
        empty = [k for k, v in flags.get("benchmark_empty", {}).items() if v]
        print(f"flags {agent}: truncated_at={flags.get('truncated_at')} empty_benchmarks={empty}")


def _inspect_transcript(path: Path, limit: int) -> None:
    tr = Transcript.load(path)
    print(f"transcript T={tr.T} d={tr.d} agents={tr.agent_ids} subsequences={tr.subsequence_ids} seed={tr.seed}")
    with np.printoptions(precision=4, suppress=True):
        for t in range(1, min(tr.T, limit) + 1):
            print(f"  t={t} p={tr.p[t - 1]} y={tr.y[t - 1]} actions={tr.actions[t - 1].tolist()}")


def cmd_inspect(args) -> int:
    path = Path(args.path)
    if not path.exists():
        raise ConfigurationError(f"{path} does not exist")
    if path.is_dir():
        path = path / "report.json"
    if path.suffix == ".npz":
        _inspect_transcript(path, args.rounds)
    else:
        _inspect_report(json.loads(path.read_text()))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="omnicon", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="TOML run configuration")
        p.add_argument("--seed", type=int, help="override the configured seed")
        p.add_argument("--out", help="output directory")
        p.add_argument("--diagnostics", action="store_true", help="record per-round diagnostics")

    p = sub.add_parser("run", help="run one simulation and write report.json and metrics.csv")
    common(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="run an axis x seeds grid of simulations")
    common(p)
    p.add_argument("--axis", required=True, help="config field, e.g. T or adversary.period")
    p.add_argument("--values", required=True, help="comma-separated axis values")
    p.add_argument("--seeds", type=int, default=1, help="number of seeds per value (starting at --seed or 0)")
    p.add_argument("--workers", type=int, default=1, help="concurrent member runs")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("verify", help="run the acceptance suite")
    p.add_argument("suite", nargs="?", default="fast", choices=("fast", "full"))
    p.add_argument("--out", help="directory for verify.json")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("inspect", help="pretty-print a report or transcript")
    p.add_argument("path", help="report.json, an output directory or transcript.npz")
    p.add_argument("--rounds", type=int, default=10, help="transcript rounds to show")
    p.set_defaults(func=cmd_inspect)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - report and map to the runtime exit code
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
