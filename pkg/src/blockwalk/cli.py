"""Command-line front end: single runs, estimator sweeps, merges, reports.

Exit codes: 0 success, 2 configuration error, 3 resource/cutoff error,
4 internal invariant violation.
"""

from __future__ import annotations

import argparse
import json
import sys

from .errors import (BlockwalkError, ConfigurationError, InvariantError,
                     ResourceLimitError)
from .lattice import Environment, Partition
from .reports import (ExperimentConfig, load_summary, merge_summaries,
                      render_csv, run_experiment, write_report)
from .walk import new_walk


def _parse_span(text: str, fieldname: str) -> tuple[int, int]:
    try:
        a, b = text.split(":")
        return int(a), int(b)
    except ValueError as exc:
        raise ConfigurationError(f"expected 'a:b', got {text!r}", field=fieldname) from exc


def _load_config_file(path: str) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigurationError(f"config file not found: {path}", field="config") from exc
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"config is not valid JSON: {exc}", field="config") from exc


def _apply_overrides(data: dict, args) -> dict:
    out = dict(data)
    if args.seed is not None:
        out["master_seed"] = args.seed
    if args.workers is not None:
        out["workers"] = args.workers
    return out


def _emit(summary: dict, args) -> None:
    csv_path, json_path = write_report(summary, args.out)
    if args.format == "json":
        print(json.dumps({"digest": summary["digest"],
                          "csv": str(csv_path), "summary": str(json_path)}))
    else:
        sys.stdout.write(render_csv(summary["config"]["kind"], summary["rows"]))


def _cmd_simulate(args) -> int:
    partition = Partition.parse(args.partition)
    env = (Environment.from_json_dict(json.loads(args.environment))
           if args.environment else Environment.empty())
    state = new_walk(partition, env, args.seed)
    window = _parse_span(args.window, "window") if args.window else None
    summary = state.run(args.steps, window=window,
                        record_fresh=args.record_fresh,
                        record_returns=args.record_returns)
    out = {
        "partition": str(partition),
        "environment": env.to_json_dict(),
        "seed": args.seed,
        "steps": args.steps,
        "position": list(state.position),
        "time": state.time,
        "range_size": state.range_size,
        "fresh_steps": state.fresh_steps,
        "bounding_box": [list(ext) for ext in state.bounding_box()],
    }
    if summary.trajectory is not None:
        out["window"] = list(window)
        out["trajectory"] = summary.trajectory.tolist()
    if summary.fresh_times is not None:
        out["fresh_times"] = summary.fresh_times.tolist()
    if summary.return_times is not None:
        out["return_times"] = summary.return_times.tolist()
    print(json.dumps(out))
    return 0


def _cmd_estimate(args) -> int:
    config = ExperimentConfig.from_json_dict(_apply_overrides(_load_config_file(args.config), args))
    rng = _parse_span(args.replica_range, "replica_range") if args.replica_range else None
    summary = run_experiment(config, replica_range=rng)
    _emit(summary, args)
    return 0


def _diagnostics_preset(seed: int) -> dict:
    return {
        "experiments": [
            {"kind": "shape", "partition": [1, 1],
             "n_grid": {"base": 2, "exponents": [10, 13, 16]},
             "replicas": 400, "master_seed": seed,
             "label": "range box aspect W/H over time"},
            {"kind": "strategy", "d": 2, "n_grid": [2 ** 14],
             "replicas": 400, "master_seed": seed,
             "strategies": ["always-first", "round-robin", "uniform-random"],
             "label": "controlled-walk range leaderboard"},
        ]
    }


def _cmd_sweep(args) -> int:
    if args.preset == "diagnostics":
        data = _diagnostics_preset(args.seed if args.seed is not None else 1)
    elif args.config:
        data = _load_config_file(args.config)
    else:
        raise ConfigurationError("sweep needs --config or --preset", field="config")
    experiments = data.get("experiments")
    if not isinstance(experiments, list) or not experiments:
        raise ConfigurationError("sweep config needs a non-empty 'experiments' list",
                                 field="experiments")
    for entry in experiments:
        config = ExperimentConfig.from_json_dict(_apply_overrides(entry, args))
        summary = run_experiment(config)
        _emit(summary, args)
    return 0


def _cmd_merge(args) -> int:
    merged = merge_summaries([load_summary(p) for p in args.summaries])
    _emit(merged, args)
    return 0


def _cmd_report(args) -> int:
    summary = load_summary(args.summary)
    kind = summary["config"]["kind"]
    print(f"kind: {kind}   digest: {summary['digest']}   "
          f"seed: {summary['config']['master_seed']}")
    cols = ("n", "strategy", "op", "t", "point", "stderr", "ci_lo", "ci_hi",
            "replicas_run")
    present = [c for c in cols if any(c in row for row in summary["rows"])]
    print("  ".join(f"{c:>12}" for c in present))
    for row in summary["rows"]:
        cells = []
        for c in present:
            v = row.get(c, "")
            if isinstance(v, float):
                cells.append(f"{v:12.6g}")
            else:
                cells.append(f"{str(v):>12}")
        print("  ".join(cells))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="blockwalk",
        description="Simulation and estimation toolkit for visit-staged lattice walks")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run one walk and print a JSON summary")
    p.add_argument("--partition", required=True, help="block sizes, e.g. 2,2")
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--environment", help="environment as inline JSON")
    p.add_argument("--window", help="record trajectory for times a:b")
    p.add_argument("--record-fresh", action="store_true")
    p.add_argument("--record-returns", action="store_true")
    p.set_defaults(fn=_cmd_simulate)

    for name, helptext in (("estimate", "run one experiment config"),
                           ("sweep", "run several experiments from one config")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", help="JSON config path")
        p.add_argument("--seed", type=int, help="override master_seed")
        p.add_argument("--workers", type=int, help="override worker count")
        p.add_argument("--out", default="results")
        p.add_argument("--format", choices=("csv", "json"), default="csv")
        if name == "estimate":
            p.add_argument("--replica-range", help="run only replicas a:b")
            p.set_defaults(fn=_cmd_estimate)
        else:
            p.add_argument("--preset", choices=("diagnostics",))
            p.set_defaults(fn=_cmd_sweep)

    p = sub.add_parser("merge", help="combine partial reports (same config digest)")
    p.add_argument("summaries", nargs="+", help="summary.json paths")
    p.add_argument("--out", default="results")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.set_defaults(fn=_cmd_merge)

    p = sub.add_parser("report", help="render a summary.json as a table")
    p.add_argument("summary")
    p.set_defaults(fn=_cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigurationError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except ResourceLimitError as exc:
        print(f"resource error: {exc}", file=sys.stderr)
        return 3
    except (InvariantError, BlockwalkError) as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
