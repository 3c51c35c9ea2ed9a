"""Experiment configs, report rows, CSV/JSON serialization, and exact merging.

A report row carries the exact sufficient statistics of its estimator, so
partial runs over disjoint replica ranges merge into precisely the report a
monolithic run would have produced.  CSV columns are fixed per experiment
kind, numbers are written in full-precision repr form, and the wall-time
column is excluded from all determinism guarantees.
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Mapping, Sequence

from . import __version__
from . import estimators as est
from . import srw
from .errors import ConfigurationError
from .lattice import Environment, Partition
from .strategies import strategy_by_name

KINDS = ("return-window", "range-stats", "returns", "shape", "strategy",
         "decomposition-test", "srw-reference")

SRW_OPS = ("local-time", "return-window", "range", "returns")

_BASE_COLS = ("kind", "n", "replica_lo", "replica_hi", "replicas_run",
              "replicas_total", "point", "stderr", "ci_lo", "ci_hi",
              "master_seed", "digest")

_EXTRA_COLS = {
    "return-window": ("successes",),
    "range-stats": ("sum_range", "sum_range_sq", "min_range", "max_range",
                    "upper_violations", "lower_violations", "bound_constant"),
    "returns": ("sum_returns", "sum_returns_sq", "sum_late", "sum_late_sq",
                "late_point"),
    "shape": ("h_zero", "sum_ratio", "sum_ratio_sq"),
    "strategy": ("strategy", "d", "sum_range", "sum_range_sq", "mean_over_n"),
    "decomposition-test": ("statistic", "dof", "cells", "inverted"),
    "srw-reference": ("op", "t", "successes", "total", "total_sq",
                      "late_total", "late_total_sq", "scaled_point"),
}


def columns_for(kind: str) -> tuple[str, ...]:
    return _BASE_COLS + _EXTRA_COLS[kind] + ("wall_time_s",)


def _parse_n_grid(raw, fieldname="n_grid") -> tuple[int, ...]:
    if isinstance(raw, Mapping):
        base = int(raw.get("base", 2))
        if "exponents" in raw:
            exps = [int(e) for e in raw["exponents"]]
        elif "lo" in raw and "hi" in raw:
            exps = list(range(int(raw["lo"]), int(raw["hi"]) + 1))
        else:
            raise ConfigurationError(
                "geometric grid needs 'exponents' or 'lo'/'hi'", field=fieldname)
        grid = tuple(base ** e for e in exps)
    elif isinstance(raw, Sequence) and not isinstance(raw, (str, bytes)):
        grid = tuple(int(v) for v in raw)
    else:
        raise ConfigurationError("expected a list or a {base, exponents} object",
                                 field=fieldname)
    if len(grid) == 0:
        raise ConfigurationError("grid is empty", field=fieldname)
    if any(v < 0 for v in grid):
        raise ConfigurationError("grid values must be >= 0", field=fieldname)
    return grid


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    n_grid: tuple[int, ...]
    replicas: int
    master_seed: int
    partition: Partition | None = None
    environment: Environment = field(default_factory=Environment.empty)
    workers: int = 1
    bound_constant: float = 10.0
    d: int | None = None
    strategies: tuple[str, ...] = ("always-first", "round-robin", "uniform-random")
    srw_op: str = "local-time"
    t_grid: tuple[int, ...] | None = None
    label: str = ""

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigurationError(f"unknown kind {self.kind!r}; one of {KINDS}",
                                     field="kind")
        if self.replicas < 1:
            raise ConfigurationError("must be >= 1", field="replicas")
        if self.workers < 1:
            raise ConfigurationError("must be >= 1", field="workers")
        needs_partition = self.kind in ("return-window", "range-stats", "returns",
                                        "decomposition-test")
        if needs_partition and self.partition is None:
            raise ConfigurationError("required for this kind", field="partition")
        if self.kind == "shape" and self.partition is None:
            object.__setattr__(self, "partition", Partition((1, 1)))
        if self.kind == "strategy":
            dval = self.d if self.d is not None else (
                self.partition.d if self.partition else None)
            if dval is None:
                raise ConfigurationError("strategy experiments need 'd'", field="d")
            object.__setattr__(self, "d", int(dval))
            for name in self.strategies:
                strategy_by_name(name)
        if self.kind == "decomposition-test" and self.partition.m != 2:
            raise ConfigurationError("needs exactly two blocks", field="partition")
        if self.kind == "srw-reference":
            if self.srw_op not in SRW_OPS:
                raise ConfigurationError(f"one of {SRW_OPS}", field="srw_op")
            if self.t_grid is not None and len(self.t_grid) != len(self.n_grid):
                raise ConfigurationError("must match n_grid length", field="t_grid")
        if self.partition is not None:
            self.environment.validate_for(self.partition)

    @classmethod
    def from_json_dict(cls, data: Mapping) -> "ExperimentConfig":
        known = {"kind", "partition", "environment", "n_grid", "replicas",
                 "master_seed", "workers", "bound_constant", "d", "strategies",
                 "srw_op", "t_grid", "label"}
        for key in data:
            if key not in known:
                raise ConfigurationError("unknown config field", field=key)
        for key in ("kind", "n_grid", "replicas", "master_seed"):
            if key not in data:
                raise ConfigurationError("missing required field", field=key)
        part = data.get("partition")
        if part is not None:
            part = Partition.parse(part) if isinstance(part, str) else Partition(tuple(part))
        envd = data.get("environment")
        env = Environment.from_json_dict(envd) if envd else Environment.empty()
        tg = data.get("t_grid")
        return cls(
            kind=str(data["kind"]),
            partition=part,
            environment=env,
            n_grid=_parse_n_grid(data["n_grid"]),
            replicas=int(data["replicas"]),
            master_seed=int(data["master_seed"]),
            workers=int(data.get("workers", 1)),
            bound_constant=float(data.get("bound_constant", 10.0)),
            d=None if data.get("d") is None else int(data["d"]),
            strategies=tuple(data.get("strategies",
                                      ("always-first", "round-robin", "uniform-random"))),
            srw_op=str(data.get("srw_op", "local-time")),
            t_grid=None if tg is None else _parse_n_grid(tg, "t_grid"),
            label=str(data.get("label", "")),
        )

    def to_json_dict(self) -> dict:
        out = {
            "kind": self.kind,
            "n_grid": list(self.n_grid),
            "replicas": self.replicas,
            "master_seed": self.master_seed,
            "workers": self.workers,
            "bound_constant": self.bound_constant,
            "environment": self.environment.to_json_dict(),
            "strategies": list(self.strategies),
            "srw_op": self.srw_op,
            "label": self.label,
        }
        if self.partition is not None:
            out["partition"] = list(self.partition.dims)
        if self.d is not None:
            out["d"] = self.d
        if self.t_grid is not None:
            out["t_grid"] = list(self.t_grid)
        return out

    def semantic_dict(self) -> dict:
        """Fields that define the result (workers and label excluded)."""
        out = self.to_json_dict()
        out.pop("workers")
        out.pop("label")
        return out

    @property
    def digest(self) -> str:
        return est.config_digest(self.semantic_dict())


def _fmt(value) -> str:
    if isinstance(value, Fraction):
        return f"{value.numerator}/{value.denominator}"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, bool):
        return "1" if value else "0"
    return str(value)


def render_csv(kind: str, rows: Sequence[Mapping]) -> str:
    cols = columns_for(kind)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(cols)
    for row in rows:
        writer.writerow([_fmt(row.get(c, "")) for c in cols])
    return buf.getvalue()


def _estimate_fields(e: est.Estimate) -> dict:
    return {"point": e.point, "stderr": e.stderr, "ci_lo": e.ci_lo, "ci_hi": e.ci_hi}


def _base_row(config: ExperimentConfig, n: int, lo: int, hi: int) -> dict:
    return {"kind": config.kind, "n": n, "replica_lo": lo, "replica_hi": hi,
            "replicas_run": hi - lo, "replicas_total": config.replicas,
            "master_seed": config.master_seed, "digest": config.digest}


def _grid_rows(config: ExperimentConfig, replica_range, workers: int) -> list[dict]:
    lo, hi = est._normalize_range(config.replicas, replica_range)
    rows = []
    digest = config.digest
    for g, n in enumerate(config.n_grid):
        t0 = time.perf_counter()
        if config.kind == "return-window":
            r = est.estimate_return_window(
                config.partition, config.environment, n, config.replicas,
                config.master_seed, grid_index=g, workers=workers,
                replica_range=(lo, hi), digest=digest)
            row = _base_row(config, n, lo, hi)
            row.update(_estimate_fields(r.estimate))
            row["successes"] = r.successes
            rows.append(row)
        elif config.kind == "range-stats":
            r = est.estimate_range_stats(
                config.partition, n, config.replicas, config.master_seed,
                config.bound_constant, grid_index=g, workers=workers,
                replica_range=(lo, hi), digest=digest)
            row = _base_row(config, n, lo, hi)
            row.update(_estimate_fields(r.ratio_estimate))
            row.update(sum_range=r.sum_range, sum_range_sq=r.sum_range_sq,
                       min_range=r.min_range, max_range=r.max_range,
                       upper_violations=r.upper_violations,
                       lower_violations=r.lower_violations,
                       bound_constant=r.bound_constant)
            rows.append(row)
        elif config.kind == "returns":
            r = est.estimate_returns_to_origin(
                config.partition, n, config.replicas, config.master_seed,
                environment=config.environment, grid_index=g, workers=workers,
                replica_range=(lo, hi), digest=digest)
            row = _base_row(config, n, lo, hi)
            row.update(_estimate_fields(r.mean_estimate))
            row.update(sum_returns=r.sum_returns, sum_returns_sq=r.sum_returns_sq,
                       sum_late=r.sum_late, sum_late_sq=r.sum_late_sq,
                       late_point=r.late_estimate.point,
                       histogram={str(k): v for k, v in r.histogram.items()})
            rows.append(row)
        elif config.kind == "shape":
            r = est.estimate_shape_ratio(
                n, config.replicas, config.master_seed, partition=config.partition,
                environment=config.environment, grid_index=g, workers=workers,
                replica_range=(lo, hi), digest=digest)
            row = _base_row(config, n, lo, hi)
            row.update(_estimate_fields(r.ratio_estimate))
            row.update(h_zero=r.h_zero_replicas, sum_ratio=r.sum_ratio,
                       sum_ratio_sq=r.sum_ratio_sq)
            rows.append(row)
        elif config.kind == "strategy":
            for s_idx, name in enumerate(config.strategies):
                r = est.evaluate_strategy(
                    strategy_by_name(name), config.d, n, config.replicas,
                    config.master_seed, grid_index=g * len(config.strategies) + s_idx,
                    workers=workers, replica_range=(lo, hi), digest=digest)
                row = _base_row(config, n, lo, hi)
                row.update(_estimate_fields(r.mean_estimate))
                row.update(strategy=name, d=config.d, sum_range=r.sum_range,
                           sum_range_sq=r.sum_range_sq, mean_over_n=r.mean_over_n)
                row["wall_time_s"] = time.perf_counter() - t0
                t0 = time.perf_counter()
                rows.append(row)
            continue
        elif config.kind == "decomposition-test":
            r = est.decomposition_consistency_test(
                config.partition, n, config.replicas, config.master_seed,
                workers=workers, replica_range=(lo, hi), digest=digest)
            row = _base_row(config, n, lo, hi)
            row.update(point=r.p_value, stderr=0.0, ci_lo=r.p_value, ci_hi=r.p_value,
                       statistic=r.statistic, dof=r.dof, cells=r.cells,
                       inverted=r.inverted,
                       counts_direct=list(r.counts_direct),
                       counts_recon=list(r.counts_recon))
            rows.append(row)
        elif config.kind == "srw-reference":
            rows.append(_srw_row(config, g, n, lo, hi, workers, digest))
        rows[-1]["wall_time_s"] = time.perf_counter() - t0
    return rows


def _srw_row(config: ExperimentConfig, g: int, n: int, lo: int, hi: int,
             workers: int, digest: str) -> dict:
    op = config.srw_op
    row = _base_row(config, n, lo, hi)
    row.update(op=op, t=0, successes=0, total=0, total_sq=0,
               late_total=0, late_total_sq=0)
    ln = math.log(n) if n > 1 else math.nan
    if op == "local-time":
        r = srw.estimate_max_local_time(n, config.replicas, config.master_seed,
                                        grid_index=g, workers=workers,
                                        replica_range=(lo, hi), digest=digest)
        row.update(_estimate_fields(r.estimate))
        row.update(total=r.total, total_sq=r.total_sq,
                   scaled_point=r.estimate.point / (ln * ln))
    elif op == "return-window":
        t = config.t_grid[g] if config.t_grid is not None else n
        r = srw.estimate_return_window_srw(t, n, config.replicas, config.master_seed,
                                           grid_index=g, workers=workers,
                                           replica_range=(lo, hi), digest=digest)
        row.update(_estimate_fields(r.estimate))
        row.update(t=t, successes=r.successes,
                   scaled_point=r.estimate.point * ln / math.log(ln))
    elif op == "range":
        r = srw.range_size_srw(n, config.replicas, config.master_seed,
                               grid_index=g, workers=workers,
                               replica_range=(lo, hi), digest=digest)
        row.update(_estimate_fields(r.estimate))
        row.update(total=r.total, total_sq=r.total_sq,
                   scaled_point=r.estimate.point * ln / n)
    else:  # returns
        r = srw.estimate_returns_srw(n, config.replicas, config.master_seed,
                                     grid_index=g, workers=workers,
                                     replica_range=(lo, hi), digest=digest)
        row.update(_estimate_fields(r.mean_estimate))
        row.update(total=r.sum_returns, total_sq=r.sum_returns_sq,
                   late_total=r.sum_late, late_total_sq=r.sum_late_sq,
                   scaled_point=r.late_estimate.point,
                   histogram={str(k): v for k, v in r.histogram.items()})
    return row


def run_experiment(config: ExperimentConfig, *, workers: int | None = None,
                   replica_range=None) -> dict:
    """Run all grid points of one experiment; returns the summary dict."""
    w = config.workers if workers is None else workers
    lo, hi = est._normalize_range(config.replicas, replica_range)
    rows = _grid_rows(config, (lo, hi), w)
    return {
        "digest": config.digest,
        "config": config.to_json_dict(),
        "version": __version__,
        "parts": [[lo, hi]],
        "rows": rows,
    }


def _row_json(row: Mapping) -> dict:
    out = {}
    for k, v in row.items():
        if isinstance(v, Fraction):
            out[k] = f"{v.numerator}/{v.denominator}"
        else:
            out[k] = v
    return out


def write_report(summary: Mapping, out_dir) -> tuple[Path, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    kind = summary["config"]["kind"]
    stem = f"{kind}-{summary['digest']}"
    csv_path = out / f"{stem}.csv"
    json_path = out / f"{stem}.summary.json"
    csv_path.write_text(render_csv(kind, summary["rows"]))
    json_path.write_text(json.dumps(
        {**summary, "rows": [_row_json(r) for r in summary["rows"]]},
        indent=2, sort_keys=True, default=str) + "\n")
    return csv_path, json_path


def load_summary(path) -> dict:
    with open(path) as fh:
        return json.load(fh)


def _frac(text) -> Fraction:
    if isinstance(text, str):
        num, den = text.split("/")
        return Fraction(int(num), int(den))
    return Fraction(text)


def _row_key(row: Mapping):
    return (row["kind"], row["n"], row.get("strategy"), row.get("op"), row.get("t"))


def merge_summaries(summaries: Sequence[Mapping]) -> dict:
    """Combine partial reports over disjoint replica ranges into one report.

    Exact statistics merge by addition; estimates are re-finalized, so the
    result matches a monolithic run over the union range bit-for-bit
    (wall times excluded).
    """
    if len(summaries) < 2:
        raise ConfigurationError("need at least two summaries to merge")
    digests = [s["digest"] for s in summaries]
    if len(set(digests)) != 1:
        raise ConfigurationError(
            f"config digests differ: {sorted(set(digests))}", field="digest")
    spans = []
    for s in summaries:
        spans.extend([tuple(p) for p in s["parts"]])
    spans.sort()
    for (a1, b1), (a2, b2) in zip(spans, spans[1:]):
        if a2 < b1:
            raise ConfigurationError(
                f"replica ranges overlap: [{a1},{b1}) and [{a2},{b2})",
                field="replica_range")
    keys = [[_row_key(r) for r in s["rows"]] for s in summaries]
    if any(k != keys[0] for k in keys[1:]):
        raise ConfigurationError("summaries have mismatched row grids", field="rows")
    config = ExperimentConfig.from_json_dict(summaries[0]["config"])
    merged_rows = []
    for idx in range(len(summaries[0]["rows"])):
        parts = [s["rows"][idx] for s in summaries]
        merged_rows.append(_merge_rows(config, parts))
    return {
        "digest": summaries[0]["digest"],
        "config": summaries[0]["config"],
        "version": __version__,
        "parts": [list(s) for s in spans],
        "rows": merged_rows,
    }


def _merge_rows(config: ExperimentConfig, parts: Sequence[Mapping]) -> dict:
    kind = parts[0]["kind"]
    run = sum(p["replicas_run"] for p in parts)
    row = dict(parts[0])
    row["replica_lo"] = min(p["replica_lo"] for p in parts)
    row["replica_hi"] = max(p["replica_hi"] for p in parts)
    row["replicas_run"] = run
    row["wall_time_s"] = sum(p.get("wall_time_s", 0.0) for p in parts)
    seed = row["master_seed"]
    digest = row["digest"]

    def isum(key):
        return sum(int(p[key]) for p in parts)

    if kind == "return-window":
        s = isum("successes")
        row["successes"] = s
        row.update(_estimate_fields(est.bernoulli_estimate(s, run, seed, digest)))
    elif kind == "range-stats":
        row["sum_range"] = isum("sum_range")
        row["sum_range_sq"] = isum("sum_range_sq")
        row["min_range"] = min(int(p["min_range"]) for p in parts)
        row["max_range"] = max(int(p["max_range"]) for p in parts)
        row["upper_violations"] = isum("upper_violations")
        row["lower_violations"] = isum("lower_violations")
        row.update(_estimate_fields(est.mean_estimate(
            row["sum_range"], row["sum_range_sq"], run, seed, digest,
            scale=int(row["n"]))))
    elif kind == "returns":
        for key in ("sum_returns", "sum_returns_sq", "sum_late", "sum_late_sq"):
            row[key] = isum(key)
        hist: dict[str, int] = {}
        for p in parts:
            for k, v in p.get("histogram", {}).items():
                hist[k] = hist.get(k, 0) + int(v)
        row["histogram"] = dict(sorted(hist.items(), key=lambda kv: int(kv[0])))
        row.update(_estimate_fields(est.mean_estimate(
            row["sum_returns"], row["sum_returns_sq"], run, seed, digest)))
        row["late_point"] = est.mean_estimate(
            row["sum_late"], row["sum_late_sq"], run, seed, digest).point
    elif kind == "shape":
        row["h_zero"] = isum("h_zero")
        row["sum_ratio"] = sum((_frac(p["sum_ratio"]) for p in parts), Fraction(0))
        row["sum_ratio_sq"] = sum((_frac(p["sum_ratio_sq"]) for p in parts), Fraction(0))
        eff = run - row["h_zero"]
        if eff > 0:
            e = est.mean_estimate(row["sum_ratio"], row["sum_ratio_sq"], eff,
                                  seed, digest)
        else:
            e = est.Estimate(math.nan, math.nan, math.nan, math.nan, 0, seed, digest)
        row.update(_estimate_fields(e))
    elif kind == "strategy":
        row["sum_range"] = isum("sum_range")
        row["sum_range_sq"] = isum("sum_range_sq")
        e = est.mean_estimate(row["sum_range"], row["sum_range_sq"], run, seed, digest)
        row.update(_estimate_fields(e))
        n = int(row["n"])
        row["mean_over_n"] = e.point / n if n > 0 else math.nan
    elif kind == "decomposition-test":
        ca = [0] * len(parts[0]["counts_direct"])
        cb = [0] * len(parts[0]["counts_recon"])
        for p in parts:
            for i, v in enumerate(p["counts_direct"]):
                ca[i] += int(v)
            for i, v in enumerate(p["counts_recon"]):
                cb[i] += int(v)
        stat, dof, pval, cells = est.chi_square_from_cell_counts(ca, cb)
        row.update(point=pval, stderr=0.0, ci_lo=pval, ci_hi=pval,
                   statistic=stat, dof=dof, cells=cells,
                   counts_direct=ca, counts_recon=cb)
    elif kind == "srw-reference":
        op = row["op"]
        n = int(row["n"])
        ln = math.log(n) if n > 1 else math.nan
        if op == "return-window":
            s = isum("successes")
            row["successes"] = s
            e = est.bernoulli_estimate(s, run, seed, digest)
            row.update(_estimate_fields(e))
            row["scaled_point"] = e.point * ln / math.log(ln)
        else:
            row["total"] = isum("total")
            row["total_sq"] = isum("total_sq")
            if op == "returns":
                hist = {}
                for p in parts:
                    for k, v in p.get("histogram", {}).items():
                        hist[k] = hist.get(k, 0) + int(v)
                row["histogram"] = dict(sorted(hist.items(), key=lambda kv: int(kv[0])))
                row["late_total"] = isum("late_total")
                row["late_total_sq"] = isum("late_total_sq")
            e = est.mean_estimate(row["total"], row["total_sq"], run, seed, digest)
            row.update(_estimate_fields(e))
            if op == "local-time":
                row["scaled_point"] = e.point / (ln * ln)
            elif op == "range":
                row["scaled_point"] = e.point * ln / n
            else:
                row["scaled_point"] = est.mean_estimate(
                    row["late_total"], row["late_total_sq"], run, seed, digest).point
    return row
