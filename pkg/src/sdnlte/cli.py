"""Command-line front end: single runs, sweeps, the local-vs-global comparison
harness and config validation.

Outputs per run land in out_dir/<run_id>/: raw.csv (one row per user per LB
period), summary.json, events.jsonl and manifest.json. All output files are
deterministic for a given config and seed. Exit codes: 0 success, 2 config
error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from .config import (
    ConfigError,
    ExperimentConfig,
    SimConfig,
    config_to_dict,
    parse_config,
)
from .engine import MetricsRecord, RunResult, compare_local_global, run

BASELINES = ("max_rsrq", "qos_aware")


def run_id_of(cfg: SimConfig) -> str:
    parts = [f"sc{cfg.scenario}", cfg.policy, f"u{cfg.num_users}"]
    if cfg.doa is not None:
        parts.append(f"doa{cfg.doa:g}")
    elif cfg.distribution != "uniform":
        parts.append(cfg.distribution)
    parts.append(f"seed{cfg.seed}")
    return "_".join(parts)


def write_raw_csv(result: RunResult, path: Path) -> None:
    metrics = result.metrics
    lb = metrics.lb_period_s
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["period", "user", "kind", "app", "cell", "bits", "rate_bps"])
        periods, users = metrics.bits.shape
        for p in range(periods):
            assoc = result.assoc_history[p]
            for u in range(users):
                bits = metrics.bits[p, u]
                writer.writerow(
                    [p, u, metrics.kinds[u], metrics.apps[u], int(assoc[u]),
                     f"{bits:.3f}", f"{bits / lb:.3f}"]
                )


def write_summary(result: RunResult, path: Path) -> None:
    payload = {
        "run": dataclasses.asdict(result.config),
        "metrics": result.metrics.summary(),
        "handovers": sum(
            1 for e in result.events
            if e.get("type") == "handover_decision" and e.get("reason") == "accepted"
        ),
        "drops": sum(1 for e in result.events if e.get("type") == "flow_dropped"),
    }
    payload["run"]["backhaul"]["qos_weights"] = {
        k: v for k, v in result.config.backhaul.qos_weights
    }
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")


def write_events(result: RunResult, path: Path) -> None:
    with path.open("w") as fh:
        for seq, event in enumerate(result.events):
            fh.write(json.dumps({"seq": seq, **event}, sort_keys=True) + "\n")


def emit_cdf(metrics: MetricsRecord, path: Path) -> None:
    """Sorted (rate, cumulative fraction) pairs of GBR user DL rates as CSV."""
    points = metrics.cdf_points()
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["rate_bps", "cum_fraction"])
        if points:
            writer.writerow([f"{points[0][0]:.3f}", "0.000000"])
        for rate, frac in points:
            writer.writerow([f"{rate:.3f}", f"{frac:.6f}"])


def execute_run(cfg: SimConfig, out_dir: Path) -> tuple[RunResult, Path]:
    result = run(cfg)
    rdir = out_dir / run_id_of(cfg)
    rdir.mkdir(parents=True, exist_ok=True)
    write_raw_csv(result, rdir / "raw.csv")
    write_summary(result, rdir / "summary.json")
    write_events(result, rdir / "events.jsonl")
    emit_cdf(result.metrics, rdir / "cdf.csv")
    (rdir / "manifest.json").write_text(
        json.dumps({"run_id": run_id_of(cfg), "status": "ok",
                    "files": ["raw.csv", "summary.json", "events.jsonl", "cdf.csv"]},
                   sort_keys=True, indent=2) + "\n"
    )
    return result, rdir


def _sweep_summary(results: dict[str, list[RunResult]]) -> list[dict]:
    """Seed-averaged metrics per sweep point with improvement-vs-baseline columns."""
    rows = []
    by_point: dict[tuple, dict[str, list[RunResult]]] = {}
    for _, runs in results.items():
        for res in runs:
            cfg = res.config
            point = (cfg.num_users, cfg.doa, cfg.distribution)
            by_point.setdefault(point, {}).setdefault(cfg.policy, []).append(res)
    for point in sorted(by_point, key=lambda p: (p[0], -1.0 if p[1] is None else p[1], p[2])):
        policies = by_point[point]
        means = {
            pol: {
                "avg_gbr_rate_bps": float(np.mean([r.metrics.avg_gbr_rate_bps() for r in rs])),
                "edge_aggregate_bps": float(np.mean([r.metrics.edge_aggregate_bps() for r in rs])),
                "outage_fraction": float(np.mean([r.metrics.outage_fraction() for r in rs])),
                "system_throughput_bps": float(
                    np.mean([r.metrics.system_throughput_bps() for r in rs])
                ),
            }
            for pol, rs in policies.items()
        }
        for pol in sorted(means):
            row = {
                "num_users": point[0],
                "doa": point[1],
                "distribution": point[2],
                "policy": pol,
                "seeds": len(policies[pol]),
                **means[pol],
            }
            for base in BASELINES:
                if base in means and pol != base:
                    ref = means[base]["avg_gbr_rate_bps"]
                    row[f"gbr_rate_vs_{base}"] = (
                        (means[pol]["avg_gbr_rate_bps"] - ref) / ref if ref > 0 else 0.0
                    )
            rows.append(row)
    return rows


def cmd_run(args: argparse.Namespace) -> int:
    cfg = _load(args)
    point = cfg.base
    if args.seed is not None:
        point = point.replaced(seed=args.seed)
    if args.policy is not None:
        point = point.replaced(policy=args.policy)
    if args.scenario is not None:
        point = point.replaced(scenario=args.scenario)
    out_dir = Path(args.out or cfg.out_dir)
    result, rdir = execute_run(point, out_dir)
    print(f"run {run_id_of(point)} -> {rdir}")
    for key, value in result.metrics.summary().items():
        print(f"  {key}: {value}")
    return 0


def cmd_sweep(args: argparse.Namespace) -> int:
    cfg = _load(args)
    out_dir = Path(args.out or cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    points = cfg.sweep_points()
    results: dict[str, list[RunResult]] = {}
    manifest = {"runs": [], "status": "ok"}
    failures = 0
    for point in points:
        rid = run_id_of(point)
        try:
            result, _ = execute_run(point, out_dir)
            results.setdefault(rid, []).append(result)
            manifest["runs"].append({"run_id": rid, "status": "ok"})
        except Exception as exc:  # preserve partial results with a manifest
            failures += 1
            manifest["runs"].append({"run_id": rid, "status": f"failed: {exc}"})
    rows = _sweep_summary(results)
    with (out_dir / "summary.csv").open("w", newline="") as fh:
        if rows:
            writer = csv.DictWriter(fh, fieldnames=sorted({k for r in rows for k in r}))
            writer.writeheader()
            for row in rows:
                writer.writerow(row)
    (out_dir / "summary.json").write_text(json.dumps(rows, sort_keys=True, indent=2) + "\n")
    if failures:
        manifest["status"] = f"{failures} run(s) failed"
    (out_dir / "manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n")
    print(f"sweep: {len(points)} runs, {len(rows)} summary rows -> {out_dir}")
    return 3 if failures else 0


def cmd_oracle_compare(args: argparse.Namespace) -> int:
    cfg = _load(args)
    point = cfg.base
    if args.scenario is not None:
        point = point.replaced(scenario=args.scenario)
    seeds = list(cfg.sweep.seeds) or [point.seed + i for i in range(args.num_seeds)]
    out = compare_local_global(point, seeds=seeds)
    out_dir = Path(args.out or cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "oracle_compare.json").write_text(json.dumps(out, sort_keys=True, indent=2) + "\n")
    print(f"local/global mean ratio: {out['mean_ratio']:.4f} over {len(out['ratios'])} seed(s)")
    print(f"objective dominance: {out['dominance_ok']} ({out['dominance_checks']} checks)")
    return 0


def cmd_validate(args: argparse.Namespace) -> int:
    cfg = _load(args)
    print(json.dumps(config_to_dict(cfg), sort_keys=True, indent=2))
    return 0


def _load(args: argparse.Namespace) -> ExperimentConfig:
    if args.config:
        return parse_config(args.config)
    return ExperimentConfig()


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sdnlte",
        description="SDN-LTE joint access/backhaul load-balancing simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in (
        ("run", cmd_run),
        ("sweep", cmd_sweep),
        ("oracle-compare", cmd_oracle_compare),
        ("validate-config", cmd_validate),
    ):
        p = sub.add_parser(name)
        p.add_argument("--config", type=str, default=None, help="YAML config path")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--policy", type=str, default=None)
        p.add_argument("--out", type=str, default=None)
        p.add_argument("--scenario", type=int, choices=(1, 2, 3), default=None)
        if name == "oracle-compare":
            p.add_argument("--num-seeds", type=int, default=10)
        p.set_defaults(func=fn)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
