"""``resplit`` command line: single runs, sweeps, the policy study, verify.

Artifacts are plain data and nothing else: ``summary.json`` for single runs,
``sweep.csv`` for grids, both embedding the resolved config and per-row seeds
so every number can be reproduced independently.  Nothing time- or
machine-dependent is written, which is what makes seed-repeated invocations
byte-identical.
"""
from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

from resplit.config import (
    ConfigError,
    ExperimentConfig,
    SweepAxis,
    config_to_dict,
    load_config,
    point_seed,
    sweep_points,
)
from resplit.core import derive_seed
from resplit.mc import run_mc
from resplit.netmodel import simulator_factory
from resplit.policy import run_smc_with_reconfiguration
from resplit.smc import predict_diagnostics, run_smc

__all__ = [
    "main",
    "run_single",
    "run_sweep",
    "write_summary",
    "write_sweep_csv",
]


# --- engine execution -------------------------------------------------------

def _execute(cfg: ExperimentConfig, seed: int) -> dict:
    """Run the configured engine once and return its plain-data result."""
    factory = simulator_factory(cfg.model)
    if cfg.engine == "mc":
        return _mc_dict(run_mc(factory, cfg.mc, seed))
    if cfg.engine == "smc":
        report = run_smc(factory, cfg.levels, cfg.smc, seed)
        return _smc_dict(report, cfg)
    report = run_smc_with_reconfiguration(
        factory, cfg.levels, cfg.smc, cfg.policy_set(), cfg.lookahead, seed
    )
    out = _smc_dict(report.smc, cfg)
    out.update(
        host_level=report.host_level,
        selections=list(report.selections),
        selection_counts=list(report.selection_counts),
        selection_frequencies=list(report.selection_frequencies),
        fallback_count=report.fallback_count,
        degenerate_count=report.degenerate_count,
        inner_cost_steps=report.inner_cost_steps,
        inner_budget_exhausted=report.inner_budget_exhausted,
    )
    return out


def _mc_dict(report) -> dict:
    return {
        "estimate": report.estimate,
        "trajectories": report.trajectories,
        "hits": report.hits,
        "cost_steps_used": report.cost_steps_used,
        "min_resolvable": report.min_resolvable,
        "rel_var_pred": report.rel_var_pred,
    }


def _smc_dict(report, cfg: ExperimentConfig) -> dict:
    labels = cfg.levels.labels
    levels = []
    for rec in report.levels:
        levels.append(
            {
                "level": rec.level,
                "target_threshold": cfg.levels.target(rec.level),
                "target_label": labels[rec.level + 1] if labels else None,
                "attempts": rec.attempts,
                "successes": rec.successes,
                "p_hat": rec.p_hat,
                "cost_steps": rec.cost_steps,
                "stopping_met": rec.stopping_met,
                "next_pool_size": rec.next_pool_size,
            }
        )
    diag = predict_diagnostics(report, cfg.smc)
    diagnostics = None
    if diag.defined:
        diagnostics = {
            "stage_rel_bias": list(diag.stage_rel_bias),
            "stage_rel_var": list(diag.stage_rel_var),
            "rel_bias": diag.rel_bias,
            "rel_var": diag.rel_var,
            "rel_bias_first_order": diag.rel_bias_first_order,
            "rel_var_first_order": diag.rel_var_first_order,
            "classical_rel_var": diag.classical_rel_var,
        }
    return {
        "estimate": report.estimate,
        "resolution_floor": report.resolution_floor,
        "cost_steps_used": report.cost_steps_used,
        "budget_exhausted": report.budget_exhausted,
        "extinction_level": report.extinction_level,
        "levels": levels,
        "diagnostics": diagnostics,
    }


# --- single runs ------------------------------------------------------------

def run_single(cfg: ExperimentConfig) -> dict:
    """Execute ``cfg.replications`` independent runs; return the summary payload."""
    reps = []
    total = 0.0
    positive = 0
    for r in range(cfg.replications):
        seed = derive_seed(cfg.master_seed, "rep", r)
        result = _execute(cfg, seed)
        reps.append({"replication": r, "seed": seed, "result": result})
        total += result["estimate"]
        positive += result["estimate"] > 0.0
    return {
        "schema": "resplit-summary/1",
        "engine": cfg.engine,
        "master_seed": cfg.master_seed,
        "config": config_to_dict(cfg),
        "replications": reps,
        "aggregate": {
            "mean_estimate": total / cfg.replications,
            "positive_fraction": positive / cfg.replications,
        },
    }


def write_summary(payload: dict, out_dir: str | Path) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "summary.json"
    text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    path.write_text(text, encoding="utf-8", newline="\n")
    return path


# --- sweeps -----------------------------------------------------------------

_BASE_COLUMNS = (
    "replication", "seed", "engine", "estimate", "cost_steps_used",
    "budget_exhausted", "extinction_level", "resolution_floor",
    "min_resolvable", "trajectories", "hits",
    "rel_bias_pred", "rel_var_pred", "classical_rel_var",
)
_POLICY_COLUMNS = (
    "host_level", "inner_cost_steps", "fallback_count", "degenerate_count",
)


def _sweep_header(cfg: ExperimentConfig, stage_count: int, freq_width: int) -> list[str]:
    # the axis: prefix keeps swept names (notably 'engine') from colliding
    # with the fixed columns
    header = [f"axis:{axis.name}" for axis in cfg.axes]
    header.extend(_BASE_COLUMNS)
    for k in range(stage_count):
        header.extend(
            (f"p_hat_{k}", f"successes_{k}", f"attempts_{k}",
             f"cost_steps_{k}", f"next_pool_size_{k}")
        )
    if freq_width:
        header.extend(_POLICY_COLUMNS)
        header.extend(f"select_freq_{i}" for i in range(freq_width))
    return header


def _cell(value) -> str:
    if value is None:
        return ""
    if value is True:
        return "true"
    if value is False:
        return "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _sweep_row(task) -> list[str]:
    coords, cfg, rep, seed, stage_count, freq_width = task
    result = _execute(cfg, seed)
    row = [_cell(v) for v in coords.values()]  # insertion order == axis order
    diag = result.get("diagnostics") or {}
    row.extend(
        _cell(v)
        for v in (
            rep, seed, cfg.engine, result["estimate"],
            result["cost_steps_used"], result.get("budget_exhausted"),
            result.get("extinction_level"), result.get("resolution_floor"),
            result.get("min_resolvable"), result.get("trajectories"),
            result.get("hits"), diag.get("rel_bias"),
            diag.get("rel_var") if cfg.engine != "mc" else result.get("rel_var_pred"),
            diag.get("classical_rel_var"),
        )
    )
    levels = result.get("levels", ())
    for k in range(stage_count):
        if k < len(levels):
            rec = levels[k]
            row.extend(
                _cell(v)
                for v in (rec["p_hat"], rec["successes"], rec["attempts"],
                          rec["cost_steps"], rec["next_pool_size"])
            )
        else:
            row.extend([""] * 5)
    if freq_width:
        if cfg.engine == "smc+policy":
            freqs = result["selection_frequencies"]
            row.extend(
                _cell(v)
                for v in (result["host_level"], result["inner_cost_steps"],
                          result["fallback_count"], result["degenerate_count"])
            )
            row.extend(
                _cell(freqs[i]) if i < len(freqs) else "" for i in range(freq_width)
            )
        else:
            row.extend([""] * (len(_POLICY_COLUMNS) + freq_width))
    return row


def run_sweep(cfg: ExperimentConfig, workers: int = 1) -> tuple[list[str], list[list[str]]]:
    """Run the axis cross product and return (header, rows) in grid order."""
    for axis in cfg.axes:
        if axis.name == "levels" or axis.name.startswith("levels."):
            raise ConfigError("levels cannot be swept: column layout must be stable")
    points = list(sweep_points(cfg))
    stage_count = cfg.levels.stage_count
    freq_width = 0
    for _, point_cfg in points:
        if point_cfg.engine == "smc+policy":
            freq_width = max(freq_width, point_cfg.policy.size)

    tasks = []
    for coords, point_cfg in points:
        for rep in range(cfg.replications):
            seed = point_seed(cfg.master_seed, coords, rep)
            tasks.append((coords, point_cfg, rep, seed, stage_count, freq_width))

    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_sweep_row, tasks))
    else:
        rows = [_sweep_row(task) for task in tasks]
    return _sweep_header(cfg, stage_count, freq_width), rows


def write_sweep_csv(header: list[str], rows: list[list[str]], out_dir: str | Path) -> Path:
    import csv

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "sweep.csv"
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)
    return path


# --- command line -----------------------------------------------------------

def _load(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if getattr(args, "seed", None) is not None:
        cfg = replace(cfg, master_seed=args.seed)
    if getattr(args, "out", None) is not None:
        cfg = replace(cfg, output_dir=args.out)
    return cfg


def _out_dir(cfg: ExperimentConfig) -> str:
    return cfg.output_dir if cfg.output_dir is not None else "out"


def _cmd_run(args) -> int:
    cfg = _load(args)
    payload = run_single(cfg)
    path = write_summary(payload, _out_dir(cfg))
    print(f"{path}: engine={cfg.engine} "
          f"mean_estimate={payload['aggregate']['mean_estimate']:.6g} "
          f"({cfg.replications} replication(s))")
    return 0


def _cmd_sweep(args) -> int:
    cfg = _load(args)
    header, rows = run_sweep(cfg, workers=args.workers)
    path = write_sweep_csv(header, rows, _out_dir(cfg))
    print(f"{path}: {len(rows)} rows x {len(header)} columns")
    return 0


def _cmd_policy(args) -> int:
    cfg = _load(args)
    cfg = replace(cfg, engine="smc+policy")
    if not cfg.axes:
        # the reference study: stress spread against policy-set size
        cfg = replace(
            cfg,
            axes=(
                SweepAxis("model.stress_log_sd", (0.45, 0.575, 0.8)),
                SweepAxis("policy.size", (1, 5)),
            ),
        )
    header, rows = run_sweep(cfg, workers=args.workers)
    path = write_sweep_csv(header, rows, _out_dir(cfg))
    print(f"{path}: {len(rows)} rows x {len(header)} columns")
    return 0


def _cmd_verify(args) -> int:
    from resplit.acceptance import run_acceptance

    cfg = _load(args)
    return run_acceptance(Path(_out_dir(cfg)), quick=args.quick)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="resplit",
        description="Rare-event estimation for delay-critical service networks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, workers=False, quick=False):
        p.add_argument("--config", help="JSON experiment config")
        p.add_argument("--seed", type=int, help="override master_seed")
        p.add_argument("--out", help="output directory (default 'out')")
        if workers:
            p.add_argument("--workers", type=int, default=1,
                           help="parallel sweep workers (default 1)")
        if quick:
            p.add_argument("--quick", action="store_true",
                           help="skip the heavy statistical criteria")

    p_run = sub.add_parser("run", help="single run of the configured engine")
    common(p_run)
    p_run.set_defaults(fn=_cmd_run)

    p_sweep = sub.add_parser("sweep", help="cross-product sweep to sweep.csv")
    common(p_sweep, workers=True)
    p_sweep.set_defaults(fn=_cmd_sweep)

    p_policy = sub.add_parser("policy", help="policy study (stress grid x set size)")
    common(p_policy, workers=True)
    p_policy.set_defaults(fn=_cmd_policy)

    p_verify = sub.add_parser("verify", help="run the acceptance checks")
    common(p_verify, quick=True)
    p_verify.set_defaults(fn=_cmd_verify)

    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
