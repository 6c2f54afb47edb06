"""Batch command-line frontend.

Subcommands wire ingestion through efficiency models, statistics, and
regressions into reproducible runs: every run writes its outputs plus a
manifest.json inventorying them with content hashes. Configuration flows
only through flags and an optional JSON config file whose keys mirror the
flags (flags override the file); the single environment override is
BANKFRONTIER_OUT_DIR for the output directory.

Exit codes: 0 success, 2 usage error, 1 data/model error. A failed run
deletes whatever partial outputs it had written.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import pandas as pd

from . import __version__
from .dea import BCC, CCR, SBM_UND_VRS, SBM_VRS, SUPER_SBM_UND_VRS
from .errors import BankfrontierError
from .panel import SyntheticConfig, generate_synthetic, load_panel, write_panel
from .report import (
    CORR_VARIABLES,
    CSV_FLOAT_FORMAT,
    DESCRIBE_VARIABLES,
    RunRecorder,
    analysis_frame,
    attach_efficiency,
    build_bundle,
    dea_scores,
    efficiency_table,
    hash_file,
    regression_grid,
    render_corr,
    render_describe,
    render_regression_table,
    render_report,
    sfa_efficiency,
)
from .sfa import FitOptions

ENV_OUT_DIR = "BANKFRONTIER_OUT_DIR"

MODEL_NAMES = {
    "ccr": CCR,
    "bcc": BCC,
    "sbm": SBM_VRS,
    "sbm-und": SBM_UND_VRS,
    "super-sbm-und": SUPER_SBM_UND_VRS,
}


class UsageError(Exception):
    """Bad flag/config combination: exits 2 like an argparse error."""


DEFAULTS: dict[str, dict] = {
    "describe": {"vars": None},
    "dea": {"model": "super-sbm-und", "rts": None, "scope": "per-year",
            "out": "scores.csv", "shift_nonpositive": False},
    "sfa": {"distribution": "half-normal", "no_trend": False},
    "corr": {"vars": None},
    "regress": {"spec": "main"},
    "synth": {"banks": 42, "years": 18, "seed": 42, "start_year": 2006,
              "missingness": 0.0, "sigma_v": 0.12, "sigma_u": 0.22,
              "out": "synth_panel.csv"},
    "report": {"spec": "full"},
}

COMMON_KEYS = ("input", "out_dir", "config")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bankfrontier",
        description="Bank efficiency frontiers and valuation regressions.")
    parser.add_argument("--version", action="version",
                        version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(sp, needs_input=True):
        sp.add_argument("--input", help="panel CSV path")
        sp.add_argument("--out-dir", dest="out_dir",
                        help="output directory (default: current directory)")
        sp.add_argument("--config", help="JSON config file mirroring the flags")

    sp = sub.add_parser("describe", help="descriptive statistics table")
    common(sp)
    sp.add_argument("--vars", help="comma-separated variable list")

    sp = sub.add_parser("dea", help="DEA efficiency scores")
    common(sp)
    sp.add_argument("--model", choices=sorted(MODEL_NAMES))
    sp.add_argument("--rts", choices=["vrs", "crs"])
    sp.add_argument("--scope", choices=["per-year", "pooled"])
    sp.add_argument("--out", help="scores file name (default scores.csv)")
    sp.add_argument("--shift-nonpositive", dest="shift_nonpositive",
                    action="store_const", const=True,
                    help="shift non-positive columns before scoring")

    sp = sub.add_parser("sfa", help="stochastic frontier fit and efficiency")
    common(sp)
    sp.add_argument("--distribution", choices=["half-normal", "truncated-normal"])
    sp.add_argument("--no-trend", dest="no_trend", action="store_const",
                    const=True, help="omit the year trend from the frontier")

    sp = sub.add_parser("corr", help="correlation matrix with stars")
    common(sp)
    sp.add_argument("--vars", help="comma-separated variable list")

    sp = sub.add_parser("regress", help="valuation regression table")
    common(sp)
    sp.add_argument("--spec", choices=["main", "lead", "diff"])

    sp = sub.add_parser("synth", help="generate a synthetic panel")
    common(sp, needs_input=False)
    sp.add_argument("--banks", type=int)
    sp.add_argument("--years", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--start-year", dest="start_year", type=int)
    sp.add_argument("--missingness", type=float)
    sp.add_argument("--sigma-v", dest="sigma_v", type=float)
    sp.add_argument("--sigma-u", dest="sigma_u", type=float)
    sp.add_argument("--out", help="panel file name (default synth_panel.csv)")

    sp = sub.add_parser("report", help="full table and series bundle")
    common(sp)
    sp.add_argument("--spec", choices=["full"])

    return parser


def resolve_config(args: argparse.Namespace) -> dict:
    """Merge defaults, config-file values, and flags (flags win)."""
    command = args.command
    merged = dict(DEFAULTS[command])
    merged["input"] = None

    file_cfg = {}
    if args.config:
        try:
            file_cfg = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise UsageError(f"config file is not valid JSON: {exc}") from None
        if not isinstance(file_cfg, dict):
            raise UsageError("config file must hold a JSON object")
        known = set(merged) | {"out_dir"}
        unknown = sorted(set(file_cfg) - known)
        if unknown:
            raise UsageError(f"unknown config key(s): {', '.join(unknown)}")

    for key in merged:
        if key in file_cfg and file_cfg[key] is not None:
            merged[key] = file_cfg[key]
    for key, value in vars(args).items():
        if key in merged and value is not None:
            merged[key] = value

    out_dir = args.out_dir or os.environ.get(ENV_OUT_DIR) \
        or file_cfg.get("out_dir") or "."
    merged["out_dir"] = out_dir
    merged["config_file"] = args.config

    if command != "synth" and not merged["input"]:
        raise UsageError(f"{command} requires --input")
    _validate(command, merged)
    return merged


def _validate(command: str, cfg: dict) -> None:
    def _choice(key, allowed):
        if cfg.get(key) is not None and cfg[key] not in allowed:
            raise UsageError(
                f"{key} must be one of {', '.join(allowed)}; got {cfg[key]!r}")

    if command == "dea":
        _choice("model", sorted(MODEL_NAMES))
        _choice("scope", ("per-year", "pooled"))
        _choice("rts", ("vrs", "crs"))
        implied = "crs" if cfg["model"] == "ccr" else "vrs"
        if cfg["rts"] is not None and cfg["rts"] != implied:
            raise UsageError(
                f"model {cfg['model']} runs under {implied}, not {cfg['rts']}")
    elif command == "sfa":
        _choice("distribution", ("half-normal", "truncated-normal"))
    elif command == "regress":
        _choice("spec", ("main", "lead", "diff"))
    elif command == "report":
        _choice("spec", ("full",))
    elif command == "synth":
        for key in ("banks", "years", "seed", "start_year"):
            if not isinstance(cfg[key], int):
                raise UsageError(f"{key} must be an integer")


def _parse_vars(value) -> tuple[str, ...] | None:
    if value is None:
        return None
    if isinstance(value, str):
        parts = tuple(v.strip() for v in value.split(",") if v.strip())
    else:
        parts = tuple(value)
    if not parts:
        raise UsageError("--vars must name at least one variable")
    return parts


def _input_hashes(cfg: dict) -> dict:
    hashes = {}
    if cfg.get("input"):
        hashes[Path(cfg["input"]).name] = hash_file(cfg["input"])
    if cfg.get("config_file"):
        hashes[Path(cfg["config_file"]).name] = hash_file(cfg["config_file"])
    return hashes


def _snapshot(cfg: dict) -> dict:
    return {k: (list(v) if isinstance(v, tuple) else v) for k, v in cfg.items()}


# ---------------------------------------------------------------------------
# subcommand handlers


def _cmd_describe(cfg: dict, recorder: RunRecorder) -> None:
    with recorder.step("load"):
        frame = analysis_frame(load_panel(cfg["input"]))
    variables = _parse_vars(cfg["vars"]) or tuple(
        v for v in DESCRIBE_VARIABLES if v in frame.columns)
    with recorder.step("describe"):
        md, csv = render_describe(frame, variables)
        recorder.write_text("describe.md", md)
        recorder.write_frame("describe.csv", csv)


def _cmd_dea(cfg: dict, recorder: RunRecorder) -> None:
    with recorder.step("load"):
        panel = load_panel(cfg["input"])
    model = MODEL_NAMES[cfg["model"]]
    scope = cfg["scope"].replace("-", "_")
    with recorder.step("dea"):
        frame = dea_scores(panel, model, scope=scope,
                           shift_nonpositive=bool(cfg["shift_nonpositive"]))
    from .dea import INFEASIBLE_SUPER
    for _, row in frame[frame["status"] == INFEASIBLE_SUPER].iterrows():
        recorder.warn(f"super-efficiency infeasible for {row['dmu']} "
                      f"in {row['year']}; assigned cohort max + 1")
    recorder.write_frame(cfg["out"], frame)


def _cmd_sfa(cfg: dict, recorder: RunRecorder) -> None:
    with recorder.step("load"):
        panel = load_panel(cfg["input"])
    options = FitOptions(distribution=cfg["distribution"].replace("-", "_"))
    with recorder.step("sfa"):
        from .sfa import build_frontier_design, fit_frontier

        design = build_frontier_design(panel, include_trend=not cfg["no_trend"])
        fit = fit_frontier(design, options)
        table = design.obs_keys.copy()
        table["sfa_eff"] = fit.efficiency
    if not fit.converged:
        recorder.warn(f"frontier fit did not meet the gradient tolerance "
                      f"(grad_norm={fit.grad_norm:.3g})")
    recorder.write_json("sfa_fit.json", {
        "distribution": cfg["distribution"].replace("-", "_"),
        "beta": {name: float(b) for name, b in zip(fit.term_names, fit.beta)},
        "sigma_sq": fit.sigma_sq,
        "gamma": fit.gamma,
        "mu": fit.mu,
        "log_likelihood": fit.log_likelihood,
        "converged": fit.converged,
        "n_obs": fit.n_obs,
        "iterations": fit.iterations,
        "grad_norm": fit.grad_norm,
        "start_gamma": fit.start_gamma,
    })
    recorder.write_frame("efficiency.csv", table)


def _cmd_corr(cfg: dict, recorder: RunRecorder) -> None:
    with recorder.step("load"):
        frame = analysis_frame(load_panel(cfg["input"]))
    variables = _parse_vars(cfg["vars"]) or tuple(
        v for v in CORR_VARIABLES if v in frame.columns)
    missing = [v for v in variables if v not in frame.columns]
    if missing:
        from .errors import SchemaError

        raise SchemaError(f"unknown variable(s): {', '.join(missing)}")
    with recorder.step("corr"):
        md, csv = render_corr(frame, variables)
        recorder.write_text("corr_table.md", md)
        recorder.write_frame("corr_table.csv", csv)


def _cmd_regress(cfg: dict, recorder: RunRecorder) -> None:
    with recorder.step("load"):
        panel = load_panel(cfg["input"])
    bundle = build_bundle(panel, recorder=recorder)
    reg_panel = attach_efficiency(panel, efficiency_table(bundle))
    with recorder.step("regress"):
        columns = regression_grid(reg_panel, cfg["spec"])
        md, csv = render_regression_table(columns, cfg["spec"])
    for col in columns:
        for warning in col.result.warnings:
            recorder.warn(f"regress_{cfg['spec']} {col.label}: {warning}")
    recorder.write_text(f"regress_{cfg['spec']}.md", md)
    recorder.write_frame(f"regress_{cfg['spec']}.csv", csv)


def _cmd_synth(cfg: dict, recorder: RunRecorder) -> None:
    config = SyntheticConfig(
        n_banks=cfg["banks"], n_years=cfg["years"], seed=cfg["seed"],
        start_year=cfg["start_year"], missingness=cfg["missingness"],
        sigma_v=cfg["sigma_v"], sigma_u=cfg["sigma_u"],
        efficient_core=min(4, cfg["banks"]))
    with recorder.step("synth"):
        panel = generate_synthetic(config)
    out_path = recorder.track(cfg["out"])
    write_panel(panel, out_path)
    truth_name = Path(cfg["out"]).stem + "_truth.csv"
    truth_path = recorder.track(truth_name)
    panel.truth.to_csv(truth_path, index=False, float_format="%.15g",
                       lineterminator="\n")


def _cmd_report(cfg: dict, recorder: RunRecorder) -> None:
    with recorder.step("load"):
        panel = load_panel(cfg["input"])
    bundle = build_bundle(panel, recorder=recorder)
    render_report(bundle, recorder,
                  require=("dea", "sfa", "corr", "regress", "series"))


HANDLERS = {
    "describe": _cmd_describe,
    "dea": _cmd_dea,
    "sfa": _cmd_sfa,
    "corr": _cmd_corr,
    "regress": _cmd_regress,
    "synth": _cmd_synth,
    "report": _cmd_report,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    recorder = None
    try:
        cfg = resolve_config(args)
        recorder = RunRecorder(cfg["out_dir"])
        HANDLERS[args.command](cfg, recorder)
        seed = cfg.get("seed")
        recorder.write_manifest(args.command, _snapshot(cfg),
                                _input_hashes(cfg), seed=seed)
        return 0
    except UsageError as exc:
        if recorder is not None:
            recorder.cleanup()
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except (BankfrontierError, FileNotFoundError) as exc:
        if recorder is not None:
            recorder.cleanup()
        step = args.command
        print(f"error in {step}: {exc}", file=sys.stderr)
        return 1
    except Exception:
        if recorder is not None:
            recorder.cleanup()
        raise


if __name__ == "__main__":
    sys.exit(main())
