"""Pipeline assembly and report rendering.

Wires the panel through both efficiency models, merges the scores back
onto the bank-year rows, and renders the study tables: descriptives,
a starred correlation matrix, the three regression tables (levels, lead,
first differences), and per-year mean series for each efficiency measure
and Tobin's Q. All outputs are data files; figures are series CSVs.
"""

from __future__ import annotations

import hashlib
import json
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from . import __version__
from .dea import (
    INFEASIBLE_SUPER,
    SBM_UND_VRS,
    SUPER_SBM_UND_VRS,
    build_dea_problem,
    default_model_spec,
    score_all,
    scores_to_frame,
)
from .errors import DataError, SchemaError
from .panel import PanelDataset, derive_variables
from .regress import (
    COLUMN_ALIASES,
    RegressionResult,
    RegressionSpec,
    first_difference_regression,
    panel_regression,
)
from .sfa import FitOptions, SfaFit, build_frontier_design, fit_frontier
from .stats import correlation_matrix, describe

DESCRIBE_VARIABLES = (
    "tobinsq", "supereff", "sbmeff", "sfa_eff", "size", "roa", "levr",
    "nplratio", "growth", "niiratio", "tenclient", "tenown", "gdpg", "spread",
)
CORR_VARIABLES = (
    "tobinsq", "supereff", "sfa_eff", "size", "roa", "levr",
    "nplratio", "growth", "niiratio",
)
SERIES_VARIABLES = ("supereff", "sbmeff", "sfa_eff", "tobinsq")

CSV_FLOAT_FORMAT = "%.12g"


# ---------------------------------------------------------------------------
# output plumbing


class RunRecorder:
    """Collects output files, per-step timings, and warnings for one run.

    Every write lands under ``out_dir`` and is remembered so that a failed
    run can delete its partial outputs and a finished run can inventory
    them with content hashes.
    """

    def __init__(self, out_dir):
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.timings: dict[str, float] = {}
        self.written: list[Path] = []
        self.warnings: list[str] = []

    @contextmanager
    def step(self, name: str):
        start = time.perf_counter()
        try:
            yield
        finally:
            self.timings[name] = self.timings.get(name, 0.0) + (
                time.perf_counter() - start
            )

    def warn(self, message: str) -> None:
        self.warnings.append(message)

    def track(self, name: str) -> Path:
        # tracked before writing so a mid-write crash still gets cleaned up
        path = self.out_dir / name
        if path not in self.written:
            self.written.append(path)
        return path

    def write_text(self, name: str, text: str) -> Path:
        path = self.track(name)
        path.write_text(text, encoding="utf-8")
        return path

    def write_frame(self, name: str, frame: pd.DataFrame) -> Path:
        path = self.track(name)
        frame.to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT,
                     lineterminator="\n")
        return path

    def write_json(self, name: str, payload: dict) -> Path:
        return self.write_text(
            name, json.dumps(payload, sort_keys=True, indent=2) + "\n")

    def cleanup(self) -> None:
        for path in self.written:
            try:
                path.unlink()
            except FileNotFoundError:
                pass
        self.written.clear()

    def output_hashes(self) -> dict[str, str]:
        inventory = {}
        for path in self.written:
            digest = hashlib.sha256(path.read_bytes()).hexdigest()
            inventory[path.name] = f"sha256:{digest}"
        return dict(sorted(inventory.items()))

    def manifest(self, command: str, config: dict,
                 input_hashes: dict, seed=None) -> dict:
        return {
            "tool": "bankfrontier",
            "version": __version__,
            "command": command,
            "config": config,
            "input_hashes": dict(sorted(input_hashes.items())),
            "seed": seed,
            "timings_seconds": {k: round(v, 6) for k, v in self.timings.items()},
            "outputs": self.output_hashes(),
            "warnings": list(self.warnings),
        }

    def write_manifest(self, command: str, config: dict,
                       input_hashes: dict, seed=None) -> Path:
        # inventory is computed before the manifest itself is tracked, so
        # the manifest lists every output but not itself
        payload = self.manifest(command, config, input_hashes, seed)
        path = self.track("manifest.json")
        path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n",
                        encoding="utf-8")
        return path


def hash_file(path) -> str:
    return "sha256:" + hashlib.sha256(Path(path).read_bytes()).hexdigest()


# ---------------------------------------------------------------------------
# pipeline steps


def analysis_frame(panel: PanelDataset) -> pd.DataFrame:
    """Derived panel frame with the regression-label aliases attached
    (tenclient, tenown, gdpg, roe) so tables can use one naming scheme."""
    frame = derive_variables(panel).frame.copy()
    for label, column in COLUMN_ALIASES.items():
        if label not in frame.columns and column in frame.columns:
            frame[label] = frame[column]
    if "roe" not in frame.columns:
        frame["roe"] = frame["net_profit"] / frame["book_equity"]
    return frame


def dea_scores(panel: PanelDataset, model: str, scope: str = "per_year",
               shift_nonpositive: bool = False) -> pd.DataFrame:
    """Long score table for one DEA model, looping per-year frontiers."""
    spec = default_model_spec(model, frontier_scope=scope)
    if scope == "pooled":
        problem = build_dea_problem(panel, spec,
                                    shift_nonpositive=shift_nonpositive)
        return scores_to_frame(score_all(problem, spec), problem)
    frames = []
    for year in sorted(panel.frame["year"].unique()):
        problem = build_dea_problem(panel, spec, year=int(year),
                                    shift_nonpositive=shift_nonpositive)
        frames.append(scores_to_frame(score_all(problem, spec), problem))
    out = pd.concat(frames, ignore_index=True)
    return out.sort_values(["year", "dmu"], kind="mergesort").reset_index(drop=True)


def sfa_efficiency(panel: PanelDataset,
                   options: FitOptions = FitOptions()) -> tuple[pd.DataFrame, SfaFit]:
    """Frontier fit plus a (bank_id, year, sfa_eff) table."""
    design = build_frontier_design(panel)
    fit = fit_frontier(design, options)
    table = design.obs_keys.copy()
    table["sfa_eff"] = fit.efficiency
    return table, fit


@dataclass
class ReportBundle:
    """Everything render_report can draw on. Partial bundles are allowed:
    missing pieces skip their tables with a recorded notice unless listed
    in ``require``."""

    panel: PanelDataset
    scores: pd.DataFrame | None = None      # long DEA scores with model column
    sfa_table: pd.DataFrame | None = None   # bank_id, year, sfa_eff
    sfa_fit: SfaFit | None = None


def build_bundle(panel: PanelDataset,
                 sfa_options: FitOptions = FitOptions(),
                 recorder: RunRecorder | None = None) -> ReportBundle:
    """Full pipeline: both DEA models per year, then the frontier fit."""

    @contextmanager
    def _step(name):
        if recorder is None:
            yield
        else:
            with recorder.step(name):
                yield

    with _step("dea"):
        sbm = dea_scores(panel, SBM_UND_VRS)
        super_sbm = dea_scores(panel, SUPER_SBM_UND_VRS)
        scores = pd.concat([sbm, super_sbm], ignore_index=True)
    with _step("sfa"):
        sfa_table, fit = sfa_efficiency(panel, sfa_options)
    if recorder is not None:
        infeasible = super_sbm[super_sbm["status"] == INFEASIBLE_SUPER]
        for _, row in infeasible.iterrows():
            recorder.warn(
                f"super-efficiency infeasible for {row['dmu']} in {row['year']}; "
                "assigned cohort max + 1")
        if not fit.converged:
            recorder.warn(
                f"frontier fit did not meet the gradient tolerance "
                f"(grad_norm={fit.grad_norm:.3g})")
    return ReportBundle(panel=panel, scores=scores,
                        sfa_table=sfa_table, sfa_fit=fit)


def efficiency_table(bundle: ReportBundle) -> pd.DataFrame:
    """Per-(bank, year) wide table of the efficiency measures."""
    frame = bundle.panel.frame[["bank_id", "year"]].copy()
    if bundle.scores is not None:
        for model, column in ((SBM_UND_VRS, "sbmeff"),
                              (SUPER_SBM_UND_VRS, "supereff")):
            rows = bundle.scores[bundle.scores["model"] == model]
            if rows.empty:
                continue
            sub = rows[["dmu", "year", "value"]].rename(
                columns={"dmu": "bank_id", "value": column})
            if model == SUPER_SBM_UND_VRS:
                sub = sub.join(rows["status"].rename("supereff_status"))
            frame = frame.merge(sub, on=["bank_id", "year"], how="left")
    if bundle.sfa_table is not None:
        frame = frame.merge(bundle.sfa_table, on=["bank_id", "year"], how="left")
    return frame.sort_values(["bank_id", "year"], kind="mergesort").reset_index(drop=True)


def attach_efficiency(panel: PanelDataset, efficiency: pd.DataFrame) -> PanelDataset:
    merged = panel.frame.merge(
        efficiency.drop(columns=[c for c in ("supereff_status",)
                                 if c in efficiency.columns]),
        on=["bank_id", "year"], how="left")
    return panel.with_frame(merged)


# ---------------------------------------------------------------------------
# renderers


def _fmt(value, pattern="%.4f") -> str:
    if value is None or (isinstance(value, float) and not np.isfinite(value)):
        return ""
    return pattern % value


def render_describe(frame: pd.DataFrame, variables) -> tuple[str, pd.DataFrame]:
    rows = describe(frame, variables)
    table = pd.DataFrame([{
        "variable": r.variable, "n": r.n, "mean": r.mean, "sd": r.sd,
        "min": r.minimum, "p25": r.p25, "p75": r.p75, "max": r.maximum,
    } for r in rows])
    lines = ["| Variable | N | Mean | SD | Min | P25 | P75 | Max |",
             "|---|---|---|---|---|---|---|---|"]
    for r in rows:
        lines.append(
            f"| {r.variable} | {r.n} | {_fmt(r.mean)} | {_fmt(r.sd)} | "
            f"{_fmt(r.minimum)} | {_fmt(r.p25)} | {_fmt(r.p75)} | {_fmt(r.maximum)} |")
    return "\n".join(lines) + "\n", table


def render_corr(frame: pd.DataFrame, variables) -> tuple[str, pd.DataFrame]:
    cells = correlation_matrix(frame[list(variables)])
    header = "| | " + " | ".join(variables) + " |"
    lines = [header, "|" + "---|" * (len(variables) + 1)]
    records = []
    for a in variables:
        row = [a]
        for b in variables:
            cell = cells[(a, b)]
            if cell is None:
                row.append("")
                continue
            row.append(f"{cell.rho:.3f}{cell.stars}")
            records.append({"var_a": a, "var_b": b, "rho": cell.rho,
                            "n": cell.n, "t_stat": cell.t_stat,
                            "p_value": cell.p_value, "stars": cell.stars})
        lines.append("| " + " | ".join(row) + " |")
    return "\n".join(lines) + "\n", pd.DataFrame(records)


@dataclass(frozen=True)
class TableColumn:
    label: str
    result: RegressionResult
    type_fe: str
    firm_fe: str


def _variable_order(columns: list[TableColumn]) -> list[str]:
    # efficiency measures head the table even when only later columns use
    # them; the constant prints last
    efficiency: list[str] = []
    others: list[str] = []
    seen_const = False
    for col in columns:
        for row in col.result.rows:
            if row.name == "const":
                seen_const = True
            elif row.name.replace("diff_", "") in ("supereff", "sfa_eff", "sbmeff"):
                if row.name not in efficiency:
                    efficiency.append(row.name)
            elif row.name not in others:
                others.append(row.name)
    return efficiency + others + (["const"] if seen_const else [])


def render_regression_table(columns: list[TableColumn],
                            table_name: str) -> tuple[str, pd.DataFrame]:
    """Markdown: coefficient with stars, bracketed t-stat beneath, then
    FE toggles, N, adjusted R-squared, and cluster count as footer rows."""
    variables = _variable_order(columns)
    lines = ["| | " + " | ".join(c.label for c in columns) + " |",
             "|---|" + "---|" * len(columns)]
    for name in variables:
        coef_cells, t_cells = [], []
        for col in columns:
            try:
                row = col.result.coefficient(name)
            except KeyError:
                coef_cells.append("")
                t_cells.append("")
                continue
            coef_cells.append(f"{row.coefficient:.4f}{row.stars}")
            t_cells.append(f"[{row.t_stat:.2f}]" if np.isfinite(row.t_stat) else "")
        lines.append(f"| {name} | " + " | ".join(coef_cells) + " |")
        lines.append("| | " + " | ".join(t_cells) + " |")
    lines.append("| Type FE | " + " | ".join(c.type_fe for c in columns) + " |")
    lines.append("| Firm FE | " + " | ".join(c.firm_fe for c in columns) + " |")
    lines.append("| N | " + " | ".join(str(c.result.n) for c in columns) + " |")
    lines.append("| Adj. R2 | "
                 + " | ".join(_fmt(c.result.adj_r_squared, "%.3f") for c in columns)
                 + " |")
    lines.append("| Clusters | "
                 + " | ".join("" if c.result.n_clusters is None
                              else str(c.result.n_clusters) for c in columns)
                 + " |")
    records = []
    for col in columns:
        for row in col.result.rows:
            records.append({
                "table": table_name, "column": col.label, "variable": row.name,
                "coefficient": row.coefficient, "se": row.se,
                "t_stat": row.t_stat, "p_value": row.p_value,
                "stars": row.stars, "n": col.result.n,
                "adj_r_squared": col.result.adj_r_squared,
                "r_squared": col.result.r_squared,
                "n_clusters": col.result.n_clusters,
                "type_fe": col.type_fe, "firm_fe": col.firm_fe,
                "dependent": col.result.dependent,
            })
    return "\n".join(lines) + "\n", pd.DataFrame(records)


def regression_grid(panel: PanelDataset, table: str) -> list[TableColumn]:
    """The published column layouts.

    Levels and lead tables interleave the two efficiency measures over
    none/type/firm fixed effects; column (6) requests type effects on top
    of firm effects, which the within transformation absorbs, so it prints
    the same numbers as column (5) under its own label. The difference
    table runs one column per efficiency measure.
    """
    if table == "diff":
        cols = []
        for label, eff in (("(1)", "supereff"), ("(2)", "sfa_eff")):
            result = first_difference_regression(
                RegressionSpec(efficiency=(eff,)), panel)
            cols.append(TableColumn(label, result, "No", "No"))
        return cols
    lead = table == "lead"
    grid = [
        ("(1)", "supereff", "none", "No", "No"),
        ("(2)", "sfa_eff", "none", "No", "No"),
        ("(3)", "supereff", "type", "Yes", "No"),
        ("(4)", "sfa_eff", "type", "Yes", "No"),
        ("(5)", "supereff", "firm", "No", "Yes"),
        ("(6)", "supereff", "firm", "Yes", "Yes"),
    ]
    columns = []
    for label, eff, fe, type_fe, firm_fe in grid:
        spec = RegressionSpec(efficiency=(eff,), fixed_effects=fe,
                              lead_dependent=lead)
        columns.append(TableColumn(label, panel_regression(spec, panel),
                                   type_fe, firm_fe))
    return columns


def per_year_series(frame: pd.DataFrame, column: str) -> pd.DataFrame:
    values = frame[["year", column]].dropna()
    grouped = values.groupby("year")[column]
    out = pd.DataFrame({
        "year": sorted(values["year"].unique()),
    })
    means = grouped.mean()
    counts = grouped.size()
    out["mean"] = out["year"].map(means)
    out["n"] = out["year"].map(counts).astype(int)
    return out


def render_report(bundle: ReportBundle, recorder: RunRecorder,
                  require: tuple[str, ...] = ()) -> None:
    """Write every table and series the bundle supports.

    require lists pieces that must not be skipped ("regress", "sfa",
    "corr", ...): a missing input for a required piece raises DataError
    naming the absent upstream step instead of recording a notice.
    """

    def _skip(piece: str, message: str) -> None:
        if piece in require:
            raise DataError(message)
        recorder.warn(message + "; skipped")

    frame = analysis_frame(bundle.panel)
    eff = efficiency_table(bundle)
    for column in ("sbmeff", "supereff", "sfa_eff"):
        if column in eff.columns and column not in frame.columns:
            frame = frame.merge(eff[["bank_id", "year", column]],
                                on=["bank_id", "year"], how="left")

    with recorder.step("write_scores"):
        if bundle.scores is not None:
            recorder.write_frame("scores.csv", bundle.scores)
            recorder.write_frame("efficiency.csv", eff)
        else:
            _skip("dea", "missing upstream result for scores: run the dea step")

    with recorder.step("write_sfa"):
        if bundle.sfa_fit is not None:
            fit = bundle.sfa_fit
            recorder.write_json("sfa_fit.json", {
                "distribution": "half_normal" if fit.mu is None else "truncated_normal",
                "beta": {name: float(b) for name, b
                         in zip(fit.term_names, fit.beta)},
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
        else:
            _skip("sfa", "missing upstream result for sfa_fit: run the sfa step")

    with recorder.step("describe"):
        available = [v for v in DESCRIBE_VARIABLES if v in frame.columns]
        for v in DESCRIBE_VARIABLES:
            if v not in available:
                recorder.warn(f"describe: variable {v} unavailable; omitted")
        md, csv = render_describe(frame, available)
        recorder.write_text("describe.md", md)
        recorder.write_frame("describe.csv", csv)

    with recorder.step("corr"):
        available = [v for v in CORR_VARIABLES if v in frame.columns]
        if len(available) >= 2:
            md, csv = render_corr(frame, available)
            recorder.write_text("corr_table.md", md)
            recorder.write_frame("corr_table.csv", csv)
        else:
            _skip("corr", "missing upstream result for corr_table: "
                          "fewer than two variables available")

    with recorder.step("regress"):
        have_eff = {"supereff", "sfa_eff"} <= set(frame.columns)
        if have_eff:
            reg_panel = bundle.panel.with_frame(
                frame.drop(columns=[c for c in ("supereff_status",)
                                    if c in frame.columns]))
            for table in ("main", "lead", "diff"):
                columns = regression_grid(reg_panel, table)
                md, csv = render_regression_table(columns, table)
                recorder.write_text(f"regress_{table}.md", md)
                recorder.write_frame(f"regress_{table}.csv", csv)
                for col in columns:
                    for warning in col.result.warnings:
                        recorder.warn(f"regress_{table} {col.label}: {warning}")
                    if col.result.degenerate:
                        recorder.warn(f"regress_{table} {col.label}: "
                                      "degenerate fit (zero-variance dependent)")
        else:
            _skip("regress", "missing upstream result for regression tables: "
                             "run the dea and sfa steps")

    with recorder.step("series"):
        for column in SERIES_VARIABLES:
            if column in frame.columns:
                recorder.write_frame(f"series_{column}.csv",
                                     per_year_series(frame, column))
            else:
                _skip("series", f"missing upstream result for series_{column}")
