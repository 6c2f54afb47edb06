"""OLS with fixed effects and firm-clustered standard errors.

The estimators mirror the valuation regressions: Tobin's Q (level, lead,
or first difference) on efficiency scores plus firm and macro controls,
with none/type/firm fixed effects. Firm fixed effects are absorbed by the
within transformation; the dummy-variable representation is kept in the
test suite as the oracle.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd
from scipy.stats import t as t_dist

from .errors import CollinearityError, DataError, SchemaError
from .panel import BANK_TYPES, PanelDataset, derive_variables
from .stats import stars_for

FIRM_CONTROLS = ("size", "roa", "levr", "nplratio", "growth", "niiratio",
                 "tenclient", "tenown")
MACRO_CONTROLS = ("gdpg", "spread")

# regression labels for raw panel columns
COLUMN_ALIASES = {
    "tenclient": "ten_client_pct",
    "tenown": "ten_owner_pct",
    "gdpg": "gdp_growth",
}

FD_DIFFERENCED_CONTROLS = ("roe", "nplratio")
FD_LEVEL_CONTROLS = ("size", "growth")


@dataclass(frozen=True)
class RegressionSpec:
    dependent: str = "tobinsq"
    efficiency: tuple[str, ...] = ("supereff",)
    firm_controls: tuple[str, ...] = FIRM_CONTROLS
    macro_controls: tuple[str, ...] = MACRO_CONTROLS
    fixed_effects: str = "none"          # none | type | firm
    intercept: bool = True
    cluster_by: str = "firm"             # firm | none
    lead_dependent: bool = False
    period: tuple | None = None

    def __post_init__(self):
        if self.fixed_effects not in ("none", "type", "firm"):
            raise DataError(f"fixed_effects must be none/type/firm, got {self.fixed_effects!r}")
        if self.cluster_by not in ("firm", "none"):
            raise DataError(f"cluster_by must be firm or none, got {self.cluster_by!r}")
        object.__setattr__(self, "efficiency", tuple(self.efficiency))
        object.__setattr__(self, "firm_controls", tuple(self.firm_controls))
        object.__setattr__(self, "macro_controls", tuple(self.macro_controls))

    def dependent_label(self) -> str:
        return ("lead " if self.lead_dependent else "") + self.dependent


@dataclass(frozen=True)
class RegressionRow:
    name: str
    coefficient: float
    se: float
    t_stat: float
    p_value: float
    stars: str


@dataclass(frozen=True)
class RegressionResult:
    rows: tuple[RegressionRow, ...]
    n: int
    r_squared: float
    adj_r_squared: float
    fixed_effects: str
    n_clusters: int | None
    dependent: str
    warnings: tuple[str, ...] = ()
    degenerate: bool = False

    def coefficient(self, name: str) -> RegressionRow:
        for row in self.rows:
            if row.name == name:
                return row
        raise KeyError(name)


def _rank_check(x: np.ndarray, names) -> None:
    if np.linalg.matrix_rank(x) < x.shape[1]:
        from scipy.linalg import qr

        _, r, piv = qr(x, mode="economic", pivoting=True)
        diag = np.abs(np.diag(r))
        cutoff = diag.max() * max(x.shape) * np.finfo(float).eps if diag.size else 0.0
        dependent = [names[piv[i]] for i in range(len(diag)) if diag[i] <= cutoff]
        dependent += [names[j] for j in piv[len(diag):]]
        raise CollinearityError(
            "collinear regressors: " + ", ".join(sorted(set(dependent))))


def ols(y, x: pd.DataFrame, cluster=None, absorbed_dof: int = 0,
        dependent: str = "y", fixed_effects: str = "none",
        warnings: tuple[str, ...] = ()) -> RegressionResult:
    """Least squares with classical or cluster-robust standard errors.

    Rows with any missing value are dropped listwise. With a cluster
    grouping, the covariance is the cluster sandwich with the
    G/(G-1) * (N-1)/(N-K) small-sample scale and G-1 degrees of freedom
    for p-values. absorbed_dof counts parameters absorbed outside x (the
    firm means under the within transformation).
    """
    names = list(x.columns)
    xmat = x.to_numpy(dtype=float)
    yvec = np.asarray(y, dtype=float)
    if yvec.shape[0] != xmat.shape[0]:
        raise DataError("dependent and regressors must have equal length")
    keep = np.isfinite(yvec) & np.isfinite(xmat).all(axis=1)
    groups = None
    if cluster is not None:
        groups = np.asarray(cluster)
        if groups.shape[0] != yvec.shape[0]:
            raise DataError("cluster labels must align with observations")
        groups = groups[keep]
    xmat, yvec = xmat[keep], yvec[keep]
    n, k = xmat.shape
    k_total = k + absorbed_dof
    if n == 0:
        raise DataError("empty sample after listwise deletion")
    if n <= k_total:
        raise DataError(f"too few observations ({n}) for {k_total} parameters")
    _rank_check(xmat, names)

    beta, *_ = np.linalg.lstsq(xmat, yvec, rcond=None)
    resid = yvec - xmat @ beta
    rss = float(resid @ resid)
    has_const = any(np.ptp(xmat[:, j]) == 0.0 and xmat[0, j] != 0.0 for j in range(k))
    centered = has_const or absorbed_dof > 0
    tss = float(((yvec - yvec.mean()) ** 2).sum()) if centered else float(yvec @ yvec)
    degenerate = tss <= 0.0
    r_squared = 0.0 if degenerate else 1.0 - rss / tss
    adj = 0.0 if degenerate else 1.0 - (1.0 - r_squared) * (n - 1) / (n - k_total)

    xtx_inv = np.linalg.inv(xmat.T @ xmat)
    if groups is None:
        sigma_sq = rss / (n - k_total)
        cov = sigma_sq * xtx_inv
        dof = n - k_total
        n_clusters = None
    else:
        labels, inverse = np.unique(groups, return_inverse=True)
        g = len(labels)
        if g < 2:
            raise DataError("clustered errors need at least 2 clusters")
        scores = np.zeros((g, k))
        np.add.at(scores, inverse, xmat * resid[:, None])
        meat = scores.T @ scores
        scale = (g / (g - 1.0)) * ((n - 1.0) / (n - k_total))
        cov = scale * xtx_inv @ meat @ xtx_inv
        dof = g - 1
        n_clusters = g
    se = np.sqrt(np.maximum(np.diag(cov), 0.0))
    rows = []
    for j, name in enumerate(names):
        if se[j] > 0:
            t_stat = beta[j] / se[j]
            p = 2.0 * t_dist.sf(abs(t_stat), df=dof)
        else:
            t_stat = 0.0 if beta[j] == 0.0 else np.sign(beta[j]) * np.inf
            p = 1.0 if beta[j] == 0.0 else 0.0
        rows.append(RegressionRow(
            name=name, coefficient=float(beta[j]), se=float(se[j]),
            t_stat=float(t_stat), p_value=float(p), stars=stars_for(p)))
    return RegressionResult(
        rows=tuple(rows), n=n, r_squared=float(r_squared),
        adj_r_squared=float(adj), fixed_effects=fixed_effects,
        n_clusters=n_clusters, dependent=dependent,
        warnings=tuple(warnings), degenerate=degenerate,
    )


def _resolve_column(frame: pd.DataFrame, name: str) -> pd.Series:
    if name in frame.columns:
        return frame[name]
    alias = COLUMN_ALIASES.get(name)
    if alias is not None and alias in frame.columns:
        return frame[alias]
    if name == "roe":
        if {"net_profit", "book_equity"} <= set(frame.columns):
            return frame["net_profit"] / frame["book_equity"]
    raise SchemaError(f"missing regression variable {name!r}")


def _lead_within_bank(frame: pd.DataFrame, column: str) -> pd.Series:
    """Value at year+1 within bank; missing when the next year is absent."""
    nxt = frame[["bank_id", "year", column]].copy()
    nxt["year"] = nxt["year"] - 1
    merged = frame[["bank_id", "year"]].merge(
        nxt, on=["bank_id", "year"], how="left")
    return merged[column].set_axis(frame.index)


def _diff_within_bank(frame: pd.DataFrame, values: pd.Series) -> pd.Series:
    """Consecutive-year first difference within bank; gaps yield missing."""
    work = frame[["bank_id", "year"]].copy()
    work["value"] = values.to_numpy(dtype=float)
    prev = work.copy()
    prev["year"] = prev["year"] + 1
    merged = work.merge(prev, on=["bank_id", "year"], how="left",
                        suffixes=("", "_prev"))
    return (merged["value"] - merged["value_prev"]).set_axis(frame.index)


def _prepare_frame(panel: PanelDataset, spec: RegressionSpec) -> pd.DataFrame:
    frame = derive_variables(panel).frame
    if spec.period is not None:
        lo, hi = spec.period
        frame = frame[(frame["year"] >= lo) & (frame["year"] <= hi)]
        if frame.empty:
            raise DataError(f"no observations in {lo}-{hi}")
    return frame.reset_index(drop=True)


def panel_regression(spec: RegressionSpec, panel: PanelDataset) -> RegressionResult:
    """Level (or lead) regression. Design order: efficiency regressors,
    firm controls, macro controls, then fixed effects."""
    frame = _prepare_frame(panel, spec)
    if spec.dependent == "tobinsq" and "tobinsq" not in frame.columns:
        raise SchemaError("missing dependent tobinsq")
    y = _resolve_column(frame, spec.dependent).astype(float)
    dependent_label = spec.dependent
    if spec.lead_dependent:
        y = _lead_within_bank(frame.assign(**{spec.dependent: y}), spec.dependent)
        dependent_label = "lead " + spec.dependent

    design: dict[str, pd.Series] = {}
    warnings: list[str] = []
    for name in spec.efficiency + spec.firm_controls + spec.macro_controls:
        design[name] = _resolve_column(frame, name).astype(float)

    absorbed = 0
    if spec.fixed_effects == "type":
        for level in BANK_TYPES[1:]:   # first category omitted
            design[f"type_{level}"] = (frame["bank_type"] == level).astype(float)
        if spec.intercept:
            design = {"const": pd.Series(1.0, index=frame.index), **design}
    elif spec.fixed_effects == "none":
        if spec.intercept:
            design = {"const": pd.Series(1.0, index=frame.index), **design}
    else:  # firm: demean within bank, absorbing one mean per bank
        x = pd.DataFrame(design)
        keep = np.isfinite(y.to_numpy(dtype=float)) & np.isfinite(x.to_numpy()).all(axis=1)
        sub = frame[keep]
        y = y[keep] - y[keep].groupby(sub["bank_id"]).transform("mean")
        demeaned = {}
        for name, col in x[keep].items():
            within = col - col.groupby(sub["bank_id"]).transform("mean")
            if np.ptp(within.to_numpy()) == 0.0:
                warnings.append(f"dropped {name}: constant within every firm")
                continue
            demeaned[name] = within
        design = demeaned
        frame = sub
        absorbed = sub["bank_id"].nunique()

    x = pd.DataFrame(design)
    if x.empty or len(x.columns) == 0:
        raise DataError("no regressors survive the fixed-effects transform")
    cluster = frame["bank_id"].to_numpy() if spec.cluster_by == "firm" else None
    return ols(y, x, cluster=cluster, absorbed_dof=absorbed,
               dependent=dependent_label, fixed_effects=spec.fixed_effects,
               warnings=tuple(warnings))


DEFAULT_FD_PERIOD = (2011, 2023)


def first_difference_regression(spec: RegressionSpec,
                                panel: PanelDataset) -> RegressionResult:
    """Change regression: consecutive-year differences of the dependent,
    the efficiency regressors, and the rate-style controls, with size and
    growth kept in levels. The sample is restricted to the configured
    period before differencing."""
    period = spec.period if spec.period is not None else DEFAULT_FD_PERIOD
    frame = _prepare_frame(panel, replace(spec, period=period))

    y_levels = _resolve_column(frame, spec.dependent).astype(float)
    y = _diff_within_bank(frame, y_levels)
    design: dict[str, pd.Series] = {}
    if spec.intercept:
        design["const"] = pd.Series(1.0, index=frame.index)
    for name in spec.efficiency:
        design[f"diff_{name}"] = _diff_within_bank(
            frame, _resolve_column(frame, name).astype(float))
    for name in FD_DIFFERENCED_CONTROLS:
        design[f"diff_{name}"] = _diff_within_bank(
            frame, _resolve_column(frame, name).astype(float))
    for name in FD_LEVEL_CONTROLS + spec.macro_controls:
        design[name] = _resolve_column(frame, name).astype(float)

    cluster = frame["bank_id"].to_numpy() if spec.cluster_by == "firm" else None
    return ols(y, pd.DataFrame(design), cluster=cluster,
               dependent="diff " + spec.dependent, fixed_effects="none")
