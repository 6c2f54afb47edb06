"""Descriptive statistics, Spearman rank correlation, and VIF screening."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy.stats import t as t_dist

from .errors import DataError, SchemaError

# significance markers: * 0.1, ** 0.05, *** 0.01
STAR_THRESHOLDS = ((0.01, "***"), (0.05, "**"), (0.1, "*"))

# at small n the t approximation is poor; use the exact permutation null
PERMUTATION_CUTOFF = 10


def stars_for(p_value: float) -> str:
    for cut, mark in STAR_THRESHOLDS:
        if p_value < cut:
            return mark
    return ""


@dataclass(frozen=True)
class CorrResult:
    rho: float
    n: int
    t_stat: float
    p_value: float
    stars: str


@dataclass(frozen=True)
class DescribeRow:
    variable: str
    n: int
    mean: float
    sd: float
    minimum: float
    p25: float
    p75: float
    maximum: float


def _average_ranks(values: np.ndarray) -> np.ndarray:
    """Ranks 1..n with ties sharing the average of their positions."""
    order = np.argsort(values, kind="mergesort")
    ranks = np.empty(len(values), dtype=float)
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and values[order[j + 1]] == values[order[i]]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def _pearson(x: np.ndarray, y: np.ndarray) -> float:
    xc = x - x.mean()
    yc = y - y.mean()
    denom = np.sqrt((xc @ xc) * (yc @ yc))
    if denom == 0.0:
        raise DataError("undefined correlation: zero variance")
    return float((xc @ yc) / denom)


def spearman(x, y) -> CorrResult:
    """Rank correlation with average ranks for ties.

    Significance comes from the t approximation with n-2 degrees of
    freedom, except below the small-sample cutoff where the two-sided
    exact permutation p-value replaces it.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise DataError("x and y must be equal-length vectors")
    keep = np.isfinite(x) & np.isfinite(y)
    x, y = x[keep], y[keep]
    n = len(x)
    if n < 3:
        raise DataError(f"need at least 3 complete pairs, got {n}")
    rx = _average_ranks(x)
    ry = _average_ranks(y)
    rho = _pearson(rx, ry)
    if abs(rho) >= 1.0:
        t_stat = np.inf if rho > 0 else -np.inf
    else:
        t_stat = rho * np.sqrt((n - 2) / (1.0 - rho * rho))
    if n < PERMUTATION_CUTOFF:
        p_value = _permutation_p(rx, ry, abs(rho))
    else:
        p_value = 2.0 * t_dist.sf(abs(t_stat), df=n - 2) if np.isfinite(t_stat) else 0.0
    return CorrResult(rho=rho, n=n, t_stat=float(t_stat),
                      p_value=float(p_value), stars=stars_for(p_value))


def _permutation_p(rx: np.ndarray, ry: np.ndarray, observed: float) -> float:
    n = len(rx)
    rxc = rx - rx.mean()
    ryc = ry - ry.mean()
    denom = np.sqrt((rxc @ rxc) * (ryc @ ryc))
    hits = 0
    total = 0
    for perm in itertools.permutations(range(n)):
        rho = (rxc[list(perm)] @ ryc) / denom
        if abs(rho) >= observed - 1e-12:
            hits += 1
        total += 1
    return hits / total


def correlation_matrix(table: pd.DataFrame) -> dict:
    """Pairwise Spearman correlations with per-cell missing handling.

    Returns {(col_a, col_b): CorrResult | None}; a cell is None when its
    pair has too few complete observations or degenerate ranks. Symmetric
    with a unit diagonal.
    """
    columns = list(table.columns)
    if len(columns) < 2:
        raise DataError("need at least two columns")
    cells: dict = {}
    for i, a in enumerate(columns):
        va = table[a].to_numpy(dtype=float)
        n_a = int(np.isfinite(va).sum())
        cells[(a, a)] = CorrResult(rho=1.0, n=n_a, t_stat=np.inf, p_value=0.0, stars="")
        for b in columns[i + 1:]:
            try:
                cell = spearman(table[a], table[b])
            except DataError:
                cell = None
            cells[(a, b)] = cell
            cells[(b, a)] = cell
    return cells


def vif(table: pd.DataFrame) -> dict:
    """Variance inflation factors 1/(1-R^2), one auxiliary regression per
    column on the others plus an intercept. Exact collinearity reports
    +inf rather than raising."""
    columns = list(table.columns)
    if len(columns) < 2:
        raise DataError("need at least two columns")
    data = table.to_numpy(dtype=float)
    keep = np.isfinite(data).all(axis=1)
    data = data[keep]
    if data.shape[0] <= len(columns):
        raise DataError("not enough complete rows for auxiliary regressions")
    out = {}
    for j, col in enumerate(columns):
        yj = data[:, j]
        others = np.column_stack([np.ones(len(data)), np.delete(data, j, axis=1)])
        beta, *_ = np.linalg.lstsq(others, yj, rcond=None)
        resid = yj - others @ beta
        tss = ((yj - yj.mean()) ** 2).sum()
        if tss == 0.0:
            raise DataError(f"column {col!r} is constant")
        one_minus_r2 = (resid @ resid) / tss
        out[col] = np.inf if one_minus_r2 < 1e-12 else float(1.0 / one_minus_r2)
    return out


def describe(panel, variables) -> list[DescribeRow]:
    """Per-variable N/mean/sd/min/p25/p75/max with type-7 quantiles and the
    n-1 standard deviation."""
    frame = panel.frame if hasattr(panel, "frame") else panel
    rows = []
    for var in variables:
        if var not in frame.columns:
            raise SchemaError(f"unknown variable {var!r}")
        values = pd.to_numeric(frame[var], errors="coerce").to_numpy(dtype=float)
        values = values[np.isfinite(values)]
        if values.size == 0:
            raise DataError(f"variable {var!r} has no observations")
        q25, q75 = np.quantile(values, [0.25, 0.75], method="linear")
        rows.append(DescribeRow(
            variable=var,
            n=int(values.size),
            mean=float(values.mean()),
            sd=float(values.std(ddof=1)) if values.size > 1 else 0.0,
            minimum=float(values.min()),
            p25=float(q25),
            p75=float(q75),
            maximum=float(values.max()),
        ))
    return rows
