"""Bank panel handling: loading, derived variables, winsorization, and a
seeded synthetic-panel generator with a truth sidecar.

A panel is keyed by (bank_id, year). Monetary columns are interpreted in
units of 100 million RMB, but nothing downstream depends on the unit.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from importlib import resources

import numpy as np
import pandas as pd

from .errors import DataError, SchemaError

KEY_COLUMNS = ("bank_id", "year")

RAW_NUMERIC_COLUMNS = (
    "tier1",
    "interest_expense",
    "op_expense_ex_prov",
    "loss_provision",
    "net_profit",
    "npl",
    "total_assets",
    "total_debt",
    "book_equity",
    "market_equity",
    "deposits",
    "loans",
    "total_income",
    "noninterest_income",
    "ten_client_pct",
    "ten_owner_pct",
    "gdp_growth",
    "spread",
)

# accepted when present; recomputed only when absent
OPTIONAL_NUMERIC_COLUMNS = ("tobinsq", "roa")

REQUIRED_COLUMNS = KEY_COLUMNS + RAW_NUMERIC_COLUMNS + ("bank_type",)

BANK_TYPES = ("SOB", "JSB", "CITY_RURAL")

DERIVED_COLUMNS = ("tobinsq", "size", "roa", "levr", "nplratio", "growth", "niiratio")


@dataclass(frozen=True)
class PanelDataset:
    """Immutable bank panel. All transformations return new datasets.

    ``winsorized`` records which (variable, fraction) clips were already
    applied, which is what makes re-winsorizing at the same fraction a no-op.
    ``truth`` is the per-observation truth sidecar for synthetic panels.
    """

    frame: pd.DataFrame
    winsorized: dict = field(default_factory=dict)
    truth: pd.DataFrame | None = None

    def __post_init__(self):
        frame = self.frame
        missing = [c for c in REQUIRED_COLUMNS if c not in frame.columns]
        if missing:
            raise SchemaError(f"missing required column(s): {', '.join(missing)}")
        frame = frame.copy()
        frame["bank_id"] = frame["bank_id"].astype(str)
        try:
            frame["year"] = frame["year"].astype(int)
        except (TypeError, ValueError) as exc:
            raise SchemaError(f"year column must be integral: {exc}") from None
        dupes = frame.duplicated(subset=list(KEY_COLUMNS))
        if dupes.any():
            key = frame.loc[dupes.idxmax(), list(KEY_COLUMNS)].tolist()
            raise DataError(f"duplicate (bank_id, year) key: {tuple(key)}")
        bad_type = ~frame["bank_type"].isin(BANK_TYPES)
        if bad_type.any():
            value = frame.loc[bad_type.idxmax(), "bank_type"]
            raise DataError(
                f"bank_type {value!r} not one of {BANK_TYPES}"
            )
        for col in RAW_NUMERIC_COLUMNS + tuple(
            c for c in OPTIONAL_NUMERIC_COLUMNS if c in frame.columns
        ):
            try:
                frame[col] = pd.to_numeric(frame[col])
            except (TypeError, ValueError) as exc:
                raise SchemaError(f"column {col!r} is not numeric: {exc}") from None
        frame = frame.sort_values(list(KEY_COLUMNS), kind="mergesort")
        frame = frame.reset_index(drop=True)
        object.__setattr__(self, "frame", frame)
        object.__setattr__(self, "winsorized", dict(self.winsorized))

    @property
    def n_obs(self) -> int:
        return len(self.frame)

    def with_frame(self, frame: pd.DataFrame) -> "PanelDataset":
        return PanelDataset(frame, winsorized=self.winsorized, truth=self.truth)


def load_panel(path) -> PanelDataset:
    """Read a comma-delimited panel with a header row into a PanelDataset.

    Missing cells are empty strings in the file and become NaN. Unparseable
    numeric cells are reported with their row and column.
    """
    raw = pd.read_csv(path, dtype={"bank_id": str})
    for col in RAW_NUMERIC_COLUMNS + OPTIONAL_NUMERIC_COLUMNS:
        if col not in raw.columns:
            continue
        coerced = pd.to_numeric(raw[col], errors="coerce")
        bad = coerced.isna() & raw[col].notna() & (raw[col].astype(str).str.strip() != "")
        if bad.any():
            row = int(bad.idxmax())
            raise SchemaError(
                f"unparseable value {raw.loc[row, col]!r} at row {row}, column {col!r}"
            )
        raw[col] = coerced
    return PanelDataset(raw)


def write_panel(panel: PanelDataset, path) -> None:
    """Write a panel as CSV, floats at 15 significant digits."""
    panel.frame.to_csv(path, index=False, float_format="%.15g")


def derive_variables(panel: PanelDataset) -> PanelDataset:
    """Attach the analysis columns. Columns already present are left alone,
    so deriving an already-derived panel is a no-op.

    tobinsq = (total_assets - book_equity + market_equity) / total_assets
    size    = ln(total_assets)
    roa     = net_profit / total_assets
    levr    = total_debt / total_assets
    nplratio= npl / loans
    growth  = total_assets_t / total_assets_{t-1} - 1 (NaN without a lag year)
    niiratio= noninterest_income / total_income
    """
    frame = panel.frame.copy()

    def _guard_denominator(col: str) -> None:
        zero = frame[col].fillna(1.0) == 0.0
        if zero.any():
            row = frame.loc[zero.idxmax()]
            raise DataError(
                f"zero denominator {col!r} at ({row['bank_id']}, {row['year']})"
            )

    if "tobinsq" not in frame.columns:
        _guard_denominator("total_assets")
        frame["tobinsq"] = (
            frame["total_assets"] - frame["book_equity"] + frame["market_equity"]
        ) / frame["total_assets"]
    if "size" not in frame.columns:
        nonpos = frame["total_assets"].fillna(1.0) <= 0.0
        if nonpos.any():
            row = frame.loc[nonpos.idxmax()]
            raise DataError(
                f"non-positive total_assets at ({row['bank_id']}, {row['year']})"
            )
        frame["size"] = np.log(frame["total_assets"])
    if "roa" not in frame.columns:
        _guard_denominator("total_assets")
        frame["roa"] = frame["net_profit"] / frame["total_assets"]
    if "levr" not in frame.columns:
        _guard_denominator("total_assets")
        frame["levr"] = frame["total_debt"] / frame["total_assets"]
    if "nplratio" not in frame.columns:
        _guard_denominator("loans")
        frame["nplratio"] = frame["npl"] / frame["loans"]
    if "growth" not in frame.columns:
        _guard_denominator("total_assets")
        lagged = frame[["bank_id", "year", "total_assets"]].copy()
        lagged["year"] += 1
        lagged = lagged.rename(columns={"total_assets": "_assets_lag"})
        frame = frame.merge(lagged, on=["bank_id", "year"], how="left")
        frame["growth"] = frame["total_assets"] / frame["_assets_lag"] - 1.0
        frame = frame.drop(columns="_assets_lag")
    if "niiratio" not in frame.columns:
        _guard_denominator("total_income")
        frame["niiratio"] = frame["noninterest_income"] / frame["total_income"]
    return panel.with_frame(frame)


def _type7_quantiles(values: np.ndarray, p: float) -> tuple[float, float]:
    # linear interpolation between closest order statistics
    finite = values[np.isfinite(values)]
    lo = float(np.quantile(finite, p, method="linear"))
    hi = float(np.quantile(finite, 1.0 - p, method="linear"))
    return lo, hi


def winsorize(panel: PanelDataset, variables, p: float) -> PanelDataset:
    """Clip each variable to its pooled [p, 1-p] interpolated quantiles.

    The applied (variable -> p) pairs are recorded on the dataset, and a
    variable already winsorized at the same p is left untouched on
    re-application, which makes the operation idempotent (recomputing
    cutoffs from already-clipped values would creep upward instead).
    """
    if not (0.0 <= p < 0.5):
        raise DataError(f"winsorization fraction must be in [0, 0.5), got {p}")
    frame = panel.frame.copy()
    applied = dict(panel.winsorized)
    for var in variables:
        if var not in frame.columns:
            raise SchemaError(f"unknown variable {var!r}")
        if p == 0.0:
            continue
        if applied.get(var) == p:
            continue
        values = frame[var].to_numpy(dtype=float)
        if not np.isfinite(values).any():
            continue
        lo, hi = _type7_quantiles(values, p)
        frame[var] = np.clip(values, lo, hi)
        applied[var] = p
    return PanelDataset(frame, winsorized=applied, truth=panel.truth)


@dataclass(frozen=True)
class SyntheticConfig:
    """Knobs for the deterministic synthetic bank panel.

    Frontier block: ``beta`` maps frontier term names (see sfa module) to
    true coefficients; unset terms are zero. ``sigma_v``/``sigma_u`` are the
    noise and inefficiency scales of the composed error on the shifted-log
    profit scale. DEA block: the first ``efficient_core`` banks are pinned
    to the per-year frontier by giving each a strictly minimal input;
    everyone else carries a multiplicative input inflation drawn up to
    ``inefficiency_spread``. ``q_efficiency_loading`` is the slope of true
    Tobin's Q on true DEA efficiency.
    """

    n_banks: int = 42
    n_years: int = 18
    seed: int = 42
    start_year: int = 2006
    beta: dict | None = None
    sigma_v: float = 0.12
    sigma_u: float = 0.22
    trend_coef: float = 0.008
    efficient_core: int = 4
    inefficiency_spread: float = 0.6
    q_efficiency_loading: float = 1.2
    q_noise_sd: float = 0.18
    missingness: float = 0.0
    scale_sigma: float = 1.0   # multiplier on the per-type ln-scale spreads
    ratio_sigma: float = 0.12  # idiosyncratic lognormal sd of balance-sheet ratios

    def __post_init__(self):
        if self.n_banks <= 0 or self.n_years <= 0:
            raise DataError("n_banks and n_years must be positive")
        if self.sigma_v <= 0 or self.sigma_u < 0:
            raise DataError("sigma_v must be positive and sigma_u non-negative")
        if not (0.0 <= self.missingness <= 0.5):
            raise DataError("missingness must lie in [0, 0.5]")
        if self.efficient_core < 0 or self.efficient_core > self.n_banks:
            raise DataError("efficient_core must lie in [0, n_banks]")


DEFAULT_TRUE_BETA = {
    "const": 4.3,
    "ln_deposits": 0.55,
    "ln_loans": 0.45,
    "ln_p1": -0.35,
    "ln_p2": -0.25,
    "ln_loss_provision": -0.15,
    "ln_op_expense_ex_prov": -0.20,
    "ln_deposits^2": -0.04,
    "ln_loans^2": -0.03,
    "ln_p1^2": -0.02,
    "ln_deposits*ln_loans": 0.03,
    "ln_p1*ln_p2": 0.02,
}

_CORE_PIN_COLUMNS = ("tier1", "interest_expense", "op_expense_ex_prov",
                     "loss_provision", "npl")


def generate_synthetic(config: SyntheticConfig) -> PanelDataset:
    """Deterministic synthetic panel with a truth sidecar.

    The sidecar records, per kept observation: the frontier value of the
    shifted-log profit, the error components v and u, true frontier
    efficiency exp(-u), and the DEA input-inflation factor with its implied
    efficiency 1/(1+phi).
    """
    rng = np.random.default_rng(config.seed)
    nb, ny = config.n_banks, config.n_years
    years = np.arange(config.start_year, config.start_year + ny)
    bank_ids = np.array([f"B{k:02d}" for k in range(1, nb + 1)])

    # type split proportional to the 6/9/27 reference mix
    n_sob = max(1, round(nb * 6 / 42))
    n_jsb = max(1, round(nb * 9 / 42))
    types = np.array(
        ["SOB"] * n_sob + ["JSB"] * n_jsb + ["CITY_RURAL"] * (nb - n_sob - n_jsb)
    )[:nb]

    type_mu = {"SOB": 10.2, "JSB": 8.8, "CITY_RURAL": 7.0}
    type_sd = {"SOB": 0.25, "JSB": 0.30, "CITY_RURAL": 0.60}
    ln_a0 = np.array([
        rng.normal(type_mu[t], type_sd[t] * config.scale_sigma) for t in types
    ])

    gdp = rng.uniform(0.02, 0.12, size=ny)
    gdp = np.sort(gdp)[::-1]          # gentle slowdown over the window
    spread = rng.uniform(0.012, 0.030, size=ny)

    growth_shocks = rng.normal(0.0, 0.03, size=(nb, ny))
    ln_assets = np.empty((nb, ny))
    ln_assets[:, 0] = ln_a0
    for t in range(1, ny):
        g = 0.06 + 0.6 * (gdp[t] - gdp.mean()) + growth_shocks[:, t]
        ln_assets[:, t] = ln_assets[:, t - 1] + np.log1p(np.clip(g, -0.2, None))

    rs = config.ratio_sigma

    def _ratio_noise():
        return np.exp(rng.normal(0.0, rs, size=(nb, ny)))

    assets = np.exp(ln_assets)
    deposits = assets * 0.74 * _ratio_noise()
    loans = assets * 0.55 * _ratio_noise()
    book_equity = assets * 0.075 * np.exp(rng.normal(0.0, min(rs, 0.15), size=(nb, ny)))
    total_debt = assets - book_equity
    tier1 = assets * 0.065 * _ratio_noise()
    interest_expense = deposits * (0.016 + 0.6 * spread[None, :]) * _ratio_noise()
    op_expense = assets * 0.012 * _ratio_noise()
    loss_provision = loans * 0.009 * _ratio_noise()
    npl = loans * 0.013 * np.exp(rng.normal(0.0, max(rs, 0.2), size=(nb, ny)))
    total_income = assets * 0.042 * _ratio_noise()
    nii_share = rng.uniform(0.08, 0.35, size=(nb, ny))
    ten_client = rng.uniform(10.0, 55.0, size=(nb, ny))
    ten_owner = rng.uniform(25.0, 75.0, size=(nb, ny))

    # DEA inefficiency: inputs and NPL inflated by (1 + phi)
    phi = rng.uniform(0.03, max(config.inefficiency_spread, 0.031), size=(nb, ny))
    phi[: config.efficient_core, :] = 0.0
    inflation = 1.0 + phi
    tier1 *= inflation
    interest_expense *= inflation
    op_expense *= inflation
    loss_provision *= inflation
    npl *= inflation

    # pin each core bank to the frontier: strictly smallest value of one
    # input dimension in every year
    pin_arrays = {
        "tier1": tier1,
        "interest_expense": interest_expense,
        "op_expense_ex_prov": op_expense,
        "loss_provision": loss_provision,
        "npl": npl,
    }
    for k in range(config.efficient_core):
        col = _CORE_PIN_COLUMNS[k % len(_CORE_PIN_COLUMNS)]
        arr = pin_arrays[col]
        others = np.delete(arr, k, axis=0)
        arr[k, :] = 0.5 * others.min(axis=0)

    sfa_noise_v = rng.normal(0.0, config.sigma_v, size=(nb, ny))
    sfa_ineff_u = np.abs(rng.normal(0.0, config.sigma_u, size=(nb, ny)))
    q_shocks = rng.normal(0.0, config.q_noise_sd, size=(nb, ny))
    keep_draws = rng.uniform(size=(nb, ny))

    long = pd.DataFrame({
        "bank_id": np.repeat(bank_ids, ny),
        "year": np.tile(years, nb),
        "bank_type": np.repeat(types, ny),
        "tier1": tier1.ravel(),
        "interest_expense": interest_expense.ravel(),
        "op_expense_ex_prov": op_expense.ravel(),
        "loss_provision": loss_provision.ravel(),
        "npl": npl.ravel(),
        "total_assets": assets.ravel(),
        "total_debt": total_debt.ravel(),
        "book_equity": book_equity.ravel(),
        "deposits": deposits.ravel(),
        "loans": loans.ravel(),
        "total_income": total_income.ravel(),
        "noninterest_income": (nii_share * total_income).ravel(),
        "ten_client_pct": ten_client.ravel(),
        "ten_owner_pct": ten_owner.ravel(),
        "gdp_growth": np.tile(gdp, nb),
        "spread": np.tile(spread, nb),
        "_v": sfa_noise_v.ravel(),
        "_u": sfa_ineff_u.ravel(),
        "_phi": phi.ravel(),
        "_qshock": q_shocks.ravel(),
        "_keep": keep_draws.ravel(),
    })

    if config.missingness > 0.0:
        first = long.groupby("bank_id")["year"].transform("min") == long["year"]
        long = long[(long["_keep"] >= config.missingness) | first]
    long = long.drop(columns="_keep").reset_index(drop=True)

    # profit frontier on the shifted-log scale ln(profit + 1), using the
    # same mean-scaled translog construction the estimator applies
    from .sfa import translog_terms  # local import to avoid a cycle

    beta_map = dict(DEFAULT_TRUE_BETA if config.beta is None else config.beta)
    base = pd.DataFrame({
        "deposits": long["deposits"],
        "loans": long["loans"],
        "p1": long["interest_expense"] / long["deposits"],
        "p2": long["npl"] / long["loans"],
        "loss_provision": long["loss_provision"],
        "op_expense_ex_prov": long["op_expense_ex_prov"],
    })
    terms, term_names = translog_terms(base)
    beta_vec = np.array([beta_map.get(name, 0.0) for name in term_names])
    trend = long["year"].to_numpy(dtype=float)
    trend = trend - trend.mean()
    frontier = terms @ beta_vec + config.trend_coef * trend
    shifted_log_profit = frontier + long["_v"].to_numpy() - long["_u"].to_numpy()
    long["net_profit"] = np.exp(shifted_log_profit) - 1.0

    dea_eff = 1.0 / (1.0 + long["_phi"].to_numpy())
    q_true = 1.02 + config.q_efficiency_loading * dea_eff + long["_qshock"].to_numpy()
    q_true = np.maximum(q_true, 1.001)
    long["market_equity"] = (
        (q_true - 1.0) * long["total_assets"] + long["book_equity"]
    )

    truth = pd.DataFrame({
        "bank_id": long["bank_id"],
        "year": long["year"],
        "frontier_value": frontier,
        "v": long["_v"],
        "u": long["_u"],
        "efficiency_true": np.exp(-long["_u"]),
        "dea_inflation": long["_phi"],
        "dea_efficiency_true": dea_eff,
        "tobinsq_true": q_true,
    })
    frame = long.drop(columns=["_v", "_u", "_phi", "_qshock"])
    return PanelDataset(frame, truth=truth)


def load_bank_roster() -> pd.DataFrame:
    """Reference roster of the 42 listed banks (code, dmu, name, abbr)."""
    with resources.files("bankfrontier.data").joinpath("bank_roster.csv").open() as fh:
        return pd.read_csv(fh, dtype={"code": str})


def load_bundled_panel() -> PanelDataset:
    """The shipped 42-bank, 18-year synthetic panel with its truth sidecar."""
    data = resources.files("bankfrontier.data")
    panel = load_panel(str(data.joinpath("synth_panel.csv")))
    truth = pd.read_csv(str(data.joinpath("synth_panel_truth.csv")),
                        dtype={"bank_id": str})
    return PanelDataset(panel.frame, truth=truth)
