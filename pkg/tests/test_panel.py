"""Panel loading, derivation, winsorization, and the synthetic generator."""

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bankfrontier.errors import DataError, SchemaError
from bankfrontier.panel import (
    DERIVED_COLUMNS,
    PanelDataset,
    RAW_NUMERIC_COLUMNS,
    SyntheticConfig,
    derive_variables,
    generate_synthetic,
    load_bank_roster,
    load_panel,
    winsorize,
    write_panel,
)


def small_frame(n_banks=3, n_years=4):
    rows = []
    rng = np.random.default_rng(11)
    for b in range(n_banks):
        for t in range(n_years):
            assets = 100.0 * (b + 1) * (1.05 ** t)
            rows.append({
                "bank_id": f"B{b:02d}",
                "year": 2006 + t,
                "bank_type": ["SOB", "JSB", "CITY_RURAL"][b % 3],
                "tier1": assets * 0.08,
                "interest_expense": assets * 0.02,
                "op_expense_ex_prov": assets * 0.01,
                "loss_provision": assets * 0.005,
                "net_profit": assets * 0.012,
                "npl": assets * 0.009,
                "total_assets": assets,
                "total_debt": assets * 0.9,
                "book_equity": assets * 0.1,
                "market_equity": assets * 0.15,
                "deposits": assets * 0.75,
                "loans": assets * 0.55,
                "total_income": assets * 0.035,
                "noninterest_income": assets * 0.007,
                "ten_client_pct": 20.0 + rng.uniform(0, 5),
                "ten_owner_pct": 50.0 + rng.uniform(0, 10),
                "gdp_growth": 0.07,
                "spread": 0.025,
            })
    return pd.DataFrame(rows)


def test_missing_required_column_named():
    frame = small_frame().drop(columns=["npl"])
    with pytest.raises(SchemaError, match="npl"):
        PanelDataset(frame)


def test_duplicate_key_rejected():
    frame = small_frame()
    frame = pd.concat([frame, frame.iloc[[0]]], ignore_index=True)
    with pytest.raises(DataError, match="duplicate"):
        PanelDataset(frame)


def test_unknown_bank_type_rejected():
    frame = small_frame()
    frame.loc[0, "bank_type"] = "FOREIGN"
    with pytest.raises(DataError, match="bank_type"):
        PanelDataset(frame)


def test_load_unparseable_cell_names_row_and_column(tmp_path):
    frame = small_frame()
    path = tmp_path / "panel.csv"
    frame.to_csv(path, index=False)
    text = path.read_text().replace("0.025", "abc", 1)
    path.write_text(text)
    with pytest.raises(SchemaError, match="spread"):
        load_panel(path)


def test_420_row_panel_loads(tmp_path):
    frame = small_frame(n_banks=42, n_years=10)
    path = tmp_path / "panel.csv"
    frame.to_csv(path, index=False)
    panel = load_panel(path)
    assert len(panel.frame) == 420


def test_round_trip_preserves_cells(tmp_path):
    panel = generate_synthetic(SyntheticConfig(n_banks=8, n_years=5, seed=3))
    path = tmp_path / "panel.csv"
    write_panel(panel, path)
    back = load_panel(path)
    a = panel.frame.reset_index(drop=True)
    b = back.frame[a.columns].reset_index(drop=True)
    for col in a.columns:
        if col in ("bank_id", "bank_type"):
            assert (a[col] == b[col]).all()
        else:
            np.testing.assert_allclose(
                a[col].to_numpy(float), b[col].to_numpy(float),
                rtol=1e-14, atol=0,
            )


def test_tobinsq_direct_arithmetic():
    frame = small_frame()
    frame["total_assets"] = 100.0
    frame["book_equity"] = 10.0
    frame["market_equity"] = 30.0
    derived = derive_variables(PanelDataset(frame))
    assert np.allclose(derived.frame["tobinsq"], 1.2)


def test_supplied_tobinsq_not_overwritten():
    frame = small_frame()
    frame["tobinsq"] = 7.5
    derived = derive_variables(PanelDataset(frame))
    assert np.allclose(derived.frame["tobinsq"], 7.5)


def test_growth_missing_in_first_observed_year():
    derived = derive_variables(PanelDataset(small_frame()))
    first = derived.frame.groupby("bank_id")["year"].transform("min")
    assert derived.frame.loc[derived.frame["year"] == first, "growth"].isna().all()
    assert derived.frame.loc[derived.frame["year"] > first, "growth"].notna().all()


def test_derived_columns_match_recomputation():
    panel = derive_variables(generate_synthetic(SyntheticConfig(n_banks=10, n_years=6, seed=5)))
    f = panel.frame
    np.testing.assert_allclose(
        f["tobinsq"], (f["total_assets"] - f["book_equity"] + f["market_equity"]) / f["total_assets"],
        rtol=0, atol=1e-12)
    np.testing.assert_allclose(f["size"], np.log(f["total_assets"]), rtol=0, atol=1e-12)
    np.testing.assert_allclose(f["roa"], f["net_profit"] / f["total_assets"], rtol=0, atol=1e-12)
    np.testing.assert_allclose(f["levr"], f["total_debt"] / f["total_assets"], rtol=0, atol=1e-12)
    np.testing.assert_allclose(f["nplratio"], f["npl"] / f["loans"], rtol=0, atol=1e-12)
    np.testing.assert_allclose(f["niiratio"], f["noninterest_income"] / f["total_income"],
                               rtol=0, atol=1e-12)
    lagged = f.merge(
        f[["bank_id", "year", "total_assets"]].assign(year=f["year"] + 1),
        on=["bank_id", "year"], how="left", suffixes=("", "_lag"))
    expect = lagged["total_assets"] / lagged["total_assets_lag"] - 1.0
    got = f["growth"]
    assert got.isna().equals(expect.isna())
    mask = got.notna()
    np.testing.assert_allclose(got[mask], expect[mask], rtol=0, atol=1e-12)


def test_derive_is_noop_on_derived_panel():
    once = derive_variables(PanelDataset(small_frame()))
    twice = derive_variables(once)
    pd.testing.assert_frame_equal(once.frame, twice.frame)


def test_zero_denominator_names_keys():
    frame = small_frame()
    frame.loc[2, "total_assets"] = 0.0
    with pytest.raises(DataError, match=str(frame.loc[2, "year"])):
        derive_variables(PanelDataset(frame))


def test_winsorize_p0_identity():
    panel = derive_variables(PanelDataset(small_frame()))
    out = winsorize(panel, ["tobinsq"], 0.0)
    pd.testing.assert_frame_equal(out.frame, panel.frame)


def test_winsorize_1_to_200_hand_computed():
    frame = small_frame(n_banks=10, n_years=20)
    frame["ten_client_pct"] = np.arange(1.0, 201.0)
    panel = PanelDataset(frame)
    out = winsorize(panel, ["ten_client_pct"], 0.01)
    vals = out.frame["ten_client_pct"].sort_values().to_numpy()
    # type-7 quantiles of 1..200 at 1%/99% are 2.99 and 198.01
    assert vals[0] == pytest.approx(2.99, abs=1e-12)
    assert vals[1] == pytest.approx(2.99, abs=1e-12)
    assert vals[2] == pytest.approx(3.0, abs=1e-12)
    assert vals[-1] == pytest.approx(198.01, abs=1e-12)
    assert vals[-2] == pytest.approx(198.01, abs=1e-12)
    assert vals[-3] == pytest.approx(198.0, abs=1e-12)


def test_winsorize_constant_column_unchanged():
    frame = small_frame()
    frame["spread"] = 0.025
    panel = PanelDataset(frame)
    out = winsorize(panel, ["spread"], 0.05)
    assert (out.frame["spread"] == 0.025).all()


def test_winsorize_idempotent():
    panel = derive_variables(generate_synthetic(SyntheticConfig(n_banks=20, n_years=8, seed=9)))
    once = winsorize(panel, ["tobinsq", "roa"], 0.01)
    twice = winsorize(once, ["tobinsq", "roa"], 0.01)
    pd.testing.assert_frame_equal(once.frame, twice.frame)


def test_winsorize_extremes_equal_clip_bounds():
    frame = small_frame(n_banks=10, n_years=20)
    rng = np.random.default_rng(2)
    frame["ten_client_pct"] = rng.lognormal(1.0, 1.0, len(frame))
    out = winsorize(PanelDataset(frame), ["ten_client_pct"], 0.02)
    lo, hi = np.quantile(frame["ten_client_pct"].to_numpy(), [0.02, 0.98])
    assert out.frame["ten_client_pct"].min() == pytest.approx(lo, rel=1e-14)
    assert out.frame["ten_client_pct"].max() == pytest.approx(hi, rel=1e-14)


def test_winsorize_rejects_bad_fraction_and_unknown_variable():
    panel = PanelDataset(small_frame())
    with pytest.raises(DataError):
        winsorize(panel, ["spread"], 0.5)
    with pytest.raises(SchemaError):
        winsorize(panel, ["not_a_column"], 0.01)


@settings(max_examples=25, deadline=None)
@given(
    values=st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=5, max_size=60),
    p=st.floats(0.0, 0.45),
)
def test_winsorize_idempotence_property(values, p):
    frame = small_frame(n_banks=1, n_years=len(values))
    frame["ten_owner_pct"] = values
    panel = PanelDataset(frame)
    once = winsorize(panel, ["ten_owner_pct"], p)
    twice = winsorize(once, ["ten_owner_pct"], p)
    assert once.frame["ten_owner_pct"].equals(twice.frame["ten_owner_pct"])


def test_generator_deterministic():
    a = generate_synthetic(SyntheticConfig(n_banks=12, n_years=6, seed=21))
    b = generate_synthetic(SyntheticConfig(n_banks=12, n_years=6, seed=21))
    pd.testing.assert_frame_equal(a.frame, b.frame)
    pd.testing.assert_frame_equal(a.truth, b.truth)


def test_generator_row_count_and_keys():
    panel = generate_synthetic(SyntheticConfig(n_banks=42, n_years=18, seed=1))
    assert len(panel.frame) == 756
    assert panel.frame.duplicated(subset=["bank_id", "year"]).sum() == 0
    assert set(panel.frame["year"]) == set(range(2006, 2024))
    assert len(panel.truth) == 756


def test_generator_moments_match_config():
    cfg = SyntheticConfig(n_banks=42, n_years=14, seed=33, sigma_v=0.15, sigma_u=0.3)
    panel = generate_synthetic(cfg)
    truth = panel.truth
    assert (truth["u"] > 0).all()
    sd_v = truth["v"].std(ddof=1)
    rms_u = np.sqrt((truth["u"] ** 2).mean())
    assert abs(sd_v - cfg.sigma_v) / cfg.sigma_v < 0.10
    assert abs(rms_u - cfg.sigma_u) / cfg.sigma_u < 0.10
    # the frontier identity ties the sidecar to the panel exactly
    profit = panel.frame.sort_values(["bank_id", "year"])["net_profit"].to_numpy()
    tr = truth.sort_values(["bank_id", "year"])
    recon = np.exp(tr["frontier_value"] + tr["v"] - tr["u"]).to_numpy() - 1.0
    np.testing.assert_allclose(profit, recon, rtol=1e-12)


def test_generator_missingness_unbalances_panel():
    cfg = SyntheticConfig(n_banks=20, n_years=10, seed=4, missingness=0.2)
    panel = generate_synthetic(cfg)
    assert len(panel.frame) < 200
    counts = panel.frame.groupby("bank_id").size()
    assert (counts >= 1).all()
    assert len(panel.truth) == len(panel.frame)


def test_generator_rejects_bad_config():
    with pytest.raises(DataError):
        SyntheticConfig(n_banks=0)
    with pytest.raises(DataError):
        SyntheticConfig(sigma_v=-0.1)
    with pytest.raises(DataError):
        SyntheticConfig(missingness=0.6)


def test_bank_roster_ships():
    roster = load_bank_roster()
    assert len(roster) == 42
    assert {"code", "dmu", "english_name", "abbr"} <= set(roster.columns)
