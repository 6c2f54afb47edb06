"""Report pipeline tests: efficiency merging, the regression grid layout,
and the per-year series semantics."""

import numpy as np
import pandas as pd

from bankfrontier.dea import SBM_UND_VRS, SCORED, SUPER_SBM_UND_VRS
from bankfrontier.panel import PanelDataset, SyntheticConfig, generate_synthetic
from bankfrontier.report import (
    ReportBundle,
    analysis_frame,
    attach_efficiency,
    build_bundle,
    dea_scores,
    efficiency_table,
    per_year_series,
    regression_grid,
    render_regression_table,
)


def small_panel(seed=3):
    return generate_synthetic(
        SyntheticConfig(n_banks=10, n_years=6, seed=seed, start_year=2011))


def identical_bank_frame(n_banks=3, years=(2015, 2016)):
    rows = []
    for b in range(n_banks):
        for i, y in enumerate(years):
            base = 100.0 * (1 + 0.1 * i)
            rows.append({
                "bank_id": f"T{b}", "year": y, "bank_type": "JSB",
                "tier1": 6.5, "interest_expense": 1.6,
                "op_expense_ex_prov": 1.2, "loss_provision": 0.9,
                "net_profit": 1.1, "npl": 0.7,
                "total_assets": base, "total_debt": base * 0.92,
                "book_equity": base * 0.08, "market_equity": base * 0.15,
                "deposits": base * 0.74, "loans": base * 0.55,
                "total_income": 4.2, "noninterest_income": 0.8,
                "ten_client_pct": 30.0, "ten_owner_pct": 50.0,
                "gdp_growth": 0.06, "spread": 0.02,
            })
    return pd.DataFrame(rows)


def test_analysis_frame_attaches_aliases():
    frame = analysis_frame(small_panel())
    for column in ("tenclient", "tenown", "gdpg", "roe", "tobinsq", "size"):
        assert column in frame.columns
    assert np.allclose(frame["tenclient"], frame["ten_client_pct"])


def test_efficiency_table_merges_both_models():
    panel = small_panel()
    bundle = build_bundle(panel)
    eff = efficiency_table(bundle)
    assert list(eff.columns) == ["bank_id", "year", "sbmeff", "supereff",
                                 "supereff_status", "sfa_eff"]
    assert len(eff) == panel.n_obs
    # stage-1 inefficient banks carry their SBM score as the super value
    inefficient = eff[eff["sbmeff"] < 1 - 1e-6]
    scored = inefficient[inefficient["supereff_status"] == SCORED]
    assert not scored.empty
    assert np.allclose(scored["sbmeff"], scored["supereff"], atol=1e-9)


def test_attach_efficiency_preserves_rows():
    panel = small_panel()
    eff = efficiency_table(build_bundle(panel))
    merged = attach_efficiency(panel, eff)
    assert merged.n_obs == panel.n_obs
    assert {"sbmeff", "supereff", "sfa_eff"} <= set(merged.frame.columns)
    assert "supereff_status" not in merged.frame.columns


def test_regression_grid_firm_column_quirk():
    panel = small_panel(seed=7)
    reg_panel = attach_efficiency(panel, efficiency_table(build_bundle(panel)))
    columns = regression_grid(reg_panel, "main")
    assert [c.label for c in columns] == ["(1)", "(2)", "(3)", "(4)", "(5)", "(6)"]
    five, six = columns[4], columns[5]
    # same estimates, different fixed-effect labels
    for row in five.result.rows:
        other = six.result.coefficient(row.name)
        assert row.coefficient == other.coefficient
        assert row.se == other.se
    assert five.type_fe == "No" and six.type_fe == "Yes"
    assert five.firm_fe == "Yes" and six.firm_fe == "Yes"
    # type-FE columns carry the dummy rows, firm-FE columns do not
    names3 = [r.name for r in columns[2].result.rows]
    assert "type_JSB" in names3
    names5 = [r.name for r in five.result.rows]
    assert not any(n.startswith("type_") for n in names5)


def test_regression_table_renders_stars_and_footer():
    panel = small_panel(seed=11)
    reg_panel = attach_efficiency(panel, efficiency_table(build_bundle(panel)))
    md, csv = render_regression_table(regression_grid(reg_panel, "main"), "main")
    lines = md.splitlines()
    assert lines[0].startswith("| | (1) |")
    assert any(line.startswith("| supereff |") for line in lines)
    assert any(line.startswith("| Type FE |") for line in lines)
    assert any(line.startswith("| Firm FE |") for line in lines)
    assert any(line.startswith("| N |") for line in lines)
    assert any(line.startswith("| Adj. R2 |") for line in lines)
    # every coefficient line is followed by its bracketed t-stat line
    for i, line in enumerate(lines):
        if line.startswith("| supereff |"):
            assert "[" in lines[i + 1]
    assert set(csv["table"]) == {"main"}
    assert {"coefficient", "se", "t_stat", "p_value", "stars"} <= set(csv.columns)


def test_all_efficient_cohort_has_flat_unit_series():
    panel = PanelDataset(identical_bank_frame())
    scores = dea_scores(panel, SUPER_SBM_UND_VRS)
    assert (scores["status"] == SCORED).all()
    assert np.allclose(scores["value"], 1.0, atol=1e-6)
    bundle = ReportBundle(panel=panel, scores=scores)
    eff = efficiency_table(bundle)
    frame = analysis_frame(panel).merge(
        eff[["bank_id", "year", "supereff"]], on=["bank_id", "year"])
    series = per_year_series(frame, "supereff")
    assert (series["mean"] >= 1.0 - 1e-9).all()
    assert series["mean"].nunique() == 1


def test_per_year_series_counts_missing():
    panel = small_panel()
    frame = analysis_frame(panel)
    frame.loc[frame.index[:3], "tobinsq"] = np.nan
    series = per_year_series(frame, "tobinsq")
    assert series["n"].sum() == len(frame) - 3


def test_sbm_scores_match_direct_model_run():
    panel = small_panel(seed=19)
    scores = dea_scores(panel, SBM_UND_VRS)
    assert (scores["model"] == SBM_UND_VRS).all()
    assert scores["value"].between(0, 1 + 1e-9).all()
    assert len(scores) == panel.n_obs
