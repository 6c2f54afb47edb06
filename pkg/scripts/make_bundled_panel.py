"""Regenerate the bundled synthetic panel shipped with the package.

The defaults (42 banks, 2006-2023, seed 42) are the reference cohort the
report pipeline and the end-to-end tests run against. Rerunning this
script reproduces the same bytes; change the config only together with
the tests that pin results on the bundled data.
"""

from pathlib import Path

from bankfrontier.panel import SyntheticConfig, generate_synthetic, write_panel

DATA_DIR = Path(__file__).resolve().parents[1] / "src" / "bankfrontier" / "data"


def main() -> None:
    config = SyntheticConfig()
    panel = generate_synthetic(config)
    DATA_DIR.mkdir(parents=True, exist_ok=True)
    panel_path = DATA_DIR / "synth_panel.csv"
    truth_path = DATA_DIR / "synth_panel_truth.csv"
    write_panel(panel, panel_path)
    panel.truth.to_csv(truth_path, index=False, float_format="%.15g",
                       lineterminator="\n")
    print(f"wrote {panel_path} ({panel.n_obs} rows)")
    print(f"wrote {truth_path}")


if __name__ == "__main__":
    main()
