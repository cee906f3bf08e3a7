"""Generate the packaged synthetic fish-consumption / blood-mercury dataset.

The schema mimics a survey extract with 1107 adults, 8 covariates, a binary
"high fish consumption" treatment (about half treated, with a tail of
extreme propensity scores) and a log2 mercury outcome with an effect of
about 2. Values are synthetic.

    python3 tools/make_nhanes_like.py [output.csv]
"""

import sys
from pathlib import Path

import numpy as np
from scipy.special import expit

from wate.data import Dataset, save_csv

N = 1107
SEED = 1107


def make(seed: int = SEED) -> Dataset:
    rng = np.random.default_rng(seed)
    race_white = (rng.random(N) < 0.55).astype(float)
    gender = (rng.random(N) < 0.5).astype(float)
    age = np.round(rng.uniform(20, 80, N))
    income_missing = (rng.random(N) < 0.08).astype(float)
    income = np.where(income_missing == 1, 0.0, np.round(np.clip(rng.gamma(2.5, 1.1, N), 0, 5), 2))
    education = rng.integers(1, 6, N).astype(float)
    smoke_ever = (rng.random(N) < 0.45).astype(float)
    cigs_month = np.where(smoke_ever == 1, np.round(rng.gamma(1.2, 120.0, N)), 0.0)

    eta = 1.5 * (
        -2.2 - 0.9 * race_white + 0.2 * gender + 0.025 * age + 0.35 * income
        + 0.25 * education - 0.4 * smoke_ever - 0.002 * cigs_month
        - 0.3 * income_missing
    )
    z = (rng.random(N) < expit(eta)).astype(float)
    base = (
        0.2 - 0.5 * race_white + 0.15 * gender + 0.01 * age + 0.12 * income
        + 0.08 * education + 0.1 * smoke_ever
    )
    effect = 2.0 + 0.05 * (education - 3.0)
    y = np.round(base + z * effect + rng.normal(0.0, 1.0, N), 4)

    x = np.column_stack(
        [race_white, gender, age, income, income_missing, education, smoke_ever, cigs_month]
    )
    names = (
        "race_white", "gender", "age", "income", "income_missing",
        "education", "smoke_ever", "cigs_month",
    )
    return Dataset(z, y, x, names, treatment_name="fish", outcome_name="log2_mercury")


if __name__ == "__main__":
    out = Path(sys.argv[1]) if len(sys.argv) > 1 else (
        Path(__file__).resolve().parents[1] / "src" / "wate" / "data" / "nhanes_like.csv"
    )
    save_csv(make(), out)
    print(f"wrote {out}")
