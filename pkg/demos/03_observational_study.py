"""Analysis of the packaged observational dataset through the command line.

The CSV is synthetic and shaped like a survey extract: fish consumption as
the treatment, log2 blood mercury as the outcome, and eight demographic and
smoking covariates. The script runs the CLI, then prints the effective
sample size and balance per estimand followed by the estimate grid.

    python demos/03_observational_study.py
"""

import json
import subprocess
import sys
import tempfile
from importlib import resources
from pathlib import Path

data = resources.files("wate") / "data" / "nhanes_like.csv"
with tempfile.TemporaryDirectory() as tmp:
    out = Path(tmp) / "report.json"
    subprocess.run(
        [sys.executable, "-m", "wate", "estimate", "--input", str(data),
         "--treatment-col", "fish", "--outcome-col", "log2_mercury",
         "--replicates", "200", "--seed", "1", "--format", "json", "--out", str(out)],
        check=True,
    )
    rep = json.loads(out.read_text())

diag = rep["diagnostics"]
print(f"N = {diag['n']}, treated = {diag['n_treated']}")
print("\nESS and worst ASMD:")
for est, ess in diag["ess"].items():
    worst = max(diag["asmd"][est].values())
    print(f"  {est:5} ESS {ess:7.1f}   max ASMD {worst:.3f}")
print(f"  unweighted      max ASMD {max(diag['asmd']['unweighted'].values()):.3f}")

print("\nestimate (SE) by method:")
for est, cells in rep["results"].items():
    first = next(iter(cells.values()))
    ses = "  ".join(f"{m} {c['se']:.3f}" if c.get("se") is not None else f"{m} n/a" for m, c in cells.items())
    print(f"  {est:5} {first['estimate']:.3f}  {ses}")
