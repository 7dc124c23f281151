# %% [markdown]
# # The survey-style pipeline end to end
#
# A reduced exp2 run on the synthetic survey data: sex and age are frozen,
# binary answers may only move in their allowed direction, and Method 3
# searches over the three most accurate models. The run directory then gets
# its figures and an independent audit.

# %%
import csv
import sys
import tempfile
from pathlib import Path

from paretoce.audit import audit_run
from paretoce.config import build_config
from paretoce.experiments import run_experiment2
from paretoce.plots import emit_plots

out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(tempfile.mkdtemp()) / "exp2"
cfg = build_config({"experiment": "exp2", "out_dir": str(out)},
                   {"n_bases": 3, "split.n_repeats": 5, "moo.generations": 30})
manifest = run_experiment2(cfg)
print("stages (s):", {k: round(v, 1) for k, v in manifest["timings_seconds"].items()})

# %%
print((out / "aggregate.md").read_text())
with (out / "representatives.csv").open(newline="") as fh:
    for row in csv.reader(fh):
        print(row[0].ljust(20), row[1:6], "...")

# %%
for p in emit_plots(out):
    print("wrote", p)
res = audit_run(out)
print(f"audit: {res.checked_files} files, {res.checked_cells} cells, problems: {res.problems or 'none'}")
