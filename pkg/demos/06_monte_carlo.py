"""
A small Monte-Carlo campaign
============================

A campaign runs every controller from the same set of random initial
states and writes per-run series, a summary table and a manifest holding
the full configuration.  Rerunning the manifest reproduces every file bit
for bit.  Five runs keep this demo to about a minute; the acceptance suite
uses twenty.
"""

import filecmp
import sys
import tempfile
from pathlib import Path

from nmdetumble.harness import CampaignConfig, EnvConfig, rerun_from_manifest, run_monte_carlo, write_outputs

n_runs = int(sys.argv[1]) if len(sys.argv) > 1 else 5
cfg = CampaignConfig(n_runs=n_runs, env=EnvConfig(drag_torque=False))
result = run_monte_carlo(cfg)

print(f"{'controller':>18s} {'converged':>9s} {'mean td [s]':>11s} {'median final':>12s} {'rises':>6s}")
for row in result.summary:
    print(f"{row['controller']:>18s} {row['converged']:>5d}/{row['runs']:<3d} {row['mean_detumble_time']:11.0f} "
          f"{row['median_final_h']:12.2e} {row['increase_fraction']:6.0%}")

# %%
# Write everything, rerun from the manifest and compare the files.
with tempfile.TemporaryDirectory() as tmp:
    first = write_outputs(result, Path(tmp) / "first")
    again = write_outputs(rerun_from_manifest(first / "manifest.json"), Path(tmp) / "second")
    names = ["summary.csv", "runs.csv", "manifest.json"] + [f"runs/{p.name}" for p in (first / "runs").iterdir()]
    same, diff, _ = filecmp.cmpfiles(first, again, names, shallow=False)
    print(f"\n{len(same)} of {len(names)} files identical after rerun ({len(diff)} differ)")
