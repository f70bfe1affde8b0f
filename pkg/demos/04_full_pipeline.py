"""Config-driven runs through the experiment harness, then a comparison.

Writes everything under demos/_out. Run from the repository root:
    python3 demos/04_full_pipeline.py
"""

import json
import os

from canclab.config import load_config
from canclab.harness import compare_runs, load_report, run_experiment

root = os.path.dirname(os.path.abspath(__file__))
cfg_path = os.path.join(root, os.pardir, "configs", "smoke.ini")
out_root = os.path.join(root, "_out")

reports = []
for label, algo in (("vanilla", "vanilla"), ("canc", "canc")):
    cfg = load_config(cfg_path)
    # dataclasses are frozen; build the variant through the public replace helper
    from dataclasses import replace

    cfg = replace(cfg, train=replace(cfg.train, algo=algo),
                  output=replace(cfg.output, dir=os.path.join(out_root, label)))
    report = run_experiment(cfg)
    reports.append(report)
    print(f"{label}: best modelsel accuracy {report.best_accuracy:.4f} "
          f"at epoch {report.best_epoch}, wrote {sorted(report.files)}")

summary_path = os.path.join(out_root, "canc", "summary.json")
with open(summary_path) as fh:
    summary = json.load(fh)
print("\nsummary.json keys:", sorted(summary))
print("final eval metrics:", summary["final_metrics"]["eval"])

comparison = compare_runs(
    [load_report(os.path.join(out_root, name)) for name in ("vanilla", "canc")]
)
print("\nper-scene sp_iou comparison (eval scenes):")
for row in comparison["per_scene"]:
    print(" ", row)
print("best improved scene:", comparison["best_improved_scene"])
