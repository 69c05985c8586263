"""Epistemic uncertainty and calibration along the OOD sweeps of a finished run.

    python scripts/ood_sweep.py runs/noise/noise_0.20
"""
import csv
import sys
from collections import defaultdict
from pathlib import Path

import numpy as np


def main(out_dir):
    out_dir = Path(out_dir)
    with open(out_dir / "eval" / "summary.csv", newline="") as fh:
        summary = list(csv.DictReader(fh))
    vals = defaultdict(list)
    for r in summary:
        vals[(r["method"], r["dataset"], r["metric"])].append(float(r["value"]))
    methods = sorted({r["method"] for r in summary}, key=["de", "cd", "bnn"].index)
    datasets = ["test"] + sorted({r["dataset"] for r in summary if r["dataset"].startswith("ood_")})

    cols = [("median_sigma_ep", "med sig_ep"), ("mean_signed_error", "mean err"),
            ("calib_max_deficit", "cov deficit")]
    print(f"{'dataset':<18}{'method':<7}" + "".join(f"{c[1]:>13}" for c in cols))
    for d in datasets:
        for m in methods:
            cells = "".join(f"{np.mean(vals[(m, d, k)]):>13.4f}" for k, _ in cols)
            print(f"{d:<18}{m:<7}{cells}")
    for m in methods:
        key = (m, "ood_g_20-25", "max_g_hat")
        if key in vals:
            print(f"{m}: largest g_hat on the g in (20, 25) set, mean over runs: {np.mean(vals[key]):.2f}")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else ".")
