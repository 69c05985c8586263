"""Train every method on the three noise ranges and tabulate how well the
predicted relative uncertainty tracks the analytic one.

    python scripts/compare_noise_ranges.py --out runs/noise --runs 2 --sizes 90000 10000 10000 --epoch-divisor 4
"""
import argparse
import csv
from dataclasses import replace
from pathlib import Path

from pendulum_uq.experiment import NOISE_RANGES, ExperimentPlan, cmd_run


def aggregate(out_dir):
    with open(Path(out_dir) / "eval" / "aggregate.csv", newline="") as fh:
        return {(r["method"], r["dataset"], r["metric"]): r for r in csv.DictReader(fh)}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, required=True)
    ap.add_argument("--runs", type=int, default=6)
    ap.add_argument("--reduced", action="store_true")
    ap.add_argument("--sizes", type=int, nargs=3)
    ap.add_argument("--epoch-divisor", type=int)
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()

    results = {}
    for lo, hi in NOISE_RANGES:
        plan = ExperimentPlan(name=f"noise_{hi:.2f}", noise_range=(lo, hi), n_runs=args.runs,
                              reduced_scale=args.reduced, epoch_divisor=args.epoch_divisor)
        if args.sizes:
            plan = replace(plan, sizes=tuple(args.sizes))
        out = args.out / plan.name
        cmd_run(plan, out, args.workers)
        results[plan.name] = aggregate(out)

    print(f"{'noise':<11}{'method':<8}{'pearson_r':>16}{'const_stat':>16}{'flagged':>9}{'calib_err':>11}")
    for name, agg in results.items():
        for m in ("de", "cd", "bnn"):
            r = agg[(m, "test", "pearson_r")]
            c = agg[(m, "test", "constant_stat")]
            f = agg[(m, "test", "constant_flag")]
            e = agg[(m, "test", "calib_max_abs_error")]
            print(f"{name:<11}{m:<8}{float(r['mean']):>9.3f} ±{float(r['stdev']):5.3f}"
                  f"{float(c['mean']):>9.3f} ±{float(c['stdev']):5.3f}"
                  f"{float(f['mean']):>9.2f}{float(e['mean']):>11.3f}")


if __name__ == "__main__":
    main()
