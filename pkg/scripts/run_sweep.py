"""Pick the regularization weight on the ring using seeds disjoint from the table seeds.

Usage: python3 scripts/run_sweep.py OUT_DIR [--lambdas 0.1,0.5,1,2] [--seeds 11,12,13]
"""
import argparse
from pathlib import Path

from ganver import experiments as ex
from ganver import sweep


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("out")
    p.add_argument("--lambdas", default="0.1,0.5,1,2")
    p.add_argument("--seeds", default="11,12,13")
    args = p.parse_args()
    lambdas = [float(v) for v in args.lambdas.split(",")]
    seeds = [int(v) for v in args.seeds.split(",")]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    base = ex.run_table("ring", ["vgan"], seeds, out_dir=out / "vgan", progress=print)
    rows = sweep.run_sweep(ex.desk_config("ring", "vgan+ver", 0), lambdas, seeds, out / "ver")
    sweep.write_sweep_csv(out / "sweep.csv", rows)
    sweep.write_aggregate_csv(out / "aggregate.csv", rows)
    ex.write_records_csv(out / "baseline.csv", base)

    print(ex.format_table(base, ["vgan"]))
    for lam, n, _, med in sweep.aggregate(rows):
        print(f"lambda={lam:<5g} seeds={n} median ta={med.ta:.2f} kl={med.kl:.4f} wd={med.wd:.4f} modes={med.modes:g}")
    print("best lambda by median ta:", sweep.best_lambda(rows, "ta"))


if __name__ == "__main__":
    main()
