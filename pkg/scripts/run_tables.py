"""Median-over-seeds comparison tables on the ring and the grid at the desk-scale schedule.

Usage: python3 scripts/run_tables.py {ring,grid} OUT_DIR [--seeds 1,2,3] [--lam L]
Writes runs.csv (one row per run, best-WD evaluation) and prints the table.
"""
import argparse
from pathlib import Path

from ganver import experiments as ex

VARIANTS = {"ring": ["vgan", "vgan+ver"], "grid": ["vgan", "vgan+ver", "wgan+ver"]}


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("dataset", choices=sorted(VARIANTS))
    p.add_argument("out")
    p.add_argument("--seeds", default=",".join(map(str, ex.TABLE_SEEDS)))
    p.add_argument("--lam", type=float, default=ex.DESK_LAMBDA)
    args = p.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    seeds = [int(s) for s in args.seeds.split(",")]

    def show(rec):
        r = rec.report
        print(f"{rec.variant} seed={rec.seed} epoch={rec.best_epoch} modes={r.modes:g} hq={r.hq:.3f} "
              f"kl={r.kl:.4f} wd={r.wd:.4f} ta={r.ta:.2f} ({rec.seconds:.0f}s)", flush=True)

    records = ex.run_table(args.dataset, VARIANTS[args.dataset], seeds, args.lam, out, progress=show)
    ex.write_records_csv(out / "runs.csv", records)
    print(ex.format_table(records, VARIANTS[args.dataset]))


if __name__ == "__main__":
    main()
