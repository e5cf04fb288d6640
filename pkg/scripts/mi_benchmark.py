"""Train the statistics network on a correlated Gaussian pair and compare with the closed-form MI.

Usage: python3 scripts/mi_benchmark.py [--rho 0.8] [--steps 5000] [--batch 256] [--seed 0]
"""
import argparse

from ganver.benchmarks import run_gaussian_mi_benchmark


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--rho", type=float, default=0.8)
    p.add_argument("--steps", type=int, default=5000)
    p.add_argument("--batch", type=int, default=256)
    p.add_argument("--lr", type=float, default=2e-4)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args()
    res = run_gaussian_mi_benchmark(args.rho, args.steps, args.batch, lr=args.lr, seed=args.seed)
    for step in range(0, args.steps, max(1, args.steps // 10)):
        print(f"step {step:>5}: estimate {res.estimates[step]:.4f}")
    print(f"true MI {res.true_mi:.5f}, mean of last 500 estimates {res.tail_mean(500):.5f}")


if __name__ == "__main__":
    main()
