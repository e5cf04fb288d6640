"""Command-line entry point: ``ganver <subcommand> ...``.

Failures print a single ``error: <kind>: <message>`` line on stderr and exit
nonzero (2 for usage errors, 1 otherwise).
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import sweep as sweep_mod
from .checkpoint import CheckpointError, checkpoint_load
from .config import ConfigError, load_config
from .data import RngStream, make_spec, read_samples_csv, sample_gmm, sample_latent, write_samples_csv
from .metrics import EvalProtocol, compute_report, evaluate, write_reports_csv
from .networks import predict
from .plot import scatter_svg
from .train import train


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _kv(text: str) -> tuple[str, str]:
    if "=" not in text:
        raise argparse.ArgumentTypeError(f"expected key=value, got {text!r}")
    key, value = text.split("=", 1)
    return key.strip(), value.strip()


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _config_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--set", action="append", type=_kv, default=[], metavar="KEY=VALUE",
                   help="override one config field (repeatable)")
    for flag in ("dataset", "variant", "lam", "epochs", "iters-per-epoch", "eval-every", "batch-size", "lr"):
        p.add_argument(f"--{flag}")


def _build_config(args, **extra):
    overrides = dict(args.set)
    for flag in ("dataset", "variant", "lam", "epochs", "iters_per_epoch", "eval_every", "batch_size", "lr"):
        value = getattr(args, flag, None)
        if value is not None:
            overrides[flag] = value
    overrides.update({k: str(v) for k, v in extra.items() if v is not None})
    return load_config(args.config, **overrides)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ganver", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth-data", help="write GMM samples as x,y CSV")
    p.add_argument("--dataset", default="ring", choices=("ring", "grid"))
    p.add_argument("--n", type=int, default=100_000)
    p.add_argument("--sigma", type=float, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="-")

    p = sub.add_parser("train", help="train one configuration")
    _config_args(p)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("eval", help="evaluate a checkpoint or a pair of sample CSVs")
    p.add_argument("--real")
    p.add_argument("--gen")
    p.add_argument("--checkpoint")
    p.add_argument("--config", help="config of the checkpoint (default: config.txt beside it)")
    p.add_argument("--dataset", default=None, choices=("ring", "grid"))
    p.add_argument("--n", type=int, default=2500)
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="-")

    p = sub.add_parser("sweep", help="train over a lambda grid and several seeds")
    _config_args(p)
    p.add_argument("--lambdas", type=_floats, default=list(sweep_mod.DEFAULT_LAMBDAS))
    p.add_argument("--seeds", type=_ints, default=[1, 2, 3])
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("plot", help="SVG scatter of real vs generated samples")
    p.add_argument("--real")
    p.add_argument("--gen")
    p.add_argument("--checkpoint")
    p.add_argument("--config")
    p.add_argument("--dataset", default=None, choices=("ring", "grid"))
    p.add_argument("--n", type=int, default=2500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    return parser


def _write_text(dest: str, text: str) -> None:
    if dest == "-":
        sys.stdout.write(text)
    else:
        Path(dest).write_text(text)


def _checkpoint_sampler(args):
    cfg_path = args.config or str(Path(args.checkpoint).with_name("config.txt"))
    if not Path(cfg_path).exists():
        raise FileNotFoundError(f"no config for checkpoint: {cfg_path}")
    cfg = load_config(cfg_path)
    params = checkpoint_load(args.checkpoint, {"G": cfg.g_spec})["G"]

    def sampler(n, rng):
        return predict(params, cfg.g_spec, sample_latent(cfg.latent_dim, n, rng, cfg.latent_prior))

    return cfg, sampler


def cmd_synth_data(args) -> None:
    spec = make_spec(args.dataset, args.sigma)
    pts = sample_gmm(spec, args.n, RngStream(args.seed, "synth-data"))
    if args.out == "-":
        write_samples_csv("/dev/stdout", pts)
    else:
        write_samples_csv(args.out, pts)


def cmd_train(args) -> None:
    cfg = _build_config(args, seed=args.seed, output_dir=args.out)
    result = train(cfg)
    if result.aborted:
        raise RuntimeError(f"diverged at {result.aborted}; last good checkpoint {Path(args.out) / 'last.ckpt'}")
    best = result.best_report
    if best is not None:
        print(f"best epoch {result.best_epoch}: modes={best.modes:g} kl={best.kl:.4f} wd={best.wd:.4f} ta={best.ta:.2f}")


def cmd_eval(args) -> None:
    if args.checkpoint:
        cfg, sampler = _checkpoint_sampler(args)
        spec = make_spec(args.dataset or cfg.dataset)
        report = evaluate(spec, sampler, EvalProtocol(args.n, args.repeats), RngStream(args.seed, "eval"))
    elif args.real and args.gen:
        spec = make_spec(args.dataset or "ring")
        report = compute_report(read_samples_csv(args.real), read_samples_csv(args.gen), spec,
                                RngStream(args.seed, "eval"))
    else:
        raise UsageError("eval needs --checkpoint or both --real and --gen")
    if args.out == "-":
        write_reports_csv("/dev/stdout", [report])
    else:
        write_reports_csv(args.out, [report])


def cmd_sweep(args) -> None:
    base = _build_config(args)
    if not base.objective.uses_ver:
        base = base.replace(variant=base.variant + "+ver")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = sweep_mod.run_sweep(base, args.lambdas, args.seeds, out)
    sweep_mod.write_sweep_csv(out / "sweep.csv", rows)
    sweep_mod.write_aggregate_csv(out / "aggregate.csv", rows)
    sys.stdout.write((out / "aggregate.csv").read_text())


def cmd_plot(args) -> None:
    if args.checkpoint:
        cfg, sampler = _checkpoint_sampler(args)
        spec = make_spec(args.dataset or cfg.dataset)
        rng = RngStream(args.seed, "plot")
        real = sample_gmm(spec, args.n, rng.child("real"))
        gen = sampler(args.n, rng.child("gen"))
    elif args.gen:
        spec = make_spec(args.dataset or "ring")
        gen = read_samples_csv(args.gen)
        real = read_samples_csv(args.real) if args.real else np.empty((0, 2))
    else:
        raise UsageError("plot needs --checkpoint or --gen")
    _write_text(args.out, scatter_svg(real, gen, spec))


COMMANDS = {
    "synth-data": cmd_synth_data,
    "train": cmd_train,
    "eval": cmd_eval,
    "sweep": cmd_sweep,
    "plot": cmd_plot,
}


def _fail(kind: str, message) -> None:
    print(f"error: {kind}: {' '.join(str(message).split())}", file=sys.stderr)


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        COMMANDS[args.command](args)
    except UsageError as err:
        _fail("usage", err)
        return 2
    except (ConfigError, CheckpointError) as err:
        kind = "config" if isinstance(err, ConfigError) else "checkpoint"
        _fail(kind, err)
        return 1
    except FileNotFoundError as err:
        _fail("missing-file", err.filename or err)
        return 1
    except (ValueError, RuntimeError, OSError) as err:
        _fail(type(err).__name__, err)
        return 1
    return 0


def main_exit() -> None:
    sys.exit(main())


if __name__ == "__main__":
    main_exit()
