"""Adam and the alternating D -> M -> G training loop."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from . import objectives as obj
from .checkpoint import checkpoint_save
from .config import ExperimentConfig
from .data import RngStream, make_spec, sample_gmm, sample_latent
from .metrics import MetricsReport, evaluate, write_reports_csv
from .networks import ParamSet, as_consts, as_leaves, kaiming_init, mlp_forward, predict

log = logging.getLogger(__name__)


@dataclass
class AdamState:
    m: dict
    v: dict
    step: int = 0

    @classmethod
    def zeros_like(cls, params: ParamSet) -> "AdamState":
        return cls({k: np.zeros_like(p) for k, p in params.items()}, {k: np.zeros_like(p) for k, p in params.items()})


def adam_step(params: ParamSet, grads: dict, state: AdamState, lr: float, beta1=0.5, beta2=0.999, eps=1e-8):
    """One bias-corrected Adam descent step. Returns ``(new_params, new_state)``."""
    missing = [k for k in params if k not in grads]
    if missing:
        raise KeyError(f"no gradient for parameters {missing}")
    t = state.step + 1
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    new_p, new_m, new_v = {}, {}, {}
    for k, p in params.items():
        g = grads[k]
        m = beta1 * state.m[k] + (1.0 - beta1) * g
        v = beta2 * state.v[k] + (1.0 - beta2) * (g * g)
        new_p[k] = p - lr * (m / c1) / (np.sqrt(v / c2) + eps)
        new_m[k], new_v[k] = m, v
    return new_p, AdamState(new_m, new_v, t)


@dataclass
class TrainResult:
    G: ParamSet
    D: ParamSet
    M: ParamSet | None
    epochs: list = field(default_factory=list)
    reports: list = field(default_factory=list)
    best_epoch: int | None = None
    best_wd: float = math.inf
    best_checkpoint: str | None = None
    aborted: str | None = None
    iterations: int = 0

    @property
    def best_report(self) -> MetricsReport | None:
        if self.best_epoch is None:
            return None
        return self.reports[self.epochs.index(self.best_epoch)]

    def paramsets(self) -> dict:
        out = {"G": self.G, "D": self.D}
        if self.M is not None:
            out["M"] = self.M
        return out


class _Batches:
    """Minibatches over a fixed dataset, reshuffled on every pass."""

    def __init__(self, data: np.ndarray, batch_size: int, rng: RngStream):
        self.data = data
        self.batch_size = batch_size
        self.rng = rng
        self.order = np.empty(0, dtype=np.int64)
        self.pos = 0

    def next(self) -> np.ndarray:
        if self.pos + self.batch_size > len(self.order):
            self.order = self.rng.permutation(len(self.data))
            self.pos = 0
        idx = self.order[self.pos : self.pos + self.batch_size]
        self.pos += self.batch_size
        return self.data[idx]


class Trainer:
    """Holds networks, optimizer states and RNG streams for one run."""

    def __init__(self, config: ExperimentConfig):
        self.config = cfg = config
        self.spec = make_spec(cfg.dataset, None if cfg.sigma < 0 else cfg.sigma)
        self.objective = cfg.objective
        self.g_spec, self.d_spec, self.m_spec = cfg.g_spec, cfg.d_spec, cfg.m_spec
        root = RngStream(cfg.seed, "run")
        self.streams = {name: root.child(name) for name in ("data", "batches", "latent", "interp", "mine", "shuffle")}
        self.data = sample_gmm(self.spec, cfg.train_size, self.streams["data"])
        self.data.setflags(write=False)
        self.batches = _Batches(self.data, cfg.batch_size, self.streams["batches"])
        self.G = kaiming_init(self.g_spec, root.child("init-G"))
        self.D = kaiming_init(self.d_spec, root.child("init-D"))
        self.M = kaiming_init(self.m_spec, root.child("init-M")) if self.objective.uses_ver else None
        self.adam = {"G": AdamState.zeros_like(self.G), "D": AdamState.zeros_like(self.D)}
        if self.M is not None:
            self.adam["M"] = AdamState.zeros_like(self.M)
        self.mine_state = obj.MineState(cfg.ema_decay)
        self.iteration = 0
        self.last_mi = math.nan

    def latent(self, n: int, stream: str = "latent") -> np.ndarray:
        return sample_latent(self.config.latent_dim, n, self.streams[stream], self.config.latent_prior)

    def _adam(self, net: str, grads: dict) -> None:
        c = self.config
        if not all(np.isfinite(g).all() for g in grads.values()):
            raise ad.NumericError(f"{net} gradient", -1)
        params, self.adam[net] = adam_step(getattr(self, net), grads, self.adam[net], c.lr, c.beta1, c.beta2)
        setattr(self, net, params)

    def d_step(self) -> float:
        n = self.config.batch_size
        real = self.batches.next()
        fake = predict(self.G, self.g_spec, self.latent(n))
        tape = ad.Tape()
        d = as_leaves(tape, self.D)
        scores = mlp_forward(d, self.d_spec, tape.const(np.vstack([real, fake])))
        d_real, d_fake = ad.slice_rows(scores, 0, n), ad.slice_rows(scores, n, 2 * n)
        if self.objective.base == "vgan":
            loss = obj.vanilla_d_loss(d_real, d_fake)
        else:
            points = obj.interpolate(real, fake, self.streams["interp"])
            norms = obj.penalty_norms(d, self.d_spec, points)
            loss = obj.wgan_d_loss(d_real, d_fake, norms, self.objective.gp_weight)
        grads = ad.backward(loss, list(d.values()))
        self._adam("D", {k: grads[node] for k, node in d.items()})
        return loss.item()

    def m_step(self) -> float:
        n = self.config.batch_size
        z = self.latent(n, "mine")
        xhat = predict(self.G, self.g_spec, z)
        perm = obj.marginal_permutation(n, self.streams["shuffle"])
        grads, self.mine_state, estimate = obj.mine_gradient(self.M, self.m_spec, z, xhat, perm, self.mine_state)
        self._adam("M", {k: -g for k, g in grads.items()})
        self.last_mi = estimate
        return estimate

    def g_step(self) -> float:
        n = self.config.batch_size
        z = self.latent(n)
        tape = ad.Tape()
        g = as_leaves(tape, self.G)
        z_node = tape.const(z)
        xhat = mlp_forward(g, self.g_spec, z_node)
        d_fake = mlp_forward(as_consts(tape, self.D), self.d_spec, xhat)
        if self.objective.base == "vgan":
            loss = obj.vanilla_g_loss(d_fake, self.objective.g_style)
        else:
            loss = obj.wgan_g_loss(d_fake)
        leaves = list(g.values())
        adv = ad.backward(loss, leaves)
        grads = {k: adv[node] for k, node in g.items()}
        if self.objective.uses_ver and self.objective.lam > 0:
            perm = obj.marginal_permutation(n, self.streams["shuffle"])
            t_joint, t_marg = obj.mine_scores(as_consts(tape, self.M), self.m_spec, z_node, xhat, perm)
            mi = ad.backward(obj.mine_estimate(t_joint, t_marg), leaves)
            mi_grads = {k: mi[node] for k, node in g.items()}
            grads = obj.ver_generator_gradient(grads, mi_grads, self.objective.lam, self.objective.clip_mode)
        self._adam("G", grads)
        return loss.item()

    def iterate(self) -> None:
        for _ in range(self.config.discriminator_steps):
            self.d_step()
        if self.M is not None:
            for _ in range(self.config.m_steps):
                self.m_step()
        self.g_step()
        self.iteration += 1

    def sample(self, n: int, rng: RngStream) -> np.ndarray:
        z = sample_latent(self.config.latent_dim, n, rng, self.config.latent_prior)
        with np.errstate(over="ignore", invalid="ignore"):
            out = predict(self.G, self.g_spec, z)
        if not np.isfinite(out).all():
            raise ad.NumericError("generator", -1)
        return out

    def evaluate(self, epoch: int) -> MetricsReport:
        rng = RngStream(self.config.seed, f"eval/epoch{epoch}")
        return evaluate(self.spec, self.sample, self.config.eval_protocol, rng)

    def paramsets(self) -> dict:
        out = {"G": self.G, "D": self.D}
        if self.M is not None:
            out["M"] = self.M
        return out


def train(config: ExperimentConfig, progress=None) -> TrainResult:
    """Run the full schedule; deterministic given ``config``.

    With ``output_dir`` set, writes ``metrics.csv``, ``last.ckpt`` after each
    evaluation and ``best.ckpt`` for the lowest-WD evaluation so far.
    """
    trainer = Trainer(config)
    out_dir = Path(config.output_dir) if config.output_dir else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "config.txt").write_text(config.to_text())
    result = TrainResult(trainer.G, trainer.D, trainer.M)
    per_epoch = config.iterations_per_epoch
    for epoch in range(1, config.epochs + 1):
        due = epoch % config.eval_every == 0 or epoch == config.epochs
        try:
            for _ in range(per_epoch):
                trainer.iterate()
            report = trainer.evaluate(epoch) if due else None
        except ad.NumericError as err:
            result.aborted = f"epoch {epoch}, iteration {trainer.iteration}: {err}"
            log.warning("training diverged: %s", result.aborted)
            break
        if report is None:
            continue
        result.epochs.append(epoch)
        result.reports.append(report)
        if out_dir is not None:
            checkpoint_save(trainer.paramsets(), out_dir / "last.ckpt")
            write_reports_csv(out_dir / "metrics.csv", result.reports, result.epochs)
        if report.wd < result.best_wd:
            result.best_wd = report.wd
            result.best_epoch = epoch
            if out_dir is not None:
                checkpoint_save(trainer.paramsets(), out_dir / "best.ckpt")
                result.best_checkpoint = str(out_dir / "best.ckpt")
        if progress is not None:
            progress(epoch, report, trainer)
    result.G, result.D, result.M = trainer.G, trainer.D, trainer.M
    result.iterations = trainer.iteration
    return result
