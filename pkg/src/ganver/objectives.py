"""Adversarial losses, the neural MI lower bound, and the entropy-regularized generator update."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .data import RngStream
from .networks import MlpSpec, ParamSet, as_leaves, mlp_forward, statistics_forward

VARIANTS = ("vgan", "wgan", "vgan+ver", "wgan+ver")
GENERATOR_STYLES = ("non-saturating", "minimax")
CLIP_MODES = ("adaptive", "none")


@dataclass(frozen=True)
class ObjectiveKind:
    variant: str = "vgan"
    lam: float = 0.1
    gp_weight: float = 10.0
    g_style: str = "non-saturating"
    clip_mode: str = "adaptive"

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown objective variant {self.variant!r}")
        if self.g_style not in GENERATOR_STYLES:
            raise ValueError(f"unknown generator loss style {self.g_style!r}")
        if self.clip_mode not in CLIP_MODES:
            raise ValueError(f"unknown clip mode {self.clip_mode!r}")
        if not (self.lam >= 0 and self.gp_weight >= 0):
            raise ValueError("lam and gp_weight must be nonnegative")

    @property
    def base(self) -> str:
        return self.variant.split("+")[0]

    @property
    def uses_ver(self) -> bool:
        return self.variant.endswith("+ver")


class ObjectiveError(ad.NumericError):
    """Non-finite loss, with summary statistics of the scores that produced it."""

    def __init__(self, name: str, *scores: np.ndarray):
        parts = []
        for s in scores:
            finite = s[np.isfinite(s)]
            lo = finite.min() if finite.size else float("nan")
            hi = finite.max() if finite.size else float("nan")
            parts.append(f"n={s.size} nonfinite={s.size - finite.size} min={lo:.4g} max={hi:.4g}")
        Exception.__init__(self, f"{name}: non-finite loss ({'; '.join(parts)})")
        self.op = name
        self.index = -1


def _guarded(name, fn, *nodes):
    try:
        return fn()
    except ad.NumericError:
        raise ObjectiveError(name, *[n.value for n in nodes]) from None


# ---------------------------------------------------------------------------
# vanilla GAN, computed in logit space:
#   -log sigmoid(t) = softplus(-t),  -log(1 - sigmoid(t)) = softplus(t)


def vanilla_d_loss(real_logits: ad.Node, fake_logits: ad.Node) -> ad.Node:
    return _guarded(
        "vanilla_d_loss",
        lambda: ad.add(ad.mean(ad.softplus(ad.neg(real_logits))), ad.mean(ad.softplus(fake_logits))),
        real_logits,
        fake_logits,
    )


def vanilla_g_loss(fake_logits: ad.Node, style: str = "non-saturating") -> ad.Node:
    if style == "non-saturating":
        fn = lambda: ad.mean(ad.softplus(ad.neg(fake_logits)))  # noqa: E731
    elif style == "minimax":
        fn = lambda: ad.neg(ad.mean(ad.softplus(fake_logits)))  # noqa: E731
    else:
        raise ValueError(f"unknown generator loss style {style!r}")
    return _guarded("vanilla_g_loss", fn, fake_logits)


# ---------------------------------------------------------------------------
# WGAN-GP


def interpolate(real: np.ndarray, fake: np.ndarray, rng: RngStream) -> np.ndarray:
    """Random points on the segments between paired real and generated rows."""
    eps = rng.uniform((real.shape[0], 1))
    return eps * real + (1.0 - eps) * fake


def penalty_norms(d_nodes: dict, d_spec: MlpSpec, points: np.ndarray) -> ad.Node:
    """Per-row ``||grad_x D(x)||`` at ``points``, differentiable w.r.t. the critic's parameters."""
    tape = next(iter(d_nodes.values())).tape
    x = tape.leaf(points)
    g = ad.grad_wrt_input(lambda inp: mlp_forward(d_nodes, d_spec, inp), x)
    # the offset keeps sqrt differentiable when a gradient row vanishes
    return ad.sqrt(ad.add(ad.rowsum_sq(g), tape.const(1e-12)))


def wgan_d_loss(d_real: ad.Node, d_fake: ad.Node, norms: ad.Node, gp_weight: float = 10.0) -> ad.Node:
    def fn():
        critic = ad.sub(ad.mean(d_fake), ad.mean(d_real))
        dev = ad.sub(norms, norms.tape.const(1.0))
        return ad.add(critic, ad.scale(ad.mean(ad.square(dev)), gp_weight))

    return _guarded("wgan_d_loss", fn, d_real, d_fake, norms)


def wgan_g_loss(d_fake: ad.Node) -> ad.Node:
    return _guarded("wgan_g_loss", lambda: ad.neg(ad.mean(d_fake)), d_fake)


# ---------------------------------------------------------------------------
# neural information measure


def log_mean_exp(values: np.ndarray) -> float:
    m = float(np.max(values))
    return m + math.log(float(np.mean(np.exp(values - m))))


def mine_estimate(t_joint: ad.Node, t_marginal: ad.Node) -> ad.Node:
    """Donsker-Varadhan bound ``mean(T_joint) - log mean(exp(T_marginal))``.

    The log-mean-exp is shifted by the batch maximum; the shift is a constant,
    so gradients are unaffected.
    """
    if t_marginal.shape[0] < 2:
        raise ValueError("marginal scores need at least two rows")

    def fn():
        tape = t_marginal.tape
        shift = tape.const(np.max(t_marginal.value))
        lme = ad.add(ad.log(ad.mean(ad.exp(ad.sub(t_marginal, shift)))), shift)
        return ad.sub(ad.mean(t_joint), lme)

    return _guarded("mine_estimate", fn, t_joint, t_marginal)


def marginal_permutation(n: int, rng: RngStream) -> np.ndarray:
    """Random permutation of ``range(n)`` other than the identity."""
    if n < 2:
        raise ValueError("marginal shuffle needs a batch of at least two")
    ident = np.arange(n)
    while True:
        perm = rng.permutation(n)
        if not np.array_equal(perm, ident):
            return perm


@dataclass
class MineState:
    """Moving average of ``mean(exp(T_marginal))``, kept in log space."""

    decay: float = 0.99
    log_ema: float | None = None

    def __post_init__(self):
        if not 0.0 <= self.decay < 1.0:
            raise ValueError("ema decay must lie in [0, 1)")

    @property
    def ema(self) -> float | None:
        return None if self.log_ema is None else math.exp(self.log_ema)

    def updated(self, batch_lme: float) -> "MineState":
        if self.log_ema is None or self.decay == 0.0:
            return MineState(self.decay, batch_lme)
        new = np.logaddexp(math.log(self.decay) + self.log_ema, math.log1p(-self.decay) + batch_lme)
        return MineState(self.decay, float(new))


def mine_scores(m_nodes: dict, m_spec: MlpSpec, z: ad.Node, xhat: ad.Node, perm: np.ndarray):
    """Statistics-network scores on aligned pairs and on pairs with ``z`` shuffled.

    Both sets of pairs go through the network as one stacked batch.
    """
    n = z.shape[0]
    z_both = ad.concat_rows(z, z.tape.const(z.value[perm]))
    scores = statistics_forward(m_nodes, m_spec, z_both, ad.concat_rows(xhat, xhat))
    return ad.slice_rows(scores, 0, n), ad.slice_rows(scores, n, 2 * n)


def mine_gradient(
    m_params: ParamSet,
    m_spec: MlpSpec,
    z: np.ndarray,
    xhat: np.ndarray,
    perm: np.ndarray,
    state: MineState,
) -> tuple[dict, MineState, float]:
    """Ascent gradient of the MI bound w.r.t. the statistics network.

    The denominator of the log term's gradient is the moving average carried
    in ``state`` rather than the batch mean, which removes most of the bias of
    the minibatch gradient. Returns ``(grads by name, new state, estimate)``;
    the estimate uses the batch mean.
    """
    tape = ad.Tape()
    m_nodes = as_leaves(tape, m_params)
    t_joint, t_marg = mine_scores(m_nodes, m_spec, tape.const(z), tape.const(xhat), perm)
    estimate = mine_estimate(t_joint, t_marg).item()

    new_state = state.updated(log_mean_exp(t_marg.value))
    assert new_state.log_ema is not None and math.isfinite(new_state.log_ema)
    # surrogate whose gradient is mean(dT_joint) - mean(exp(T_marg) dT_marg) / ema
    ratio = ad.mean(ad.exp(ad.sub(t_marg, tape.const(new_state.log_ema))))
    surrogate = ad.sub(ad.mean(t_joint), ratio)
    grads = ad.backward(surrogate, list(m_nodes.values()))
    return {name: grads[node] for name, node in m_nodes.items()}, new_state, estimate


# ---------------------------------------------------------------------------
# generator update


def global_norm(grads: dict) -> float:
    return math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))


def ver_generator_gradient(adv_grad: dict, mi_grad: dict, lam: float, clip_mode: str = "adaptive") -> dict:
    """Descent direction ``adv_grad - lam * clip(mi_grad)`` for the generator.

    Adaptive clipping rescales the whole MI gradient so its global norm does
    not exceed that of the adversarial gradient.
    """
    if list(adv_grad) != list(mi_grad):
        raise ValueError(f"gradient maps cover different parameters: {list(adv_grad)} vs {list(mi_grad)}")
    if lam == 0:
        return dict(adv_grad)
    factor = lam
    if clip_mode == "adaptive":
        mi_norm = global_norm(mi_grad)
        adv_norm = global_norm(adv_grad)
        if mi_norm > adv_norm:
            factor = lam * adv_norm / mi_norm
    elif clip_mode != "none":
        raise ValueError(f"unknown clip mode {clip_mode!r}")
    return {name: adv_grad[name] - factor * mi_grad[name] for name in adv_grad}
