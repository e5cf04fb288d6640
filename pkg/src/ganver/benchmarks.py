"""Stand-alone check of the MI estimator on a pair with known mutual information."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import objectives as obj
from .data import RngStream
from .networks import MlpSpec, kaiming_init
from .train import AdamState, adam_step


def gaussian_mi(rho: float) -> float:
    """Mutual information in nats of a standard bivariate normal with correlation ``rho``."""
    return -0.5 * math.log1p(-rho * rho)


@dataclass
class MiBenchmarkResult:
    rho: float
    true_mi: float
    estimates: np.ndarray  # per-step batch estimates

    def tail_mean(self, last: int = 500) -> float:
        return float(np.mean(self.estimates[-last:]))


def correlated_pairs(rho: float, n: int, rng: RngStream) -> tuple[np.ndarray, np.ndarray]:
    a = rng.normal((n, 1))
    b = rho * a + math.sqrt(1.0 - rho * rho) * rng.normal((n, 1))
    return a, b


def run_gaussian_mi_benchmark(
    rho: float = 0.8,
    steps: int = 5000,
    batch_size: int = 256,
    hidden: tuple = (128,),
    lr: float = 2e-4,
    ema_decay: float = 0.99,
    seed: int = 0,
) -> MiBenchmarkResult:
    """Train a statistics network on fresh correlated batches and record every batch estimate.

    ``a`` plays the role of the generated sample and ``b`` the latent code, so the
    network, the shuffle and the EMA-corrected update are exactly those used
    in training.
    """
    if not -1.0 < rho < 1.0:
        raise ValueError("rho must lie strictly between -1 and 1")
    spec = MlpSpec((2, *hidden, 1), "leaky_relu", "identity", 0.2)
    root = RngStream(seed, "mi-benchmark")
    params = kaiming_init(spec, root.child("init"))
    adam = AdamState.zeros_like(params)
    state = obj.MineState(ema_decay)
    data_rng, shuffle_rng = root.child("data"), root.child("shuffle")
    estimates = np.empty(steps)
    for i in range(steps):
        a, b = correlated_pairs(rho, batch_size, data_rng)
        perm = obj.marginal_permutation(batch_size, shuffle_rng)
        grads, state, estimates[i] = obj.mine_gradient(params, spec, b, a, perm, state)
        params, adam = adam_step(params, {k: -g for k, g in grads.items()}, adam, lr, 0.5, 0.999)
    return MiBenchmarkResult(rho, gaussian_mi(rho), estimates)
