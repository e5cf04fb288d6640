"""Reference computations that do not touch the tape engine."""
import itertools
import math

import numpy as np


def central_diff(f, x: np.ndarray, step: float = 1e-5) -> np.ndarray:
    """Central finite-difference gradient of scalar ``f`` at array ``x``."""
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        orig = x[idx]
        x[idx] = orig + step
        hi = f(x)
        x[idx] = orig - step
        lo = f(x)
        x[idx] = orig
        grad[idx] = (hi - lo) / (2 * step)
    return grad


def param_fd(f, params: dict, step: float = 1e-5) -> dict:
    """Finite differences of ``f(params)`` w.r.t. every tensor in ``params``."""
    out = {}
    for name in params:
        def g(value, name=name):
            trial = dict(params)
            trial[name] = value
            return f(trial)

        out[name] = central_diff(g, params[name], step)
    return out


def rel_err(a: np.ndarray, b: np.ndarray, floor: float = 1e-5) -> float:
    """Norm-wise relative error.

    The denominator never drops below ``floor``: a tensor whose true gradient
    is exactly zero (e.g. the output bias of a critic whose loss is a
    difference of means) would otherwise divide finite-difference noise of
    order 1e-11 by itself.
    """
    a, b = np.asarray(a, float), np.asarray(b, float)
    scale = max(np.linalg.norm(a), np.linalg.norm(b), floor)
    return float(np.linalg.norm(a - b) / scale)


def max_rel_err(analytic: dict, numeric: dict) -> float:
    return max(rel_err(analytic[k], numeric[k]) for k in numeric)


# -- hand-rolled leaky-ReLU MLP ---------------------------------------------

def mlp_np(params, x, alpha=0.2, n_layers=None):
    n_layers = n_layers or len(params) // 2
    h = x
    for i in range(n_layers):
        h = h @ params[f"weight-{i}"].T + params[f"bias-{i}"]
        if i < n_layers - 1:
            h = np.where(h > 0, h, alpha * h)
    return h


def mlp_input_grad_np(params, x, alpha=0.2):
    """Per-row d(scalar output)/d(input) of a leaky-ReLU MLP, by manual chain rule."""
    n_layers = len(params) // 2
    pre = []
    h = x
    for i in range(n_layers):
        z = h @ params[f"weight-{i}"].T + params[f"bias-{i}"]
        pre.append(z)
        h = np.where(z > 0, z, alpha * z) if i < n_layers - 1 else z
    g = np.ones((x.shape[0], 1))
    for i in reversed(range(n_layers)):
        if i < n_layers - 1:
            g = g * np.where(pre[i] > 0, 1.0, alpha)
        g = g @ params[f"weight-{i}"]
    return g


def softplus_np(t):
    return np.logaddexp(0.0, t)


def vanilla_d_loss_np(real, fake):
    return float(np.mean(softplus_np(-real)) + np.mean(softplus_np(fake)))


def mine_np(t_joint, t_marg):
    return float(np.mean(t_joint) - math.log(np.mean(np.exp(t_marg))))


# -- metrics by brute force ---------------------------------------------------

def wasserstein_bruteforce(a, b):
    n = len(a)
    best = math.inf
    for perm in itertools.permutations(range(n)):
        cost = sum(math.dist(a[i], b[j]) for i, j in enumerate(perm))
        best = min(best, cost)
    return best / n


def hand_histogram_kl(real, gen, spec, alpha=1.0):
    """Dense histogram over the full padded grid, built with numpy.histogram2d."""
    side = spec.sigma
    pooled = np.vstack([spec.means, real, gen])
    lo = pooled.min(axis=0) - 6 * side
    hi = pooled.max(axis=0) + 6 * side
    nr, nc = (np.ceil((hi - lo) / side).astype(int) + 1).tolist()
    edges = [lo[0] + side * np.arange(nr + 1), lo[1] + side * np.arange(nc + 1)]
    hr = np.histogram2d(real[:, 0], real[:, 1], bins=edges)[0].ravel() + alpha
    hg = np.histogram2d(gen[:, 0], gen[:, 1], bins=edges)[0].ravel() + alpha
    p, q = hr / hr.sum(), hg / hg.sum()
    return float(np.sum(p * np.log(p / q)))


def mmd_naive(x, y, h):
    k = lambda a, b: math.exp(-sum((ai - bi) ** 2 for ai, bi in zip(a, b)) / (2 * h * h))  # noqa: E731
    m, n = len(x), len(y)
    xx = sum(k(x[i], x[j]) for i in range(m) for j in range(m) if i != j) / (m * (m - 1))
    yy = sum(k(y[i], y[j]) for i in range(n) for j in range(n) if i != j) / (n * (n - 1))
    xy = sum(k(x[i], y[j]) for i in range(m) for j in range(n)) / (m * n)
    return xx + yy - 2 * xy


def one_nn_recount(real, gen):
    """Plain double loop; first strictly-smaller distance wins, so ties keep the lowest index."""
    pooled = [tuple(p) for p in real] + [tuple(p) for p in gen]
    n = len(real)
    labels = [1] * n + [0] * len(gen)
    preds = []
    for i, p in enumerate(pooled):
        best_j, best_d = None, math.inf
        for j, q in enumerate(pooled):
            if j == i:
                continue
            d = sum((a - b) ** 2 for a, b in zip(p, q))
            if d < best_d:
                best_j, best_d = j, d
        preds.append(labels[best_j])
    tp = sum(1 for i in range(n) if preds[i] == 1)
    tn = sum(1 for i in range(n, 2 * n) if preds[i] == 0)
    fp, fn = n - tn, n - tp
    return {
        "ta": 100 * (tp + tn) / (2 * n),
        "ra": 100 * tp / n,
        "ga": 100 * tn / n,
        "pr": 100 * tp / (tp + fp) if tp + fp else 0.0,
        "re": 100 * tp / (tp + fn),
    }
