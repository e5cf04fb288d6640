"""Sample-based evaluation of generated 2-D point clouds against a known mixture."""
from __future__ import annotations

import csv
import math
from dataclasses import astuple, dataclass, fields
from typing import Callable

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial import cKDTree
from scipy.spatial.distance import cdist, pdist

from .data import GmmSpec, RngStream, sample_gmm

EXACT_CAP = 512
REPORT_FIELDS = ("modes", "hq", "kl", "wd", "mmd", "ta", "ra", "ga", "pr", "re")


@dataclass(frozen=True)
class NNReport:
    ta: float
    ra: float
    ga: float
    pr: float
    re: float


@dataclass(frozen=True)
class MetricsReport:
    modes: float
    hq: float
    kl: float
    wd: float
    mmd: float
    ta: float
    ra: float
    ga: float
    pr: float
    re: float

    def as_row(self) -> list[float]:
        return list(astuple(self))

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass(frozen=True)
class EvalProtocol:
    n_per_side: int = 2500
    repeats: int = 5

    def __post_init__(self):
        if self.n_per_side < 2 or self.repeats < 1:
            raise ValueError("need n_per_side >= 2 and repeats >= 1")


def _points(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"expected an (n, d) array, got shape {x.shape}")
    return x


def nearest_mean_distance(points: np.ndarray, spec: GmmSpec) -> np.ndarray:
    return cdist(points, spec.means).min(axis=1)


def count_modes(gen, spec: GmmSpec) -> int:
    """Components with at least one sample within three standard deviations of their mean."""
    gen = _points(gen)
    if len(gen) == 0:
        raise ValueError("count_modes needs at least one sample")
    dist, _ = cKDTree(gen).query(spec.means, k=1)
    return int(np.sum(dist <= 3 * spec.sigma))


def high_quality_ratio(gen, spec: GmmSpec) -> float:
    gen = _points(gen)
    if len(gen) == 0:
        raise ValueError("high_quality_ratio needs at least one sample")
    return float(np.mean(nearest_mean_distance(gen, spec) <= 3 * spec.sigma))


def _cell_counts(points: np.ndarray, origin: np.ndarray, side: float, ncols: int) -> dict:
    ij = np.floor((points - origin) / side).astype(np.int64)
    keys, counts = np.unique(ij[:, 0] * ncols + ij[:, 1], return_counts=True)
    return dict(zip(keys.tolist(), counts.tolist()))


def smoothed_kl(real_counts, gen_counts, alpha: float = 1.0) -> float:
    """KL between two histograms over the same cells after adding ``alpha`` to every cell."""
    a = np.asarray(real_counts, dtype=np.float64) + alpha
    b = np.asarray(gen_counts, dtype=np.float64) + alpha
    if a.shape != b.shape or a.size == 0:
        raise ValueError("histograms must be nonempty and share their cells")
    p, q = a / a.sum(), b / b.sum()
    return max(float(np.sum(p * np.log(p / q))), 0.0)


def kl_binned(real, gen, spec: GmmSpec, alpha: float = 1.0) -> float:
    """KL(real || generated) between square-binned histograms with cell side sigma.

    The grid covers the bounding box of the mixture means and both samples,
    padded by 6 sigma. Every grid cell receives ``alpha`` pseudo-counts; cells
    empty in both samples are accounted for in closed form.
    """
    real, gen = _points(real), _points(gen)
    if len(real) == 0 or len(gen) == 0:
        raise ValueError("kl_binned needs nonempty samples")
    side = spec.sigma
    if not side > 0:
        raise ValueError("kl_binned needs a positive sigma for the cell side")
    pooled = np.vstack([spec.means, real, gen])
    lo = pooled.min(axis=0) - 6 * side
    hi = pooled.max(axis=0) + 6 * side
    nrows, ncols = (np.ceil((hi - lo) / side).astype(np.int64) + 1).tolist()
    n_cells = nrows * ncols
    cr = _cell_counts(real, lo, side, ncols)
    cg = _cell_counts(gen, lo, side, ncols)
    keys = sorted(set(cr) | set(cg))
    zp = len(real) + alpha * n_cells
    zq = len(gen) + alpha * n_cells
    p = (np.array([cr.get(c, 0) for c in keys], dtype=np.float64) + alpha) / zp
    q = (np.array([cg.get(c, 0) for c in keys], dtype=np.float64) + alpha) / zq
    kl = float(np.sum(p * np.log(p / q)))
    empty = n_cells - len(keys)
    if empty:
        kl += empty * (alpha / zp) * math.log(zq / zp)
    return max(kl, 0.0)


def exact_wasserstein(real: np.ndarray, gen: np.ndarray) -> float:
    cost = cdist(real, gen)
    rows, cols = linear_sum_assignment(cost)
    return float(cost[rows, cols].mean())


def wasserstein_empirical(real, gen, rng: RngStream | None = None, exact_cap: int = EXACT_CAP) -> float:
    """Order-1 Wasserstein distance between two equal-size empirical measures.

    Up to ``exact_cap`` points the optimal matching is solved exactly. Larger
    sets are shuffled and split into ``ceil(n / exact_cap)`` disjoint
    near-equal chunks; the result is the size-weighted mean of the per-chunk
    exact distances.
    """
    real, gen = _points(real), _points(gen)
    n = len(real)
    if n != len(gen):
        raise ValueError(f"wasserstein_empirical needs equal sizes, got {n} and {len(gen)}")
    if n == 0:
        raise ValueError("wasserstein_empirical needs nonempty samples")
    if n <= exact_cap:
        return exact_wasserstein(real, gen)
    rng = rng or RngStream(0, "wd")
    pr, pg = rng.permutation(n), rng.permutation(n)
    chunks = math.ceil(n / exact_cap)
    total = 0.0
    for ir, ig in zip(np.array_split(pr, chunks), np.array_split(pg, chunks)):
        total += len(ir) * exact_wasserstein(real[ir], gen[ig])
    return total / n


def median_bandwidth(pooled: np.ndarray) -> float:
    return float(np.median(pdist(pooled)))


def mmd_gaussian(real, gen, bandwidth: float | None = None) -> float:
    """Unbiased squared MMD with kernel ``exp(-|a-b|^2 / (2 h^2))``.

    ``bandwidth`` defaults to the median pairwise distance of the pooled sample.
    """
    real, gen = _points(real), _points(gen)
    m, n = len(real), len(gen)
    if m < 2 or n < 2:
        raise ValueError("mmd_gaussian needs at least two points per sample")
    if bandwidth is None:
        bandwidth = median_bandwidth(np.vstack([real, gen]))
    if not bandwidth > 0:
        raise ValueError("degenerate MMD bandwidth (all points identical?)")
    gamma = 1.0 / (2.0 * bandwidth**2)

    def within(x):
        d = pdist(x, "sqeuclidean")
        return 2.0 * np.exp(-gamma * d).sum() / (len(x) * (len(x) - 1))

    cross = np.exp(-gamma * cdist(real, gen, "sqeuclidean")).mean()
    return float(within(real) + within(gen) - 2.0 * cross)


def _nearest_other(pooled: np.ndarray, block: int = 512) -> np.ndarray:
    """Index of each row's nearest other row; ties go to the lowest index."""
    n = len(pooled)
    out = np.empty(n, dtype=np.int64)
    for lo in range(0, n, block):
        hi = min(lo + block, n)
        diff = pooled[lo:hi, None, :] - pooled[None, :, :]
        d = np.einsum("ijk,ijk->ij", diff, diff)
        d[np.arange(hi - lo), np.arange(lo, hi)] = np.inf
        out[lo:hi] = np.argmin(d, axis=1)
    return out


def one_nn_loo(real, gen) -> NNReport:
    """Leave-one-out 1-nearest-neighbour two-sample classifier, in percent.

    Real is the positive class for precision and recall.
    """
    real, gen = _points(real), _points(gen)
    n = len(real)
    if n != len(gen):
        raise ValueError(f"one_nn_loo needs equal sizes, got {n} and {len(gen)}")
    if n < 2:
        raise ValueError("one_nn_loo needs at least two points per sample")
    labels = np.r_[np.ones(n, dtype=bool), np.zeros(n, dtype=bool)]
    pred = labels[_nearest_other(np.vstack([real, gen]))]
    tp = int(np.sum(pred[:n]))
    fn = n - tp
    tn = int(np.sum(~pred[n:]))
    fp = n - tn
    pct = lambda a, b: 100.0 * a / b if b else 0.0  # noqa: E731
    return NNReport(
        ta=pct(tp + tn, 2 * n),
        ra=pct(tp, n),
        ga=pct(tn, n),
        pr=pct(tp, tp + fp),
        re=pct(tp, tp + fn),
    )


def compute_report(real, gen, spec: GmmSpec, rng: RngStream | None = None) -> MetricsReport:
    nn = one_nn_loo(real, gen)
    return MetricsReport(
        modes=float(count_modes(gen, spec)),
        hq=high_quality_ratio(gen, spec),
        kl=kl_binned(real, gen, spec),
        wd=wasserstein_empirical(real, gen, rng),
        mmd=mmd_gaussian(real, gen),
        ta=nn.ta,
        ra=nn.ra,
        ga=nn.ga,
        pr=nn.pr,
        re=nn.re,
    )


def average_reports(reports: list[MetricsReport]) -> MetricsReport:
    if not reports:
        raise ValueError("no reports to average")
    cols = np.array([r.as_row() for r in reports]).mean(axis=0)
    return MetricsReport(*map(float, cols))


def evaluate(
    spec: GmmSpec,
    sampler: Callable[[int, RngStream], np.ndarray],
    protocol: EvalProtocol = EvalProtocol(),
    rng: RngStream | None = None,
) -> MetricsReport:
    """Average the full battery over ``protocol.repeats`` fresh real/generated draws.

    ``sampler(n, stream)`` must return an ``(n, 2)`` array.
    """
    rng = rng or RngStream(0, "eval")
    reports = []
    for r in range(protocol.repeats):
        round_rng = rng.child(f"round{r}")
        real = sample_gmm(spec, protocol.n_per_side, round_rng.child("real"))
        gen = _points(sampler(protocol.n_per_side, round_rng.child("gen")))
        if gen.shape != (protocol.n_per_side, 2):
            raise ValueError(f"sampler returned shape {gen.shape}, expected ({protocol.n_per_side}, 2)")
        reports.append(compute_report(real, gen, spec, round_rng.child("wd")))
    return average_reports(reports)


def write_reports_csv(path, reports, epochs=None) -> None:
    header = list(REPORT_FIELDS) if epochs is None else ["epoch", *REPORT_FIELDS]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i, rep in enumerate(reports):
            row = [repr(float(v)) for v in rep.as_row()]
            w.writerow(row if epochs is None else [str(epochs[i]), *row])
