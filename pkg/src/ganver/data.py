"""Synthetic Gaussian-mixture benchmarks, latent priors and labeled RNG streams."""
from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

RING_SIGMA = 0.05
GRID_SIGMA = 0.05


class RngStream:
    """Deterministic random stream identified by ``(seed, label)``.

    The key is a hash of both parts fed to numpy's counter-based Philox
    generator, so streams with different labels are independent and the same
    pair always yields the same sequence on any platform.
    """

    def __init__(self, seed: int, label: str):
        self.seed = int(seed)
        self.label = label
        digest = hashlib.blake2b(f"{self.seed}/{label}".encode(), digest_size=16).digest()
        key = int.from_bytes(digest, "little")
        self.gen = np.random.Generator(np.random.Philox(key=key))

    def child(self, label: str) -> "RngStream":
        return RngStream(self.seed, f"{self.label}/{label}")

    def normal(self, shape) -> np.ndarray:
        return self.gen.standard_normal(shape)

    def uniform(self, shape, low=0.0, high=1.0) -> np.ndarray:
        return self.gen.uniform(low, high, shape)

    def integers(self, high: int, size=None) -> np.ndarray:
        return self.gen.integers(0, high, size)

    def permutation(self, n: int) -> np.ndarray:
        return self.gen.permutation(n)

    def __repr__(self):
        return f"RngStream(seed={self.seed}, label={self.label!r})"


@dataclass
class GmmSpec:
    """Equal-weight isotropic Gaussian mixture in the plane."""

    means: np.ndarray
    sigma: float
    name: str = field(default="custom")

    def __post_init__(self):
        self.means = np.asarray(self.means, dtype=np.float64).reshape(-1, 2)
        if not self.sigma >= 0:
            raise ValueError(f"sigma must be nonnegative, got {self.sigma}")
        if len(np.unique(self.means, axis=0)) != len(self.means):
            raise ValueError("mixture means must be pairwise distinct")

    @property
    def n_components(self) -> int:
        return len(self.means)


def make_ring_spec(sigma: float = RING_SIGMA, n_components: int = 8, radius: float = 1.0) -> GmmSpec:
    angles = 2 * np.pi * np.arange(n_components) / n_components
    means = radius * np.stack([np.cos(angles), np.sin(angles)], axis=1)
    return GmmSpec(means, sigma, "ring")


def make_grid_spec(sigma: float = GRID_SIGMA, per_side: int = 5, half_width: float = 4.0) -> GmmSpec:
    """``per_side`` x ``per_side`` means spaced evenly over ``[-half_width, half_width]^2``."""
    ticks = np.linspace(-half_width, half_width, per_side)
    xx, yy = np.meshgrid(ticks, ticks, indexing="ij")
    means = np.stack([xx.ravel(), yy.ravel()], axis=1)
    return GmmSpec(means, sigma, "grid")


def make_spec(dataset: str, sigma: float | None = None) -> GmmSpec:
    if dataset == "ring":
        return make_ring_spec(RING_SIGMA if sigma is None else sigma)
    if dataset == "grid":
        return make_grid_spec(GRID_SIGMA if sigma is None else sigma)
    raise ValueError(f"unknown dataset {dataset!r} (expected 'ring' or 'grid')")


def sample_gmm(spec: GmmSpec, n: int, rng: RngStream) -> np.ndarray:
    if n < 1:
        raise ValueError("n must be at least 1")
    comp = rng.integers(spec.n_components, size=n)
    noise = rng.normal((n, 2))
    return spec.means[comp] + spec.sigma * noise


def sample_latent(dim: int, n: int, rng: RngStream, prior: str = "normal") -> np.ndarray:
    if dim < 1 or n < 1:
        raise ValueError("dim and n must be at least 1")
    if prior == "normal":
        return rng.normal((n, dim))
    if prior == "uniform":
        return rng.uniform((n, dim), -1.0, 1.0)
    raise ValueError(f"unknown latent prior {prior!r}")


def write_samples_csv(path, points: np.ndarray) -> None:
    points = np.asarray(points, dtype=np.float64)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "y"])
        for x, y in points:
            w.writerow([f"{x:.17g}", f"{y:.17g}"])


def read_samples_csv(path) -> np.ndarray:
    path = Path(path)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or [c.strip() for c in rows[0]] != ["x", "y"]:
        raise ValueError(f"{path}: expected header 'x,y'")
    try:
        pts = np.array([[float(a), float(b)] for a, b in rows[1:]], dtype=np.float64)
    except ValueError as err:
        raise ValueError(f"{path}: malformed sample row ({err})") from None
    return pts.reshape(-1, 2)
