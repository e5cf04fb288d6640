"""Multilayer perceptrons for the generator, discriminator and statistics network."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .data import RngStream

ParamSet = dict  # name -> float64 array, insertion-ordered: weight-0, bias-0, weight-1, ...

HIDDEN_ACTIVATIONS = ("leaky_relu", "relu", "tanh")
OUTPUT_ACTIVATIONS = ("identity", "sigmoid", "tanh")


@dataclass(frozen=True)
class MlpSpec:
    widths: tuple[int, ...]
    hidden_activation: str = "leaky_relu"
    output_activation: str = "identity"
    alpha: float = 0.2

    def __post_init__(self):
        object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))
        if len(self.widths) < 2 or min(self.widths) < 1:
            raise ValueError(f"need at least two positive widths, got {self.widths}")
        if self.hidden_activation not in HIDDEN_ACTIVATIONS:
            raise ValueError(f"unknown hidden activation {self.hidden_activation!r}")
        if self.output_activation not in OUTPUT_ACTIVATIONS:
            raise ValueError(f"unknown output activation {self.output_activation!r}")

    @property
    def n_layers(self) -> int:
        return len(self.widths) - 1

    @property
    def slope(self) -> float:
        """Negative-side slope used by hidden layers (0 for relu/tanh)."""
        return self.alpha if self.hidden_activation == "leaky_relu" else 0.0

    def shapes(self) -> dict[str, tuple[int, int]]:
        out = {}
        for i, (fan_in, fan_out) in enumerate(zip(self.widths[:-1], self.widths[1:])):
            out[f"weight-{i}"] = (fan_out, fan_in)
            out[f"bias-{i}"] = (1, fan_out)
        return out


def generator_spec(latent_dim=2, hidden=(128, 128), data_dim=2) -> MlpSpec:
    return MlpSpec((latent_dim, *hidden, data_dim), "leaky_relu", "identity", 0.2)


def discriminator_spec(hidden=(128, 128), data_dim=2) -> MlpSpec:
    return MlpSpec((data_dim, *hidden, 1), "leaky_relu", "identity", 0.2)


def statistics_spec(latent_dim=2, hidden=(128,), data_dim=2) -> MlpSpec:
    return MlpSpec((data_dim + latent_dim, *hidden, 1), "leaky_relu", "identity", 0.2)


def kaiming_std(fan_in: int, slope: float = 0.0) -> float:
    return math.sqrt(2.0 / ((1.0 + slope**2) * fan_in))


def kaiming_init(spec: MlpSpec, rng: RngStream) -> ParamSet:
    """He-normal weights, zero biases.

    Every layer uses the hidden activation's slope for its gain, including the
    output layer.
    """
    params = {}
    for name, shape in spec.shapes().items():
        if name.startswith("weight"):
            params[name] = kaiming_std(shape[1], spec.slope) * rng.normal(shape)
        else:
            params[name] = np.zeros(shape)
    return params


def check_params(params: ParamSet, spec: MlpSpec) -> None:
    expected = spec.shapes()
    if list(params) != list(expected):
        raise ValueError(f"parameter names {list(params)} do not match {list(expected)}")
    for name, shape in expected.items():
        if params[name].shape != shape:
            raise ValueError(f"{name}: shape {params[name].shape} does not match spec {shape}")


def _activate(h: ad.Node, kind: str, alpha: float) -> ad.Node:
    if kind == "leaky_relu":
        return ad.leaky_relu(h, alpha)
    if kind == "relu":
        return ad.relu(h)
    if kind == "tanh":
        return ad.tanh(h)
    if kind == "sigmoid":
        return ad.sigmoid(h)
    return h


def mlp_forward(nodes: dict, spec: MlpSpec, x: ad.Node) -> ad.Node:
    """Run the network on ``x``; ``nodes`` maps parameter names to tape nodes."""
    if x.shape[1] != spec.widths[0]:
        raise ad.ShapeError("mlp_forward", x.shape, (x.shape[0], spec.widths[0]))
    h = x
    last = spec.n_layers - 1
    for i in range(spec.n_layers):
        h = ad.add(ad.matmul(h, ad.transpose(nodes[f"weight-{i}"])), nodes[f"bias-{i}"])
        kind = spec.output_activation if i == last else spec.hidden_activation
        h = _activate(h, kind, spec.alpha)
    return h


def statistics_forward(nodes: dict, spec: MlpSpec, z: ad.Node, xhat: ad.Node) -> ad.Node:
    """Score each ``(xhat_i, z_i)`` pair; inputs are concatenated as ``[xhat | z]``."""
    if z.shape[0] != xhat.shape[0]:
        raise ad.ShapeError("statistics_forward", xhat.shape, z.shape)
    return mlp_forward(nodes, spec, ad.concat_cols(xhat, z))


def as_leaves(tape: ad.Tape, params: ParamSet) -> dict:
    return {name: tape.leaf(value) for name, value in params.items()}


def as_consts(tape: ad.Tape, params: ParamSet) -> dict:
    return {name: tape.const(value) for name, value in params.items()}


def predict(params: ParamSet, spec: MlpSpec, x: np.ndarray) -> np.ndarray:
    """Plain numpy forward pass, no tape."""
    h = np.asarray(x, dtype=np.float64)
    last = spec.n_layers - 1
    for i in range(spec.n_layers):
        h = h @ params[f"weight-{i}"].T + params[f"bias-{i}"]
        kind = spec.output_activation if i == last else spec.hidden_activation
        if kind == "leaky_relu":
            h = np.where(h > 0, h, spec.alpha * h)
        elif kind == "relu":
            h = np.maximum(h, 0.0)
        elif kind == "tanh":
            h = np.tanh(h)
        elif kind == "sigmoid":
            h = 1.0 / (1.0 + np.exp(-h))
    return h
