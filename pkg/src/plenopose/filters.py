"""Light-field filter banks: angular, sEPI and tEPI.

Each bank is a linear map of the light field followed by a pointwise
activation.  ``filter_vjp`` is the exact vector-Jacobian product of that map,
with respect to both the weights and the input samples.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import List, Sequence, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .lightfield import LightField4D


class ShapeError(ValueError):
    pass


@dataclass(frozen=True)
class Activation:
    kind: str = "identity"

    def __post_init__(self):
        if self.kind not in ("identity", "relu"):
            raise ValueError(f"unknown activation {self.kind!r}")

    def __call__(self, z: np.ndarray) -> np.ndarray:
        if self.kind == "relu":
            return np.maximum(z, 0.0)
        return z

    def derivative(self, z: np.ndarray) -> np.ndarray:
        # relu'(0) := 0
        if self.kind == "relu":
            return (z > 0).astype(z.dtype)
        return np.ones_like(z)


@dataclass(frozen=True)
class FeatureMap:
    data: np.ndarray  # (H, W, C)

    @property
    def channels(self) -> int:
        return self.data.shape[2]


@dataclass(frozen=True, eq=False)
class AngularFilterBank:
    """Weights ``w[j, c, t, s]``: one ``1 x 1 x (H_a x W_a)`` filter per output."""

    weights: np.ndarray
    activation: Activation = Activation()

    def __post_init__(self):
        if self.weights.ndim != 4 or self.weights.shape[1] != 3:
            raise ShapeError(f"angular weights must be J x 3 x H_a x W_a, got {self.weights.shape}")
        if not np.all(np.isfinite(self.weights)):
            raise ValueError("weights must be finite")

    @property
    def num_filters(self) -> int:
        return self.weights.shape[0]

    @classmethod
    def random(cls, num_filters, angular_h, angular_w, seed=0, activation="identity"):
        rng = np.random.default_rng(seed)
        w = rng.uniform(-0.1, 0.1, size=(num_filters, 3, angular_h, angular_w))
        return cls(w, Activation(activation))


@dataclass(frozen=True, eq=False)
class EpiFilterBank:
    """3D EPI filters.

    sEPI weights are ``w[j, c, v, u, s]`` (``J x 3 x n x n x W_a``) and run on
    the center angular row; tEPI weights are ``w[j, c, v, u, t]``
    (``J x 3 x n x n x H_a``) and run on the center angular column, read from
    the flattened ``H_a * W_a`` view stack with dilation ``W_a``.
    """

    orientation: str
    weights: np.ndarray
    activation: Activation = Activation()

    def __post_init__(self):
        if self.orientation not in ("sEPI", "tEPI"):
            raise ValueError(f"orientation must be 'sEPI' or 'tEPI', got {self.orientation!r}")
        w = self.weights
        if w.ndim != 5 or w.shape[1] != 3 or w.shape[2] != w.shape[3]:
            raise ShapeError(f"EPI weights must be J x 3 x n x n x A, got {w.shape}")
        if w.shape[2] % 2 == 0:
            raise ShapeError("EPI kernel size must be odd")
        if not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite")

    @property
    def num_filters(self) -> int:
        return self.weights.shape[0]

    @property
    def kernel_size(self) -> int:
        return self.weights.shape[2]

    @classmethod
    def random(cls, orientation, num_filters, kernel_size, angular, seed=0, activation="identity"):
        rng = np.random.default_rng(seed)
        w = rng.uniform(-0.1, 0.1, size=(num_filters, 3, kernel_size, kernel_size, angular))
        return cls(orientation, w, Activation(activation))

    def dilation(self, lf: LightField4D) -> int:
        return 1 if self.orientation == "sEPI" else lf.angular_w


FilterBank = Union[AngularFilterBank, EpiFilterBank]


def _check_angular(lf: LightField4D, bank: AngularFilterBank):
    if bank.weights.shape[2:] != (lf.angular_h, lf.angular_w):
        raise ShapeError(
            f"bank angular dims {bank.weights.shape[2:]} do not match field "
            f"{(lf.angular_h, lf.angular_w)}")


def _epi_stack(lf: LightField4D, bank: EpiFilterBank) -> np.ndarray:
    """The ``(H, W, A, 3)`` angular stack one EPI bank convolves over."""
    if bank.orientation == "sEPI":
        if bank.weights.shape[4] != lf.angular_w:
            raise ShapeError(f"sEPI bank spans {bank.weights.shape[4]} views, field has W_a={lf.angular_w}")
        return lf.data[:, :, lf.center_t, :, :]
    if bank.weights.shape[4] != lf.angular_h:
        raise ShapeError(f"tEPI bank spans {bank.weights.shape[4]} views, field has H_a={lf.angular_h}")
    flat = lf.data.reshape(lf.spatial_h, lf.spatial_w, lf.angular_h * lf.angular_w, 3)
    return flat[:, :, lf.center_s::bank.dilation(lf), :]


def _epi_windows(stack: np.ndarray, n: int) -> np.ndarray:
    p = (n - 1) // 2
    padded = np.pad(stack, ((p, p), (p, p), (0, 0), (0, 0)))
    # (H, W, A, C, v, u)
    return sliding_window_view(padded, (n, n), axis=(0, 1))


def _preactivation(lf: LightField4D, bank: FilterBank) -> np.ndarray:
    if isinstance(bank, AngularFilterBank):
        _check_angular(lf, bank)
        return np.einsum("yxtsc,jcts->yxj", lf.data, bank.weights, optimize=True)
    windows = _epi_windows(_epi_stack(lf, bank), bank.kernel_size)
    return np.einsum("yxacvu,jcvua->yxj", windows, bank.weights, optimize=True)


def apply_angular(lf: LightField4D, bank: AngularFilterBank) -> FeatureMap:
    return FeatureMap(bank.activation(_preactivation(lf, bank)))


def apply_epi(lf: LightField4D, bank: EpiFilterBank) -> FeatureMap:
    return FeatureMap(bank.activation(_preactivation(lf, bank)))


def apply_bank(lf: LightField4D, bank: FilterBank) -> FeatureMap:
    if isinstance(bank, AngularFilterBank):
        return apply_angular(lf, bank)
    return apply_epi(lf, bank)


def concat_features(maps: Sequence[FeatureMap]) -> FeatureMap:
    if not maps:
        raise ShapeError("need at least one feature map")
    shape = maps[0].data.shape[:2]
    for m in maps[1:]:
        if m.data.shape[:2] != shape:
            raise ShapeError(f"spatial dims differ: {m.data.shape[:2]} vs {shape}")
    return FeatureMap(np.concatenate([m.data for m in maps], axis=2))


def filter_vjp(lf: LightField4D, bank: FilterBank, upstream: np.ndarray):
    """Pull ``upstream`` (shape of the forward output) back to weights and input.

    Returns ``(grad_weights, grad_input)``, shaped like ``bank.weights`` and
    ``lf.data`` respectively.
    """
    z = _preactivation(lf, bank)
    upstream = np.asarray(upstream, dtype=float)
    if upstream.shape != z.shape:
        raise ShapeError(f"upstream shape {upstream.shape} != output shape {z.shape}")
    gz = upstream * bank.activation.derivative(z)

    if isinstance(bank, AngularFilterBank):
        grad_w = np.einsum("yxj,yxtsc->jcts", gz, lf.data, optimize=True)
        grad_in = np.einsum("yxj,jcts->yxtsc", gz, bank.weights, optimize=True)
        return grad_w, grad_in

    n = bank.kernel_size
    p = (n - 1) // 2
    stack = _epi_stack(lf, bank)
    windows = _epi_windows(stack, n)
    grad_w = np.einsum("yxj,yxacvu->jcvua", gz, windows, optimize=True)

    h, w = lf.spatial_h, lf.spatial_w
    gpad = np.zeros((h + 2 * p, w + 2 * p) + stack.shape[2:])
    for v in range(n):
        for u in range(n):
            gpad[v:v + h, u:u + w] += np.einsum("yxj,jca->yxac", gz, bank.weights[:, :, v, u, :])
    gstack = gpad[p:p + h, p:p + w]

    grad_in = np.zeros_like(lf.data)
    if bank.orientation == "sEPI":
        grad_in[:, :, lf.center_t, :, :] = gstack
    else:
        grad_in[:, :, :, lf.center_s, :] = gstack
    return grad_w, grad_in


def angular_variance(lf: LightField4D) -> FeatureMap:
    """Per-pixel variance across views, averaged over color channels."""
    var = lf.data.var(axis=(2, 3))  # (H, W, 3)
    return FeatureMap(var.mean(axis=2, keepdims=True))


def save_bank(bank: FilterBank, path) -> Path:
    """Write ``bank.json`` and the little-endian float32 ``bank.f32`` blob."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    kind = "angular" if isinstance(bank, AngularFilterBank) else bank.orientation
    meta = {"kind": kind, "shape": list(bank.weights.shape), "activation": bank.activation.kind,
            "dtype": "<f4"}
    (path / "bank.json").write_text(json.dumps(meta, indent=2))
    bank.weights.astype("<f4").tofile(path / "bank.f32")
    return path


def load_bank(path) -> FilterBank:
    path = Path(path)
    meta = json.loads((path / "bank.json").read_text())
    w = np.fromfile(path / "bank.f32", dtype="<f4")
    shape = tuple(meta["shape"])
    if w.size != int(np.prod(shape)):
        raise ShapeError(f"bank.f32 holds {w.size} values, metadata expects {shape}")
    w = w.reshape(shape).astype(float)
    act = Activation(meta.get("activation", "identity"))
    if meta["kind"] == "angular":
        return AngularFilterBank(w, act)
    return EpiFilterBank(meta["kind"], w, act)


def lit_feature_banks(angular_h: int, angular_w: int, num_filters: int = 64, kernel_size: int = 3,
                      seed: int = 0, activation: str = "relu") -> List[FilterBank]:
    """The three first-layer banks with seeded uniform(-0.1, 0.1) weights."""
    return [
        AngularFilterBank.random(num_filters, angular_h, angular_w, seed, activation),
        EpiFilterBank.random("sEPI", num_filters, kernel_size, angular_w, seed + 1, activation),
        EpiFilterBank.random("tEPI", num_filters, kernel_size, angular_h, seed + 2, activation),
    ]
