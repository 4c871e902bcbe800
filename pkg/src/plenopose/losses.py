"""Segmentation and center-vote objectives with analytic gradients.

The vote losses are sums over the participating pixels, not means.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import log_softmax, softmax

NUM_CLASSES = 3  # background, transparent, boundary


class LossDomainError(ValueError):
    pass


@dataclass(frozen=True)
class LossConfig:
    alpha: float = 1.0
    beta: float = 8.0
    gamma: float = 2.0
    tau: float = 0.5  # 1/px

    def __post_init__(self):
        for name in ("alpha", "beta", "gamma", "tau"):
            if not getattr(self, name) >= 0:
                raise ValueError(f"{name} must be >= 0")


@dataclass(frozen=True, eq=False)
class CenterVoteField:
    """Per-pixel center votes.

    ``pixels[p]`` is the pixel location ``c_p`` (x, y), ``offsets[p]`` the
    regressed offset ``h_p`` and ``confidences[p]`` the score ``b_p``.  The
    listed pixels form the participating set.
    """

    pixels: np.ndarray
    offsets: np.ndarray
    confidences: np.ndarray

    def __post_init__(self):
        pixels = np.asarray(self.pixels, dtype=float).reshape(-1, 2)
        offsets = np.asarray(self.offsets, dtype=float).reshape(-1, 2)
        conf = np.asarray(self.confidences, dtype=float).reshape(-1)
        if not (len(pixels) == len(offsets) == len(conf)):
            raise ValueError("pixels, offsets and confidences must have equal length")
        if not np.all(np.isfinite(offsets)):
            raise ValueError("offsets must be finite")
        if np.any(conf < 0) or np.any(conf > 1):
            raise ValueError("confidences must lie in [0, 1]")
        object.__setattr__(self, "pixels", pixels)
        object.__setattr__(self, "offsets", offsets)
        object.__setattr__(self, "confidences", conf)

    def __len__(self):
        return len(self.pixels)

    @property
    def endpoints(self) -> np.ndarray:
        """Voted center locations ``c_p + h_p``."""
        return self.pixels + self.offsets

    def mask(self, height: int, width: int) -> np.ndarray:
        m = np.zeros((height, width), dtype=bool)
        px = np.round(self.pixels).astype(int)
        m[px[:, 1], px[:, 0]] = True
        return m


def _class_weights(labels: np.ndarray) -> np.ndarray:
    """Per-pixel inverse-frequency weights with mean 1 over the image."""
    counts = np.bincount(labels.ravel(), minlength=NUM_CLASSES).astype(float)
    present = counts > 0
    per_class = np.zeros(NUM_CLASSES)
    per_class[present] = labels.size / (present.sum() * counts[present])
    return per_class[labels]


def _check_seg(logits, labels):
    logits = np.asarray(logits, dtype=float)
    labels = np.asarray(labels)
    if labels.size == 0:
        raise LossDomainError("empty image")
    if logits.shape != labels.shape + (NUM_CLASSES,):
        raise ValueError(f"logits {logits.shape} do not match labels {labels.shape}")
    if labels.min() < 0 or labels.max() >= NUM_CLASSES:
        raise ValueError("labels must be in {0, 1, 2}")
    return logits, labels.astype(int)


def seg_loss(logits, labels) -> float:
    """Class-frequency-balanced cross-entropy averaged over pixels."""
    logits, labels = _check_seg(logits, labels)
    logp = log_softmax(logits, axis=-1)
    nll = -np.take_along_axis(logp, labels[..., None], axis=-1)[..., 0]
    return float(np.mean(_class_weights(labels) * nll))


def seg_loss_grad(logits, labels) -> np.ndarray:
    logits, labels = _check_seg(logits, labels)
    grad = softmax(logits, axis=-1)
    grad[..., :] -= np.eye(NUM_CLASSES)[labels]
    return grad * (_class_weights(labels) / labels.size)[..., None]


def _residuals(votes: CenterVoteField, gt_center) -> np.ndarray:
    if len(votes) == 0:
        raise LossDomainError("vote set is empty")
    return np.asarray(gt_center, dtype=float) - votes.endpoints


def center_offset_loss(votes: CenterVoteField, gt_center) -> float:
    """``sum_p |g - (c_p + h_p)|_1``."""
    return float(np.abs(_residuals(votes, gt_center)).sum())


def center_offset_loss_grad(votes: CenterVoteField, gt_center) -> np.ndarray:
    """Gradient with respect to the offsets; ``sign(0) := 0``."""
    return -np.sign(_residuals(votes, gt_center))


def confidence_target(residual_norm, tau: float):
    return np.exp(-tau * np.asarray(residual_norm, dtype=float))


def confidence_loss(votes: CenterVoteField, gt_center, tau: float = LossConfig.tau) -> float:
    """``sum_p |b_p - exp(-tau |g - (c_p + h_p)|_2)|``."""
    r = np.linalg.norm(_residuals(votes, gt_center), axis=1)
    return float(np.abs(votes.confidences - confidence_target(r, tau)).sum())


def confidence_loss_grad(votes: CenterVoteField, gt_center, tau: float = LossConfig.tau):
    """Returns ``(d/d confidences, d/d offsets)``."""
    res = _residuals(votes, gt_center)
    r = np.linalg.norm(res, axis=1)
    target = confidence_target(r, tau)
    sgn = np.sign(votes.confidences - target)
    safe_r = np.where(r > 0, r, 1.0)
    # d target / d h = tau * target * res / |res|
    dtarget_dh = (tau * target / safe_r)[:, None] * res
    dtarget_dh[r == 0] = 0.0
    return sgn, -sgn[:, None] * dtarget_dh


def total_loss(seg: float, pos: float, conf: float, cfg: LossConfig = LossConfig()) -> float:
    return cfg.alpha * seg + cfg.beta * pos + cfg.gamma * conf


def total_loss_grad(cfg: LossConfig = LossConfig()):
    """Partial derivatives with respect to ``(seg, pos, conf)``."""
    return np.array([cfg.alpha, cfg.beta, cfg.gamma])
