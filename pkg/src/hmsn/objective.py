"""Soft prototype assignments and the MSN / HMSN / HMSN-IP objectives."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .diff import ops as F
from .diff.graph import value
from .geometry import Curvature, distance
from .prototypes import busemann

PROB_FLOOR = 1e-12


class PairingError(ValueError):
    pass


class ZeroVectorError(ValueError):
    pass


@dataclass(frozen=True)
class Temperatures:
    tau: float = 0.1
    tau_plus: float = 0.025

    def __post_init__(self):
        if not (0 < self.tau < 1 and 0 < self.tau_plus < 1):
            raise ValueError("temperatures must lie in (0, 1)")
        if not self.tau_plus < self.tau:
            raise ValueError("target temperature must be below the anchor temperature")


@dataclass(frozen=True)
class LossWeights:
    lam: float = 1.0
    beta: float = 0.1

    def __post_init__(self):
        for name in ("lam", "beta"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v >= 0):
                raise ValueError(f"{name} must be finite and nonnegative")


def check_prediction(p, atol: float = 1e-9) -> None:
    pv = value(p)
    if np.any(pv < 0) or np.any(np.abs(pv.sum(axis=-1) - 1.0) > atol):
        raise ValueError("prediction is not a probability vector")


def _unit(x, what: str):
    n = np.linalg.norm(value(x), axis=-1)
    if np.any(n == 0):
        raise ZeroVectorError(f"{what} contains a zero vector")
    return x / F.sqrt(F.sumsq(x))


def predict_euclid(z, prototypes, tau: float):
    """softmax of cosine similarities to the prototypes over temperature."""
    zn = _unit(z, "representation")
    qn = _unit(prototypes, "prototype bank")
    return F.softmax(F.matmul(zn, F.swapaxes(qn, -1, -2)) / tau, axis=-1)


def predict_hyper(z, prototypes, tau: float, k: Curvature | float = 1.0):
    """softmax(-dist(z, q_k) / tau): nearer prototypes get more mass."""
    zz = F.getitem(z, (..., None, slice(None)))
    return F.softmax(-distance(zz, prototypes, k) / tau, axis=-1)


def predict_ideal(z, prototypes, tau: float):
    """softmax(-busemann(q_k, z) / tau) against ideal prototypes."""
    zz = F.getitem(z, (..., None, slice(None)))
    return F.softmax(-busemann(prototypes, zz) / tau, axis=-1)


def entropy(p):
    return -F.sum(p * F.log(F.maximum(p, PROB_FLOOR)), axis=-1)


def cross_entropy(target, anchor):
    """H(target, anchor) per row; anchor is floored at 1e-12 before the log."""
    return -F.sum(target * F.log(F.maximum(anchor, PROB_FLOOR)), axis=-1)


def mean_entropy(anchors):
    """Entropy of the average anchor prediction."""
    a = F.reshape(anchors, (-1, value(anchors).shape[-1]))
    return entropy(F.mean(a, axis=0))


def _pair(targets, anchors):
    t = value(targets)
    a = value(anchors)
    if t.ndim != 2:
        raise PairingError("targets must be (B, K)")
    B, K = t.shape
    if a.shape[-1] != K:
        raise PairingError(f"anchor predictions over {a.shape[-1]} prototypes, targets over {K}")
    if a.ndim == 2:
        if a.shape[0] % B:
            raise PairingError(f"{a.shape[0]} anchors cannot pair with {B} targets")
        anchors = F.reshape(anchors, (a.shape[0] // B, B, K))
    elif a.ndim != 3 or a.shape[1] != B:
        raise PairingError(f"anchor shape {a.shape} does not pair with targets {t.shape}")
    # targets never carry gradient
    return F.stop_gradient(targets), anchors


def _terms(targets, anchors):
    targets, anchors = _pair(targets, anchors)
    ce = F.mean(cross_entropy(targets, anchors))
    memax = mean_entropy(anchors)
    per_anchor = F.mean(entropy(anchors))
    return ce, memax, per_anchor


def _breakdown(loss, ce, memax, per_anchor):
    return {
        "loss": float(value(loss)),
        "ce": float(value(ce)),
        "memax_entropy": float(value(memax)),
        "anchor_entropy": float(value(per_anchor)),
    }


def msn_loss(targets, anchors, weights: LossWeights = LossWeights()):
    """Mean cross-entropy between paired target/anchor predictions minus lam * H(mean anchor).

    ``anchors`` is (M, B, K) or (M*B, K) with anchor j paired to target j % B.
    Returns (loss, breakdown).
    """
    ce, memax, per_anchor = _terms(targets, anchors)
    loss = ce - weights.lam * memax
    return loss, _breakdown(loss, ce, memax, per_anchor)


def hmsn_ip_loss(targets, anchors, weights: LossWeights = LossWeights()):
    """As :func:`msn_loss` plus beta times the mean per-anchor entropy."""
    ce, memax, per_anchor = _terms(targets, anchors)
    loss = ce - weights.lam * memax + weights.beta * per_anchor
    return loss, _breakdown(loss, ce, memax, per_anchor)
