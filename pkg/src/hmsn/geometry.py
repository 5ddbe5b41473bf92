"""Poincaré ball of curvature -c: gyrovector operations, exp/log maps, distance.

All functions act on the last axis and broadcast over leading axes. They take
either ndarrays or tape nodes (see :mod:`hmsn.diff`); with nodes the result is
recorded for reverse-mode differentiation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .diff import ops as F
from .diff.graph import value


class BoundaryViolationError(ValueError):
    """A point handed to a ball operation lies on or outside the boundary."""


class DenominatorUnderflowError(ArithmeticError):
    pass


@dataclass(frozen=True)
class Curvature:
    c: float = 1.0
    ball_eps: float = 1e-5
    zero_eps: float = 1e-12

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError(f"curvature magnitude must be positive, got {self.c}")
        if not 0 < self.ball_eps <= 1e-3:
            raise ValueError(f"ball_eps must lie in (0, 1e-3], got {self.ball_eps}")
        if not 0 < self.zero_eps <= 1e-9:
            raise ValueError(f"zero_eps must lie in (0, 1e-9], got {self.zero_eps}")

    @property
    def sqrt_c(self) -> float:
        return math.sqrt(self.c)

    @property
    def max_norm(self) -> float:
        """Largest Euclidean norm a produced point may have."""
        return (1.0 - self.ball_eps) / self.sqrt_c


def as_curvature(k) -> Curvature:
    return k if isinstance(k, Curvature) else Curvature(float(k))


def check_in_ball(x, k) -> None:
    k = as_curvature(k)
    v = value(x)
    sq = np.sum(v * v, axis=-1)
    if not np.all(np.isfinite(sq)):
        raise BoundaryViolationError("non-finite coordinates")
    worst = float(np.max(k.c * sq)) if sq.size else 0.0
    if worst >= 1.0:
        raise BoundaryViolationError(f"c*||x||^2 = {worst:.17g} >= 1")


def _norm_floor(x, eps: float):
    # max(||x||, eps), smooth enough for the tape at the origin
    return F.sqrt(F.maximum(F.sumsq(x), eps * eps))


def _is_tiny(x, eps: float) -> np.ndarray:
    v = value(x)
    return np.sqrt(np.sum(v * v, axis=-1, keepdims=True)) < eps


def conformal_factor(x, k=1.0, keepdims: bool = False):
    """lambda_x = 2 / (1 - c ||x||^2)."""
    k = as_curvature(k)
    check_in_ball(x, k)
    lam = 2.0 / (1.0 - k.c * F.sumsq(x))
    return lam if keepdims else F.getitem(lam, (..., 0))


def project_to_ball(x, k=1.0):
    """Pull points with sqrt(c)||x|| > 1 - ball_eps back onto that radius."""
    k = as_curvature(k)
    m = k.max_norm
    n = _norm_floor(x, k.zero_eps)
    # a rescaled point may sit a few ulps above m; leaving it alone keeps this idempotent
    outside = value(n) > m * (1.0 + 8 * np.finfo(np.float64).eps)
    if not np.any(outside):
        return x
    return F.where(outside, x * (m / n), x)


def clip_euclidean(x, radius: float = 2.3):
    """Rescale vectors longer than ``radius`` onto the sphere of that radius."""
    if not radius > 0:
        raise ValueError("clip radius must be positive")
    n = _norm_floor(x, 1e-12)
    return x * (radius / F.maximum(n, radius))


def mobius_add(v, w, k=1.0):
    k = as_curvature(k)
    check_in_ball(v, k)
    check_in_ball(w, k)
    c = k.c
    vw = F.dot(v, w)
    v2 = F.sumsq(v)
    w2 = F.sumsq(w)
    num = (1.0 + 2.0 * c * vw + c * w2) * v + (1.0 - c * v2) * w
    den = 1.0 + 2.0 * c * vw + (c * c) * v2 * w2
    if np.any(np.abs(value(den)) < 1e-15):
        raise DenominatorUnderflowError("Möbius addition denominator below 1e-15")
    return project_to_ball(num / den, k)


def exp_map(x, v=None, k=1.0):
    """Exponential map of tangent vector ``x`` at base ``v`` (origin if None)."""
    k = as_curvature(k)
    sc = k.sqrt_c
    n = _norm_floor(x, k.zero_eps)
    if v is None:
        y = project_to_ball(F.tanh(sc * n) * x / (sc * n), k)
        return F.where(_is_tiny(x, k.zero_eps), 0.0, y)
    lam = conformal_factor(v, k, keepdims=True)
    y = project_to_ball(F.tanh(sc * lam * n / 2.0) * x / (sc * n), k)
    out = mobius_add(v, y, k)
    return F.where(_is_tiny(x, k.zero_eps), v, out)


def log_map(x, v=None, k=1.0):
    """Logarithmic map of ball point ``x`` into the tangent space at ``v``."""
    k = as_curvature(k)
    sc = k.sqrt_c
    if v is None:
        check_in_ball(x, k)
        u = x
        scale = 1.0 / sc
    else:
        u = mobius_add(-v, x, k)
        scale = 2.0 / (sc * conformal_factor(v, k, keepdims=True))
    n = _norm_floor(u, k.zero_eps)
    out = scale * F.artanh(sc * n) * u / n
    return F.where(_is_tiny(u, k.zero_eps), 0.0, out)


def distance(x, y, k=1.0):
    """Geodesic distance (2/sqrt c) artanh(sqrt c ||-x (+) y||)."""
    k = as_curvature(k)
    sc = k.sqrt_c
    u = mobius_add(-x, y, k)
    n = _norm_floor(u, k.zero_eps)
    d = (2.0 / sc) * F.artanh(sc * n)
    d = F.where(_is_tiny(u, k.zero_eps), 0.0, d)
    return F.getitem(d, (..., 0))


def expmap0(x, k=1.0):
    return exp_map(x, None, k)


def logmap0(x, k=1.0):
    return log_map(x, None, k)
