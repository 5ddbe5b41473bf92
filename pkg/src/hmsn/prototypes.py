"""Prototype banks: learnable points inside the ball, or fixed ideal points."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .diff import ops as F
from .diff.graph import value
from .geometry import BoundaryViolationError, Curvature, check_in_ball

LEARNABLE = "learnable-ball"
IDEAL = "ideal-boundary"
EUCLIDEAN = "euclidean"
MODES = (LEARNABLE, IDEAL, EUCLIDEAN)


@dataclass
class PrototypeBank:
    mode: str
    vectors: np.ndarray
    curvature: Curvature = field(default_factory=Curvature)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown prototype mode {self.mode!r}")
        self.vectors = np.array(self.vectors, dtype=np.float64)
        if self.vectors.ndim != 2 or self.vectors.shape[0] < 2:
            raise ValueError("a bank needs K > 1 prototype rows")
        if self.mode == IDEAL:
            norms = np.linalg.norm(self.vectors, axis=1)
            if np.max(np.abs(norms - 1.0)) > 1e-12:
                raise ValueError("ideal prototypes must have unit norm")
            self.vectors.setflags(write=False)
        elif self.mode == LEARNABLE:
            check_in_ball(self.vectors, self.curvature)

    @property
    def K(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    @property
    def trainable(self) -> bool:
        return self.mode != IDEAL

    def mean_norm(self) -> float:
        return float(np.mean(np.linalg.norm(self.vectors, axis=1)))


def init_learnable(K: int, d: int, rng: np.random.Generator, std: float = 0.01,
                   curvature: Curvature | None = None, mode: str = LEARNABLE) -> PrototypeBank:
    """K prototypes drawn i.i.d. N(0, std^2) around the origin."""
    if K < 2 or d < 2:
        raise ValueError("need K > 1 and d >= 2")
    vectors = std * rng.standard_normal((K, d))
    return PrototypeBank(mode, vectors, curvature or Curvature())


def _sphere_objective(q: np.ndarray, alpha: float) -> tuple[float, np.ndarray, float]:
    """Smooth max of pairwise cosines: (1/alpha) log sum_{i<j} exp(alpha <q_i, q_j>).

    Returns the objective, its gradient and the largest off-diagonal cosine.
    """
    K = q.shape[0]
    gram = q @ q.T
    iu = np.triu_indices(K, 1)
    g = gram[iu]
    top = g.max()
    e = np.exp(alpha * (g - top))
    s = e.sum()
    w = np.zeros((K, K))
    w[iu] = e / s
    w = w + w.T
    return top + math.log(s) / alpha, w @ q, float(top)


def _separate(q: np.ndarray, alpha: float, iters: int, lr: float) -> tuple[np.ndarray, list[float]]:
    obj, grad, top = _sphere_objective(q, alpha)
    history = [top]
    step = lr
    for _ in range(iters):
        tang = grad - np.sum(grad * q, axis=1, keepdims=True) * q
        for _ in range(40):
            cand = q - step * tang
            cand /= np.linalg.norm(cand, axis=1, keepdims=True)
            c_obj, c_grad, c_top = _sphere_objective(cand, alpha)
            # backtrack until the smooth objective drops and the worst pair does not get worse
            if c_obj <= obj and c_top <= top:
                q, obj, grad, top = cand, c_obj, c_grad, c_top
                step = min(lr, step * 1.5)
                break
            step *= 0.5
        else:
            break  # no admissible step left: converged to working precision
        history.append(top)
    return q, history


def place_ideal(K: int, d: int, rng: np.random.Generator, alpha: float = 10.0,
                iters: int = 2000, lr: float = 0.1, restarts: int = 8,
                return_history: bool = False):
    """Ideal prototypes on the unit sphere.

    d = 2 places them uniformly on the circle; d >= 3 spreads them by
    projected gradient descent on a soft maximum of pairwise cosines, keeping
    the best of several random restarts.
    """
    if K < 2:
        raise ValueError("need K > 1")
    if d == 2:
        ang = 2.0 * np.pi * np.arange(K) / K
        q = np.stack([np.cos(ang), np.sin(ang)], axis=1)
        history = [float(np.max((q @ q.T)[np.triu_indices(K, 1)]))]
    else:
        best = None
        for _ in range(restarts):
            q0 = rng.standard_normal((K, d))
            q0 /= np.linalg.norm(q0, axis=1, keepdims=True)
            q, hist = _separate(q0, alpha, iters, lr)
            if best is None or hist[-1] < best[1][-1]:
                best = (q, hist)
        q, history = best
    q = q / np.linalg.norm(q, axis=1, keepdims=True)
    bank = PrototypeBank(IDEAL, q, Curvature(1.0))
    return (bank, history) if return_history else bank


def min_pairwise_angle(vectors: np.ndarray) -> float:
    """Smallest angle (radians) between any two rows."""
    u = vectors / np.linalg.norm(vectors, axis=1, keepdims=True)
    g = np.clip(u @ u.T, -1.0, 1.0)
    iu = np.triu_indices(len(u), 1)
    return float(np.arccos(g[iu].max()))


def busemann(q, z):
    """Busemann function of ideal point ``q`` at ``z`` in the unit ball.

    log(||q - z||^2 / (1 - ||z||^2)); broadcasts over leading axes.
    """
    zv = value(z)
    if np.any(np.sum(zv * zv, axis=-1) >= 1.0) or not np.all(np.isfinite(zv)):
        raise BoundaryViolationError("Busemann function needs ||z|| < 1")
    num = F.sumsq(F.sub(q, z), keepdims=False)
    den = 1.0 - F.sumsq(z, keepdims=False)
    return F.log(num / den)
