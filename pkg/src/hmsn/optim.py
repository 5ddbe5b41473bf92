"""AdamW for Euclidean weights, Riemannian Adam for ball points, EMA targets."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import Curvature, as_curvature, check_in_ball, conformal_factor, exp_map

log = logging.getLogger(__name__)


class NonFiniteGradientError(FloatingPointError):
    pass


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


@dataclass
class RAdamState(AdamState):
    lr: float = 1e-2


def _check(params, grads):
    if set(params) != set(grads):
        raise ValueError(f"parameter/gradient names differ: {sorted(set(params) ^ set(grads))}")
    for k in params:
        if np.shape(params[k]) != np.shape(grads[k]):
            raise ValueError(f"shape mismatch for {k}: {np.shape(params[k])} vs {np.shape(grads[k])}")
        if not np.all(np.isfinite(grads[k])):
            raise NonFiniteGradientError(f"non-finite gradient for {k}")


def _moments(state: AdamState, name: str, g: np.ndarray, t: int) -> np.ndarray:
    m = state.m.get(name)
    v = state.v.get(name)
    if m is None:
        m = np.zeros_like(g)
        v = np.zeros_like(g)
    m = state.beta1 * m + (1.0 - state.beta1) * g
    v = state.beta2 * v + (1.0 - state.beta2) * g * g
    state.m[name] = m
    state.v[name] = v
    mhat = m / (1.0 - state.beta1**t)
    vhat = v / (1.0 - state.beta2**t)
    return mhat / (np.sqrt(vhat) + state.eps)


def adamw_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray], state: AdamState,
               lr: float | None = None) -> dict[str, np.ndarray]:
    """Adam with decoupled weight decay; returns new parameter arrays."""
    _check(params, grads)
    lr = state.lr if lr is None else lr
    state.step += 1
    out = {}
    for k, p in params.items():
        direction = _moments(state, k, np.asarray(grads[k], dtype=np.float64), state.step)
        out[k] = p - lr * state.weight_decay * p - lr * direction
    return out


def riemannian_grad(x, egrad, k: Curvature | float = 1.0) -> np.ndarray:
    """Euclidean gradient rescaled by the inverse Poincaré metric, (1/lambda_x)^2."""
    lam = conformal_factor(x, k, keepdims=True)
    return egrad / (lam * lam)


def radam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray], state: RAdamState,
               k: Curvature | float = 1.0, lr: float | None = None) -> dict[str, np.ndarray]:
    """Riemannian Adam on ball-valued parameters (rows along the last axis).

    Moments accumulate Riemannian gradients and are carried between tangent
    spaces unchanged; each row moves along the exponential map at its current
    position.
    """
    k = as_curvature(k)
    _check(params, grads)
    lr = state.lr if lr is None else lr
    state.step += 1
    out = {}
    for name, x in params.items():
        check_in_ball(x, k)
        rg = riemannian_grad(x, np.asarray(grads[name], dtype=np.float64), k)
        direction = _moments(state, name, rg, state.step)
        new = exp_map(-lr * direction, x, k)
        at_edge = np.linalg.norm(new, axis=-1) >= k.max_norm * (1 - 1e-12)
        if np.any(at_edge):
            log.debug("radam: %d rows of %s held at the ball margin", int(at_edge.sum()), name)
        out[name] = new
    return out


def ema_update(target: dict[str, np.ndarray], anchor: dict[str, np.ndarray],
               momentum: float) -> dict[str, np.ndarray]:
    """target <- m * target + (1 - m) * anchor, elementwise."""
    if set(target) != set(anchor):
        raise ValueError("target and anchor parameter sets differ")
    out = {}
    for k, t in target.items():
        a = anchor[k]
        if np.shape(t) != np.shape(a):
            raise ValueError(f"shape mismatch for {k}")
        out[k] = momentum * t + (1.0 - momentum) * a
    return out


@dataclass(frozen=True)
class EmaSchedule:
    """Momentum ramped linearly from ``start`` to ``end`` over ``total`` steps."""

    start: float = 0.996
    end: float = 1.0
    total: int = 1

    def __call__(self, step: int) -> float:
        if self.total <= 0:
            return self.end
        frac = min(max(step / self.total, 0.0), 1.0)
        return self.start + (self.end - self.start) * frac


def lr_at(step: int, total: int, base: float, warmup_frac: float = 0.1, final: float = 0.0) -> float:
    """Linear warmup then cosine decay to ``final``."""
    warm = int(round(warmup_frac * total))
    if step < warm:
        return base * (step + 1) / warm
    span = max(total - warm, 1)
    t = min((step - warm) / span, 1.0)
    return final + 0.5 * (base - final) * (1.0 + math.cos(math.pi * t))


def clip_grad_norm(grads: dict[str, np.ndarray], max_norm: float | None) -> dict[str, np.ndarray]:
    if not max_norm:
        return grads
    total = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if total <= max_norm:
        return grads
    s = max_norm / total
    return {k: g * s for k, g in grads.items()}
