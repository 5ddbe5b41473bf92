from __future__ import annotations

from typing import Callable

import numpy as np

from .graph import Graph, backward


def tape_gradient(f: Callable, x: np.ndarray) -> np.ndarray:
    """Gradient of scalar ``f`` at ``x`` through the reverse-mode tape."""
    g = Graph()
    xn = g.param(np.array(x, dtype=np.float64))
    loss = f(xn)
    return backward(g, loss)[xn.id]


def numeric_gradient(f: Callable, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central differences, evaluated on plain arrays (no tape involved)."""
    x = np.array(x, dtype=np.float64)
    out = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = out.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        fp = float(np.sum(f(x)))
        flat[i] = old - h
        fm = float(np.sum(f(x)))
        flat[i] = old
        gflat[i] = (fp - fm) / (2.0 * h)
    return out


def finite_diff_check(f: Callable, x: np.ndarray, h: float = 1e-5) -> float:
    """Max over coordinates of |analytic - numeric| / max(1, |analytic|).

    ``f`` must be written against :mod:`hmsn.diff.ops` so that it runs both on
    a tape node (analytic route) and on a plain array (numeric route).
    """
    analytic = tape_gradient(f, x)
    numeric = numeric_gradient(f, x, h)
    err = np.abs(analytic - numeric) / np.maximum(1.0, np.abs(analytic))
    return float(err.max()) if err.size else 0.0
