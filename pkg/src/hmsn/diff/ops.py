"""Primitive operations recorded on the tape.

Every function here accepts plain arrays as well as :class:`Node` inputs. With
no node among the arguments the forward kernel runs directly and an ndarray is
returned, so model code written against this module doubles as a tape-free
numeric path.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import erf

from .graph import _OPS, Node, Op

_SQRT1_2 = 1.0 / math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def _register(name, fwd, vjp):
    op = Op(name, fwd, vjp)
    _OPS[name] = op
    return op


# -- arithmetic ---------------------------------------------------------------

add = _register("add", lambda a, b: np.add(a, b), lambda g, out, a, b: (g, g))
sub = _register("sub", lambda a, b: np.subtract(a, b), lambda g, out, a, b: (g, -g))
mul = _register("mul", lambda a, b: np.multiply(a, b), lambda g, out, a, b: (g * b, g * a))
div = _register(
    "div",
    lambda a, b: np.divide(a, b),
    lambda g, out, a, b: (g / b, -g * out / b),
)
neg = _register("neg", lambda a: np.negative(a), lambda g, out, a: (-g,))
power = _register(
    "power",
    lambda a, p: np.power(a, p),
    lambda g, out, a, p: (g * p * np.power(a, p - 1), None),
)


def _matmul_vjp(g, out, a, b):
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim == 1 and b.ndim == 1:
        return g * b, g * a
    if a.ndim == 1:
        g2 = np.expand_dims(g, -2)
        ga = np.matmul(g2, np.swapaxes(b, -1, -2))[..., 0, :]
        gb = np.matmul(a[:, None], g2)
        return ga, gb
    if b.ndim == 1:
        g2 = g[..., None]
        ga = np.matmul(g2, b[None, :])
        gb = np.matmul(np.swapaxes(a, -1, -2), g2)[..., 0]
        return ga, gb
    return np.matmul(g, np.swapaxes(b, -1, -2)), np.matmul(np.swapaxes(a, -1, -2), g)


matmul = _register("matmul", lambda a, b: np.matmul(a, b), _matmul_vjp)


# -- elementwise --------------------------------------------------------------

exp = _register("exp", np.exp, lambda g, out, a: (g * out,))
log = _register("log", np.log, lambda g, out, a: (g / a,))
tanh = _register("tanh", np.tanh, lambda g, out, a: (g * (1.0 - out * out),))
artanh = _register("artanh", np.arctanh, lambda g, out, a: (g / (1.0 - a * a),))
sqrt = _register("sqrt", np.sqrt, lambda g, out, a: (g * 0.5 / out,))
relu = _register("relu", lambda a: np.maximum(a, 0.0), lambda g, out, a: (g * (a > 0),))
gelu = _register(
    "gelu",
    lambda a: 0.5 * a * (1.0 + erf(a * _SQRT1_2)),
    lambda g, out, a: (
        g * (0.5 * (1.0 + erf(a * _SQRT1_2)) + a * _INV_SQRT_2PI * np.exp(-0.5 * a * a)),
    ),
)


def _max_vjp(g, out, a, b):
    m = np.greater_equal(a, b)
    return g * m, g * ~m


def _min_vjp(g, out, a, b):
    m = np.less_equal(a, b)
    return g * m, g * ~m


maximum = _register("maximum", np.maximum, _max_vjp)
minimum = _register("minimum", np.minimum, _min_vjp)


def _where_vjp(g, out, cond, a, b):
    return None, g * cond, g * ~cond


_where = _register("where", lambda cond, a, b: np.where(cond, a, b), _where_vjp)


def where(cond, a, b):
    """Select with a constant boolean mask (the mask is not differentiated)."""
    return _where(np.asarray(cond, dtype=bool), a, b)


stop_gradient = _register("stop_gradient", lambda a: np.array(a, dtype=np.float64), None)


# -- reductions and shape ---------------------------------------------------


def _expand_like(g, shape, axis, keepdims):
    if axis is not None and not keepdims:
        g = np.expand_dims(g, axis)
    return np.broadcast_to(g, shape)


def _count(shape, axis):
    if axis is None:
        return int(np.prod(shape))
    axes = (axis,) if isinstance(axis, int) else axis
    return int(np.prod([shape[i] for i in axes]))


_sum = _register(
    "sum",
    lambda a, axis=None, keepdims=False: np.sum(a, axis=axis, keepdims=keepdims),
    lambda g, out, a, axis=None, keepdims=False: (_expand_like(g, np.shape(a), axis, keepdims),),
)
_mean = _register(
    "mean",
    lambda a, axis=None, keepdims=False: np.mean(a, axis=axis, keepdims=keepdims),
    lambda g, out, a, axis=None, keepdims=False: (
        _expand_like(g, np.shape(a), axis, keepdims) / _count(np.shape(a), axis),
    ),
)


def sum(a, axis=None, keepdims=False):  # noqa: A001
    return _sum(a, axis=axis, keepdims=keepdims)


def mean(a, axis=None, keepdims=False):
    return _mean(a, axis=axis, keepdims=keepdims)


_reshape = _register(
    "reshape",
    lambda a, shape: np.reshape(a, shape),
    lambda g, out, a, shape: (np.reshape(g, np.shape(a)),),
)


def reshape(a, shape):
    return _reshape(a, shape=tuple(shape))


def _transpose_vjp(g, out, a, axes=None):
    if axes is None:
        return (np.transpose(g),)
    return (np.transpose(g, np.argsort(axes)),)


_transpose = _register("transpose", lambda a, axes=None: np.transpose(a, axes), _transpose_vjp)


def transpose(a, axes=None):
    return _transpose(a, axes=None if axes is None else tuple(axes))


def swapaxes(a, i, j):
    nd = np.ndim(a.value if isinstance(a, Node) else a)
    axes = list(range(nd))
    axes[i], axes[j] = axes[j], axes[i]
    return transpose(a, axes)


def _has_array(idx):
    items = idx if isinstance(idx, tuple) else (idx,)
    return any(isinstance(i, (np.ndarray, list)) for i in items)


def _getitem_vjp(g, out, a, idx):
    z = np.zeros(np.shape(a))
    if _has_array(idx):
        np.add.at(z, idx, g)
    else:
        z[idx] = g
    return (z,)


_getitem = _register("getitem", lambda a, idx: np.asarray(a)[idx], _getitem_vjp)


def getitem(a, idx):
    return _getitem(a, idx=idx)


_broadcast_to = _register(
    "broadcast_to",
    lambda a, shape: np.broadcast_to(a, shape).copy(),
    lambda g, out, a, shape: (g,),
)


def broadcast_to(a, shape):
    return _broadcast_to(a, shape=tuple(shape))


def _concat_vjp(g, out, *xs, axis=0):
    sizes = [np.shape(x)[axis] for x in xs]
    cuts = np.cumsum(sizes)[:-1]
    return tuple(np.split(g, cuts, axis=axis))


_concat = _register("concat", lambda *xs, axis=0: np.concatenate(xs, axis=axis), _concat_vjp)


def concat(xs, axis=0):
    return _concat(*xs, axis=axis)


# -- fused normalisers ----------------------------------------------------------


def _softmax_fwd(a, axis=-1):
    s = a - np.max(a, axis=axis, keepdims=True)
    e = np.exp(s)
    return e / np.sum(e, axis=axis, keepdims=True)


_softmax = _register(
    "softmax",
    _softmax_fwd,
    lambda g, out, a, axis=-1: (out * (g - np.sum(g * out, axis=axis, keepdims=True)),),
)


def softmax(a, axis=-1):
    return _softmax(a, axis=axis)


def _log_softmax_fwd(a, axis=-1):
    s = a - np.max(a, axis=axis, keepdims=True)
    return s - np.log(np.sum(np.exp(s), axis=axis, keepdims=True))


_log_softmax = _register(
    "log_softmax",
    _log_softmax_fwd,
    lambda g, out, a, axis=-1: (g - np.exp(out) * np.sum(g, axis=axis, keepdims=True),),
)


def log_softmax(a, axis=-1):
    return _log_softmax(a, axis=axis)


def _ln_fwd(x, gamma, beta, eps=1e-6):
    mu = np.mean(x, axis=-1, keepdims=True)
    xc = x - mu
    inv = 1.0 / np.sqrt(np.mean(xc * xc, axis=-1, keepdims=True) + eps)
    return xc * inv * gamma + beta


def _ln_vjp(g, out, x, gamma, beta, eps=1e-6):
    mu = np.mean(x, axis=-1, keepdims=True)
    xc = x - mu
    inv = 1.0 / np.sqrt(np.mean(xc * xc, axis=-1, keepdims=True) + eps)
    xhat = xc * inv
    gh = g * gamma
    gx = inv * (
        gh - np.mean(gh, axis=-1, keepdims=True) - xhat * np.mean(gh * xhat, axis=-1, keepdims=True)
    )
    return gx, g * xhat, g


_layer_norm = _register("layer_norm", _ln_fwd, _ln_vjp)


def layer_norm(x, gamma, beta, eps=1e-6):
    return _layer_norm(x, gamma, beta, eps=eps)


# -- small composites -----------------------------------------------------------


def sumsq(x, axis=-1, keepdims=True):
    return sum(mul(x, x), axis=axis, keepdims=keepdims)


def dot(x, y, axis=-1, keepdims=True):
    return sum(mul(x, y), axis=axis, keepdims=keepdims)
