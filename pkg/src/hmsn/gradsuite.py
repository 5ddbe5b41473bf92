"""Finite-difference checks for every differentiable op and both full losses.

Each case is a scalar function of one flat vector plus a sampler for interior
points; :func:`run` evaluates tape gradients against central differences.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import geometry as G
from . import nn
from . import objective as O
from .diff import finite_diff_check
from .diff import ops as F
from .prototypes import busemann


@dataclass(frozen=True)
class Case:
    name: str
    f: Callable
    sample: Callable  # rng -> flat float64 vector


def _split(x, shapes):
    out, off = [], 0
    for s in shapes:
        n = int(np.prod(s))
        out.append(F.reshape(x[off:off + n], s))
        off += n
    return out


def _weights(shape, seed):
    return np.random.default_rng(seed).standard_normal(shape)


def _scalar(y, seed=99):
    # fixed random projection so every output coordinate contributes
    return F.sum(y * _weights(np.shape(y.value if hasattr(y, "value") else y), seed))


def _ball(rng, n, d, r=0.8, c=1.0):
    x = rng.standard_normal((n, d))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    return x * rng.uniform(0.05, r, size=(n, 1)) / np.sqrt(c)


def _sphere(rng, n, d):
    x = rng.standard_normal((n, d))
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def _unary(name, op, lo=-2.0, hi=2.0, shape=(3, 4)):
    return Case(name, lambda x: _scalar(op(F.reshape(x, shape))),
                lambda rng: rng.uniform(lo, hi, size=int(np.prod(shape))))


def _binary(name, op, sa=(3, 4), sb=(3, 4), lo=-2.0, hi=2.0, lo_b=None, hi_b=None):
    lo_b = lo if lo_b is None else lo_b
    hi_b = hi if hi_b is None else hi_b
    na, nb = int(np.prod(sa)), int(np.prod(sb))

    def f(x):
        a, b = _split(x, [sa, sb])
        return _scalar(op(a, b))

    return Case(name, f, lambda rng: np.concatenate([rng.uniform(lo, hi, na), rng.uniform(lo_b, hi_b, nb)]))


def _away_from_zero(rng, n, lo=0.2, hi=2.0):
    return rng.uniform(lo, hi, n) * rng.choice([-1.0, 1.0], n)


def _elementary() -> list[Case]:
    cases = [
        _binary("add", F.add, sb=(4,)),
        _binary("sub", F.sub, sa=(4,)),
        _binary("mul", F.mul),
        _binary("div", F.div, lo_b=0.5, hi_b=2.0),
        _unary("neg", F.neg),
        Case("power", lambda x: _scalar(F.power(F.reshape(x, (3, 4)), 2.5)), lambda rng: rng.uniform(0.3, 2.0, 12)),
        _binary("matmul", F.matmul, sa=(3, 4), sb=(4, 2)),
        _binary("matmul-vec", F.matmul, sa=(4,), sb=(4, 3)),
        _unary("exp", F.exp),
        _unary("log", F.log, 0.2, 3.0),
        _unary("tanh", F.tanh),
        _unary("artanh", F.artanh, -0.9, 0.9),
        _unary("sqrt", F.sqrt, 0.2, 3.0),
        Case("relu", lambda x: _scalar(F.relu(F.reshape(x, (3, 4)))), lambda rng: _away_from_zero(rng, 12)),
        _unary("gelu", F.gelu, -3.0, 3.0),
        Case("maximum", lambda x: _scalar(F.maximum(*_split(x, [(6,), (6,)]))),
             lambda rng: np.concatenate([np.linspace(-1, 1, 6), np.linspace(-1, 1, 6) + _away_from_zero(rng, 6)])),
        Case("minimum", lambda x: _scalar(F.minimum(*_split(x, [(6,), (6,)]))),
             lambda rng: np.concatenate([np.linspace(-1, 1, 6), np.linspace(-1, 1, 6) + _away_from_zero(rng, 6)])),
        Case("where", lambda x: _scalar(F.where(np.arange(6) % 2 == 0, *_split(x, [(6,), (6,)]))),
             lambda rng: rng.uniform(-2, 2, 12)),
        _unary("sum-axis", lambda a: F.sum(a, axis=1, keepdims=True)),
        _unary("mean-axis", lambda a: F.mean(a, axis=0)),
        _unary("reshape", lambda a: F.reshape(a, (2, 6))),
        _unary("transpose", lambda a: F.transpose(a)),
        _unary("swapaxes", lambda a: F.swapaxes(F.reshape(a, (2, 3, 2)), 0, 2)),
        _unary("getitem", lambda a: a[np.array([0, 2, 2]), 1:3]),
        _unary("broadcast_to", lambda a: F.broadcast_to(F.reshape(a, (1, 3, 4)), (2, 3, 4))),
        _binary("concat", lambda a, b: F.concat([a, b], axis=1), sb=(3, 2)),
        _unary("softmax", lambda a: F.softmax(a, axis=-1)),
        _unary("log_softmax", lambda a: F.log_softmax(a, axis=-1)),
        Case("layer_norm", lambda x: _scalar(F.layer_norm(*_split(x, [(3, 4), (4,), (4,)]))),
             lambda rng: rng.uniform(-2, 2, 20)),
    ]
    return cases


def _geometric() -> list[Case]:
    d = 3
    cases = []
    for c in (1.0, 0.3):
        k = G.Curvature(c)
        cases += [
            Case(f"conformal_factor[c={c}]", lambda x, k=k: _scalar(G.conformal_factor(F.reshape(x, (4, d)), k)),
                 lambda rng, c=c: _ball(rng, 4, d, c=c).reshape(-1)),
            Case(f"mobius_add[c={c}]", lambda x, k=k: _scalar(G.mobius_add(*_split(x, [(4, d), (4, d)]), k)),
                 lambda rng, c=c: np.concatenate([_ball(rng, 4, d, 0.7, c).ravel(), _ball(rng, 4, d, 0.7, c).ravel()])),
            Case(f"exp_map0[c={c}]", lambda x, k=k: _scalar(G.exp_map(F.reshape(x, (4, d)), None, k)),
                 lambda rng: rng.uniform(-1.0, 1.0, 4 * d)),
            Case(f"exp_map[c={c}]", lambda x, k=k: _scalar(G.exp_map(*_split(x, [(4, d), (4, d)]), k)),
                 lambda rng, c=c: np.concatenate([rng.uniform(-0.3, 0.3, 4 * d), _ball(rng, 4, d, 0.6, c).ravel()])),
            Case(f"log_map0[c={c}]", lambda x, k=k: _scalar(G.log_map(F.reshape(x, (4, d)), None, k)),
                 lambda rng, c=c: _ball(rng, 4, d, c=c).reshape(-1)),
            Case(f"log_map[c={c}]", lambda x, k=k: _scalar(G.log_map(*_split(x, [(4, d), (4, d)]), k)),
                 lambda rng, c=c: np.concatenate([_ball(rng, 4, d, 0.6, c).ravel(), _ball(rng, 4, d, 0.6, c).ravel()])),
            Case(f"distance[c={c}]", lambda x, k=k: _scalar(G.distance(*_split(x, [(4, d), (4, d)]), k)),
                 lambda rng, c=c: np.concatenate([_ball(rng, 4, d, 0.7, c).ravel(), _ball(rng, 4, d, 0.7, c).ravel()])),
        ]
    cases += [
        Case("project_to_ball", lambda x: _scalar(G.project_to_ball(F.reshape(x, (4, d)))),
             lambda rng: _ball(rng, 4, d).reshape(-1)),
        Case("clip_euclidean", lambda x: _scalar(G.clip_euclidean(F.reshape(x, (4, d)), 1.0)),
             lambda rng: (_sphere(rng, 4, d) * np.array([[0.5], [0.8], [1.5], [3.0]])).reshape(-1)),
        Case("busemann", lambda x: _scalar(busemann(*_split(x, [(4, d), (4, d)]))),
             lambda rng: np.concatenate([_sphere(rng, 4, d).ravel(), _ball(rng, 4, d).ravel()])),
    ]
    return cases


def _networks() -> list[Case]:
    d, K, B = 3, 5, 4
    rng0 = np.random.default_rng(7)
    W = rng0.standard_normal((d, d)) * 0.5
    b = _ball(rng0, 1, d, 0.3)[0]
    head = nn.init_hyp_head(d, 4, d, rng0)
    ehead = nn.init_euclid_head(d, 4, d, rng0)
    enc_cfg = nn.EncoderConfig(image_size=4, patch_size=2, channels=1, depth=1, width=8, heads=2, out_dim=3)
    enc = nn.init_encoder(enc_cfg, rng0)
    enc["out.w"] = rng0.standard_normal(enc["out.w"].shape) * 0.3
    positions = np.array([[0, 1, 3], [2, 3, 0]])
    tokens = rng0.standard_normal((2, 3, 4))
    protos_ball = _ball(rng0, K, d, 0.5)
    protos_ideal = _sphere(rng0, K, d)
    protos_euc = rng0.standard_normal((K, d))

    # targets come from a fixed batch: they carry no gradient in training either
    zt_ball = _ball(rng0, B, d, 0.6)
    zt_euc = rng0.standard_normal((B, d))
    t_hyper = O.predict_hyper(zt_ball, protos_ball, 0.025)
    t_euc = O.predict_euclid(zt_euc, protos_euc, 0.025)
    t_ideal = O.predict_ideal(zt_ball, protos_ideal, 0.025)

    def hmsn_full(x):
        z, q = _split(x, [(2 * B, d), (K, d)])
        return O.msn_loss(t_hyper, O.predict_hyper(z, q, 0.1))[0]

    def msn_full(x):
        z, q = _split(x, [(2 * B, d), (K, d)])
        return O.msn_loss(t_euc, O.predict_euclid(z, q, 0.1))[0]

    def ip_full(x):
        z = F.reshape(x, (2 * B, d))
        return O.hmsn_ip_loss(t_ideal, O.predict_ideal(z, protos_ideal, 0.1), O.LossWeights(1.0, 0.1))[0]

    return [
        Case("hyp_linear", lambda x: _scalar(nn.hyp_linear(F.reshape(x, (B, d)), W, b)),
             lambda rng: _ball(rng, B, d, 0.7).reshape(-1)),
        Case("hyp_relu", lambda x: _scalar(nn.hyp_relu(F.reshape(x, (B, d)))),
             lambda rng: _ball(rng, B, d, 0.7).reshape(-1)),
        Case("hyp_head", lambda x: _scalar(nn.hyp_head(F.reshape(x, (B, d)), head)),
             lambda rng: _ball(rng, B, d, 0.7).reshape(-1)),
        Case("euclid_head", lambda x: _scalar(nn.euclid_head(F.reshape(x, (B, d)), ehead, True, None)),
             lambda rng: rng.standard_normal(B * d)),
        Case("encode[pe.w]", lambda x: _scalar(nn.encode(tokens, positions, dict(enc, **{"pe.w": F.reshape(x, (4, 8))}),
                                                          enc_cfg)),
             lambda rng: rng.standard_normal(32) * 0.3),
        Case("encode[blk0.qkv.w]", lambda x: _scalar(nn.encode(tokens, positions,
                                                                dict(enc, **{"blk0.qkv.w": F.reshape(x, (8, 24))}), enc_cfg)),
             lambda rng: rng.standard_normal(192) * 0.3),
        Case("to_ball", lambda x: _scalar(nn.to_ball(F.reshape(x, (B, d)), 1.0, 2.3)),
             lambda rng: (_sphere(rng, B, d) * rng.uniform(0.2, 4.0, (B, 1))).reshape(-1)),
        Case("predict_euclid", lambda x: _scalar(O.predict_euclid(F.reshape(x, (B, d)), protos_euc, 0.1)),
             lambda rng: rng.standard_normal(B * d)),
        Case("predict_hyper", lambda x: _scalar(O.predict_hyper(F.reshape(x, (B, d)), protos_ball, 0.1)),
             lambda rng: _ball(rng, B, d, 0.6).reshape(-1)),
        Case("predict_ideal", lambda x: _scalar(O.predict_ideal(F.reshape(x, (B, d)), protos_ideal, 0.1)),
             lambda rng: _ball(rng, B, d, 0.6).reshape(-1)),
        Case("cross_entropy", lambda x: F.mean(O.cross_entropy(
            *_split(F.reshape(F.softmax(F.reshape(x, (2, B, K))), (-1,)), [(B, K), (B, K)]))),
             lambda rng: rng.standard_normal(2 * B * K)),
        Case("msn_loss[euclid]", msn_full,
             lambda rng: np.concatenate([rng.standard_normal(2 * B * d), protos_euc.ravel()])),
        Case("msn_loss[hyper]", hmsn_full,
             lambda rng: np.concatenate([_ball(rng, 2 * B, d, 0.6).ravel(), _ball(rng, K, d, 0.5).ravel()])),
        Case("hmsn_ip_loss", ip_full, lambda rng: _ball(rng, 2 * B, d, 0.6).reshape(-1)),
    ]


def cases() -> list[Case]:
    return _elementary() + _geometric() + _networks()


@dataclass
class CaseResult:
    name: str
    max_rel_err: float
    points: int


def run(points: int = 20, seed: int = 0, only: str | None = None) -> tuple[list[CaseResult], float]:
    """Check every case at ``points`` interior points; returns results and runtime."""
    t0 = time.perf_counter()
    out = []
    for case in cases():
        if only and only not in case.name:
            continue
        rng = np.random.default_rng([seed, sum(map(ord, case.name))])
        worst = 0.0
        for _ in range(points):
            worst = max(worst, finite_diff_check(case.f, case.sample(rng)))
        out.append(CaseResult(case.name, worst, points))
    return out, time.perf_counter() - t0
