"""Method wiring: which head, which prediction rule and which loss a run uses.

Pipelines (anchor and target branches share them):

* ``msn``: encode -> Euclidean head -> cosine predictions
* hyperbolic projector: encode -> clip -> exp_0 -> hyperbolic head -> ball predictions
* Euclidean projector (hmsn / hmsn-ip): encode -> Euclidean head -> clip -> exp_0
"""

from __future__ import annotations

import numpy as np

from .geometry import Curvature
from .nn import (
    EncoderConfig,
    encode,
    euclid_head,
    hyp_head,
    init_encoder,
    init_euclid_head,
    init_hyp_head,
    is_ball_param,
    to_ball,
)
from .objective import LossWeights, hmsn_ip_loss, msn_loss, predict_euclid, predict_hyper, predict_ideal
from .prototypes import EUCLIDEAN, LEARNABLE, PrototypeBank, init_learnable, place_ideal


def encoder_config(cfg, channels: int) -> EncoderConfig:
    e = cfg.encoder
    return EncoderConfig(e.image_size, e.patch_size, channels, e.depth, e.width, e.heads, cfg.dim, e.mlp_ratio)


def curvature(cfg) -> Curvature:
    return Curvature(cfg.curvature)


def uses_hyperbolic_head(cfg) -> bool:
    return cfg.method != "msn" and cfg.projector == "hyperbolic"


def init_params(cfg, channels: int, rng: np.random.Generator) -> dict[str, np.ndarray]:
    params = init_encoder(encoder_config(cfg, channels), rng)
    if uses_hyperbolic_head(cfg):
        params.update(init_hyp_head(cfg.dim, cfg.head_hidden, cfg.dim, rng))
    else:
        params.update(init_euclid_head(cfg.dim, cfg.head_hidden, cfg.dim, rng))
    return params


def init_bank(cfg, rng: np.random.Generator) -> PrototypeBank:
    k = curvature(cfg)
    if cfg.method == "hmsn-ip":
        return place_ideal(cfg.num_prototypes, cfg.dim, rng)
    mode = EUCLIDEAN if cfg.method == "msn" else LEARNABLE
    return init_learnable(cfg.num_prototypes, cfg.dim, rng, cfg.proto_std, k, mode=mode)


def head(z, params, cfg, train: bool = True, running: dict | None = None):
    """Encoder output -> embedding in the space the loss is computed in."""
    k = curvature(cfg)
    if cfg.method == "msn":
        return euclid_head(z, params, train, running)
    if cfg.projector == "hyperbolic":
        return hyp_head(to_ball(z, k, cfg.clip_radius), params, k)
    return to_ball(euclid_head(z, params, train, running), k, cfg.clip_radius)


def predict(emb, prototypes, cfg, tau: float):
    if cfg.method == "msn":
        return predict_euclid(emb, prototypes, tau)
    if cfg.method == "hmsn":
        return predict_hyper(emb, prototypes, tau, curvature(cfg))
    return predict_ideal(emb, prototypes, tau)


def loss(cfg, targets, anchors):
    w = LossWeights(cfg.lam, cfg.beta)
    if cfg.method == "hmsn-ip":
        return hmsn_ip_loss(targets, anchors, w)
    return msn_loss(targets, anchors, w)


def representation(z, cfg):
    """Downstream representation: ball point before the head for the hyperbolic projector."""
    if uses_hyperbolic_head(cfg):
        return to_ball(z, curvature(cfg), cfg.clip_radius)
    return z


def embed_tokens(tokens, positions, params, cfg, enc: EncoderConfig, pos_table=None):
    return encode(tokens, positions, params, enc, pos_table)


def ball_param_names(params, cfg) -> list[str]:
    return [n for n in params if is_ball_param(n)]
