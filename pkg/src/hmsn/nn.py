"""Toy masked ViT encoder and the Euclidean / hyperbolic projection heads.

Parameters live in flat ``dict[str, ndarray]`` maps. Every forward function
accepts either raw arrays or tape nodes for the parameter values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .diff import ops as F
from .diff.graph import value
from .geometry import Curvature, clip_euclidean, exp_map, log_map, mobius_add, project_to_ball


class ShapeError(ValueError):
    pass


class EmptyMaskError(ValueError):
    pass


@dataclass(frozen=True)
class EncoderConfig:
    image_size: int = 32
    patch_size: int = 4
    channels: int = 3
    depth: int = 4
    width: int = 96
    heads: int = 4
    out_dim: int = 16
    mlp_ratio: float = 2.0

    def __post_init__(self):
        if self.image_size % self.patch_size:
            raise ValueError("image_size must be divisible by patch_size")
        if self.width % self.heads:
            raise ValueError("width must be divisible by heads")
        if self.out_dim < 2:
            raise ValueError("out_dim must be at least 2")

    @property
    def grid(self) -> int:
        return self.image_size // self.patch_size

    @property
    def num_patches(self) -> int:
        return self.grid**2

    @property
    def patch_dim(self) -> int:
        return self.patch_size * self.patch_size * self.channels


@dataclass(frozen=True)
class MaskSpec:
    kind: str = "random"
    keep_ratio: float = 1.0
    focal_block: tuple[int, int] = (2, 2)

    def __post_init__(self):
        if self.kind not in ("random", "focal"):
            raise ValueError(f"unknown mask kind {self.kind!r}")
        if self.kind == "random" and not 0 < self.keep_ratio <= 1:
            raise ValueError("keep_ratio must lie in (0, 1]")
        if self.kind == "focal" and min(self.focal_block) < 1:
            raise EmptyMaskError("focal block must keep at least one patch")


# -- patches and masks -----------------------------------------------------------


def patchify(image: np.ndarray, patch_size: int) -> np.ndarray:
    """(..., H, W, C) image(s) -> (..., N, p*p*C) patches in row-major grid order."""
    *lead, H, W, C = image.shape
    p = patch_size
    if H % p or W % p:
        raise ShapeError(f"{H}x{W} image is not divisible into {p}x{p} patches")
    x = image.reshape(*lead, H // p, p, W // p, p, C)
    nl = len(lead)
    x = np.moveaxis(x, nl + 2, nl + 1)  # (..., gh, gw, p, p, C)
    return x.reshape(*lead, (H // p) * (W // p), p * p * C)


def unpatchify(patches: np.ndarray, patch_size: int, grid: tuple[int, int], channels: int) -> np.ndarray:
    *lead, N, _ = patches.shape
    gh, gw = grid
    p = patch_size
    x = patches.reshape(*lead, gh, gw, p, p, channels)
    nl = len(lead)
    x = np.moveaxis(x, nl + 1, nl + 2)
    return x.reshape(*lead, gh * p, gw * p, channels)


def apply_mask(patches: np.ndarray, spec: MaskSpec, rng: np.random.Generator,
               grid: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Drop patches according to ``spec``; returns (kept patches, kept indices)."""
    N = patches.shape[-2]
    grid = grid or int(round(math.sqrt(N)))
    if spec.kind == "random":
        keep = math.ceil(spec.keep_ratio * N - 1e-9)
        if keep < 1:
            raise EmptyMaskError("mask keeps no patches")
        if keep == N:
            idx = np.arange(N)
        else:
            idx = np.sort(rng.choice(N, size=keep, replace=False))
    else:
        r, c = spec.focal_block
        if r > grid or c > grid:
            raise ShapeError(f"focal block {r}x{c} exceeds {grid}x{grid} grid")
        i0 = int(rng.integers(0, grid - r + 1))
        j0 = int(rng.integers(0, grid - c + 1))
        rows = np.arange(i0, i0 + r)
        cols = np.arange(j0, j0 + c)
        idx = (rows[:, None] * grid + cols[None, :]).reshape(-1)
    return patches[..., idx, :], idx


# -- encoder ---------------------------------------------------------------------


def sincos_pos_embed(grid: int, width: int) -> np.ndarray:
    """Fixed 2-D sine/cosine positional table of shape (grid*grid, width)."""
    if width % 4:
        raise ValueError("width must be divisible by 4 for 2-D sincos embeddings")
    q = width // 4
    omega = 1.0 / 10000 ** (np.arange(q) / q)
    ys, xs = np.meshgrid(np.arange(grid), np.arange(grid), indexing="ij")
    out = []
    for coord in (ys.reshape(-1), xs.reshape(-1)):
        a = coord[:, None] * omega[None, :]
        out += [np.sin(a), np.cos(a)]
    return np.concatenate(out, axis=1)


def _trunc_normal(rng, shape, std=0.02):
    return np.clip(rng.standard_normal(shape), -2, 2) * std


def _xavier(rng, shape):
    return _trunc_normal(rng, shape, math.sqrt(2.0 / (shape[0] + shape[1])))


def init_encoder(config: EncoderConfig, rng: np.random.Generator) -> dict[str, np.ndarray]:
    w = config.width
    hid = int(w * config.mlp_ratio)
    p = {
        "pe.w": _xavier(rng, (config.patch_dim, w)),
        "pe.b": np.zeros(w),
        "cls": _trunc_normal(rng, (w,)),
    }
    for i in range(config.depth):
        b = f"blk{i}."
        p.update({
            b + "ln1.g": np.ones(w), b + "ln1.b": np.zeros(w),
            b + "qkv.w": _xavier(rng, (w, 3 * w)), b + "qkv.b": np.zeros(3 * w),
            b + "proj.w": _xavier(rng, (w, w)), b + "proj.b": np.zeros(w),
            b + "ln2.g": np.ones(w), b + "ln2.b": np.zeros(w),
            b + "fc1.w": _xavier(rng, (w, hid)), b + "fc1.b": np.zeros(hid),
            b + "fc2.w": _xavier(rng, (hid, w)), b + "fc2.b": np.zeros(w),
        })
    p["norm.g"] = np.ones(w)
    p["norm.b"] = np.zeros(w)
    p["out.w"] = _xavier(rng, (w, config.out_dim))
    p["out.b"] = np.zeros(config.out_dim)
    return p


def _attention(x, P, b, heads):
    B, T, w = x.shape
    dh = w // heads
    qkv = F.matmul(x, P[b + "qkv.w"]) + P[b + "qkv.b"]
    qkv = F.transpose(F.reshape(qkv, (B, T, 3, heads, dh)), (2, 0, 3, 1, 4))
    q, k, v = qkv[0], qkv[1], qkv[2]
    att = F.softmax(F.matmul(q, F.swapaxes(k, -1, -2)) * (1.0 / math.sqrt(dh)), axis=-1)
    o = F.reshape(F.transpose(F.matmul(att, v), (0, 2, 1, 3)), (B, T, w))
    return F.matmul(o, P[b + "proj.w"]) + P[b + "proj.b"]


def encode(tokens: np.ndarray, positions: np.ndarray, params, config: EncoderConfig,
           pos_table: np.ndarray | None = None):
    """Pre-norm transformer over [CLS] + kept patch tokens; returns the projected [CLS] state.

    ``tokens`` is (B, n, patch_dim); ``positions`` (B, n) or (n,) holds the
    original grid index of every kept token.
    """
    tokens = np.asarray(tokens, dtype=np.float64)
    if tokens.ndim == 2:
        tokens = tokens[None]
    B, n, _ = tokens.shape
    if n < 1:
        raise EmptyMaskError("encoder needs at least one patch token")
    positions = np.broadcast_to(np.asarray(positions), (B, n))
    if pos_table is None:
        pos_table = sincos_pos_embed(config.grid, config.width)
    P = params
    x = F.matmul(tokens, P["pe.w"]) + P["pe.b"] + pos_table[positions]
    cls = F.broadcast_to(F.reshape(P["cls"], (1, 1, config.width)), (B, 1, config.width))
    x = F.concat([cls, x], axis=1)
    for i in range(config.depth):
        b = f"blk{i}."
        x = x + _attention(F.layer_norm(x, P[b + "ln1.g"], P[b + "ln1.b"]), P, b, config.heads)
        h = F.layer_norm(x, P[b + "ln2.g"], P[b + "ln2.b"])
        h = F.gelu(F.matmul(h, P[b + "fc1.w"]) + P[b + "fc1.b"])
        x = x + F.matmul(h, P[b + "fc2.w"]) + P[b + "fc2.b"]
    x = F.layer_norm(x, P["norm.g"], P["norm.b"])
    return F.matmul(x[:, 0, :], P["out.w"]) + P["out.b"]


# -- Euclidean head ------------------------------------------------------------


def batch_norm(x, gamma, beta, train: bool, running: dict | None = None, key: str = "",
               momentum: float = 0.1, eps: float = 1e-5):
    """Batch normalisation over axis 0; updates ``running`` stats in train mode."""
    if train:
        n = x.shape[0]
        if n < 2:
            raise ValueError("batch norm in train mode needs a batch of at least 2")
        mu = F.mean(x, axis=0)
        xc = x - mu
        var = F.mean(xc * xc, axis=0)
        if running is not None:
            mv, vv = value(mu), value(var) * n / (n - 1)
            running[key + ".mean"] = (1 - momentum) * running.get(key + ".mean", np.zeros_like(mv)) + momentum * mv
            running[key + ".var"] = (1 - momentum) * running.get(key + ".var", np.ones_like(vv)) + momentum * vv
        return xc / F.sqrt(var + eps) * gamma + beta
    if running is None:
        raise ValueError("eval-mode batch norm needs running statistics")
    return (x - running[key + ".mean"]) / np.sqrt(running[key + ".var"] + eps) * gamma + beta


def init_euclid_head(d_in: int, hidden: int, d_out: int, rng: np.random.Generator,
                     prefix: str = "eh.") -> dict[str, np.ndarray]:
    dims = [(d_in, hidden), (hidden, hidden), (hidden, d_out)]
    p = {}
    for i, (a, b) in enumerate(dims):
        p[f"{prefix}fc{i}.w"] = rng.standard_normal((a, b)) * math.sqrt(2.0 / (a + b))
        p[f"{prefix}fc{i}.b"] = np.zeros(b)
        if i < 2:
            p[f"{prefix}bn{i}.g"] = np.ones(a)
            p[f"{prefix}bn{i}.b"] = np.zeros(a)
    return p


def euclid_head(z, params, train: bool = True, running: dict | None = None, prefix: str = "eh."):
    """(BN -> linear -> GELU) twice, then a final linear layer."""
    h = z
    for i in range(2):
        h = batch_norm(h, params[f"{prefix}bn{i}.g"], params[f"{prefix}bn{i}.b"], train, running, f"{prefix}bn{i}")
        h = F.gelu(F.matmul(h, params[f"{prefix}fc{i}.w"]) + params[f"{prefix}fc{i}.b"])
    return F.matmul(h, params[f"{prefix}fc2.w"]) + params[f"{prefix}fc2.b"]


# -- hyperbolic head -----------------------------------------------------------


def hyp_linear(x, weight, bias, k: Curvature | float = 1.0):
    """Möbius linear layer exp_0(log_0(x) W) (+) b."""
    h = exp_map(F.matmul(log_map(x, None, k), weight), None, k)
    return project_to_ball(mobius_add(h, bias, k), k)


def hyp_relu(x, k: Curvature | float = 1.0):
    return exp_map(F.relu(log_map(x, None, k)), None, k)


def init_hyp_head(d_in: int, hidden: int, d_out: int, rng: np.random.Generator,
                  prefix: str = "hh.") -> dict[str, np.ndarray]:
    dims = [(d_in, hidden), (hidden, hidden), (hidden, d_out)]
    p = {}
    for i, (a, b) in enumerate(dims):
        p[f"{prefix}fc{i}.w"] = rng.standard_normal((a, b)) * math.sqrt(2.0 / (a + b))
        p[f"{prefix}fc{i}.b"] = np.zeros(b)
    return p


def hyp_head(x, params, k: Curvature | float = 1.0, prefix: str = "hh."):
    """hyp_linear -> hyp_relu -> hyp_linear -> hyp_relu -> hyp_linear."""
    h = x
    for i in range(3):
        h = hyp_linear(h, params[f"{prefix}fc{i}.w"], params[f"{prefix}fc{i}.b"], k)
        if i < 2:
            h = hyp_relu(h, k)
    return h


def is_ball_param(name: str) -> bool:
    """Hyperbolic-head biases are ball points and follow Riemannian updates."""
    return name.startswith("hh.") and name.endswith(".b")


def to_ball(z, k: Curvature | float = 1.0, clip_radius: float = 2.3):
    """Encoder output -> Poincaré ball: clip in Euclidean space, then exp at the origin."""
    return exp_map(clip_euclidean(z, clip_radius), None, k)
