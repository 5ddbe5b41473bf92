"""Dataset ingestion: CIFAR-10 binary batches, raw tensors, synthetic class trees."""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass, field

import numpy as np

CIFAR_RECORD = 3073
CIFAR_SHAPE = (3, 32, 32)


class FormatError(ValueError):
    def __init__(self, msg: str, offset: int):
        super().__init__(f"{msg} (byte offset {offset})")
        self.offset = offset


class ChecksumError(ValueError):
    pass


@dataclass
class Dataset:
    raw: np.ndarray  # (N, H, W, C) uint8
    labels: np.ndarray  # (N,) int64
    mean: np.ndarray = field(default=None)
    std: np.ndarray = field(default=None)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.raw.dtype != np.uint8 or self.raw.ndim != 4:
            raise ValueError("raw images must be a (N, H, W, C) uint8 array")
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if len(self.labels) != len(self.raw):
            raise ValueError("image and label counts differ")
        x = self.raw.astype(np.float64) / 255.0
        if self.mean is None:
            self.mean = x.mean(axis=(0, 1, 2))
            self.std = np.maximum(x.std(axis=(0, 1, 2)), 1e-8)
        self.images = (x - self.mean) / self.std

    def __len__(self):
        return len(self.raw)

    @property
    def num_classes(self) -> int:
        return int(self.labels.max()) + 1 if len(self.labels) else 0

    @property
    def image_shape(self) -> tuple[int, int, int]:
        return tuple(self.raw.shape[1:])

    def subset(self, idx) -> "Dataset":
        return Dataset(self.raw[idx], self.labels[idx], self.mean, self.std, dict(self.meta))


def _verify(path: str, sha256: str | None):
    if not sha256:
        return
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    if h.hexdigest() != sha256.lower():
        raise ChecksumError(f"{path}: sha256 {h.hexdigest()} != expected {sha256}")


def read_cifar10_binary(path: str) -> tuple[np.ndarray, np.ndarray]:
    """One or more CIFAR-10 binary batch files (1 label byte + 3072 pixel bytes per record)."""
    paths = [path]
    if os.path.isdir(path):
        paths = sorted(os.path.join(path, f) for f in os.listdir(path) if f.endswith(".bin"))
    images, labels = [], []
    for p in paths:
        buf = np.fromfile(p, dtype=np.uint8)
        if buf.size % CIFAR_RECORD:
            n_ok = buf.size // CIFAR_RECORD
            raise FormatError(f"{p}: truncated record", n_ok * CIFAR_RECORD)
        rec = buf.reshape(-1, CIFAR_RECORD)
        bad = np.nonzero(rec[:, 0] > 9)[0]
        if bad.size:
            raise FormatError(f"{p}: label byte {rec[bad[0], 0]} out of range", int(bad[0]) * CIFAR_RECORD)
        labels.append(rec[:, 0].astype(np.int64))
        images.append(rec[:, 1:].reshape(-1, *CIFAR_SHAPE).transpose(0, 2, 3, 1))
    return np.concatenate(images), np.concatenate(labels)


def write_cifar10_binary(path: str, images: np.ndarray, labels: np.ndarray) -> None:
    rec = np.concatenate(
        [labels.astype(np.uint8)[:, None], images.transpose(0, 3, 1, 2).reshape(len(images), -1)], axis=1
    )
    rec.astype(np.uint8).tofile(path)


def read_raw_tensor(path: str) -> tuple[np.ndarray, np.ndarray]:
    """``.npz`` archive holding ``images`` (N, H, W, C) uint8 and ``labels`` (N,)."""
    try:
        with np.load(path) as z:
            images, labels = z["images"], z["labels"]
    except (KeyError, ValueError, OSError) as e:
        raise FormatError(f"{path}: not a raw-tensor archive ({e})", 0) from e
    if images.dtype != np.uint8 or images.ndim != 4:
        raise FormatError(f"{path}: images must be (N, H, W, C) uint8", 0)
    return images, labels


def synthetic_tree(depth: int = 2, branching: int = 4, per_class: int = 500, image_size: int = 32,
                   channels: int = 3, latent_dim: int = 24, noise: float = 0.5,
                   seed: int = 0) -> tuple[np.ndarray, np.ndarray, dict]:
    """Balanced hierarchy of Gaussian clusters rendered as blob images.

    Every tree node shifts its parent's latent mean by a Gaussian step whose
    scale shrinks with depth; each leaf is a class. A latent code drives the
    amplitudes of ``latent_dim`` fixed coloured Gaussian blobs.
    """
    rng = np.random.default_rng(seed)
    means = [np.zeros(latent_dim)]
    parents = [[]]
    for level in range(depth):
        scale = 0.6**level
        nxt, nxt_par = [], []
        for m, par in zip(means, parents):
            for _ in range(branching):
                nxt.append(m + scale * rng.standard_normal(latent_dim))
                nxt_par.append(par + [len(nxt) - 1])
        means, parents = nxt, nxt_par
    n_cls = len(means)

    S = image_size
    centres = rng.uniform(0, S, size=(latent_dim, 2))
    colours = rng.standard_normal((latent_dim, channels))
    sigma = S / 6.0
    yy, xx = np.meshgrid(np.arange(S) + 0.5, np.arange(S) + 0.5, indexing="ij")
    blobs = np.exp(-((yy[None] - centres[:, 0, None, None]) ** 2 + (xx[None] - centres[:, 1, None, None]) ** 2)
                   / (2 * sigma**2))  # (L, S, S)
    basis = blobs[..., None] * colours[:, None, None, :]  # (L, S, S, C)

    labels = np.repeat(np.arange(n_cls), per_class)
    codes = np.stack(means)[labels] + noise * rng.standard_normal((len(labels), latent_dim))
    img = 0.5 + 0.15 * np.tensordot(codes, basis, axes=(1, 0))
    img += 0.03 * rng.standard_normal(img.shape)
    raw = np.round(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)
    order = rng.permutation(len(labels))
    raw, labels = raw[order], labels[order]
    info = {"classes": n_cls, "depth": depth, "branching": branching,
            "ancestors": [[int(a) for a in p] for p in parents]}
    return raw, labels, info


def ingest_dataset(path: str | None, format: str, *, sha256: str | None = None, limit: int = 0,
                   image_size: int = 32, tree_depth: int = 2, branching: int = 4, per_class: int = 500,
                   latent_dim: int = 24, noise: float = 0.5, seed: int = 0) -> Dataset:
    if format == "cifar10-binary":
        _verify(path, sha256)
        raw, labels = read_cifar10_binary(path)
        meta = {"format": format, "path": path}
    elif format == "raw-tensor":
        _verify(path, sha256)
        raw, labels = read_raw_tensor(path)
        meta = {"format": format, "path": path}
    elif format == "synthetic-tree":
        raw, labels, info = synthetic_tree(tree_depth, branching, per_class, image_size,
                                           latent_dim=latent_dim, noise=noise, seed=seed)
        meta = {"format": format, **info}
    else:
        raise ValueError(f"unknown dataset format {format!r}")
    if limit:
        raw, labels = raw[:limit], labels[:limit]
    return Dataset(raw, labels, meta=meta)


def dataset_from_config(cfg) -> Dataset:
    d = cfg.data
    return ingest_dataset(d.path or None, d.format, sha256=d.sha256 or None, limit=d.limit,
                          image_size=cfg.encoder.image_size, tree_depth=d.tree_depth, branching=d.branching,
                          per_class=d.per_class, latent_dim=d.latent_dim, noise=d.noise, seed=d.seed)
