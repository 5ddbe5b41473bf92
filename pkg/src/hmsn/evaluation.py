"""Frozen-feature evaluation: linear probes, low-shot splits, Gromov delta, norm traces."""

from __future__ import annotations

import hashlib
import itertools
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import model
from .geometry import Curvature, as_curvature, check_in_ball, distance, log_map
from .harness import checkpoint as ckpt
from .nn import encode, patchify, sincos_pos_embed, to_ball
from .optim import AdamState, adamw_step

PROBE_KINDS = ("euclidean", "hyperbolic-tangent")


class EmptyClassError(ValueError):
    pass


class InsufficientExamplesError(ValueError):
    pass


class CheckpointMismatchError(ValueError):
    pass


# -- representations -------------------------------------------------------------


def extract_representations(cfg, params: dict[str, np.ndarray], dataset, pipeline: str | None = None,
                            batch_size: int = 256, data_mean=None, data_std=None):
    """One frozen representation per image from full, unmasked views.

    ``pipeline`` is ``"hyper"`` (encoder output mapped into the ball) or
    ``"euclid"`` (raw encoder output); by default it follows the run's
    projector. Returns (representations, labels).
    """
    if pipeline is None:
        pipeline = "hyper" if model.uses_hyperbolic_head(cfg) else "euclid"
    if pipeline not in ("hyper", "euclid"):
        raise ValueError(f"unknown pipeline {pipeline!r}")
    H, W, C = dataset.image_shape
    enc = model.encoder_config(cfg, C)
    if H != enc.image_size or W != enc.image_size:
        raise CheckpointMismatchError(f"{H}x{W} images do not match the encoder's {enc.image_size}px input")
    if params["pe.w"].shape != (enc.patch_dim, enc.width):
        raise CheckpointMismatchError("parameters do not match the configured encoder")
    images = dataset.images
    if data_mean is not None:
        images = (dataset.raw.astype(np.float64) / 255.0 - data_mean) / data_std
    pos_table = sincos_pos_embed(enc.grid, enc.width)
    positions = np.arange(enc.num_patches)
    k = Curvature(cfg.curvature)
    out = []
    for s in range(0, len(images), batch_size):
        tokens = patchify(images[s:s + batch_size], enc.patch_size)
        z = encode(tokens, positions, params, enc, pos_table)
        if pipeline == "hyper":
            z = to_ball(z, k, cfg.clip_radius)
        out.append(np.asarray(z))
    reps = np.concatenate(out) if out else np.zeros((0, cfg.dim))
    return reps, np.asarray(dataset.labels)


# -- probes ----------------------------------------------------------------------


@dataclass(frozen=True)
class ProbeConfig:
    kind: str = "hyperbolic-tangent"
    classes: int | None = None
    epochs: int = 500
    lr: float = 0.05
    label_fraction: float = 1.0
    weight_decay: float = 0.0
    curvature: float = 1.0

    def __post_init__(self):
        if self.kind not in PROBE_KINDS:
            raise ValueError(f"probe kind must be one of {PROBE_KINDS}")
        if not 0 < self.label_fraction <= 1:
            raise ValueError("label_fraction must lie in (0, 1]")
        if self.epochs < 1 or self.lr <= 0:
            raise ValueError("epochs and lr must be positive")


@dataclass
class EvalReport:
    top1: float
    per_class: list[float]
    split: dict
    seed: int
    config_hash: str = ""
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 0.0 <= self.top1 <= 100.0:
            raise ValueError("top1 must be a percentage")

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)


@dataclass
class ProbeParams:
    W: np.ndarray
    b: np.ndarray
    kind: str
    curvature: float

    def features(self, reps: np.ndarray) -> np.ndarray:
        return probe_features(reps, self.kind, self.curvature)

    def logits(self, reps: np.ndarray) -> np.ndarray:
        return self.features(reps) @ self.W + self.b

    def predict(self, reps: np.ndarray) -> np.ndarray:
        return np.argmax(self.logits(reps), axis=1)


def probe_features(reps: np.ndarray, kind: str, curvature: float = 1.0) -> np.ndarray:
    reps = np.asarray(reps, dtype=np.float64)
    if kind == "hyperbolic-tangent":
        k = as_curvature(curvature)
        check_in_ball(reps, k)
        return log_map(reps, None, k)
    return reps


def _fit_softmax(X: np.ndarray, y: np.ndarray, classes: int, cfg: ProbeConfig):
    """Full-batch Adam on mean cross-entropy of softmax(X W + b)."""
    n, d = X.shape
    params = {"W": np.zeros((d, classes)), "b": np.zeros(classes)}
    state = AdamState(lr=cfg.lr)
    onehot = np.eye(classes)[y]
    for _ in range(cfg.epochs):
        logits = X @ params["W"] + params["b"]
        logits -= logits.max(axis=1, keepdims=True)
        p = np.exp(logits)
        p /= p.sum(axis=1, keepdims=True)
        g = (p - onehot) / n
        grads = {"W": X.T @ g + cfg.weight_decay * params["W"], "b": g.sum(axis=0)}
        params = adamw_step(params, grads, state)
    return params["W"], params["b"]


def low_shot_split(labels, fraction: float, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Stratified subset of ceil(fraction * n_class) indices per class, and the rest."""
    labels = np.asarray(labels)
    if not 0 < fraction <= 1:
        raise ValueError("fraction must lie in (0, 1]")
    rng = np.random.default_rng(seed)
    train = []
    for c in np.unique(labels):
        idx = np.nonzero(labels == c)[0]
        if fraction * len(idx) < 1 - 1e-9:
            raise InsufficientExamplesError(f"class {c} has {len(idx)} examples; fraction {fraction} keeps none")
        n = math.ceil(fraction * len(idx) - 1e-9)
        train.append(rng.choice(idx, size=n, replace=False))
    train_idx = np.sort(np.concatenate(train)) if train else np.zeros(0, dtype=np.int64)
    eval_mask = np.ones(len(labels), dtype=bool)
    eval_mask[train_idx] = False
    return train_idx, np.nonzero(eval_mask)[0]


def train_probe(reps, labels, config: ProbeConfig, eval_reps=None, eval_labels=None, seed: int = 0,
                config_hash: str = "") -> tuple[ProbeParams, EvalReport]:
    """Fit a linear probe on frozen representations and report held-out top-1.

    Without an explicit evaluation set, ``reps`` is split by
    :func:`low_shot_split` at ``config.label_fraction``.
    """
    reps = np.asarray(reps, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if eval_reps is None:
        tr, ev = low_shot_split(labels, config.label_fraction, seed)
        if len(ev) == 0:
            raise InsufficientExamplesError("no held-out examples: pass an evaluation set")
        Xtr, ytr, Xev, yev = reps[tr], labels[tr], reps[ev], labels[ev]
    else:
        Xtr, ytr = reps, labels
        if config.label_fraction < 1:
            tr, _ = low_shot_split(labels, config.label_fraction, seed)
            Xtr, ytr = reps[tr], labels[tr]
        Xev, yev = np.asarray(eval_reps, dtype=np.float64), np.asarray(eval_labels, dtype=np.int64)
    classes = config.classes or int(max(labels.max(), yev.max() if len(yev) else 0)) + 1
    counts = np.bincount(ytr, minlength=classes)
    if np.any(counts == 0):
        raise EmptyClassError(f"classes without training examples: {np.nonzero(counts == 0)[0].tolist()}")
    Ftr = probe_features(Xtr, config.kind, config.curvature)
    W, b = _fit_softmax(Ftr, ytr, classes, config)
    probe = ProbeParams(W, b, config.kind, config.curvature)
    pred = probe.predict(Xev)
    correct = pred == yev
    per_class = [float(100.0 * correct[yev == c].mean()) if np.any(yev == c) else float("nan")
                 for c in range(classes)]
    report = EvalReport(
        top1=float(100.0 * correct.mean()) if len(yev) else 0.0,
        per_class=per_class,
        split={"kind": config.kind, "label_fraction": config.label_fraction,
               "n_train": int(len(ytr)), "n_eval": int(len(yev))},
        seed=seed,
        config_hash=config_hash,
    )
    return probe, report


# -- hyperbolicity ----------------------------------------------------------------


def _four_point(d01, d23, d02, d13, d03, d12):
    s = np.sort(np.stack([d01 + d23, d02 + d13, d03 + d12]), axis=0)
    return 0.5 * (s[2] - s[1])


def _pair_dist(x, y, k):
    if k is None:
        return np.linalg.norm(x - y, axis=-1)
    return distance(x, y, k)


def delta_hyperbolicity(reps, sample_size: int = 1500, seed: int = 0,
                        curvature: Curvature | float | None = None, exact: bool = False) -> float:
    """Gromov delta by the four-point condition, maximised over 4-tuples.

    Distances are geodesic on the ball when ``curvature`` is given, Euclidean
    otherwise. ``exact`` enumerates every 4-subset instead of sampling.
    """
    X = np.asarray(reps, dtype=np.float64)
    n = len(X)
    if n < 4:
        raise ValueError("need at least 4 points")
    k = None if curvature is None else as_curvature(curvature)
    if exact:
        tuples = np.array(list(itertools.combinations(range(n), 4)))
    else:
        rng = np.random.default_rng(seed)
        tuples = np.stack([rng.choice(n, size=4, replace=False) for _ in range(sample_size)])
    best = 0.0
    for s in range(0, len(tuples), 20000):
        t = tuples[s:s + 20000]
        a, b, c, e = (X[t[:, i]] for i in range(4))
        dl = [_pair_dist(p, q, k) for p, q in ((a, b), (c, e), (a, c), (b, e), (a, e), (b, c))]
        best = max(best, float(np.max(_four_point(*dl))))
    return best


# -- prototype norms ---------------------------------------------------------------


def prototype_norm_trace(banks) -> list[float]:
    """Mean Euclidean row norm for each bank (arrays, PrototypeBanks or checkpoint paths)."""
    out = []
    for b in banks:
        if isinstance(b, str):
            _, tensors = ckpt.load(b)
            b = tensors["bank"]
        v = getattr(b, "vectors", b)
        out.append(float(np.mean(np.linalg.norm(np.asarray(v), axis=1))))
    return out


def config_hash(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True).encode()).hexdigest()[:16]
