"""Training loop: anchor branch on the tape, EMA target branch in plain numpy."""

from __future__ import annotations

import json
import logging
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .. import diff as D
from .. import model
from ..diff import ops as F
from ..geometry import BoundaryViolationError, Curvature
from ..nn import is_ball_param, sincos_pos_embed
from ..objective import entropy
from ..optim import (
    AdamState,
    EmaSchedule,
    NonFiniteGradientError,
    RAdamState,
    adamw_step,
    clip_grad_norm,
    ema_update,
    lr_at,
    radam_step,
)
from ..prototypes import EUCLIDEAN, LEARNABLE, PrototypeBank
from . import checkpoint as ckpt
from .config import RunConfig, total_steps
from .data import Dataset, dataset_from_config
from .views import make_view_batch

log = logging.getLogger(__name__)

HIST_BINS = 10
GROUPS = ("decay", "plain", "ball", "proto")


class TrainingAborted(RuntimeError):
    def __init__(self, msg: str, dump_path: str | None = None):
        super().__init__(msg if dump_path is None else f"{msg} (diagnostics: {dump_path})")
        self.dump_path = dump_path


@dataclass
class TrainState:
    anchor: dict[str, np.ndarray]
    target: dict[str, np.ndarray]
    bank: PrototypeBank
    optim: dict[str, AdamState]
    running: dict[str, np.ndarray]
    rng: np.random.Generator
    step: int = 0
    data_mean: np.ndarray = field(default_factory=lambda: np.zeros(3))
    data_std: np.ndarray = field(default_factory=lambda: np.ones(3))


@dataclass
class TrainResult:
    state: TrainState
    config: RunConfig
    metrics: list[dict]
    checkpoint: str | None
    output_dir: str | None


def param_group(name: str) -> str:
    if is_ball_param(name):
        return "ball"
    return "decay" if name.endswith(".w") else "plain"


def _rngs(seed: int):
    # separate streams so that, e.g., the prototype placement does not shift the data order
    return (np.random.default_rng([seed, 0]), np.random.default_rng([seed, 1]),
            np.random.default_rng([seed, 2]))


def init_state(cfg: RunConfig, dataset: Dataset) -> TrainState:
    init_rng, proto_rng, loop_rng = _rngs(cfg.seed)
    channels = dataset.image_shape[-1]
    anchor = model.init_params(cfg, channels, init_rng)
    anchor = {k: anchor[k] for k in sorted(anchor)}
    bank = model.init_bank(cfg, proto_rng)
    o = cfg.optim
    optim = {
        "decay": AdamState(lr=o.lr, weight_decay=o.weight_decay),
        "plain": AdamState(lr=o.lr),
        "ball": RAdamState(lr=o.lr),
        "proto": RAdamState(lr=o.lr_proto) if bank.mode == LEARNABLE else AdamState(lr=o.lr_proto),
    }
    return TrainState(anchor, {k: v.copy() for k, v in anchor.items()}, bank, optim, {}, loop_rng, 0,
                      np.array(dataset.mean, dtype=np.float64), np.array(dataset.std, dtype=np.float64))


# -- one step ----------------------------------------------------------------------


def _rep_norms(z: np.ndarray, cfg: RunConfig) -> tuple[np.ndarray, float]:
    rep = model.representation(z, cfg)
    if model.uses_hyperbolic_head(cfg):
        k = Curvature(cfg.curvature)
        return np.linalg.norm(rep, axis=-1) * k.sqrt_c, 1.0
    return np.linalg.norm(rep, axis=-1), 2.0 * cfg.clip_radius


def train_step(state: TrainState, cfg: RunConfig, dataset: Dataset, total: int, enc, pos_table,
               lr_scale: float = 1.0) -> dict:
    """Advance ``state`` by one optimisation step; returns the metrics record."""
    rng = state.rng
    t = state.step
    idx = rng.choice(len(dataset), size=cfg.batch_size, replace=False)
    views = make_view_batch(dataset.images[idx], cfg.views, rng, cfg.encoder.patch_size, source=idx)
    o = cfg.optim
    lr = lr_scale * lr_at(t, total, o.lr, o.warmup_frac)
    lr_proto = lr_scale * lr_at(t, total, o.lr_proto, o.warmup_frac)
    protos = state.bank.vectors

    # target branch: EMA parameters, sharper temperature, no tape
    zt = model.embed_tokens(views.target, views.target_positions, state.target, cfg, enc, pos_table)
    et = model.head(zt, state.target, cfg, train=True, running=None)
    pt = model.predict(et, protos, cfg, cfg.tau_plus)

    g = D.Graph()
    P = g.params(state.anchor)
    Q = g.param(protos, name="protos") if state.bank.trainable else protos
    preds = []
    for tokens, pos in views.anchors:
        za = model.embed_tokens(tokens, pos, P, cfg, enc, pos_table)
        ea = model.head(za, P, cfg, train=True, running=state.running)
        pa = model.predict(ea, Q, cfg, cfg.tau)
        preds.append(F.reshape(pa, (1,) + pa.shape))
    anchors = F.concat(preds, axis=0)
    loss, parts = model.loss(cfg, pt, anchors)
    wrt = dict(P, protos=Q) if state.bank.trainable else P
    grads = clip_grad_norm(D.grad(loss, wrt), o.grad_clip)
    proto_grad = grads.pop("protos", None)

    groups: dict[str, dict[str, str]] = {k: {} for k in GROUPS}
    for name in state.anchor:
        groups[param_group(name)][name] = name
    new = {}
    for gname in ("decay", "plain"):
        names = groups[gname]
        if names:
            new.update(adamw_step({n: state.anchor[n] for n in names}, {n: grads[n] for n in names},
                                  state.optim[gname], lr=lr))
    if groups["ball"]:
        names = groups["ball"]
        new.update(radam_step({n: state.anchor[n] for n in names}, {n: grads[n] for n in names},
                              state.optim["ball"], Curvature(cfg.curvature), lr=lr))
    if state.bank.mode == LEARNABLE:
        out = radam_step({"protos": protos}, {"protos": proto_grad}, state.optim["proto"],
                         state.bank.curvature, lr=lr_proto)
        state.bank = PrototypeBank(LEARNABLE, out["protos"], state.bank.curvature)
    elif state.bank.mode == EUCLIDEAN:
        out = adamw_step({"protos": protos}, {"protos": proto_grad}, state.optim["proto"], lr=lr_proto)
        state.bank = PrototypeBank(EUCLIDEAN, out["protos"], state.bank.curvature)
    state.anchor = {k: new[k] for k in sorted(new)}

    ema = EmaSchedule(o.ema_start, o.ema_end, total)
    momentum = ema(t)
    state.target = ema_update(state.target, state.anchor, momentum)
    state.step = t + 1

    norms, hi = _rep_norms(zt, cfg)
    hist = np.histogram(np.minimum(norms, hi), bins=HIST_BINS, range=(0.0, hi))[0]
    bank_norms = np.linalg.norm(state.bank.vectors, axis=1)
    return {
        "step": state.step,
        "lr": lr,
        "lr_proto": lr_proto,
        "ema_momentum": momentum,
        **parts,
        "target_entropy": float(np.mean(entropy(pt))),
        "target_memax_entropy": float(entropy(np.mean(pt, axis=0))),
        "log_K": math.log(state.bank.K),
        "proto_mean_norm": float(np.mean(bank_norms)),
        "proto_max_norm": float(np.max(bank_norms)),
        "rep_norm_mean": float(np.mean(norms)),
        "rep_norm_hist": [int(c) for c in hist],
        "rep_norm_range": hi,
    }


# -- checkpoints -------------------------------------------------------------------


def state_to_checkpoint(state: TrainState, cfg: RunConfig, total: int) -> tuple[dict, dict]:
    tensors = {}
    for k, v in state.anchor.items():
        tensors["anchor/" + k] = v
    for k, v in state.target.items():
        tensors["target/" + k] = v
    tensors["bank"] = state.bank.vectors
    for gname, st in state.optim.items():
        for k, v in st.m.items():
            tensors[f"optim/{gname}/m/{k}"] = v
        for k, v in st.v.items():
            tensors[f"optim/{gname}/v/{k}"] = v
    for k, v in state.running.items():
        tensors["running/" + k] = v
    tensors["data/mean"] = state.data_mean
    tensors["data/std"] = state.data_std
    meta = {
        "config": cfg.to_dict(),
        "config_digest": cfg.digest(),
        "step": state.step,
        "total_steps": total,
        "rng": state.rng.bit_generator.state,
        "bank_mode": state.bank.mode,
        "curvature": state.bank.curvature.c,
        "optim": {g: {"kind": type(s).__name__, "lr": s.lr, "beta1": s.beta1, "beta2": s.beta2, "eps": s.eps,
                      "weight_decay": s.weight_decay, "step": s.step} for g, s in state.optim.items()},
    }
    return meta, tensors


def state_from_checkpoint(meta: dict, tensors: dict) -> tuple[RunConfig, TrainState, int]:
    cfg = RunConfig.from_dict(meta["config"])
    pick = lambda prefix: {k[len(prefix):]: v for k, v in tensors.items() if k.startswith(prefix)}  # noqa: E731
    optim = {}
    for g, s in meta["optim"].items():
        klass = RAdamState if s["kind"] == "RAdamState" else AdamState
        st = klass(lr=s["lr"], beta1=s["beta1"], beta2=s["beta2"], eps=s["eps"],
                   weight_decay=s["weight_decay"], step=s["step"])
        st.m = pick(f"optim/{g}/m/")
        st.v = pick(f"optim/{g}/v/")
        optim[g] = st
    rng = np.random.Generator(np.random.PCG64())
    rng.bit_generator.state = meta["rng"]
    bank = PrototypeBank(meta["bank_mode"], tensors["bank"], Curvature(meta["curvature"]))
    state = TrainState(pick("anchor/"), pick("target/"), bank, optim, pick("running/"), rng, meta["step"],
                       tensors["data/mean"], tensors["data/std"])
    return cfg, state, meta["total_steps"]


def load_checkpoint(path: str) -> tuple[RunConfig, TrainState, int]:
    meta, tensors = ckpt.load(path)
    return state_from_checkpoint(meta, tensors)


def save_checkpoint(path: str, state: TrainState, cfg: RunConfig, total: int) -> str:
    meta, tensors = state_to_checkpoint(state, cfg, total)
    ckpt.save(path, meta, tensors)
    return path


# -- loop ------------------------------------------------------------------------


def _dump(out_dir: str | None, state: TrainState, err: Exception) -> str | None:
    if not out_dir:
        return None
    path = os.path.join(out_dir, f"abort_step{state.step:06d}.json")
    info = {
        "step": state.step,
        "error": repr(err),
        "param_norms": {k: float(np.linalg.norm(v)) for k, v in state.anchor.items()},
        "param_finite": {k: bool(np.all(np.isfinite(v))) for k, v in state.anchor.items()},
        "proto_mean_norm": state.bank.mean_norm(),
    }
    with open(path, "w") as fh:
        json.dump(info, fh, indent=2, sort_keys=True)
    return path


def _metric_line(rec: dict) -> str:
    return json.dumps(rec, sort_keys=True)


def train(cfg: RunConfig | None = None, *, dataset: Dataset | None = None, resume: str | None = None,
          stop_at: int | None = None, output_dir: str | None = None, write: bool = True,
          lr_scale: float = 1.0) -> TrainResult:
    """Run (or resume) training.

    ``resume`` restores a checkpoint, including its configuration and rng
    state, so that the continued run replays the uninterrupted one exactly.
    ``stop_at`` halts after that many total steps and checkpoints there.
    """
    if resume:
        cfg, state, total = load_checkpoint(resume)
    else:
        if cfg is None:
            raise ValueError("need a config or a checkpoint to resume from")
        cfg.validate(check_paths=dataset is None)
        state = None
    out_dir = (output_dir or cfg.output_dir) if write else None
    if dataset is None:
        dataset = dataset_from_config(cfg)
    if state is None:
        state = init_state(cfg, dataset)
        total = total_steps(cfg, len(dataset))
    elif not (np.array_equal(dataset.mean, state.data_mean) and np.array_equal(dataset.std, state.data_std)):
        raise ValueError("dataset normalisation differs from the checkpointed run")
    if cfg.batch_size > len(dataset):
        raise ValueError(f"batch size {cfg.batch_size} exceeds dataset size {len(dataset)}")
    enc = model.encoder_config(cfg, dataset.image_shape[-1])
    pos_table = sincos_pos_embed(enc.grid, enc.width)
    end = total if stop_at is None else min(stop_at, total)

    metrics_fh = None
    if out_dir:
        os.makedirs(os.path.join(out_dir, "checkpoints"), exist_ok=True)
        with open(os.path.join(out_dir, "config.json"), "w") as fh:
            fh.write(cfg.to_json() + "\n")
        mpath = os.path.join(out_dir, "metrics.jsonl")
        kept = []
        if resume and os.path.exists(mpath):
            with open(mpath) as fh:
                kept = [ln for ln in fh if ln.strip() and json.loads(ln)["step"] <= state.step]
        metrics_fh = open(mpath, "w")
        metrics_fh.writelines(kept)

    metrics: list[dict] = []
    last_ckpt = None
    try:
        while state.step < end:
            try:
                # overflow is detected explicitly below; keep numpy quiet about it
                with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
                    rec = train_step(state, cfg, dataset, total, enc, pos_table, lr_scale)
            except (D.NonFiniteError, NonFiniteGradientError, FloatingPointError, BoundaryViolationError) as e:
                path = _dump(out_dir, state, e)
                raise TrainingAborted(f"non-finite value at step {state.step + 1}: {e}", path) from e
            metrics.append(rec)
            if metrics_fh and (state.step % cfg.log_every == 0 or state.step == end):
                metrics_fh.write(_metric_line(rec) + "\n")
            if out_dir and cfg.checkpoint_every and state.step % cfg.checkpoint_every == 0:
                last_ckpt = save_checkpoint(os.path.join(out_dir, "checkpoints", f"step_{state.step:06d}.ckpt"),
                                            state, cfg, total)
        if out_dir:
            name = "final.ckpt" if state.step >= total else f"step_{state.step:06d}.ckpt"
            last_ckpt = save_checkpoint(os.path.join(out_dir, "checkpoints", name), state, cfg, total)
    finally:
        if metrics_fh:
            metrics_fh.close()
    return TrainResult(state, cfg, metrics, last_ckpt, out_dir)


def read_metrics(path: str) -> list[dict]:
    with open(path) as fh:
        return [json.loads(ln) for ln in fh if ln.strip()]
