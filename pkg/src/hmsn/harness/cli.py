"""Command-line entry point: ``hmsn {train,eval,embed,plot,protoinit,gradcheck}``."""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys

import numpy as np

from .. import gradsuite
from ..evaluation import (
    ProbeConfig,
    delta_hyperbolicity,
    extract_representations,
    low_shot_split,
    train_probe,
)
from ..geometry import Curvature
from ..model import uses_hyperbolic_head
from ..prototypes import min_pairwise_angle, place_ideal
from .config import apply_overrides, load_config
from .data import dataset_from_config
from .export import export_embeddings, export_prototypes, plot_disk
from .train import load_checkpoint, train


def _config_from_checkpoint(path: str, overrides: list[str]):
    cfg, state, _ = load_checkpoint(path)
    if overrides:
        cfg = apply_overrides(cfg, overrides).validate()
    return cfg, state


def evaluate_checkpoint(path: str, probe: ProbeConfig, seed: int = 0, holdout: float = 0.2,
                        pipeline: str | None = None, overrides: list[str] | None = None,
                        params: str = "target", delta: bool = False):
    """Probe a checkpoint's frozen representations.

    ``label_fraction < 1`` is the low-shot protocol (train on the stratified
    subset, evaluate on the rest); otherwise ``holdout`` of every class is
    kept aside for evaluation.
    """
    cfg, state = _config_from_checkpoint(path, overrides or [])
    pipeline = pipeline or ("hyper" if uses_hyperbolic_head(cfg) else "euclid")
    ds = dataset_from_config(cfg)
    reps, labels = extract_representations(cfg, getattr(state, params), ds, pipeline,
                                           data_mean=state.data_mean, data_std=state.data_std)
    if probe.label_fraction < 1:
        _, report = train_probe(reps, labels, probe, seed=seed, config_hash=cfg.digest())
    else:
        tr, ev = low_shot_split(labels, 1.0 - holdout, seed)
        _, report = train_probe(reps[tr], labels[tr], probe, reps[ev], labels[ev], seed=seed,
                                config_hash=cfg.digest())
    report.extra["checkpoint"] = os.path.abspath(path)
    report.extra["pipeline"] = pipeline
    if delta:
        k = Curvature(cfg.curvature) if pipeline == "hyper" else None
        report.extra["delta"] = delta_hyperbolicity(reps, seed=seed, curvature=k)
    return report


def cmd_train(args) -> int:
    if args.resume:
        res = train(resume=args.resume, stop_at=args.stop_at, output_dir=args.output_dir)
    else:
        cfg = load_config(args.config, args.set)
        res = train(cfg, stop_at=args.stop_at, output_dir=args.output_dir)
    last = res.metrics[-1] if res.metrics else {}
    print(json.dumps({"checkpoint": res.checkpoint, "step": res.state.step,
                      "loss": last.get("loss"), "proto_mean_norm": last.get("proto_mean_norm")}))
    return 0


def cmd_eval(args) -> int:
    probe = ProbeConfig(kind=args.probe, epochs=args.epochs, lr=args.lr, label_fraction=args.label_fraction)
    report = evaluate_checkpoint(args.checkpoint, probe, args.seed, args.holdout, args.pipeline, args.set,
                                 delta=args.delta)
    text = report.to_json()
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    print(text)
    return 0


def cmd_embed(args) -> int:
    cfg, state = _config_from_checkpoint(args.checkpoint, args.set)
    ds = dataset_from_config(cfg)
    if args.limit:
        ds = ds.subset(np.arange(min(args.limit, len(ds))))
    reps, labels = extract_representations(cfg, state.target, ds, args.pipeline,
                                           data_mean=state.data_mean, data_std=state.data_std)
    hyper = (args.pipeline or ("hyper" if uses_hyperbolic_head(cfg) else "euclid")) == "hyper"
    export_embeddings(reps, labels, args.out, ball=hyper, curvature=cfg.curvature)
    if args.prototypes_out:
        export_prototypes(state.bank.vectors, args.prototypes_out)
    print(args.out)
    return 0


def cmd_plot(args) -> int:
    print(plot_disk(args.embeddings, args.prototypes, args.out))
    return 0


def cmd_protoinit(args) -> int:
    bank = place_ideal(args.K, args.dim, np.random.default_rng(args.seed))
    if args.out:
        export_prototypes(bank.vectors, args.out)
    print(json.dumps({"K": args.K, "dim": args.dim,
                      "min_angle_deg": math.degrees(min_pairwise_angle(bank.vectors))}))
    return 0


def cmd_gradcheck(args) -> int:
    results, seconds = gradsuite.run(args.points, args.seed, args.only)
    worst = 0.0
    for r in results:
        ok = r.max_rel_err <= args.tol
        worst = max(worst, r.max_rel_err)
        print(f"{'ok  ' if ok else 'FAIL'} {r.name:28s} max rel err {r.max_rel_err:.2e}")
    print(f"{len(results)} cases x {args.points} points in {seconds:.1f}s; worst {worst:.2e}")
    return 0 if worst <= args.tol else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hmsn", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def with_overrides(sp):
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="dotted config override, e.g. optim.lr=5e-4 (repeatable)")

    t = sub.add_parser("train", help="train a model")
    t.add_argument("--config", help="JSON run configuration")
    with_overrides(t)
    t.add_argument("--resume", help="continue from a checkpoint")
    t.add_argument("--stop-at", type=int, help="stop after this many total steps")
    t.add_argument("--output-dir")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="linear probe on frozen representations")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--probe", choices=["euclidean", "hyperbolic-tangent"], default="hyperbolic-tangent")
    e.add_argument("--pipeline", choices=["hyper", "euclid"])
    e.add_argument("--label-fraction", type=float, default=1.0)
    e.add_argument("--holdout", type=float, default=0.2)
    e.add_argument("--epochs", type=int, default=500)
    e.add_argument("--lr", type=float, default=0.05)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--delta", action="store_true", help="also report Gromov delta")
    e.add_argument("--out")
    with_overrides(e)
    e.set_defaults(func=cmd_eval)

    m = sub.add_parser("embed", help="export representations as CSV")
    m.add_argument("--checkpoint", required=True)
    m.add_argument("--out", required=True)
    m.add_argument("--prototypes-out")
    m.add_argument("--pipeline", choices=["hyper", "euclid"])
    m.add_argument("--limit", type=int, default=0)
    with_overrides(m)
    m.set_defaults(func=cmd_embed)

    pl = sub.add_parser("plot", help="Poincare disk SVG of 2-D embeddings")
    pl.add_argument("--embeddings", required=True)
    pl.add_argument("--prototypes")
    pl.add_argument("--out", required=True)
    pl.set_defaults(func=cmd_plot)

    pi = sub.add_parser("protoinit", help="place ideal prototypes")
    pi.add_argument("--K", type=int, default=64)
    pi.add_argument("--dim", type=int, default=16)
    pi.add_argument("--seed", type=int, default=0)
    pi.add_argument("--out")
    pi.set_defaults(func=cmd_protoinit)

    g = sub.add_parser("gradcheck", help="finite-difference gradient suite")
    g.add_argument("--points", type=int, default=20)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--tol", type=float, default=1e-4)
    g.add_argument("--only")
    g.set_defaults(func=cmd_gradcheck)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
