"""Command-line entry point: ``uol <subcommand> ...``.

stdout carries machine-readable JSON; human-readable summaries go to stderr.
Exit codes: 0 success, 1 runtime error, 2 usage error.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from typing import Sequence

import numpy as np

from . import io
from .ordering import OrderRelation, pair_flags, select_balanced_pairs
from .synth_data import (LabelShift, SyntheticConfig, apply_label_shift, generate_dataset,
                         parse_score_distribution, scores_of)
from .trainer import MODES, TrainConfig, evaluate, predict_scores, reference_set_for, train

log = logging.getLogger("uol")


def _default_seed() -> int:
    return int(os.environ.get("UOL_SEED", "0"))


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="uol", description="Uncertainty-oriented order learning on rated data.")
    sub = p.add_subparsers(dest="command", required=True)

    def seeded(sp):
        sp.add_argument("--seed", type=int, default=_default_seed())
        return sp

    g = seeded(sub.add_parser("gen", help="generate a synthetic rated dataset"))
    g.add_argument("--n", type=int, default=2000)
    g.add_argument("--feature-dim", type=int, default=16)
    g.add_argument("--raters", type=int, default=60)
    g.add_argument("--dispersion", type=float, nargs=2, default=(0.2, 1.0), metavar=("LO", "HI"))
    g.add_argument("--score-dist", default="uniform", help="uniform or beta:a,b")
    g.add_argument("--feature-noise", type=float, default=0.05)
    g.add_argument("--out", required=True)

    s = seeded(sub.add_parser("shift", help="apply a monotone label shift"))
    s.add_argument("--data", required=True)
    s.add_argument("--gamma", type=float, required=True)
    s.add_argument("--out", required=True)

    t = seeded(sub.add_parser("train", help="train a model"))
    t.add_argument("--data", required=True)
    t.add_argument("--out", required=True, help="checkpoint path")
    t.add_argument("--loss-csv", help="per-epoch loss trace (default: <out>.loss.csv)")
    t.add_argument("--mode", choices=MODES, default="uol")
    t.add_argument("--epochs", type=int, default=50)
    t.add_argument("--batch-size", type=int, default=32)
    t.add_argument("--lr-max", type=float, default=1e-4)
    t.add_argument("--lr-min", type=float, default=1e-6)
    t.add_argument("--theta", type=float, default=0.2)
    t.add_argument("--tau", type=float, default=1.0)
    t.add_argument("--alpha", type=float, default=1e-4)
    t.add_argument("--beta", type=float, default=1e-3)
    t.add_argument("--T", type=int, default=5)
    t.add_argument("--T-eval", type=int, default=10)
    t.add_argument("--pair-cap", type=int, default=4)
    t.add_argument("--embed-dim", type=int, default=16)
    t.add_argument("--kl-normalized", action="store_true")
    t.add_argument("-v", "--verbose", action="store_true")

    e = seeded(sub.add_parser("eval", help="evaluate a checkpoint"))
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--ref-data", help="training split for the reference set (order modes)")
    e.add_argument("--target", choices=("mean", "true"), default="mean")

    est = seeded(sub.add_parser("estimate", help="score one instance"))
    est.add_argument("--checkpoint", required=True)
    est.add_argument("--ref-data", help="training split for the reference set (order modes)")
    est.add_argument("--data", required=True, help="dataset containing the instance")
    est.add_argument("--id", type=int, required=True, help="instance id")

    a = seeded(sub.add_parser("pair-audit", help="balance statistics of pair selection"))
    a.add_argument("--data", required=True)
    a.add_argument("--batch-size", type=int, default=32)
    a.add_argument("--pair-cap", type=int, default=4)
    a.add_argument("--theta", type=float, default=0.2)
    return p


def _emit(obj) -> None:
    sys.stdout.write(json.dumps(obj, sort_keys=True) + "\n")


def _cmd_gen(args) -> None:
    cfg = SyntheticConfig(n=args.n, feature_dim=args.feature_dim, rater_count=args.raters,
                          dispersion_range=tuple(args.dispersion),
                          score_distribution=parse_score_distribution(args.score_dist),
                          feature_noise=args.feature_noise, seed=args.seed)
    data = generate_dataset(cfg)
    io.save_dataset(data, args.out)
    print(f"wrote {len(data)} instances to {args.out}", file=sys.stderr)


def _cmd_shift(args) -> None:
    data = apply_label_shift(io.load_dataset(args.data), LabelShift(args.gamma))
    io.save_dataset(data, args.out)
    print(f"wrote {len(data)} shifted instances to {args.out}", file=sys.stderr)


def _cmd_train(args) -> None:
    if args.verbose:
        logging.basicConfig(level=logging.INFO, stream=sys.stderr)
    cfg = TrainConfig(theta=args.theta, tau=args.tau, alpha=args.alpha, beta=args.beta, T=args.T,
                      T_eval=args.T_eval, batch_size=args.batch_size, epochs=args.epochs,
                      lr_max=args.lr_max, lr_min=args.lr_min, pair_cap=args.pair_cap, seed=args.seed,
                      mode=args.mode, embed_dim=args.embed_dim, kl_normalized=args.kl_normalized)
    ckpt, trace = train(io.load_dataset(args.data), cfg, progress=args.verbose)
    io.save_checkpoint(ckpt, args.out)
    io.write_trace_csv(trace, args.loss_csv or f"{args.out}.loss.csv")
    print(f"final epoch total loss {trace[-1]['total']:.6f}", file=sys.stderr)


def _refset(ckpt, ref_path, seed):
    if ckpt.config.mode == "regression":
        return None
    if not ref_path:
        raise ValueError("--ref-data is required for order-based checkpoints")
    return reference_set_for(ckpt, io.load_dataset(ref_path), seed)


def _cmd_eval(args) -> None:
    ckpt = io.load_checkpoint(args.checkpoint)
    data = io.load_dataset(args.data)
    report = evaluate(ckpt, data, _refset(ckpt, args.ref_data, args.seed), args.target, args.seed)
    _emit(report.to_dict())
    print("  ".join(f"{k}={v:.4f}" for k, v in report.to_dict().items()), file=sys.stderr)


def _cmd_estimate(args) -> None:
    ckpt = io.load_checkpoint(args.checkpoint)
    matches = [inst for inst in io.load_dataset(args.data) if inst.id == args.id]
    if not matches:
        raise ValueError(f"no instance with id {args.id}")
    score = predict_scores(ckpt, matches[:1], _refset(ckpt, args.ref_data, args.seed), args.seed)[0]
    _emit({"id": args.id, "score": float(score)})


def _cmd_pair_audit(args) -> None:
    data = io.load_dataset(args.data)
    y = scores_of(data)
    rng = np.random.default_rng(args.seed)
    perm = rng.permutation(len(y))
    counts = {r.name.lower(): 0 for r in OrderRelation}
    n_pairs = batches = max_degree = 0
    degrees = []
    for start in range(0, len(y), args.batch_size):
        b = perm[start:start + args.batch_size]
        if len(b) < 2:
            continue
        pairs, relations = select_balanced_pairs(y[b], args.pair_cap, args.theta, rng)
        for rel in relations:
            counts[rel.name.lower()] += 1
        flags = pair_flags(pairs, len(b))
        degrees.extend(len(f) for f in flags)
        max_degree = max(max_degree, max(len(f) for f in flags))
        n_pairs += len(pairs)
        batches += 1
    stats = {
        "batches": batches,
        "pairs": n_pairs,
        "relation_counts": counts,
        "approx_fraction": counts["approx"] / n_pairs if n_pairs else 0.0,
        "mean_pairs_per_instance": float(np.mean(degrees)) if degrees else 0.0,
        "max_pairs_per_instance": max_degree,
    }
    _emit(stats)


_COMMANDS = {
    "gen": _cmd_gen,
    "shift": _cmd_shift,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "estimate": _cmd_estimate,
    "pair-audit": _cmd_pair_audit,
}


def run_cli(argv: Sequence[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        _COMMANDS[args.command](args)
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"uol {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


def main() -> None:
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
