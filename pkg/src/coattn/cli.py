"""Command-line surface: gen-data, train, infer, eval, gradcheck, ablate.

Exit codes: 0 success, 2 configuration problem, 3 training divergence,
4 unreadable checkpoint, 5 prediction/ground-truth mismatch. Every effective
setting is printed at startup so runs are reproducible from their logs.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .data import DatasetSpec, generate, read_dataset, write_dataset
from .errors import (ConfigError, ContractError, DivergenceError, ParseError,
                     SamplingError)
from .evaluation import ConfusionAccumulator
from .gradcheck import TOLERANCE, run_suite
from .inference import (InferConfig, export_localization_maps, infer_multi,
                        infer_single, to_pseudo_mask)
from .model import load_params
from .pnm import read_pgm, write_pgm
from .training import TrainConfig, ablation_suite, parse_config, train

EXIT_CONFIG = 2
EXIT_DIVERGENCE = 3
EXIT_CHECKPOINT = 4
EXIT_MISMATCH = 5


def _announce(command: str, settings: dict) -> None:
    for key in sorted(settings):
        print(f"[{command}] {key} = {settings[key]}", file=sys.stderr)


def cmd_gen_data(args) -> int:
    try:
        spec = DatasetSpec.from_json(args.spec) if args.spec else DatasetSpec()
        if args.seed is not None:
            spec.seed = args.seed
        spec.validate()
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    _announce("gen-data", {**spec.__dict__, "out": args.out})
    splits = generate(spec)
    for split, samples in splits.items():
        write_dataset(samples, os.path.join(args.out, split),
                      spec.class_names())
        print(f"wrote {len(samples)} samples to {args.out}/{split}",
              file=sys.stderr)
    return 0


def _arm_from_flag(loss: str) -> str:
    return {"basic": "basic", "basic+coatt": "basic_coatt",
            "full": "full"}[loss]


def cmd_train(args) -> int:
    try:
        cfg = parse_config(args.config) if args.config else TrainConfig()
        cfg = cfg.with_arm(_arm_from_flag(args.loss))
        cfg.validate()
    except (ConfigError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    _announce("train", {**cfg.__dict__, "data": args.data, "out": args.out,
                        "resume": args.resume})
    try:
        samples, _ = read_dataset(args.data)
    except (ParseError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        train(samples, cfg, out_dir=args.out, resume_from=args.resume)
    except DivergenceError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except (ParseError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CHECKPOINT
    return 0


def cmd_infer(args) -> int:
    try:
        cfg = InferConfig(strategy=args.strategy, related_count=args.R,
                          theta=args.theta, seed=args.seed)
        cfg.validate()
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    _announce("infer", {**cfg.__dict__, "data": args.data, "ckpt": args.ckpt,
                        "out": args.out})
    try:
        params, _ = load_params(args.ckpt)
    except (ParseError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CHECKPOINT
    try:
        samples, _ = read_dataset(args.data)
    except (ParseError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG

    maps_dir = os.path.join(args.out, "maps")
    masks_dir = os.path.join(args.out, "masks")
    os.makedirs(maps_dir, exist_ok=True)
    os.makedirs(masks_dir, exist_ok=True)
    for s in samples:
        if cfg.strategy == "multi":
            loc = infer_multi(s, samples, params, cfg)
        else:
            loc = infer_single(s, params)
        export_localization_maps(loc, s.labels, s.id, maps_dir)
        mask = to_pseudo_mask(loc, s.labels, cfg.theta, s.pixels.shape[1:])
        write_pgm(os.path.join(masks_dir, f"{s.id}.pgm"), mask)
    print(f"inferred {len(samples)} images", file=sys.stderr)
    return 0


def cmd_eval(args) -> int:
    try:
        with open(args.classes) as fh:
            class_names = {int(k): v for k, v in json.load(fh).items()}
    except (OSError, json.JSONDecodeError, ValueError) as e:
        print(f"error: cannot read classes file: {e}", file=sys.stderr)
        return EXIT_CONFIG
    _announce("eval", {"pred": args.pred, "gt": args.gt,
                       "classes": args.classes})
    pred_ids = {os.path.splitext(f)[0] for f in os.listdir(args.pred)
                if f.endswith(".pgm")}
    gt_ids = {os.path.splitext(f)[0] for f in os.listdir(args.gt)
              if f.endswith(".pgm")}
    if pred_ids != gt_ids:
        only_pred = sorted(pred_ids - gt_ids)[:5]
        only_gt = sorted(gt_ids - pred_ids)[:5]
        print(f"error: id mismatch between prediction and ground truth "
              f"(pred-only {only_pred}, gt-only {only_gt})", file=sys.stderr)
        return EXIT_MISMATCH

    acc = ConfusionAccumulator(max(class_names))
    for sample_id in sorted(pred_ids):
        pred = read_pgm(os.path.join(args.pred, f"{sample_id}.pgm"))
        gt = read_pgm(os.path.join(args.gt, f"{sample_id}.pgm"))
        acc.add(pred, gt)
    per_class = acc.per_class_iou()
    report = {
        "num_images": len(pred_ids),
        "per_class_iou": {
            ("background" if k == 0 else class_names.get(k, str(k))):
                round(v, 6) for k, v in per_class.items()},
        "mean_iou": round(acc.mean_iou(), 6),
    }
    print(json.dumps(report, indent=2, sort_keys=True))
    return 0


def cmd_gradcheck(args) -> int:
    results = run_suite(seed=args.seed)
    ok = True
    for r in results:
        status = "pass" if r.passed else "fail"
        print(f"gradcheck op={r.name} max_rel_err={r.max_rel_err:.3e} "
              f"tol={TOLERANCE:.0e} status={status}")
        ok = ok and r.passed
    return 0 if ok else 1


def cmd_ablate(args) -> int:
    try:
        cfg = parse_config(args.config) if args.config else TrainConfig()
        cfg.validate()
    except (ConfigError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    _announce("ablate", {**cfg.__dict__, "data": args.data, "out": args.out})
    try:
        samples, _ = read_dataset(args.data)
    except (ParseError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        ablation_suite(samples, cfg, args.out)
    except DivergenceError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DIVERGENCE
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="coattn",
        description="Pair-attention weakly supervised segmentation pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate the synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--spec", default=None, help="JSON dataset spec")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train the pair classifier")
    p.add_argument("--data", required=True, help="dataset split directory")
    p.add_argument("--config", default=None, help="key = value config file")
    p.add_argument("--out", required=True)
    p.add_argument("--loss", choices=["basic", "basic+coatt", "full"],
                   default="full")
    p.add_argument("--resume", default=None, help="checkpoint to resume from")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("infer", help="produce localization maps and masks")
    p.add_argument("--data", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--strategy", choices=["single", "multi"], default="multi")
    p.add_argument("--R", type=int, default=3)
    p.add_argument("--theta", type=float, default=0.7)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("eval", help="score predicted masks against ground truth")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--classes", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gradcheck", help="finite-difference gradient suite")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("ablate", help="train the three loss-term arms")
    p.add_argument("--data", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ablate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ContractError, SamplingError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
