"""Command-line surface.

Subcommands: synth, train, infer, eval, ablate, gradcheck, shapes.  Report
paths write matplotlib figures next to the CSV/JSON outputs.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from .config import (
    DECODER_VARIANTS,
    ModelConfig,
    TrainConfig,
    paper_profile,
    toy_profile,
    toy_train_config,
)
from .errors import TrainingDiverged, VideosalError
from .model import SaliencyModel
from .optim import adam_init


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=0, help="run seed")
    p.add_argument("--dtype", choices=("f32", "f64"), default="f32", help="element type")
    p.add_argument("--profile", choices=("toy", "paper"), default="toy",
                   help="structural profile (toy fits on a desk)")
    p.add_argument("--config", type=Path, default=None,
                   help="flat JSON config overriding the profile defaults")
    p.add_argument("--variant", choices=DECODER_VARIANTS, default=None, help="decoder variant")


def _resolve_configs(args) -> tuple[ModelConfig, TrainConfig]:
    from .io import load_run_config

    if args.config is not None:
        mdl, trn = load_run_config(args.config)
    elif args.profile == "paper":
        mdl = paper_profile()
        trn = TrainConfig(learning_rate=1e-5, clip_len=32)
    else:
        mdl = toy_profile()
        trn = toy_train_config()
    if args.variant is not None:
        mdl = dataclasses.replace(mdl, variant=args.variant)
    trn_over = {"seed": args.seed, "dtype": args.dtype}
    for flag, name in (("iters", "max_iterations"), ("lr", "learning_rate"),
                       ("val_every", "val_every"), ("patience", "patience")):
        value = getattr(args, flag, None)
        if value is not None:
            trn_over[name] = value
    trn = dataclasses.replace(trn, **trn_over)
    mdl.validate()
    trn.validate()
    return mdl, trn


def cmd_synth(args) -> int:
    from .synth import SyntheticSpec, synth_generate

    spec = SyntheticSpec(videos=args.videos, frames=args.frames, height=args.height,
                         width=args.width, blobs=args.blobs, blob_sigma=args.blob_sigma,
                         step_sigma=args.step_sigma,
                         fixations_per_frame=args.fixations, seed=args.seed)
    names = synth_generate(spec, args.out)
    print(f"wrote {len(names)} videos x {spec.frames} frames "
          f"({spec.height}x{spec.width}) to {args.out}")
    return 0


def cmd_train(args) -> int:
    from . import io
    from .figures import save_loss_curves
    from .pipeline import train

    mdl_cfg, tcfg = _resolve_configs(args)
    dataset = io.load_dataset(args.data)
    val = io.load_dataset(args.val) if args.val else None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    if args.resume:
        ckpt = io.load_checkpoint(args.resume)
        model = SaliencyModel(ckpt.config, dtype=tcfg.dtype, seed=tcfg.seed)
        state = io.apply_checkpoint(model, ckpt)
        if state is None:
            raise VideosalError(f"{args.resume} has no optimizer state; cannot resume")
        start = int(ckpt.metadata.get("iteration", 0))
        print(f"resuming from {args.resume} at iteration {start}")
    else:
        tcfg = dataclasses.replace(tcfg, clip_len=mdl_cfg.frames)
        model = SaliencyModel(mdl_cfg, dtype=tcfg.dtype, seed=tcfg.seed)
        state = adam_init(model.params, lr=tcfg.learning_rate)
        start = 0
    tcfg = dataclasses.replace(tcfg, clip_len=model.config.frames)

    rows: list[dict] = []
    try:
        result = train(model, dataset, tcfg, val_dataset=val, adam_state=state,
                       start_iteration=start, on_row=rows.append)
    except TrainingDiverged as e:
        io.write_train_log_csv(rows, out / "train_log.csv")
        (out / "diverged.json").write_text(json.dumps(e.snapshot, indent=2))
        raise
    io.write_train_log_csv(rows, out / "train_log.csv")
    save_loss_curves(rows, out / "loss_curve.png")
    io.save_checkpoint(out / "checkpoint_last.ckpt", model.config, model.params, adam=state,
                       metadata={"iteration": result.final_iteration,
                                 "best_val_loss": result.best_val,
                                 "best_iteration": result.best_iteration})
    io.save_checkpoint(out / "checkpoint_best.ckpt", model.config, result.best_arrays,
                       metadata={"iteration": result.best_iteration,
                                 "best_val_loss": result.best_val,
                                 "best_iteration": result.best_iteration})
    print(f"trained to iteration {result.final_iteration} "
          f"(best val {result.best_val:.6f} at {result.best_iteration}"
          f"{', stopped early' if result.stopped_early else ''})")
    print(f"wrote train_log.csv, loss_curve.png, checkpoint_best.ckpt, "
          f"checkpoint_last.ckpt to {out}")
    return 0


def _load_model_from_checkpoint(path, dtype: str) -> SaliencyModel:
    from . import io

    ckpt = io.load_checkpoint(path)
    model = SaliencyModel(ckpt.config, dtype=dtype, seed=0)
    io.apply_checkpoint(model, ckpt)
    return model


def cmd_infer(args) -> int:
    from . import io
    from .figures import save_saliency_panel
    from .pipeline import infer_video

    model = _load_model_from_checkpoint(args.ckpt, args.dtype)
    dataset = io.load_dataset(args.data)
    if args.video:
        dataset = [v for v in dataset if v.name in set(args.video)]
        if not dataset:
            raise VideosalError(f"no such videos in {args.data}: {args.video}")
    out = Path(args.out)
    for video in dataset:
        vdir = out / video.name
        vdir.mkdir(parents=True, exist_ok=True)
        maps = infer_video(model, video.frames)
        for t, m in enumerate(maps):
            io.save_bundle(vdir / f"map_{t:04d}.tbnd", m, name=f"{video.name}/map/{t}")
            if args.pgm:
                io.export_pgm(m, vdir / f"map_{t:04d}.pgm")
        save_saliency_panel(video.frames, maps, vdir / "preview.png")
        print(f"{video.name}: {len(maps)} maps -> {vdir}")
    return 0


def cmd_eval(args) -> int:
    from . import io
    from .figures import save_metric_curves
    from .pipeline import evaluate_model, pooled_aggregate

    model = _load_model_from_checkpoint(args.ckpt, args.dtype)
    dataset = io.load_dataset(args.data)
    reports = evaluate_model(model, dataset, seed=args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    io.write_metrics_csv(reports, out / "metrics.csv")
    io.write_metrics_json(reports, out / "metrics.json")
    save_metric_curves(reports, out / "metrics.png")
    agg = pooled_aggregate(reports)
    print("aggregate over all scored frames:")
    for metric, value in agg.items():
        print(f"  {metric:6s} {value:.4f}")
    print(f"wrote metrics.csv, metrics.json, metrics.png to {out}")
    return 0


def cmd_ablate(args) -> int:
    from . import io
    from .figures import save_ablation_chart
    from .pipeline import run_ablation

    mdl_cfg, tcfg = _resolve_configs(args)
    tcfg = dataclasses.replace(tcfg, clip_len=mdl_cfg.frames)
    dataset = io.load_dataset(args.data)
    val = io.load_dataset(args.val) if args.val else None
    variants = [v.strip() for v in args.variants.split(",") if v.strip()]
    rows = run_ablation(mdl_cfg, variants, dataset, tcfg, val_dataset=val,
                        eval_seed=args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    io.write_ablation_csv(rows, out / "ablation.csv")
    save_ablation_chart(rows, out / "ablation.png")
    print(f"{'variant':14s} {'params':>10s} {'cc':>8s} {'nss':>8s} {'sim':>8s} {'auc_j':>8s}")
    for row in rows:
        print(f"{row['variant']:14s} {row['params']:>10d} {row['cc']:>8.4f} "
              f"{row['nss']:>8.4f} {row['sim']:>8.4f} {row['auc_j']:>8.4f}")
    print(f"wrote ablation.csv, ablation.png to {out}")
    return 0


def cmd_gradcheck(args) -> int:
    from .fdcheck import run_suites

    results = run_suites(dtype=args.dtype, seeds=args.seeds, base_seed=args.seed)
    failed = 0
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        print(f"{status} {r.name:20s} max rel err {r.max_error:.3e} (tol {r.tolerance:.0e})")
        failed += not r.passed
    if failed:
        print(f"{failed} suite(s) failed")
        return 1
    print(f"all {len(results)} gradient suites passed")
    return 0


def cmd_shapes(args) -> int:
    from .decoder import build_schedule, shape_trace

    mdl_cfg, _ = _resolve_configs(args)
    cfg = mdl_cfg
    print(f"profile: T={cfg.frames} H={cfg.height} W={cfg.width} C={cfg.base_dim} "
          f"variant={cfg.variant}")
    grid = cfg.token_grid(1)
    print(f"tokens: {grid[0]} x {grid[1]} x {grid[2]} (patch 2x4x4, raw dim 96)")
    for i, shape in enumerate(cfg.stage_shapes(), start=1):
        print(f"stage {i}: {shape[0]} x {shape[1]} x {shape[2]} x {shape[3]}")
    fused = cfg.fused_shape()
    print(f"fused:   {fused[0]} x {fused[1]} x {fused[2]} x {fused[3]}")
    schedule = build_schedule(cfg)
    print(f"decoder ({schedule.variant}, {len(schedule.layers)} layers):")
    for desc, shape in shape_trace(schedule, fused):
        print(f"  {desc:28s} -> {shape[0]} x {shape[1]} x {shape[2]} x {shape[3]}")
    out = shape_trace(schedule, fused)[-1][1]
    print(f"output: 1 x {out[0]} x {out[2]} x {out[3]}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="videosal",
        description="Video saliency prediction: synthesize data, train, infer, evaluate.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic moving-blob dataset")
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--videos", type=int, default=8)
    p.add_argument("--frames", type=int, default=12)
    p.add_argument("--height", type=int, default=32)
    p.add_argument("--width", type=int, default=64)
    p.add_argument("--blobs", type=int, default=2)
    p.add_argument("--blob-sigma", type=float, default=4.0)
    p.add_argument("--step-sigma", type=float, default=2.5)
    p.add_argument("--fixations", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a model on a dataset directory")
    _add_common(p)
    p.add_argument("--data", required=True, type=Path)
    p.add_argument("--val", type=Path, default=None, help="validation dataset dir")
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--iters", type=int, default=None, help="max iterations")
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--val-every", type=int, default=None, dest="val_every")
    p.add_argument("--patience", type=int, default=None)
    p.add_argument("--resume", type=Path, default=None, help="checkpoint_last.ckpt to resume")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("infer", help="sliding-window inference over a dataset")
    p.add_argument("--ckpt", required=True, type=Path)
    p.add_argument("--data", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--video", action="append", default=None, help="restrict to video name")
    p.add_argument("--pgm", action="store_true", help="also export 8-bit PGM maps")
    p.add_argument("--dtype", choices=("f32", "f64"), default="f32")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("eval", help="evaluate a checkpoint (all five metrics)")
    p.add_argument("--ckpt", required=True, type=Path)
    p.add_argument("--data", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dtype", choices=("f32", "f64"), default="f32")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="train/evaluate decoder variants under one budget")
    _add_common(p)
    p.add_argument("--data", required=True, type=Path)
    p.add_argument("--val", type=Path, default=None)
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--variants", default=",".join(DECODER_VARIANTS))
    p.add_argument("--iters", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--val-every", type=int, default=None, dest="val_every")
    p.add_argument("--patience", type=int, default=None)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("gradcheck", help="finite-difference checks for every op suite")
    p.add_argument("--dtype", choices=("f32", "f64"), default="f64")
    p.add_argument("--seeds", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("shapes", help="dry-run shape walk: pyramid, fusion, decoder trace")
    _add_common(p)
    p.set_defaults(func=cmd_shapes)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return args.func(args)
    except VideosalError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
