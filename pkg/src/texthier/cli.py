"""Command-line entry points.

Subcommands:
    synth      generate a synthetic dataset directory
    train      fine-tune the adapters + decoders on a dataset
    eval       run automatic mask generation over a split and report metrics
    amg        segment individual image files, dump JSON (and overlays)
    autolabel  draft pixel-text masks for images that lack them
    serve      start the HTTP annotation service

Exit codes: 0 success, 2 configuration error, 3 data error, 4 internal.
"""

from __future__ import annotations

import argparse
import json
import sys
import traceback
from dataclasses import replace
from pathlib import Path

import cv2
import numpy as np

from .data.autolabel import autolabel_pixel_text
from .data.hiertext import export_dataset, load_dataset
from .data.synthetic import SynthConfig, generate_synthetic, two_paragraph_config
from .errors import (
    ConfigurationError,
    DataError,
    EXIT_INTERNAL,
    EXIT_OK,
    TextHierError,
    exit_code_for,
)
from .evaluation import evaluate_dataset
from .inference import AmgConfig, AmgResult, amg, amg_to_dump
from .model.checkpoint import load_checkpoint, save_checkpoint
from .model.network import build_model
from .profiles import PROFILES
from .training.config import apply_overrides, load_config
from .training.loop import fit

# RGB overlay colors per hierarchy level.
WORD_COLOR = (0, 200, 0)
LINE_COLOR = (40, 110, 255)
PARAGRAPH_COLOR = (255, 160, 30)
OVERLAY_ALPHA = 0.45


def render_overlay(image: np.ndarray, result: AmgResult) -> np.ndarray:
    """Blend paragraph/line fills and word outlines onto an RGB image."""
    out = image.astype(np.float64).copy()

    def blend(mask: np.ndarray, color: tuple[int, int, int]) -> None:
        sel = mask.astype(bool)
        out[sel] = (1 - OVERLAY_ALPHA) * out[sel] + OVERLAY_ALPHA * np.array(color)

    for mask in result.paragraphs:
        blend(mask, PARAGRAPH_COLOR)
    for line in result.lines:
        blend(line.mask, LINE_COLOR)
    rendered = out.clip(0, 255).astype(np.uint8)
    for group in result.words:
        for word in group:
            pts = np.round(word.polygon).astype(np.int32).reshape(-1, 1, 2)
            cv2.polylines(rendered, [pts], True, WORD_COLOR, 1)
    return rendered


def _load_image_rgb(path: str) -> np.ndarray:
    bgr = cv2.imread(path, cv2.IMREAD_COLOR)
    if bgr is None:
        raise DataError(f"cannot read image {path}")
    return cv2.cvtColor(bgr, cv2.COLOR_BGR2RGB)


def _load_model(ckpt: str):
    model, _ = load_checkpoint(ckpt)
    model.eval()
    return model


def _amg_config(args: argparse.Namespace) -> AmgConfig:
    cfg = AmgConfig()
    if getattr(args, "points", None) is not None:
        cfg.points = args.points
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "sliding_window", False):
        cfg.sliding_window = True
    if getattr(args, "window", None) is not None:
        cfg.window = args.window
    if getattr(args, "stride", None) is not None:
        cfg.stride = args.stride
    return cfg


# ---------------------------------------------------------------- commands
def cmd_synth(args: argparse.Namespace) -> int:
    cfg = SynthConfig(image_size=args.size)
    if args.paragraphs is not None:
        lo, hi = args.paragraphs
        if not (1 <= lo <= hi):
            raise ConfigurationError("--paragraphs needs 1 <= LO <= HI")
        cfg = replace(cfg, paragraphs_per_image=(lo, hi))
    if args.two_paragraph:
        cfg = two_paragraph_config(cfg)
    trees = generate_synthetic(cfg, args.count, seed=args.seed)
    ids = [t.image_id for t in trees]
    if args.val_count > 0:
        if args.val_count >= len(ids):
            raise ConfigurationError("--val-count must leave at least one train image")
        splits = {
            "train": ids[: -args.val_count],
            "validation": ids[-args.val_count :],
        }
    else:
        splits = {"train": ids}
    out = export_dataset(trees, args.out, splits=splits)
    print(f"wrote {len(trees)} images to {out}")
    return EXIT_OK


def cmd_train(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    if args.set:
        cfg = apply_overrides(cfg, args.set)
    trees = load_dataset(args.data, split=args.split)
    model = build_model(cfg.profile, seed=cfg.seed)
    ckpt = fit(model, trees, cfg, args.out, resume_from=args.resume)
    print(f"final checkpoint: {ckpt}")
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    model = _load_model(args.ckpt)
    trees = load_dataset(args.data, split=args.split)
    report = evaluate_dataset(model, trees, _amg_config(args))
    text = json.dumps(report, indent=2, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text)
        print(f"wrote metrics to {args.out}")
    else:
        print(text)
    return EXIT_OK


def cmd_amg(args: argparse.Namespace) -> int:
    model = _load_model(args.ckpt)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cfg = _amg_config(args)
    for path in args.images:
        image = _load_image_rgb(path)
        result = amg(model, image, cfg)
        stem = Path(path).stem
        dump = amg_to_dump(result, stem)
        (out_dir / f"{stem}.json").write_text(json.dumps(dump, indent=1))
        if args.render:
            resized = image
            if image.shape[:2] != (result.input_size, result.input_size):
                resized = cv2.resize(
                    image,
                    (result.input_size, result.input_size),
                    interpolation=cv2.INTER_LINEAR,
                )
            overlay = render_overlay(resized, result)
            cv2.imwrite(
                str(out_dir / f"{stem}_overlay.png"),
                cv2.cvtColor(overlay, cv2.COLOR_RGB2BGR),
            )
        n_words = len(result.word_instances())
        print(
            f"{path}: {len(result.lines)} lines, {n_words} words, "
            f"{max(result.layout) + 1 if result.layout else 0} paragraphs"
        )
    return EXIT_OK


def cmd_autolabel(args: argparse.Namespace) -> int:
    model = _load_model(args.ckpt)
    trees = load_dataset(args.data, split=args.split)
    autolabel_pixel_text(
        model,
        trees,
        window=args.window,
        stride=args.stride,
        overwrite=args.overwrite,
    )
    split_ids = {args.split: [t.image_id for t in trees]}
    out = export_dataset(trees, args.out, splits=split_ids)
    drafted = sum(t.pixel_text_status == "unreviewed" for t in trees)
    print(f"wrote {len(trees)} images ({drafted} drafts) to {out}")
    return EXIT_OK


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .service import create_app

    model = _load_model(args.ckpt)
    uvicorn.run(create_app(model), host=args.host, port=args.port)
    return EXIT_OK


def cmd_init(args: argparse.Namespace) -> int:
    if args.profile not in PROFILES:
        raise ConfigurationError(
            f"unknown profile {args.profile!r}; choose from {sorted(PROFILES)}"
        )
    model = build_model(args.profile, encoder=args.encoder, seed=args.seed)
    save_checkpoint(args.out, model, step=0, epoch=0)
    print(f"wrote untrained checkpoint: {args.out}")
    return EXIT_OK


# ------------------------------------------------------------------ parser
def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="texthier",
        description="Hierarchical text segmentation: pixels, words, lines, paragraphs.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, default=16)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--size", type=int, default=256)
    p.add_argument("--paragraphs", type=int, nargs=2, metavar=("LO", "HI"))
    p.add_argument("--two-paragraph", action="store_true")
    p.add_argument("--val-count", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train on a dataset directory")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--split", default="train")
    p.add_argument("--config", default=None)
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    p.add_argument("--resume", default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a split")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", default="train")
    p.add_argument("--out", default=None)
    p.add_argument("--points", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("amg", help="segment image files")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("images", nargs="+")
    p.add_argument("--points", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--sliding-window", action="store_true")
    p.add_argument("--window", type=int, default=None)
    p.add_argument("--stride", type=int, default=None)
    p.add_argument("--render", action="store_true")
    p.set_defaults(func=cmd_amg)

    p = sub.add_parser("autolabel", help="draft pixel-text masks for a dataset")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--split", default="train")
    p.add_argument("--window", type=int, default=512)
    p.add_argument("--stride", type=int, default=384)
    p.add_argument("--overwrite", action="store_true")
    p.set_defaults(func=cmd_autolabel)

    p = sub.add_parser("serve", help="start the HTTP annotation service")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("init", help="write an untrained checkpoint")
    p.add_argument("--out", required=True)
    p.add_argument("--profile", default="desk")
    p.add_argument("--encoder", default=None)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_init)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except TextHierError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exit_code_for(exc)
    except Exception:  # pragma: no cover - defensive
        traceback.print_exc()
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
