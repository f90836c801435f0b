"""Command-line entry point.

Exit codes: 0 ok, 2 bad arguments, 3 data/file errors, 4 numeric failures.
Errors are emitted as one JSON object on stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np
import torch

from .backbones import apply_degree
from .data import DataError, load_image, load_paired_dir, save_image, save_pairs, synth_pairs
from .masks import (
    CircleSpec,
    MaskError,
    derive_band,
    load_mask,
    partition,
    rasterize_circle,
    save_mask,
)
from .trainer import TrainConfig, TrainingDiverged, evaluate, load_checkpoint, train

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


def _parse_size(text: str) -> tuple[int, int]:
    if "x" in text:
        h, w = text.lower().split("x", 1)
        return int(h), int(w)
    edge = int(text)
    return edge, edge


def _cmd_gen_data(args) -> int:
    height, width = _parse_size(args.size)
    data = synth_pairs(args.n, height, width, args.seed)
    save_pairs(data, args.out)
    print(json.dumps({"written": len(data), "out": str(args.out)}))
    return EXIT_OK


def _cmd_train(args) -> int:
    if args.config:
        config = TrainConfig.from_json(args.config)
        if args.desk:
            config.synth_n = 64
            config.synth_height = 64
            config.synth_width = 64
            config.max_steps = 300
            config.long_edge = None
    elif args.desk:
        config = TrainConfig.desk_profile()
    else:
        raise SystemExit2("train requires --config or --desk")
    log_stream = open(args.log, "w") if args.log else None
    try:
        result = train(config, checkpoint_path=args.out, log_stream=log_stream)
    finally:
        if log_stream:
            log_stream.close()
    final = result.history.steps[-1] if result.history.steps else {}
    print(
        json.dumps(
            {
                "checkpoint": str(args.out),
                "steps": result.steps_run,
                "epochs": result.epochs_run,
                "final_total": final.get("total"),
            }
        )
    )
    return EXIT_OK


def _cmd_eval(args) -> int:
    ckpt = load_checkpoint(args.ckpt)
    data = load_paired_dir(args.data)
    reports, summary = evaluate(ckpt.model, data, seed=args.seed)
    if args.out:
        with open(args.out, "w") as f:
            for report in reports:
                f.write(report.to_json() + "\n")
    print(json.dumps(summary))
    return EXIT_OK


def _parse_circle(text: str) -> CircleSpec:
    parts = [float(p) for p in text.split(",")]
    if len(parts) != 4:
        raise ValueError("--circle expects cx,cy,r1,r2")
    return CircleSpec(center_x=parts[0], center_y=parts[1], r1=parts[2], r2=parts[3])


def _cmd_enhance(args) -> int:
    if (args.mask is None) == (args.circle is None):
        raise SystemExit2("exactly one of --mask or --circle is required")
    ckpt = load_checkpoint(args.ckpt)
    image = load_image(args.image)
    _, h, w = image.shape
    if args.circle:
        mask = rasterize_circle(_parse_circle(args.circle), h, w)
    else:
        mask = load_mask(args.mask)
        if (mask.height, mask.width) != (h, w):
            raise DataError(
                f"mask is {mask.height}x{mask.width} but the image is {h}x{w}"
            )
    with torch.no_grad():
        output = ckpt.model(
            torch.from_numpy(image[None]),
            torch.from_numpy(mask.data[None].astype(np.float32)),
        )
        if args.degree != 1.0:
            output = apply_degree(ckpt.model, output, args.degree)
    save_image(output.enhanced[0].numpy(), args.out)
    part = partition(mask)
    print(json.dumps({"out": str(args.out), "r_a": part.r_a, "r_b": part.r_b}))
    return EXIT_OK


def _cmd_mask(args) -> int:
    if (args.dilate is None) == (args.erode is None):
        raise SystemExit2("exactly one of --dilate or --erode is required")
    from PIL import Image

    with Image.open(args.src) as img:
        area = (np.asarray(img.convert("L")) >= 128).astype(np.uint8)
    if args.dilate is not None:
        mask = derive_band(area, "dilate-out", args.dilate)
    else:
        mask = derive_band(area, "erode-in", args.erode)
    save_mask(mask, args.out)
    part = partition(mask)
    print(json.dumps({"out": str(args.out), "r_a": part.r_a, "r_b": part.r_b}))
    return EXIT_OK


def _cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    app = create_app(args.ckpt)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return EXIT_OK


class SystemExit2(Exception):
    """Usage error surfaced with exit code 2."""


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ranlen",
        description="Local low-light image enhancement: train, evaluate, enhance, serve.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic paired dataset")
    p.add_argument("--n", type=int, required=True, help="number of image pairs")
    p.add_argument("--size", default="64", help="image size, EDGE or HxW")
    p.add_argument("--seed", type=int, default=0, help="generator seed")
    p.add_argument("--out", required=True, help="output dataset directory")
    p.set_defaults(func=_cmd_gen_data)

    p = sub.add_parser("train", help="train a model from a JSON config")
    p.add_argument("--config", help="path to a TrainConfig JSON file")
    p.add_argument("--desk", action="store_true", help="desk-scale synthetic profile")
    p.add_argument("--out", default="model.ckpt", help="checkpoint output path")
    p.add_argument("--log", help="JSON-lines training log path")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a paired dataset")
    p.add_argument("--ckpt", required=True, help="checkpoint path")
    p.add_argument("--data", required=True, help="dataset root with low/ and high/")
    p.add_argument("--seed", type=int, default=0, help="mask sampling seed")
    p.add_argument("--out", help="per-image JSON-lines report path")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("enhance", help="enhance a single image")
    p.add_argument("--ckpt", required=True, help="checkpoint path")
    p.add_argument("--image", required=True, help="input image path")
    p.add_argument("--mask", help="two-channel mask PNG path")
    p.add_argument("--circle", help="circle mask spec: cx,cy,r1,r2")
    p.add_argument("--degree", type=float, default=1.0, help="degree-of-light coefficient")
    p.add_argument("--out", required=True, help="enhanced image output path")
    p.set_defaults(func=_cmd_enhance)

    p = sub.add_parser("mask", help="derive a two-channel mask from a plain mask image")
    p.add_argument("--from", dest="src", required=True, help="single-channel mask image")
    p.add_argument("--dilate", type=int, help="dilate outward by this radius")
    p.add_argument("--erode", type=int, help="erode inward by this radius")
    p.add_argument("--out", required=True, help="output RG mask PNG path")
    p.set_defaults(func=_cmd_mask)

    p = sub.add_parser("serve", help="start the HTTP enhancement service")
    p.add_argument("--ckpt", required=True, help="checkpoint file or directory")
    p.add_argument("--port", type=int, default=8000, help="listen port")
    p.add_argument("--host", default="127.0.0.1", help="bind address")
    p.set_defaults(func=_cmd_serve)

    return parser


def _emit_error(kind: str, message: str) -> None:
    sys.stderr.write(json.dumps({"error": kind, "message": message}) + "\n")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SystemExit2 as e:
        _emit_error("usage", str(e))
        return EXIT_USAGE
    except ValueError as e:
        _emit_error("usage", str(e))
        return EXIT_USAGE
    except (DataError, MaskError, FileNotFoundError) as e:
        _emit_error("data", str(e))
        return EXIT_DATA
    except TrainingDiverged as e:
        _emit_error("numeric", str(e))
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
