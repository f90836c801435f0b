"""HTTP inference service: mask-conditioned enhancement with degree control.

Transport is JSON with base64-encoded PNGs so browser clients stay trivial.
Checkpoints load once at startup and are read-only afterwards; requests are
stateless, so identical requests produce identical responses.
"""

from __future__ import annotations

import base64
import binascii
import io
import logging
import time
from contextlib import asynccontextmanager
from pathlib import Path

import numpy as np
import torch
from fastapi import FastAPI, HTTPException, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from PIL import Image
from pydantic import BaseModel

from .backbones import apply_degree
from .masks import CircleSpec, MaskError, RegionMask, derive_band, partition
from .trainer import Checkpoint, load_checkpoint

logger = logging.getLogger("ranlen.service")

MAX_PAYLOAD_BYTES = 16 * 1024 * 1024


class CircleBody(BaseModel):
    center_x: float
    center_y: float
    r1: float
    r2: float


class EnhanceRequest(BaseModel):
    image: str
    mask: str | None = None
    circle: CircleBody | None = None
    degree: float = 1.0
    model_id: str | None = None


class DeriveRequest(BaseModel):
    mask_a: str
    mode: str
    radius_px: int


def _decode_b64(data: str, what: str) -> bytes:
    if len(data) > MAX_PAYLOAD_BYTES * 4 // 3:
        raise HTTPException(413, f"{what} exceeds the {MAX_PAYLOAD_BYTES} byte payload cap")
    try:
        return base64.b64decode(data, validate=True)
    except (binascii.Error, ValueError):
        raise HTTPException(400, f"{what} is not valid base64")


def _decode_image(data: str) -> np.ndarray:
    raw = _decode_b64(data, "image")
    try:
        with Image.open(io.BytesIO(raw)) as img:
            arr = np.asarray(img.convert("RGB"), dtype=np.float32) / 255.0
    except Exception:
        raise HTTPException(400, "image is not a decodable PNG/JPEG")
    return np.transpose(arr, (2, 0, 1))


def _decode_mask(data: str) -> RegionMask:
    raw = _decode_b64(data, "mask")
    try:
        with Image.open(io.BytesIO(raw)) as img:
            if img.mode != "RGB":
                raise MaskError(f"mask PNG must be RGB, got mode {img.mode!r}")
            arr = np.asarray(img)
    except MaskError:
        raise
    except Exception:
        raise HTTPException(400, "mask is not a decodable PNG")
    ch0 = (arr[..., 0] >= 128).astype(np.uint8)
    ch1 = (arr[..., 1] >= 128).astype(np.uint8)
    try:
        return RegionMask(np.stack([ch0, ch1]))
    except MaskError as e:
        raise HTTPException(400, str(e))


def _encode_png(image_hwc_u8: np.ndarray) -> str:
    buf = io.BytesIO()
    Image.fromarray(image_hwc_u8).save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode()


def _encode_image(image_chw: np.ndarray) -> str:
    arr = np.clip(image_chw, 0.0, 1.0)
    u8 = np.round(np.transpose(arr, (1, 2, 0)) * 255.0).astype(np.uint8)
    return _encode_png(u8)


def _encode_mask(mask: RegionMask) -> str:
    rgb = np.zeros((mask.height, mask.width, 3), dtype=np.uint8)
    rgb[..., 0] = mask.data[0] * 255
    rgb[..., 1] = mask.data[1] * 255
    return _encode_png(rgb)


def _discover_checkpoints(path: Path) -> dict[str, Checkpoint]:
    files = sorted(path.glob("*.ckpt")) if path.is_dir() else [path]
    models = {}
    for f in files:
        try:
            models[f.stem] = load_checkpoint(f)
        except Exception as e:
            logger.warning("skipping unreadable checkpoint %s: %s", f, e)
    return models


def create_app(checkpoint_path) -> FastAPI:
    """Build the service around a checkpoint file or a directory of them."""
    checkpoint_path = Path(checkpoint_path)

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        app.state.models = _discover_checkpoints(checkpoint_path)
        app.state.default_id = next(iter(app.state.models), None)
        app.state.ready = True
        yield

    app = FastAPI(title="ranlen", lifespan=lifespan)
    app.state.ready = False
    app.state.models = {}
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )

    @app.get("/healthz")
    def healthz():
        if not app.state.ready:
            return JSONResponse({"status": "loading"}, status_code=503)
        return {"status": "ok", "models": len(app.state.models)}

    @app.get("/v1/models")
    def list_models():
        out = []
        for model_id, ckpt in app.state.models.items():
            out.append(
                {
                    "model_id": model_id,
                    "backbone": ckpt.config.model.backbone,
                    "conditioning": ckpt.config.model.conditioning,
                    "trained_epochs": ckpt.epoch,
                }
            )
        return out

    def _resolve_model(model_id: str | None) -> Checkpoint:
        mid = model_id or app.state.default_id
        if mid is None or mid not in app.state.models:
            raise HTTPException(404, f"unknown model_id {mid!r}")
        return app.state.models[mid]

    @app.post("/v1/enhance")
    def enhance(req: EnhanceRequest, request: Request):
        if (req.mask is None) == (req.circle is None):
            raise HTTPException(400, "exactly one of mask or circle must be present")
        if req.degree <= 0:
            raise HTTPException(422, "degree must be > 0")
        ckpt = _resolve_model(req.model_id)
        image = _decode_image(req.image)
        _, h, w = image.shape
        if req.circle is not None:
            c = req.circle
            if not (0 <= c.center_x <= w - 1 and 0 <= c.center_y <= h - 1):
                raise HTTPException(400, "circle center lies outside the image")
            try:
                spec = CircleSpec(c.center_x, c.center_y, c.r1, c.r2)
            except ValueError as e:
                raise HTTPException(400, str(e))
            from .masks import rasterize_circle

            mask = rasterize_circle(spec, h, w)
        else:
            mask = _decode_mask(req.mask)
            if (mask.height, mask.width) != (h, w):
                raise HTTPException(
                    400,
                    f"mask is {mask.height}x{mask.width} but the image is {h}x{w}",
                )
        start = time.perf_counter()
        with torch.no_grad():
            output = ckpt.model(
                torch.from_numpy(image[None]),
                torch.from_numpy(mask.data[None].astype(np.float32)),
            )
            if req.degree != 1.0:
                output = apply_degree(ckpt.model, output, req.degree)
        elapsed_ms = (time.perf_counter() - start) * 1000.0
        part = partition(mask)
        return {
            "image": _encode_image(output.enhanced[0].numpy()),
            "r_a": part.r_a,
            "r_b": part.r_b,
            "timing_ms": elapsed_ms,
        }

    @app.post("/v1/mask/derive")
    def derive(req: DeriveRequest):
        raw = _decode_b64(req.mask_a, "mask_a")
        try:
            with Image.open(io.BytesIO(raw)) as img:
                area = (np.asarray(img.convert("L")) >= 128).astype(np.uint8)
        except Exception:
            raise HTTPException(400, "mask_a is not a decodable image")
        if req.mode not in ("dilate-out", "erode-in"):
            raise HTTPException(400, f"mode must be dilate-out or erode-in, got {req.mode!r}")
        if req.radius_px < 1:
            raise HTTPException(400, "radius_px must be >= 1")
        import warnings

        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            mask = derive_band(area, req.mode, req.radius_px)
        if req.mode == "erode-in" and not mask.data[0].any():
            raise HTTPException(
                422,
                f"erosion with radius {req.radius_px} leaves no enhancement area; "
                "reduce the band radius",
            )
        part = partition(mask)
        return {"mask": _encode_mask(mask), "r_a": part.r_a, "r_b": part.r_b}

    return app
