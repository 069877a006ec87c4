"""PNG reading/writing and crop/resize preprocessing (Pillow-backed)."""

from __future__ import annotations

import os
import tempfile
from pathlib import Path

import numpy as np
from PIL import Image

from .core_types import RgbImage

RESAMPLERS = {"nearest": Image.Resampling.NEAREST, "bilinear": Image.Resampling.BILINEAR}


def load_rgb(path) -> RgbImage:
    with Image.open(path) as im:
        return RgbImage(np.asarray(im.convert("RGB")))


def _atomic_save(im: Image.Image, path) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".png")
    os.close(fd)
    try:
        im.save(tmp, format="PNG")
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


def save_rgb(img: RgbImage, path) -> None:
    _atomic_save(Image.fromarray(np.ascontiguousarray(img.pixels), mode="RGB"), path)


def load_depth(path, scale: float = 1e-3) -> np.ndarray:
    """16-bit single-channel PNG in millimetres -> (H, W) float array in metres."""
    with Image.open(path) as im:
        raw = np.asarray(im)
    if raw.ndim != 2:
        raise ValueError(f"{path}: depth image must be single-channel")
    return raw.astype(np.float64) * scale


def save_depth(depth_m: np.ndarray, path) -> None:
    mm = np.rint(np.asarray(depth_m) * 1000.0)
    if mm.min() < 0 or mm.max() > 65535:
        raise ValueError("depth out of 16-bit millimetre range")
    _atomic_save(Image.fromarray(mm.astype(np.uint16)), path)


def crop_resize(img: RgbImage, crop: int = 300, size: int = 256, left: int | None = None,
                top: int | None = None, method: str = "bilinear") -> RgbImage:
    """Crop a ``crop`` x ``crop`` window (centred by default) and resize to ``size``."""
    if method not in RESAMPLERS:
        raise ValueError(f"unknown resize method {method!r}")
    crop = min(crop, img.width, img.height)
    if left is None:
        left = (img.width - crop) // 2
    if top is None:
        top = (img.height - crop) // 2
    if left < 0 or top < 0 or left + crop > img.width or top + crop > img.height:
        raise ValueError("crop window falls outside the image")
    window = img.pixels[top:top + crop, left:left + crop]
    im = Image.fromarray(np.ascontiguousarray(window), mode="RGB")
    return RgbImage(np.asarray(im.resize((size, size), RESAMPLERS[method])))
