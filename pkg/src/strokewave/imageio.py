"""Grayscale image loading, cleanup, resizing and augmentation.

Images are 2D float64 arrays of shape (height, width) with intensities in
[0, 1]. PGM (P5, 8-bit) is parsed and written natively so outputs are
byte-reproducible; PNG and JPEG decode via Pillow. RGB inputs collapse to
BT.601 luma.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

CANONICAL_SIZE = 256

_LUMA = (0.299, 0.587, 0.114)


@dataclass(frozen=True)
class MaskConfig:
    """Border-band annotation mask: zero out bright pixels near the edges."""

    margin: int = 32
    threshold: float = 200.0 / 255.0

    def __post_init__(self):
        if self.margin < 0:
            raise ValueError("mask margin must be >= 0")
        if not 0.0 <= self.threshold <= 1.0:
            raise ValueError("mask threshold must lie in [0, 1]")


@dataclass(frozen=True)
class AugmentConfig:
    max_rotation_deg: float = 10.0
    hflip_prob: float = 0.5
    brightness_range: tuple = (0.9, 1.1)

    def __post_init__(self):
        if self.max_rotation_deg < 0:
            raise ValueError("max_rotation_deg must be >= 0")
        if not 0.0 <= self.hflip_prob <= 1.0:
            raise ValueError("hflip_prob must lie in [0, 1]")
        lo, hi = self.brightness_range
        if not 0.0 < lo <= hi:
            raise ValueError("brightness_range must satisfy 0 < lo <= hi")


@dataclass(frozen=True)
class PreprocessConfig:
    """Cleanup applied to every image before feature extraction."""

    mask: MaskConfig = MaskConfig()
    size: int = CANONICAL_SIZE


def _read_pgm(data: bytes, path: str) -> np.ndarray:
    pos = 0

    def next_token():
        nonlocal pos
        while pos < len(data):
            c = data[pos : pos + 1]
            if c == b"#":
                while pos < len(data) and data[pos : pos + 1] != b"\n":
                    pos += 1
            elif c.isspace():
                pos += 1
            else:
                break
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ValueError(f"malformed PGM header in {path}")
        return data[start:pos]

    if next_token() != b"P5":
        raise ValueError(f"{path}: not a binary PGM (P5) file")
    try:
        width = int(next_token())
        height = int(next_token())
        maxval = int(next_token())
    except ValueError as exc:
        raise ValueError(f"malformed PGM header in {path}") from exc
    if width < 1 or height < 1:
        raise ValueError(f"{path}: zero-dimension image")
    if not 1 <= maxval <= 255:
        raise ValueError(f"{path}: only 8-bit PGM supported (maxval {maxval})")
    pos += 1  # single whitespace byte after maxval
    raster = data[pos : pos + width * height]
    if len(raster) < width * height:
        raise ValueError(f"{path}: truncated PGM raster")
    arr = np.frombuffer(raster, dtype=np.uint8).reshape(height, width)
    return arr.astype(np.float64) / 255.0


def load_image(path: str) -> np.ndarray:
    """Decode PNG/JPEG/PGM into a [0, 1] grayscale matrix."""
    with open(path, "rb") as fh:
        head = fh.read(2)
        if head == b"P5":
            return _read_pgm(head + fh.read(), str(path))
    from PIL import Image, UnidentifiedImageError

    try:
        with Image.open(path) as im:
            if im.mode == "P":
                im = im.convert("RGB")
            if im.width < 1 or im.height < 1:
                raise ValueError(f"{path}: zero-dimension image")
            arr = np.asarray(im)
    except UnidentifiedImageError as exc:
        raise ValueError(f"{path}: unreadable or unsupported image") from exc
    if arr.ndim == 2 and arr.dtype == np.uint8:
        return arr.astype(np.float64) / 255.0
    if arr.ndim == 3 and arr.dtype == np.uint8 and arr.shape[2] in (2, 3, 4):
        if arr.shape[2] == 2:  # LA: luminance plus alpha
            return arr[:, :, 0].astype(np.float64) / 255.0
        rgb = arr[:, :, :3].astype(np.float64) / 255.0
        return _LUMA[0] * rgb[:, :, 0] + _LUMA[1] * rgb[:, :, 1] + _LUMA[2] * rgb[:, :, 2]
    raise ValueError(f"{path}: unsupported image format (need 8-bit gray or RGB)")


def save_pgm(img: np.ndarray, path: str) -> None:
    """Write an 8-bit binary PGM; byte-identical output for identical input."""
    h, w = img.shape
    raster = np.rint(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n255\n" % (w, h))
        fh.write(raster.tobytes())


def _sample_bilinear(img: np.ndarray, ys: np.ndarray, xs: np.ndarray,
                     zero_fill: bool) -> np.ndarray:
    """Bilinear lookup at float coordinates; clamp to the edge or fill 0."""
    h, w = img.shape
    y0 = np.floor(ys)
    x0 = np.floor(xs)
    fy = ys - y0
    fx = xs - x0
    y0 = y0.astype(np.int64)
    x0 = x0.astype(np.int64)
    y1 = y0 + 1
    x1 = x0 + 1

    def grab(yi, xi):
        v = img[np.clip(yi, 0, h - 1), np.clip(xi, 0, w - 1)]
        if zero_fill:
            inside = (yi >= 0) & (yi < h) & (xi >= 0) & (xi < w)
            v = np.where(inside, v, 0.0)
        return v

    top = (1.0 - fx) * grab(y0, x0) + fx * grab(y0, x1)
    bot = (1.0 - fx) * grab(y1, x0) + fx * grab(y1, x1)
    return (1.0 - fy) * top + fy * bot


def resize_bilinear(img: np.ndarray, out_w: int, out_h: int) -> np.ndarray:
    """Resize with pixel-center alignment and edge clamping."""
    if out_w < 1 or out_h < 1:
        raise ValueError("output dimensions must be >= 1")
    h, w = img.shape
    xs = (np.arange(out_w) + 0.5) * (w / out_w) - 0.5
    ys = (np.arange(out_h) + 0.5) * (h / out_h) - 0.5
    return _sample_bilinear(img, ys[:, None], xs[None, :], zero_fill=False)


def mask_annotations(img: np.ndarray, cfg: MaskConfig) -> np.ndarray:
    """Zero out bright border-band pixels (burned-in labels and markers)."""
    h, w = img.shape
    if cfg.margin >= min(h, w) / 2:
        raise ValueError(
            f"mask margin {cfg.margin} too large for {w}x{h} image"
        )
    out = img.copy()
    m = cfg.margin
    band = np.zeros((h, w), dtype=bool)
    band[:m, :] = True
    band[h - m :, :] = True
    band[:, :m] = True
    band[:, w - m :] = True
    out[band & (img >= cfg.threshold)] = 0.0
    return out


def rotate_bilinear(img: np.ndarray, theta_deg: float) -> np.ndarray:
    """Rotate about the image center; bilinear sampling, zero fill outside."""
    if theta_deg == 0.0:
        return img.copy()
    h, w = img.shape
    cy = (h - 1) / 2.0
    cx = (w - 1) / 2.0
    th = np.deg2rad(theta_deg)
    c, s = np.cos(th), np.sin(th)
    dy = np.arange(h)[:, None] - cy
    dx = np.arange(w)[None, :] - cx
    src_x = cx + c * dx + s * dy
    src_y = cy - s * dx + c * dy
    return _sample_bilinear(img, src_y, src_x, zero_fill=True)


def augment(img: np.ndarray, cfg: AugmentConfig, rng) -> np.ndarray:
    """Random rotation, horizontal flip and brightness scale, in that order.

    Exactly three uniform draws are consumed (angle, flip, brightness),
    so augmented copies are reproducible from the stream position alone.
    A fully degenerate config returns the input pixel-exactly.
    """
    if img.shape != (CANONICAL_SIZE, CANONICAL_SIZE):
        raise ValueError(
            f"augment expects {CANONICAL_SIZE}x{CANONICAL_SIZE} input, got {img.shape}"
        )
    theta = rng.uniform(-cfg.max_rotation_deg, cfg.max_rotation_deg)
    u_flip = rng.uniform()
    bright = rng.uniform(*cfg.brightness_range)
    out = rotate_bilinear(img, theta)
    if u_flip < cfg.hflip_prob:
        out = out[:, ::-1]
    out = np.clip(out * bright, 0.0, 1.0)
    return out


def preprocess_image(img: np.ndarray, cfg: PreprocessConfig) -> np.ndarray:
    """Mask border annotations, then resize to the pipeline size."""
    cleaned = mask_annotations(img, cfg.mask)
    return resize_bilinear(cleaned, cfg.size, cfg.size)
