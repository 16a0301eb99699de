"""Reduce a subband pyramid plus its source image to 128 descriptors.

A feature config is an ordered list of (source, descriptor) entries whose
output lengths must sum to exactly 128 (the classifier input width).
Sources address the approximation band, one detail subband (level counted
with 1 = finest), or the raw preprocessed image. Descriptors are mean
pooling over a fixed grid or a small statistics block.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .dwt import SubbandPyramid

FEATURE_DIM = 128
_LOG_EPS = 1e-12
_STD_FLOOR = 1e-8

ORIENTS = ("lh", "hl", "hh")


@dataclass(frozen=True)
class Pool:
    """Grid mean pooling; absolute values are applied on detail subbands."""

    rows: int
    cols: int

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ValueError("pool grid must be at least 1x1")

    @property
    def length(self) -> int:
        return self.rows * self.cols

    def tag(self) -> str:
        return f"pool{self.rows}x{self.cols}"


@dataclass(frozen=True)
class Stats:
    """First k of [log-energy, mean-abs, std, max-abs]; k is 1 or 4."""

    k: int

    def __post_init__(self):
        if self.k not in (1, 4):
            raise ValueError("stats block size must be 1 or 4")

    @property
    def length(self) -> int:
        return self.k

    def tag(self) -> str:
        return f"stats{self.k}"


@dataclass(frozen=True)
class Source:
    kind: str  # "ll" | "detail" | "image"
    level: int = 0
    orient: str = ""

    def __post_init__(self):
        if self.kind not in ("ll", "detail", "image"):
            raise ValueError(f"unknown feature source kind {self.kind!r}")
        if self.kind == "detail" and self.orient not in ORIENTS:
            raise ValueError(f"detail orientation must be one of {ORIENTS}")

    def tag(self) -> str:
        if self.kind == "detail":
            return f"{self.orient}{self.level}"
        return self.kind


@dataclass(frozen=True)
class FeatureConfig:
    wavelet: str
    levels: int
    entries: tuple  # ((Source, Pool|Stats), ...)

    def validate(self) -> None:
        total = sum(desc.length for _, desc in self.entries)
        if total != FEATURE_DIM:
            raise ValueError(
                f"feature config produces {total} values, need exactly {FEATURE_DIM}"
            )
        seen = set()
        for src, _ in self.entries:
            if src in seen:
                raise ValueError(f"source {src.tag()} referenced more than once")
            seen.add(src)
            if src.kind == "detail" and not 1 <= src.level <= self.levels:
                raise ValueError(
                    f"detail level {src.level} outside 1..{self.levels}"
                )

    @property
    def config_id(self) -> str:
        text = ";".join(
            f"{src.tag()}:{desc.tag()}" for src, desc in self.entries
        )
        digest = hashlib.sha256(
            f"{self.wavelet}/{self.levels}/{text}".encode()
        ).hexdigest()[:12]
        return f"fc-{digest}"


def default_config(wavelet: str, levels: int) -> FeatureConfig:
    """The stock 128-entry budget for the two supported settings."""
    if (wavelet, levels) == ("haar", 2):
        entries = [(Source("ll"), Pool(8, 8))]
        entries += [(Source("detail", 2, o), Pool(4, 4)) for o in ORIENTS]
        entries += [(Source("detail", 1, o), Stats(4)) for o in ORIENTS]
        entries += [(Source("image"), Stats(4))]
    elif (wavelet, levels) == ("db4", 3):
        entries = [(Source("ll"), Pool(8, 8))]
        entries += [(Source("detail", 3, o), Pool(4, 4)) for o in ORIENTS]
        entries += [(Source("detail", 2, o), Stats(4)) for o in ORIENTS]
        entries += [(Source("detail", 1, o), Stats(1)) for o in ORIENTS]
        entries += [(Source("image"), Stats(1))]
    else:
        raise ValueError(
            f"no default feature config for ({wavelet!r}, {levels}); "
            "supported: (haar, 2), (db4, 3)"
        )
    cfg = FeatureConfig(wavelet=wavelet, levels=levels, entries=tuple(entries))
    cfg.validate()
    return cfg


def pool_mean(m: np.ndarray, rows: int, cols: int, absolute: bool) -> np.ndarray:
    """Mean over a rows x cols grid with boundaries at floor(i*R/rows)."""
    r_in, c_in = m.shape
    if rows > r_in or cols > c_in:
        raise ValueError(f"pool grid {rows}x{cols} exceeds matrix {r_in}x{c_in}")
    a = np.abs(m) if absolute else m
    rb = [r_in * i // rows for i in range(rows + 1)]
    cb = [c_in * j // cols for j in range(cols + 1)]
    out = np.empty((rows, cols))
    for i in range(rows):
        for j in range(cols):
            out[i, j] = a[rb[i] : rb[i + 1], cb[j] : cb[j + 1]].mean()
    return out


def subband_stats(m: np.ndarray, k: int) -> np.ndarray:
    """[log-energy, mean-abs, std, max-abs], truncated to the first k."""
    if k not in (1, 4):
        raise ValueError("stats block size must be 1 or 4")
    if m.size == 0:
        raise ValueError("cannot summarize an empty matrix")
    vals = [float(np.log(_LOG_EPS + np.mean(m * m)))]
    if k == 4:
        vals += [
            float(np.mean(np.abs(m))),
            float(np.std(m)),
            float(np.max(np.abs(m))),
        ]
    return np.array(vals)


def _resolve(src: Source, p: SubbandPyramid, img: np.ndarray):
    if src.kind == "ll":
        return p.ll, False
    if src.kind == "image":
        return img, False
    triple = p.details[p.levels - src.level]
    return triple[ORIENTS.index(src.orient)], True


def extract(p: SubbandPyramid, img: np.ndarray, cfg: FeatureConfig) -> np.ndarray:
    """Concatenate descriptor outputs in entry order; always 128 values."""
    cfg.validate()
    if p.levels != cfg.levels:
        raise ValueError(
            f"pyramid has {p.levels} levels, config expects {cfg.levels}"
        )
    parts = []
    for src, desc in cfg.entries:
        m, is_detail = _resolve(src, p, img)
        if isinstance(desc, Pool):
            parts.append(pool_mean(m, desc.rows, desc.cols, absolute=is_detail).ravel())
        else:
            parts.append(subband_stats(m, desc.k))
    v = np.concatenate(parts)
    if v.size != FEATURE_DIM:
        raise ValueError(f"extraction produced {v.size} values, expected {FEATURE_DIM}")
    if not np.all(np.isfinite(v)):
        raise ValueError("non-finite feature value")
    return v


@dataclass(frozen=True)
class Normalizer:
    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        if self.mean.shape != (FEATURE_DIM,) or self.std.shape != (FEATURE_DIM,):
            raise ValueError(f"normalizer vectors must have length {FEATURE_DIM}")
        if np.any(self.std < _STD_FLOOR):
            raise ValueError(f"normalizer std below floor {_STD_FLOOR}")


def fit_normalizer(rows) -> Normalizer:
    """Per-dimension mean and population std, std floored at 1e-8."""
    x = np.asarray(rows, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ValueError("normalizer needs at least 2 feature rows")
    return Normalizer(
        mean=x.mean(axis=0),
        std=np.maximum(x.std(axis=0), _STD_FLOOR),
    )


def normalize(v: np.ndarray, n: Normalizer) -> np.ndarray:
    return (v - n.mean) / n.std
