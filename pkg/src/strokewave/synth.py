"""Seeded three-class brain phantoms for dataset-free end-to-end testing.

Phantoms are 256x256: a dark background, an elliptical "brain" with a
smooth internal gradient, a class-specific lesion (dark wedge for
ischemic, bright speckled disc for hemorrhagic) and Gaussian pixel noise.
All geometry parameters are drawn in a fixed order regardless of class, so
the same stream yields the same base anatomy for every class; lesion
evidence shows up both in coarse structure (pooled approximation band) and
in detail statistics.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .imageio import save_pgm
from .pipeline import CLASS_NAMES, Dataset, scan_dataset
from .rng import RngStream, derive_seed

_TAG_PHANTOM = 0xF0


@dataclass(frozen=True)
class PhantomSpec:
    size: int = 256
    background: float = 0.02
    base_intensity: float = 0.45
    gradient_amp: float = 0.05
    center_jitter: float = 6.0
    axis_x: tuple = (88.0, 102.0)
    axis_y: tuple = (72.0, 88.0)
    wedge_span: tuple = (0.9, 1.4)        # radians
    wedge_radial: tuple = (0.15, 0.85)    # inner/outer fraction of the ellipse
    wedge_intensity: float = 0.15
    disc_radius: tuple = (16.0, 26.0)
    disc_intensity: tuple = (0.85, 0.95)
    disc_ripple: float = 0.04
    noise_sigma: float = 0.03

    def __post_init__(self):
        half = self.size / 2.0
        if self.center_jitter + max(self.axis_x[1], self.axis_y[1]) >= half:
            raise ValueError("brain ellipse can leave the image bounds")
        if not 0 < self.wedge_radial[0] < self.wedge_radial[1] <= 1.0:
            raise ValueError("wedge radial band must be inside the ellipse")


def gen_phantom(cls: int, rng: RngStream, spec: PhantomSpec = PhantomSpec()) -> np.ndarray:
    """One phantom image; identical (cls, stream state, spec) => identical pixels."""
    if cls not in (0, 1, 2):
        raise ValueError(f"class must be 0, 1 or 2, got {cls}")
    n = spec.size
    half = n / 2.0
    # One draw block for every class keeps base anatomy seed-comparable.
    cy = half + rng.uniform(-spec.center_jitter, spec.center_jitter)
    cx = half + rng.uniform(-spec.center_jitter, spec.center_jitter)
    ax = rng.uniform(*spec.axis_x)
    ay = rng.uniform(*spec.axis_y)
    grad_dir = rng.uniform(0.0, 2.0 * np.pi)
    theta0 = rng.uniform(0.0, 2.0 * np.pi)
    dtheta = rng.uniform(*spec.wedge_span)
    r_in = rng.uniform(spec.wedge_radial[0], spec.wedge_radial[0] + 0.05)
    r_out = rng.uniform(spec.wedge_radial[1] - 0.10, spec.wedge_radial[1])
    disc_ang = rng.uniform(0.0, 2.0 * np.pi)
    disc_frac = rng.uniform(0.10, 0.45)
    disc_r = rng.uniform(*spec.disc_radius)
    disc_int = rng.uniform(*spec.disc_intensity)
    ripple_phase = rng.uniform(0.0, 2.0 * np.pi)

    yy = np.arange(n)[:, None] - cy
    xx = np.arange(n)[None, :] - cx
    ex = xx / ax
    ey = yy / ay
    rr2 = ex * ex + ey * ey
    brain = rr2 <= 1.0

    img = np.full((n, n), spec.background)
    gx, gy = np.cos(grad_dir), np.sin(grad_dir)
    base = spec.base_intensity + spec.gradient_amp * (ex * gx + ey * gy)
    img[brain] = base[brain]

    if cls == 1:  # ischemic: dark wedge replaces brain tissue
        ang = np.arctan2(ey, ex) % (2.0 * np.pi)
        span = (ang - theta0) % (2.0 * np.pi)
        dist = np.sqrt(rr2)
        wedge = brain & (span <= dtheta) & (dist >= r_in) & (dist <= r_out)
        img[wedge] = spec.wedge_intensity
    elif cls == 0:  # hemorrhagic: bright disc with fine speckle
        px = cx + disc_frac * ax * np.cos(disc_ang)
        py = cy + disc_frac * ay * np.sin(disc_ang)
        disc = ((np.arange(n)[None, :] - px) ** 2
                + (np.arange(n)[:, None] - py) ** 2) <= disc_r * disc_r
        ripple = spec.disc_ripple * (
            np.sin(0.9 * np.arange(n)[None, :] + ripple_phase)
            * np.sin(0.9 * np.arange(n)[:, None] + ripple_phase)
        )
        region = disc & brain
        img[region] = (disc_int + ripple)[region]

    img += rng.normals(n * n, 0.0, spec.noise_sigma).reshape(n, n)
    return np.clip(img, 0.0, 1.0)


def gen_dataset(n_per_class: int, seed: int, out_dir: str,
                spec: PhantomSpec = PhantomSpec()) -> Dataset:
    """Write n_per_class phantoms per class as PGM in the dataset layout."""
    if n_per_class < 1:
        raise ValueError("n_per_class must be >= 1")
    for cls, name in enumerate(CLASS_NAMES):
        cls_dir = os.path.join(out_dir, name.capitalize())
        os.makedirs(cls_dir, exist_ok=True)
        for i in range(n_per_class):
            rng = RngStream(derive_seed(seed, _TAG_PHANTOM, cls, i))
            img = gen_phantom(cls, rng, spec)
            save_pgm(img, os.path.join(cls_dir, f"{name}_{i:04d}.pgm"))
    return scan_dataset(out_dir)
