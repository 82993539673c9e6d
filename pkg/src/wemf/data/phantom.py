"""Synthetic head-and-neck CT phantoms with tumor and cyst lesions.

Anatomy is a coarse axial cross-section extruded along z: a fat-filled body
outline with lateral and posterior muscle masses, a vertebral bone disc and
an airway. Lesions are rotated ellipsoids. Cysts get one uniform interior
value from the cyst range plus a thin, mildly enhancing wall outside the
label; tumors get a base value plus a smooth speckle field.

Tissue values other than the cyst range are plausible stand-ins, not
measured statistics.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .rng import Rng
from .volume import CYST, HU_MAX, HU_MIN, TUMOR, HounsfieldVolume, LabelVolume


@dataclass
class PhantomConfig:
    dims: tuple[int, int, int] = (64, 64, 24)
    spacing_mm: tuple[float, float, float] = (1.0, 1.0, 2.0)
    lesion_class: str = "mixed"  # tumor | cyst | mixed
    lesion_count: tuple[int, int] = (1, 2)
    radius_mm: tuple[float, float] = (5.0, 10.0)
    air_hu: float = -1000.0
    fat_hu: tuple[float, float] = (-80.0, 15.0)
    muscle_hu: tuple[float, float] = (50.0, 10.0)
    bone_hu: tuple[float, float] = (900.0, 150.0)
    cyst_hu: tuple[float, float] = (0.0, 20.0)
    tumor_hu: tuple[float, float] = (55.0, 25.0)
    speckle_hu: float = 20.0
    noise_std: float = 5.0
    bone_slab: bool = True
    air_pockets: bool = True
    seed: int = 0
    max_retries: int = 200

    def validate(self) -> None:
        if len(self.dims) != 3 or min(self.dims) < 1:
            raise ValueError(f"bad dims {self.dims}")
        if min(self.spacing_mm) <= 0:
            raise ValueError("spacing must be positive")
        if self.lesion_class not in ("tumor", "cyst", "mixed"):
            raise ValueError(f"unknown lesion class {self.lesion_class!r}")
        lo, hi = self.lesion_count
        if lo < 0 or hi < lo:
            raise ValueError(f"bad lesion count range {self.lesion_count}")
        rlo, rhi = self.radius_mm
        extent = min(n * s for n, s in zip(self.dims, self.spacing_mm))
        if rlo <= 0 or rhi < rlo or 2 * rhi >= extent:
            raise ValueError(f"radius range {self.radius_mm} must be positive and fit in extent {extent} mm")
        clo, chi = self.cyst_hu
        if not 0.0 <= clo <= chi <= 20.0:
            raise ValueError(f"cyst interior range {self.cyst_hu} must lie within [0, 20] HU")
        if self.noise_std < 0:
            raise ValueError("noise_std must be non-negative")


@dataclass
class Lesion:
    cls: int
    center_mm: tuple[float, float, float]
    radii_mm: tuple[float, float, float]
    angle: float
    base_hu: float

    def contains(self, X, Y, Z) -> np.ndarray:
        c, s = np.cos(self.angle), np.sin(self.angle)
        dx, dy, dz = X - self.center_mm[0], Y - self.center_mm[1], Z - self.center_mm[2]
        u, v = c * dx + s * dy, -s * dx + c * dy
        a, b, r = self.radii_mm
        return (u / a) ** 2 + (v / b) ** 2 + (dz / r) ** 2 <= 1.0


@dataclass
class PhantomRender:
    clean_hu: np.ndarray  # float, before noise and clamping
    labels: np.ndarray
    lesions: list[Lesion] = field(default_factory=list)


def _grid(cfg: PhantomConfig):
    axes = [(np.arange(n) - (n - 1) / 2.0) * s for n, s in zip(cfg.dims, cfg.spacing_mm)]
    return np.meshgrid(*axes, indexing="ij")


def _ellipse(X, Y, cx, cy, a, b):
    return ((X - cx) / a) ** 2 + ((Y - cy) / b) ** 2 <= 1.0


def render_phantom(cfg: PhantomConfig) -> PhantomRender:
    """Noise-free phantom; a pure function of ``cfg``."""
    cfg.validate()
    rng = Rng(cfg.seed)
    X, Y, Z = _grid(cfg)
    ex, ey = cfg.dims[0] * cfg.spacing_mm[0], cfg.dims[1] * cfg.spacing_mm[1]

    hu = np.full(cfg.dims, cfg.air_hu)
    body = _ellipse(X, Y, 0.0, 0.0, 0.45 * ex * rng.uniform(0.95, 1.0), 0.40 * ey * rng.uniform(0.95, 1.0))
    hu[body] = rng.normal(*cfg.fat_hu)

    muscle = np.zeros(cfg.dims, dtype=bool)
    for side in (-1.0, 1.0):
        muscle |= _ellipse(X, Y, side * 0.22 * ex + rng.uniform(-1, 1), 0.05 * ey + rng.uniform(-1, 1),
                           0.10 * ex, 0.17 * ey)
    muscle |= _ellipse(X, Y, 0.0, 0.22 * ey, 0.20 * ex, 0.10 * ey)
    muscle &= body
    hu[muscle] = rng.normal(*cfg.muscle_hu)

    blocked = ~body
    if cfg.bone_slab:
        bone = _ellipse(X, Y, 0.0, 0.20 * ey, 0.07 * ex, 0.06 * ey)
        hu[bone] = rng.normal(*cfg.bone_hu)
        blocked |= bone
    if cfg.air_pockets:
        air = _ellipse(X, Y, rng.uniform(-1, 1), -0.17 * ey, 0.05 * ex, 0.05 * ey)
        hu[air] = cfg.air_hu
        blocked |= air

    labels = np.zeros(cfg.dims, dtype=np.uint8)
    count = rng.integers(cfg.lesion_count[0], cfg.lesion_count[1] + 1)
    occupied = ndimage.binary_dilation(blocked, iterations=2)
    lesions: list[Lesion] = []
    half = [(n - 1) / 2.0 * s for n, s in zip(cfg.dims, cfg.spacing_mm)]
    speckle = None
    for _ in range(count):
        if cfg.lesion_class == "mixed":
            cls = TUMOR if rng.uniform() < 0.5 else CYST
        else:
            cls = TUMOR if cfg.lesion_class == "tumor" else CYST
        for _attempt in range(cfg.max_retries):
            radii = tuple(rng.uniform(*cfg.radius_mm) for _ in range(3))
            rmax = max(radii)
            center = tuple(rng.uniform(-h + rmax, h - rmax) if h > rmax else 0.0 for h in half)
            if any(h < r for h, r in zip(half, radii)):
                continue
            lesion = Lesion(cls, center, radii, rng.uniform(0.0, np.pi), 0.0)
            mask = lesion.contains(X, Y, Z)
            if mask.any() and not (mask & occupied).any():
                break
        else:
            raise ValueError(f"could not place lesion {len(lesions) + 1} after {cfg.max_retries} attempts")

        if cls == CYST:
            lesion.base_hu = rng.uniform(*cfg.cyst_hu)
            hu[mask] = lesion.base_hu
            wall = ndimage.binary_dilation(mask) & ~mask & body
            hu[wall] = lesion.base_hu + 25.0
        else:
            lesion.base_hu = rng.normal(*cfg.tumor_hu)
            if speckle is None:
                field_ = ndimage.gaussian_filter(rng.normal_array(cfg.dims), sigma=2.0, mode="wrap")
                speckle = field_ / field_.std()
            hu[mask] = lesion.base_hu + cfg.speckle_hu * speckle[mask]
        labels[mask] = cls
        occupied |= ndimage.binary_dilation(mask, iterations=2)
        lesions.append(lesion)
    return PhantomRender(hu, labels, lesions)


def generate_phantom(cfg: PhantomConfig) -> tuple[HounsfieldVolume, LabelVolume]:
    """Noisy, clamped, integer-valued phantom and its labels."""
    render = render_phantom(cfg)
    rng = Rng(cfg.seed ^ 0x5EED_0F_F00D)
    noisy = render.clean_hu + cfg.noise_std * rng.normal_array(cfg.dims)
    hu = np.clip(np.rint(noisy), HU_MIN, HU_MAX).astype(np.int16)
    return HounsfieldVolume(hu, cfg.spacing_mm), LabelVolume(render.labels, cfg.spacing_mm)
