from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np

HU_MIN, HU_MAX = -1024, 3071
BACKGROUND, TUMOR, CYST = 0, 1, 2
CLASS_NAMES = {TUMOR: "tumor", CYST: "cyst"}


def _check_spacing(spacing) -> tuple[float, float, float]:
    spacing = tuple(float(s) for s in spacing)
    if len(spacing) != 3 or min(spacing) <= 0:
        raise ValueError(f"spacing must be three positive values, got {spacing}")
    return spacing


@dataclass
class HounsfieldVolume:
    """CT volume indexed ``hu[x, y, z]`` with per-axis spacing in mm."""

    hu: np.ndarray
    spacing_mm: tuple[float, float, float]

    def __post_init__(self):
        hu = np.asarray(self.hu)
        if hu.ndim != 3 or min(hu.shape) < 1:
            raise ValueError(f"expected a non-empty 3D array, got shape {hu.shape}")
        if np.issubdtype(hu.dtype, np.floating) and not np.array_equal(hu, np.round(hu)):
            raise ValueError("HU values must be integer-valued")
        if hu.min() < HU_MIN or hu.max() > HU_MAX:
            raise ValueError(f"HU values outside [{HU_MIN}, {HU_MAX}]")
        self.hu = hu.astype(np.int16)
        self.spacing_mm = _check_spacing(self.spacing_mm)

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.hu.shape


@dataclass
class LabelVolume:
    """Per-voxel class labels: 0 background, 1 tumor, 2 cyst."""

    labels: np.ndarray
    spacing_mm: tuple[float, float, float] = (1.0, 1.0, 1.0)

    def __post_init__(self):
        lab = np.asarray(self.labels)
        if lab.ndim != 3 or min(lab.shape) < 1:
            raise ValueError(f"expected a non-empty 3D array, got shape {lab.shape}")
        if not np.isin(lab, (BACKGROUND, TUMOR, CYST)).all():
            raise ValueError("labels must be in {0, 1, 2}")
        self.labels = lab.astype(np.uint8)
        self.spacing_mm = _check_spacing(self.spacing_mm)

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.labels.shape


@dataclass
class HUSlice:
    """One axial slice; ``hu`` is [nx, ny] and ``spacing_mm`` the in-plane spacing."""

    hu: np.ndarray
    spacing_mm: tuple[float, float]
    index: int


def slice_iter(volume: HounsfieldVolume, labels: LabelVolume) -> Iterator[tuple[HUSlice, np.ndarray]]:
    """Yield (hu_slice, label_slice) pairs along z in index order."""
    if volume.dims != labels.dims:
        raise ValueError(f"volume dims {volume.dims} do not match label dims {labels.dims}")
    sx, sy, _ = volume.spacing_mm
    for k in range(volume.dims[2]):
        yield HUSlice(volume.hu[:, :, k], (sx, sy), k), labels.labels[:, :, k]
