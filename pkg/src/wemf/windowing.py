"""Tri-window CT intensity enhancement."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class WindowSpec:
    level: float
    width: float
    name: str = ""

    def __post_init__(self):
        if not self.width > 0:
            raise ValueError(f"window width must be positive, got {self.width}")


DEFAULT = WindowSpec(25.0, 375.0, "default")
ABDOMEN_SOFT = WindowSpec(40.0, 350.0, "abdomen")
SPINE_SOFT = WindowSpec(20.0, 300.0, "spine")


@dataclass(frozen=True)
class TriWindowConfig:
    windows: tuple[WindowSpec, WindowSpec, WindowSpec] = field(
        default_factory=lambda: (DEFAULT, ABDOMEN_SOFT, SPINE_SOFT))

    def __post_init__(self):
        if len(self.windows) != 3:
            raise ValueError(f"exactly three windows are required, got {len(self.windows)}")

    @classmethod
    def single(cls, spec: WindowSpec = DEFAULT) -> "TriWindowConfig":
        """Ablation mode: one window replicated into all three channels."""
        return cls((spec, spec, spec))

    @classmethod
    def from_pairs(cls, pairs) -> "TriWindowConfig":
        names = ("default", "abdomen", "spine")
        return cls(tuple(WindowSpec(float(l), float(w), n) for (l, w), n in zip(pairs, names)))

    def to_pairs(self) -> list[list[float]]:
        return [[w.level, w.width] for w in self.windows]


def window_bounds(spec: WindowSpec) -> tuple[float, float]:
    return spec.level - spec.width / 2.0, spec.level + spec.width / 2.0


def apply_window(hu, spec: WindowSpec) -> np.ndarray:
    """Clip to the window and rescale linearly onto [0, 1]."""
    lo, hi = window_bounds(spec)
    clipped = np.clip(np.asarray(hu, dtype=np.float64), lo, hi)
    return (clipped - lo) / (hi - lo)


def tri_window_stack(hu, cfg: TriWindowConfig | None = None) -> np.ndarray:
    """Stack the three windowed views of ``hu`` [..., H, W] into [..., H, W, 3]."""
    cfg = cfg or TriWindowConfig()
    return np.stack([apply_window(hu, w) for w in cfg.windows], axis=-1)
