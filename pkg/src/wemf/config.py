"""JSON run configuration with sections data, windows, model, train and eval."""

from __future__ import annotations

import copy
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .net import ModelConfig
from .train import TrainConfig
from .windowing import TriWindowConfig, WindowSpec


class ConfigError(ValueError):
    pass


@dataclass
class DataConfig:
    cases: int = 40
    dims: tuple[int, int, int] = (64, 64, 16)
    spacing_mm: tuple[float, float, float] = (1.0, 1.0, 2.5)
    lesion_class: str = "mixed"
    seed: int = 0
    ratios: tuple[float, float, float] = (0.77, 0.08, 0.15)
    train_slices: str = "lesion"  # "lesion": slices with any label, "all": every slice

    def validate(self) -> None:
        if self.cases < 1:
            raise ConfigError("data.cases must be at least 1")
        if self.train_slices not in ("lesion", "all"):
            raise ConfigError(f"data.train_slices must be 'lesion' or 'all', got {self.train_slices!r}")


@dataclass
class WindowsConfig:
    mode: str = "tri"  # "tri" or "single" (first window replicated)
    windows: list[list[float]] = field(default_factory=lambda: [[25.0, 375.0], [40.0, 350.0], [20.0, 300.0]])

    def validate(self) -> None:
        if self.mode not in ("tri", "single"):
            raise ConfigError(f"windows.mode must be 'tri' or 'single', got {self.mode!r}")
        if len(self.windows) != 3 or any(len(p) != 2 for p in self.windows):
            raise ConfigError("windows.windows must hold three [level, width] pairs")

    def resolve(self) -> TriWindowConfig:
        tri = TriWindowConfig.from_pairs(self.windows)
        if self.mode == "single":
            return TriWindowConfig.single(WindowSpec(tri.windows[0].level, tri.windows[0].width, "default"))
        return tri


@dataclass
class EvalConfig:
    tau_mm: float = 1.0
    split: str = "test"

    def validate(self) -> None:
        if self.tau_mm <= 0:
            raise ConfigError("eval.tau_mm must be positive")
        if self.split not in ("train", "val", "test"):
            raise ConfigError(f"eval.split must be train, val or test, got {self.split!r}")


SECTIONS = {"data": DataConfig, "windows": WindowsConfig, "model": ModelConfig, "train": TrainConfig,
            "eval": EvalConfig}


@dataclass
class RunConfig:
    data: DataConfig = field(default_factory=DataConfig)
    windows: WindowsConfig = field(default_factory=WindowsConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)

    def validate(self) -> None:
        try:
            for name in SECTIONS:
                getattr(self, name).validate()
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if self.model.mfe_enabled and list(self.model.img_size) != list(self.data.dims[:2]):
            raise ConfigError(f"model.img_size {self.model.img_size} must equal the slice size "
                              f"{list(self.data.dims[:2])} when MFE is enabled")

    def to_dict(self) -> dict:
        return {name: asdict(getattr(self, name)) for name in SECTIONS}

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def replace(self, **sections) -> "RunConfig":
        """Copy with selected fields overridden, e.g. ``replace(model={"mfe_enabled": False})``."""
        doc = self.to_dict()
        for name, values in sections.items():
            doc[name].update(values)
        return from_dict(doc)


def _build(cls, values: dict, section: str):
    if not isinstance(values, dict):
        raise ConfigError(f"section '{section}' must be a JSON object")
    known = {f.name: f for f in fields(cls)}
    unknown = sorted(set(values) - set(known))
    if unknown:
        raise ConfigError(f"unknown key(s) in '{section}': {', '.join(unknown)}")
    kw = {}
    for k, v in values.items():
        default = getattr(cls(), k)
        kw[k] = tuple(v) if isinstance(default, tuple) and isinstance(v, list) else copy.deepcopy(v)
    return cls(**kw)


def from_dict(doc: dict) -> RunConfig:
    if not isinstance(doc, dict):
        raise ConfigError("run config must be a JSON object")
    unknown = sorted(set(doc) - set(SECTIONS))
    if unknown:
        raise ConfigError(f"unknown section(s): {', '.join(unknown)}")
    try:
        cfg = RunConfig(**{name: _build(cls, doc.get(name, {}), name) for name, cls in SECTIONS.items()})
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    cfg.validate()
    return cfg


def load_config(path=None) -> RunConfig:
    if path is None:
        cfg = RunConfig()
        cfg.validate()
        return cfg
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return from_dict(doc)
