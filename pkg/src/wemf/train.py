"""Optimization loop: Dice + cross-entropy loss, AdamW, per-epoch cosine schedule."""

from __future__ import annotations

import json
import logging
import math
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .autodiff import Tensor, backward, load_params, ops, save_params
from .autodiff.nn import cross_entropy
from .metrics import confusion, dice
from .net import ModelConfig, forward, init_weights, predict
from .windowing import TriWindowConfig

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    lr0: float = 1e-4
    t_max: int = 100
    eta_min: float = 0.0
    epochs: int = 20
    batch_size: int = 4
    max_steps: Optional[int] = None
    weight_decay: float = 0.01
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    w_dice: float = 1.0
    w_ce: float = 1.0
    seed: int = 0
    val_every: int = 1

    def validate(self) -> None:
        if self.lr0 <= 0 or self.t_max < 1:
            raise ValueError("lr0 must be positive and t_max at least 1")
        if self.w_dice < 0 or self.w_ce < 0 or (self.w_dice == 0 and self.w_ce == 0):
            raise ValueError("loss weights must be non-negative and not both zero")
        if self.batch_size < 1 or self.epochs < 1:
            raise ValueError("batch_size and epochs must be positive")


# -- loss, schedule, optimizer ----------------------------------------------------------

def soft_dice_loss(logits: Tensor, labels: np.ndarray, smooth: float = 1e-5) -> Tensor:
    """1 - mean soft Dice over foreground classes, pooled over the batch."""
    K = logits.shape[-1]
    probs = ops.softmax(logits, axis=-1)
    onehot = np.eye(K)[labels]
    axes = tuple(range(logits.ndim - 1))
    inter = ops.sum(probs * onehot, axis=axes)[1:]
    denom = ops.sum(probs, axis=axes)[1:] + onehot.sum(axis=axes)[1:]
    dsc = (inter * 2.0 + smooth) / (denom + smooth)
    return 1.0 - ops.mean(dsc)


def dice_ce_loss(logits: Tensor, labels, w_ce: float = 1.0, w_dice: float = 1.0) -> Tensor:
    labels = np.asarray(labels, dtype=np.int64)
    K = logits.shape[-1]
    if labels.min() < 0 or labels.max() >= K:
        raise ValueError(f"labels must lie in [0, {K})")
    loss = cross_entropy(logits, labels) * w_ce
    if w_dice:
        loss = loss + soft_dice_loss(logits, labels) * w_dice
    return loss


def cosine_lr(t: int, cfg: TrainConfig) -> float:
    t = min(max(t, 0), cfg.t_max)
    return cfg.eta_min + (cfg.lr0 - cfg.eta_min) * (1.0 + math.cos(math.pi * t / cfg.t_max)) / 2.0


@dataclass
class AdamWState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0


def adamw_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray], state: AdamWState, lr: float,
               betas=(0.9, 0.999), eps: float = 1e-8, weight_decay: float = 0.01) -> None:
    """In-place AdamW update: decoupled decay first, then the bias-corrected Adam step."""
    b1, b2 = betas
    state.step += 1
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for name in sorted(params):
        p = params[name]
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p)
        m = state.m.setdefault(name, np.zeros_like(p))
        v = state.v.setdefault(name, np.zeros_like(p))
        p *= 1.0 - lr * weight_decay
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)


# -- checkpoints ----------------------------------------------------------------

@dataclass
class Checkpoint:
    weights: dict[str, np.ndarray]
    optimizer: AdamWState
    epoch: int
    rng_state: dict
    best_val_dsc: float = -1.0
    best_epoch: int = -1
    best_weights: Optional[dict[str, np.ndarray]] = None

    def save(self, directory, prefix: str = "last") -> None:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        save_params(self.weights, d / f"{prefix}.wemf")
        moments = {f"m.{k}": v for k, v in self.optimizer.m.items()}
        moments.update({f"v.{k}": v for k, v in self.optimizer.v.items()})
        save_params(moments or {"_empty": np.zeros(1)}, d / f"{prefix}.opt.wemf")
        if self.best_weights is not None:
            save_params(self.best_weights, d / "best.wemf")
        meta = {"epoch": self.epoch, "step": self.optimizer.step, "rng_state": self.rng_state,
                "best_val_dsc": self.best_val_dsc, "best_epoch": self.best_epoch}
        tmp = d / f"{prefix}.json.tmp"
        tmp.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
        os.replace(tmp, d / f"{prefix}.json")

    @classmethod
    def load(cls, directory, prefix: str = "last") -> "Checkpoint":
        d = Path(directory)
        meta = json.loads((d / f"{prefix}.json").read_text())
        moments = load_params(d / f"{prefix}.opt.wemf")
        state = AdamWState({k[2:]: v for k, v in moments.items() if k.startswith("m.")},
                           {k[2:]: v for k, v in moments.items() if k.startswith("v.")}, meta["step"])
        best = load_params(d / "best.wemf") if (d / "best.wemf").exists() else None
        return cls(load_params(d / f"{prefix}.wemf"), state, meta["epoch"], meta["rng_state"],
                   meta["best_val_dsc"], meta["best_epoch"], best)


# -- data and loop -----------------------------------------------------------------

@dataclass
class SliceSet:
    """Stacked 2D training samples: ``hu`` [n, H, W] and ``labels`` [n, H, W]."""

    hu: np.ndarray
    labels: np.ndarray

    def __len__(self) -> int:
        return len(self.hu)


@dataclass
class ValCase:
    hu: np.ndarray  # [nx, ny, nz]
    labels: np.ndarray


def predict_volume(hu: np.ndarray, cfg: ModelConfig, weights, windows=None, batch: int = 8) -> np.ndarray:
    """Slice-wise prediction of an [nx, ny, nz] volume."""
    slices = np.moveaxis(hu, -1, 0)
    out = [predict(slices[i:i + batch], cfg, weights, windows) for i in range(0, len(slices), batch)]
    return np.moveaxis(np.concatenate(out, axis=0), 0, -1)


def mean_foreground_dsc(cases: Sequence[ValCase], cfg: ModelConfig, weights, windows=None) -> float:
    scores = [dice(confusion(predict_volume(c.hu, cfg, weights, windows), c.labels)) for c in cases]
    return float(np.mean(scores))


def _as_tensors(arrays: dict[str, np.ndarray]) -> dict[str, Tensor]:
    return {k: Tensor(v, requires_grad=True) for k, v in arrays.items()}


def train(model_cfg: ModelConfig, data: SliceSet, train_cfg: TrainConfig,
          val: Sequence[ValCase] = (), windows: TriWindowConfig | None = None,
          out_dir=None, resume: Checkpoint | None = None,
          on_step: Callable[[dict], None] | None = None, stop_after_epoch: int | None = None) -> Checkpoint:
    """Train from scratch or from ``resume``; returns the final checkpoint.

    With ``out_dir`` set, a JSON-lines log (``train_log.jsonl``) and the
    last/best checkpoints are written there after every epoch.
    """
    train_cfg.validate()
    model_cfg.validate()
    if len(data) == 0:
        raise ValueError("no training slices")
    if resume is None:
        weights = {k: v.data.copy() for k, v in init_weights(model_cfg, train_cfg.seed).items()}
        ckpt = Checkpoint(weights, AdamWState(), 0, np.random.default_rng(train_cfg.seed).bit_generator.state)
    else:
        ckpt = resume
    expected = {k: v.shape for k, v in init_weights(model_cfg, train_cfg.seed).items()}
    got = {k: v.shape for k, v in ckpt.weights.items()}
    if expected != got:
        raise ValueError("checkpoint weights do not match the model configuration")

    # dry run so shape errors surface before any update
    probe = forward(data.hu[:1], model_cfg, _as_tensors(ckpt.weights), windows)
    if probe.shape[:-1] != data.labels[:1].shape:
        raise ValueError(f"logits {probe.shape} do not match labels {data.labels[:1].shape}")

    rng = np.random.default_rng()
    rng.bit_generator.state = ckpt.rng_state
    log_fh = None
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        log_fh = open(Path(out_dir) / "train_log.jsonl", "a")
    n = len(data)
    bs = train_cfg.batch_size
    try:
        for epoch in range(ckpt.epoch, train_cfg.epochs):
            if train_cfg.max_steps is not None and ckpt.optimizer.step >= train_cfg.max_steps:
                break
            lr = cosine_lr(epoch, train_cfg)
            order = rng.permutation(n)
            for start in range(0, n, bs):
                if train_cfg.max_steps is not None and ckpt.optimizer.step >= train_cfg.max_steps:
                    break
                idx = np.sort(order[start:start + bs])
                params = _as_tensors(ckpt.weights)
                logits = forward(data.hu[idx], model_cfg, params, windows)
                loss = dice_ce_loss(logits, data.labels[idx], train_cfg.w_ce, train_cfg.w_dice)
                backward(loss)
                grads = {k: t.grad for k, t in params.items() if t.grad is not None}
                adamw_step(ckpt.weights, grads, ckpt.optimizer, lr, train_cfg.betas, train_cfg.eps,
                           train_cfg.weight_decay)
                rec = {"epoch": epoch, "step": ckpt.optimizer.step, "loss": loss.item(), "lr": lr}
                if on_step:
                    on_step(rec)
                if log_fh:
                    log_fh.write(json.dumps(rec) + "\n")
            ckpt.epoch = epoch + 1
            ckpt.rng_state = rng.bit_generator.state
            if val and (ckpt.epoch % train_cfg.val_every == 0 or ckpt.epoch == train_cfg.epochs):
                score = mean_foreground_dsc(val, model_cfg, _as_tensors(ckpt.weights), windows)
                rec = {"epoch": epoch, "step": ckpt.optimizer.step, "val_dsc": score, "lr": lr}
                log.info("epoch %d val_dsc %.4f", epoch, score)
                if log_fh:
                    log_fh.write(json.dumps(rec) + "\n")
                if score > ckpt.best_val_dsc:
                    ckpt.best_val_dsc, ckpt.best_epoch = score, epoch
                    ckpt.best_weights = {k: v.copy() for k, v in ckpt.weights.items()}
            if out_dir is not None:
                ckpt.save(out_dir)
            if stop_after_epoch is not None and ckpt.epoch >= stop_after_epoch:
                break
    finally:
        if log_fh:
            log_fh.close()
    return ckpt


def write_config(path, **sections) -> None:
    doc = {k: (asdict(v) if hasattr(v, "__dataclass_fields__") else v) for k, v in sections.items()}
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
