"""Segmentation metrics: overlap, surface distance and confusion rates.

Conventions
-----------
* Surface voxels are foreground voxels with at least one face-adjacent
  background neighbor; voxels outside the array count as background.
* Distances are Euclidean in mm, surface voxel to nearest surface voxel.
* HD95 is the 95th percentile (linear interpolation) of the pooled
  pred->ref and ref->pred distances.
* NSD pools both directions: (#pred points within tau + #ref points within
  tau) / (#pred points + #ref points), with ``<=`` at the boundary.
* Empty masks: both empty -> DSC/IoU/NSD 1 and HD95 0; exactly one empty ->
  DSC/IoU/NSD 0 and HD95 undefined (``None``).
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from scipy import ndimage

from .data.volume import CLASS_NAMES

FOREGROUND_CLASSES = (1, 2)


@dataclass
class ConfusionCounts:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


def confusion(pred, ref, cls: int | None = None) -> ConfusionCounts:
    """One-vs-rest counts for ``cls``; ``None`` treats any nonzero label as foreground."""
    pred, ref = np.asarray(pred), np.asarray(ref)
    if pred.shape != ref.shape:
        raise ValueError(f"prediction shape {pred.shape} does not match reference {ref.shape}")
    p = pred != 0 if cls is None else pred == cls
    r = ref != 0 if cls is None else ref == cls
    tp = int(np.count_nonzero(p & r))
    fp = int(np.count_nonzero(p & ~r))
    fn = int(np.count_nonzero(~p & r))
    return ConfusionCounts(tp, fp, fn, p.size - tp - fp - fn)


def _ratio(num: int, den: int, empty: float) -> float:
    return num / den if den else empty


def dice(c: ConfusionCounts) -> float:
    return _ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn, 1.0)


def iou(c: ConfusionCounts) -> float:
    return _ratio(c.tp, c.tp + c.fp + c.fn, 1.0)


def accuracy(c: ConfusionCounts) -> float:
    return (c.tp + c.tn) / c.total


def recall(c: ConfusionCounts) -> float:
    return _ratio(c.tp, c.tp + c.fn, 1.0 if c.fp == 0 else 0.0)


def specificity(c: ConfusionCounts) -> float:
    return _ratio(c.tn, c.tn + c.fp, 1.0)


def precision(c: ConfusionCounts) -> float:
    return _ratio(c.tp, c.tp + c.fp, 1.0 if c.fn == 0 else 0.0)


# -- surface distances --------------------------------------------------------------

@dataclass
class SurfaceDistanceStats:
    pred_to_ref: np.ndarray
    ref_to_pred: np.ndarray
    defined: bool = True  # False when exactly one surface is empty

    @property
    def both_empty(self) -> bool:
        return self.defined and self.pred_to_ref.size == 0 and self.ref_to_pred.size == 0

    @property
    def pooled(self) -> np.ndarray:
        return np.concatenate([self.pred_to_ref, self.ref_to_pred])


def surface_mask(mask) -> np.ndarray:
    mask = np.asarray(mask, dtype=bool)
    structure = ndimage.generate_binary_structure(mask.ndim, 1)
    return mask & ~ndimage.binary_erosion(mask, structure=structure, border_value=0)


def _brute_nearest(src: np.ndarray, dst: np.ndarray, chunk: int = 2048) -> np.ndarray:
    out = np.empty(len(src))
    for i in range(0, len(src), chunk):
        diff = src[i:i + chunk, None, :] - dst[None, :, :]
        out[i:i + chunk] = np.sqrt((diff * diff).sum(axis=-1).min(axis=1))
    return out


def surface_distances(pred, ref, spacing_mm, method: str = "edt") -> SurfaceDistanceStats:
    """Directed surface distances in mm; ``method`` is 'edt' (fast) or 'brute'."""
    pred, ref = np.asarray(pred, dtype=bool), np.asarray(ref, dtype=bool)
    if pred.shape != ref.shape:
        raise ValueError(f"mask shapes differ: {pred.shape} vs {ref.shape}")
    spacing = np.asarray(spacing_mm, dtype=np.float64)
    if spacing.shape != (pred.ndim,) or (spacing <= 0).any():
        raise ValueError(f"need {pred.ndim} positive spacings, got {spacing_mm}")
    sp, sr = surface_mask(pred), surface_mask(ref)
    empty = np.empty(0)
    if not sp.any() and not sr.any():
        return SurfaceDistanceStats(empty, empty)
    if not sp.any() or not sr.any():
        return SurfaceDistanceStats(empty, empty, defined=False)
    if method == "edt":
        d_ref = ndimage.distance_transform_edt(~sr, sampling=spacing)
        d_pred = ndimage.distance_transform_edt(~sp, sampling=spacing)
        p2r, r2p = d_ref[sp], d_pred[sr]
    elif method == "brute":
        pp = np.argwhere(sp) * spacing
        rp = np.argwhere(sr) * spacing
        p2r, r2p = _brute_nearest(pp, rp), _brute_nearest(rp, pp)
    else:
        raise ValueError(f"unknown method {method!r}")
    return SurfaceDistanceStats(np.sort(p2r), np.sort(r2p))


def hd95(stats: SurfaceDistanceStats) -> Optional[float]:
    if not stats.defined:
        return None
    if stats.both_empty:
        return 0.0
    return float(np.percentile(stats.pooled, 95, method="linear"))


def nsd(stats: SurfaceDistanceStats, tau_mm: float = 1.0) -> float:
    if tau_mm <= 0:
        raise ValueError("tau must be positive")
    if not stats.defined:
        return 0.0
    if stats.both_empty:
        return 1.0
    within = np.count_nonzero(stats.pred_to_ref <= tau_mm) + np.count_nonzero(stats.ref_to_pred <= tau_mm)
    return within / (stats.pred_to_ref.size + stats.ref_to_pred.size)


# -- per-case and aggregate reports ----------------------------------------------------

@dataclass
class ClassMetrics:
    dsc: float
    iou: float
    hd95: Optional[float]
    nsd: float
    accuracy: float
    recall: float
    specificity: float
    precision: float
    present: bool  # class appears in prediction or reference
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0


def binary_metrics(pred_mask, ref_mask, spacing_mm, tau_mm: float = 1.0) -> ClassMetrics:
    pred_mask, ref_mask = np.asarray(pred_mask, bool), np.asarray(ref_mask, bool)
    c = confusion(pred_mask, ref_mask)
    stats = surface_distances(pred_mask, ref_mask, spacing_mm)
    return ClassMetrics(dice(c), iou(c), hd95(stats), nsd(stats, tau_mm), accuracy(c), recall(c),
                        specificity(c), precision(c), bool(pred_mask.any() or ref_mask.any()),
                        c.tp, c.fp, c.fn, c.tn)


def evaluate_case(pred, ref, spacing_mm, tau_mm: float = 1.0) -> dict[str, ClassMetrics]:
    """Metrics for tumor, cyst and the foreground union ('overall')."""
    pred, ref = np.asarray(pred), np.asarray(ref)
    if pred.shape != ref.shape:
        raise ValueError(f"prediction shape {pred.shape} does not match reference {ref.shape}")
    row = {CLASS_NAMES[c]: binary_metrics(pred == c, ref == c, spacing_mm, tau_mm) for c in FOREGROUND_CLASSES}
    row["overall"] = binary_metrics(pred != 0, ref != 0, spacing_mm, tau_mm)
    return row


METRIC_FIELDS = ("dsc", "iou", "hd95", "nsd", "accuracy", "recall", "specificity", "precision")


@dataclass
class MetricsReport:
    """Means over cases per group ('tumor', 'cyst', 'overall').

    Per-class means skip cases where the class is absent from both prediction
    and reference; HD95 means skip undefined values, counted in
    ``hd95_undefined``.
    """

    mean: dict[str, dict[str, Optional[float]]]
    n_cases: dict[str, int]
    hd95_undefined: dict[str, int]
    cases: dict[str, dict[str, dict]] = field(default_factory=dict)
    params: Optional[int] = None
    flops: Optional[float] = None

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    def table(self, name: str = "model") -> str:
        """Aligned text rows in the Table 1 / Table 2 column order (rates in %)."""
        def pct(v):
            return "   n/a" if v is None else f"{100 * v:6.2f}"

        def mm(v):
            return "   n/a" if v is None else f"{v:6.2f}"

        o = self.mean["overall"]
        params = "n/a" if self.params is None else f"{self.params / 1e6:.2f} M"
        flops = "n/a" if self.flops is None else f"{self.flops / 1e9:.2f} G"
        lines = [
            f"{'Method':<12} {'Params':>9} {'FLOPs':>9} {'DSC':>6} {'IoU':>6} {'HD95':>6} {'NSD':>6} "
            f"{'Acc':>6} {'Recall':>6} {'Spec':>6} {'Prec':>6}",
            f"{name:<12} {params:>9} {flops:>9} {pct(o['dsc'])} {pct(o['iou'])} {mm(o['hd95'])} "
            f"{pct(o['nsd'])} {pct(o['accuracy'])} {pct(o['recall'])} {pct(o['specificity'])} "
            f"{pct(o['precision'])}",
            "",
            f"{'Method':<12} {'T-DSC':>6} {'T-IoU':>6} {'T-HD95':>6} {'T-NSD':>6} "
            f"{'C-DSC':>6} {'C-IoU':>6} {'C-HD95':>6} {'C-NSD':>6}",
        ]
        t, c = self.mean["tumor"], self.mean["cyst"]
        lines.append(f"{name:<12} {pct(t['dsc'])} {pct(t['iou'])} {mm(t['hd95'])} {pct(t['nsd'])} "
                     f"{pct(c['dsc'])} {pct(c['iou'])} {mm(c['hd95'])} {pct(c['nsd'])}")
        return "\n".join(lines)


def aggregate(rows: dict[str, dict[str, ClassMetrics]], params: int | None = None,
              flops: float | None = None) -> MetricsReport:
    mean: dict[str, dict[str, Optional[float]]] = {}
    n_cases: dict[str, int] = {}
    undefined: dict[str, int] = {}
    for group in ("tumor", "cyst", "overall"):
        metrics = [rows[k][group] for k in sorted(rows)]
        if group != "overall":
            metrics = [m for m in metrics if m.present]
        n_cases[group] = len(metrics)
        undefined[group] = sum(m.hd95 is None for m in metrics)
        mean[group] = {}
        for f in METRIC_FIELDS:
            vals = [getattr(m, f) for m in metrics if getattr(m, f) is not None]
            mean[group][f] = float(np.mean(vals)) if vals else None
    cases = {k: {g: asdict(m) for g, m in rows[k].items()} for k in sorted(rows)}
    return MetricsReport(mean, n_cases, undefined, cases, params, flops)
