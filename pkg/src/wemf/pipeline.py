"""Dataset assembly, evaluation and the window x MFE ablation grid."""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .autodiff import Tensor
from .config import DataConfig, RunConfig
from .data import PhantomConfig, generate_phantom, make_splits, read_nrrd, write_nrrd
from .data.splits import read_manifest, write_manifest
from .metrics import MetricsReport, aggregate, evaluate_case
from .net import count_params, estimate_flops
from .train import Checkpoint, SliceSet, ValCase, predict_volume, train

log = logging.getLogger(__name__)


@dataclass
class Case:
    case_id: str
    hu: np.ndarray
    labels: np.ndarray
    spacing_mm: tuple[float, float, float]


def phantom_config(data: DataConfig, index: int) -> PhantomConfig:
    return PhantomConfig(dims=tuple(data.dims), spacing_mm=tuple(data.spacing_mm),
                         lesion_class=data.lesion_class, seed=data.seed * 100_003 + index)


def make_cases(data: DataConfig) -> list[Case]:
    """In-memory phantom cases named ``case000``, ``case001``, ..."""
    cases = []
    for i in range(data.cases):
        vol, lab = generate_phantom(phantom_config(data, i))
        cases.append(Case(f"case{i:03d}", vol.hu, lab.labels, vol.spacing_mm))
    return cases


def write_phantom_dataset(data: DataConfig, out_dir) -> Path:
    """Write image/label NRRD pairs plus ``manifest.json`` with the splits."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for i in range(data.cases):
        case_id = f"case{i:03d}"
        pcfg = phantom_config(data, i)
        vol, lab = generate_phantom(pcfg)
        write_nrrd(vol, out / f"{case_id}_image.nrrd")
        write_nrrd(lab, out / f"{case_id}_label.nrrd")
        entries.append({"id": case_id, "image": f"{case_id}_image.nrrd", "label": f"{case_id}_label.nrrd",
                        "seed": pcfg.seed})
    splits = make_splits([e["id"] for e in entries], data.ratios, data.seed)
    write_manifest(out / "manifest.json", entries, splits, lesion_class=data.lesion_class)
    return out / "manifest.json"


def load_dataset(data_dir) -> tuple[dict[str, Case], dict[str, list[str]]]:
    d = Path(data_dir)
    entries, splits, _ = read_manifest(d / "manifest.json")
    cases = {}
    for e in entries:
        vol = read_nrrd(d / e["image"])
        lab = read_nrrd(d / e["label"])
        if vol.dims != lab.dims:
            raise ValueError(f"{e['id']}: image {vol.dims} and label {lab.dims} differ")
        cases[e["id"]] = Case(e["id"], vol.hu, lab.labels, vol.spacing_mm)
    return cases, {"train": splits.train, "val": splits.val, "test": splits.test}


def memory_dataset(data: DataConfig) -> tuple[dict[str, Case], dict[str, list[str]]]:
    cases = {c.case_id: c for c in make_cases(data)}
    splits = make_splits(list(cases), data.ratios, data.seed)
    return cases, {"train": splits.train, "val": splits.val, "test": splits.test}


def training_slices(cases: list[Case], policy: str = "lesion") -> SliceSet:
    hus, labs = [], []
    for c in cases:
        for k in range(c.hu.shape[2]):
            if policy == "all" or c.labels[:, :, k].any():
                hus.append(c.hu[:, :, k])
                labs.append(c.labels[:, :, k])
    if not hus:
        raise ValueError("no training slices selected")
    return SliceSet(np.stack(hus), np.stack(labs))


def evaluate(cases: list[Case], cfg: RunConfig, weights: dict[str, np.ndarray],
             predictions: Optional[dict[str, np.ndarray]] = None) -> MetricsReport:
    """Score ``cases``; ``predictions`` overrides the model (debug use)."""
    tensors = {k: Tensor(v) for k, v in weights.items()} if weights else None
    windows = cfg.windows.resolve()
    rows = {}
    for c in cases:
        pred = predictions[c.case_id] if predictions is not None else \
            predict_volume(c.hu, cfg.model, tensors, windows)
        rows[c.case_id] = evaluate_case(pred, c.labels, c.spacing_mm, cfg.eval.tau_mm)
    params = count_params(weights) if weights else None
    return aggregate(rows, params, estimate_flops(cfg.model))


def run_training(cfg: RunConfig, cases: dict[str, Case], splits: dict[str, list[str]], out_dir=None,
                 on_step=None) -> Checkpoint:
    data = training_slices([cases[i] for i in splits["train"]], cfg.data.train_slices)
    val = [ValCase(cases[i].hu, cases[i].labels) for i in splits["val"]]
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        (Path(out_dir) / "config.json").write_text(cfg.dumps())
    return train(cfg.model, data, cfg.train, val, cfg.windows.resolve(), out_dir, on_step=on_step)


# -- ablation ------------------------------------------------------------------------

ABLATION_ROWS = {
    "default-window": ("single", False),
    "tri-window": ("tri", False),
    "default-window+MFE": ("single", True),
    "tri-window+MFE": ("tri", True),
}


def ablation_config(base: RunConfig, row: str, seed: int) -> RunConfig:
    mode, mfe = ABLATION_ROWS[row]
    return base.replace(windows={"mode": mode}, model={"mfe_enabled": mfe}, train={"seed": seed})


def run_ablation(base: RunConfig, cases: dict[str, Case], splits: dict[str, list[str]],
                 rows=tuple(ABLATION_ROWS), seeds=(0,), out_dir=None) -> dict:
    """Train and test every (row, seed); returns per-row means and the per-seed reports."""
    test_cases = [cases[i] for i in splits["test"]]
    results: dict[str, dict] = {}
    for row in rows:
        per_seed = []
        for seed in seeds:
            cfg = ablation_config(base, row, seed)
            run_dir = None if out_dir is None else Path(out_dir) / row / f"seed{seed}"
            t0 = time.time()
            ck = run_training(cfg, cases, splits, run_dir)
            weights = ck.best_weights if ck.best_weights is not None else ck.weights
            report = evaluate(test_cases, cfg, weights)
            elapsed = time.time() - t0
            log.info("%s seed %d: overall DSC %.4f (%.0f s)", row, seed, report.mean["overall"]["dsc"], elapsed)
            if run_dir is not None:
                (run_dir / "metrics.json").write_text(report.to_json() + "\n")
            per_seed.append({"seed": seed, "seconds": elapsed, "report": report})
        results[row] = {"runs": per_seed, "mean": _mean_overall([r["report"] for r in per_seed])}
    return results


def _mean_overall(reports: list[MetricsReport]) -> dict:
    out = {}
    for key in ("dsc", "iou", "hd95", "nsd", "accuracy", "recall", "specificity", "precision"):
        vals = [r.mean["overall"][key] for r in reports if r.mean["overall"][key] is not None]
        out[key] = float(np.mean(vals)) if vals else None
    out["params"] = reports[0].params
    out["flops"] = reports[0].flops
    return out


def ablation_table(results: dict) -> str:
    """Text table with the ablation column layout (window set, MFE, overall metrics)."""
    head = (f"{'Windows':<26} {'MFE':<4} {'Params':>9} {'FLOPs':>8} {'DSC':>6} {'IoU':>6} {'HD95':>6} {'NSD':>6} "
            f"{'Acc':>6} {'Recall':>6} {'Spec':>6} {'Prec':>6}")
    lines = [head]
    for row, res in results.items():
        mode, mfe = ABLATION_ROWS[row]
        m = res["mean"]
        wins = "default" if mode == "single" else "default+abdomen+spine"

        def pct(k):
            return "   n/a" if m[k] is None else f"{100 * m[k]:6.2f}"

        hd = "   n/a" if m["hd95"] is None else f"{m['hd95']:6.2f}"
        lines.append(f"{wins:<26} {'yes' if mfe else 'no':<4} {m['params'] / 1e6:7.3f} M {m['flops'] / 1e9:6.3f} G "
                     f"{pct('dsc')} {pct('iou')} {hd} {pct('nsd')} {pct('accuracy')} {pct('recall')} "
                     f"{pct('specificity')} {pct('precision')}")
    return "\n".join(lines)


def ablation_json(results: dict) -> str:
    doc = {row: {"mean": res["mean"],
                 "runs": [{"seed": r["seed"], "seconds": r["seconds"], "overall": r["report"].mean["overall"]}
                          for r in res["runs"]]}
           for row, res in results.items()}
    return json.dumps(doc, indent=2, sort_keys=True)
