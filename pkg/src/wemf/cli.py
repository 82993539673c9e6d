"""Command-line entry point: ``wemf <command> ...``.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 numerical-check failure.
"""

from __future__ import annotations

import os

# WEMF_THREADS caps the BLAS/OpenMP pools; it must be set before numpy loads
_threads = os.environ.get("WEMF_THREADS")
if _threads:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS", "NUMBA_NUM_THREADS"):
        os.environ.setdefault(_var, _threads)

import argparse  # noqa: E402
import json  # noqa: E402
import logging  # noqa: E402
import sys  # noqa: E402
from pathlib import Path  # noqa: E402

import numpy as np  # noqa: E402

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
WINDOW_SUFFIXES = ("default", "abdomen", "spine")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _write_json(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


# -- commands -----------------------------------------------------------------------

def cmd_phantom(args) -> int:
    from .config import load_config
    from .pipeline import write_phantom_dataset

    cfg = load_config(args.config)
    overrides = {k: v for k, v in (("cases", args.cases), ("seed", args.seed), ("lesion_class", args.lesion_class))
                 if v is not None}
    if args.cases is not None and args.cases < 1:
        raise UsageError("--cases must be at least 1")
    cfg = cfg.replace(data=overrides)
    manifest = write_phantom_dataset(cfg.data, args.out)
    (Path(args.out) / "config.json").write_text(cfg.dumps())
    print(f"wrote {cfg.data.cases} cases to {args.out} ({manifest.name})")
    return EXIT_OK


def cmd_window(args) -> int:
    from .config import load_config
    from .data import read_nrrd
    from .data.nrrd import write_nrrd_array
    from .data.volume import HounsfieldVolume
    from .windowing import apply_window

    cfg = load_config(args.config)
    vol = read_nrrd(args.input)
    if not isinstance(vol, HounsfieldVolume):
        raise ValueError(f"{args.input} holds labels, not HU values")
    windows = cfg.windows.resolve().windows
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    channels = []
    for suffix, spec in zip(WINDOW_SUFFIXES, windows):
        u8 = np.rint(apply_window(vol.hu, spec) * 255.0).astype(np.uint8)
        channels.append(u8)
        write_nrrd_array(u8, vol.spacing_mm, f"{args.out}.{suffix}.nrrd")
    # side-by-side composite along y for quick inspection in any NRRD viewer
    write_nrrd_array(np.concatenate(channels, axis=1), vol.spacing_mm, f"{args.out}.composite.nrrd")
    _write_json(Path(f"{args.out}.config.json"), cfg.to_dict())
    print(" ".join(f"{args.out}.{s}.nrrd" for s in WINDOW_SUFFIXES))
    return EXIT_OK


def cmd_train(args) -> int:
    from .config import load_config
    from .pipeline import evaluate, load_dataset, run_training

    cfg = load_config(args.config)
    cases, splits = load_dataset(args.data)
    out = Path(args.out)

    def on_step(rec):
        if rec["step"] % args.log_every == 0:
            print(json.dumps(rec), flush=True)

    ck = run_training(cfg, cases, splits, out, on_step)
    weights = ck.best_weights if ck.best_weights is not None else ck.weights
    report = evaluate([cases[i] for i in splits["val"]], cfg, weights) if splits["val"] else None
    if report is not None:
        (out / "val_metrics.json").write_text(report.to_json() + "\n")
        print(report.table("wemf"))
    print(f"checkpoints in {out} (best epoch {ck.best_epoch}, val DSC {ck.best_val_dsc:.4f})")
    return EXIT_OK


def cmd_eval(args) -> int:
    from .autodiff import load_params
    from .config import load_config
    from .pipeline import evaluate, load_dataset

    cases, splits = load_dataset(args.data)
    if args.ref_as_pred:
        cfg = load_config(args.config)
        weights = None
    else:
        if args.checkpoint is None:
            raise UsageError("--checkpoint is required unless --ref-as-pred is given")
        config_path = args.config or Path(args.checkpoint).with_name("config.json")
        cfg = load_config(config_path)
        weights = load_params(args.checkpoint)
    split = args.split or cfg.eval.split
    cfg = cfg.replace(eval={"split": split, **({"tau_mm": args.tau} if args.tau is not None else {})})
    subset = [cases[i] for i in splits[split]]
    if not subset:
        raise ValueError(f"split '{split}' is empty")
    preds = {c.case_id: c.labels for c in subset} if args.ref_as_pred else None
    report = evaluate(subset, cfg, weights, predictions=preds)
    doc = json.loads(report.to_json())
    doc["config"] = cfg.to_dict()
    if args.out:
        _write_json(Path(args.out), doc)
    print(report.table("wemf"))
    return EXIT_OK


def cmd_ablate(args) -> int:
    from .config import load_config
    from .pipeline import (ABLATION_ROWS, ablation_json, ablation_table, load_dataset, memory_dataset,
                           run_ablation)

    cfg = load_config(args.config)
    rows = args.rows or list(ABLATION_ROWS)
    unknown = [r for r in rows if r not in ABLATION_ROWS]
    if unknown:
        raise UsageError(f"unknown ablation row(s): {', '.join(unknown)}; choose from {', '.join(ABLATION_ROWS)}")
    cases, splits = load_dataset(args.data) if args.data else memory_dataset(cfg.data)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(cfg.dumps())
    results = run_ablation(cfg, cases, splits, rows, tuple(args.seeds), out)
    (out / "ablation.json").write_text(ablation_json(results) + "\n")
    table = ablation_table(results)
    (out / "ablation.txt").write_text(table + "\n")
    print(table)
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    from .gradsuite import run_suite

    results = run_suite(args.seed, args.only, log=print)
    if not results:
        raise UsageError(f"no gradient check matches {args.only!r}")
    failed = [r.name for r in results if not r.ok]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return EXIT_NUMERIC if failed else EXIT_OK


def cmd_bench(args) -> int:
    from .bench import run_bench

    doc = run_bench(args.min_seconds, args.size)
    text = json.dumps(doc, indent=2, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text)
    return EXIT_OK


# -- parser ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="wemf", description="Tri-window VSS segmentation with multi-frequency skip enhancement.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("phantom", help="generate a synthetic NRRD dataset with a split manifest")
    s.add_argument("--out", required=True)
    s.add_argument("--cases", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--class", dest="lesion_class", choices=("tumor", "cyst", "mixed"))
    s.add_argument("--config")
    s.set_defaults(func=cmd_phantom)

    s = sub.add_parser("window", help="write the three windowed views of a volume as uchar NRRDs")
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--out", required=True, help="output prefix")
    s.add_argument("--config")
    s.set_defaults(func=cmd_window)

    s = sub.add_parser("train", help="train on a dataset directory")
    s.add_argument("--data", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--config")
    s.add_argument("--log-every", type=int, default=10)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("eval", help="score a checkpoint on a split")
    s.add_argument("--data", required=True)
    s.add_argument("--checkpoint")
    s.add_argument("--config")
    s.add_argument("--split", choices=("train", "val", "test"))
    s.add_argument("--tau", type=float, help="NSD tolerance in mm")
    s.add_argument("--out", help="write the metrics JSON here")
    s.add_argument("--ref-as-pred", action="store_true", help="debug: score the reference against itself")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("ablate", help="window x MFE ablation grid")
    s.add_argument("--out", required=True)
    s.add_argument("--config")
    s.add_argument("--data", help="dataset directory (default: generate in memory from the config)")
    s.add_argument("--seeds", type=int, nargs="+", default=[0])
    s.add_argument("--rows", nargs="+", help="subset of rows to run")
    s.set_defaults(func=cmd_ablate)

    s = sub.add_parser("gradcheck", help="finite-difference gradient suite")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--only", help="run checks whose name contains this string")
    s.set_defaults(func=cmd_gradcheck)

    s = sub.add_parser("bench", help="kernel microbenchmarks (JSON)")
    s.add_argument("--size", type=int, default=256)
    s.add_argument("--min-seconds", type=float, default=0.5)
    s.add_argument("--out")
    s.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    from .autodiff import NonFiniteError
    from .autodiff.checkpoint import CheckpointError
    from .config import ConfigError
    from .data.nrrd import NRRDError

    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"wemf: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NonFiniteError as exc:
        print(f"wemf: numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (NRRDError, CheckpointError, OSError, KeyError, ValueError) as exc:
        print(f"wemf: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
