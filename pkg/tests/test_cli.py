import hashlib
import json

import numpy as np
import pytest

from wemf import gradsuite
from wemf.cli import main
from wemf.data import HounsfieldVolume, write_nrrd
from wemf.data.nrrd import read_nrrd_array

TINY = {
    "data": {"cases": 4, "dims": [48, 48, 12], "ratios": [0.5, 0.25, 0.25]},
    "model": {"depths": [1, 1], "dims": [8, 16], "d_state": 2, "img_size": [48, 48]},
    "train": {"epochs": 1, "t_max": 1, "batch_size": 4, "lr0": 1e-3, "max_steps": 2},
}


@pytest.fixture(scope="module")
def tiny(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg = root / "tiny.json"
    cfg.write_text(json.dumps(TINY))
    assert main(["phantom", "--out", str(root / "data"), "--config", str(cfg)]) == 0
    return root, cfg


def _digest(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


def test_phantom_65_cases_split(tmp_path):
    assert main(["phantom", "--out", str(tmp_path), "--cases", "65", "--class", "mixed"]) == 0
    doc = json.loads((tmp_path / "manifest.json").read_text())
    assert len(doc["cases"]) == 65
    assert {k: len(v) for k, v in doc["splits"].items()} == {"train": 50, "val": 5, "test": 10}
    assert json.loads((tmp_path / "config.json").read_text())["data"]["cases"] == 65


def test_phantom_same_seed_hash_equal(tmp_path):
    for d in ("a", "b"):
        assert main(["phantom", "--out", str(tmp_path / d), "--cases", "3", "--seed", "7"]) == 0
    files = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert files == sorted(p.name for p in (tmp_path / "b").iterdir())
    assert all(_digest(tmp_path / "a" / f) == _digest(tmp_path / "b" / f) for f in files)


def test_phantom_zero_cases_is_usage_error(tmp_path):
    assert main(["phantom", "--out", str(tmp_path), "--cases", "0"]) == 1


def test_window_outputs(tmp_path):
    hu = np.full((4, 3, 2), 20, dtype=np.int16)
    hu[0, 0, 0], hu[1, 0, 0] = -1000, 1000
    write_nrrd(HounsfieldVolume(hu, (1.0, 1.0, 2.0)), tmp_path / "img.nrrd")
    prefix = tmp_path / "out" / "v"
    assert main(["window", "--in", str(tmp_path / "img.nrrd"), "--out", str(prefix)]) == 0
    for suffix in ("default", "abdomen", "spine"):
        arr, spacing = read_nrrd_array(tmp_path / "out" / f"v.{suffix}.nrrd")
        assert arr.dtype == np.uint8 and arr.shape == hu.shape and spacing == (1.0, 1.0, 2.0)
        assert arr[0, 0, 0] == 0 and arr[1, 0, 0] == 255
    # the spine window is centred at 20 HU: round(0.5 * 255) = 128
    assert read_nrrd_array(tmp_path / "out" / "v.spine.nrrd")[0][2, 1, 1] == 128
    assert read_nrrd_array(tmp_path / "out" / "v.composite.nrrd")[0].shape == (4, 9, 2)
    assert json.loads((tmp_path / "out" / "v.config.json").read_text())["windows"]["mode"] == "tri"


def test_window_rejects_label_volume(tiny, tmp_path):
    root, _ = tiny
    assert main(["window", "--in", str(root / "data" / "case000_label.nrrd"), "--out", str(tmp_path / "v")]) == 2


def test_eval_ref_as_pred_is_perfect(tiny, tmp_path):
    root, cfg = tiny
    out = tmp_path / "m.json"
    assert main(["eval", "--data", str(root / "data"), "--config", str(cfg), "--ref-as-pred",
                 "--split", "train", "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert doc["mean"]["overall"]["dsc"] == 1.0 and doc["mean"]["overall"]["nsd"] == 1.0
    assert doc["config"]["eval"]["split"] == "train"


def test_train_then_eval_tau_changes_only_nsd(tiny, tmp_path):
    root, cfg = tiny
    run = tmp_path / "run"
    assert main(["train", "--data", str(root / "data"), "--out", str(run), "--config", str(cfg)]) == 0
    for name in ("last.wemf", "best.wemf", "config.json", "val_metrics.json"):
        assert (run / name).exists(), name
    docs = []
    for tau in ("1.0", "2.0"):
        out = tmp_path / f"m{tau}.json"
        assert main(["eval", "--data", str(root / "data"), "--checkpoint", str(run / "last.wemf"),
                     "--tau", tau, "--out", str(out)]) == 0
        docs.append(json.loads(out.read_text()))
    a, b = docs[0]["mean"]["overall"], docs[1]["mean"]["overall"]
    for key in ("dsc", "iou", "hd95", "accuracy", "recall", "specificity", "precision"):
        assert a[key] == b[key], key
    assert b["nsd"] >= a["nsd"]
    assert docs[1]["config"]["eval"]["tau_mm"] == 2.0


def test_eval_requires_checkpoint(tiny):
    root, cfg = tiny
    assert main(["eval", "--data", str(root / "data"), "--config", str(cfg)]) == 1


def test_ablate_grid_has_four_rows(tiny, tmp_path, capsys):
    root, cfg = tiny
    assert main(["ablate", "--out", str(tmp_path), "--config", str(cfg), "--data", str(root / "data")]) == 0
    table = (tmp_path / "ablation.txt").read_text().splitlines()
    assert len(table) == 5
    for col in ("Params", "FLOPs", "DSC", "IoU", "HD95", "NSD", "Acc", "Recall", "Spec", "Prec"):
        assert col in table[0]
    doc = json.loads((tmp_path / "ablation.json").read_text())
    assert list(doc) == ["default-window", "default-window+MFE", "tri-window", "tri-window+MFE"]
    assert (tmp_path / "tri-window+MFE" / "seed0" / "metrics.json").exists()


def test_ablate_unknown_row(tmp_path, tiny):
    _, cfg = tiny
    assert main(["ablate", "--out", str(tmp_path), "--config", str(cfg), "--rows", "bogus"]) == 1


def test_gradcheck_passes():
    assert main(["gradcheck"]) == 0


def test_gradcheck_failure_exit_code(monkeypatch):
    monkeypatch.setattr(gradsuite, "run_suite",
                        lambda seed, only, log=None: [gradsuite.CheckResult("fake", 1.0, 1e-4, 0.0)])
    assert main(["gradcheck"]) == 3


def test_bench_schema(tmp_path):
    out = tmp_path / "bench.json"
    assert main(["bench", "--size", "64", "--min-seconds", "0.01", "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    kernels = {k["kernel"]: k for k in doc["kernels"]}
    assert {"dft2.fft", "dft2.direct", "selective_scan", "depthwise_conv2d", "forward"} <= set(kernels)
    assert all(k["ns_per_op"] > 0 for k in kernels.values())
    assert doc["fft_size"] == 64 and doc["fft_radix2"] and doc["fft_speedup"] > 0


def test_unknown_config_key_is_usage_error(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"train": {"learning_rate": 1.0}}))
    assert main(["phantom", "--out", str(tmp_path / "d"), "--config", str(bad)]) == 1
    bad.write_text(json.dumps({"extras": {}}))
    assert main(["phantom", "--out", str(tmp_path / "d"), "--config", str(bad)]) == 1


def test_argument_errors_exit_1():
    with pytest.raises(SystemExit) as exc:
        main(["phantom"])
    assert exc.value.code == 1
    with pytest.raises(SystemExit) as exc:
        main(["nonsense"])
    assert exc.value.code == 1


def test_missing_data_is_data_error(tmp_path):
    assert main(["eval", "--data", str(tmp_path / "nowhere"), "--ref-as-pred"]) == 2
