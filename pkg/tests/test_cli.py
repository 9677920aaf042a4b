import csv
import json

import numpy as np
import pytest

from corpus import write_corpus
from harmamba.cli import main
from harmamba.data import DatasetManifest, read_harw

TOY = {"name": "toy", "n_classes": 3, "rate_hz": 20.0, "window": 40, "patch_len": 8,
       "channels": ["ax", "ay", "az"]}


@pytest.fixture
def toy(tmp_path):
    (tmp_path / "toy.json").write_text(json.dumps(TOY))
    write_corpus(tmp_path / "csv", DatasetManifest.from_dict(TOY), n_recordings=2, windows_per_recording=10)
    return tmp_path


def tiny_config(tmp_path, **extra):
    cfg = {"data": {"n_classes": 3, "n_channels": 2, "window": 32, "n_per_class": 20},
           "model": {"d_model": 8, "d_state": 4, "n_layers": 1, "patch_len": 8},
           "train": {"epochs": 1, "batch_size": 16}}
    for k, v in extra.items():
        cfg.setdefault(k, {}).update(v) if isinstance(v, dict) else cfg.__setitem__(k, v)
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    return str(path)


# exit codes -------------------------------------------------------------------------

def test_missing_manifest_is_usage_error(tmp_path, capsys):
    missing = tmp_path / "nope.json"
    code = main(["preprocess", "--manifest", str(missing), "--input-dir", str(tmp_path), "--out", str(tmp_path)])
    assert code == 2 and str(missing) in capsys.readouterr().err


def test_unknown_flag_is_usage_error(capsys):
    assert main(["train", "--bogus"]) == 2
    assert main([]) == 2


def test_config_errors_listed_together(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"trian": {}, "model": {"n_channels": 3, "d_model": "big"},
                                "train": {"seed": 1, "epochs": 0}}))
    assert main(["train", "--config", str(path)]) == 2
    err = capsys.readouterr().err
    for needle in ("'trian'", "model.n_channels", "model.d_model", "train.seed", "train.epochs"):
        assert needle in err


def test_bad_log_level(monkeypatch):
    monkeypatch.setenv("SSMHAR_LOG", "loud")
    assert main(["gradcheck"]) == 2


def test_ingest_error_is_runtime_failure(toy, capsys):
    bad = toy / "csv" / "subject0.csv"
    lines = bad.read_text().splitlines()
    lines[5] = lines[5].replace(lines[5].split(",")[2], "oops", 1)
    bad.write_text("\n".join(lines) + "\n")
    code = main(["preprocess", "--manifest", str(toy / "toy.json"), "--input-dir", str(toy / "csv"),
                 "--out", str(toy / "out")])
    err = capsys.readouterr().err
    assert code == 1 and "subject0.csv" in err and "line 6" in err


def test_unknown_suite_is_usage_error(tmp_path, capsys):
    assert main(["ablate", "--config", tiny_config(tmp_path), "--suite", "depth"]) == 2
    assert "directionality" in capsys.readouterr().err


def test_missing_checkpoint(tmp_path):
    assert main(["eval", "--checkpoint", str(tmp_path / "none"), "--out", str(tmp_path)]) == 2


# preprocess --------------------------------------------------------------------------

def test_preprocess_counts_and_rerun_identical(toy):
    args = ["preprocess", "--manifest", str(toy / "toy.json"), "--input-dir", str(toy / "csv")]
    assert main(args + ["--out", str(toy / "a")]) == 0
    assert main(args + ["--out", str(toy / "b")]) == 0
    for name in ("toy.harw", "toy.harw.json"):
        assert (toy / "a" / name).read_bytes() == (toy / "b" / name).read_bytes()
    ds = read_harw(toy / "a" / "toy.harw")
    # 10 windows per recording split 7/1/2; the lone val window overlaps train and is dropped
    assert [len(ds.split(s)[0]) for s in ("train", "val", "test")] == [14, 0, 4]
    side = json.loads((toy / "a" / "toy.harw.json").read_text())
    assert set(side["stats"]) == {"mean", "std"} and side["patch_len"] == 8
    assert sorted(side["boundaries"]) == ["subject0", "subject1"]


def test_preprocess_no_overlap(toy):
    assert main(["preprocess", "--manifest", str(toy / "toy.json"), "--input-dir", str(toy / "csv"),
                 "--overlap", "0", "--out", str(toy / "o")]) == 0
    ds = read_harw(toy / "o" / "toy.harw")
    assert [len(ds.split(s)[0]) for s in ("train", "val", "test")] == [6, 2, 2]


# train / eval / ablate / bench ------------------------------------------------------------

def test_train_then_eval(tmp_path):
    cfg = tiny_config(tmp_path)
    out = tmp_path / "run"
    assert main(["train", "--config", cfg, "--out", str(out), "--epochs", "2"]) == 0
    rows = list(csv.reader(open(out / "train_log.csv")))
    assert len(rows) == 3
    assert json.loads((out / "run_config.json").read_text())["train"]["epochs"] == 2
    for f in ("best/model.ssmh", "best/model.json", "test_report.json", "training.png"):
        assert (out / f).exists()
    assert main(["eval", "--config", cfg, "--checkpoint", str(out / "best"), "--out", str(out),
                 "--split", "val"]) == 0
    rep = json.loads((out / "eval_val.json").read_text())
    assert rep["n"] == 6 and np.asarray(rep["confusion"]).sum() == 6
    assert (out / "confusion_val.png").stat().st_size > 0


def test_train_rerun_identical(tmp_path):
    cfg = tiny_config(tmp_path)
    for d in ("a", "b"):
        assert main(["train", "--config", cfg, "--out", str(tmp_path / d), "--seed", "3"]) == 0
    for f in ("train_log.csv", "best/model.ssmh", "best/model.json", "test_report.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_synth_writes_harw(tmp_path):
    assert main(["synth", "--config", tiny_config(tmp_path), "--out", str(tmp_path)]) == 0
    ds = read_harw(tmp_path / "synthetic.harw")
    assert ds.counts()["train"] == [14, 14, 14]


def test_ablate_directionality(tmp_path):
    out = tmp_path / "abl"
    assert main(["ablate", "--config", tiny_config(tmp_path), "--suite", "directionality", "--seeds", "0",
                 "--out", str(out)]) == 0
    rows = list(csv.DictReader(open(out / "ablation_directionality.csv")))
    assert [r["variant"] for r in rows] == ["SSM", "Bidirectional SSM", "Bidirectional SSM + Conv1D"]
    assert (out / "ablation_directionality.png").exists()


def test_bench_lengths(tmp_path):
    out = tmp_path / "bench"
    assert main(["bench", "--manifest", "uci", "--config", tiny_config(tmp_path), "--lengths", "128,256,512,1024",
                 "--out", str(out)]) == 0
    rep = json.loads((out / "bench.json").read_text())
    assert [r["window"] for r in rep["reports"]] == [128, 256, 512, 1024]
    assert all(r["peak_bytes"] > 0 for r in rep["reports"])
    assert rep["model"]["n_channels"] == 9 and (out / "bench.png").exists()


def test_gradcheck_passes(capsys):
    assert main(["gradcheck", "--probes", "3"]) == 0
    assert "gradient checks passed" in capsys.readouterr().out
