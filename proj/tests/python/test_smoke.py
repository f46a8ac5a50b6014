"""Smoke tests for the python bindings: import, config round trip, check
suite, a tiny end-to-end run and checkpoint evaluation."""

import json
import os

import pytest

symmetria = pytest.importorskip("symmetria")


def test_version_string():
    v = symmetria.version()
    assert v.startswith("symmetria ")


def test_canonical_config_fixed_point():
    text = json.dumps({"task": {"canvas": 12, "seed": 5}})
    canon = symmetria.canonical_config(text)
    doc = json.loads(canon)
    assert doc["task"]["canvas"] == 12
    assert doc["train"]["mode"] == "laplace"
    assert symmetria.canonical_config(canon) == canon


def test_bad_config_raises():
    with pytest.raises(Exception, match="unknown key"):
        symmetria.canonical_config(json.dumps({"task": {}, "bogus": 1}))


def test_glyph_bitmaps():
    assert symmetria.glyph_count() == 4
    bm = symmetria.glyph_bitmap(0)
    assert len(bm) == 5 and all(len(r) == 5 for r in bm)
    assert all(v in (0.0, 1.0) for r in bm for v in r)


def test_check_suite_marglik():
    rows = symmetria.check("marglik", seed=3)
    assert rows and all(r["pass"] for r in rows)
    names = {r["name"] for r in rows}
    assert "marglik.hypergrad_fd" in names


def test_tiny_run_and_eval(tmp_path):
    out = tmp_path / "run"
    cfg = {
        "task": {"canvas": 12, "seed": 9, "train_size": 64, "test_size": 32},
        "architecture": {"alpha": 1, "menus": ["FC", "CONV"]},
        "train": {"mode": "map", "epochs": 2, "batch": 32, "seed": 9},
        "output_dir": str(out),
    }
    summary = symmetria.run_config(cfg)
    assert summary["epochs_run"] == 2
    assert os.path.exists(out / "metrics.csv")
    assert os.path.exists(out / "report.json")

    metrics = json.loads(symmetria.eval_checkpoint(str(out / "checkpoint.bin"), "test"))
    assert metrics["examples"] == 32
    assert metrics["acc"] == pytest.approx(summary["test_acc"])

    text, report = symmetria.inspect(str(out / "checkpoint.bin"), False)
    assert "epoch" in text
    assert report == ""


def test_generate_glyphs_idx(tmp_path):
    images = str(tmp_path / "imgs.idx")
    labels = str(tmp_path / "lbls.idx")
    classes = symmetria.generate_glyphs(12, "class_and_quadrant", "none", 2, 32, images, labels)
    assert classes == 16
    assert os.path.getsize(images) == 16 + 32 * 12 * 12
    assert os.path.getsize(labels) == 8 + 32
