import json

import numpy as np
import pytest
from click.testing import CliRunner

from forcm.cli import main

SEG_ARGS = ["--min-size", "20", "--min-train-segments", "2"]


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def scene_files(tmp_path, runner):
    image = tmp_path / "scene.tif"
    mask = tmp_path / "truth.png"
    res = runner.invoke(main, [
        "synth", "--seed", "7", "--size", "48", "--bands", "4",
        "--n-blobs", "3", "--out-image", str(image), "--out-mask", str(mask),
    ])
    assert res.exit_code == 0, res.output
    return image, mask


def test_synth_reproducible_hashes(tmp_path, runner):
    payloads = []
    for sub in ("a", "b"):
        d = tmp_path / sub
        d.mkdir()
        res = runner.invoke(main, [
            "synth", "--seed", "7", "--size", "64", "--bands", "4",
            "--out-image", str(d / "s.tif"), "--out-mask", str(d / "m.tif"),
        ])
        assert res.exit_code == 0, res.output
        payloads.append(json.loads(res.output))
    assert payloads[0]["image_sha256"] == payloads[1]["image_sha256"]
    assert payloads[0]["mask_sha256"] == payloads[1]["mask_sha256"]


def test_synth_config_file_equivalent_to_flags(tmp_path, runner):
    cfg = tmp_path / "scene.cfg"
    cfg.write_text("seed = 7\nsize = 48\nbands = 4\nn_blobs = 3\n")
    res_cfg = runner.invoke(main, [
        "synth", "--config", str(cfg),
        "--out-image", str(tmp_path / "a.tif"), "--out-mask", str(tmp_path / "a_m.tif"),
    ])
    res_flags = runner.invoke(main, [
        "synth", "--seed", "7", "--size", "48", "--bands", "4", "--n-blobs", "3",
        "--out-image", str(tmp_path / "b.tif"), "--out-mask", str(tmp_path / "b_m.tif"),
    ])
    assert res_cfg.exit_code == 0 and res_flags.exit_code == 0
    a, b = json.loads(res_cfg.output), json.loads(res_flags.output)
    assert a["image_sha256"] == b["image_sha256"]
    assert a["mask_sha256"] == b["mask_sha256"]


def test_segment_stats_line(scene_files, tmp_path, runner):
    image, _ = scene_files
    out = tmp_path / "seg.tif"
    res = runner.invoke(main, ["segment", "--input", str(image),
                               "--spatial-radius", "5", "--range-radius", "5",
                               "--min-size", "20", "--out", str(out)])
    assert res.exit_code == 0, res.output
    stats = json.loads(res.output)
    assert stats["segment_count"] >= 1
    assert stats["min_size"] <= stats["median_size"] <= stats["max_size"]
    assert out.exists()


def test_segment_constant_image(tmp_path, runner):
    import tifffile
    path = tmp_path / "const.tif"
    tifffile.imwrite(path, np.full((16, 16), 0.5, dtype=np.float32))
    res = runner.invoke(main, ["segment", "--input", str(path),
                               "--out", str(tmp_path / "seg.tif")])
    assert res.exit_code == 0, res.output
    assert json.loads(res.output)["segment_count"] == 1


def test_segment_missing_input_exit_2(tmp_path, runner):
    res = runner.invoke(main, ["segment", "--input", str(tmp_path / "nope.tif"),
                               "--out", str(tmp_path / "seg.tif")])
    assert res.exit_code == 2


def test_run_obia_writes_artifacts(scene_files, tmp_path, runner):
    image, mask = scene_files
    out_dir = tmp_path / "run"
    res = runner.invoke(main, ["run", "--mode", "obia", "--input", str(image),
                               "--truth", str(mask), "--seed", "42",
                               *SEG_ARGS, "--out-dir", str(out_dir)])
    assert res.exit_code == 0, res.output
    report = json.loads(res.output)
    assert "oa" in report and report["mode"] == "obia"
    for name in ("prediction.tif", "metrics.json", "model.txt", "manifest.json"):
        assert (out_dir / name).exists()
    manifest = json.loads((out_dir / "manifest.json").read_text())
    assert manifest["seeds"] == {"sampling": 42, "svm": 43}
    assert "segment_ms" in manifest["timings_ms"]


def test_run_forcm_has_heatmap_features(scene_files, tmp_path, runner):
    image, mask = scene_files
    heat = tmp_path / "heat.tif"
    res = runner.invoke(main, ["pseudo-heatmap", "--input", str(image),
                               "--out", str(heat)])
    assert res.exit_code == 0, res.output
    out_dir = tmp_path / "run_f"
    res = runner.invoke(main, ["run", "--mode", "forcm", "--input", str(image),
                               "--truth", str(mask), "--heatmap", str(heat),
                               "--seed", "42", *SEG_ARGS,
                               "--out-dir", str(out_dir)])
    assert res.exit_code == 0, res.output
    model_text = (out_dir / "model.txt").read_text()
    assert "heat_mean" in model_text and "heat_std" in model_text


def test_run_mode_heatmap_mismatch_exit_2(scene_files, tmp_path, runner):
    image, mask = scene_files
    res = runner.invoke(main, ["run", "--mode", "forcm", "--input", str(image),
                               "--truth", str(mask),
                               "--out-dir", str(tmp_path / "x")])
    assert res.exit_code == 2
    res = runner.invoke(main, ["run", "--mode", "obia", "--input", str(image),
                               "--truth", str(mask), "--heatmap", str(image),
                               "--out-dir", str(tmp_path / "x")])
    assert res.exit_code == 2


def test_run_deterministic_outputs(scene_files, tmp_path, runner):
    image, mask = scene_files
    outputs = []
    for sub in ("r1", "r2"):
        out_dir = tmp_path / sub
        res = runner.invoke(main, ["run", "--mode", "obia", "--input", str(image),
                                   "--truth", str(mask), "--seed", "11",
                                   *SEG_ARGS, "--out-dir", str(out_dir)])
        assert res.exit_code == 0, res.output
        outputs.append(out_dir)
    a, b = outputs
    assert (a / "prediction.tif").read_bytes() == (b / "prediction.tif").read_bytes()
    assert (a / "metrics.json").read_bytes() == (b / "metrics.json").read_bytes()
    assert (a / "model.txt").read_bytes() == (b / "model.txt").read_bytes()


def test_evaluate_command(scene_files, tmp_path, runner):
    image, mask = scene_files
    out_dir = tmp_path / "run"
    runner.invoke(main, ["run", "--mode", "obia", "--input", str(image),
                         "--truth", str(mask), "--seed", "1", *SEG_ARGS,
                         "--out-dir", str(out_dir)])
    res = runner.invoke(main, ["evaluate", "--pred", str(out_dir / "prediction.tif"),
                               "--truth", str(mask)])
    assert res.exit_code == 0, res.output
    report = json.loads(res.output)
    assert set(report) >= {"tp", "fp", "fn", "tn", "oa", "mean_iou"}


def test_compare_flags_best(tmp_path, runner):
    base = {"mode": "obia", "seed": 0, "config_hash": "", "tp": 1, "fp": 1,
            "fn": 1, "tn": 1, "iou_forest": 0.5, "iou_nonforest": 0.5,
            "mean_iou": 0.5, "precision": 0.5, "recall": 0.5, "f1": 0.5}
    paths = []
    for name, oa in (("a", 0.9291), ("b", 0.9454), ("c", 0.9564)):
        p = tmp_path / f"{name}.json"
        p.write_text(json.dumps(dict(base, oa=oa)))
        paths.append(str(p))
    res = runner.invoke(main, ["compare", *paths])
    assert res.exit_code == 0, res.output
    lines = res.output.splitlines()
    c_line = [ln for ln in lines if "/c" in ln or ln.startswith("c")][0]
    assert "0.9564*" in c_line

    res = runner.invoke(main, ["compare", *paths, "--json"])
    payload = json.loads(res.output)
    assert payload["best"]["oa"] == [str(tmp_path / "c")]


def test_compare_requires_reports(runner):
    res = runner.invoke(main, ["compare"])
    assert res.exit_code == 2


def test_pseudo_heatmap_needs_four_bands(tmp_path, runner):
    import tifffile
    path = tmp_path / "rgb.tif"
    tifffile.imwrite(path, np.zeros((8, 8, 3), dtype=np.float32),
                     photometric="minisblack", planarconfig="contig")
    res = runner.invoke(main, ["pseudo-heatmap", "--input", str(path),
                               "--out", str(tmp_path / "h.tif")])
    assert res.exit_code == 1


def test_config_file_precedence(scene_files, tmp_path, runner):
    image, mask = scene_files
    config = tmp_path / "run.cfg"
    config.write_text("min_size = 20\nmin_train_segments = 2\nseed = 5\n")
    out_a = tmp_path / "a"
    res = runner.invoke(main, ["run", "--input", str(image), "--truth", str(mask),
                               "--config", str(config), "--out-dir", str(out_a)])
    assert res.exit_code == 0, res.output
    manifest = json.loads((out_a / "manifest.json").read_text())
    assert manifest["seeds"]["sampling"] == 5          # from config file
    assert manifest["config"]["min_size"] == 20

    out_b = tmp_path / "b"
    res = runner.invoke(main, ["run", "--input", str(image), "--truth", str(mask),
                               "--config", str(config), "--seed", "9",
                               "--out-dir", str(out_b)])
    assert res.exit_code == 0, res.output
    manifest = json.loads((out_b / "manifest.json").read_text())
    assert manifest["seeds"]["sampling"] == 9          # flag beats config file


def test_config_hash_stable_under_key_reordering(scene_files, tmp_path, runner):
    image, mask = scene_files
    cfg1 = tmp_path / "a.cfg"
    cfg1.write_text("min_size = 20\nmin_train_segments = 2\nseed = 3\n")
    cfg2 = tmp_path / "b.cfg"
    cfg2.write_text("seed = 3\nmin_train_segments = 2\nmin_size = 20\n")
    hashes = []
    for cfg, sub in ((cfg1, "h1"), (cfg2, "h2")):
        out_dir = tmp_path / sub
        res = runner.invoke(main, ["run", "--input", str(image), "--truth",
                                   str(mask), "--config", str(cfg),
                                   "--out-dir", str(out_dir)])
        assert res.exit_code == 0, res.output
        hashes.append(json.loads(res.output)["config_hash"])
    assert hashes[0] == hashes[1]


def test_stdout_is_json_only(scene_files, tmp_path, runner):
    image, mask = scene_files
    res = runner.invoke(main, ["run", "--mode", "obia", "--input", str(image),
                               "--truth", str(mask), "--seed", "1", *SEG_ARGS,
                               "--out-dir", str(tmp_path / "out")])
    json.loads(res.output)  # must parse cleanly
