import json

import numpy as np
import pytest

from glupruner import Tensor2D, TensorFile, load_tensor_file, save_tensor_file
from glupruner.cli import run_cli


def make_weights(path, rng, d_hidden=8, d_int=16, layers=("",)):
    entries = {}
    for prefix in layers:
        entries[prefix + "gate"] = Tensor2D(
            rng.standard_normal((d_hidden, d_int)).astype(np.float32)
        )
        entries[prefix + "up"] = Tensor2D(
            rng.standard_normal((d_hidden, d_int)).astype(np.float32)
        )
        entries[prefix + "down"] = Tensor2D(
            rng.standard_normal((d_int, d_hidden)).astype(np.float32)
        )
    save_tensor_file(TensorFile(entries=entries), path)


def make_calib(path, rng, tokens=64, dim=8, batches=4):
    entries = {
        f"x.{k}": Tensor2D(
            rng.standard_normal((tokens // batches, dim)).astype(np.float32)
        )
        for k in range(batches)
    }
    save_tensor_file(TensorFile(entries=entries), path)


@pytest.fixture
def files(tmp_path, rng):
    w = tmp_path / "w.safetensors"
    c = tmp_path / "x.safetensors"
    make_weights(w, rng)
    make_calib(c, rng)
    return tmp_path, w, c


def test_prune_end_to_end(files, capsys):
    tmp, w, c = files
    out = tmp / "pruned.safetensors"
    rc = run_cli(
        [
            "prune", "--weights", str(w), "--calib", str(c),
            "--metric", "dass", "--alpha", "0.5", "--nm", "2:4",
            "--out", str(out),
        ]
    )
    assert rc == 0
    report = json.loads(capsys.readouterr().out)
    assert report["schema"] == "glupruner/1"
    assert report["layers"][0]["sparsity"]["gate"] == 0.5
    tf = load_tensor_file(out)
    assert set(tf.entries) == {
        "gate", "up", "down", "gate.mask", "up.mask", "down.mask"
    }
    # masks are 0/1 and consistent with the pruned weights
    gate = tf.entries["gate"].data
    gmask = tf.entries["gate.mask"].data
    assert set(np.unique(gmask)) <= {0.0, 1.0}
    assert not gate[gmask == 0.0].any()


def test_prune_synthetic_calibration(files, capsys):
    tmp, w, _ = files
    out = tmp / "pruned.safetensors"
    rc = run_cli(
        [
            "prune", "--weights", str(w),
            "--synthetic", "tokens=256,outliers=2,scale=8.0",
            "--metric", "wanda", "--sparsity", "0.5",
            "--seed", "7", "--out", str(out),
        ]
    )
    assert rc == 0
    assert json.loads(capsys.readouterr().out)["metric"] == "wanda"


def test_prune_determinism_across_threads(files, capsys, monkeypatch, rng):
    tmp, w, c = files
    manifest = tmp / "manifest.json"
    make_weights(w, rng, layers=("l0.", "l1."))
    manifest.write_text(
        json.dumps(
            [
                {"gate": "l0.gate", "up": "l0.up", "down": "l0.down"},
                {"gate": "l1.gate", "up": "l1.up", "down": "l1.down"},
            ]
        )
    )
    outputs = []
    reports = []
    for threads in ("1", "8", "1", "8"):
        monkeypatch.setenv("GLUPRUNER_THREADS", threads)
        out = tmp / "pruned.safetensors"
        rc = run_cli(
            [
                "prune", "--weights", str(w), "--calib", str(c),
                "--manifest", str(manifest), "--metric", "dass",
                "--nm", "2:4", "--seed", "3", "--out", str(out),
            ]
        )
        assert rc == 0
        reports.append(capsys.readouterr().out)
        outputs.append(out.read_bytes())
    assert len(set(outputs)) == 1
    assert len(set(reports)) == 1


def test_inspect_dumps_scores(files, capsys):
    tmp, w, c = files
    dump = tmp / "scores.safetensors"
    rc = run_cli(
        [
            "inspect", "--weights", str(w), "--calib", str(c),
            "--metric", "dass", "--dump-scores", str(dump),
        ]
    )
    assert rc == 0
    tf = load_tensor_file(dump)
    assert set(tf.entries) == {"gate.score", "up.score", "down.score"}
    assert np.all(tf.entries["gate.score"].data >= 0)
    report = json.loads(capsys.readouterr().out)
    assert report["command"] == "inspect"


def test_report_alpha_sweep_with_artifacts(files, capsys):
    tmp, w, c = files
    report_dir = tmp / "report"
    out = tmp / "report.json"
    rc = run_cli(
        [
            "report", "--weights", str(w), "--calib", str(c),
            "--metric", "dass", "--sweep-alpha", "0.25,0.5,0.75,1.0",
            "--nm", "2:4", "--out", str(out), "--report-dir", str(report_dir),
        ]
    )
    assert rc == 0
    report = json.loads(out.read_text())
    assert [r["alpha"] for r in report["rows"]] == [0.25, 0.5, 0.75, 1.0]
    assert (report_dir / "report.csv").exists()
    assert (report_dir / "error_vs_alpha.png").stat().st_size > 0
    with open(report_dir / "report.csv") as fh:
        header = fh.readline().strip().split(",")
    assert "relative_error" in header


def test_report_sparsity_sweep_figure(files, capsys):
    tmp, w, c = files
    report_dir = tmp / "report"
    rc = run_cli(
        [
            "report", "--weights", str(w), "--calib", str(c),
            "--metric", "wanda", "--sweep-sparsity", "0.4,0.6,0.8",
            "--sparsity", "0.5", "--report-dir", str(report_dir),
        ]
    )
    assert rc == 0
    rows = json.loads(capsys.readouterr().out)["rows"]
    assert [r["sparsity_spec"] for r in rows] == ["0.4", "0.6", "0.8"]
    assert (report_dir / "error_vs_sparsity.png").stat().st_size > 0


def test_calibrate_writes_norms(files, capsys):
    tmp, w, c = files
    out = tmp / "norms.safetensors"
    rc = run_cli(
        ["calibrate", "--weights", str(w), "--calib", str(c), "--out", str(out)]
    )
    assert rc == 0
    tf = load_tensor_file(out)
    assert set(tf.entries) == {"gate.input_norms", "gate.intermediate_norms"}
    assert tf.entries["gate.input_norms"].shape == (1, 8)
    assert tf.entries["gate.intermediate_norms"].shape == (1, 16)


def test_usage_error_exit_1(files, capsys):
    tmp, w, c = files
    # both --sparsity and --nm
    rc = run_cli(
        [
            "prune", "--weights", str(w), "--calib", str(c),
            "--sparsity", "0.5", "--nm", "2:4", "--out", str(tmp / "o.safetensors"),
        ]
    )
    assert rc == 1
    # unknown flag
    rc = run_cli(["prune", "--bogus"])
    assert rc == 1


def test_format_error_exit_2(files, tmp_path, capsys):
    tmp, w, c = files
    bad = tmp_path / "bad.safetensors"
    bad.write_bytes(b"\x01\x02")
    rc = run_cli(
        [
            "prune", "--weights", str(bad), "--calib", str(c),
            "--sparsity", "0.5", "--out", str(tmp / "o.safetensors"),
        ]
    )
    assert rc == 2


def test_missing_file_exit_2(files, capsys):
    tmp, w, c = files
    rc = run_cli(
        [
            "prune", "--weights", str(tmp / "nope.safetensors"), "--calib", str(c),
            "--sparsity", "0.5", "--out", str(tmp / "o.safetensors"),
        ]
    )
    assert rc == 2
