"""End-to-end smoke tests for the python module and the CLI binary."""

import json
import math
import os
import subprocess
import sys

import numpy as np
import pytest

import stib

CLI = os.environ.get("STIB_CLI")


def tiny_config(**overrides):
    cfg = stib.default_config()
    cfg.update(
        hidden_layers=1,
        hidden_width=8,
        batch_size=64,
        epochs=2,
        seed=7,
    )
    cfg.update(overrides)
    return cfg


def test_version():
    assert stib.__version__


def test_gen_spiral_deterministic():
    x1, y1 = stib.gen_spiral(256, seed=3)
    x2, y2 = stib.gen_spiral(256, seed=3)
    assert x1.shape == (256, 2) and y1.shape == (256, 2)
    assert np.array_equal(x1, x2) and np.array_equal(y1, y2)
    x3, _ = stib.gen_spiral(256, seed=4)
    assert not np.array_equal(x1, x3)


def test_digamma_and_closed_form():
    assert abs(stib.digamma(1.0) + 0.5772156649) < 1e-9
    assert abs(stib.gaussian_mi_closed_form(0.6) - 0.321928) < 1e-5


def test_ksg_against_gaussian():
    rng = np.random.default_rng(11)
    n = 3000
    x = rng.standard_normal((n, 1))
    y = 0.8 * x + math.sqrt(1 - 0.64) * rng.standard_normal((n, 1))
    mi = stib.ksg_mi(x, y, k=3)
    assert abs(mi - stib.gaussian_mi_closed_form(0.8)) < 0.12
    z = rng.standard_normal((n, 1))
    assert abs(stib.ksg_mi(x, z)) < 0.06


def test_sample_correlation_matches_numpy():
    rng = np.random.default_rng(5)
    x = rng.standard_normal((200, 3))
    ours = stib.sample_correlation(x)
    theirs = np.corrcoef(x, rowvar=False)
    assert np.allclose(ours, theirs, atol=1e-12)


def test_cholesky():
    a = np.array([[4.0, 2.0], [2.0, 3.0]])
    l = stib.cholesky(a)
    assert np.allclose(l @ l.T, a, atol=1e-12)
    with pytest.raises(ArithmeticError):
        stib.cholesky(np.ones((2, 2)))


def test_fit_evaluate_roundtrip(tmp_path):
    x, y = stib.gen_spiral(512, seed=9)
    model = stib.fit(tiny_config(), x, y)
    metrics = model.evaluate(x, y)
    for key in ("mae_x", "mae_y", "mi_gauss_bits", "mi_ksg_bits"):
        assert math.isfinite(metrics[key])
    assert len(model.trace) == 2

    mu, logvar = model.encode(x[:8])
    assert mu.shape == (8, 3)
    assert np.all(np.abs(logvar) <= 10.0)
    xhat = model.decode(mu)
    assert xhat.shape == (8, 2)

    table = model.traverse(x[:1], lo=-2.0, hi=2.0, steps=11)
    assert len(table["t"]) == 11
    assert table["ydec"].shape == (11, 2)

    path = str(tmp_path / "model.stib")
    model.save(path)
    again = stib.Model.load(path)
    m2 = again.evaluate(x, y)
    assert m2 == metrics

    # Determinism: same config and data, same parameters.
    model2 = stib.fit(tiny_config(), x, y)
    assert model2.evaluate(x, y) == metrics


def test_config_validation():
    with pytest.raises(RuntimeError):
        stib.fit(dict(tiny_config(), nope=1), *stib.gen_spiral(256, seed=1))
    bad = tiny_config(batch_size=3)
    with pytest.raises(RuntimeError):
        stib.fit(bad, *stib.gen_spiral(256, seed=1))


@pytest.mark.skipif(CLI is None, reason="STIB_CLI not set")
def test_cli_pipeline(tmp_path):
    def run(*args):
        proc = subprocess.run(
            [CLI, *args], capture_output=True, text=True, timeout=300
        )
        assert proc.returncode == 0, proc.stderr
        return proc.stdout

    train_csv = str(tmp_path / "train.csv")
    test_csv = str(tmp_path / "test.csv")
    run("gen", "--n", "512", "--seed", "5", "--out", train_csv)
    run("gen", "--n", "256", "--seed", "6", "--out", test_csv)

    # gen is byte-stable
    other = str(tmp_path / "again.csv")
    run("gen", "--n", "512", "--seed", "5", "--out", other)
    assert open(train_csv, "rb").read() == open(other, "rb").read()

    cfg_path = str(tmp_path / "cfg.json")
    json.dump(tiny_config(), open(cfg_path, "w"))

    model = str(tmp_path / "model.stib")
    metrics = str(tmp_path / "metrics.json")
    run("train", "--config", cfg_path, "--data", train_csv, "--test", test_csv,
        "--model", model, "--metrics", metrics)
    payload = json.load(open(metrics))
    assert "payload" in payload and "wall_clock_seconds" in payload
    assert payload["payload"]["config"]["epochs"] == 2

    eval_metrics = str(tmp_path / "eval.json")
    run("eval", "--model", model, "--data", test_csv, "--metrics", eval_metrics)

    traverse_csv = str(tmp_path / "traverse.csv")
    run("traverse", "--model", model, "--data", test_csv, "--index", "0",
        "--grid", "-3:3:61", "--out", traverse_csv)
    lines = open(traverse_csv).read().splitlines()
    assert lines[0] == "t,xhat0,xhat1,yhat0,yhat1,ydec0,ydec1"
    assert len(lines) == 62

    report = run("report", "--metrics", metrics, eval_metrics)
    assert "mi_ksg_bits" in report

    # Unknown config keys fail loudly with a nonzero exit code.
    bad_cfg = str(tmp_path / "bad.json")
    json.dump(dict(tiny_config(), typo_key=1), open(bad_cfg, "w"))
    proc = subprocess.run(
        [CLI, "train", "--config", bad_cfg, "--data", train_csv,
         "--model", model, "--metrics", metrics],
        capture_output=True, text=True, timeout=300,
    )
    assert proc.returncode != 0
    assert "typo_key" in proc.stderr
