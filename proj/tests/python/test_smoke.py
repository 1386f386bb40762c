# Copyright 2026 The iqkernel Authors
# SPDX-License-Identifier: Apache-2.0

import math

import numpy as np
import pytest

import iqkernel as iq


def test_integer_primitives():
    assert iq.i_sqrt(15) == 3
    assert iq.i_sqrt(16) == 4
    assert iq.floor_log2(256) == 8
    assert iq.fit_dyadic(1, 2) == (128, 8)
    assert iq.int_div(5, 5, 8) == 128
    values, unit = iq.di_exp([0, -64, -10_000], 128, 15)
    assert values[0] == unit
    assert values[0] >= values[1] >= values[2]


def test_quantize_round_trip():
    rng = np.random.default_rng(0)
    x = rng.uniform(-3, 3, size=(4, 32)).astype(np.float32)
    q = iq.quantize(x, 8, "per-token")
    assert q.data.dtype == np.uint8
    assert len(q.scales) == 4
    steps = np.array([m / 2.0**k for m, k in q.scales])
    assert np.all(np.abs(q.dequantize() - x) <= steps[:, None] + 1e-7)


def test_softmax_matches_float():
    rng = np.random.default_rng(1)
    logits = rng.integers(-128, 128, size=(64, 32))
    p = iq.softmax(logits, 200, 12)
    real = logits * 200 / 2.0**12
    ref = np.exp(real - real.max(axis=1, keepdims=True))
    ref /= ref.sum(axis=1, keepdims=True)
    assert np.max(np.abs(p - ref)) <= 0.047


def test_block_calibrate_and_compare():
    block = iq.make_toy_block(seed=3)
    calib = iq.make_toy_data(seed=3, sequences=64)
    evald = iq.make_toy_data(seed=3, sequences=4, stream=1)
    cb = iq.calibrate(block, calib, steps=3, seed=3)
    assert cb.qconfig == "W8A8"
    assert cb.final_loss <= cb.initial_loss
    y_int = iq.int_forward(cb, evald[0])
    y_ref = iq.float_forward(block, evald[0])
    rel = np.linalg.norm(y_int - y_ref) / np.linalg.norm(y_ref)
    assert rel < 0.08
    report = iq.compare_report(cb, evald, sweep_c=[15], trace_float=True)
    assert report["trace_float"]["violations"] == 0
    assert math.isfinite(report["end_to_end"]["mse"])
    assert report["sweep_c"][0]["softmax_max_abs"] <= 0.047


def test_errors_map_to_python_exceptions():
    with pytest.raises(ValueError):
        iq.quantize(np.zeros((2, 2), np.float32), 1)
    with pytest.raises(ValueError):
        iq.make_toy_block(d_model=10, n_heads=3)


def test_cli_entry_point(tmp_path):
    assert iq.cli_main(["gen-toy", "--seed", "1", "--out-dir", str(tmp_path), "--sequences", "2"]) == 0
    assert (tmp_path / "block.json").exists()
    assert iq.cli_main(["calibrate", "--model", str(tmp_path / "none.json"), "--calib", "x", "--out", "y"]) == 2
