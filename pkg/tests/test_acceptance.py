"""Acceptance checks. Each test prints one PASS/FAIL line and asserts it."""

import itertools
import math
import time

import numpy as np
import pytest
from conftest import ACCEPTANCE_LINES
from oracles import known_calibration, samples_from
from test_fitting import central_difference, random_coeffs

from ftind import coil, wire
from ftind.calibration import CalibrationDataset, calibrate
from ftind.cli import demo
from ftind.coil import VERTICAL_COIL, ResonantCircuit
from ftind.config import RunConfig
from ftind.errors import BadCrc, RateError
from ftind.fitting import Family, FitModel, fit_nls, jacobian
from ftind.metrics import crosstalk_matrix, full_scale_error, quantization_levels
from ftind.synth import (
    NoiseModel,
    SensorModel,
    axis_sweep,
    demo_schedule,
    generate_dataset,
    inject_coupling,
    sample_schedule,
    sqrt_inductance_curve,
)
from ftind.wire import RawFrame, decode_frame, encode_frame
from ftind.wrench import FULL_SCALE, HALF_RANGES


def verdict(n: int, ok: bool, detail: str, elapsed: float, limit: float):
    ok = ok and elapsed < limit
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}  [{elapsed:.2f} s / {limit:g} s]"
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert ok, line


def test_1_fit_family_ordering():
    t0 = time.perf_counter()
    x, gaps = sqrt_inductance_curve()
    reps = {f: fit_nls(f, x, gaps)[1] for f in Family}
    rmse = {f.value: r.rmse for f, r in reps.items()}
    rat = rmse["rational"]
    ok = (
        10 * rat <= rmse["sigmoid"]
        and 10 * rat <= rmse["gaussian"]
        and reps[Family.RATIONAL22].r_squared >= 0.9999
        and reps[Family.POLYNOMIAL4].r_squared < 0.999
    )
    detail = (
        "rmse " + " ".join(f"{k}={v:.4g}" for k, v in rmse.items())
        + f"; R2 rational={reps[Family.RATIONAL22].r_squared:.6f}"
        + f" polynomial={reps[Family.POLYNOMIAL4].r_squared:.6f}"
    )
    verdict(1, ok, detail, time.perf_counter() - t0, 5)


def test_2_quantization_levels():
    t0 = time.perf_counter()
    q_fx = quantization_levels(1780, 0.0347)
    q_tz = quantization_levels(90, 0.00163)
    ok = 51200 <= q_fx <= 51400 and 55050 <= q_tz <= 55350
    verdict(2, ok, f"Fx={q_fx} Tz={q_tz}", time.perf_counter() - t0, 1)


def test_3_calibration_recovery():
    t0 = time.perf_counter()
    truth = known_calibration()
    raw, w = samples_from(truth, 400, 1)
    cal, _ = calibrate(CalibrationDataset(raw, w))
    # held-out regular grid in normalised count space
    levels = np.linspace(0.05, 0.95, 4)
    grid_u = np.array(list(itertools.product(levels, repeat=6)))
    grid_raw = truth.raw_offset + truth.raw_scale * grid_u
    err = cal.decode_array(grid_raw, warn=False) - truth.decode_array(grid_raw, warn=False)
    clean = float(np.max(np.sqrt(np.mean(err**2, axis=0)) / FULL_SCALE))

    model = SensorModel()
    sigma = min(model.count_sigma_for_output(a, 0.0120) for a in (0, 1))
    noise = NoiseModel(sigma)
    train = generate_dataset(sample_schedule(demo_schedule(), 1000.0), model, noise, seed=21)
    held = generate_dataset(sample_schedule(demo_schedule(combined=12, seed=5), 1000.0),
                            model, noise, seed=22)
    cal_n, _ = calibrate(CalibrationDataset.from_dataset(train, zero_samples=100))
    pred = cal_n.decode_array(held.counts, warn=False)
    worst = max(e.max_pct for e in full_scale_error(pred, held.wrench))

    ok = clean < 1e-6 and worst < 1.0
    detail = (f"noise-free held-out rmse/FS={clean:.2e}; count sigma={sigma:.3f}, "
              f"noisy held-out FS max={worst:.4f}%")
    verdict(3, ok, detail, time.perf_counter() - t0, 120)


def test_4_jacobians():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst = 0.0
    for family in Family:
        for _ in range(100):
            m = FitModel(family, random_coeffs(family, rng))
            x = rng.uniform(0, 1, 5)
            j, fd = jacobian(m, x), central_difference(m, x)
            scale = max(np.max(np.abs(fd)), 1e-12)
            worst = max(worst, float(np.max(np.abs(j - fd) / np.maximum(np.abs(fd), 1e-3 * scale))))
    verdict(4, worst < 1e-5, f"max relative deviation {worst:.2e} over 400 draws",
            time.perf_counter() - t0, 10)


def test_5_coil_anchors():
    t0 = time.perf_counter()
    d_in = coil.inner_diameter(VERTICAL_COIL)
    k0 = coil.coupling_factor(0.0)
    f = coil.resonant_frequency(1 / (4 * math.pi**2), ResonantCircuit(1.0, 0.0))
    ind = coil.inductance_at_gaps(VERTICAL_COIL, np.linspace(1e-3, 20.0, 1000))
    ok = (
        abs(d_in - 2.6848) < 1e-9
        and abs(k0 - 1 / 1.001) <= 1e-12
        and abs(f - 1.0) <= 1e-12
        and bool(np.all(np.diff(ind) > 0))
    )
    detail = f"D_in={d_in:.6f} mm, k(0)-1/1.001={k0 - 1 / 1.001:.1e}, f-1={f - 1:.1e}"
    verdict(5, ok, detail, time.perf_counter() - t0, 1)


def _sweep_runs(model: SensorModel, cal) -> dict:
    runs = {}
    for axis in range(6):
        sched = sample_schedule(axis_sweep(axis, 0.9 * HALF_RANGES[axis], 0.0, 0.25), 1000.0)
        ds = generate_dataset(sched, model, rate=1000.0)
        runs[axis] = cal.decode_array(ds.counts, warn=False)
    return runs


def test_6_crosstalk_structure():
    t0 = time.perf_counter()
    base = SensorModel()
    train = generate_dataset(sample_schedule(demo_schedule(), 1000.0), base)
    cal, _ = calibrate(CalibrationDataset.from_dataset(train, zero_samples=100))

    m = crosstalk_matrix(_sweep_runs(base, cal))
    off = float(np.max(m[~np.eye(6, dtype=bool)]))
    diag_ok = bool(np.all(np.diag(m) == 100.0))

    coupled = SensorModel(kinematics=inject_coupling(base.kinematics, 0, 3, 0.5))
    mc = crosstalk_matrix(_sweep_runs(coupled, cal))
    ok = off < 0.01 and diag_ok and abs(mc[0, 3] - 0.5) <= 0.05
    detail = (f"decoupled max off-diagonal={off:.4f}%, diagonal exact={diag_ok}; "
              f"injected Fx->Tx={mc[0, 3]:.4f}%")
    verdict(6, ok, detail, time.perf_counter() - t0, 30)


def test_7_wire_codec():
    t0 = time.perf_counter()
    rng = np.random.default_rng(7)
    n = 1_000_000
    heads = rng.integers(0, 2**32, (n, 2), dtype=np.uint64).tolist()
    chans = rng.integers(0, 2**28, (n, 6), dtype=np.uint64).tolist()
    mismatches = 0
    for h, c in zip(heads, chans):
        f = RawFrame(h[0], h[1], tuple(c))
        if decode_frame(encode_frame(f)) != f:
            mismatches += 1

    frame = encode_frame(RawFrame(1, 2, (3, 4, 5, 6, 7, 8)))
    caught = 0
    for bit in range(len(frame) * 8):
        bad = bytearray(frame)
        bad[bit // 8] ^= 1 << (bit % 8)
        try:
            decode_frame(bytes(bad))
        except BadCrc:
            caught += 1

    frames = [RawFrame(k, 1000 * k, (k,) * 6) for k in range(1000)]
    stats = wire.replay(frames, 1000.0, lambda f: None)
    wire.replay(frames[:1], 4080.0, lambda f: None)
    try:
        wire.replay(frames[:1], 5000.0, lambda f: None)
        rejected = False
    except RateError:
        rejected = True

    ok = (mismatches == 0 and caught == 272 and abs(stats.elapsed_s - 1.0) <= 0.01
          and stats.dropped == 0 and rejected)
    detail = (f"{mismatches} mismatches in {n} frames, {caught}/272 flips caught, "
              f"replay {stats.elapsed_s:.4f} s with {stats.dropped} drops, "
              f"5000 Hz rejected={rejected}")
    verdict(7, ok, detail, time.perf_counter() - t0, 30)


def test_8_demo_determinism(tmp_path):
    t0 = time.perf_counter()
    cfg = RunConfig()
    demo(cfg, tmp_path / "a")
    demo(cfg, tmp_path / "b")
    csvs = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*.csv"))
    differ = [str(p) for p in csvs
              if (tmp_path / "a" / p).read_bytes() != (tmp_path / "b" / p).read_bytes()]
    ok = bool(csvs) and not differ
    detail = f"{len(csvs)} CSV files compared, differing: {differ or 'none'}"
    verdict(8, ok, detail, time.perf_counter() - t0, 60)


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q"]))
