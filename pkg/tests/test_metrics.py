import itertools

import numpy as np
import pytest

from ftind.errors import DegenerateWindow, DomainError, LengthMismatch, MissingRun
from ftind.metrics import (
    AxisRanges,
    EvalReport,
    align_series,
    crosstalk_matrix,
    evaluate,
    full_scale_error,
    implied_sigma_multiplier,
    quantization_levels,
    resolution_from_noise,
    single_axis_segments,
)
from ftind.wrench import FULL_SCALE


def test_default_spans():
    assert AxisRanges().spans == (1780.0, 1780.0, 2870.0, 54.0, 54.0, 90.0)
    with pytest.raises(ValueError):
        AxisRanges((1, 2, 3))


class TestFullScaleError:
    def test_identical(self):
        ref = np.random.default_rng(0).normal(size=(20, 6))
        assert all(e.max_pct == 0 and e.rmse == 0 for e in full_scale_error(ref, ref))

    def test_offset_on_fx(self):
        ref = np.zeros((10, 6))
        test = ref.copy()
        test[:, 0] += 1.78
        e = full_scale_error(test, ref)[0]
        assert e.mean_pct == pytest.approx(0.1) and e.max_pct == pytest.approx(0.1)
        assert e.std_pct == pytest.approx(0.0, abs=1e-15)
        assert e.rmse == pytest.approx(1.78)

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            full_scale_error(np.zeros((3, 6)), np.zeros((4, 6)))

    def test_max_ge_mean(self):
        rng = np.random.default_rng(1)
        for e in full_scale_error(rng.normal(size=(50, 6)), rng.normal(size=(50, 6))):
            assert e.max_pct >= e.mean_pct >= 0


class TestResolution:
    def test_constant_series(self):
        assert np.all(resolution_from_noise(np.ones((10, 6))) == 0)

    def test_quoted_resolution_pair(self):
        assert 2.89 * 0.0120 == pytest.approx(0.0347, abs=1e-4)
        series = np.array([-1.0, 1.0]) * 0.0120 / np.sqrt(2)  # sample std exactly 0.0120
        assert resolution_from_noise(series, 2.89)[0] == pytest.approx(0.03468, rel=1e-12)
        assert implied_sigma_multiplier(0.0347, 0.0120) == pytest.approx(2.8917, abs=1e-4)

    def test_statistical_oracle(self):
        x = np.random.default_rng(4).normal(scale=0.25, size=(10_000, 6))
        assert np.allclose(resolution_from_noise(x, 1.0), 0.25, rtol=0.05)

    def test_linear_in_k_and_sigma(self):
        x = np.random.default_rng(2).normal(size=(100, 6))
        r = resolution_from_noise(x, 1.0)
        assert np.allclose(resolution_from_noise(x, 3.0), 3 * r)
        assert np.allclose(resolution_from_noise(5 * x, 1.0), 5 * r)

    def test_errors(self):
        with pytest.raises(DegenerateWindow):
            resolution_from_noise(np.zeros((1, 6)))
        with pytest.raises(DomainError):
            resolution_from_noise(np.zeros((5, 6)), 0.0)


class TestQuantization:
    def test_reference_spans(self):
        assert quantization_levels(1780, 0.0347) == 51296
        assert quantization_levels(90, 0.00163) == 55214

    def test_degenerate(self):
        assert quantization_levels(7.3, 7.3) == 1

    def test_monotone(self):
        res = np.linspace(0.01, 1.0, 200)
        q = [quantization_levels(1780, r) for r in res]
        assert all(a >= b for a, b in itertools.pairwise(q))

    def test_errors(self):
        with pytest.raises(DomainError):
            quantization_levels(0, 1)
        with pytest.raises(DomainError):
            quantization_levels(1, -1)


def _runs(coupling=None):
    runs = {}
    ramp = np.linspace(0, 1, 101)
    for i in range(6):
        out = np.zeros((101, 6))
        out[:, i] = ramp * FULL_SCALE[i] / 2
        if coupling and i == coupling[0]:
            out[:, coupling[1]] = ramp * coupling[2] / 100 * FULL_SCALE[coupling[1]] / 2
        runs[i] = out
    return runs


class TestCrosstalk:
    def test_identity(self):
        assert np.array_equal(crosstalk_matrix(_runs()), 100 * np.eye(6))

    def test_injected(self):
        m = crosstalk_matrix(_runs((0, 3, 0.5)))
        assert m[0, 3] == pytest.approx(0.5)
        assert np.all(np.diag(m) == 100)

    def test_missing_run(self):
        runs = _runs()
        del runs[4]
        with pytest.raises(MissingRun):
            crosstalk_matrix(runs)

    def test_baseline(self):
        runs = {i: r + 3.0 for i, r in _runs().items()}
        m = crosstalk_matrix(runs, baseline=np.full(6, 3.0))
        assert np.allclose(m, 100 * np.eye(6))

    def test_time_shift_invariant(self):
        runs = _runs((2, 5, 1.0))
        shifted = {i: np.roll(r, 17, axis=0) for i, r in runs.items()}
        assert np.array_equal(crosstalk_matrix(runs), crosstalk_matrix(shifted))

    def test_segments(self):
        ref = np.zeros((4, 6))
        ref[1, 0] = 500
        ref[2, [0, 1]] = 500
        seg = single_axis_segments(ref)
        assert seg[0].tolist() == [1] and seg[1].size == 0


class TestEvaluate:
    def test_align(self):
        t_ref = np.arange(0, 10_000, 1000)
        ref = np.arange(10.0)[:, None].repeat(6, 1)
        t_test = t_ref + 300
        test, ref_a = align_series(t_test, ref, t_ref, ref)
        assert np.array_equal(test, ref_a)
        test, _ = align_series(t_ref + 5000, ref, t_ref, ref)
        assert len(test) == 6  # 10 ms sample sits exactly at the 1 ms skew limit

    def test_report_round_trip(self):
        ref = np.concatenate([np.zeros((50, 6)), *[r for r in _runs().values()]])
        rng = np.random.default_rng(0)
        test = ref + rng.normal(scale=1e-4, size=ref.shape)
        rep = evaluate(test, ref, test[:50])
        assert rep.crosstalk is not None and np.all(np.diag(rep.crosstalk) == 100)
        assert np.all(rep.crosstalk[~np.eye(6, dtype=bool)] < 0.01)
        back = EvalReport.from_dict(rep.to_dict())
        assert back.to_dict() == rep.to_dict()
        assert all(q >= 1 for q in rep.quantization_levels)
