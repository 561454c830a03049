import json
import warnings

import numpy as np
import pytest
from oracles import alternating_fit, known_calibration, samples_from

from ftind.calibration import (
    Calibration,
    CalibrationDataset,
    calibrate,
    decode,
    gauge_coefficients,
    geometry_hash,
    load_calibration,
    save_calibration,
)
from ftind.coil import HORIZONTAL_COIL, VERTICAL_COIL
from ftind.errors import (
    ChecksumError,
    ExtrapolationWarning,
    InsufficientExcitation,
    PoleError,
    VersionMismatch,
)
from ftind.fitting import evaluate
from ftind.synth import (
    NoiseModel,
    SensorModel,
    demo_schedule,
    generate_dataset,
    sample_schedule,
)
from ftind.wrench import FULL_SCALE

GEOMS = (VERTICAL_COIL,) * 3 + (HORIZONTAL_COIL,) * 3


def identity_calibration():
    a = np.hstack([np.eye(6), np.zeros((6, 1))])
    # d1 = d4 = d5 = 0 with the gauge at u0 = 0 is y = u
    return Calibration(np.zeros((6, 3)), np.zeros(6), a, np.zeros(6), np.ones(6))


@pytest.fixture(scope="module")
def truth():
    return known_calibration()


@pytest.fixture(scope="module")
def fitted(truth):
    raw, w = samples_from(truth, 400, 1)
    return calibrate(CalibrationDataset(raw, w))


class TestDecode:
    def test_identity_pipeline(self):
        x = np.array([0.1, 0.2, 0.3, 0.4, 0.5, 0.6])
        assert np.allclose(decode(identity_calibration(), x).as_array(), x, rtol=1e-15)

    def test_zero_matrix(self):
        c = identity_calibration()
        c.matrix_a[:] = 0
        assert np.all(decode(c, np.full(6, 0.7)).as_array() == 0)

    def test_gauge_properties(self):
        theta, u0 = (0.2, -0.1, 0.3), 0.4
        m = Calibration(np.tile(theta, (6, 1)), np.full(6, u0), np.zeros((6, 7)),
                        np.zeros(6), np.ones(6)).channel_maps[0]
        h = 1e-6
        assert evaluate(m, u0) == pytest.approx(0.0, abs=1e-15)
        assert (evaluate(m, u0 + h) - evaluate(m, u0 - h)) / (2 * h) == pytest.approx(1.0)
        assert gauge_coefficients(theta, u0)[0] == theta[0]

    def test_extrapolation_warns(self):
        c = identity_calibration()
        with pytest.warns(ExtrapolationWarning):
            c.decode_array(np.full((1, 6), 1.5))
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            c.decode_array(np.full((1, 6), 0.5))

    def test_pole_rejected(self):
        # den = 1 - 2u has a root at 0.5
        c = Calibration(np.tile((0.0, 0.0, -2.0), (6, 1)), np.zeros(6), np.zeros((6, 7)),
                        np.zeros(6), np.ones(6))
        with pytest.raises(PoleError):
            c.channel_maps


class TestCalibrate:
    def test_known_calibration_recovered(self, truth, fitted):
        cal, report = fitted
        assert report.converged
        raw, w = samples_from(truth, 2000, 2, 0.02, 0.98)
        rmse = np.sqrt(np.mean((cal.decode_array(raw) - w) ** 2, axis=0))
        assert np.all(rmse / FULL_SCALE < 1e-6)

    def test_training_rmse_noise_free(self, fitted):
        _, report = fitted
        assert np.all(np.array(report.rmse) / FULL_SCALE < 1e-6)

    def test_reparameterisation_invariance(self, truth):
        raw, _ = samples_from(truth, 50, 7)
        base = truth.decode_array(raw)
        # scale and shift each channel output, absorb both into A
        rng = np.random.default_rng(0)
        s, t = rng.uniform(0.5, 2, 6), rng.normal(size=6)
        y = truth.deformation(raw)[:, :6]
        y2 = y * s + t
        a2 = truth.matrix_a.copy()
        a2[:, :6] = truth.matrix_a[:, :6] / s
        a2[:, 6] -= a2[:, :6] @ t
        out = np.column_stack([y2, np.ones(len(y2))]) @ a2.T
        assert np.allclose(out, base, rtol=1e-10, atol=1e-10 * FULL_SCALE.max())

    def test_matches_alternating_oracle(self, truth):
        rng = np.random.default_rng(13)
        raw, w = samples_from(truth, 300, 3)
        wn = w + rng.normal(size=w.shape) * FULL_SCALE * 1e-3
        cal, _ = calibrate(CalibrationDataset(raw, wn))
        ours = np.sqrt(np.mean(((cal.decode_array(raw) - wn) / FULL_SCALE) ** 2))
        oracle = alternating_fit(raw, wn, FULL_SCALE, raw[0], init=truth.thetas)
        theirs = np.sqrt(np.mean(((oracle - wn) / FULL_SCALE) ** 2))
        assert ours == pytest.approx(theirs, rel=0.01)

    def test_train_test_split(self):
        model = SensorModel()
        sched = sample_schedule(demo_schedule(combined=30), 200.0)
        ds = generate_dataset(sched, model, NoiseModel(4.0), rate=200.0, seed=5)
        idx = np.random.default_rng(0).permutation(len(ds))
        train, test = np.sort(idx[: len(ds) // 2]), np.sort(idx[len(ds) // 2:])
        train = np.concatenate([[0], train[train != 0]])
        cal, rep = calibrate(CalibrationDataset(ds.counts[train], ds.wrench[train]))
        pred = cal.decode_array(ds.counts[test], warn=False)
        test_rmse = np.sqrt(np.mean((pred - ds.wrench[test]) ** 2, axis=0))
        assert np.all(test_rmse <= 2 * np.array(rep.rmse))

    def test_insufficient_excitation(self, truth):
        raw, w = samples_from(truth, 100, 1)
        w[:, 4] = 0.0
        with pytest.raises(InsufficientExcitation, match="ty"):
            calibrate(CalibrationDataset(raw, w))

    def test_dataset_validation(self):
        with pytest.raises(ValueError):
            CalibrationDataset(np.zeros((5, 6)), np.zeros((5, 6)))
        with pytest.raises(ValueError):
            CalibrationDataset(np.full((10, 6), 2.0**28), np.zeros((10, 6)))
        with pytest.raises(ValueError):
            CalibrationDataset(np.zeros((10, 6)), np.zeros((9, 6)))


class TestPersistence:
    def test_round_trip_bit_identical(self, fitted, tmp_path):
        cal, _ = fitted
        cal.geometry_hash = geometry_hash(GEOMS)
        p = tmp_path / "cal.json"
        save_calibration(cal, p)
        back = load_calibration(p, geometry_hash(GEOMS))
        for name in ("thetas", "zero_u", "matrix_a", "raw_offset", "raw_scale"):
            assert np.array_equal(getattr(back, name), getattr(cal, name))

    def test_truncated(self, fitted, tmp_path):
        p = tmp_path / "cal.json"
        save_calibration(fitted[0], p)
        p.write_bytes(p.read_bytes()[:-40])
        with pytest.raises(ChecksumError):
            load_calibration(p)

    def test_tampered(self, fitted, tmp_path):
        p = tmp_path / "cal.json"
        save_calibration(fitted[0], p)
        doc = json.loads(p.read_text())
        doc["payload"]["matrix_a"][0][0] += 1e-9
        p.write_text(json.dumps(doc))
        with pytest.raises(ChecksumError):
            load_calibration(p)

    def test_version(self, fitted, tmp_path):
        p = tmp_path / "cal.json"
        save_calibration(fitted[0], p)
        doc = json.loads(p.read_text())
        doc["version"] = 99
        p.write_text(json.dumps(doc))
        with pytest.raises(VersionMismatch):
            load_calibration(p)

    def test_geometry_hash(self, fitted, tmp_path):
        cal, _ = fitted
        cal.geometry_hash = geometry_hash(GEOMS)
        p = tmp_path / "cal.json"
        save_calibration(cal, p)
        other = geometry_hash((VERTICAL_COIL,) * 6)
        with pytest.raises(VersionMismatch):
            load_calibration(p, other)
        load_calibration(p, other, allow_geometry_mismatch=True)
