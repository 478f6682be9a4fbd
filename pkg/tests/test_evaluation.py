import numpy as np
import pytest

from rgbdreg.errors import InputError, InsufficientPointsError
from rgbdreg.evaluation import (
    RegistrationReport,
    aggregate,
    chamfer_error,
    evaluate_registration,
    registration_chamfer,
    rotation_error,
    threshold_accuracy,
    translation_error,
)
from rgbdreg.geometry import rotation_about_axis, transform_points

from conftest import random_rotation, random_transform


class TestRotationError:
    def test_equal_rotations(self):
        rng = np.random.default_rng(0)
        r = random_rotation(rng)
        assert rotation_error(r, r) == 0.0

    def test_half_turn(self):
        r = rotation_about_axis([0.0, 0.0, 1.0], np.pi)
        assert rotation_error(r, np.eye(3)) == pytest.approx(180.0, abs=1e-9)

    def test_constructed_thirty_degrees(self):
        rng = np.random.default_rng(1)
        axis = rng.normal(size=3)
        r = rotation_about_axis(axis, np.radians(30.0))
        assert rotation_error(r, np.eye(3)) == pytest.approx(30.0, abs=1e-9)

    def test_symmetry(self):
        rng = np.random.default_rng(2)
        a, b = random_rotation(rng), random_rotation(rng)
        assert rotation_error(a, b) == pytest.approx(rotation_error(b, a), abs=1e-9)

    def test_warns_on_non_rotation(self):
        with pytest.warns(UserWarning, match="arccos"):
            rotation_error(np.eye(3) * 1.1, np.eye(3))


class TestTranslationError:
    def test_equal(self):
        t = np.array([0.3, -0.2, 1.0])
        assert translation_error(t, t) == 0.0

    def test_three_four_five(self):
        err = translation_error(np.array([0.03, 0.04, 0.0]), np.zeros(3))
        assert err == pytest.approx(5.0, abs=1e-12)

    def test_matches_scalar_loop(self):
        rng = np.random.default_rng(3)
        a, b = rng.normal(size=3), rng.normal(size=3)
        expected = (sum((x - y) ** 2 for x, y in zip(a, b))) ** 0.5 * 100.0
        assert abs(translation_error(a, b) - expected) < 1e-12


class TestChamferError:
    def test_identical_clouds(self):
        rng = np.random.default_rng(4)
        pts = rng.normal(size=(30, 3))
        assert chamfer_error(pts, pts) == 0.0

    def test_single_point_pair(self):
        a = np.array([[0.0, 0.0, 0.0]])
        b = np.array([[0.01, 0.0, 0.0]])
        assert chamfer_error(a, b) == pytest.approx(2.0, abs=1e-12)

    def test_matches_brute_force(self):
        rng = np.random.default_rng(5)
        a = rng.normal(size=(100, 3))
        b = rng.normal(size=(80, 3))
        d = np.linalg.norm(a[:, None] - b[None], axis=2)
        expected = (d.min(axis=1).mean() + d.min(axis=0).mean()) * 100.0
        assert chamfer_error(a, b) == pytest.approx(expected, abs=1e-9)

    def test_symmetric(self):
        rng = np.random.default_rng(6)
        a = rng.normal(size=(40, 3))
        b = rng.normal(size=(25, 3))
        assert chamfer_error(a, b) == pytest.approx(chamfer_error(b, a), abs=1e-12)

    def test_rigid_motion_invariance(self):
        rng = np.random.default_rng(7)
        a = rng.normal(size=(50, 3))
        b = rng.normal(size=(50, 3))
        g = random_transform(rng)
        moved = chamfer_error(transform_points(g, a), transform_points(g, b))
        assert moved == pytest.approx(chamfer_error(a, b), abs=1e-9)

    def test_empty_rejected(self):
        with pytest.raises(InsufficientPointsError):
            chamfer_error(np.empty((0, 3)), np.ones((3, 3)))


class TestRegistrationChamfer:
    def test_perfect_prediction_zero(self):
        rng = np.random.default_rng(8)
        p0 = rng.normal(size=(60, 3))
        p1 = rng.normal(size=(60, 3))
        t = random_transform(rng)
        assert registration_chamfer(p0, p1, t, t) == 0.0

    def test_subsampling_is_seeded(self):
        rng = np.random.default_rng(9)
        p0 = rng.normal(size=(500, 3))
        p1 = rng.normal(size=(500, 3))
        t_pred = random_transform(rng)
        t_gt = random_transform(rng)
        a = registration_chamfer(p0, p1, t_pred, t_gt, max_points=100, seed=5)
        b = registration_chamfer(p0, p1, t_pred, t_gt, max_points=100, seed=5)
        assert a == b


class TestThresholds:
    def test_keys_and_values(self):
        acc = threshold_accuracy(7.0, 12.0, 3.0)
        assert acc == {
            "rot_5deg": False,
            "rot_10deg": True,
            "rot_45deg": True,
            "trans_5cm": False,
            "trans_10cm": False,
            "trans_25cm": True,
            "chamfer_1cm": False,
            "chamfer_5cm": True,
            "chamfer_10cm": True,
        }

    def test_accuracy_non_increasing_as_thresholds_tighten(self):
        rng = np.random.default_rng(10)
        reports = [
            RegistrationReport(
                rotation_error_deg=float(rng.uniform(0, 60)),
                translation_error_cm=float(rng.uniform(0, 40)),
                chamfer_error_cm=float(rng.uniform(0, 15)),
                accuracy={},
            )
            for _ in range(200)
        ]
        acc = aggregate(reports)["acc"]
        assert acc["rot_5deg"] <= acc["rot_10deg"] <= acc["rot_45deg"]
        assert acc["trans_5cm"] <= acc["trans_10cm"] <= acc["trans_25cm"]
        assert acc["chamfer_1cm"] <= acc["chamfer_5cm"] <= acc["chamfer_10cm"]


class TestAggregate:
    def test_single_report(self):
        report = RegistrationReport(2.0, 3.0, 0.5, threshold_accuracy(2.0, 3.0, 0.5))
        summary = aggregate([report])
        assert summary["rot_err_deg"] == {"mean": 2.0, "median": 2.0}
        assert summary["trans_err_cm"] == {"mean": 3.0, "median": 3.0}
        assert summary["count"] == 1

    def test_two_reports_mean_median_accuracy(self):
        reports = [
            RegistrationReport(2.0, 1.0, 0.1, {}),
            RegistrationReport(8.0, 1.0, 0.1, {}),
        ]
        summary = aggregate(reports)
        assert summary["rot_err_deg"]["mean"] == 5.0
        assert summary["rot_err_deg"]["median"] == 5.0
        assert summary["acc"]["rot_5deg"] == 0.5

    def test_empty_rejected(self):
        with pytest.raises(InputError):
            aggregate([])


class TestRegistrationReport:
    def test_validation(self):
        with pytest.raises(InputError):
            RegistrationReport(-1.0, 0.0, None, {})
        with pytest.raises(InputError):
            RegistrationReport(0.0, -0.5, None, {})

    def test_json_keys(self):
        rng = np.random.default_rng(11)
        t = random_transform(rng)
        report = evaluate_registration(t, t, time_ms={"alignment": 1.5})
        payload = report.to_json_dict()
        assert set(payload) == {"rot_err_deg", "trans_err_cm", "chamfer_cm", "acc", "time_ms"}
        assert payload["rot_err_deg"] == 0.0
        assert payload["chamfer_cm"] is None
        assert payload["time_ms"] == {"alignment": 1.5}
