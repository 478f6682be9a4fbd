import numpy as np
import pytest

from rgbdreg.correspondence import (
    DIRECTION_P_TO_Q,
    DIRECTION_Q_TO_P,
    dump_correspondences,
    extract_correspondences,
    ratio_weight,
    two_nearest,
)
from rgbdreg.descriptor import FeaturePointCloud
from rgbdreg.errors import ConfigError, InsufficientPointsError


def make_cloud(positions, features, valid=None):
    positions = np.asarray(positions, dtype=np.float64)
    n = positions.shape[0]
    features = np.asarray(features, dtype=np.float32)
    if valid is None:
        valid = np.ones(n, dtype=bool)
    return FeaturePointCloud(
        positions=positions,
        colors=np.zeros((n, 3)),
        features=features,
        valid=np.asarray(valid, dtype=bool),
        pixel_index=np.arange(n, dtype=np.int64),
    )


def random_unit_features(rng, n, dim=8):
    f = rng.normal(size=(n, dim))
    return (f / np.linalg.norm(f, axis=1, keepdims=True)).astype(np.float32)


def random_cloud(rng, n, dim=8):
    return make_cloud(rng.normal(size=(n, 3)), random_unit_features(rng, n, dim))


class TestTwoNearest:
    def test_exact_and_orthogonal_targets(self):
        # query equals target 2; all other targets orthogonal to it
        features = np.eye(4, dtype=np.float32)
        cloud = make_cloud(np.zeros((4, 3)), features)
        query = features[2:3]
        i1, d1, i2, d2 = two_nearest(query, cloud)
        assert i1[0] == 2
        assert d1[0] == 0.0
        assert d2[0] == 1.0
        assert i2[0] == 0  # all others tie at distance 1; lowest index wins

    def test_matches_brute_force_double_loop(self):
        rng = np.random.default_rng(0)
        cloud = random_cloud(rng, 50)
        queries = random_unit_features(rng, 37)
        i1, d1, i2, d2 = two_nearest(queries, cloud)

        targets = cloud.features.astype(np.float64)
        dist = np.maximum(1.0 - queries.astype(np.float64) @ targets.T, 0.0)
        for row in range(queries.shape[0]):
            order = sorted(range(50), key=lambda j: (dist[row, j], j))
            assert i1[row] == order[0]
            assert i2[row] == order[1]
            assert d1[row] == dist[row, order[0]]
            assert d2[row] == dist[row, order[1]]

    def test_duplicate_targets_tie_to_lower_index(self):
        f = np.array([[1, 0, 0], [0, 1, 0], [0, 1, 0]], dtype=np.float32)
        cloud = make_cloud(np.zeros((3, 3)), f)
        i1, d1, i2, d2 = two_nearest(np.array([[0, 1, 0]], dtype=np.float32), cloud)
        assert d1[0] == d2[0] == 0.0
        assert (i1[0], i2[0]) == (1, 2)

    def test_skips_invalid_targets(self):
        f = np.eye(3, dtype=np.float32)
        cloud = make_cloud(np.zeros((3, 3)), f, valid=[False, True, True])
        i1, _, i2, _ = two_nearest(f[0:1], cloud)
        assert i1[0] != 0 and i2[0] != 0

    def test_insufficient_targets(self):
        cloud = make_cloud(np.zeros((3, 3)), np.eye(3, dtype=np.float32), valid=[True, False, False])
        with pytest.raises(InsufficientPointsError):
            two_nearest(np.eye(3, dtype=np.float32), cloud)


class TestRatioWeight:
    def test_quarter_ratio(self):
        assert ratio_weight(0.2, 0.8) == pytest.approx(0.75, abs=1e-15)

    def test_fully_ambiguous(self):
        assert ratio_weight(0.5, 0.5) == 0.0

    def test_perfectly_unique(self):
        assert ratio_weight(0.0, 0.7) == 1.0

    def test_vanishing_second_distance(self):
        assert ratio_weight(0.0, 1e-13) == 0.0

    def test_rejects_bad_order(self):
        with pytest.raises(ConfigError):
            ratio_weight(0.9, 0.5)

    def test_strictly_decreasing_in_first_distance(self):
        d2 = 0.8
        values = [ratio_weight(d1, d2) for d1 in np.linspace(0.0, d2, 33)]
        assert all(a > b for a, b in zip(values, values[1:]))


class TestExtractCorrespondences:
    def test_identical_clouds_self_match_with_weight_one(self):
        # basis-vector features are exactly unit in float32, so self-match
        # distance is exactly 0 and the ratio weight exactly 1
        rng = np.random.default_rng(1)
        features = np.eye(12, dtype=np.float32)
        cloud = make_cloud(rng.normal(size=(12, 3)), features)
        matches = extract_correspondences(cloud, cloud, k=24)
        assert len(matches) == 24
        np.testing.assert_array_equal(matches.weights, np.ones(24))
        np.testing.assert_array_equal(matches.p_indices, matches.q_indices)
        np.testing.assert_array_equal(matches.p_positions, matches.q_positions)

    def test_top_k_matches_brute_force_table(self):
        rng = np.random.default_rng(2)
        cloud_p = random_cloud(rng, 10)
        cloud_q = random_cloud(rng, 10)
        matches = extract_correspondences(cloud_p, cloud_q, k=4)

        fp = cloud_p.features.astype(np.float64)
        fq = cloud_q.features.astype(np.float64)

        def best_rows(f_src, f_tgt):
            dist = np.maximum(1.0 - f_src @ f_tgt.T, 0.0)
            rows = []
            for i in range(dist.shape[0]):
                order = sorted(range(dist.shape[1]), key=lambda j: (dist[i, j], j))
                d1, d2 = dist[i, order[0]], dist[i, order[1]]
                w = 0.0 if d2 < 1e-12 else 1.0 - d1 / d2
                rows.append((i, order[0], w))
            rows.sort(key=lambda r: (-r[2], r[0]))
            return rows[:2]

        expected_pq = best_rows(fp, fq)
        expected_qp = best_rows(fq, fp)
        got = list(zip(matches.p_indices, matches.q_indices, matches.weights, matches.direction))
        for (src, tgt, w), (p, q, wg, d) in zip(expected_pq, got[:2]):
            assert (p, q, d) == (src, tgt, DIRECTION_P_TO_Q)
            assert wg == w
        for (src, tgt, w), (p, q, wg, d) in zip(expected_qp, got[2:]):
            assert (q, p, d) == (src, tgt, DIRECTION_Q_TO_P)
            assert wg == w

    def test_selected_weights_are_per_direction_maxima(self):
        rng = np.random.default_rng(3)
        cloud_p = random_cloud(rng, 40)
        cloud_q = random_cloud(rng, 40)
        k = 20
        matches = extract_correspondences(cloud_p, cloud_q, k=k)
        full = extract_correspondences(cloud_p, cloud_q, k=80)  # all candidates
        for direction in (DIRECTION_P_TO_Q, DIRECTION_Q_TO_P):
            selected = matches.weights[matches.direction == direction]
            everything = full.weights[full.direction == direction]
            unselected = np.sort(everything)[: len(everything) - len(selected)]
            if unselected.size:
                assert unselected.max() <= selected.min()

    def test_orthogonal_feature_rotation_invariance(self):
        rng = np.random.default_rng(4)
        dim = 8
        cloud_p = random_cloud(rng, 30, dim)
        cloud_q = random_cloud(rng, 30, dim)
        q, _ = np.linalg.qr(rng.normal(size=(dim, dim)))

        def rotate(cloud):
            feats = (cloud.features.astype(np.float64) @ q.T).astype(np.float32)
            return make_cloud(cloud.positions, feats)

        base = extract_correspondences(cloud_p, cloud_q, k=20)
        rotated = extract_correspondences(rotate(cloud_p), rotate(cloud_q), k=20)
        np.testing.assert_array_equal(base.p_indices, rotated.p_indices)
        np.testing.assert_array_equal(base.q_indices, rotated.q_indices)
        np.testing.assert_allclose(base.weights, rotated.weights, atol=1e-6)

    def test_shortfall_reported(self):
        rng = np.random.default_rng(5)
        cloud_p = random_cloud(rng, 5)
        cloud_q = random_cloud(rng, 5)
        matches = extract_correspondences(cloud_p, cloud_q, k=40)
        assert len(matches) == 10
        assert matches.shortfall == (15, 15)

    def test_odd_k_rejected(self):
        rng = np.random.default_rng(6)
        cloud = random_cloud(rng, 10)
        with pytest.raises(ConfigError):
            extract_correspondences(cloud, cloud, k=5)

    def test_too_few_valid_points(self):
        rng = np.random.default_rng(7)
        cloud_ok = random_cloud(rng, 10)
        starved = make_cloud(
            np.zeros((3, 3)), np.eye(3, dtype=np.float32), valid=[True, False, False]
        )
        with pytest.raises(InsufficientPointsError):
            extract_correspondences(cloud_ok, starved, k=4)

    def test_distance_weighting_ranks_by_nearest_distance(self):
        rng = np.random.default_rng(8)
        cloud_p = random_cloud(rng, 20)
        cloud_q = random_cloud(rng, 20)
        matches = extract_correspondences(cloud_p, cloud_q, k=10, weighting="distance")
        i1, d1, _, _ = two_nearest(cloud_p.features, cloud_q)
        pq = matches.direction == DIRECTION_P_TO_Q
        expected = np.sort(np.clip(1.0 - d1, 0.0, 1.0))[::-1][: pq.sum()]
        np.testing.assert_allclose(np.sort(matches.weights[pq])[::-1], expected, atol=0)


class TestDump:
    def test_dump_format(self, tmp_path):
        rng = np.random.default_rng(9)
        cloud = random_cloud(rng, 6)
        matches = extract_correspondences(cloud, cloud, k=4)
        path = tmp_path / "dump.txt"
        dump_correspondences(matches, path)
        lines = path.read_text().strip().splitlines()
        assert len(lines) == 4
        tokens = lines[0].split()
        assert len(tokens) == 8
        assert tokens[7] in ("p2q", "q2p")
        np.testing.assert_allclose([float(t) for t in tokens[:3]], matches.p_positions[0])
