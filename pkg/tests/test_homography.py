"""DLT and RANSAC homography estimation oracles."""

import numpy as np
import pytest

from graphmatch.errors import ContractError, DegenerateGeometryError, EstimationFailureError
from graphmatch.homography import (Homography, dlt_homography, ransac_homography,
                                   reprojection_errors, write_homographies_csv)
from graphmatch.imaging import AffineTransform

RNG = np.random.default_rng(17)


def random_projective(rng):
    h = np.eye(3)
    h[:2, :2] += rng.uniform(-0.2, 0.2, (2, 2))
    h[:2, 2] = rng.uniform(-30, 30, 2)
    h[2, :2] = rng.uniform(-5e-4, 5e-4, 2)
    return Homography(h)


class TestDlt:
    def test_identity_pairs(self):
        pts = np.array([[0.0, 0.0], [100.0, 0.0], [0.0, 100.0], [100.0, 100.0], [37.0, 61.0]])
        h = dlt_homography(pts, pts)
        np.testing.assert_allclose(h.matrix, np.eye(3), atol=1e-9)

    def test_recovers_affine_action(self):
        t = AffineTransform.rotation(12.0, (40.0, 60.0)).compose(AffineTransform.scaling(1.07))
        src = RNG.uniform(0, 200, (12, 2))
        h = dlt_homography(src, t.apply(src))
        probe = RNG.uniform(0, 200, (50, 2))
        np.testing.assert_allclose(h.apply(probe), t.apply(probe), atol=1e-6)

    def test_noiseless_projective_corner_error(self):
        true_h = random_projective(RNG)
        src = RNG.uniform(0, 300, (20, 2))
        est = dlt_homography(src, true_h.apply(src))
        corners = np.array([[0.0, 0.0], [300.0, 0.0], [0.0, 300.0], [300.0, 300.0]])
        err = np.linalg.norm(est.apply(corners) - true_h.apply(corners), axis=1)
        assert err.max() < 1e-6

    def test_collinear_points_rejected(self):
        src = np.array([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0], [3.0, 3.0], [4.0, 4.0]])
        dst = src * 2.0
        with pytest.raises(DegenerateGeometryError):
            dlt_homography(src, dst)

    def test_too_few_points_rejected(self):
        pts = RNG.uniform(0, 10, (3, 2))
        with pytest.raises(ContractError):
            dlt_homography(pts, pts)

    def test_similarity_prenormalization_invariance(self):
        # applying a similarity to the inputs then undoing it leaves the action unchanged
        true_h = random_projective(RNG)
        src = RNG.uniform(0, 200, (15, 2))
        dst = true_h.apply(src)
        h_plain = dlt_homography(src, dst)
        sim = AffineTransform.rotation(30.0, (50.0, 50.0)).compose(AffineTransform.scaling(3.0))
        h_sim = dlt_homography(sim.apply(src), dst)
        probe = RNG.uniform(0, 200, (40, 2))
        np.testing.assert_allclose(h_sim.apply(sim.apply(probe)), h_plain.apply(probe), atol=1e-8)

    def test_normalized_bottom_right(self):
        h = dlt_homography(RNG.uniform(0, 100, (8, 2)), RNG.uniform(0, 100, (8, 2)))
        assert h.matrix[2, 2] == pytest.approx(1.0)


class TestRansac:
    def _outlier_problem(self, seed, n=60, inlier_fraction=0.7):
        rng = np.random.default_rng(seed)
        true_h = random_projective(rng)
        n_in = int(n * inlier_fraction)
        src = rng.uniform(0, 300, (n, 2))
        dst = true_h.apply(src)
        dst[n_in:] = rng.uniform(0, 300, (n - n_in, 2))
        return true_h, src, dst, n_in

    def test_all_inliers_equals_dlt(self):
        src = RNG.uniform(0, 200, (20, 2))
        true_h = random_projective(RNG)
        dst = true_h.apply(src)
        direct = dlt_homography(src, dst)
        robust = ransac_homography(src, dst, iterations=50, seed=1)
        np.testing.assert_allclose(robust.matrix, direct.matrix, atol=1e-6)
        assert robust.inlier_count == 20

    def test_outlier_recovery(self):
        true_h, src, dst, n_in = self._outlier_problem(0)
        est = ransac_homography(src, dst, iterations=1000, inlier_threshold_px=3.0, seed=0)
        corners = np.array([[0.0, 0.0], [300.0, 0.0], [0.0, 300.0], [300.0, 300.0]])
        err = np.linalg.norm(est.apply(corners) - true_h.apply(corners), axis=1)
        assert err.max() < 2.0
        assert est.inlier_count >= n_in * 0.9

    def test_seeded_determinism(self):
        _, src, dst, _ = self._outlier_problem(3)
        a = ransac_homography(src, dst, iterations=300, seed=7)
        b = ransac_homography(src, dst, iterations=300, seed=7)
        assert a.matrix.tobytes() == b.matrix.tobytes()
        np.testing.assert_array_equal(a.inliers, b.inliers)

    def test_inlier_count_monotone_in_threshold(self):
        _, src, dst, _ = self._outlier_problem(5)
        counts = [ransac_homography(src, dst, iterations=200, inlier_threshold_px=t, seed=11).inlier_count
                  for t in (1.0, 2.0, 4.0, 8.0)]
        assert counts == sorted(counts)

    def test_hopeless_input_raises(self):
        rng = np.random.default_rng(2)
        src = rng.uniform(0, 10, (4, 2))
        dst = rng.uniform(0, 10, (4, 2))
        # 4 points always fit exactly; drop to guaranteed degenerate instead
        src[2] = src[0]
        with pytest.raises((EstimationFailureError, DegenerateGeometryError)):
            ransac_homography(src, dst, iterations=5, inlier_threshold_px=1e-12, seed=0)

    def test_too_few_points_rejected(self):
        with pytest.raises(ContractError):
            ransac_homography(np.ones((3, 2)), np.ones((3, 2)))


class TestComposition:
    def test_chained_action_matches_composed_matrix(self):
        h_ab = random_projective(RNG)
        h_bc = random_projective(RNG)
        pts = RNG.uniform(0, 100, (30, 2))
        via_compose = h_ab.compose(h_bc).apply(pts)
        direct = h_ab.apply(h_bc.apply(pts))
        np.testing.assert_allclose(via_compose, direct, atol=1e-6)

    def test_inverse(self):
        h = random_projective(RNG)
        pts = RNG.uniform(0, 100, (10, 2))
        np.testing.assert_allclose(h.inverse().apply(h.apply(pts)), pts, atol=1e-8)

    def test_from_affine(self):
        t = AffineTransform.rotation(9.0, (10.0, 10.0))
        h = Homography.from_affine(t)
        pts = RNG.uniform(0, 100, (10, 2))
        np.testing.assert_allclose(h.apply(pts), t.apply(pts), atol=1e-12)


def test_reprojection_errors_inf_for_horizon_points():
    h = Homography(np.array([[1.0, 0, 0], [0, 1.0, 0], [0.01, 0, 1.0]]))
    src = np.array([[-100.0, 0.0], [1.0, 1.0]])
    err = reprojection_errors(h, src, np.zeros((2, 2)))
    assert err[0] == np.inf
    assert np.isfinite(err[1])


def test_homography_csv(tmp_path):
    hs = [random_projective(RNG) for _ in range(3)]
    path = tmp_path / "h.csv"
    write_homographies_csv(path, hs)
    lines = path.read_text().splitlines()
    assert lines[0] == "h00,h01,h02,h10,h11,h12,h20,h21,h22"
    row = [float(v) for v in lines[1].split(",")]
    np.testing.assert_allclose(np.array(row).reshape(3, 3), hs[0].matrix)
