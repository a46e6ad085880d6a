import numpy as np
import pytest

from censored_nbe.exceptions import InvalidArgument, NotPositiveDefinite
from censored_nbe.spatial import (
    AnisotropyParams,
    CovarianceModel,
    SpdFactor,
    anisotropy_transform,
    build_grid,
    cholesky_spd,
    conditional_gp_increment,
    gp_sample,
    grid_preset,
    kernel_eval,
    make_rng,
    pairwise_distances,
    single_site_grid,
)


class TestGrid:
    def test_g16_sites_and_spacing(self):
        g = build_grid(16, (0, 16, 0, 16))
        assert g.d == 256
        assert g.sites.shape == (256, 2)
        assert g.spacing == pytest.approx((16 / 15, 16 / 15))
        np.testing.assert_allclose(np.diff(np.unique(g.sites[:, 0])), 16 / 15)

    def test_g2_unit_square_corners(self):
        g = build_grid(2, (0, 1, 0, 1))
        np.testing.assert_array_equal(g.sites, [[0, 0], [1, 0], [0, 1], [1, 1]])

    def test_g6_count(self):
        assert build_grid(6, (0, 16, 0, 16)).d == 36

    def test_row_major_x_fastest(self):
        g = build_grid(3, (0, 2, 0, 2))
        np.testing.assert_array_equal(g.sites[:3, 1], 0)
        np.testing.assert_array_equal(g.sites[:3, 0], [0, 1, 2])

    @pytest.mark.parametrize("G", [1, 0, -3, 2.5])
    def test_bad_side_length(self, G):
        with pytest.raises(InvalidArgument):
            build_grid(G)

    def test_degenerate_extent(self):
        with pytest.raises(InvalidArgument):
            build_grid(4, (0, 0, 0, 1))

    def test_presets(self):
        assert grid_preset("g8").d == 64
        assert grid_preset("g8").extent == (0, 16, 0, 16)
        with pytest.raises(InvalidArgument):
            grid_preset("g7")

    def test_equality_and_hash(self):
        assert build_grid(4) == grid_preset("g4")
        assert hash(build_grid(4)) == hash(grid_preset("g4"))
        assert build_grid(4) != build_grid(5)


class TestAnisotropy:
    def test_identity(self):
        np.testing.assert_allclose(anisotropy_transform([1, 1], AnisotropyParams(1, 0)), [1, 1])

    def test_pure_rotation(self):
        out = anisotropy_transform([1, 0], AnisotropyParams(1, -np.pi / 2))
        np.testing.assert_allclose(out, [0, -1], atol=1e-12)

    def test_stretch(self):
        np.testing.assert_allclose(anisotropy_transform([0, 2], AnisotropyParams(2, 0)), [0, 1])

    @pytest.mark.parametrize("A, omega", [(0, 0), (-1, 0), (1, 0.5), (1, -2)])
    def test_invalid(self, A, omega):
        with pytest.raises(InvalidArgument):
            AnisotropyParams(A, omega)


class TestDistances:
    def test_diagonal(self):
        g = build_grid(2, (0, 1, 0, 1))
        H = pairwise_distances(g)
        assert H[0, 3] == pytest.approx(np.sqrt(2))
        np.testing.assert_array_equal(np.diag(H), 0)

    def test_anisotropic_stretch(self):
        g = build_grid(2, (0, 1, 0, 1))
        H = pairwise_distances(g, AnisotropyParams(2, 0))
        assert H[0, 2] == pytest.approx(0.5)

    def test_metric_properties(self):
        H = pairwise_distances(build_grid(5, (0, 3, 0, 7)), AnisotropyParams(1.7, -0.4))
        np.testing.assert_allclose(H, H.T)
        assert np.all(H[:, :, None] <= H[:, None, :] + H.T[None, :, :] + 1e-12)

    @pytest.mark.parametrize("omega", [-0.3, -1.0, -np.pi / 2])
    def test_rotation_invariance_when_isotropic(self, omega):
        g = grid_preset("g4")
        np.testing.assert_allclose(pairwise_distances(g, AnisotropyParams(1, omega)),
                                   pairwise_distances(g), atol=1e-12)


class TestKernels:
    def test_matern_half_is_exponential(self):
        m = CovarianceModel("matern_correlation", 2.0, 0.5)
        assert m(2.0) == pytest.approx(np.exp(-1.0), abs=1e-12)
        assert m(2.0) == pytest.approx(0.367879, abs=1e-6)

    def test_power_variogram(self):
        assert CovarianceModel("power_variogram", 4.0, 1.0)(4.0) == pytest.approx(1.0)
        assert CovarianceModel("power_variogram", 4.0, 1.0)(0.0) == 0.0

    @pytest.mark.parametrize("lam, nu", [(1.0, 0.5), (7.0, 1.9), (3.0, 3.5)])
    def test_matern_at_zero(self, lam, nu):
        assert CovarianceModel("matern_correlation", lam, nu)(0.0) == 1.0

    def test_matern_closed_form_three_halves(self):
        h = np.linspace(0, 10, 31)
        x = h / 2.5
        np.testing.assert_allclose(kernel_eval(CovarianceModel("matern_correlation", 2.5, 1.5), h),
                                   (1 + x) * np.exp(-x), atol=1e-12)

    def test_monotone_ladders(self):
        h = np.linspace(0, 20, 100)
        rho = kernel_eval(CovarianceModel("matern_correlation", 4.0, 1.3), h)
        gam = kernel_eval(CovarianceModel("power_variogram", 4.0, 1.3), h)
        assert np.all(np.diff(rho) <= 0) and np.all(rho > 0) and np.all(rho <= 1)
        assert np.all(np.diff(gam) >= 0)

    def test_negative_distance(self):
        with pytest.raises(InvalidArgument):
            kernel_eval(CovarianceModel("power_variogram", 1, 1), -0.1)

    @pytest.mark.parametrize("kind, lam, kappa", [
        ("power_variogram", 1, 2.5), ("power_variogram", 1, 0), ("matern_correlation", 0, 1),
        ("matern_correlation", 1, -1), ("cauchy", 1, 1),
    ])
    def test_invalid_model(self, kind, lam, kappa):
        with pytest.raises(InvalidArgument):
            CovarianceModel(kind, lam, kappa)


class TestCholesky:
    def test_identity(self):
        f = cholesky_spd(np.eye(3))
        np.testing.assert_array_equal(f.L, np.eye(3))
        assert f.jitter == 0

    def test_hand_2x2(self):
        f = cholesky_spd([[4.0, 2.0], [2.0, 5.0]])
        np.testing.assert_allclose(f.L, [[2, 0], [1, 2]])

    def test_matern_8x8_reconstruction(self):
        g = grid_preset("g8")
        M = kernel_eval(CovarianceModel("matern_correlation", 4.0, 1.5), pairwise_distances(g))
        f = cholesky_spd(M)
        assert np.max(np.abs(f.L @ f.L.T - (M + f.jitter * np.eye(64)))) < 1e-10
        assert np.max(np.abs(f.L @ f.L.T - M)) < 1e-8
        assert np.all(np.diag(f.L) > 0)

    def test_jitter_escalates_for_singular(self):
        f = cholesky_spd(np.ones((3, 3)))
        assert 0 < f.jitter <= 1e-4
        np.testing.assert_allclose(f.L @ f.L.T, np.ones((3, 3)) + f.jitter * np.eye(3),
                                   atol=1e-10)

    def test_failure_reports_jitter(self):
        with pytest.raises(NotPositiveDefinite) as err:
            cholesky_spd(np.diag([1.0, -1.0]))
        assert err.value.jitter == pytest.approx(1e-4)

    def test_asymmetric(self):
        with pytest.raises(InvalidArgument):
            cholesky_spd([[1.0, 0.5], [0.0, 1.0]])


class TestGpSample:
    def test_identity_factor_returns_raw_normals(self):
        f = SpdFactor(np.eye(5), 0.0)
        np.testing.assert_array_equal(gp_sample(f, make_rng(3)), make_rng(3).standard_normal(5))

    def test_covariance_2x2(self):
        g = build_grid(2, (0, 1, 0, 1))
        M = kernel_eval(CovarianceModel("matern_correlation", 1.0, 1.0), pairwise_distances(g))
        X = gp_sample(cholesky_spd(M), make_rng(11), size=100_000)
        assert np.max(np.abs(np.cov(X.T) - M)) < 0.02

    def test_single_site_variance(self):
        X = gp_sample(cholesky_spd([[1.0]]), make_rng(5), size=100_000)
        assert 0.97 <= X.var() <= 1.03

    def test_determinism(self):
        f = cholesky_spd(np.array([[2.0, 0.3], [0.3, 1.0]]))
        np.testing.assert_array_equal(gp_sample(f, make_rng(9), 10), gp_sample(f, make_rng(9), 10))


class TestIncrements:
    vario = CovarianceModel("power_variogram", 4.0, 1.0)

    def test_zero_at_anchor(self):
        X = conditional_gp_increment(self.vario, 5, grid_preset("g4"), make_rng(0), size=20)
        np.testing.assert_array_equal(X[:, 5], 0.0)

    def test_variogram_matches(self):
        g = grid_preset("g4")
        X = conditional_gp_increment(self.vario, 3, g, make_rng(1), size=100_000)
        gam = kernel_eval(self.vario, pairwise_distances(g))
        for i, k in [(0, 1), (0, 15), (6, 9), (2, 12)]:
            emp = np.var(X[:, i] - X[:, k])
            assert emp == pytest.approx(2 * gam[i, k], rel=0.05)

    def test_single_site(self):
        X = conditional_gp_increment(self.vario, 0, single_site_grid(), make_rng(0), size=4)
        np.testing.assert_array_equal(X, 0.0)

    def test_needs_variogram(self):
        with pytest.raises(InvalidArgument):
            conditional_gp_increment(CovarianceModel("matern_correlation", 1, 1), 0,
                                     grid_preset("g4"), make_rng(0))

    def test_anchor_out_of_range(self):
        with pytest.raises(InvalidArgument):
            conditional_gp_increment(self.vario, 16, grid_preset("g4"), make_rng(0))
