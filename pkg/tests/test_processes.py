import numpy as np
import pytest
from scipy import stats

from censored_nbe.exceptions import InvalidArgument, NotApplicable
from censored_nbe.margins import MarginTag
from censored_nbe.processes import (
    ProcessSpec, ReplicateSet, canonical_family, chi_analytic, empirical_chi, hw_marginal_cdf,
    marginal_transform, simulate, simulate_batch, simulate_gp_uniform,
)
from censored_nbe.spatial import AnisotropyParams, build_grid, grid_preset, make_rng

G2 = build_grid(2, (0, 1, 0, 1))
G8 = grid_preset("g8")


def spec(family, grid=G8, lam=4.0, kappa=1.0, **kw):
    return ProcessSpec(family, grid, lam, kappa, **kw)


class TestSpec:
    def test_aliases(self):
        assert canonical_family("BR") == "msp_brown_resnick"
        assert canonical_family(4) == "hw_mixture"
        with pytest.raises(InvalidArgument):
            canonical_family("schlather")

    def test_delta_only_for_hw(self):
        with pytest.raises(InvalidArgument):
            spec("gp", delta=0.5)
        with pytest.raises(InvalidArgument):
            spec("hw")

    def test_variogram_exponent_range(self):
        with pytest.raises(InvalidArgument):
            spec("msp", kappa=2.5)

    def test_theta_roundtrip(self):
        s = spec("hw", delta=0.3, aniso=AnisotropyParams(2.0, -0.5))
        assert s.param_names == ("lam", "kappa", "delta", "A", "omega")
        assert s.with_theta(s.theta) == s
        with pytest.raises(InvalidArgument):
            s.with_theta([1.0, 2.0])

    def test_replicate_set_shape_check(self):
        with pytest.raises(InvalidArgument):
            ReplicateSet(spec("gp"), np.zeros((3, 10)))


class TestGp:
    def test_single_site(self):
        s = ProcessSpec("gp", build_grid(2, (0, 1, 0, 1)), 1.0, 1.0)
        out = simulate_gp_uniform(s, 1, make_rng(0))
        assert out.data.shape == (1, 4)
        assert np.all((out.data > 0) & (out.data < 1))

    def test_uniform_margins(self):
        X = simulate(spec("gp"), 10_000, make_rng(1)).data
        for j in (0, 27, 63):
            assert stats.kstest(X[:, j], "uniform").statistic < 0.02

    def test_near_comonotone(self):
        X = simulate(spec("gp", lam=1e6), 2000, make_rng(2)).data
        Z = stats.norm.ppf(X)
        assert np.corrcoef(Z[:, 0], Z[:, 63])[0, 1] > 0.99

    def test_seed_reproducible(self):
        a = simulate(spec("gp"), 5, make_rng(3)).data
        b = simulate(spec("gp"), 5, make_rng(3)).data
        np.testing.assert_array_equal(a, b)

    def test_bad_m(self):
        with pytest.raises(InvalidArgument):
            simulate(spec("gp"), 0, make_rng(0))


class TestBrownResnick:
    def test_frechet_margins(self):
        X = simulate(spec("msp"), 10_000, make_rng(4)).data
        for j in (0, 35, 63):
            assert stats.kstest(X[:, j], lambda z: np.exp(-1 / z)).statistic < 0.02

    def test_extremal_coefficient(self):
        # 1/Z is Exp(theta_2) for the pair maximum
        g = build_grid(2, (0, 8, 0, 8))
        s = spec("msp", grid=g)
        X = simulate(s, 20_000, make_rng(5)).data
        for (i, j) in [(0, 1), (0, 3)]:
            h = np.linalg.norm(g.sites[i] - g.sites[j])
            theta2 = 1.0 / np.mean(1.0 / np.maximum(X[:, i], X[:, j]))
            assert theta2 == pytest.approx(2 - chi_analytic(s, h), abs=0.05)

    def test_strong_dependence(self):
        X = simulate(spec("msp", lam=1e4, kappa=1.95), 5000, make_rng(6)).data
        assert empirical_chi(X, (0, 1), 0.95) > 0.9

    def test_max_stability(self):
        n = 5
        X = simulate(spec("msp", grid=G2), 10_000 * n, make_rng(7)).data
        M = X.reshape(10_000, n, 4).max(axis=1) / n
        for j in range(4):
            assert stats.kstest(M[:, j], lambda z: np.exp(-1 / z)).statistic < 0.02

    def test_imsp_duality(self):
        s_msp = spec("msp", grid=G2)
        s_imsp = spec("imsp", grid=G2)
        Z = simulate(s_msp, 50, make_rng(8)).data
        Y = simulate(s_imsp, 50, make_rng(8)).data
        np.testing.assert_array_equal(Y, 1.0 / Z)
        np.testing.assert_allclose(1.0 / (1.0 / Z), Z, rtol=1e-15)

    def test_imsp_exponential_margins(self):
        Y = simulate(spec("imsp"), 10_000, make_rng(9)).data
        assert stats.kstest(Y[:, 10], "expon").statistic < 0.02

    def test_imsp_distant_independence(self):
        Y = simulate(spec("imsp"), 20_000, make_rng(10)).data
        assert empirical_chi(Y, (0, 63), 0.99) < 0.15


class TestRPareto:
    def test_max_exceeds_one(self):
        X = simulate(spec("rpareto"), 2000, make_rng(11)).data
        assert np.all(X.max(axis=1) > 1)

    def test_max_is_unit_pareto(self):
        X = simulate(spec("rpareto", grid=grid_preset("g4")), 20_000, make_rng(12)).data
        assert stats.kstest(X.max(axis=1), lambda z: 1 - 1 / z).statistic < 0.02


class TestHw:
    def test_delta_zero_is_gp(self):
        W = simulate(spec("gp"), 20, make_rng(13)).data
        Z = simulate(spec("hw", delta=0.0), 20, make_rng(13)).data
        np.testing.assert_allclose(Z, 1.0 / (1.0 - W), rtol=1e-12)

    def test_delta_one_constant_fields(self):
        Z = simulate(spec("hw", delta=1.0), 20, make_rng(14)).data
        np.testing.assert_array_equal(Z, Z[:, :1].repeat(64, axis=1))

    @pytest.mark.parametrize("delta", [0.2, 0.5, 0.8])
    def test_pareto_margins(self, delta):
        Z = simulate(spec("hw", delta=delta), 10_000, make_rng(15)).data
        assert stats.kstest(Z[:, 20], lambda z: 1 - 1 / z).statistic < 0.02

    def test_dependence_regimes(self):
        strong = simulate(spec("hw", delta=0.7), 50_000, make_rng(16)).data
        assert empirical_chi(strong, (0, 1), 0.99) > 0.1
        weak = simulate(spec("hw", delta=0.3, lam=2.0), 200_000, make_rng(17)).data
        chis = [empirical_chi(weak, (0, 1), q) for q in (0.95, 0.99, 0.995)]
        assert chis[0] > chis[1] > chis[2]

    def test_batch_matches_family(self):
        s = spec("hw", delta=0.4)
        out = simulate_batch(s, [[4.0, 1.0, 0.4], [6.0, 1.5, 0.9]], 7, make_rng(18))
        assert out.shape == (2, 7, 64)
        assert np.all(out >= 1)


class TestHwCdf:
    @pytest.mark.parametrize("delta", [0.0, 1.0])
    def test_edges(self, delta):
        z = np.array([1.0, 1.5, 5.0, 20.0])
        np.testing.assert_array_equal(hw_marginal_cdf(z, delta), 1 - 1 / z)

    def test_support_endpoints(self):
        assert hw_marginal_cdf(1.0, 0.5) == 0.0
        assert hw_marginal_cdf(0.5, 0.3) == 0.0
        assert hw_marginal_cdf(1e12, 0.5) == pytest.approx(1.0)

    def test_continuity_at_half(self):
        for z in (1.5, 5.0, 20.0):
            f = hw_marginal_cdf(z, 0.5)
            assert abs(hw_marginal_cdf(z, 0.5 + 1e-6) - f) < 1e-4
            assert abs(hw_marginal_cdf(z, 0.5 - 1e-6) - f) < 1e-4

    def test_monotone(self):
        z = np.linspace(1, 50, 500)
        for d in (0.1, 0.5, 0.9):
            assert np.all(np.diff(hw_marginal_cdf(z, d)) > 0)

    def test_quadrature(self):
        # P(a E1 + b E2 > t) by numeric convolution
        from scipy.integrate import quad
        d, z = 0.3, 5.0
        t, a, b = np.log(z), d, 1 - d
        f = lambda x: np.exp(-x - max(t - a * x, 0) / b)
        sf = quad(f, 0, t / a, epsabs=1e-14)[0] + quad(f, t / a, np.inf, epsabs=1e-14)[0]
        assert hw_marginal_cdf(z, d) == pytest.approx(1 - sf, abs=1e-10)


class TestChi:
    def test_limits(self):
        s = spec("msp")
        assert chi_analytic(s, 0.0) == 1.0
        assert chi_analytic(s, 1e8) == pytest.approx(0.0, abs=1e-8)

    def test_not_applicable(self):
        with pytest.raises(NotApplicable):
            chi_analytic(spec("gp"), 1.0)

    def test_empirical_trivial(self):
        x = np.random.default_rng(0).random((1000, 1))
        assert empirical_chi(np.hstack([x, x]), (0, 1), 0.9) == 1.0
        assert empirical_chi(np.hstack([x, 2 * x + 1]), (0, 1), 0.9) == 1.0

    def test_empirical_independent(self):
        X = np.random.default_rng(1).random((100_000, 2))
        assert empirical_chi(X, (0, 1), 0.9) == pytest.approx(0.1, abs=0.01)

    def test_warns_on_few_exceedances(self):
        X = np.random.default_rng(2).random((50, 2))
        with pytest.warns(RuntimeWarning):
            empirical_chi(X, (0, 1), 0.9)


def test_marginal_transform_set():
    r = simulate(spec("msp", grid=G2), 30, make_rng(19))
    out = marginal_transform(r, "exp")
    assert out.margin is MarginTag.EXPONENTIAL
    np.testing.assert_allclose(out.data, -np.log1p(-np.exp(-1 / r.data)), rtol=1e-10)
