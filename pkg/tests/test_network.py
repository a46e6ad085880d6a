import numpy as np
import pytest

from censored_nbe.exceptions import InvalidArgument, NumericalError
from censored_nbe.network import (
    Adam, Architecture, ConvSpec, DenseSpec, EstimatorWeights, desk_architecture, forward,
    gradient, init_weights, loss_value, grid16_architecture,
)
from censored_nbe.spatial import make_rng

TINY = Architecture(4, 2, (ConvSpec(2, 3),), (DenseSpec(4),), 2)


def tiny_weights(seed=0, arch=TINY):
    return init_weights(arch, make_rng(seed), dtype=np.float64)


def finite_difference(w, x, theta, loss, step=1e-5, **kw):
    fd = np.empty(w.params.size)
    for i in range(w.params.size):
        orig = w.params[i]
        w.params[i] = orig + step
        up = gradient(w, x, theta, loss, **kw)[0]
        w.params[i] = orig - step
        down = gradient(w, x, theta, loss, **kw)[0]
        w.params[i] = orig
        fd[i] = (up - down) / (2 * step)
    return fd


class TestArchitecture:
    def test_grid16_counts(self):
        a = grid16_architecture(w=2, p=2)
        assert a.layer_param_counts() == [6400 * 2 + 64, 204_928, 295_168, 128_500, 501 * 2]
        assert a.n_params == 628_660 + 12_800 + 1_002

    def test_grid16_single_channel(self):
        assert grid16_architecture(w=1).layer_param_counts()[0] == 6400 + 64

    def test_tau_input_widens_first_dense(self):
        a = grid16_architecture(tau_input=True)
        assert a.layer_param_counts()[3] == 128_500 + 500

    def test_summary_width(self):
        assert grid16_architecture().conv_output_shape == (1, 1, 256)
        assert desk_architecture().q == 64

    def test_too_deep(self):
        with pytest.raises(InvalidArgument):
            Architecture(4, 2, (ConvSpec(3, 8), ConvSpec(3, 8)), (), 2)

    def test_bad_channels(self):
        with pytest.raises(InvalidArgument):
            Architecture(4, 3, (), (), 2)

    def test_dict_roundtrip_and_fingerprint(self):
        a = desk_architecture(tau_input=True)
        assert Architecture.from_dict(a.to_dict()) == a
        assert len(a.fingerprint()) == 32
        assert a.fingerprint() != desk_architecture().fingerprint()

    def test_wrong_param_count(self):
        with pytest.raises(InvalidArgument):
            EstimatorWeights(TINY, np.zeros(10))


class TestForward:
    def test_shapes(self):
        w = tiny_weights()
        x = make_rng(1).random((5, 4, 4, 2))
        assert forward(w, x).shape == (2,)
        assert forward(w, np.stack([x, x, x])).shape == (3, 2)

    def test_shape_mismatch(self):
        with pytest.raises(InvalidArgument):
            forward(tiny_weights(), np.zeros((5, 4, 4, 1)))
        with pytest.raises(InvalidArgument):
            forward(tiny_weights(), np.zeros((5, 5, 4, 2)))

    def test_swap_bitwise(self):
        w = init_weights(desk_architecture(), make_rng(2))
        x = make_rng(3).random((2, 8, 8, 2)).astype(np.float32)
        assert np.array_equal(forward(w, x), forward(w, x[::-1]))

    def test_duplicate_replicates(self):
        w = init_weights(desk_architecture(), make_rng(4))
        x = make_rng(5).random((1, 8, 8, 2)).astype(np.float32)
        assert np.array_equal(forward(w, x), forward(w, np.repeat(x, 5, axis=0)))

    def test_zero_weights(self):
        w = EstimatorWeights(TINY, np.zeros(TINY.n_params))
        np.testing.assert_array_equal(forward(w, np.ones((3, 4, 4, 2))), 0.0)

    def test_output_map(self):
        w = EstimatorWeights(TINY, np.zeros(TINY.n_params), [6.0, 1.25], [4.0, 0.75])
        np.testing.assert_array_equal(forward(w, np.ones((3, 4, 4, 2))), [6.0, 1.25])

    def test_tau_required(self):
        arch = Architecture(4, 2, (ConvSpec(2, 3),), (DenseSpec(4),), 2, tau_input=True)
        w = tiny_weights(arch=arch)
        x = np.ones((3, 4, 4, 2))
        with pytest.raises(InvalidArgument):
            forward(w, x)
        assert not np.array_equal(forward(w, x, tau=0.85), forward(w, x, tau=0.95))

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_non_finite_reports_layer(self):
        w = tiny_weights()
        x = np.ones((2, 4, 4, 2))
        x[0, 0, 0, 0] = np.inf
        with pytest.raises(NumericalError) as err:
            forward(w, x)
        assert err.value.layer == 0


class TestGradient:
    @pytest.mark.parametrize("loss", ["absolute", "squared"])
    def test_against_finite_differences(self, loss):
        w = tiny_weights(7)
        assert w.params.size <= 200
        rng = make_rng(8)
        x = rng.random((3, 6, 4, 4, 2))
        theta = rng.random((3, 2))
        value, g = gradient(w, x, theta, loss)
        fd = finite_difference(w, x, theta, loss)
        rel = np.abs(g - fd) / np.maximum(np.abs(fd), 1e-6)
        assert rel.max() < 1e-4

    def test_tau_input_and_scale(self):
        arch = Architecture(4, 2, (ConvSpec(3, 2),), (DenseSpec(3),), 2, tau_input=True)
        w = tiny_weights(9, arch)
        w.out_scale = np.array([4.0, 0.75])
        rng = make_rng(10)
        x, theta, tau = rng.random((2, 3, 4, 4, 2)), rng.random((2, 2)), np.array([0.86, 0.93])
        kw = dict(tau=tau, scale=np.array([4.0, 0.75]))
        _, g = gradient(w, x, theta, "squared", **kw)
        fd = finite_difference(w, x, theta, "squared", **kw)
        assert np.max(np.abs(g - fd) / np.maximum(np.abs(fd), 1e-6)) < 1e-4

    def test_zero_targets_zero_output(self):
        w = EstimatorWeights(TINY, np.zeros(TINY.n_params))
        value, g = gradient(w, np.ones((2, 3, 4, 4, 2)), np.zeros((2, 2)), "squared")
        assert value == 0.0
        np.testing.assert_array_equal(g, 0.0)

    def test_absolute_subgradient_at_zero(self):
        w = EstimatorWeights(TINY, np.zeros(TINY.n_params))
        _, g = gradient(w, np.ones((1, 3, 4, 4, 2)), np.zeros((1, 2)), "absolute")
        np.testing.assert_array_equal(g, 0.0)

    def test_duplicated_batch(self):
        w = tiny_weights(11)
        rng = make_rng(12)
        x, theta = rng.random((1, 3, 4, 4, 2)), rng.random((1, 2))
        v1, g1 = gradient(w, x, theta, "squared")
        v2, g2 = gradient(w, np.repeat(x, 4, axis=0), np.repeat(theta, 4, axis=0), "squared")
        assert v1 == pytest.approx(v2, rel=1e-14)
        np.testing.assert_allclose(g1, g2, rtol=1e-12, atol=1e-15)

    def test_value_matches_loss(self):
        w = tiny_weights(13)
        rng = make_rng(14)
        x, theta = rng.random((4, 3, 4, 4, 2)), rng.random((4, 2))
        value, _ = gradient(w, x, theta, "absolute")
        assert value == pytest.approx(loss_value(theta, forward(w, x)).mean(), rel=1e-12)

    def test_unknown_loss(self):
        with pytest.raises(InvalidArgument):
            gradient(tiny_weights(), np.ones((1, 3, 4, 4, 2)), np.zeros((1, 2)), "huber")


def test_loss_value_pointwise():
    assert loss_value([1.0], [3.0], "absolute") == 2.0
    assert loss_value([1.0], [3.0], "squared") == 4.0
    assert loss_value([1.0, 1.0], [3.0, 0.0], "absolute", scale=[2.0, 1.0]) == 2.0


def test_adam_minimises_quadratic():
    x = np.array([3.0, -2.0])
    opt = Adam(2, lr=0.05)
    for _ in range(2000):
        opt.step(x, 2 * x)
    np.testing.assert_allclose(x, 0.0, atol=1e-3)
