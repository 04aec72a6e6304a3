import numpy as np
import pytest

from roughcal.neuralnet import AdamConfig
from roughcal.onestep import (ConvNetwork, _pool_backward, _pool_forward,
                              conv_forward, conv_gradients, init_conv_network,
                              invert_surface, load_conv_network,
                              out_of_sample_study, save_conv_network,
                              train_inverse)


class TestArchitecture:
    def test_paper_parameter_count(self):
        net = init_conv_network(seed=0)
        assert net.param_count == 10_014

    def test_output_shapes(self):
        net = init_conv_network(seed=1)
        x = np.random.default_rng(0).uniform(0.1, 0.4, size=(7, 8, 11))
        assert conv_forward(net, x).shape == (7, 4)
        assert conv_forward(net, x[0]).shape == (4,)

    def test_missing_nodes_rejected(self):
        net = init_conv_network(seed=1)
        x = np.full((8, 11), 0.2)
        x[0, 0] = np.nan
        with pytest.raises(ValueError):
            conv_forward(net, x)

    def test_identity_kernel_is_affine_map(self):
        # a center-only kernel makes the conv layer pass cropped input through
        net = init_conv_network(seed=2, n_filters=1)
        net.kernels[:] = 0.0
        net.kernels[0, 1, 1] = 1.0
        net.conv_bias[:] = 0.25
        x = np.random.default_rng(3).uniform(0.1, 0.4, size=(1, 8, 11))
        from roughcal.onestep import _conv2d
        c = _conv2d(x, net.kernels, net.conv_bias)
        np.testing.assert_allclose(c[0, :, :, 0], x[0, 1:-1, 1:-1] + 0.25,
                                   rtol=1e-14)


class TestPooling:
    def test_floor_division_drops_odd_column(self):
        c = np.random.default_rng(4).normal(size=(2, 6, 9, 3))
        pooled, _ = _pool_forward(c)
        assert pooled.shape == (2, 3, 4, 3)
        # the 9th column (index 8) never contributes
        c2 = c.copy()
        c2[:, :, 8, :] = 99.0
        pooled2, _ = _pool_forward(c2)
        np.testing.assert_array_equal(pooled, pooled2)

    def test_max_values(self):
        c = np.arange(2 * 2 * 1.0).reshape(1, 2, 2, 1)
        pooled, arg = _pool_forward(c)
        assert pooled[0, 0, 0, 0] == 3.0

    def test_tie_breaks_to_first_index(self):
        c = np.zeros((1, 2, 2, 1))  # all equal: argmax must pick slot 0
        _, arg = _pool_forward(c)
        assert arg[0, 0, 0, 0] == 0
        grad = _pool_backward(np.ones((1, 1, 1, 1)), arg, c.shape)
        # gradient routes to the first (row 0, col 0) element only
        assert grad[0, 0, 0, 0] == 1.0
        assert grad.sum() == 1.0

    def test_backward_scatters_to_argmax(self):
        c = np.random.default_rng(5).normal(size=(3, 6, 8, 4))
        pooled, arg = _pool_forward(c)
        g = np.random.default_rng(6).normal(size=pooled.shape)
        back = _pool_backward(g, arg, c.shape)
        assert back.shape == c.shape
        assert np.count_nonzero(back) <= g.size
        assert back.sum() == pytest.approx(g.sum(), rel=1e-12)


class TestGradients:
    def test_matches_finite_differences(self):
        net = init_conv_network(seed=7)
        rng = np.random.default_rng(8)
        x = rng.uniform(0.1, 0.4, size=(4, 8, 11))
        y = rng.normal(size=(4, 4))

        def loss(n):
            return float(np.sum((conv_forward(n, x) - y) ** 2))

        grads = conv_gradients(net, x, 2.0 * (conv_forward(net, x) - y))
        h = 1e-6
        for pi, g in enumerate(grads):
            p = net.params()[pi]
            for _ in range(4):
                idx = tuple(rng.integers(0, s) for s in p.shape)
                up, dn = net.copy(), net.copy()
                up.params()[pi][idx] += h
                dn.params()[pi][idx] -= h
                fd = (loss(up) - loss(dn)) / (2 * h)
                assert g[idx] == pytest.approx(fd, rel=1e-4, abs=1e-7)


class TestTraining:
    def synthetic_task(self, n=80):
        # surfaces that depend linearly on a latent 4-vector
        rng = np.random.default_rng(9)
        basis = rng.normal(size=(4, 8, 11))
        theta = rng.uniform(-1, 1, size=(n, 4))
        x = 0.2 + 0.02 * np.einsum("np,phw->nhw", theta, basis)
        return x, theta

    def test_loss_decreases(self):
        x, theta = self.synthetic_task()
        net = init_conv_network(seed=10)
        cfg = AdamConfig(epochs=60, batch_size=16, seed=0)
        _, hist = train_inverse(net, x, theta, cfg)
        assert hist["train_loss"][-1] < 0.2 * hist["train_loss"][0]

    def test_zero_epochs_is_identity(self):
        x, theta = self.synthetic_task(10)
        net = init_conv_network(seed=11)
        trained, hist = train_inverse(net, x, theta,
                                      AdamConfig(epochs=0, seed=0))
        np.testing.assert_array_equal(trained.kernels, net.kernels)
        assert hist["train_loss"] == []

    def test_deterministic(self):
        x, theta = self.synthetic_task(20)
        net = init_conv_network(seed=12)
        cfg = AdamConfig(epochs=3, batch_size=8, seed=4)
        a, ha = train_inverse(net, x, theta, cfg)
        b, hb = train_inverse(net, x, theta, cfg)
        assert ha["train_loss"] == hb["train_loss"]
        np.testing.assert_array_equal(a.w_dense, b.w_dense)


class TestInversion:
    def test_invert_surface_stays_in_box(self, prior):
        net = init_conv_network(seed=13)
        x = np.random.default_rng(14).uniform(0.1, 0.4, size=(8, 11))
        theta = invert_surface(net, x, prior)
        assert prior.contains(theta)

    def test_out_of_sample_study_shapes(self, random_surrogate):
        net = init_conv_network(seed=15)
        targets = [random_surrogate.surface_matrix(random_surrogate.prior.midpoint())
                   for _ in range(2)]
        rmse_nn, rmse_mc = out_of_sample_study(net, random_surrogate, targets)
        assert rmse_nn.shape == rmse_mc.shape == (2,)
        assert np.all(rmse_nn >= 0) and np.all(rmse_mc >= 0)


class TestPersistence:
    def test_round_trip(self, tmp_path):
        net = init_conv_network(seed=16)
        path = tmp_path / "conv.json"
        save_conv_network(net, path, extra={"tag": 1})
        back, doc = load_conv_network(path)
        assert doc["tag"] == 1 and doc["kind"] == "conv"
        x = np.random.default_rng(17).uniform(0.1, 0.4, size=(3, 8, 11))
        np.testing.assert_allclose(conv_forward(back, x), conv_forward(net, x),
                                   rtol=1e-15)

    def test_dense_file_rejected(self, tmp_path):
        from roughcal.neuralnet import init_network, save_network
        path = tmp_path / "dense.json"
        save_network(init_network([4, 5, 2], seed=0), path)
        with pytest.raises(ValueError):
            load_conv_network(path)
