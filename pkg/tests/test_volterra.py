import numpy as np
import pytest

from roughcal.volterra import (ModelParams, PathBatch, TimeGrid,
                               TwoFactorParams, joint_covariance,
                               mc_price_surface, simulate_rbergomi,
                               simulate_two_factor, volterra_autocovariance,
                               volterra_cross_covariance)
from roughcal.surface import SurfaceGrid


def riemann_cov(s, t, hurst, n_sub=200_000):
    """Midpoint Riemann sum for 2H * int_0^s (t-u)^{H-1/2} (s-u)^{H-1/2} du
    after the desingularizing substitution s - u = z^{1/(H+1/2)}."""
    q = hurst + 0.5
    p = 1.0 / q
    upper = s ** q
    z = (np.arange(n_sub) + 0.5) * (upper / n_sub)
    integrand = (t - s + z ** p) ** (hurst - 0.5)
    return 2.0 * hurst * p * integrand.sum() * (upper / n_sub)


class TestAutocovariance:
    def test_diagonal_closed_form(self):
        t = np.array([0.1, 0.5, 1.0, 2.0])
        for h in (0.05, 0.2, 0.5):
            cov = volterra_autocovariance(t, h)
            np.testing.assert_allclose(np.diag(cov), t ** (2 * h), rtol=1e-14)

    def test_brownian_limit(self):
        # H = 1/2 makes the Volterra process standard Brownian motion
        t = np.array([0.2, 0.7, 1.3, 2.0])
        cov = volterra_autocovariance(t, 0.5)
        np.testing.assert_allclose(cov, np.minimum(t[:, None], t[None, :]),
                                   atol=1e-10)

    def test_against_riemann_oracle(self):
        rng = np.random.default_rng(5)
        for h in (0.05, 0.1, 0.3):
            s, t = np.sort(rng.uniform(0.05, 2.0, size=2))
            got = volterra_autocovariance(np.array([s, t]), h)[0, 1]
            want = riemann_cov(s, t, h)
            assert got == pytest.approx(want, abs=1e-8)

    def test_symmetry_and_validation(self):
        cov = volterra_autocovariance(np.array([0.3, 0.9, 1.7]), 0.12)
        np.testing.assert_allclose(cov, cov.T, atol=0)
        with pytest.raises(ValueError):
            volterra_autocovariance(np.array([0.5, 1.0]), 0.7)


class TestCrossCovariance:
    def test_against_quadrature(self):
        # Cov(W~_t, Z_s) = sqrt(2H) int_0^{min(s,t)} (t-u)^{H-1/2} du
        from scipy.integrate import quad

        rng = np.random.default_rng(9)
        for h in (0.07, 0.25, 0.5):
            for _ in range(5):
                t, s = rng.uniform(0.05, 2.0, size=2)
                m = min(s, t)
                # QAGS handles the endpoint singularity at u -> t when s >= t
                integral, _ = quad(lambda u: (t - u) ** (h - 0.5), 0.0, m)
                want = np.sqrt(2 * h) * integral
                got = volterra_cross_covariance(t, s, h)
                assert got == pytest.approx(want, rel=1e-8)

    def test_joint_covariance_blocks(self):
        grid = TimeGrid.uniform(dt=0.1, t_max=1.0)
        cov = joint_covariance(grid, 0.15)
        n = grid.n_steps
        assert cov.shape == (2 * n, 2 * n)
        np.testing.assert_allclose(cov, cov.T, atol=1e-12)
        t = grid.as_array()
        np.testing.assert_allclose(cov[n:, n:], np.minimum(t[:, None], t[None, :]))
        assert np.linalg.eigvalsh(cov).min() > -1e-10


class TestTimeGrid:
    def test_uniform_construction(self):
        g = TimeGrid.uniform(dt=0.01, t_max=2.0)
        assert g.n_steps == 200
        assert g.dt == pytest.approx(0.01)
        assert g.index_of(0.1) == 9
        assert g.contains([0.1, 0.3, 2.0])

    def test_rejects_bad_grids(self):
        with pytest.raises(ValueError):
            TimeGrid((0.0, 0.1))
        with pytest.raises(ValueError):
            TimeGrid((0.1, 0.2, 0.4))
        with pytest.raises(ValueError):
            TimeGrid((0.2, 0.3))  # first time != spacing
        g = TimeGrid.uniform(dt=0.01)
        with pytest.raises(ValueError):
            g.index_of(0.1234)


class TestModelParams:
    def test_validation(self):
        with pytest.raises(ValueError):
            ModelParams(-0.1, 1.0, -0.5, 0.1)
        with pytest.raises(ValueError):
            ModelParams(0.04, 1.0, -1.5, 0.1)
        with pytest.raises(ValueError):
            ModelParams(0.04, 1.0, -0.5, 0.6)

    def test_array_round_trip(self):
        p = ModelParams(0.04, 1.5, -0.7, 0.1)
        np.testing.assert_allclose(ModelParams.from_array(p.as_array()).as_array(),
                                   p.as_array())

    def test_two_factor_psd_check(self):
        with pytest.raises(ValueError):
            TwoFactorParams(0.04, 1.0, 0.5, 0.3, 5.0,
                            rho_wz=-0.95, rho_wy=0.95, rho_yz=0.9)


class TestSimulation:
    GRID = TimeGrid.uniform(dt=0.02, t_max=1.0)
    PARAMS = ModelParams(0.04, 1.5, -0.7, 0.12)

    def test_deterministic_given_seed(self):
        a = simulate_rbergomi(self.PARAMS, self.GRID, 500, seed=7)
        b = simulate_rbergomi(self.PARAMS, self.GRID, 500, seed=7)
        np.testing.assert_array_equal(a.log_price, b.log_price)
        c = simulate_rbergomi(self.PARAMS, self.GRID, 500, seed=8)
        assert not np.array_equal(a.log_price, c.log_price)

    def test_variance_mean_is_forward_variance(self):
        # Wick exponential: E[V_t] = xi0 at every t
        batch = simulate_rbergomi(self.PARAMS, self.GRID, 40_000, seed=1)
        mean_v = batch.variance.mean(axis=0)
        stderr = batch.variance.std(axis=0) / np.sqrt(batch.n_paths)
        assert np.all(np.abs(mean_v - self.PARAMS.xi0) < 5 * stderr + 1e-4)

    def test_spot_is_martingale(self):
        batch = simulate_rbergomi(self.PARAMS, self.GRID, 40_000, seed=2)
        s = batch.spot_at(1.0)
        assert abs(s.mean() - 1.0) < 5 * s.std() / np.sqrt(len(s))

    def test_float32_statistically_consistent_with_float64(self):
        # float32 draws a different normal stream for the same seed, so the
        # paths differ; the implied-vol surfaces must still agree to MC noise
        sg = SurfaceGrid(strikes=(0.9, 1.0, 1.1), maturities=(0.5, 1.0))
        a = simulate_rbergomi(self.PARAMS, self.GRID, 30_000, seed=3)
        b = simulate_rbergomi(self.PARAMS, self.GRID, 30_000, seed=3,
                              dtype=np.float32)
        iv64 = mc_price_surface(a, sg).values
        iv32 = mc_price_surface(b, sg).values
        assert np.all(np.isfinite(iv64)) and np.all(np.isfinite(iv32))
        assert np.max(np.abs(iv64 - iv32)) < 0.01

    def test_two_factor_moments(self):
        p = TwoFactorParams(0.05, 1.2, 0.4, 0.3, 4.0)
        batch = simulate_two_factor(p, self.GRID, 40_000, seed=4)
        mean_v = batch.variance.mean(axis=0)
        stderr = batch.variance.std(axis=0) / np.sqrt(batch.n_paths)
        assert np.all(np.abs(mean_v - p.xi0) < 5 * stderr + 1e-4)
        s = batch.spot_at(1.0)
        assert abs(s.mean() - 1.0) < 5 * s.std() / np.sqrt(len(s))


class TestSurfacePricing:
    def test_iv_surface_shape_and_stderr(self):
        grid = TimeGrid.uniform()
        params = ModelParams(0.09, 1.0, -0.6, 0.15)
        batch = simulate_rbergomi(params, grid, 8_000, seed=11, dtype=np.float32)
        surf = mc_price_surface(batch)
        assert surf.values.shape == (8, 11)
        finite = np.isfinite(surf.values)
        assert finite.mean() > 0.9
        assert np.all(surf.stderr[finite] > 0)

    def test_control_variate_reduces_noise(self):
        grid = TimeGrid.uniform(dt=0.02, t_max=1.0)
        sg = SurfaceGrid(strikes=(0.9, 1.0, 1.1), maturities=(0.5, 1.0))
        params = ModelParams(0.06, 1.0, -0.5, 0.2)
        batch = simulate_rbergomi(params, grid, 20_000, seed=12)
        with_cv = mc_price_surface(batch, sg, use_control_variate=True)
        without = mc_price_surface(batch, sg, use_control_variate=False)
        assert with_cv.stderr.mean() < without.stderr.mean()

    def test_off_grid_maturity_rejected(self):
        grid = TimeGrid.uniform(dt=0.02, t_max=1.0)
        params = ModelParams(0.06, 1.0, -0.5, 0.2)
        batch = simulate_rbergomi(params, grid, 100, seed=0)
        sg = SurfaceGrid(strikes=(1.0,), maturities=(0.517,))
        with pytest.raises(ValueError):
            mc_price_surface(batch, sg)

    def test_degenerate_nu_recovers_flat_vol(self):
        # nu -> 0 collapses rough Bergomi to Black-Scholes at vol sqrt(xi0)
        grid = TimeGrid.uniform(dt=0.02, t_max=1.0)
        sg = SurfaceGrid(strikes=(0.8, 0.9, 1.0, 1.1, 1.2),
                         maturities=(0.5, 1.0))
        params = ModelParams(0.09, 1e-8, -0.5, 0.2)
        batch = simulate_rbergomi(params, grid, 50_000, seed=13)
        surf = mc_price_surface(batch, sg)
        assert np.nanmax(np.abs(surf.values - 0.3)) < 5e-3
