"""Exact-covariance Monte Carlo for the rough Bergomi and two-factor Bergomi models.

The rough Bergomi variance is a Wick exponential of the Volterra process
W~_t = sqrt(2H) int_0^t (t-s)^{H-1/2} dZ_s. We sample (W~, Z) jointly on a
uniform time grid from the exact joint Gaussian law (Cholesky of the 2N x 2N
covariance), then advance the log price by an Euler step.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.legendre import leggauss

from .blackscholes import implied_vol_vec
from .surface import IVSurface, SurfaceGrid


class SimulationError(RuntimeError):
    """Non-finite samples or a covariance that cannot be factorized."""


@dataclass(frozen=True)
class ModelParams:
    """Rough Bergomi parameter point (xi0, nu, rho, H)."""

    xi0: float
    nu: float
    rho: float
    hurst: float

    def __post_init__(self):
        if self.xi0 <= 0:
            raise ValueError(f"xi0 must be positive, got {self.xi0}")
        if self.nu <= 0:
            raise ValueError(f"nu must be positive, got {self.nu}")
        if not -1.0 <= self.rho <= 1.0:
            raise ValueError(f"rho must be in [-1, 1], got {self.rho}")
        if not 0.0 < self.hurst <= 0.5:
            raise ValueError(f"hurst must be in (0, 1/2], got {self.hurst}")

    def as_array(self):
        return np.array([self.xi0, self.nu, self.rho, self.hurst])

    @classmethod
    def from_array(cls, a):
        return cls(float(a[0]), float(a[1]), float(a[2]), float(a[3]))


@dataclass(frozen=True)
class TwoFactorParams:
    """Two-factor Bergomi: variance driven by a theta_mix blend of two
    exponential (OU-type) integrals with speeds kappa_x, kappa_y.

    rho_wz / rho_wy / rho_yz correlate the price driver W with the two
    variance drivers Z, Y and Z with Y; the 3x3 matrix must be PSD.
    """

    xi0: float
    nu: float
    theta_mix: float
    kappa_x: float
    kappa_y: float
    rho_wz: float = -0.7
    rho_wy: float = -0.3
    rho_yz: float = 0.0

    def __post_init__(self):
        if self.xi0 <= 0 or self.nu <= 0:
            raise ValueError("xi0 and nu must be positive")
        if not 0.0 <= self.theta_mix <= 1.0:
            raise ValueError(f"theta_mix must be in [0, 1], got {self.theta_mix}")
        if self.kappa_x <= 0 or self.kappa_y <= 0:
            raise ValueError("kappa_x and kappa_y must be positive")
        eig = np.linalg.eigvalsh(self.correlation_matrix())
        if eig.min() < -1e-12:
            raise ValueError("correlation matrix of (W, Y, Z) is not PSD")

    def correlation_matrix(self):
        return np.array(
            [
                [1.0, self.rho_wy, self.rho_wz],
                [self.rho_wy, 1.0, self.rho_yz],
                [self.rho_wz, self.rho_yz, 1.0],
            ]
        )


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid t_1 < ... < t_N (t_0 = 0 is implicit)."""

    times: tuple

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        if t.ndim != 1 or len(t) < 2:
            raise ValueError("need at least two grid times")
        dt = np.diff(t)
        if t[0] <= 0 or np.any(dt <= 0):
            raise ValueError("times must be strictly increasing and positive")
        if not np.allclose(dt, t[1] - t[0], rtol=0, atol=1e-12):
            raise ValueError("time grid must be uniform")
        if not np.isclose(t[0], t[1] - t[0], rtol=0, atol=1e-12):
            raise ValueError("first grid time must equal the spacing")

    @classmethod
    def uniform(cls, dt=0.01, t_max=2.0):
        n = int(round(t_max / dt))
        return cls(tuple((np.arange(1, n + 1) * dt).tolist()))

    @property
    def dt(self):
        return self.times[1] - self.times[0]

    @property
    def n_steps(self):
        return len(self.times)

    def as_array(self):
        return np.asarray(self.times, dtype=float)

    def index_of(self, t):
        """Index of maturity t; raises if t is not on the grid."""
        arr = self.as_array()
        i = int(np.argmin(np.abs(arr - t)))
        if abs(arr[i] - t) > 1e-9:
            raise ValueError(f"maturity {t} is not a node of the time grid")
        return i

    def contains(self, maturities):
        arr = self.as_array()
        return all(np.min(np.abs(arr - t)) <= 1e-9 for t in maturities)


@dataclass
class PathBatch:
    """Simulated log-price and variance paths on a TimeGrid."""

    grid: TimeGrid
    log_price: np.ndarray  # (n_paths, N)
    variance: np.ndarray  # (n_paths, N)
    seed: int

    @property
    def n_paths(self):
        return self.log_price.shape[0]

    def spot_at(self, t):
        return np.exp(self.log_price[:, self.grid.index_of(t)])


# ---------------------------------------------------------------------------
# Volterra covariance
# ---------------------------------------------------------------------------

_GL_NODES, _GL_WEIGHTS = leggauss(12)
_N_PANELS = 12
_PANEL_RATIO = 0.5


def volterra_autocovariance(times, hurst):
    """Covariance matrix of the Volterra process on the grid.

    Cov(W~_ti, W~_tj) = 2H int_0^{min} (ti-u)^{H-1/2} (tj-u)^{H-1/2} du.
    The diagonal is t^{2H} in closed form. Off-diagonal entries integrate,
    after the power substitution s-u = z^{1/(H+1/2)} that removes the
    endpoint singularity, with graded composite Gauss-Legendre panels.
    """
    if not 0.0 < hurst <= 0.5:
        raise ValueError(f"hurst must be in (0, 1/2], got {hurst}")
    t = times.as_array() if isinstance(times, TimeGrid) else np.asarray(times, float)
    n = len(t)
    cov = np.zeros((n, n))
    np.fill_diagonal(cov, t ** (2.0 * hurst))
    iu, ju = np.triu_indices(n, k=1)
    if len(iu):
        cov_vals = _volterra_cov_pairs(t[iu], t[ju], hurst)  # s < t pairs
        cov[iu, ju] = cov_vals
        cov[ju, iu] = cov_vals
    eig_min = np.linalg.eigvalsh(cov).min()
    if eig_min < -1e-10 * max(1.0, cov.diagonal().max()):
        raise SimulationError(f"autocovariance not PSD (min eigenvalue {eig_min:.3e})")
    return cov


def _volterra_cov_pairs(s, t, hurst):
    """Vectorized 2H * int_0^s (t-u)^{H-1/2} (s-u)^{H-1/2} du for s < t.

    Substituting s - u = z^p with p = 1/(H+1/2) gives
    p * int_0^{s^(1/p)} (t - s + z^p)^{H-1/2} dz, a bounded integrand.
    """
    q = hurst + 0.5
    p = 1.0 / q
    gap = t - s
    upper = s ** q
    # graded geometric panels toward z = 0 where curvature concentrates
    edges = upper[None, :] * (_PANEL_RATIO ** np.arange(_N_PANELS + 1))[::-1, None]
    edges[0, :] = 0.0
    a, b = edges[:-1], edges[1:]
    half = 0.5 * (b - a)
    mid = 0.5 * (b + a)
    # z: (panels, nodes, pairs)
    z = mid[:, None, :] + half[:, None, :] * _GL_NODES[None, :, None]
    integrand = (gap[None, None, :] + z ** p) ** (hurst - 0.5)
    panel_sums = np.einsum("k,pkn->pn", _GL_WEIGHTS, integrand) * half
    return 2.0 * hurst * p * panel_sums.sum(axis=0)


def volterra_cross_covariance(t, s, hurst):
    """Cov(W~_t, Z_s) = sqrt(2H)/(H+1/2) * (t^{H+1/2} - (t - min(s,t))^{H+1/2})."""
    if not 0.0 < hurst <= 0.5:
        raise ValueError(f"hurst must be in (0, 1/2], got {hurst}")
    t = np.asarray(t, dtype=float)
    s = np.asarray(s, dtype=float)
    q = hurst + 0.5
    coef = np.sqrt(2.0 * hurst) / q
    return coef * (t ** q - np.maximum(t - np.minimum(s, t), 0.0) ** q)


def joint_covariance(grid, hurst):
    """Covariance of (W~_{t_1..t_N}, Z_{t_1..t_N}), shape (2N, 2N)."""
    t = grid.as_array()
    n = len(t)
    cov = np.empty((2 * n, 2 * n))
    cov[:n, :n] = volterra_autocovariance(grid, hurst)
    cross = volterra_cross_covariance(t[:, None], t[None, :], hurst)
    cov[:n, n:] = cross
    cov[n:, :n] = cross.T
    cov[n:, n:] = np.minimum(t[:, None], t[None, :])
    return cov


def _safe_cholesky(cov):
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        pass
    try:
        return np.linalg.cholesky(cov + 1e-12 * np.eye(len(cov)))
    except np.linalg.LinAlgError:
        # eigenvalue clipping at 0, then refactorize with jitter
        w, v = np.linalg.eigh(cov)
        cov_clipped = (v * np.maximum(w, 0.0)) @ v.T
        return np.linalg.cholesky(cov_clipped + 1e-12 * np.eye(len(cov)))


# ---------------------------------------------------------------------------
# Path simulation
# ---------------------------------------------------------------------------

_BLOCK_PATHS = 20_000


def simulate_rbergomi(params, grid, n_paths, seed, dtype=np.float64):
    """Simulate rough Bergomi paths; deterministic given (seed, dtype).

    V_t = xi0 * exp(nu * W~_t - 0.5 * nu^2 * t^{2H}); Euler log-price steps
    with dW = rho dZ + sqrt(1-rho^2) dZperp. dtype=np.float32 roughly halves
    the cost of bulk data generation; the float32 rounding error is far
    below the Monte Carlo noise at practical path counts.
    """
    t = grid.as_array()
    n = grid.n_steps
    dt = grid.dt
    chol = _safe_cholesky(joint_covariance(grid, params.hurst)).astype(dtype)

    drift = (-0.5 * params.nu ** 2 * t ** (2.0 * params.hurst)).astype(dtype)
    sqrt_dt = dtype(np.sqrt(dt))
    rho = dtype(params.rho)
    rho_perp = dtype(np.sqrt(max(1.0 - params.rho ** 2, 0.0)))

    log_price = np.empty((n_paths, n), dtype=dtype)
    variance = np.empty((n_paths, n), dtype=dtype)
    streams = np.random.SeedSequence(seed).spawn(-(-n_paths // _BLOCK_PATHS))
    start = 0
    for ss in streams:
        m = min(_BLOCK_PATHS, n_paths - start)
        rng = np.random.default_rng(ss)
        normals = rng.standard_normal((2 * n, m), dtype=dtype)
        paths = chol @ normals
        w_tilde = paths[:n]
        z = paths[n:]
        v = dtype(params.xi0) * np.exp(dtype(params.nu) * w_tilde + drift[:, None])
        dz = np.diff(z, axis=0, prepend=dtype(0.0))
        dz_perp = rng.standard_normal((n, m), dtype=dtype)
        dz_perp *= sqrt_dt
        dw = rho * dz + rho_perp * dz_perp
        v_left = np.vstack([np.full((1, m), params.xi0, dtype=dtype), v[:-1]])
        dx = dtype(-0.5 * dt) * v_left + np.sqrt(v_left) * dw
        x = np.cumsum(dx, axis=0)
        log_price[start : start + m] = x.T
        variance[start : start + m] = v.T
        start += m
    if not (np.isfinite(log_price).all() and np.isfinite(variance).all()):
        raise SimulationError(
            f"non-finite sample for params {params} on grid dt={dt}, N={n}"
        )
    return PathBatch(grid=grid, log_price=log_price, variance=variance, seed=seed)


def simulate_two_factor(params, grid, n_paths, seed):
    """Two-factor Bergomi: exact per-step Gaussian recursion for the two
    exponential integrals, Wick-normalized variance, Euler log-price."""
    t = grid.as_array()
    n = grid.n_steps
    dt = grid.dt
    kx, ky = params.kappa_x, params.kappa_y
    th = params.theta_mix

    # per-step covariance of (dW, IY, IX) where IX = int e^{-kx(t_{i+1}-s)} dZ_s etc.
    def _ou_var(k):
        return (1.0 - np.exp(-2.0 * k * dt)) / (2.0 * k)

    def _ou_cross(ka, kb, corr):
        return corr * (1.0 - np.exp(-(ka + kb) * dt)) / (ka + kb)

    cov_step = np.array(
        [
            [dt, params.rho_wy * (1 - np.exp(-ky * dt)) / ky, params.rho_wz * (1 - np.exp(-kx * dt)) / kx],
            [0.0, _ou_var(ky), _ou_cross(kx, ky, params.rho_yz)],
            [0.0, 0.0, _ou_var(kx)],
        ]
    )
    cov_step = cov_step + np.triu(cov_step, 1).T
    chol = _safe_cholesky(cov_step)

    # Var(M_t) of the mixed integral for the Wick normalization
    var_x = (1.0 - np.exp(-2.0 * kx * t)) / (2.0 * kx)
    var_y = (1.0 - np.exp(-2.0 * ky * t)) / (2.0 * ky)
    cov_xy = params.rho_yz * (1.0 - np.exp(-(kx + ky) * t)) / (kx + ky)
    var_m = (1 - th) ** 2 * var_x + th ** 2 * var_y + 2 * th * (1 - th) * cov_xy

    decay_x = np.exp(-kx * dt)
    decay_y = np.exp(-ky * dt)

    log_price = np.empty((n_paths, n))
    variance = np.empty((n_paths, n))
    streams = np.random.SeedSequence(seed).spawn(-(-n_paths // _BLOCK_PATHS))
    start = 0
    for ss in streams:
        m = min(_BLOCK_PATHS, n_paths - start)
        rng = np.random.default_rng(ss)
        shocks = np.einsum("ij,sjm->sim", chol, rng.standard_normal((n, 3, m)))
        ax = np.zeros(m)
        ay = np.zeros(m)
        x = np.zeros(m)
        v_left = np.full(m, params.xi0)
        for i in range(n):
            dw, iy, ix = shocks[i]
            x = x - 0.5 * v_left * dt + np.sqrt(v_left) * dw
            ax = decay_x * ax + ix
            ay = decay_y * ay + iy
            mix = (1 - th) * ax + th * ay
            v = params.xi0 * np.exp(params.nu * mix - 0.5 * params.nu ** 2 * var_m[i])
            log_price[start : start + m, i] = x
            variance[start : start + m, i] = v
            v_left = v
        start += m
    if not (np.isfinite(log_price).all() and np.isfinite(variance).all()):
        raise SimulationError(f"non-finite sample for two-factor params {params}")
    return PathBatch(grid=grid, log_price=log_price, variance=variance, seed=seed)


# ---------------------------------------------------------------------------
# Surface pricing
# ---------------------------------------------------------------------------

def mc_price_surface(batch, surface_grid=None, use_control_variate=True):
    """Call prices on the grid, inverted to implied vols.

    Per node the spot martingale condition E[S_T] = 1 supplies the control
    variate S_T - 1 with a per-node least-squares coefficient. Prices
    outside the no-arbitrage bounds leave NaN at the node.
    """
    grid = surface_grid or SurfaceGrid()
    if not batch.grid.contains(grid.maturities):
        raise ValueError("all maturities must lie on the simulation time grid")
    strikes = grid.strike_array()
    n_paths = batch.n_paths
    prices = np.empty((grid.n_maturities, grid.n_strikes))
    stderrs = np.empty_like(prices)
    for i, mat in enumerate(grid.maturities):
        spot = batch.spot_at(mat)
        cv = spot - 1.0
        var_cv = np.var(cv)
        payoff = np.maximum(spot[:, None] - strikes[None, :], 0.0)  # (paths, strikes)
        if use_control_variate and var_cv > 0:
            beta = (
                np.mean(payoff * cv[:, None], axis=0)
                - payoff.mean(axis=0) * cv.mean()
            ) / var_cv
        else:
            beta = np.zeros(grid.n_strikes)
        adjusted = payoff - beta[None, :] * cv[:, None]
        prices[i] = adjusted.mean(axis=0)
        stderrs[i] = adjusted.std(axis=0, ddof=1) / np.sqrt(n_paths)
    mats = grid.maturity_array()[:, None]
    ivs = implied_vol_vec(prices, mats, strikes[None, :])
    # delta-method IV standard error: price stderr / vega
    with np.errstate(invalid="ignore", divide="ignore"):
        srt = ivs * np.sqrt(mats)
        d1 = -np.log(strikes[None, :]) / srt + 0.5 * srt
        vega = np.sqrt(mats) * np.exp(-0.5 * d1 ** 2) / np.sqrt(2 * np.pi)
        iv_stderr = np.where(np.isfinite(ivs) & (vega > 0), stderrs / vega, np.nan)
    return IVSurface(grid=grid, values=ivs, stderr=iv_stderr)
