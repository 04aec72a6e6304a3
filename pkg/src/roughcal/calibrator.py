"""Levenberg-Marquardt calibration over a surrogate implied-vol map,
surface interpolation for off-grid quotes, and error metrics."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.interpolate import CubicSpline

LAMBDA_MIN = 1e-12
LAMBDA_MAX = 1e12


class CalibrationError(RuntimeError):
    pass


@dataclass(frozen=True)
class LMConfig:
    lambda0: float = 1e-2
    n_max: int = 200
    eps_min: float = 1e-10
    beta0: float = 0.25
    beta1: float = 0.75

    def __post_init__(self):
        if self.lambda0 <= 0:
            raise ValueError("lambda0 must be positive")
        if not 0 < self.beta0 < self.beta1 < 1:
            raise ValueError("need 0 < beta0 < beta1 < 1")


@dataclass
class CalibrationProblem:
    """Weighted least squares fit of a surrogate to target vols.

    forward(theta) -> model vols (m,); jacobian(theta) -> (m, 4), both in
    raw parameter coordinates. weights are the per-quote beta_j > 0.
    """

    forward: callable
    jacobian: callable
    target: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    theta0: np.ndarray | None = None
    weights: np.ndarray | float = 1.0

    def __post_init__(self):
        self.target = np.asarray(self.target, dtype=float)
        self.lower = np.asarray(self.lower, dtype=float)
        self.upper = np.asarray(self.upper, dtype=float)
        if self.target.size < 5:
            raise ValueError("need at least 5 quotes for a 4-parameter fit")
        w = np.asarray(self.weights, dtype=float) * np.ones_like(self.target)
        if np.any(w <= 0):
            raise ValueError("weights must be positive")
        self.weights = w
        if self.theta0 is None:
            self.theta0 = 0.5 * (self.lower + self.upper)
        self.theta0 = np.asarray(self.theta0, dtype=float)
        if np.any(self.theta0 < self.lower) or np.any(self.theta0 > self.upper):
            raise ValueError("theta0 outside the feasible box")


@dataclass
class CalibrationReport:
    theta_hat: np.ndarray
    iterations: int
    final_rmse: float
    converged: bool
    trace: list = field(default_factory=list)  # (lambda, gain ratio, accepted)
    relative_errors: np.ndarray | None = None

    def to_dict(self):
        d = {
            "theta_hat": self.theta_hat.tolist(),
            "iterations": self.iterations,
            "final_rmse": self.final_rmse,
            "converged": self.converged,
            "trace": [[float(a), float(b), bool(c)] for a, b, c in self.trace],
        }
        if self.relative_errors is not None:
            d["relative_errors"] = self.relative_errors.tolist()
        return d

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))


def _weighted_norm(r, w):
    return float(np.sqrt(np.sum(w * r * r)))


def lm_calibrate(problem, cfg=LMConfig()):
    """Damped Gauss-Newton iteration with a gain-ratio lambda schedule.

    Solves [J^T W J + lambda I] step = -J^T W R; the gain ratio compares the
    actual decrease of ||R||_W against the linear-model prediction. A step
    is rejected (lambda doubled) below beta0, accepted with halved lambda
    above beta1, accepted with unchanged lambda in between. Accepted
    iterates are projected onto the feasible box.
    """
    theta = problem.theta0.copy()
    w = problem.weights
    lam = cfg.lambda0
    trace = []
    r = problem.forward(theta) - problem.target
    jac = problem.jacobian(theta)
    n = 0
    converged = False
    while n < cfg.n_max:
        a = jac.T @ (w[:, None] * jac) + lam * np.eye(len(theta))
        g = jac.T @ (w * r)
        try:
            step = np.linalg.solve(a, -g)
        except np.linalg.LinAlgError:
            raise CalibrationError(
                f"singular normal matrix at lambda={lam:.3e} (cond issue)"
            )
        if np.linalg.norm(step) <= cfg.eps_min:
            converged = True
            break
        r_new = problem.forward(theta + step) - problem.target
        actual = _weighted_norm(r, w) - _weighted_norm(r_new, w)
        predicted = _weighted_norm(r, w) - _weighted_norm(r + jac @ step, w)
        gain = actual / predicted if predicted > 0 else -np.inf
        if gain <= cfg.beta0:
            lam *= 2.0
            trace.append((lam, gain, False))
        else:
            theta = np.clip(theta + step, problem.lower, problem.upper)
            if gain >= cfg.beta1:
                lam *= 0.5
            trace.append((lam, gain, True))
            r = problem.forward(theta) - problem.target
            jac = problem.jacobian(theta)
        # a tiny lambda just means pure Gauss-Newton progress; only runaway
        # growth (no acceptable step exists) is a failure
        lam = max(lam, LAMBDA_MIN)
        if lam > LAMBDA_MAX:
            raise CalibrationError(f"lambda {lam:.3e} exceeded {LAMBDA_MAX}")
        n += 1
    final = problem.forward(theta) - problem.target
    return CalibrationReport(
        theta_hat=theta,
        iterations=n,
        final_rmse=rmse_residual(final),
        converged=converged or n < cfg.n_max,
        trace=trace,
    )


def lm_calibrate_multistart(problem, cfg=LMConfig(), n_starts=5, seed=0):
    """Best-of-n LM runs from seeded uniform starts in the box."""
    rng = np.random.default_rng(seed)
    best = None
    starts = [problem.theta0] + [
        problem.lower + (problem.upper - problem.lower) * rng.uniform(size=4)
        for _ in range(n_starts - 1)
    ]
    for th0 in starts:
        p = CalibrationProblem(
            forward=problem.forward, jacobian=problem.jacobian,
            target=problem.target, lower=problem.lower, upper=problem.upper,
            theta0=th0, weights=problem.weights,
        )
        rep = lm_calibrate(p, cfg)
        if best is None or rep.final_rmse < best.final_rmse:
            best = rep
    return best


# ---------------------------------------------------------------------------
# Error metrics
# ---------------------------------------------------------------------------

def rmse_residual(residual):
    """Root of the unnormalized sum of squared node differences."""
    return float(np.sqrt(np.sum(np.asarray(residual, float) ** 2)))


def rmse(surface_hat, surface_target):
    return rmse_residual(np.asarray(surface_hat, float) - np.asarray(surface_target, float))


def relative_error(theta_hat, theta_bar):
    """Per-parameter |theta_hat - theta_bar| / |theta_bar| and the aggregate
    norm ratio ||theta_hat - theta_bar|| / ||theta_bar||."""
    th, tb = np.asarray(theta_hat, float), np.asarray(theta_bar, float)
    per = np.abs(th - tb) / np.abs(tb)
    agg = float(np.linalg.norm(th - tb) / np.linalg.norm(tb))
    return per, agg


# ---------------------------------------------------------------------------
# Surface interpolation
# ---------------------------------------------------------------------------

def interpolate_surface(grid, values, t, k):
    """IV at (t, k) inside the grid hull: natural cubic spline in strike per
    maturity slice, then linear interpolation in total variance sigma^2 * T
    across maturities. Reproduces node values exactly."""
    strikes = grid.strike_array()
    mats = grid.maturity_array()
    values = np.asarray(values, dtype=float).reshape(grid.n_maturities, grid.n_strikes)
    if not (strikes[0] - 1e-12 <= k <= strikes[-1] + 1e-12):
        raise ValueError(f"strike {k} outside grid range [{strikes[0]}, {strikes[-1]}]")
    if not (mats[0] - 1e-12 <= t <= mats[-1] + 1e-12):
        raise ValueError(f"maturity {t} outside grid range [{mats[0]}, {mats[-1]}]")
    vols_at_k = np.array([
        CubicSpline(strikes, values[i], bc_type="natural")(k)
        for i in range(grid.n_maturities)
    ])
    i = int(np.searchsorted(mats, t))
    if i < len(mats) and abs(mats[i] - t) <= 1e-12:
        return float(vols_at_k[i])
    if i > 0 and abs(mats[i - 1] - t) <= 1e-12:
        return float(vols_at_k[i - 1])
    lo, hi = i - 1, i
    w_lo, w_hi = vols_at_k[lo] ** 2 * mats[lo], vols_at_k[hi] ** 2 * mats[hi]
    frac = (t - mats[lo]) / (mats[hi] - mats[lo])
    total_var = w_lo + frac * (w_hi - w_lo)
    return float(np.sqrt(max(total_var, 0.0) / t))
