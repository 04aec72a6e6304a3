"""Bayesian parameter inference over the surrogate map.

Quote preprocessing with inverse-spread liquidity weights, a Gaussian
likelihood on weighted residuals, an affine-invariant ensemble (stretch
move) sampler, and posterior summaries.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

DEFAULT_SPREAD_CUT = 0.05
DEFAULT_SIGMA_FRAC = 0.5
DEFAULT_WEIGHT_CAP = 1e3


class EmptyQuoteSetError(ValueError):
    """All quotes were filtered out by the liquidity rule."""


@dataclass(frozen=True)
class RawQuote:
    maturity: float
    strike: float
    bid_iv: float
    ask_iv: float

    def __post_init__(self):
        if not 0 < self.bid_iv <= self.ask_iv:
            raise ValueError(f"need 0 < bid <= ask, got {self.bid_iv}, {self.ask_iv}")


@dataclass(frozen=True)
class WeightedQuote:
    maturity: float
    strike: float
    mid: float
    spread: float
    weight: float
    sigma: float


def preprocess_quotes(raw, spread_cut=DEFAULT_SPREAD_CUT,
                      sigma_frac=DEFAULT_SIGMA_FRAC, weight_cap=DEFAULT_WEIGHT_CAP):
    """Mid/spread per quote, drop quotes with spread/mid >= spread_cut
    (inclusive), inverse-half-spread liquidity weights capped at weight_cap,
    noise scale sigma = sigma_frac * spread."""
    if not raw:
        raise ValueError("no quotes supplied")
    kept = []
    for q in raw:
        mid = 0.5 * (q.ask_iv + q.bid_iv)
        spread = q.ask_iv - q.bid_iv
        if spread / mid >= spread_cut:
            continue
        half = q.ask_iv - mid
        weight = min(mid / half, weight_cap) if half > 0 else weight_cap
        sigma = sigma_frac * spread if spread > 0 else sigma_frac * 1e-4 * mid
        kept.append(WeightedQuote(q.maturity, q.strike, mid, spread, weight, sigma))
    if not kept:
        raise EmptyQuoteSetError(
            f"all {len(raw)} quotes removed by the spread/mid >= {spread_cut} rule"
        )
    return kept


def load_quotes_csv(path):
    """Quote file with header T,k,bid_iv,ask_iv."""
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return [RawQuote(*row) for row in data]


def save_quotes_csv(quotes, path):
    rows = np.array([[q.maturity, q.strike, q.bid_iv, q.ask_iv] for q in quotes])
    np.savetxt(path, rows, delimiter=",", header="T,k,bid_iv,ask_iv", comments="",
               fmt="%.17g")


def make_log_posterior(quotes, surrogate, prior):
    """Uniform box prior; Gaussian liquidity-weighted likelihood
    -(1/2) sum w_i (y_i - F(theta; T_i, k_i))^2 / sigma_i^2 (constant
    dropped). Quotes off the surrogate grid go through spline interpolation."""
    points = [(q.maturity, q.strike) for q in quotes]
    y = np.array([q.mid for q in quotes])
    w = np.array([q.weight for q in quotes])
    sig2 = np.array([q.sigma for q in quotes]) ** 2
    lo, hi = prior.lower_array(), prior.upper_array()

    # fast path: every quote sits on a grid node
    strikes = surrogate.grid.strike_array()
    mats = surrogate.grid.maturity_array()
    node_idx = []
    for t, k in points:
        im = np.where(np.abs(mats - t) <= 1e-12)[0]
        ik = np.where(np.abs(strikes - k) <= 1e-12)[0]
        if len(im) and len(ik):
            node_idx.append(im[0] * len(strikes) + ik[0])
        else:
            node_idx = None
            break

    def log_posterior(theta):
        theta = np.asarray(theta, dtype=float)
        if np.any(theta < lo) or np.any(theta > hi):
            return -np.inf
        if node_idx is not None:
            model = surrogate.surface(theta)[node_idx]
        else:
            model = surrogate.iv_points(theta, points)
        resid = y - model
        return float(-0.5 * np.sum(w * resid * resid / sig2))

    return log_posterior


# ---------------------------------------------------------------------------
# Affine-invariant ensemble sampler (stretch move)
# ---------------------------------------------------------------------------

@dataclass
class PosteriorChain:
    samples: np.ndarray  # (n_kept, dim), post burn-in/thinning
    log_prob: np.ndarray  # (n_kept,)
    acceptance_rate: float
    seed: int
    n_walkers: int
    n_steps: int
    burn_in: int
    thin: int

    def save_csv(self, path, names=("xi0", "nu", "rho", "H")):
        header = ",".join(names[: self.samples.shape[1]]) + ",log_posterior"
        np.savetxt(path, np.column_stack([self.samples, self.log_prob]),
                   delimiter=",", header=header, comments="", fmt="%.17g")


def mcmc_sample(log_posterior, init, n_walkers, n_steps, seed,
                stretch=2.0, burn_in_frac=0.2, thin=1):
    """Goodman-Weare stretch-move ensemble sampler.

    init: (n_walkers, dim) initial positions with finite posterior. Walkers
    update in two half-ensemble sweeps; the proposal correction is
    z^(dim - 1) with z ~ g(z) prop. 1/sqrt(z) on [1/a, a].
    """
    init = np.asarray(init, dtype=float)
    n_walkers, dim = init.shape
    if n_walkers < 2 * dim + 2:
        raise ValueError(f"need at least {2 * dim + 2} walkers for dim {dim}")
    if n_walkers % 2:
        raise ValueError("n_walkers must be even")
    rng = np.random.default_rng(seed)
    pos = init.copy()
    logp = np.array([log_posterior(p) for p in pos])
    if not np.all(np.isfinite(logp)):
        raise ValueError("all initial walkers must have finite log posterior")

    chain = np.empty((n_steps, n_walkers, dim))
    chain_logp = np.empty((n_steps, n_walkers))
    n_accept = 0
    half = n_walkers // 2
    idx_halves = (np.arange(half), np.arange(half, n_walkers))
    for step in range(n_steps):
        for active, passive in (idx_halves, idx_halves[::-1]):
            partners = passive[rng.integers(len(passive), size=len(active))]
            u = rng.uniform(size=len(active))
            z = ((stretch - 1.0) * u + 1.0) ** 2 / stretch
            prop = pos[partners] + z[:, None] * (pos[active] - pos[partners])
            logp_prop = np.array([log_posterior(p) for p in prop])
            log_ratio = (dim - 1) * np.log(z) + logp_prop - logp[active]
            accept = np.log(rng.uniform(size=len(active))) < log_ratio
            pos[active[accept]] = prop[accept]
            logp[active[accept]] = logp_prop[accept]
            n_accept += int(accept.sum())
        chain[step] = pos
        chain_logp[step] = logp
    rate = n_accept / (n_steps * n_walkers)
    burn = int(burn_in_frac * n_steps)
    kept = chain[burn::thin].reshape(-1, dim)
    kept_logp = chain_logp[burn::thin].reshape(-1)
    if rate < 0.05:
        import warnings

        warnings.warn(f"low acceptance fraction {rate:.3f}; posterior badly scaled?")
    return PosteriorChain(
        samples=kept, log_prob=kept_logp, acceptance_rate=rate, seed=seed,
        n_walkers=n_walkers, n_steps=n_steps, burn_in=burn, thin=thin,
    )


def init_walkers(center, prior, n_walkers, seed, ball_frac=0.05):
    """Gaussian ball around a center point, clipped into the open box."""
    rng = np.random.default_rng(seed)
    lo, hi = prior.lower_array(), prior.upper_array()
    width = hi - lo
    pts = center[None, :] + ball_frac * width[None, :] * rng.standard_normal(
        (n_walkers, len(center))
    )
    margin = 1e-9 * width
    return np.clip(pts, lo + margin, hi - margin)


def posterior_summary(chain, names=("xi0", "nu", "rho", "H")):
    """Medians, 2.5%/97.5% quantiles, and pairwise sample correlations."""
    s = chain.samples
    med = np.median(s, axis=0)
    q_lo = np.quantile(s, 0.025, axis=0)
    q_hi = np.quantile(s, 0.975, axis=0)
    corr = np.corrcoef(s.T) if s.shape[0] > 1 else np.eye(s.shape[1])
    return {
        "names": list(names[: s.shape[1]]),
        "median": med.tolist(),
        "q025": q_lo.tolist(),
        "q975": q_hi.tolist(),
        "correlations": corr.tolist(),
        "acceptance_rate": chain.acceptance_rate,
    }


def save_summary(summary, path):
    Path(path).write_text(json.dumps(summary, indent=2))
