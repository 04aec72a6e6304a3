"""Black-Scholes pricing and implied-vol inversion.

Conventions: unit spot, zero rates, undiscounted prices. Strikes are
relative to spot (k = K / S0), maturities in years.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import ndtr

VOL_LO = 1e-6
VOL_HI = 5.0


class PriceBoundsError(ValueError):
    """Raised when a price sits at or outside the no-arbitrage bounds."""


def bs_price(maturity, strike, sigma, kind="call"):
    """Undiscounted Black price with forward 1. sigma=0 returns intrinsic."""
    if maturity <= 0:
        raise ValueError(f"maturity must be positive, got {maturity}")
    if strike <= 0:
        raise ValueError(f"strike must be positive, got {strike}")
    if sigma < 0:
        raise ValueError(f"sigma must be non-negative, got {sigma}")
    if sigma == 0.0:
        intrinsic = max(1.0 - strike, 0.0)
        return intrinsic if kind == "call" else max(strike - 1.0, 0.0)
    srt = sigma * math.sqrt(maturity)
    d1 = -math.log(strike) / srt + 0.5 * srt
    d2 = d1 - srt
    call = ndtr(d1) - strike * ndtr(d2)
    if kind == "call":
        return float(call)
    # put-call parity with forward 1
    return float(call - 1.0 + strike)


def bs_vega(maturity, strike, sigma):
    if sigma <= 0:
        return 0.0
    srt = sigma * math.sqrt(maturity)
    d1 = -math.log(strike) / srt + 0.5 * srt
    return float(math.sqrt(maturity) * math.exp(-0.5 * d1 * d1) / math.sqrt(2 * math.pi))


def implied_vol(price, maturity, strike, kind="call", tol=1e-12, max_iter=200):
    """Invert a call/put price to Black-Scholes implied volatility.

    Safeguarded Newton on the bracket [VOL_LO, VOL_HI] with bisection
    fallback; the price must be strictly inside the no-arbitrage bounds.
    """
    if kind == "call":
        lo_bound, hi_bound = max(1.0 - strike, 0.0), 1.0
    else:
        lo_bound, hi_bound = max(strike - 1.0, 0.0), strike
    if not (lo_bound < price < hi_bound):
        raise PriceBoundsError(
            f"price {price} outside ({lo_bound}, {hi_bound}) for k={strike}, T={maturity}"
        )

    lo, hi = VOL_LO, VOL_HI
    f_lo = bs_price(maturity, strike, lo, kind) - price
    f_hi = bs_price(maturity, strike, hi, kind) - price
    if f_lo > 0:
        return lo  # price below the lowest representable vol; clamp
    if f_hi < 0:
        return hi
    sigma = 0.5 * (lo + hi)
    for _ in range(max_iter):
        f = bs_price(maturity, strike, sigma, kind) - price
        if abs(f) < tol:
            return sigma
        if f > 0:
            hi = sigma
        else:
            lo = sigma
        vega = bs_vega(maturity, strike, sigma)
        if vega > 1e-16:
            candidate = sigma - f / vega
            if lo < candidate < hi:
                sigma = candidate
                continue
        sigma = 0.5 * (lo + hi)
        if hi - lo < 1e-16:
            return sigma
    return sigma


def bs_price_vec(maturity, strike, sigma, kind="call"):
    """Vectorized Black price; arrays broadcast. sigma may contain zeros."""
    T = np.asarray(maturity, dtype=float)
    k = np.asarray(strike, dtype=float)
    sig = np.asarray(sigma, dtype=float)
    srt = np.where(sig > 0, sig, 1.0) * np.sqrt(T)
    d1 = -np.log(k) / srt + 0.5 * srt
    d2 = d1 - srt
    call = ndtr(d1) - k * ndtr(d2)
    intrinsic = np.maximum(1.0 - k, 0.0)
    call = np.where(sig > 0, call, intrinsic)
    if kind == "call":
        return call
    return call - 1.0 + k


def implied_vol_vec(price, maturity, strike, kind="call", tol=1e-12, max_iter=200):
    """Vectorized inversion; out-of-bounds entries come back as NaN."""
    p = np.asarray(price, dtype=float)
    T = np.broadcast_to(np.asarray(maturity, dtype=float), p.shape).copy()
    k = np.broadcast_to(np.asarray(strike, dtype=float), p.shape).copy()
    if kind == "call":
        lo_bound, hi_bound = np.maximum(1.0 - k, 0.0), np.ones_like(k)
    else:
        lo_bound, hi_bound = np.maximum(k - 1.0, 0.0), k
    valid = (p > lo_bound) & (p < hi_bound) & np.isfinite(p)

    lo = np.full(p.shape, VOL_LO)
    hi = np.full(p.shape, VOL_HI)
    sigma = 0.5 * (lo + hi)
    pv = np.where(valid, p, 0.5)  # placeholder target for invalid entries
    for _ in range(max_iter):
        f = bs_price_vec(T, k, sigma, kind) - pv
        done = np.abs(f) < tol
        if done.all():
            break
        hi = np.where(f > 0, sigma, hi)
        lo = np.where(f <= 0, sigma, lo)
        srt = sigma * np.sqrt(T)
        d1 = -np.log(k) / srt + 0.5 * srt
        vega = np.sqrt(T) * np.exp(-0.5 * d1 * d1) / math.sqrt(2 * math.pi)
        newton = sigma - f / np.where(vega > 1e-16, vega, 1.0)
        use_newton = (vega > 1e-16) & (newton > lo) & (newton < hi)
        sigma = np.where(done, sigma, np.where(use_newton, newton, 0.5 * (lo + hi)))
    return np.where(valid, sigma, np.nan)
