"""Strike/maturity lattices and implied-vol surfaces on them."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

DEFAULT_STRIKES = (0.5, 0.6, 0.7, 0.8, 0.9, 1.0, 1.1, 1.2, 1.3, 1.4, 1.5)
DEFAULT_MATURITIES = (0.1, 0.3, 0.6, 0.9, 1.2, 1.5, 1.8, 2.0)


@dataclass(frozen=True)
class SurfaceGrid:
    """Fixed (maturity x strike) lattice. Flattened index = i_mat * n_strikes + j_strike."""

    strikes: tuple = DEFAULT_STRIKES
    maturities: tuple = DEFAULT_MATURITIES

    def __post_init__(self):
        s = np.asarray(self.strikes, dtype=float)
        t = np.asarray(self.maturities, dtype=float)
        if not (np.all(np.diff(s) > 0) and np.all(np.diff(t) > 0)):
            raise ValueError("strikes and maturities must be strictly increasing")
        if np.any(s <= 0) or np.any(t <= 0):
            raise ValueError("strikes and maturities must be positive")

    @property
    def n_strikes(self):
        return len(self.strikes)

    @property
    def n_maturities(self):
        return len(self.maturities)

    @property
    def size(self):
        return self.n_strikes * self.n_maturities

    def strike_array(self):
        return np.asarray(self.strikes, dtype=float)

    def maturity_array(self):
        return np.asarray(self.maturities, dtype=float)


@dataclass
class IVSurface:
    """Implied vols on a SurfaceGrid, shape (n_maturities, n_strikes).

    `values` may contain NaN at nodes where the MC price fell outside the
    no-arbitrage bounds; `stderr` (same shape) is optional.
    """

    grid: SurfaceGrid
    values: np.ndarray
    stderr: np.ndarray | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        expected = (self.grid.n_maturities, self.grid.n_strikes)
        if self.values.shape != expected:
            raise ValueError(f"values shape {self.values.shape} != {expected}")
        if self.stderr is not None:
            self.stderr = np.asarray(self.stderr, dtype=float)
            if self.stderr.shape != expected:
                raise ValueError("stderr shape mismatch")

    @property
    def complete(self):
        return bool(np.all(np.isfinite(self.values)))

    def flat(self):
        return self.values.ravel()
