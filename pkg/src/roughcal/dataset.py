"""Prior sampling, labeled training-set generation, input scaling, persistence.

Gridwise records label a parameter draw with the full 88-node surface;
pointwise records label (theta, T, k) with a single implied vol. Labels are
stored as implied volatilities. CSV schema: `xi0,nu,rho,H,iv_0,...,iv_87`
(gridwise) or `xi0,nu,rho,H,T,k,iv` (pointwise), plus a JSON metadata
sidecar next to the data file.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from joblib import Parallel, delayed

from .surface import SurfaceGrid
from .volterra import ModelParams, TimeGrid, mc_price_surface, simulate_rbergomi

PARAM_NAMES = ("xi0", "nu", "rho", "H")


@dataclass(frozen=True)
class PriorBox:
    """Componentwise uniform box for (xi0, nu, rho, H)."""

    lower: tuple = (0.01, 0.5, -0.95, 0.025)
    upper: tuple = (0.16, 4.0, -0.1, 0.5)

    def __post_init__(self):
        lo, hi = self.lower_array(), self.upper_array()
        if len(lo) != 4 or len(hi) != 4:
            raise ValueError("prior box needs 4 coordinates")
        if not np.all(lo < hi):
            raise ValueError("lower bounds must be strictly below upper bounds")
        # bounds must stay inside the model validity region
        ModelParams.from_array(lo)
        ModelParams.from_array(hi)

    def lower_array(self):
        return np.asarray(self.lower, dtype=float)

    def upper_array(self):
        return np.asarray(self.upper, dtype=float)

    def midpoint(self):
        return 0.5 * (self.lower_array() + self.upper_array())

    def contains(self, theta):
        th = np.asarray(theta, dtype=float)
        return bool(np.all(th >= self.lower_array()) and np.all(th <= self.upper_array()))

    def clip(self, theta):
        return np.clip(np.asarray(theta, float), self.lower_array(), self.upper_array())


@dataclass(frozen=True)
class McConfig:
    """Monte Carlo settings for label generation."""

    n_paths: int = 30_000
    dt: float = 0.01
    t_max: float = 2.0
    use_float32: bool = True

    def time_grid(self):
        return TimeGrid.uniform(dt=self.dt, t_max=self.t_max)

    def dtype(self):
        return np.float32 if self.use_float32 else np.float64


@dataclass
class TrainingSet:
    """Labeled records plus generation metadata.

    mode "gridwise": labels shape (n, L); mode "pointwise": tk has shape
    (n, 2) and labels shape (n,).
    """

    mode: str
    theta: np.ndarray
    labels: np.ndarray
    grid: SurfaceGrid
    prior: PriorBox
    metadata: dict = field(default_factory=dict)
    tk: np.ndarray | None = None

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=float)
        self.labels = np.asarray(self.labels, dtype=float)
        if self.mode not in ("gridwise", "pointwise"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mode == "gridwise" and self.labels.shape[1] != self.grid.size:
            raise ValueError("gridwise labels must have one column per grid node")
        if not np.all(np.isfinite(self.labels)):
            raise ValueError("labels must be finite")

    def __len__(self):
        return len(self.theta)

    def theta_scaled(self):
        return scale_inputs(self.theta, self.prior)

    def split(self, n_train, seed=0):
        """Seeded random split into (train, test)."""
        idx = np.random.default_rng(seed).permutation(len(self))
        a, b = idx[:n_train], idx[n_train:]
        return self._subset(a), self._subset(b)

    def _subset(self, idx):
        return TrainingSet(
            mode=self.mode,
            theta=self.theta[idx],
            labels=self.labels[idx],
            grid=self.grid,
            prior=self.prior,
            metadata=dict(self.metadata),
            tk=None if self.tk is None else self.tk[idx],
        )


def sample_parameters(prior, n, seed):
    """n i.i.d. uniform draws from the box, as an (n, 4) array."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    lo, hi = prior.lower_array(), prior.upper_array()
    return lo + (hi - lo) * rng.uniform(size=(n, 4))


def scale_inputs(theta, prior):
    """Affine map of each coordinate onto [-1, 1]."""
    lo, hi = prior.lower_array(), prior.upper_array()
    return 2.0 * (np.asarray(theta, float) - lo) / (hi - lo) - 1.0


def unscale_inputs(theta_scaled, prior):
    lo, hi = prior.lower_array(), prior.upper_array()
    return lo + (np.asarray(theta_scaled, float) + 1.0) * 0.5 * (hi - lo)


def surface_for(theta, grid, mc, seed):
    """One MC surface for a parameter draw; NaN at invalid nodes."""
    params = ModelParams.from_array(theta)
    batch = simulate_rbergomi(params, mc.time_grid(), mc.n_paths, seed, dtype=mc.dtype())
    return mc_price_surface(batch, grid)


def _gridwise_record(theta, grid, mc, seed):
    surf = surface_for(theta, grid, mc, seed)
    return surf.values.ravel() if surf.complete else None


def generate_gridwise(prior, grid, mc, n, seed, n_jobs=1, max_drop_rounds=20):
    """Generate n valid gridwise records; a record whose surface has any
    invalid node is dropped and replaced by a fresh draw."""
    thetas, labels = [], []
    dropped = []
    round_idx = 0
    while len(thetas) < n:
        if round_idx >= max_drop_rounds:
            raise RuntimeError("too many invalid records; check the prior box / MC config")
        need = n - len(thetas)
        draws = sample_parameters(prior, need, np.random.SeedSequence((seed, 0, round_idx)))
        mc_root = np.random.SeedSequence((seed, 1, round_idx))
        mc_seeds = [int(s.generate_state(1)[0]) for s in mc_root.spawn(need)]
        results = Parallel(n_jobs=n_jobs, prefer="processes")(
            delayed(_gridwise_record)(draws[i], grid, mc, mc_seeds[i]) for i in range(need)
        )
        for th, lab in zip(draws, results):
            if lab is None:
                dropped.append(th)
            else:
                thetas.append(th)
                labels.append(lab)
        round_idx += 1
    drop_rate = len(dropped) / (n + len(dropped))
    if drop_rate > 0.01:
        regions = np.asarray(dropped)
        warnings.warn(
            f"dropped {len(dropped)} records ({100 * drop_rate:.1f}%); "
            f"offending xi0 range [{regions[:, 0].min():.3f}, {regions[:, 0].max():.3f}], "
            f"nu range [{regions[:, 1].min():.2f}, {regions[:, 1].max():.2f}], "
            f"H range [{regions[:, 3].min():.3f}, {regions[:, 3].max():.3f}]"
        )
    meta = {
        "seed": seed,
        "n_paths": mc.n_paths,
        "dt": mc.dt,
        "float32": mc.use_float32,
        "n_dropped": len(dropped),
        "prior_lower": list(prior.lower),
        "prior_upper": list(prior.upper),
        "strikes": list(grid.strikes),
        "maturities": list(grid.maturities),
    }
    return TrainingSet(
        mode="gridwise",
        theta=np.asarray(thetas),
        labels=np.asarray(labels),
        grid=grid,
        prior=prior,
        metadata=meta,
    )


def generate_pointwise(prior, grid, mc, n_theta, points_per_theta, seed,
                       t_range=(0.1, 2.0), k_range=(0.5, 1.5), n_jobs=1):
    """Pointwise set: per theta draw, `points_per_theta` (T, k) points with a
    single-IV label each, computed from one shared path batch.

    T is drawn uniformly over the MC grid nodes inside t_range (every label
    maturity must sit on the simulation grid), k uniformly in k_range.
    """
    tgrid = mc.time_grid().as_array()
    eligible_t = tgrid[(tgrid >= t_range[0] - 1e-12) & (tgrid <= t_range[1] + 1e-12)]
    draws = sample_parameters(prior, n_theta, np.random.SeedSequence((seed, 0)))
    mc_seeds = [int(s.generate_state(1)[0])
                for s in np.random.SeedSequence((seed, 1)).spawn(n_theta)]
    rng = np.random.default_rng(np.random.SeedSequence((seed, 2)))

    thetas, tks, labels = [], [], []
    n_dropped = 0
    for i in range(n_theta):
        ts = rng.choice(eligible_t, size=points_per_theta)
        ks = rng.uniform(k_range[0], k_range[1], size=points_per_theta)
        point_grid = SurfaceGrid(
            strikes=tuple(np.unique(ks)), maturities=tuple(np.unique(ts))
        )
        surf = surface_for(draws[i], point_grid, mc, mc_seeds[i])
        for t, k in zip(ts, ks):
            it = list(point_grid.maturities).index(t)
            ik = list(point_grid.strikes).index(k)
            iv = surf.values[it, ik]
            if np.isfinite(iv):
                thetas.append(draws[i])
                tks.append((t, k))
                labels.append(iv)
            else:
                n_dropped += 1
    meta = {
        "seed": seed,
        "n_paths": mc.n_paths,
        "dt": mc.dt,
        "float32": mc.use_float32,
        "n_dropped": n_dropped,
        "prior_lower": list(prior.lower),
        "prior_upper": list(prior.upper),
        "t_range": list(t_range),
        "k_range": list(k_range),
    }
    return TrainingSet(
        mode="pointwise",
        theta=np.asarray(thetas),
        labels=np.asarray(labels),
        grid=grid,
        prior=prior,
        metadata=meta,
        tk=np.asarray(tks),
    )


def expand_gridwise(ts):
    """Replicate each gridwise theta across its L nodes -> pointwise set."""
    if ts.mode != "gridwise":
        raise ValueError("expand_gridwise needs a gridwise set")
    L = ts.grid.size
    mats = np.repeat(ts.grid.maturity_array(), ts.grid.n_strikes)
    ks = np.tile(ts.grid.strike_array(), ts.grid.n_maturities)
    theta = np.repeat(ts.theta, L, axis=0)
    tk = np.tile(np.column_stack([mats, ks]), (len(ts), 1))
    return TrainingSet(
        mode="pointwise",
        theta=theta,
        labels=ts.labels.ravel(),
        grid=ts.grid,
        prior=ts.prior,
        metadata=dict(ts.metadata),
        tk=tk,
    )


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------

def save_training_set(ts, path):
    path = Path(path)
    if ts.mode == "gridwise":
        header = ",".join(PARAM_NAMES) + "," + ",".join(
            f"iv_{j}" for j in range(ts.grid.size)
        )
        data = np.column_stack([ts.theta, ts.labels])
    else:
        header = ",".join(PARAM_NAMES) + ",T,k,iv"
        data = np.column_stack([ts.theta, ts.tk, ts.labels])
    np.savetxt(path, data, delimiter=",", header=header, comments="", fmt="%.17g")
    sidecar = dict(ts.metadata)
    sidecar["mode"] = ts.mode
    sidecar.setdefault("strikes", list(ts.grid.strikes))
    sidecar.setdefault("maturities", list(ts.grid.maturities))
    Path(str(path) + ".meta.json").write_text(json.dumps(sidecar, indent=2))


def load_training_set(path):
    path = Path(path)
    meta = json.loads(Path(str(path) + ".meta.json").read_text())
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    grid = SurfaceGrid(
        strikes=tuple(meta["strikes"]), maturities=tuple(meta["maturities"])
    )
    prior = PriorBox(tuple(meta["prior_lower"]), tuple(meta["prior_upper"]))
    mode = meta["mode"]
    if mode == "gridwise":
        return TrainingSet(
            mode=mode, theta=data[:, :4], labels=data[:, 4:], grid=grid,
            prior=prior, metadata=meta,
        )
    return TrainingSet(
        mode=mode, theta=data[:, :4], labels=data[:, 6], grid=grid,
        prior=prior, metadata=meta, tk=data[:, 4:6],
    )
