"""Build the committed artifacts used by the acceptance suite.

Run from the repository root:

    python3 scripts/make_artifacts.py

Produces, under artifacts/:
  - trainset_gridwise.csv(.meta.json)  4,000-record desk training set
  - surrogate.json, loss_history.csv   trained surface surrogate
  - inverse.json, inverse_loss_history.csv  trained inverse-map CNN
  - twofactor_surfaces.csv             100 complete two-factor MC surfaces

Total runtime is ~2 h on a single core, dominated by data generation.
All stages are deterministic given the seeds below.
"""

import csv
import sys
import time
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from roughcal import (AdamConfig, LossSpec, PriorBox, SurfaceGrid, TimeGrid,
                      TwoFactorParams, generate_gridwise, init_network,
                      load_training_set, mc_price_surface, save_training_set,
                      simulate_two_factor, train_adam)
from roughcal.dataset import McConfig
from roughcal.onestep import init_conv_network, save_conv_network, train_inverse
from roughcal.surrogate import SurfaceSurrogate

DATA_SEED = 20240501
SPLIT_SEED = 7
TRAIN_SEED = 42
N_RECORDS = 4000
N_TRAIN = 3400
N_PATHS = 30000
EPOCHS = 2000

ROOT = Path(__file__).resolve().parents[1]
ART = ROOT / "artifacts"
ART.mkdir(exist_ok=True)


def log(msg):
    print(f"[{time.strftime('%H:%M:%S')}] {msg}", flush=True)


def stage_dataset():
    out = ART / "trainset_gridwise.csv"
    if out.exists():
        log(f"dataset exists, skipping: {out}")
        return load_training_set(out)
    prior, grid = PriorBox(), SurfaceGrid()
    mc = McConfig(n_paths=N_PATHS)
    t0 = time.time()
    ts = generate_gridwise(prior, grid, mc, N_RECORDS, seed=DATA_SEED)
    save_training_set(ts, out)
    log(f"dataset: {len(ts)} records in {(time.time() - t0) / 60:.1f} min")
    return ts


def stage_surrogate(ts):
    out = ART / "surrogate.json"
    if out.exists():
        log(f"surrogate exists, skipping: {out}")
        return SurfaceSurrogate.load(out)
    tr, te = ts.split(N_TRAIN, seed=SPLIT_SEED)
    net = init_network([4, 30, 30, 30, 30, 88], seed=TRAIN_SEED)
    cfg = AdamConfig(step_size=1e-3, batch_size=32, epochs=EPOCHS,
                     seed=TRAIN_SEED, lr_decay=0.999)
    t0 = time.time()
    net, hist = train_adam(net, tr.theta_scaled(), tr.labels, cfg, LossSpec(),
                           x_val=te.theta_scaled(), y_val=te.labels)
    surr = SurfaceSurrogate(net, ts.prior, ts.grid)
    surr.save(out)
    with (ART / "loss_history.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "train_loss", "val_loss"])
        w.writerows(zip(range(len(hist["train_loss"])), hist["train_loss"],
                        hist["val_loss"]))
    err = np.abs(surr.surface_batch(te.theta) - te.labels) / te.labels
    log(f"surrogate: {(time.time() - t0) / 60:.1f} min, "
        f"held-out mean rel err {err.mean():.4f}, std {err.std():.4f}")
    return surr


def stage_inverse(ts):
    out = ART / "inverse.json"
    if out.exists():
        log(f"inverse net exists, skipping: {out}")
        return
    tr, _ = ts.split(N_TRAIN, seed=SPLIT_SEED)
    shape = (ts.grid.n_maturities, ts.grid.n_strikes)
    net = init_conv_network(seed=TRAIN_SEED, input_shape=shape)
    cfg = AdamConfig(step_size=1e-3, batch_size=32, epochs=500,
                     seed=TRAIN_SEED, lr_decay=0.998)
    t0 = time.time()
    net, hist = train_inverse(net, tr.labels.reshape(len(tr), *shape),
                              tr.theta_scaled(), cfg)
    save_conv_network(net, out, extra={"prior_lower": list(ts.prior.lower),
                                       "prior_upper": list(ts.prior.upper)})
    with (ART / "inverse_loss_history.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "train_loss"])
        w.writerows(enumerate(hist["train_loss"]))
    log(f"inverse net: {(time.time() - t0) / 60:.1f} min, "
        f"final loss {hist['train_loss'][-1]:.5f}")


def stage_twofactor(n_surfaces=100, seed=314159):
    out = ART / "twofactor_surfaces.csv"
    if out.exists():
        log(f"two-factor surfaces exist, skipping: {out}")
        return
    rng = np.random.default_rng(seed)
    grid, sg = TimeGrid.uniform(), SurfaceGrid()
    rows, tried = [], 0
    t0 = time.time()
    while len(rows) < n_surfaces:
        # high vol-of-vol keeps the short-maturity wings MC-invertible;
        # below nu ~ 2.5 the T=0.1, k=0.5 node almost never has an IV
        p = TwoFactorParams(
            xi0=rng.uniform(0.08, 0.14),
            nu=rng.uniform(3.0, 5.0),
            theta_mix=rng.uniform(0.0, 1.0),
            kappa_x=rng.uniform(0.1, 1.0),
            kappa_y=rng.uniform(2.0, 8.0),
        )
        batch = simulate_two_factor(p, grid, N_PATHS, seed=seed + tried)
        tried += 1
        surf = mc_price_surface(batch, sg)
        if surf.complete:
            rows.append([p.xi0, p.nu, p.theta_mix, p.kappa_x, p.kappa_y]
                        + list(surf.values.ravel()))
    with out.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["xi0", "nu", "theta_mix", "kappa_x", "kappa_y"]
                   + [f"iv_{i}" for i in range(sg.size)])
        w.writerows([[f"{v:.8g}" for v in r] for r in rows])
    log(f"two-factor: {len(rows)}/{tried} complete in "
        f"{(time.time() - t0) / 60:.1f} min")


def main():
    ts = stage_dataset()
    stage_surrogate(ts)
    stage_inverse(ts)
    stage_twofactor()
    log("all artifacts built")


if __name__ == "__main__":
    main()
