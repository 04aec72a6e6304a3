"""Command-line entry point.

Subcommands: gen-data, train, train-inverse, calibrate, bayes, bench,
diagnose, onestep-study.  Exit codes: 0 success, 1 usage error, 2 data
error, 3 numerical failure.  Everything except `bench` timings is
deterministic given (config, seed); every output file carries the
producing configuration as metadata.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import bayes as bayes_mod
from .calibrator import (CalibrationError, CalibrationProblem, LMConfig,
                         lm_calibrate)
from .dataset import (McConfig, PriorBox, generate_gridwise,
                      generate_pointwise, load_training_set,
                      save_training_set)
from .neuralnet import (AdamConfig, LossSpec, init_network, train_adam)
from .onestep import (conv_forward, init_conv_network, load_conv_network,
                      out_of_sample_study, save_conv_network, train_inverse)
from .surface import SurfaceGrid
from .surrogate import SurfaceSurrogate
from .volterra import (ModelParams, SimulationError, TimeGrid,
                       mc_price_surface, simulate_rbergomi)

PROFILES = {
    "desk": {"n_records": 4000, "n_paths": 30000, "epochs": 2000},
    "paper": {"n_records": 40000, "n_paths": 60000, "epochs": 2000},
}


def _write_csv(path, header, rows, meta=None):
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
    if meta is not None:
        path.with_suffix(path.suffix + ".meta.json").write_text(
            json.dumps(meta, indent=2))


def cmd_gen_data(args):
    prof = PROFILES[args.profile]
    n = args.n if args.n is not None else prof["n_records"]
    n_paths = args.n_paths if args.n_paths is not None else prof["n_paths"]
    prior, grid = PriorBox(), SurfaceGrid()
    mc = McConfig(n_paths=n_paths, dt=args.dt)
    if args.mode == "gridwise":
        ts = generate_gridwise(prior, grid, mc, n, seed=args.seed)
    else:
        ts = generate_pointwise(prior, grid, mc, n, args.points_per_theta,
                                seed=args.seed)
    out = Path(args.out) / f"trainset_{args.mode}.csv"
    save_training_set(ts, out)
    print(f"wrote {len(ts)} records to {out}")
    return 0


def cmd_train(args):
    ts = load_training_set(args.data)
    prof = PROFILES[args.profile]
    epochs = args.epochs if args.epochs is not None else prof["epochs"]
    d_in = ts.theta.shape[1] + (0 if ts.mode == "gridwise" else 2)
    d_out = ts.labels.shape[1] if ts.labels.ndim == 2 else 1
    net = init_network([d_in, 30, 30, 30, 30, d_out], seed=args.seed)
    n_params = sum(w.size + b.size for w, b in zip(net.weights, net.biases))
    print(f"parameter count: {n_params}")
    x = ts.theta_scaled()
    if ts.mode == "pointwise":
        x = np.column_stack([x, ts.tk])
    y = ts.labels.reshape(len(ts), d_out)
    n_train = args.n_train if args.n_train is not None else int(0.85 * len(ts))
    idx = np.random.default_rng(args.seed).permutation(len(ts))
    tr, va = idx[:n_train], idx[n_train:]
    cfg = AdamConfig(step_size=args.lr, batch_size=args.batch_size,
                     epochs=epochs, seed=args.seed, lr_decay=args.lr_decay)
    net, hist = train_adam(net, x[tr], y[tr], cfg, LossSpec(),
                           x_val=x[va], y_val=y[va])
    out_dir = Path(args.out)
    surr = SurfaceSurrogate(net, ts.prior, ts.grid)
    surr.save(out_dir / "surrogate.json")
    rows = list(zip(range(len(hist["train_loss"])), hist["train_loss"],
                    hist.get("val_loss", [float("nan")] * len(hist["train_loss"]))))
    _write_csv(out_dir / "loss_history.csv", ["epoch", "train_loss", "val_loss"],
               rows, meta={"cmd": "train", "seed": args.seed, "epochs": epochs,
                           "data": str(args.data)})
    print(f"final train loss {hist['train_loss'][-1]:.6g}; "
          f"wrote {out_dir / 'surrogate.json'}")
    return 0


def cmd_train_inverse(args):
    ts = load_training_set(args.data)
    if ts.mode != "gridwise":
        raise ValueError("train-inverse needs a gridwise training set")
    shape = (ts.grid.n_maturities, ts.grid.n_strikes)
    x = ts.labels.reshape(len(ts), *shape)
    y = ts.theta_scaled()
    net = init_conv_network(seed=args.seed, input_shape=shape)
    print(f"parameter count: {net.param_count}")
    cfg = AdamConfig(step_size=args.lr, batch_size=args.batch_size,
                     epochs=args.epochs, seed=args.seed, lr_decay=args.lr_decay)
    net, hist = train_inverse(net, x, y, cfg)
    out_dir = Path(args.out)
    save_conv_network(net, out_dir / "inverse.json",
                      extra={"prior_lower": list(ts.prior.lower),
                             "prior_upper": list(ts.prior.upper)})
    _write_csv(out_dir / "inverse_loss_history.csv", ["epoch", "train_loss"],
               list(enumerate(hist["train_loss"])),
               meta={"cmd": "train-inverse", "seed": args.seed,
                     "epochs": args.epochs, "data": str(args.data)})
    print(f"final train loss {hist['train_loss'][-1]:.6g}; "
          f"wrote {out_dir / 'inverse.json'}")
    return 0


def _quote_problem(surr, quotes):
    """Forward/jacobian over arbitrary (T, k) quote points; the Jacobian
    interpolates each parameter column of the grid Jacobian."""
    pts = [(q.maturity, q.strike) for q in quotes]
    target = np.array([q.mid for q in quotes])
    weights = np.array([q.weight for q in quotes])

    def forward(theta):
        return surr.iv_points(theta, pts)

    def jacobian(theta):
        h = 1e-6 * (surr.prior.upper_array() - surr.prior.lower_array())
        cols = []
        for i in range(4):
            tp, tm = np.array(theta, float), np.array(theta, float)
            tp[i] += h[i]
            tm[i] -= h[i]
            cols.append((forward(tp) - forward(tm)) / (2 * h[i]))
        return np.column_stack(cols)

    return CalibrationProblem(forward=forward, jacobian=jacobian,
                              target=target, lower=surr.prior.lower_array(),
                              upper=surr.prior.upper_array(), weights=weights)


def cmd_calibrate(args):
    surr = SurfaceSurrogate.load(args.weights)
    quotes = bayes_mod.preprocess_quotes(bayes_mod.load_quotes_csv(args.quotes))
    problem = _quote_problem(surr, quotes)
    cfg = LMConfig(lambda0=args.lm_lambda0, n_max=args.lm_max_iter)
    report = lm_calibrate(problem, cfg)
    out = Path(args.out) / "calibration.json"
    doc = report.to_dict()
    doc["config"] = {"cmd": "calibrate", "seed": args.seed,
                     "weights": str(args.weights), "quotes": str(args.quotes)}
    Path(out).write_text(json.dumps(doc, indent=2))
    print(f"theta_hat = {np.array2string(report.theta_hat, precision=5)}, "
          f"rmse = {report.final_rmse:.3e} ({report.iterations} iters)")
    return 0


def cmd_bayes(args):
    surr = SurfaceSurrogate.load(args.weights)
    quotes = bayes_mod.preprocess_quotes(bayes_mod.load_quotes_csv(args.quotes))
    prior = surr.prior
    log_post = bayes_mod.make_log_posterior(quotes, surr, prior)
    center = lm_calibrate(_quote_problem(surr, quotes)).theta_hat
    init = bayes_mod.init_walkers(center, prior, args.n_walkers, args.seed)
    chain = bayes_mod.mcmc_sample(log_post, init, args.n_walkers, args.n_steps,
                                  seed=args.seed, burn_in_frac=args.burn_in)
    out_dir = Path(args.out)
    chain.save_csv(out_dir / "chain.csv")
    summary = bayes_mod.posterior_summary(chain)
    summary["config"] = {"cmd": "bayes", "seed": args.seed,
                         "n_walkers": args.n_walkers, "n_steps": args.n_steps,
                         "quotes": str(args.quotes)}
    bayes_mod.save_summary(summary, out_dir / "summary.json")
    print(f"acceptance {chain.acceptance_rate:.3f}; "
          f"wrote {out_dir / 'chain.csv'} and summary.json")
    return 0


def _median_time(fn, n_rep=31):
    ts = []
    for _ in range(n_rep):
        t0 = time.perf_counter()
        fn()
        ts.append(time.perf_counter() - t0)
    return float(np.median(ts))


def cmd_bench(args):
    surr = SurfaceSurrogate.load(args.weights)
    theta = surr.prior.midpoint()
    params = ModelParams.from_array(theta)
    grid = TimeGrid.uniform()
    n_paths = args.n_paths

    def mc_once():
        batch = simulate_rbergomi(params, grid, n_paths, seed=0,
                                  dtype=np.float32)
        mc_price_surface(batch, surr.grid)

    t_mc = _median_time(mc_once, n_rep=args.mc_reps)
    t_nn = _median_time(lambda: surr.surface(theta))
    t_grad = _median_time(lambda: surr.jacobian(theta))
    rows = [["mc_surface", f"{t_mc:.6f}"],
            ["nn_surface", f"{t_nn:.6f}"],
            ["nn_gradient", f"{t_grad:.6f}"],
            ["speedup_nn_vs_mc", f"{t_mc / t_nn:.1f}"]]
    _write_csv(Path(args.out) / "bench.csv", ["quantity", "seconds_or_ratio"],
               rows, meta={"cmd": "bench", "n_paths": n_paths,
                           "reps": args.mc_reps})
    for name, val in rows:
        print(f"{name:>20s}  {val}")
    return 0


def atm_skew_report(surr, theta, h=0.01):
    """Finite-difference |dsigma/dk| at k=1 per maturity, plus the slope of
    log-skew against log-T."""
    mats = surr.grid.maturity_array()
    skews = np.array([abs(surr.iv(theta, t, 1.0 + h)
                          - surr.iv(theta, t, 1.0 - h)) / (2 * h)
                      for t in mats])
    slope = float(np.polyfit(np.log(mats), np.log(skews), 1)[0])
    return mats, skews, slope


def cmd_diagnose(args):
    surr = SurfaceSurrogate.load(args.weights)
    base = surr.prior.midpoint()
    theta = np.array(base)
    theta[3] = args.hurst
    mats, skews, slope = atm_skew_report(surr, theta)
    rows = [[f"{t:.2f}", f"{s:.6f}"] for t, s in zip(mats, skews)]
    rows.append(["loglog_slope", f"{slope:.4f}"])
    _write_csv(Path(args.out) / "diagnose.csv", ["maturity", "atm_skew"],
               rows, meta={"cmd": "diagnose", "theta": theta.tolist()})
    print(f"ATM skew slope (H={theta[3]:.3f}): {slope:.3f} "
          f"(power law exponent, cf. H - 1/2 = {theta[3] - 0.5:.3f})")
    return 0


def cmd_onestep_study(args):
    net, doc = load_conv_network(args.inverse)
    surr = SurfaceSurrogate.load(args.weights)
    ts = load_training_set(args.surfaces)
    shape = (ts.grid.n_maturities, ts.grid.n_strikes)
    targets = ts.labels.reshape(len(ts), *shape)
    rmse_nn, rmse_mc = out_of_sample_study(net, surr, targets)
    rows = list(zip(range(len(rmse_nn)), rmse_nn, rmse_mc))
    _write_csv(Path(args.out) / "onestep_study.csv",
               ["index", "rmse_inverse_net", "rmse_lm"], rows,
               meta={"cmd": "onestep-study", "n": len(rmse_nn)})
    print(f"median RMSE: inverse net {np.median(rmse_nn):.4g}, "
          f"LM {np.median(rmse_mc):.4g}")
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="roughcal",
                                description="rough Bergomi deep calibration")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--profile", choices=("desk", "paper"), default="desk")
    p.add_argument("--config", type=Path, default=None,
                   help="JSON file of flag overrides")
    p.add_argument("--out", type=Path, default=Path("."))
    sub = p.add_subparsers(dest="cmd", required=True)

    g = sub.add_parser("gen-data", help="generate MC training data")
    g.add_argument("--mode", choices=("gridwise", "pointwise"),
                   default="gridwise")
    g.add_argument("--n", type=int, default=None)
    g.add_argument("--n-paths", type=int, default=None)
    g.add_argument("--dt", type=float, default=0.01)
    g.add_argument("--points-per-theta", type=int, default=88)
    g.set_defaults(fn=cmd_gen_data)

    t = sub.add_parser("train", help="train the surface surrogate")
    t.add_argument("--data", type=Path, required=True)
    t.add_argument("--epochs", type=int, default=None)
    t.add_argument("--batch-size", type=int, default=32)
    t.add_argument("--lr", type=float, default=1e-3)
    t.add_argument("--lr-decay", type=float, default=1.0)
    t.add_argument("--n-train", type=int, default=None)
    t.set_defaults(fn=cmd_train)

    ti = sub.add_parser("train-inverse", help="train the inverse-map net")
    ti.add_argument("--data", type=Path, required=True)
    ti.add_argument("--epochs", type=int, default=500)
    ti.add_argument("--batch-size", type=int, default=32)
    ti.add_argument("--lr", type=float, default=1e-3)
    ti.add_argument("--lr-decay", type=float, default=1.0)
    ti.set_defaults(fn=cmd_train_inverse)

    c = sub.add_parser("calibrate", help="LM calibration to quotes")
    c.add_argument("--weights", type=Path, required=True)
    c.add_argument("--quotes", type=Path, required=True)
    c.add_argument("--lm-lambda0", type=float, default=1e-2)
    c.add_argument("--lm-max-iter", type=int, default=200)
    c.set_defaults(fn=cmd_calibrate)

    b = sub.add_parser("bayes", help="ensemble MCMC over the posterior")
    b.add_argument("--weights", type=Path, required=True)
    b.add_argument("--quotes", type=Path, required=True)
    b.add_argument("--n-walkers", type=int, default=32)
    b.add_argument("--n-steps", type=int, default=2000)
    b.add_argument("--burn-in", type=float, default=0.2)
    b.set_defaults(fn=cmd_bayes)

    be = sub.add_parser("bench", help="MC vs. NN timing table")
    be.add_argument("--weights", type=Path, required=True)
    be.add_argument("--n-paths", type=int, default=60000)
    be.add_argument("--mc-reps", type=int, default=5)
    be.set_defaults(fn=cmd_bench)

    d = sub.add_parser("diagnose", help="ATM skew term structure")
    d.add_argument("--weights", type=Path, required=True)
    d.add_argument("--hurst", type=float, default=0.1)
    d.set_defaults(fn=cmd_diagnose)

    o = sub.add_parser("onestep-study", help="inverse net vs. LM comparison")
    o.add_argument("--inverse", type=Path, required=True)
    o.add_argument("--weights", type=Path, required=True)
    o.add_argument("--surfaces", type=Path, required=True)
    o.set_defaults(fn=cmd_onestep_study)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    if args.config is not None:
        try:
            overrides = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            print(f"data error: {exc}", file=sys.stderr)
            return 2
        for key, val in overrides.items():
            setattr(args, key.replace("-", "_"), val)
    args.out.mkdir(parents=True, exist_ok=True)
    try:
        return args.fn(args)
    except (OSError, ValueError, KeyError,
            bayes_mod.EmptyQuoteSetError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except (CalibrationError, SimulationError, FloatingPointError,
            np.linalg.LinAlgError, RuntimeError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
