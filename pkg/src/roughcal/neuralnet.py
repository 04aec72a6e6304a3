"""Dense feedforward network with Elu hidden units, trained by Adam.

Everything is plain numpy: forward pass, backprop, the input Jacobian
(forward-mode), and the minibatch Adam loop. Networks are value objects;
training returns a new set of weights.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np


def elu(x, alpha=1.0):
    return np.where(x > 0, x, alpha * np.expm1(np.minimum(x, 0.0)))


def elu_prime(x, alpha=1.0):
    return np.where(x > 0, 1.0, alpha * np.exp(np.minimum(x, 0.0)))


@dataclass
class DenseNetwork:
    """Affine layers with Elu on hidden layers, identity on the output."""

    weights: list  # per layer, shape (n_out, n_in)
    biases: list  # per layer, shape (n_out,)
    alpha: float = 1.0

    @property
    def sizes(self):
        return [self.weights[0].shape[1]] + [w.shape[0] for w in self.weights]

    @property
    def n_layers(self):
        return len(self.weights)

    @property
    def param_count(self):
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def copy(self):
        return DenseNetwork(
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
            alpha=self.alpha,
        )


def init_network(sizes, seed, alpha=1.0):
    """Uniform init scaled by 1/sqrt(fan_in)."""
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for n_in, n_out in zip(sizes[:-1], sizes[1:]):
        bound = 1.0 / np.sqrt(n_in)
        weights.append(rng.uniform(-bound, bound, size=(n_out, n_in)))
        biases.append(np.zeros(n_out))
    return DenseNetwork(weights=weights, biases=biases, alpha=alpha)


def forward(net, x):
    """Evaluate the network; x is (d_in,) or (batch, d_in)."""
    a = np.atleast_2d(np.asarray(x, dtype=float))
    last = net.n_layers - 1
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        a = a @ w.T + b
        if i < last:
            a = elu(a, net.alpha)
    return a[0] if np.ndim(x) == 1 else a


def _forward_cache(net, x):
    """Forward pass keeping pre-activations for backprop."""
    a = x
    activations = [a]
    pre = []
    last = net.n_layers - 1
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = a @ w.T + b
        pre.append(z)
        a = elu(z, net.alpha) if i < last else z
        activations.append(a)
    return activations, pre


def backprop(net, x, dloss_dout):
    """Gradients of a scalar loss given dL/d(output); x is (batch, d_in)."""
    activations, pre = _forward_cache(net, x)
    grad_w = [None] * net.n_layers
    grad_b = [None] * net.n_layers
    delta = dloss_dout
    for i in range(net.n_layers - 1, -1, -1):
        grad_w[i] = delta.T @ activations[i]
        grad_b[i] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ net.weights[i]) * elu_prime(pre[i - 1], net.alpha)
    return grad_w, grad_b


def input_jacobian(net, x):
    """d(output)/d(input) at a single point, shape (d_out, d_in)."""
    x = np.asarray(x, dtype=float)
    a = x[None, :]
    jac = np.eye(len(x))
    last = net.n_layers - 1
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = a @ w.T + b
        jac = w @ jac
        if i < last:
            jac = elu_prime(z[0], net.alpha)[:, None] * jac
            a = elu(z, net.alpha)
        else:
            a = z
    return jac


@dataclass(frozen=True)
class AdamConfig:
    step_size: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    batch_size: int = 32
    epochs: int = 200
    seed: int = 0
    lr_decay: float = 1.0  # multiplicative step-size factor per epoch
    patience: int | None = None  # early stopping on validation loss

    def __post_init__(self):
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("beta1, beta2 must be in [0, 1)")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")


@dataclass(frozen=True)
class LossSpec:
    """Positive weights for the squared-error loss: a d_out vector for
    per-output weighting or a scalar applied uniformly."""

    weights: np.ndarray | float = 1.0

    def vector(self, d_out):
        w = np.asarray(self.weights, dtype=float) * np.ones(d_out)
        if np.any(w <= 0):
            raise ValueError("loss weights must be positive")
        return w


def weighted_sse(pred, target, w):
    return float(np.sum(w * (pred - target) ** 2))


def train_adam(net, x, y, cfg, loss=LossSpec(), x_val=None, y_val=None):
    """Minibatch Adam on the weighted sum-of-squares loss.

    First/second moment accumulators with bias corrections 1 - beta1^(n+1)
    and 1 - beta2^(n+1); the gradient is of the summed (not averaged) batch
    loss. Returns (trained net, history dict).
    """
    net = net.copy()
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.asarray(y, dtype=float)
    if y.ndim == 1:
        y = y[:, None]
    n_samples = len(x)
    if n_samples == 0:
        raise ValueError("training set is empty")
    w_loss = loss.vector(y.shape[1])

    u = [np.zeros_like(w) for w in net.weights]
    v = [np.zeros_like(w) for w in net.weights]
    ub = [np.zeros_like(b) for b in net.biases]
    vb = [np.zeros_like(b) for b in net.biases]
    rng = np.random.default_rng(cfg.seed)
    history = {"train_loss": [], "val_loss": []}
    best_val = np.inf
    best_net = net.copy()
    stall = 0
    step = 0
    lr = cfg.step_size

    for epoch in range(cfg.epochs):
        order = rng.permutation(n_samples)
        for lo in range(0, n_samples, cfg.batch_size):
            idx = order[lo : lo + cfg.batch_size]
            xb, yb = x[idx], y[idx]
            pred = forward(net, xb)
            dloss = 2.0 * w_loss[None, :] * (pred - yb)
            gw, gb = backprop(net, xb, dloss)
            c1 = 1.0 - cfg.beta1 ** (step + 1)
            c2 = 1.0 - cfg.beta2 ** (step + 1)
            for i in range(net.n_layers):
                u[i] = cfg.beta1 * u[i] + (1 - cfg.beta1) * gw[i]
                v[i] = cfg.beta2 * v[i] + (1 - cfg.beta2) * gw[i] ** 2
                net.weights[i] -= lr * (u[i] / c1) / (np.sqrt(v[i] / c2) + cfg.epsilon)
                ub[i] = cfg.beta1 * ub[i] + (1 - cfg.beta1) * gb[i]
                vb[i] = cfg.beta2 * vb[i] + (1 - cfg.beta2) * gb[i] ** 2
                net.biases[i] -= lr * (ub[i] / c1) / (np.sqrt(vb[i] / c2) + cfg.epsilon)
            step += 1
        train_loss = weighted_sse(forward(net, x), y, w_loss) / n_samples
        history["train_loss"].append(train_loss)
        if not np.isfinite(train_loss):
            raise RuntimeError(f"non-finite loss at epoch {epoch}")
        if x_val is not None:
            yv = np.asarray(y_val, dtype=float)
            if yv.ndim == 1:
                yv = yv[:, None]
            val_loss = weighted_sse(forward(net, x_val), yv, w_loss) / len(yv)
            history["val_loss"].append(val_loss)
            if val_loss < best_val - 1e-15:
                best_val = val_loss
                best_net = net.copy()
                stall = 0
            else:
                stall += 1
            if cfg.patience is not None and stall > cfg.patience:
                return best_net, history
        lr *= cfg.lr_decay
    if x_val is not None and cfg.patience is not None:
        return best_net, history
    return net, history


# ---------------------------------------------------------------------------
# Persistence (JSON weights file, versioned)
# ---------------------------------------------------------------------------

SCHEMA_VERSION = 1


def save_network(net, path, extra=None):
    doc = {
        "schema_version": SCHEMA_VERSION,
        "kind": "dense",
        "sizes": net.sizes,
        "alpha": net.alpha,
        "weights": [w.tolist() for w in net.weights],
        "biases": [b.tolist() for b in net.biases],
    }
    if extra:
        doc.update(extra)
    Path(path).write_text(json.dumps(doc))


def load_network(path):
    doc = json.loads(Path(path).read_text())
    if doc.get("kind", "dense") != "dense":
        raise ValueError(f"not a dense network file: {doc.get('kind')}")
    net = DenseNetwork(
        weights=[np.asarray(w, dtype=float) for w in doc["weights"]],
        biases=[np.asarray(b, dtype=float) for b in doc["biases"]],
        alpha=float(doc.get("alpha", 1.0)),
    )
    return net, doc
