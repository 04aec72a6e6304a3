"""Inverse-map baseline: a small convolutional network that maps an IV
surface image directly to model parameters, and the out-of-sample
comparison against LM calibration over the surrogate.

Conventions: input image (n_maturities, n_strikes) = (8, 11), single
channel; convolution is "valid" (no padding), stride 1; 2x2 max pooling
with floor division (the trailing odd column is dropped); pooling ties
break to the first index. The convolution output is linear; the only
hidden nonlinearity is the Elu dense layer.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .calibrator import CalibrationProblem, LMConfig, lm_calibrate, rmse
from .dataset import unscale_inputs
from .neuralnet import AdamConfig, elu, elu_prime


@dataclass
class ConvNetwork:
    """conv(16 filters 3x3) -> maxpool 2x2 -> dense(50, Elu) -> linear(4)."""

    kernels: np.ndarray  # (n_filters, 3, 3)
    conv_bias: np.ndarray  # (n_filters,)
    w_dense: np.ndarray  # (50, flat)
    b_dense: np.ndarray
    w_out: np.ndarray  # (4, 50)
    b_out: np.ndarray
    alpha: float = 1.0
    input_shape: tuple = (8, 11)

    @property
    def param_count(self):
        return (self.kernels.size + self.conv_bias.size + self.w_dense.size
                + self.b_dense.size + self.w_out.size + self.b_out.size)

    def params(self):
        return [self.kernels, self.conv_bias, self.w_dense, self.b_dense,
                self.w_out, self.b_out]

    def copy(self):
        return ConvNetwork(*(p.copy() for p in self.params()),
                           alpha=self.alpha, input_shape=self.input_shape)


def init_conv_network(seed, n_filters=16, n_dense=50, d_out=4,
                      input_shape=(8, 11), alpha=1.0):
    rng = np.random.default_rng(seed)
    h, w = input_shape
    ch, cw = h - 2, w - 2
    ph, pw = ch // 2, cw // 2
    flat = ph * pw * n_filters
    k_bound = 1.0 / 3.0  # fan_in = 9
    net = ConvNetwork(
        kernels=rng.uniform(-k_bound, k_bound, size=(n_filters, 3, 3)),
        conv_bias=np.zeros(n_filters),
        w_dense=rng.uniform(-1, 1, size=(n_dense, flat)) / np.sqrt(flat),
        b_dense=np.zeros(n_dense),
        w_out=rng.uniform(-1, 1, size=(d_out, n_dense)) / np.sqrt(n_dense),
        b_out=np.zeros(d_out),
        alpha=alpha,
        input_shape=input_shape,
    )
    return net


def _conv2d(x, kernels, bias):
    """Valid 3x3 correlation: x (b, h, w) -> (b, h-2, w-2, f)."""
    patches = sliding_window_view(x, (3, 3), axis=(1, 2))  # (b, h-2, w-2, 3, 3)
    return np.einsum("bijpq,fpq->bijf", patches, kernels) + bias


def _pool_forward(c):
    """2x2 max pool with floor division; returns pooled values and the flat
    argmax index (first index on ties) for gradient routing."""
    b, ch, cw, f = c.shape
    ph, pw = ch // 2, cw // 2
    win = c[:, : 2 * ph, : 2 * pw, :].reshape(b, ph, 2, pw, 2, f)
    win = win.transpose(0, 1, 3, 5, 2, 4).reshape(b, ph, pw, f, 4)
    arg = win.argmax(axis=-1)
    pooled = np.take_along_axis(win, arg[..., None], axis=-1)[..., 0]
    return pooled, arg


def _pool_backward(grad_pooled, arg, conv_shape):
    b, ch, cw, f = conv_shape
    ph, pw = ch // 2, cw // 2
    grad_win = np.zeros((b, ph, pw, f, 4))
    np.put_along_axis(grad_win, arg[..., None], grad_pooled[..., None], axis=-1)
    grad_win = grad_win.reshape(b, ph, pw, f, 2, 2).transpose(0, 1, 4, 2, 5, 3)
    grad_c = np.zeros(conv_shape)
    grad_c[:, : 2 * ph, : 2 * pw, :] = grad_win.reshape(b, 2 * ph, 2 * pw, f)
    return grad_c


def conv_forward(net, surfaces):
    """theta estimates (scaled coordinates) for surfaces (b, h, w) or (h, w)."""
    x = np.asarray(surfaces, dtype=float)
    single = x.ndim == 2
    if single:
        x = x[None]
    if not np.all(np.isfinite(x)):
        raise ValueError("surface has missing nodes")
    c = _conv2d(x, net.kernels, net.conv_bias)
    pooled, _ = _pool_forward(c)
    flat = pooled.reshape(len(x), -1)
    hidden = elu(flat @ net.w_dense.T + net.b_dense, net.alpha)
    out = hidden @ net.w_out.T + net.b_out
    return out[0] if single else out


def _forward_cache(net, x):
    c = _conv2d(x, net.kernels, net.conv_bias)
    pooled, arg = _pool_forward(c)
    flat = pooled.reshape(len(x), -1)
    z_dense = flat @ net.w_dense.T + net.b_dense
    hidden = elu(z_dense, net.alpha)
    out = hidden @ net.w_out.T + net.b_out
    return c, arg, flat, z_dense, hidden, out


def conv_gradients(net, x, dloss_dout):
    """Gradients of a scalar loss wrt all parameters; x is (b, h, w)."""
    c, arg, flat, z_dense, hidden, _ = _forward_cache(net, x)
    g_w_out = dloss_dout.T @ hidden
    g_b_out = dloss_dout.sum(axis=0)
    d_hidden = (dloss_dout @ net.w_out) * elu_prime(z_dense, net.alpha)
    g_w_dense = d_hidden.T @ flat
    g_b_dense = d_hidden.sum(axis=0)
    d_flat = d_hidden @ net.w_dense
    b, ch, cw, f = c.shape
    d_pooled = d_flat.reshape(b, ch // 2, cw // 2, f)
    d_c = _pool_backward(d_pooled, arg, c.shape)
    patches = sliding_window_view(x, (3, 3), axis=(1, 2))
    g_kernels = np.einsum("bijf,bijpq->fpq", d_c, patches)
    g_conv_bias = d_c.sum(axis=(0, 1, 2))
    return [g_kernels, g_conv_bias, g_w_dense, g_b_dense, g_w_out, g_b_out]


def train_inverse(net, surfaces, theta_scaled, cfg):
    """Adam minibatch training on the mean-squared error of scaled theta.

    Same iterates as the dense trainer; returns (net, history)."""
    net = net.copy()
    x = np.asarray(surfaces, dtype=float)
    y = np.asarray(theta_scaled, dtype=float)
    n_samples = len(x)
    params = net.params()
    u = [np.zeros_like(p) for p in params]
    v = [np.zeros_like(p) for p in params]
    rng = np.random.default_rng(cfg.seed)
    history = {"train_loss": []}
    step = 0
    lr = cfg.step_size
    for epoch in range(cfg.epochs):
        order = rng.permutation(n_samples)
        for lo in range(0, n_samples, cfg.batch_size):
            idx = order[lo : lo + cfg.batch_size]
            xb, yb = x[idx], y[idx]
            pred = conv_forward(net, xb)
            dloss = 2.0 * (pred - yb) / len(xb)
            grads = conv_gradients(net, xb, dloss)
            c1 = 1.0 - cfg.beta1 ** (step + 1)
            c2 = 1.0 - cfg.beta2 ** (step + 1)
            for i, p in enumerate(params):
                u[i] = cfg.beta1 * u[i] + (1 - cfg.beta1) * grads[i]
                v[i] = cfg.beta2 * v[i] + (1 - cfg.beta2) * grads[i] ** 2
                p -= lr * (u[i] / c1) / (np.sqrt(v[i] / c2) + cfg.epsilon)
            step += 1
        loss = float(np.mean((conv_forward(net, x) - y) ** 2))
        history["train_loss"].append(loss)
        if not np.isfinite(loss):
            raise RuntimeError(f"non-finite loss at epoch {epoch}")
        lr *= cfg.lr_decay
    return net, history


def invert_surface(net, surface_values, prior):
    """Raw-coordinate parameter estimate, clipped into the prior box."""
    theta_scaled = conv_forward(net, np.asarray(surface_values, dtype=float))
    return prior.clip(unscale_inputs(theta_scaled, prior))


def out_of_sample_study(net, surrogate, target_surfaces, lm_cfg=LMConfig()):
    """Per target surface: RMSE of the inverse-map refit vs. RMSE of LM
    calibration over the surrogate. Returns (rmse_nn, rmse_mc) arrays."""
    prior = surrogate.prior
    rmse_nn, rmse_mc = [], []
    for values in target_surfaces:
        target = np.asarray(values, dtype=float).ravel()
        th_nn = invert_surface(net, np.asarray(values, float), prior)
        rmse_nn.append(rmse(surrogate.surface(th_nn), target))
        problem = CalibrationProblem(
            forward=surrogate.surface, jacobian=surrogate.jacobian,
            target=target, lower=prior.lower_array(), upper=prior.upper_array(),
        )
        rep = lm_calibrate(problem, lm_cfg)
        rmse_mc.append(rep.final_rmse)
    return np.asarray(rmse_nn), np.asarray(rmse_mc)


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------

def save_conv_network(net, path, extra=None):
    doc = {
        "schema_version": 1,
        "kind": "conv",
        "alpha": net.alpha,
        "input_shape": list(net.input_shape),
        "kernels": net.kernels.tolist(),
        "conv_bias": net.conv_bias.tolist(),
        "w_dense": net.w_dense.tolist(),
        "b_dense": net.b_dense.tolist(),
        "w_out": net.w_out.tolist(),
        "b_out": net.b_out.tolist(),
    }
    if extra:
        doc.update(extra)
    Path(path).write_text(json.dumps(doc))


def load_conv_network(path):
    doc = json.loads(Path(path).read_text())
    if doc.get("kind") != "conv":
        raise ValueError(f"not a conv network file: {doc.get('kind')}")
    net = ConvNetwork(
        kernels=np.asarray(doc["kernels"], float),
        conv_bias=np.asarray(doc["conv_bias"], float),
        w_dense=np.asarray(doc["w_dense"], float),
        b_dense=np.asarray(doc["b_dense"], float),
        w_out=np.asarray(doc["w_out"], float),
        b_out=np.asarray(doc["b_out"], float),
        alpha=float(doc.get("alpha", 1.0)),
        input_shape=tuple(doc.get("input_shape", (8, 11))),
    )
    return net, doc
