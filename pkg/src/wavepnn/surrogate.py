"""Dense MLP engine for fitting digital-twin forward models.

SiLU hidden activations, identity output, Adam on mean squared error, with
optional per-layer standardization and dropout for the deeper cavity fits.
Gradients (parameters and inputs) are hand-written reverse accumulation and
are finite-difference checked in the test suite.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .optim import Adam, AdamConfig

_LN_EPS = 1e-5


def silu(u):
    """u * sigmoid(u)."""
    u = np.asarray(u, dtype=np.float64)
    return u * (0.5 * (1.0 + np.tanh(0.5 * u)))


def _silu_grad(u):
    s = 0.5 * (1.0 + np.tanh(0.5 * u))
    return s * (1.0 + u * (1.0 - s))


@dataclass
class Mlp:
    """Weights/biases per layer; hidden layers use SiLU, the output is linear.

    ``layer_norm`` standardizes each hidden pre-activation row (no affine
    parameters); it is part of the fitted function, applied identically during
    fitting and evaluation. ``dropout`` only acts while fitting.
    """

    weights: list
    biases: list
    layer_norm: bool = False
    dropout: float = 0.0

    @classmethod
    def create(cls, dims, seed=0, layer_norm=False, dropout=0.0):
        """dims = [in, hidden..., out]; Gaussian init with std sqrt(2/fan_in)."""
        rng = np.random.default_rng(seed)
        weights, biases = [], []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            weights.append(rng.normal(0.0, math.sqrt(2.0 / fan_in),
                                      size=(fan_out, fan_in)))
            biases.append(np.zeros(fan_out))
        return cls(weights, biases, layer_norm, dropout)

    @property
    def input_dim(self):
        return self.weights[0].shape[1]

    @property
    def output_dim(self):
        return self.weights[-1].shape[0]

    def params(self):
        return list(self.weights) + list(self.biases)

    def set_params(self, params):
        n = len(self.weights)
        self.weights = list(params[:n])
        self.biases = list(params[n:])


def _layer_norm(z):
    mu = z.mean(axis=1, keepdims=True)
    var = z.var(axis=1, keepdims=True)
    inv = 1.0 / np.sqrt(var + _LN_EPS)
    zhat = (z - mu) * inv
    return zhat, inv


def _layer_norm_vjp(zhat, inv, dzhat):
    # standard LN backward without affine terms
    return inv * (dzhat - dzhat.mean(axis=1, keepdims=True)
                  - zhat * np.mean(dzhat * zhat, axis=1, keepdims=True))


def _forward_trace(mlp: Mlp, x, training=False, rng=None):
    """Forward pass keeping everything the backward pass needs."""
    a = np.asarray(x, dtype=np.float64)
    trace = []
    n_layers = len(mlp.weights)
    for i, (w, b) in enumerate(zip(mlp.weights, mlp.biases)):
        rec = {"a_in": a}
        z = a @ w.T + b
        if i < n_layers - 1:
            if mlp.layer_norm:
                z_raw = z
                z, inv = _layer_norm(z)
                rec.update(zhat=z, inv=inv, z_raw=z_raw)
            rec["z"] = z
            a = silu(z)
            if training and mlp.dropout > 0.0:
                keep = 1.0 - mlp.dropout
                mask = (rng.random(a.shape) < keep) / keep
                a = a * mask
                rec["mask"] = mask
        else:
            a = z
        trace.append(rec)
    return a, trace


def _backward(mlp: Mlp, trace, d_out):
    """Reverse accumulation; returns (d_weights, d_biases, d_input)."""
    d_ws = [None] * len(mlp.weights)
    d_bs = [None] * len(mlp.biases)
    da = d_out
    for i in range(len(mlp.weights) - 1, -1, -1):
        rec = trace[i]
        if i < len(mlp.weights) - 1:
            if "mask" in rec:
                da = da * rec["mask"]
            dz = da * _silu_grad(rec["z"])
            if mlp.layer_norm:
                dz = _layer_norm_vjp(rec["zhat"], rec["inv"], dz)
        else:
            dz = da
        d_ws[i] = dz.T @ rec["a_in"]
        d_bs[i] = dz.sum(axis=0)
        da = dz @ mlp.weights[i]
    return d_ws, d_bs, da


def mlp_forward(mlp: Mlp, x):
    """Deterministic evaluation-mode forward pass."""
    out, _ = _forward_trace(mlp, x)
    return out


def mlp_vjp(mlp: Mlp, x, cotangent):
    """d(sum(cotangent * mlp_forward(x)))/dx (evaluation mode)."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    x2 = np.atleast_2d(x)
    ct = np.atleast_2d(np.asarray(cotangent, dtype=np.float64))
    _, trace = _forward_trace(mlp, x2)
    _, _, dx = _backward(mlp, trace, ct)
    return dx[0] if single else dx


def mlp_param_grads(mlp: Mlp, x, y, training=False, rng=None):
    """MSE loss and its parameter gradients on one batch."""
    pred, trace = _forward_trace(mlp, x, training=training, rng=rng)
    diff = pred - y
    loss = float(np.mean(diff * diff))
    d_out = 2.0 * diff / diff.size
    d_ws, d_bs, _ = _backward(mlp, trace, d_out)
    return loss, d_ws + d_bs


@dataclass
class FitReport:
    train_mse: list = field(default_factory=list)
    val_mse: list = field(default_factory=list)
    final_mse: float = math.nan
    diverged: bool = False


def _mse(mlp, x, y):
    d = mlp_forward(mlp, x) - y
    return float(np.mean(d * d))


def fit_surrogate(pairs, widths, epochs=200, lr=1e-3, seed=0, val_frac=0.1,
                  batch_size=128, layer_norm=False, dropout=0.0):
    """Fit an MLP forward model to (inputs, outputs) pairs.

    Splits off a validation fraction, minimizes MSE with Adam, and reports
    per-epoch train/validation MSE plus the final held-out MSE. Deterministic
    given ``seed``; aborts (flagged, keeping the last finite state) if the
    loss diverges.
    """
    x, y = (np.asarray(a, dtype=np.float64) for a in pairs)
    if len(x) < 10:
        raise ValueError("need at least 10 pairs")
    if not 0.0 < val_frac < 1.0:
        raise ValueError("val_frac must be in (0, 1)")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(x))
    n_val = max(1, int(round(val_frac * len(x))))
    val_idx, train_idx = order[:n_val], order[n_val:]
    xt, yt = x[train_idx], y[train_idx]
    xv, yv = x[val_idx], y[val_idx]

    mlp = Mlp.create([x.shape[1], *widths, y.shape[1]], seed=seed,
                     layer_norm=layer_norm, dropout=dropout)
    opt = Adam([p.shape for p in mlp.params()], AdamConfig(lr=lr))
    report = FitReport()
    report.train_mse.append(_mse(mlp, xt, yt))
    report.val_mse.append(_mse(mlp, xv, yv))
    for _ in range(epochs):
        perm = rng.permutation(len(xt))
        last_params = [p.copy() for p in mlp.params()]
        diverged = False
        for start in range(0, len(xt), batch_size):
            sel = perm[start:start + batch_size]
            loss, grads = mlp_param_grads(mlp, xt[sel], yt[sel],
                                          training=True, rng=rng)
            if not np.isfinite(loss):
                diverged = True
                break
            mlp.set_params(opt.step(mlp.params(), grads))
        if diverged:
            mlp.set_params(last_params)
            report.diverged = True
            break
        report.train_mse.append(_mse(mlp, xt, yt))
        report.val_mse.append(_mse(mlp, xv, yv))
    report.final_mse = report.val_mse[-1]
    return mlp, report


MICROWAVE_SURROGATE_WIDTHS = [100, 200, 400, 800, 800, 400, 200, 100, 20]


def microwave_fit_kwargs():
    """Fitting preset for the deep cavity surrogate: wide stack with
    standardized layers and dropout 0.1 against overfitting."""
    return dict(widths=MICROWAVE_SURROGATE_WIDTHS, layer_norm=True, dropout=0.1)


class MlpBackend:
    """Adapter exposing a fitted Mlp through the forward-backend contract,
    for use as a physical stand-in or as a backward model."""

    def __init__(self, mlp: Mlp):
        self.mlp = mlp
        self.input_dim = mlp.input_dim
        self.output_dim = mlp.output_dim

    def forward(self, x):
        return mlp_forward(self.mlp, np.asarray(x, dtype=np.float64))

    def vjp(self, x, cotangent):
        return mlp_vjp(self.mlp, x, cotangent)
