"""Layer-local contrastive training with two physical forward passes.

Each layer is a physical backend followed by a trainable matrix. Training
never queries the backend's internals: one positive and one negative forward
pass per layer per epoch produce activations h_pos/h_neg, and the trainable
matrix is updated against the contrastive goodness loss using those fixed
activations only. Inference sweeps candidate labels and picks the one with
the highest goodness accumulated over layers.
"""

import time
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset, LabelEmbedSpec, accuracy, confusion_matrix, \
    embed_labels, make_pos_neg_batch
from .optim import Adam, AdamConfig
from .report import RunReport


def goodness(y):
    """Sum of squared activities per row."""
    y = np.asarray(y, dtype=np.float64)
    return np.sum(y * y, axis=-1)


def _softplus(u):
    return np.maximum(u, 0.0) + np.log1p(np.exp(-np.abs(u)))


def _sigmoid(u):
    # 0.5*(1+tanh(u/2)) is exact and overflow-free
    return 0.5 * (1.0 + np.tanh(0.5 * u))


def ff_loss(g_pos, g_neg, theta):
    """Mean contrastive layer loss log(1 + exp(-theta*(g_pos - g_neg))).

    Evaluated in softplus form, stable for |theta*(g_pos-g_neg)| up to the
    float64 range.
    """
    if theta <= 0:
        raise ValueError("theta must be > 0")
    z = theta * (np.asarray(g_pos, dtype=np.float64)
                 - np.asarray(g_neg, dtype=np.float64))
    return float(np.mean(_softplus(-z)))

def ff_loss_grad(w_t, h_pos, h_neg, theta):
    """Gradient of the mean layer loss w.r.t. the trainable matrix.

    Uses only the recorded physical outputs h_pos/h_neg; with y = h @ w_t.T
    and z = theta*(g_pos - g_neg), the gradient is the batch mean of
    -sigmoid(-z) * 2*theta * (y_pos h_pos^T - y_neg h_neg^T).
    """
    if theta <= 0:
        raise ValueError("theta must be > 0")
    y_pos = h_pos @ w_t.T
    y_neg = h_neg @ w_t.T
    z = theta * (goodness(y_pos) - goodness(y_neg))
    s = _sigmoid(-z)
    b = len(h_pos)
    grad = (-2.0 * theta / b) * ((s[:, None] * y_pos).T @ h_pos
                                 - (s[:, None] * y_neg).T @ h_neg)
    return grad


def normalize_direction(y, eps=1e-8):
    """Divide each row by its L2 norm (+ eps); zero rows stay zero."""
    if eps <= 0:
        raise ValueError("eps must be > 0")
    y = np.asarray(y, dtype=np.float64)
    norms = np.linalg.norm(y, axis=-1, keepdims=True)
    return y / (norms + eps)


def normalize_direction_vjp(y, cotangent, eps=1e-8):
    """Input gradient of normalize_direction (used by gradient baselines)."""
    y = np.asarray(y, dtype=np.float64)
    norms = np.linalg.norm(y, axis=-1, keepdims=True)
    denom = norms + eps
    dots = np.sum(y * cotangent, axis=-1, keepdims=True)
    out = cotangent / denom - y * dots / (np.maximum(norms, 1e-300) * denom ** 2)
    return np.where(norms == 0.0, cotangent / denom, out)


def layer_input(layer_index, prev_normed, x0, skip, norm_eps=1e-8):
    """Input wiring for one layer: layer 0 sees x0; deeper layers see the
    previous normalized output, optionally concatenated with normalized x0."""
    if layer_index == 0:
        return x0
    if skip:
        return np.hstack([prev_normed, normalize_direction(x0, norm_eps)])
    return prev_normed


@dataclass
class FfLayer:
    """One physical backend plus its trainable matrix and optimizer state."""

    backend: object
    w_t: np.ndarray
    theta: float = 1.0
    adam: Adam | None = None

    @classmethod
    def create(cls, backend, out_width=None, theta=1.0, seed=0):
        """Gaussian init with std 1/sqrt(fan_in) over the backend output."""
        fan_in = backend.output_dim
        out_width = out_width or fan_in
        rng = np.random.default_rng(seed)
        w = rng.normal(0.0, 1.0 / np.sqrt(fan_in), size=(out_width, fan_in))
        return cls(backend=backend, w_t=w, theta=theta)

    @property
    def out_width(self):
        return self.w_t.shape[0]


class FfNetwork:
    """Ordered layers plus skip wiring and the label-embedding declaration."""

    def __init__(self, layers, embed: LabelEmbedSpec, input_dim,
                 skip=False, norm_eps=1e-8, include_layers=None):
        if not layers:
            raise ValueError("need at least one layer")
        self.layers = list(layers)
        self.embed = embed
        self.input_dim = input_dim
        self.skip = bool(skip)
        self.norm_eps = float(norm_eps)
        self.include_layers = list(range(len(layers))) if include_layers is None \
            else sorted(include_layers)
        if any(l < 0 or l >= len(layers) for l in self.include_layers):
            raise ValueError("include_layers outside range")
        d_embedded = embed.embedded_dim(input_dim)
        for i, layer in enumerate(self.layers):
            expected = d_embedded if i == 0 else (
                self.layers[i - 1].out_width + (d_embedded if self.skip else 0))
            got = layer.backend.input_dim
            if got != expected:
                raise ValueError(
                    f"layer {i} backend expects input dim {got}, wiring "
                    f"provides {expected}")

    @property
    def n_classes(self):
        return self.embed.n_classes

    def forward_embedded(self, x0):
        """Run all layers on an already-embedded batch; returns per-layer y."""
        ys = []
        a = x0
        for i, layer in enumerate(self.layers):
            inp = layer_input(i, a, x0, self.skip, self.norm_eps)
            h = layer.backend.forward(inp)
            y = h @ layer.w_t.T
            ys.append(y)
            a = normalize_direction(y, self.norm_eps)
        return ys


@dataclass(frozen=True)
class GoodnessReport:
    """Goodness per (sample, candidate label, layer) and its accumulation
    over the included layers; accumulated[b, c] = per_layer[b, c, included].sum()."""

    per_layer: np.ndarray
    accumulated: np.ndarray


@dataclass
class FfTrainConfig:
    n_exter: int = 20
    n_inter: int = 20
    batch_size: int | None = None
    theta: float = 1.0
    lr: float = 1e-3
    seed: int = 0
    eval_every: int = 1
    eval_subsample: int | None = None
    adam: AdamConfig | None = None

    def make_adam(self):
        cfg = self.adam or AdamConfig(lr=self.lr)
        return AdamConfig(lr=self.lr, beta1=cfg.beta1, beta2=cfg.beta2, eps=cfg.eps)


def train_layer(layer: FfLayer, h_pos, h_neg, n_inter, opt_cfg: AdamConfig | None = None):
    """Run n_inter optimizer steps on the layer's matrix against fixed
    physical outputs; no backend queries happen here.

    Returns the normalized final positive/negative outputs for propagation
    and the loss measured at the start of each step.
    """
    if n_inter < 1:
        raise ValueError("n_inter must be >= 1")
    if layer.adam is None:
        layer.adam = Adam([layer.w_t.shape], opt_cfg)
    trace = np.empty(n_inter)
    theta = layer.theta
    w = layer.w_t
    for step in range(n_inter):
        y_pos = h_pos @ w.T
        y_neg = h_neg @ w.T
        z = theta * (goodness(y_pos) - goodness(y_neg))
        loss = float(np.mean(_softplus(-z)))
        if not np.isfinite(loss):
            raise RuntimeError(
                f"non-finite layer loss at inner step {step} "
                f"(theta={theta}, |w|={np.abs(w).max():.3g})")
        trace[step] = loss
        s = _sigmoid(-z)
        b = len(h_pos)
        grad = (-2.0 * theta / b) * ((s[:, None] * y_pos).T @ h_pos
                                     - (s[:, None] * y_neg).T @ h_neg)
        if not np.all(np.isfinite(grad)):
            raise RuntimeError(
                f"non-finite gradient at inner step {step} "
                f"(theta={theta}, grad_norm=inf)")
        w = layer.adam.step([w], [grad])[0]
    layer.w_t = w
    y_pos = h_pos @ w.T
    y_neg = h_neg @ w.T
    return normalize_direction(y_pos), normalize_direction(y_neg), trace


def infer(net: FfNetwork, x, include_layers=None):
    """Accumulated-goodness classification.

    Embeds every candidate label, runs the full stack, sums per-layer goodness
    over the included layers, and returns (predictions, GoodnessReport). Ties
    break toward the smallest label index.
    """
    x = np.asarray(x, dtype=np.float64)
    c = net.n_classes
    include = net.include_layers if include_layers is None else sorted(include_layers)
    per_layer = np.empty((len(x), c, len(net.layers)))
    for label in range(c):
        x0 = embed_labels(x, np.full(len(x), label), net.embed)
        for i, y in enumerate(net.forward_embedded(x0)):
            per_layer[:, label, i] = goodness(y)
    accumulated = per_layer[:, :, include].sum(axis=2)
    preds = np.argmax(accumulated, axis=1)
    return preds, GoodnessReport(per_layer=per_layer, accumulated=accumulated)


def _eval_accuracy(net, ds: Dataset, subsample, rng):
    if subsample is not None and subsample < len(ds):
        idx = rng.choice(len(ds), size=subsample, replace=False)
        ds = ds.subset(idx)
    preds, _ = infer(net, ds.x)
    return accuracy(preds, ds.labels), preds, ds.labels


def train_mfff(net: FfNetwork, train_set: Dataset, cfg: FfTrainConfig,
               test_set: Dataset | None = None):
    """Outer/inner loop training of all layers, strictly layer-local.

    Per outer epoch: draw a batch, build positive/negative inputs, then for
    each layer run exactly one positive and one negative physical forward and
    n_inter local optimizer steps. Deterministic given cfg.seed.
    """
    if train_set.dim != net.input_dim:
        raise ValueError(
            f"dataset dim {train_set.dim} != network input dim {net.input_dim}")
    rng = np.random.default_rng(cfg.seed)
    report = RunReport(method="mfff", seed=cfg.seed)
    opt_cfg = cfg.make_adam()
    for layer in net.layers:
        layer.theta = cfg.theta
    n = len(train_set)
    for epoch in range(cfg.n_exter):
        t0 = time.perf_counter()
        if cfg.batch_size is not None and cfg.batch_size < n:
            idx = rng.choice(n, size=cfg.batch_size, replace=False)
            batch = train_set.subset(idx)
        else:
            batch = train_set
        pn = make_pos_neg_batch(batch, net.embed, rng)
        a_pos, a_neg = pn.x_pos, pn.x_neg
        x0_pos, x0_neg = pn.x_pos, pn.x_neg
        epoch_loss = np.nan
        for li, layer in enumerate(net.layers):
            inp_pos = layer_input(li, a_pos, x0_pos, net.skip, net.norm_eps)
            inp_neg = layer_input(li, a_neg, x0_neg, net.skip, net.norm_eps)
            h_pos = layer.backend.forward(inp_pos)
            h_neg = layer.backend.forward(inp_neg)
            a_pos, a_neg, trace = train_layer(layer, h_pos, h_neg,
                                              cfg.n_inter, opt_cfg)
            for step, loss in enumerate(trace):
                report.loss_traces.append((epoch, li, step, float(loss)))
            epoch_loss = float(trace[-1])
        if cfg.eval_every and (epoch + 1) % cfg.eval_every == 0:
            acc, _, _ = _eval_accuracy(net, train_set, cfg.eval_subsample, rng)
            report.add_curve(epoch, "train", acc, epoch_loss)
            if test_set is not None:
                tacc, _, _ = _eval_accuracy(net, test_set, cfg.eval_subsample, rng)
                report.add_curve(epoch, "test", tacc, epoch_loss)
        report.wall_clock.append(time.perf_counter() - t0)
    if cfg.n_exter > 0 and cfg.eval_every:
        preds, _ = infer(net, train_set.x)
        report.confusions["train"] = confusion_matrix(
            preds, train_set.labels, net.n_classes).tolist()
        if test_set is not None:
            preds, _ = infer(net, test_set.x)
            report.confusions["test"] = confusion_matrix(
                preds, test_set.labels, net.n_classes).tolist()
    return net, report
