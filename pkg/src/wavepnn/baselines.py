"""Gradient-based comparison trainers sharing one backprop engine.

All three BP-family methods train the same architecture (physical layers with
trainable matrices, a linear readout, softmax cross-entropy) and differ only
in which transformation supplies the forward pass and which supplies the
backward pass:

  ideal BP    exact simulator forward, exact simulator backward
  in-silico   mismatched twin forward AND backward, deployed on the real system
  PA-BP       real forward, digital-model backward evaluated at the true
              recorded activations

Because the three entry points drive the same engine with different bindings,
exact-binding PA-BP reproduces ideal BP bitwise, and sigma=0 in-silico does
too; the test suite pins both equivalences.
"""

import time
from dataclasses import dataclass, field

import numpy as np

from .backends import OpticsSystem, clone_with_param_noise, is_simulator, perturb
from .data import Dataset, LabelEmbedSpec, accuracy, confusion_matrix, \
    gen_vowel_dataset
from .fftrain import FfLayer, FfNetwork, FfTrainConfig, infer, layer_input, \
    normalize_direction, normalize_direction_vjp, train_mfff
from .optim import Adam, AdamConfig
from .report import RunReport


@dataclass
class BpTrainConfig:
    epochs: int = 30
    lr: float = 1e-3
    batch_size: int = 128
    seed: int = 0
    skip: bool = False
    out_widths: list | None = None
    norm_eps: float = 1e-8
    eval_every: int = 1
    mismatch_sigma: float = 0.025


class BpNetwork:
    """Physical layers + trainable matrices + linear readout to class logits.

    Mirrors the contrastive architecture's wiring (normalization between
    layers, optional skip concatenation) but takes raw, unlabelled inputs and
    classifies through a softmax head.
    """

    def __init__(self, systems, w_ts, w_read, b_read, skip=False, norm_eps=1e-8):
        self.systems = list(systems)
        self.w_ts = [np.asarray(w) for w in w_ts]
        self.w_read = np.asarray(w_read)
        self.b_read = np.asarray(b_read)
        self.skip = bool(skip)
        self.norm_eps = float(norm_eps)
        if len(self.systems) != len(self.w_ts):
            raise ValueError("one trainable matrix per system")
        if self.w_read.shape[1] != self.w_ts[-1].shape[0]:
            raise ValueError("readout width must match last layer output")

    @classmethod
    def build(cls, systems, n_classes, input_dim, cfg: BpTrainConfig):
        """Deterministic init from cfg.seed; validates the skip wiring."""
        rng = np.random.default_rng(cfg.seed)
        w_ts = []
        for i, sys in enumerate(systems):
            expected = input_dim if i == 0 else (
                w_ts[-1].shape[0] + (input_dim if cfg.skip else 0))
            if sys.input_dim != expected:
                raise ValueError(
                    f"layer {i} backend expects input dim {sys.input_dim}, "
                    f"wiring provides {expected}")
            fan_in = sys.output_dim
            width = fan_in if cfg.out_widths is None else cfg.out_widths[i]
            w_ts.append(rng.normal(0.0, 1.0 / np.sqrt(fan_in), size=(width, fan_in)))
        w_read = rng.normal(0.0, 1.0 / np.sqrt(w_ts[-1].shape[0]),
                            size=(n_classes, w_ts[-1].shape[0]))
        return cls(systems, w_ts, w_read, np.zeros(n_classes),
                   skip=cfg.skip, norm_eps=cfg.norm_eps)

    def params(self):
        return [*self.w_ts, self.w_read, self.b_read]

    def set_params(self, params):
        self.w_ts = list(params[:len(self.w_ts)])
        self.w_read, self.b_read = params[-2], params[-1]

    def forward(self, x, record=False):
        """Logits for a raw batch; with record=True also returns the
        intermediates needed by the backward pass."""
        x = np.asarray(x, dtype=np.float64)
        a = x
        rec = []
        for i, (sys, w) in enumerate(zip(self.systems, self.w_ts)):
            inp = layer_input(i, a, x, self.skip, self.norm_eps)
            h = sys.forward(inp)
            y = h @ w.T
            a = normalize_direction(y, self.norm_eps)
            rec.append({"inp": inp, "h": h, "y": y})
        logits = a @ self.w_read.T + self.b_read
        return (logits, rec, a) if record else logits

    def predict(self, x):
        return np.argmax(self.forward(x), axis=1)


def softmax_xent(logits, labels):
    """Mean cross-entropy and its gradient w.r.t. logits."""
    z = logits - logits.max(axis=1, keepdims=True)
    ez = np.exp(z)
    p = ez / ez.sum(axis=1, keepdims=True)
    n = len(labels)
    nll = -np.log(np.maximum(p[np.arange(n), labels], 1e-300))
    d = p.copy()
    d[np.arange(n), labels] -= 1.0
    return float(np.mean(nll)), d / n


def bp_gradients(net: BpNetwork, backward_models, x, labels):
    """Loss and parameter gradients, chaining cotangents through the bound
    backward models evaluated at the recorded true activations."""
    logits, rec, a_last = net.forward(x, record=True)
    loss, dlogits = softmax_xent(logits, labels)
    d_wr = dlogits.T @ a_last
    d_br = dlogits.sum(axis=0)
    da = dlogits @ net.w_read
    d_wts = [None] * len(net.w_ts)
    for i in range(len(net.w_ts) - 1, -1, -1):
        dy = normalize_direction_vjp(rec[i]["y"], da, net.norm_eps)
        d_wts[i] = dy.T @ rec[i]["h"]
        if i == 0:
            break
        dh = dy @ net.w_ts[i]
        dinp = backward_models[i].vjp(rec[i]["inp"], dh)
        da = dinp[:, :net.w_ts[i - 1].shape[0]]
    return loss, d_wts + [d_wr, d_br]


def _run_bp(net: BpNetwork, backward_models, train_set: Dataset, cfg,
            method, eval_systems=None, test_set=None):
    """The shared BP training loop. ``eval_systems`` lets in-silico training
    report accuracy on the real hardware while training on twins."""
    rng = np.random.default_rng(cfg.seed)
    report = RunReport(method=method, seed=cfg.seed)
    opt = Adam([p.shape for p in net.params()], AdamConfig(lr=cfg.lr))
    n = len(train_set)

    def evaluate(ds):
        preds = net.predict(ds.x)
        acc = accuracy(preds, ds.labels)
        if eval_systems is not None:
            real = BpNetwork(eval_systems, net.w_ts, net.w_read, net.b_read,
                             net.skip, net.norm_eps)
            preds = real.predict(ds.x)
            return accuracy(preds, ds.labels), acc  # (real, twin)
        return acc, acc

    for epoch in range(cfg.epochs):
        t0 = time.perf_counter()
        perm = rng.permutation(n)
        last_loss = np.nan
        for start in range(0, n, cfg.batch_size):
            sel = perm[start:start + cfg.batch_size]
            loss, grads = bp_gradients(net, backward_models,
                                       train_set.x[sel], train_set.labels[sel])
            if not np.isfinite(loss):
                raise RuntimeError(f"non-finite loss at epoch {epoch}")
            net.set_params(opt.step(net.params(), grads))
            last_loss = loss
        if cfg.eval_every and (epoch + 1) % cfg.eval_every == 0:
            train_acc, twin_acc = evaluate(train_set)
            report.add_curve(epoch, "train", train_acc, last_loss)
            if eval_systems is not None:
                report.add_curve(epoch, "train_twin", twin_acc, last_loss)
            if test_set is not None:
                test_acc, twin_test = evaluate(test_set)
                report.add_curve(epoch, "test", test_acc, last_loss)
                if eval_systems is not None:
                    report.add_curve(epoch, "test_twin", twin_test, last_loss)
        report.wall_clock.append(time.perf_counter() - t0)
    return report


def train_ideal_bp(net: BpNetwork, train_set: Dataset, cfg: BpTrainConfig,
                   test_set=None):
    """Backpropagation through the exact simulators (upper-bound baseline)."""
    for sys in net.systems:
        if not is_simulator(sys):
            raise TypeError("ideal BP needs simulator backends with vjp")
    report = _run_bp(net, net.systems, train_set, cfg, "ideal-bp",
                     test_set=test_set)
    return net, report


def train_pa_bp(systems, backward_models, train_set: Dataset, cfg: BpTrainConfig,
                test_set=None, n_classes=None, net=None):
    """Physics-aware BP: true forward pass, digital-model backward pass.

    ``backward_models`` binds one vjp provider per layer (exact simulator,
    mismatched clone, or fitted surrogate adapter).
    """
    if len(backward_models) != len(systems):
        raise ValueError("need one backward model per layer")
    for bm in backward_models:
        if not hasattr(bm, "vjp"):
            raise TypeError("backward model must provide vjp")
    if net is None:
        n_classes = n_classes or train_set.n_classes
        net = BpNetwork.build(systems, n_classes, train_set.dim, cfg)
    report = _run_bp(net, backward_models, train_set, cfg, "pa-bp",
                     test_set=test_set)
    return net, report


def train_in_silico(real_systems, train_set: Dataset, cfg: BpTrainConfig,
                    test_set=None):
    """Train entirely on parameter-noise twins, deploy on the real systems.

    Both passes run on the twins; the reported "train"/"test" curves are
    evaluated on the real systems (the reality gap), with twin-evaluated
    curves alongside under the *_twin splits.
    """
    if cfg.mismatch_sigma < 0:
        raise ValueError("mismatch_sigma must be >= 0")
    twins = [clone_with_param_noise(sys, cfg.mismatch_sigma, seed=cfg.seed + 7 * i)
             for i, sys in enumerate(real_systems)]
    net = BpNetwork.build(twins, train_set.n_classes, train_set.dim, cfg)
    report = _run_bp(net, twins, train_set, cfg, "in-silico",
                     eval_systems=real_systems, test_set=test_set)
    return net, report


def recovery_epoch(trace, target, tol=0.02, sustain=3):
    """First post-perturbation epoch whose accuracy stays within ``tol`` of
    ``target`` for ``sustain`` consecutive epochs, or None."""
    run = 0
    for i, acc in enumerate(trace):
        run = run + 1 if acc >= target - tol else 0
        if run >= sustain:
            return i - sustain + 1
    return None


@dataclass
class PerturbRecoverConfig:
    """Deep optics stack, hard-perturbed mid-run; both arms then retrain.

    ``backward_model`` picks the PA-BP arm's digital models: "surrogate" fits
    one MLP twin per layer before the perturbation (and keeps it, stale,
    afterwards); "stale-exact" binds the unperturbed simulators instead.
    """

    depth: int = 6
    sigma_scales: tuple = (0.5,)
    mu: float = 0.0
    epochs_pre: int = 60
    epochs_post: int = 20
    seeds: tuple = (0, 1, 2)
    n_classes: int = 6
    dim: int = 40
    n_train: int = 2000
    n_test: int = 500
    noise_sigma: float = 0.3
    inner_gain_mult: float = 2.0
    backward_model: str = "surrogate"
    surrogate_pairs: int = 4000
    surrogate_widths: tuple = (100, 200, 100)
    surrogate_epochs: int = 40
    ff: FfTrainConfig = field(default_factory=lambda: FfTrainConfig(
        n_inter=20, theta=0.05, lr=1e-3, batch_size=1000))
    bp: BpTrainConfig = field(default_factory=lambda: BpTrainConfig(
        lr=1e-3, batch_size=128))


def _optics_stack(cfg: PerturbRecoverConfig, seed):
    gains = [np.pi] + [np.pi * cfg.inner_gain_mult] * (cfg.depth - 1)
    return [OpticsSystem.random(cfg.dim, seed=1000 * seed + i, phase_gain=g)
            for i, g in enumerate(gains)]


def _fit_layer_surrogates(systems, cfg: PerturbRecoverConfig, seed):
    """One digital twin per layer, fitted on that layer's input manifold:
    raw [0,1] data for layer 0, unit-norm direction vectors deeper in."""
    from .surrogate import MlpBackend, fit_surrogate
    twins = []
    for i, sys_i in enumerate(systems):
        rng = np.random.default_rng(5000 + 13 * i + seed)
        if i == 0:
            x = rng.random((cfg.surrogate_pairs, sys_i.input_dim))
        else:
            x = rng.normal(size=(cfg.surrogate_pairs, sys_i.input_dim))
            x = normalize_direction(x)
        mlp, _ = fit_surrogate((x, sys_i.forward(x)), list(cfg.surrogate_widths),
                               epochs=cfg.surrogate_epochs, lr=1e-3,
                               seed=700 + i, val_frac=0.1)
        twins.append(MlpBackend(mlp))
    return twins


def _test_trace_mfff(net, train, test, ff_cfg, epochs):
    cfg = FfTrainConfig(**{**ff_cfg.__dict__, "n_exter": epochs,
                           "eval_every": 1, "eval_subsample": None})
    _, rep = train_mfff(net, train, cfg, test_set=test)
    return [a for _, a in rep.accuracies("test")]

def perturb_recover_experiment(cfg: PerturbRecoverConfig):
    """Train deep optics networks with both methods, hard-perturb every
    transmission matrix, and track each method's ability to retrain.

    The PA-BP arm deliberately keeps its pre-perturbation backward models (the
    digital models went stale the moment the hardware changed); the
    contrastive arm needs no model at all. Returns a RunReport whose extras
    hold one record per (seed, sigma_scale, arm).
    """
    if cfg.depth < 2:
        raise ValueError("depth must be >= 2")
    report = RunReport(method="perturb-recover")
    runs = []
    for seed in cfg.seeds:
        train, test = gen_vowel_dataset(cfg.n_classes, cfg.dim, cfg.n_train,
                                        cfg.n_test, cfg.noise_sigma, seed=seed)
        for scale in cfg.sigma_scales:
            systems = _optics_stack(cfg, seed)
            embed = LabelEmbedSpec(cfg.n_classes)

            ff_net = FfNetwork(
                [FfLayer.create(s, theta=cfg.ff.theta, seed=seed * 31 + i)
                 for i, s in enumerate(systems)],
                embed, cfg.dim)
            ff_cfg = FfTrainConfig(**{**cfg.ff.__dict__, "seed": seed})
            pre_ff = _test_trace_mfff(ff_net, train, test, ff_cfg, cfg.epochs_pre)

            if cfg.backward_model == "surrogate":
                backward = _fit_layer_surrogates(systems, cfg, seed)
            elif cfg.backward_model == "stale-exact":
                backward = systems
            else:
                raise ValueError(
                    f"unknown backward_model {cfg.backward_model!r}")
            bp_cfg = BpTrainConfig(**{**cfg.bp.__dict__, "seed": seed,
                                      "epochs": cfg.epochs_pre})
            bp_net, bp_rep = train_pa_bp(systems, backward, train, bp_cfg,
                                         test_set=test)
            pre_bp = [a for _, a in bp_rep.accuracies("test")]

            perturbed = [
                perturb(s, cfg.mu, scale * float(np.std(s.t_matrix)),
                        seed=9000 + 17 * i + seed)
                for i, s in enumerate(systems)]

            for layer, ps in zip(ff_net.layers, perturbed):
                layer.backend = ps
                layer.adam = None
            post_ff = _test_trace_mfff(ff_net, train, test, ff_cfg,
                                       cfg.epochs_post)

            bp_net.systems = list(perturbed)
            bp_post_cfg = BpTrainConfig(**{**cfg.bp.__dict__, "seed": seed + 1,
                                           "epochs": cfg.epochs_post})
            # backward models stay bound to the pre-perturbation physics
            post_rep = _run_bp(bp_net, backward, train, bp_post_cfg, "pa-bp",
                               test_set=test)
            post_bp = [a for _, a in post_rep.accuracies("test")]

            for arm, pre, post in (("mfff", pre_ff, post_ff),
                                   ("pa-bp", pre_bp, post_bp)):
                runs.append({
                    "seed": seed, "sigma_scale": scale, "arm": arm,
                    "pre_accuracy": pre[-1], "pre_trace": pre,
                    "post_trace": post,
                    "recovery_epoch": recovery_epoch(post, pre[-1]),
                })
                for ep, acc in enumerate(post):
                    report.add_curve(ep, f"{arm}/sigma{scale}/seed{seed}", acc, 0.0)
    report.extras["runs"] = runs
    return report
