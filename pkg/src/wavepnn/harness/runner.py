"""Experiment orchestration: config in, artifacts out.

Every run writes report.json (schema-validated), curves.csv, confusion.csv
and a final checkpoint into its own directory. Reruns of the same config and
seed reproduce curves.csv byte for byte.
"""

import sys
import warnings
from pathlib import Path

import numpy as np

from ..backends import MicrowaveSystem, clone_with_param_noise, is_simulator, \
    k_factor, linearity_metric
from ..baselines import BpNetwork, BpTrainConfig, PerturbRecoverConfig, \
    train_ideal_bp, train_in_silico, train_pa_bp, perturb_recover_experiment
from ..data import Dataset, LabelEmbedSpec, gen_vowel_dataset, \
    load_dataset_csv, load_mnist_idx, save_dataset_csv
from ..fftrain import FfLayer, FfNetwork, FfTrainConfig, infer, train_mfff
from ..optim import AdamConfig
from ..report import RunReport
from ..surrogate import MlpBackend, fit_surrogate
from .checkpoint import load_checkpoint, save_checkpoint
from .config import ConfigError, build_backend, config_hash, load_config
from .report import write_artifacts


def load_task(cfg):
    """Build (train, test) datasets from the task block."""
    task = cfg["task"]
    name = task["name"]
    if name == "vowel":
        return gen_vowel_dataset(task["n_classes"], task["dim"],
                                 task["n_train"], task["n_test"],
                                 task["noise_sigma"], task["seed"])
    if name == "mnist":
        for key in ("images", "labels", "test_images", "test_labels"):
            if not task[key]:
                raise ConfigError(f"task.{key}: required for the mnist task")
        train = load_mnist_idx(task["images"], task["labels"], task["crop"])
        test = load_mnist_idx(task["test_images"], task["test_labels"], task["crop"])
        if task["n_train"]:
            train = train.subset(np.arange(task["n_train"]))
        if task["n_test"]:
            test = test.subset(np.arange(task["n_test"]), split="test")
        return train, test
    if name == "csv":
        if not task["train"] or not task["test"]:
            raise ConfigError("task.train/task.test: csv paths required")
        return (load_dataset_csv(task["train"], "train"),
                load_dataset_csv(task["test"], "test"))
    raise ConfigError(f"task.name: unknown task {name!r}")


def _build_layer_systems(cfg, input_dim):
    """Instantiate backends honoring the declared wiring (skip concatenation)."""
    systems = []
    prev_width = None
    for i, spec in enumerate(cfg["layers"]):
        expected = input_dim if i == 0 else (
            prev_width + (input_dim if cfg["skip"] else 0))
        sys_i = build_backend(spec, expected_input=expected)
        systems.append(sys_i)
        widths = cfg["out_widths"]
        prev_width = widths[i] if widths else sys_i.output_dim
    return systems


def _ff_config(cfg):
    return FfTrainConfig(
        n_exter=cfg["n_exter"], n_inter=cfg["n_inter"],
        batch_size=cfg["batch_size"], theta=cfg["theta"], lr=cfg["lr"],
        seed=cfg["seed"], eval_every=cfg["eval_every"],
        eval_subsample=cfg["eval_subsample"])


def _bp_config(cfg):
    return BpTrainConfig(
        epochs=cfg["epochs"], lr=cfg["lr"],
        batch_size=cfg["batch_size"] or 128, seed=cfg["seed"],
        skip=cfg["skip"], out_widths=cfg["out_widths"],
        eval_every=cfg["eval_every"], mismatch_sigma=cfg["mismatch_sigma"])


def _embed_spec(cfg, n_classes):
    e = cfg["embed"]
    return LabelEmbedSpec(n_classes, e["slot_offset"], e["slot_value"], e["mode"])


def _surrogate_backends(systems, cfg):
    """Fit one digital twin per layer for the pa-bp backward binding."""
    out = []
    sur = cfg["surrogate"]
    for i, sys_i in enumerate(systems):
        rng = np.random.default_rng(cfg["seed"] + 101 * i)
        x = rng.random((sur["n_pairs"], sys_i.input_dim))
        if isinstance(sys_i, MicrowaveSystem):
            x = (x >= 0.5).astype(np.float64)
        y = sys_i.forward(x)
        mlp, _ = fit_surrogate((x, y), sur["widths"], epochs=sur["epochs"],
                               lr=sur["lr"], seed=cfg["seed"] + i,
                               val_frac=sur["val_frac"],
                               batch_size=sur["batch_size"],
                               layer_norm=sur["layer_norm"],
                               dropout=sur["dropout"])
        out.append(MlpBackend(mlp))
    return out


def run_experiment(cfg) -> tuple[RunReport, dict]:
    """Dispatch the configured method; returns (report, checkpoint tensors)."""
    method = cfg["method"]
    if method == "perturb-recover":
        rec = cfg["recover"]
        task = cfg["task"]
        if task["name"] != "vowel":
            raise ConfigError("task.name: perturb-recover runs on the vowel task")
        pr = PerturbRecoverConfig(
            depth=rec["depth"], sigma_scales=tuple(rec["sigma_scales"]),
            epochs_pre=rec["epochs_pre"], epochs_post=rec["epochs_post"],
            seeds=tuple(rec["seeds"]), n_classes=task["n_classes"],
            dim=task["dim"], n_train=task["n_train"], n_test=task["n_test"],
            noise_sigma=task["noise_sigma"],
            inner_gain_mult=rec["inner_gain_mult"],
            ff=FfTrainConfig(n_inter=cfg["n_inter"], theta=cfg["theta"],
                             lr=cfg["lr"], batch_size=cfg["batch_size"]),
            bp=BpTrainConfig(lr=cfg["lr"], batch_size=128))
        report = perturb_recover_experiment(pr)
        report.seed = cfg["seed"]
        return report, {}

    train, test = load_task(cfg)
    if method == "mfff":
        embed = _embed_spec(cfg, train.n_classes)
        systems = _build_layer_systems(cfg, embed.embedded_dim(train.dim))
        widths = cfg["out_widths"]
        layers = [FfLayer.create(s, out_width=(widths[i] if widths else None),
                                 theta=cfg["theta"], seed=cfg["seed"] * 31 + i)
                  for i, s in enumerate(systems)]
        net = FfNetwork(layers, embed, train.dim, skip=cfg["skip"],
                        include_layers=cfg["include_layers"])
        net, report = train_mfff(net, train, _ff_config(cfg), test_set=test)
        tensors = {f"w_t_{i}": l.w_t for i, l in enumerate(net.layers)}
        return report, tensors

    systems = _build_layer_systems(cfg, train.dim)
    bp_cfg = _bp_config(cfg)
    if method == "ideal-bp":
        net = BpNetwork.build(systems, train.n_classes, train.dim, bp_cfg)
        net, report = train_ideal_bp(net, train, bp_cfg, test_set=test)
    elif method == "in-silico":
        net, report = train_in_silico(systems, train, bp_cfg, test_set=test)
    elif method == "pa-bp":
        kind = cfg["backward_model"]
        if kind == "exact":
            backward = systems
        elif kind == "clone":
            backward = [clone_with_param_noise(s, cfg["mismatch_sigma"],
                                               seed=cfg["seed"] + 7 * i)
                        for i, s in enumerate(systems)]
        elif kind == "surrogate":
            backward = _surrogate_backends(systems, cfg)
        else:
            raise ConfigError(
                f"backward_model: unknown choice {kind!r} "
                "(exact, clone, surrogate)")
        net, report = train_pa_bp(systems, backward, train, bp_cfg, test_set=test)
    else:
        raise ConfigError(f"method: unknown method {method!r}")
    tensors = {f"w_t_{i}": w for i, w in enumerate(net.w_ts)}
    tensors["w_read"] = net.w_read
    tensors["b_read"] = net.b_read
    return report, tensors


def run(config_path, seed=None, out_dir=None) -> int:
    """CLI entry for `train`: returns the process exit code."""
    try:
        cfg = load_config(config_path)
        if seed is not None:
            cfg["seed"] = seed
        if out_dir is not None:
            cfg["out_dir"] = str(out_dir)
    except (ConfigError, OSError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return 1
    chash = config_hash(cfg)
    out = Path(cfg["out_dir"])
    try:
        report, tensors = run_experiment(cfg)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 1
    except Exception as e:
        report = RunReport(method=cfg["method"], seed=cfg["seed"],
                           config_hash=chash, status="aborted",
                           extras={"error": f"{type(e).__name__}: {e}"})
        write_artifacts(report, cfg, out)
        print(f"runtime abort: {e}", file=sys.stderr)
        return 2
    report.config_hash = chash
    write_artifacts(report, cfg, out)
    if tensors:
        save_checkpoint(out / "final.ckpt", tensors,
                        {"config_hash": chash, "seed": cfg["seed"]})
    final = report.final_accuracy("test")
    if final is not None:
        print(f"final test accuracy: {final:.4f}")
    print(f"artifacts written to {out}")
    return 0


def evaluate(config_path, checkpoint_path, seed=None) -> int:
    """Rebuild the configured network, load trained tensors, report accuracy."""
    try:
        cfg = load_config(config_path)
        if seed is not None:
            cfg["seed"] = seed
    except (ConfigError, OSError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return 1
    try:
        tensors, meta = load_checkpoint(checkpoint_path)
        train, test = load_task(cfg)
        if cfg["method"] == "mfff":
            embed = _embed_spec(cfg, train.n_classes)
            systems = _build_layer_systems(cfg, embed.embedded_dim(train.dim))
            layers = [FfLayer(backend=s, w_t=tensors[f"w_t_{i}"],
                              theta=cfg["theta"])
                      for i, s in enumerate(systems)]
            net = FfNetwork(layers, embed, train.dim, skip=cfg["skip"],
                            include_layers=cfg["include_layers"])
            preds, _ = infer(net, test.x)
        else:
            systems = _build_layer_systems(cfg, train.dim)
            n_layers = len(systems)
            net = BpNetwork(systems, [tensors[f"w_t_{i}"] for i in range(n_layers)],
                            tensors["w_read"], tensors["b_read"],
                            skip=cfg["skip"])
            preds = net.predict(test.x)
        acc = float(np.mean(preds == test.labels))
        print(f"test accuracy: {acc:.4f} ({len(test)} samples, "
              f"checkpoint {meta.get('config_hash', '?')[:12]})")
        return 0
    except Exception as e:
        print(f"runtime abort: {e}", file=sys.stderr)
        return 2


def diagnose(config_path, out_dir=None) -> int:
    """Microwave stirring/linearity tables -> microwave_diag.csv."""
    try:
        cfg = load_config(config_path)
        if out_dir is not None:
            cfg["out_dir"] = str(out_dir)
        spec = cfg["layers"][0] if cfg["layers"] else None
        if not spec or spec["kind"] != "microwave":
            raise ConfigError("layers[0].kind: diagnose needs a microwave backend")
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 1
    try:
        sys_m = build_backend(spec)
        d = cfg["diagnose"]
        if d["n_configs"] < 10:
            warnings.warn(
                f"K-factor over {d['n_configs']} configs is statistically "
                "meaningless; use >= 100", stacklevel=1)
        k = k_factor(sys_m, n_configs=d["n_configs"], seed=cfg["seed"])
        zeta = linearity_metric(sys_m, n_train=d["n_train"],
                                n_test=d["n_test"], seed=cfg["seed"])
        out = Path(cfg["out_dir"])
        out.mkdir(parents=True, exist_ok=True)
        path = out / "microwave_diag.csv"
        with open(path, "w") as f:
            f.write("freq_index,k_factor,zeta_db\n")
            for i, (ki, zi) in enumerate(zip(k, zeta)):
                f.write(f"{i},{repr(float(ki))},{repr(float(zi))}\n")
        print(f"median zeta {np.median(zeta):.2f} dB, median K "
              f"{np.median(k):.4g}; table in {path}")
        return 0
    except Exception as e:
        print(f"runtime abort: {e}", file=sys.stderr)
        return 2


def gen_data(config_path, out_dir=None) -> int:
    """Materialize the configured synthetic task as CSV files."""
    try:
        cfg = load_config(config_path)
        if out_dir is not None:
            cfg["out_dir"] = str(out_dir)
        if cfg["task"]["name"] != "vowel":
            raise ConfigError("task.name: gen-data supports the vowel task")
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 1
    train, test = load_task(cfg)
    out = Path(cfg["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    save_dataset_csv(train, out / "train.csv")
    save_dataset_csv(test, out / "test.csv")
    print(f"wrote {out / 'train.csv'} ({len(train)} rows) and "
          f"{out / 'test.csv'} ({len(test)} rows)")
    return 0


def fit_surrogate_cmd(config_path, out_dir=None) -> int:
    """Fit a digital twin of layers[0] and store it as a checkpoint."""
    try:
        cfg = load_config(config_path)
        if out_dir is not None:
            cfg["out_dir"] = str(out_dir)
        if not cfg["layers"]:
            raise ConfigError("layers: need one backend to fit")
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 1
    try:
        sys_0 = build_backend(cfg["layers"][0])
        sur = cfg["surrogate"]
        rng = np.random.default_rng(cfg["seed"])
        x = rng.random((sur["n_pairs"], sys_0.input_dim))
        if isinstance(sys_0, MicrowaveSystem):
            x = (x >= 0.5).astype(np.float64)
        y = sys_0.forward(x)
        mlp, rep = fit_surrogate((x, y), sur["widths"], epochs=sur["epochs"],
                                 lr=sur["lr"], seed=cfg["seed"],
                                 val_frac=sur["val_frac"],
                                 batch_size=sur["batch_size"],
                                 layer_norm=sur["layer_norm"],
                                 dropout=sur["dropout"])
        out = Path(cfg["out_dir"])
        out.mkdir(parents=True, exist_ok=True)
        tensors = {}
        for i, (w, b) in enumerate(zip(mlp.weights, mlp.biases)):
            tensors[f"w_{i}"] = w
            tensors[f"b_{i}"] = b
        save_checkpoint(out / "surrogate.ckpt", tensors,
                        {"widths": sur["widths"], "final_mse": rep.final_mse,
                         "layer_norm": mlp.layer_norm,
                         "config_hash": config_hash(cfg)})
        print(f"held-out MSE {rep.final_mse:.3e}; saved {out / 'surrogate.ckpt'}")
        return 0
    except Exception as e:
        print(f"runtime abort: {e}", file=sys.stderr)
        return 2
