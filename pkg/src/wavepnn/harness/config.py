"""Experiment configuration: strict JSON with no silently-defaulted physics.

Unknown keys are rejected with their path, every default is folded into the
resolved dict (so the emitted report is self-describing), and the SHA-256 of
the canonical resolved form identifies the run.
"""

import hashlib
import json

import numpy as np

from ..backends import AcousticSystem, MicrowaveSystem, OpticsSystem, RemoteSystem
from .checkpoint import load_checkpoint


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field."""


METHODS = ("mfff", "ideal-bp", "in-silico", "pa-bp", "perturb-recover")
TASKS = ("vowel", "mnist", "csv")

_TASK_DEFAULTS = {
    "vowel": {"n_classes": 6, "dim": 40, "n_train": 2000, "n_test": 500,
              "noise_sigma": 0.3, "seed": 0},
    "mnist": {"images": None, "labels": None, "test_images": None,
              "test_labels": None, "crop": 1, "n_train": None, "n_test": None},
    "csv": {"train": None, "test": None},
}

_BACKEND_DEFAULTS = {
    "optics": {"dim": None, "seed": 0, "phase_gain": float(np.pi)},
    "acoustic": {"input_dim": None, "output_dim": None, "n_channels": None,
                 "seed": 0, "w_scale": None},
    "microwave": {"d_in": 40, "n_elements": 64, "n_freqs": 20, "eta": 0.85,
                  "seed": 0, "dense_mix": 0.25, "relaxed": False},
    "remote": {"address": None, "timeout": 30.0},
    "file": {"path": None},
}

_TOP_DEFAULTS = {
    "method": None,
    "task": None,
    "layers": None,
    "skip": False,
    "out_widths": None,
    "embed": {"slot_offset": 0, "slot_value": 1.0, "mode": "overwrite"},
    "theta": 1.0,
    "lr": 1e-3,
    "n_exter": 20,
    "n_inter": 20,
    "epochs": 30,
    "batch_size": None,
    "seed": 0,
    "eval_every": 1,
    "eval_subsample": None,
    "include_layers": None,
    "mismatch_sigma": 0.025,
    "backward_model": "exact",
    "perturbation": {"mu": 0.0, "sigma": 0.0},
    "recover": {"depth": 6, "sigma_scales": [0.5], "epochs_pre": 80,
                "epochs_post": 20, "seeds": [0, 1, 2], "inner_gain_mult": 2.0},
    "diagnose": {"n_configs": 400, "n_train": 600, "n_test": 300},
    "surrogate": {"widths": [100, 200, 100], "epochs": 60, "lr": 1e-3,
                  "n_pairs": 10000, "val_frac": 0.1, "batch_size": 128,
                  "layer_norm": False, "dropout": 0.0},
    "out_dir": "runs",
}


def _merge(defaults, given, path):
    if not isinstance(given, dict):
        raise ConfigError(f"{path or 'config'}: expected an object")
    unknown = set(given) - set(defaults)
    if unknown:
        raise ConfigError(f"{path or 'config'}: unknown key(s) {sorted(unknown)}")
    out = {}
    for key, dval in defaults.items():
        if key in given and isinstance(dval, dict) and given[key] is not None:
            out[key] = _merge(dval, given[key], f"{path}.{key}" if path else key)
        elif key in given:
            out[key] = given[key]
        else:
            out[key] = dval
    return out


def resolve_config(raw: dict) -> dict:
    """Validate a raw config dict and fold in all defaults."""
    cfg = _merge(_TOP_DEFAULTS, raw, "")
    if cfg["method"] not in METHODS:
        raise ConfigError(f"method: must be one of {METHODS}, got {cfg['method']!r}")
    task = cfg["task"]
    if not isinstance(task, dict) or task.get("name") not in TASKS:
        raise ConfigError(f"task.name: must be one of {TASKS}")
    name = task["name"]
    body = {k: v for k, v in task.items() if k != "name"}
    cfg["task"] = {"name": name, **_merge(_TASK_DEFAULTS[name], body, "task")}
    if cfg["method"] != "perturb-recover":
        layers = cfg["layers"]
        if not isinstance(layers, list) or len(layers) == 0:
            raise ConfigError("layers: need a non-empty list of backend specs")
        resolved_layers = []
        for i, spec in enumerate(layers):
            if not isinstance(spec, dict) or "kind" not in spec:
                raise ConfigError(f"layers[{i}]: needs a 'kind'")
            kind = spec["kind"]
            if kind not in _BACKEND_DEFAULTS:
                raise ConfigError(
                    f"layers[{i}].kind: unknown backend {kind!r}")
            body = {k: v for k, v in spec.items() if k != "kind"}
            merged = _merge(_BACKEND_DEFAULTS[kind], body, f"layers[{i}]")
            resolved_layers.append({"kind": kind, **merged})
        cfg["layers"] = resolved_layers
    else:
        if cfg["recover"]["depth"] < 2:
            raise ConfigError("recover.depth: must be >= 2")
    for field in ("theta", "lr"):
        if not cfg[field] > 0:
            raise ConfigError(f"{field}: must be > 0")
    for field in ("n_exter", "epochs"):
        if cfg[field] < 0:
            raise ConfigError(f"{field}: must be >= 0")
    if cfg["n_inter"] < 1:
        raise ConfigError("n_inter: must be >= 1")
    return cfg


def load_config(path) -> dict:
    try:
        with open(path) as f:
            raw = json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: line {e.lineno}: {e.msg}") from e
    return resolve_config(raw)


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(
        json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()).hexdigest()


def build_backend(spec: dict, expected_input=None):
    """Instantiate one layer backend from its resolved spec."""
    kind = spec["kind"]
    if kind == "optics":
        dim = spec["dim"] or expected_input
        if dim is None:
            raise ConfigError("optics backend needs 'dim'")
        return OpticsSystem.random(dim, seed=spec["seed"],
                                   phase_gain=spec["phase_gain"])
    if kind == "acoustic":
        input_dim = spec["input_dim"] or expected_input
        if input_dim is None:
            raise ConfigError("acoustic backend needs 'input_dim'")
        return AcousticSystem.random(
            input_dim, output_dim=spec["output_dim"],
            n_channels=spec["n_channels"], seed=spec["seed"],
            w_scale=spec["w_scale"])
    if kind == "microwave":
        return MicrowaveSystem.random(
            d_in=spec["d_in"], n_elements=spec["n_elements"],
            n_freqs=spec["n_freqs"], eta=spec["eta"], seed=spec["seed"],
            dense_mix=spec["dense_mix"], relaxed=spec["relaxed"])
    if kind == "remote":
        if not spec["address"]:
            raise ConfigError("remote backend needs 'address'")
        return RemoteSystem(spec["address"], timeout=spec["timeout"])
    if kind == "file":
        if not spec["path"]:
            raise ConfigError("file backend needs 'path'")
        return load_system(spec["path"])
    raise ConfigError(f"unknown backend kind {kind!r}")


def save_system(sys, path, extra_meta=None):
    """Persist a simulator's parameter tensors in the checkpoint container."""
    from .checkpoint import save_checkpoint
    meta = dict(extra_meta or {})
    if isinstance(sys, OpticsSystem):
        meta["system"] = {"kind": "optics", "phase_gain": sys.phase_gain}
        save_checkpoint(path, {"t_matrix": sys.t_matrix}, meta)
    elif isinstance(sys, AcousticSystem):
        meta["system"] = {"kind": "acoustic"}
        save_checkpoint(path, {"w_in": sys.w_in, "w_out": sys.w_out,
                               "gain": sys.gain, "alpha": sys.alpha}, meta)
    elif isinstance(sys, MicrowaveSystem):
        meta["system"] = {"kind": "microwave", "eta": sys.eta,
                          "phase_on": sys.phase_on, "relaxed": sys.relaxed}
        save_checkpoint(path, {"coupling": sys.coupling, "u_out": sys.u_out,
                               "v_in": sys.v_in,
                               "pixel_map": sys.pixel_map.astype(np.float64)},
                        meta)
    else:
        raise TypeError(f"cannot serialize {type(sys).__name__}")


def load_system(path):
    tensors, meta = load_checkpoint(path)
    info = meta.get("system", {})
    kind = info.get("kind")
    if kind == "optics":
        return OpticsSystem(tensors["t_matrix"], phase_gain=info["phase_gain"])
    if kind == "acoustic":
        return AcousticSystem(tensors["w_in"], tensors["w_out"],
                              tensors["gain"], tensors["alpha"])
    if kind == "microwave":
        return MicrowaveSystem(tensors["coupling"], tensors["u_out"],
                               tensors["v_in"],
                               tensors["pixel_map"].astype(np.int64),
                               eta=info["eta"], phase_on=info["phase_on"],
                               relaxed=info["relaxed"])
    raise ConfigError(f"{path}: not a system file (kind={kind!r})")
