"""Command-line interface.

Subcommands: gen-data, fit-surrogate, train, eval, perturb-recover, diagnose,
serve-backend. Exit codes: 0 ok, 1 config error, 2 runtime abort.
"""

import argparse
import sys

from . import runner
from .config import ConfigError, build_backend, load_config


def _add_common(p, out=True):
    p.add_argument("--config", required=True, help="path to a JSON config")
    p.add_argument("--seed", type=int, default=None,
                   help="override the config seed")
    if out:
        p.add_argument("--out", default=None, help="override the output directory")


def _apply_backend_override(cfg_path, address):
    """--backend remote:<host:port> swaps every simulator for the wire protocol."""
    cfg = load_config(cfg_path)
    if cfg.get("layers"):
        for spec in cfg["layers"]:
            spec.clear()
            spec.update({"kind": "remote", "address": address, "timeout": 30.0})
    return cfg


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="wavepnn",
        description="Train physical neural networks with forward passes only, "
                    "and benchmark against gradient baselines.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="run the configured training method")
    _add_common(p)
    p.add_argument("--backend", default=None, metavar="remote:HOST:PORT",
                   help="swap every layer backend for a remote endpoint")

    p = sub.add_parser("eval", help="evaluate a checkpoint on the test split")
    _add_common(p, out=False)
    p.add_argument("--checkpoint", required=True)

    p = sub.add_parser("perturb-recover",
                       help="perturbation-recovery experiment (both arms)")
    _add_common(p)

    p = sub.add_parser("diagnose", help="microwave K-factor and linearity tables")
    _add_common(p)

    p = sub.add_parser("gen-data", help="write the synthetic task to CSV")
    _add_common(p)

    p = sub.add_parser("fit-surrogate", help="fit a digital twin of layers[0]")
    _add_common(p)

    p = sub.add_parser("serve-backend",
                       help="serve layers[0] over the JSON-lines TCP protocol")
    p.add_argument("--config", required=True)
    p.add_argument("--address", default="127.0.0.1:7777", metavar="HOST:PORT")

    args = parser.parse_args(argv)

    if args.command == "train":
        if args.backend:
            if not args.backend.startswith("remote:"):
                print(f"config error: --backend must look like "
                      f"remote:HOST:PORT, got {args.backend!r}", file=sys.stderr)
                return 1
            try:
                cfg = _apply_backend_override(args.config, args.backend[len("remote:"):])
            except ConfigError as e:
                print(f"config error: {e}", file=sys.stderr)
                return 1
            import json
            import tempfile
            with tempfile.NamedTemporaryFile("w", suffix=".json", delete=False) as f:
                json.dump(cfg, f)
                path = f.name
            return runner.run(path, seed=args.seed, out_dir=args.out)
        return runner.run(args.config, seed=args.seed, out_dir=args.out)
    if args.command == "eval":
        return runner.evaluate(args.config, args.checkpoint, seed=args.seed)
    if args.command == "perturb-recover":
        return runner.run(args.config, seed=args.seed, out_dir=args.out)
    if args.command == "diagnose":
        return runner.diagnose(args.config, out_dir=args.out)
    if args.command == "gen-data":
        return runner.gen_data(args.config, out_dir=args.out)
    if args.command == "fit-surrogate":
        return runner.fit_surrogate_cmd(args.config, out_dir=args.out)
    if args.command == "serve-backend":
        try:
            cfg = load_config(args.config)
            if not cfg.get("layers"):
                raise ConfigError("layers: need one backend spec to serve")
            backend = build_backend(cfg["layers"][0])
        except ConfigError as e:
            print(f"config error: {e}", file=sys.stderr)
            return 1
        host, _, port = args.address.rpartition(":")
        from ..backends import serve_backend
        print(f"serving {type(backend).__name__} "
              f"({backend.input_dim} -> {backend.output_dim}) on {args.address}")
        serve_backend(backend, (host or "127.0.0.1", int(port)))
        return 0
    return 1


if __name__ == "__main__":
    sys.exit(main())
