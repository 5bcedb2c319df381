"""Command-line entry point: ``holotweezers <pipeline> [--config PATH] ...``.

Exit status 0 on success, 1 when a pipeline fails, 2 for config errors.
Errors are printed to stderr as one JSON object.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import PIPELINES, PROFILES, apply_profile, build_config, read_config, validate_file
from .errors import ConfigError

EXIT_OK, EXIT_PIPELINE, EXIT_CONFIG = 0, 1, 2


def _parser():
    ap = argparse.ArgumentParser(prog="holotweezers", description="Dynamic tweezer holograms and atom transport.")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in PIPELINES:
        sp = sub.add_parser(name, help=f"run the {name} pipeline")
        sp.add_argument("--config", type=Path, help="TOML or JSON run config")
        sp.add_argument("--seed", type=int, help="override the config seed")
        sp.add_argument("--out", type=Path, help="override output_dir")
        sp.add_argument("--profile", choices=PROFILES, help="smoke caps trial counts and grid sizes")
        sp.add_argument("--threads", type=int, help="worker threads (outputs do not depend on it)")
    sp = sub.add_parser("validate", help="check a config file against the schema")
    sp.add_argument("config", type=Path)
    return ap


def _error(kind, message, **extra):
    print(json.dumps({"error": kind, "message": message, **extra}, sort_keys=True), file=sys.stderr)


def _load(args):
    overrides = {"pipeline": args.command, "seed": args.seed}
    if args.config is not None:
        return read_config(args.config, overrides)
    data = {k: v for k, v in overrides.items() if v is not None}
    return build_config(data, None, "json")


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    if args.command == "validate":
        try:
            rep = validate_file(args.config)
        except OSError as exc:
            _error("io", str(exc))
            return EXIT_PIPELINE
        print(json.dumps(rep, sort_keys=True))
        return EXIT_OK if rep["status"] == "ok" else EXIT_CONFIG

    try:
        cfg = apply_profile(_load(args), args.profile)
    except ConfigError as exc:
        _error("config", str(exc), issues=exc.issues)
        return EXIT_CONFIG
    except OSError as exc:
        _error("config", f"cannot read config: {exc}")
        return EXIT_CONFIG

    from .runner import run  # deferred: pulls in numba

    base = args.config.parent if args.config is not None else None
    try:
        report = run(cfg, args.out, args.threads, base)
    except Exception as exc:  # any pipeline failure maps to exit 1
        _error("pipeline", f"{type(exc).__name__}: {exc}", pipeline=cfg.pipeline)
        return EXIT_PIPELINE
    out = Path(args.out if args.out is not None else cfg.output_dir)
    print(json.dumps({"status": "ok", "pipeline": cfg.pipeline, "report": str(out / "report.json"),
                      "wall_time_s": round(report.wall_time, 3)}, sort_keys=True))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
