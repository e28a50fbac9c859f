"""Command-line front end.

    etvgate <command> [--config run.json] [flags]

Commands: infer, infer-cv, infer-hetv, oracle, simulate, coverage.  Flags
override fields of the JSON config; ``ETV_SEED`` overrides the config seed
(an explicit ``--seed`` wins over both).  The JSON report goes to
``--output`` or stdout.  Exit status: 0 ok, 1 data/IO failure, 2 usage error.
"""
from __future__ import annotations

import argparse
import json
import os
import sys

from .errors import EtvError
from .experiments import COMMANDS, ConfigError, RunConfig, execute


def _support(text):
    return "inf" if text in ("inf", "infinite") else int(text)


def _c_value(text):
    return "cv" if text == "cv" else float(text)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="etvgate", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON run configuration")
        p.add_argument("--data", help="dataset CSV (columns y, x, z_1..z_d)")
        p.add_argument("--joint", help="joint table CSV (columns x, y, z, mass)")
        p.add_argument("--preset", help="probit-p4 | probit-p10 | interaction-p10 | conjoint-ideal")
        p.add_argument("--q", type=float, help="conjoint-ideal: share of independent respondents")
        p.add_argument("--p", type=float, help="conjoint-ideal: co-partisan preference")
        p.add_argument("--n", type=int)
        p.add_argument("--feature", type=int, help="0-based feature index for probit presets")
        p.add_argument("--classifier", help="classifier type, or a JSON object")
        p.add_argument("--c", type=_c_value, help="threshold half-width, or 'cv'")
        p.add_argument("--j", dest="J", type=int, help="resamples per row")
        p.add_argument("--folds", dest="k_folds", type=int)
        p.add_argument("--inner-folds", dest="m_inner_folds", type=int)
        p.add_argument("--alpha", type=float)
        p.add_argument("--support-size", dest="support_size", type=_support)
        p.add_argument("--weights", type=lambda s: [float(v) for v in s.split(",")])
        p.add_argument("--seed", type=int)
        p.add_argument("--replications", type=int)
        p.add_argument("--workers", type=int)
        p.add_argument("--output", "-o")
    return parser


def resolve_config(args: argparse.Namespace, environ=os.environ) -> RunConfig:
    raw: dict = {}
    if args.config:
        with open(args.config) as fh:
            raw = json.load(fh)
        if not isinstance(raw, dict):
            raise ConfigError("config file must hold a JSON object")
    raw["command"] = args.command
    if "ETV_SEED" in environ:
        try:
            raw["seed"] = int(environ["ETV_SEED"])
        except ValueError:
            raise ConfigError("ETV_SEED must be an integer") from None
    for name in ("data", "joint", "preset", "n", "feature", "J", "k_folds", "m_inner_folds", "alpha",
                 "support_size", "weights", "seed", "replications", "workers", "output"):
        value = getattr(args, name)
        if value is not None:
            raw[name] = value
    params = dict(raw.get("preset_params", {}))
    for name in ("q", "p"):
        if getattr(args, name) is not None:
            params[name] = getattr(args, name)
    if params:
        raw["preset_params"] = params
    if args.classifier is not None:
        text = args.classifier.strip()
        raw["classifier"] = json.loads(text) if text.startswith("{") else {"type": text}
    if args.c is not None:
        spec = dict(raw.get("classifier", {"type": "threshold"}))
        spec["c"] = args.c
        raw["classifier"] = spec
    return RunConfig.from_dict(raw)


def _emit(obj: dict, path) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _error(kind: str, exc: Exception) -> dict:
    return {"error": {"type": kind, "exception": type(exc).__name__, "message": str(exc)}}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = resolve_config(args)
        cfg.validate()
    except (ConfigError, TypeError, ValueError, json.JSONDecodeError) as exc:
        _emit(_error("usage", exc), None)
        return 2
    except OSError as exc:
        _emit(_error("io", exc), None)
        return 1
    try:
        report = execute(cfg)
    except ConfigError as exc:
        _emit(_error("usage", exc), None)
        return 2
    except (EtvError, OSError, KeyError, ValueError) as exc:
        _emit(_error("data", exc), None)
        return 1
    _emit(report, cfg.output)
    return 0


if __name__ == "__main__":
    sys.exit(main())
