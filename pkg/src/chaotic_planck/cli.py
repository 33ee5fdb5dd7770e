"""``chaotic-planck`` command line.

Exit codes: 0 success, 1 invalid input (nothing written), 2 numerical failure
(nothing written) or, with ``--strict``, a failed criterion (report written).
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from importlib import resources

from . import experiments
from .config import RunConfig, parse_override
from .errors import ConfigError, NumericalError, ValidationError

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 1, 2

_COMMON_NUMERIC = (("omega", float), ("sigma", float), ("mu", float),
                   ("tau_lambda", float), ("t_final", float))
NUMERIC_FLAGS = {
    "decay": _COMMON_NUMERIC,
    "lindblad": _COMMON_NUMERIC + (("dt_int", float), ("levels", int)),
    "montecarlo": _COMMON_NUMERIC + (("n_samples", int), ("chunk_size", int), ("levels", int),
                                     ("ar1", float)),
    "crossval": _COMMON_NUMERIC + (("n_samples", int), ("dt_int", float), ("chunk_size", int),
                                   ("levels", int), ("control_sigma", float)),
    "measure": (("n_trials", int), ("n_seeds", int), ("t_measure", float),
                ("meas_coupling", float), ("pointer_width", float)),
    "ehrenfest": (("grid_points", int), ("grid_length", float), ("q0", float),
                  ("steps_per_period", int), ("periods", float), ("mass", float)),
    "nosignal": _COMMON_NUMERIC + (("dt_int", float), ("coupling_control", float)),
    "sweep": (("omega", float), ("sigma", float), ("tau_lambda", float), ("n_samples", int),
              ("sweep_max_steps", int)),
}
HEADLINE = {
    "decay": ("gaussian_factor", "quadrature_abs", "rate"),
    "sweep": ("slope", "expected_slope"),
    "nosignal": ("spread_product", "spread_entangled", "spread_interacting"),
    "ehrenfest": ("ehrenfest_rel", "continuity_normalized"),
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="chaotic-planck",
                     description="Intrinsic-decoherence simulator and verification harness.")
    parser.add_argument("--log-level", default="WARNING")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, flags in NUMERIC_FLAGS.items():
        doc = (experiments.EXPERIMENTS[name].__doc__ or "").strip().splitlines()
        p = sub.add_parser(name, help=doc[0] if doc else None)
        p.add_argument("--config", help="flat JSON config (path or built-in name)")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help="run directory (default runs/<command>)")
        p.add_argument("--strict", action="store_true", help="exit 2 if any criterion fails")
        p.add_argument("--workers", type=int, help="default: $CHAOTIC_PLANCK_WORKERS or config")
        for key, typ in flags:
            p.add_argument("--" + key.replace("_", "-"), dest=key, type=typ, default=None)
        if name == "sweep":
            p.add_argument("--axis", dest="sweep_axis", choices=("sigma", "tau_lambda", "omega"))
            p.add_argument("--route", dest="sweep_route",
                           choices=("montecarlo", "closed_form", "lindblad"))
            p.add_argument("--values", dest="sweep_values", type=_float_list)
        p.add_argument("overrides", nargs="*", metavar="key=value")
    return parser


def _float_list(text: str) -> list:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}") from exc


def resolve_config_path(name: str) -> str:
    if os.path.exists(name):
        return name
    builtin = resources.files("chaotic_planck") / "configs" / os.path.basename(name)
    for candidate in (builtin, builtin.with_suffix(".json") if not name.endswith(".json") else None):
        if candidate is not None and candidate.is_file():
            return str(candidate)
    raise ConfigError(f"config {name!r} not found")


def load_config(args) -> RunConfig:
    cfg = RunConfig.load(resolve_config_path(args.config)) if args.config else RunConfig()
    updates = {}
    for key, typ in NUMERIC_FLAGS[args.command]:
        val = getattr(args, key, None)
        if val is not None:
            updates[key] = val
    for key in ("sweep_axis", "sweep_route", "sweep_values"):
        val = getattr(args, key, None)
        if val is not None:
            updates[key] = val
    for text in args.overrides:
        k, v = parse_override(text)
        updates[k] = v
    if args.seed is not None:
        updates["seed"] = args.seed
    workers = args.workers
    if workers is None and os.environ.get("CHAOTIC_PLANCK_WORKERS"):
        try:
            workers = int(os.environ["CHAOTIC_PLANCK_WORKERS"])
        except ValueError as exc:
            raise ConfigError("CHAOTIC_PLANCK_WORKERS must be an integer") from exc
    if workers is not None:
        updates["workers"] = workers
    return cfg.with_overrides(updates) if updates else cfg


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_INVALID
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING))
    try:
        cfg = load_config(args)
        if args.command in experiments.STOCHASTIC and cfg.seed is None:
            raise ConfigError(f"'{args.command}' is stochastic: pass --seed N (or seed in the config)")
        report = experiments.EXPERIMENTS[args.command](cfg)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except NumericalError as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    out = args.out or os.path.join("runs", args.command)
    try:
        path = experiments.persist(report, cfg, out)
    except OSError as exc:
        print(f"error: cannot write {out!r}: {exc}", file=sys.stderr)
        return EXIT_INVALID
    for key in HEADLINE.get(args.command, ()):
        print(f"{key} = {report.metrics[key]!r}")
    for line in report.lines():
        print(line)
    print(f"report: {os.path.join(path, 'report.json')}")
    if args.strict and not report.passed:
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
