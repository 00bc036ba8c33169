"""Command-line front end.

Three subcommands mirror the lab entry points: ``run`` relaxes a scenario
over an increasing R schedule, ``blowdown`` fits the normalized shift
family of a saved state against a pure exponential mode, and ``lmin``
sweeps the circle minimization over a lambda list.

Every option can also come from a flat JSON config file (``--config``).
Merge order is fixed: an explicit flag beats the config file, the config
file beats the built-in default.  List-valued options (``--R``,
``--shifts``, ``--lambda``) take one argument holding comma or space
separated decimal numbers; in a config file they are plain JSON arrays.

Exit codes: 0 when every verdict passed (or the schedule was empty),
1 when at least one verdict failed, 2 for configuration and usage errors
raised before any state was touched.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import lab
from .lab import SegflowConfigError


def _parse_float_list(text) -> list:
    if isinstance(text, (list, tuple)):
        return [float(x) for x in text]
    toks = str(text).replace(",", " ").split()
    try:
        return [float(t) for t in toks]
    except ValueError as exc:
        raise SegflowConfigError(f"bad number in list {text!r}: {exc}") from exc


def _load_config(path: str) -> dict:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise SegflowConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise SegflowConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise SegflowConfigError(f"config {path} must be a flat JSON object")
    # config keys use the flag spelling; hyphens and underscores both work
    return {str(k).replace("-", "_"): v for k, v in raw.items()}


# argparse cannot use "lambda" as a destination, so that one flag stores
# under a different attribute name than its config key
_FLAG_SPELLING = {"lam": "lambda"}


def _merge(args: argparse.Namespace, keys: dict) -> dict:
    """Resolve every option through flag > config > default.

    ``keys`` maps option name to its default; a default of ``_REQUIRED``
    marks options that must come from somewhere.
    """
    cfg = _load_config(args.config) if args.config else {}
    for dest, spelled in _FLAG_SPELLING.items():
        if spelled in cfg and dest in keys:
            cfg[dest] = cfg.pop(spelled)
    unknown = set(cfg) - set(keys)
    if unknown:
        raise SegflowConfigError(
            "unknown config keys: " + ", ".join(sorted(unknown))
        )
    out = {}
    for name, default in keys.items():
        flag_val = getattr(args, name)
        if flag_val is not None:
            out[name] = flag_val
        elif name in cfg:
            out[name] = cfg[name]
        elif default is _REQUIRED:
            spelled = _FLAG_SPELLING.get(name, name).replace("_", "-")
            raise SegflowConfigError(f"option --{spelled} is required")
        else:
            out[name] = default
    return out


class _Required:
    def __repr__(self):  # keeps SegflowConfigError messages readable
        return "<required>"


_REQUIRED = _Required()


def _print_verdicts(verdicts) -> None:
    for v in verdicts:
        print(v.line())


def _cmd_run(args: argparse.Namespace) -> int:
    opts = _merge(args, {
        "scenario": _REQUIRED,
        "k": 2,
        "R": _REQUIRED,
        "density_x": 64.0,
        "ny": 128,
        "dt": 0.05,
        "tol": None,
        "beta": 1.0,
        "out": _REQUIRED,
        "resume": None,
        "plots": False,
        "max_steps": 200000,
    })
    spec = lab.ExperimentSpec(
        scenario=str(opts["scenario"]),
        k=int(opts["k"]),
        r_schedule=tuple(_parse_float_list(opts["R"])),
        density_x=float(opts["density_x"]),
        ny=int(opts["ny"]),
        dt=float(opts["dt"]),
        tol=None if opts["tol"] is None else float(opts["tol"]),
        beta=float(opts["beta"]),
        out_dir=str(opts["out"]),
        resume=opts["resume"],
        plots=bool(opts["plots"]),
        max_steps=int(opts["max_steps"]),
    )
    manifest = lab.run_experiment(spec)
    _print_verdicts(manifest.verdicts)
    return lab.exit_code(manifest)


def _cmd_blowdown(args: argparse.Namespace) -> int:
    opts = _merge(args, {
        "state": _REQUIRED,
        "shifts": _REQUIRED,
        "out": _REQUIRED,
        "beta": 1.0,
    })
    report = lab.run_blowdown_dir(
        str(opts["state"]),
        _parse_float_list(opts["shifts"]),
        str(opts["out"]),
        beta=float(opts["beta"]),
    )
    _print_verdicts(report.verdicts)
    return 0 if report.all_passed() else 1


def _cmd_lmin(args: argparse.Namespace) -> int:
    opts = _merge(args, {
        "k": _REQUIRED,
        "lam": _REQUIRED,
        "nodes": _REQUIRED,
        "out": ".",
        "restarts": 5,
    })
    manifest = lab.run_lmin(
        int(opts["k"]),
        _parse_float_list(opts["lam"]),
        int(opts["nodes"]),
        str(opts["out"]),
        restarts=int(opts["restarts"]),
    )
    _print_verdicts(manifest.verdicts)
    return lab.exit_code(manifest)


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="segflow",
        description="segregation flow experiments on half-infinite cylinders",
    )
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="relax one scenario over an R schedule")
    run.add_argument("--scenario", choices=("cosh", "exp", "kcomp"))
    run.add_argument("--k", type=int)
    run.add_argument("--R", help="schedule, e.g. 3,4,5 (may be empty)")
    run.add_argument("--density-x", dest="density_x", type=float,
                     help="columns per unit length in x")
    run.add_argument("--ny", type=int)
    run.add_argument("--dt", type=float)
    run.add_argument("--tol", type=float,
                     help="stopping tolerance (default scales with amplitude)")
    run.add_argument("--beta", type=float)
    run.add_argument("--out", help="output directory, must be fresh")
    run.add_argument("--resume", help="directory of a previous run to restart from")
    run.add_argument("--plots", action="store_true", default=None)
    run.add_argument("--max-steps", dest="max_steps", type=int)
    run.add_argument("--config", help="flat JSON file with the same keys")
    run.set_defaults(func=_cmd_run)

    bd = sub.add_parser("blowdown", help="shift-family fit of a saved state")
    bd.add_argument("--state", help="directory holding one .fld snapshot pair")
    bd.add_argument("--shifts", help="increasing shifts, e.g. 2.5,3.5,4.5")
    bd.add_argument("--out")
    bd.add_argument("--beta", type=float)
    bd.add_argument("--config", help="flat JSON file with the same keys")
    bd.set_defaults(func=_cmd_blowdown)

    lm = sub.add_parser("lmin", help="sweep the circle minimization over lambda")
    lm.add_argument("--k", type=int)
    lm.add_argument("--lambda", dest="lam", help="lambda list, e.g. 10,100,1000")
    lm.add_argument("--nodes", type=int, help="angular grid size")
    lm.add_argument("--out")
    lm.add_argument("--restarts", type=int)
    lm.add_argument("--config", help="flat JSON file with the same keys")
    lm.set_defaults(func=_cmd_lmin)
    return p


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SegflowConfigError as exc:
        print(f"segflow: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
