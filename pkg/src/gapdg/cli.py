"""Command-line driver: ``gapdg run`` for studies, ``gapdg geometry`` for domain files."""
from __future__ import annotations

import argparse
import sys

from .cases import CASE_IDS, build_case
from .geometry import write_geometry
from .study import RunConfig, run_study


def _levels(text: str) -> tuple:
    try:
        a, b = text.split(":")
        return int(a), int(b)
    except ValueError:
        raise ValueError(f"levels must look like A:B, got {text!r}") from None


def _schedule(text: str) -> list:
    tokens = [t.strip() for t in text.split(",") if t.strip()]
    if not tokens:
        raise ValueError("empty dg schedule")
    return tokens


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


# config-file key -> (RunConfig field, parser)
KEYS = {
    "case": ("case", str),
    "gamma": ("gamma", float),
    "lambda": ("lam", float),
    "dg-schedule": ("dg_schedule", _schedule),
    "levels": ("levels", _levels),
    "degree": ("degree", int),
    "penalty": ("penalty", float),
    "solver": ("solver", str),
    "tol": ("tol", float),
    "quad": ("quad", int),
    "out": ("out", str),
    "dump-matrix": ("dump_matrix", _bool),
    "geometry": ("geometry", str),
    "rho-g": ("rho_g", float),
}


class UsageError(ValueError):
    pass


def read_config_file(path) -> dict:
    """Parse flat ``key = value`` lines (``#`` starts a comment)."""
    values = {}
    try:
        lines = open(path).read().splitlines()
    except OSError as exc:
        raise UsageError(f"cannot read config file: {exc}") from None
    for num, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{num}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("_", "-")
        if key not in KEYS:
            raise UsageError(f"{path}:{num}: unknown key {key!r}")
        name, conv = KEYS[key]
        try:
            values[name] = conv(value)
        except ValueError as exc:
            raise UsageError(f"{path}:{num}: bad value for {key}: {exc}") from None
    return values


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gapdg", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run a refinement study and write reports")
    r.add_argument("--config", help="flat key = value file; command-line flags override it")
    r.add_argument("--case", choices=CASE_IDS, help="built-in problem (default ex1)")
    r.add_argument("--gamma", type=float, help="singularity exponent, required for ex3")
    g = r.add_mutually_exclusive_group()
    g.add_argument("--lambda", dest="lam", type=float, help="gap exponent, dg = h^lambda (default 1)")
    g.add_argument("--dg-schedule", type=_schedule,
                   help="comma-separated gap per level: numbers or h^p tokens")
    r.add_argument("--levels", type=_levels, help="refinement levels A:B (default 2:4)")
    r.add_argument("--degree", type=int, help="spline degree k (default 2)")
    r.add_argument("--penalty", type=float, help="penalty scale mu (default 2(k+1)^2)")
    r.add_argument("--solver", choices=("lu", "gmres"), help="linear solver (default lu)")
    r.add_argument("--tol", type=float, help="relative residual tolerance (default 1e-10)")
    r.add_argument("--quad", type=int, help="Gauss points per direction for assembly (default k+2)")
    r.add_argument("--out", help="output directory (default gapdg-out)")
    r.add_argument("--dump-matrix", action="store_true", default=None,
                   help="write the finest system matrix as system.mtx")
    r.add_argument("--geometry", help="geometry file replacing the built-in domain")
    r.add_argument("--rho-g", type=float, help="gap coefficient (default rho of the right patch)")
    r.add_argument("--quiet", action="store_true", help="suppress the per-level progress lines")

    w = sub.add_parser("geometry", help="write a built-in domain to a geometry file")
    w.add_argument("--case", choices=CASE_IDS, default="ex1")
    w.add_argument("--dg", type=float, required=True, help="gap distance")
    w.add_argument("--out", required=True, help="output file")
    return p


def config_from_args(args) -> RunConfig:
    values = read_config_file(args.config) if args.config else {}
    for key, (name, _) in KEYS.items():
        v = getattr(args, name, None)
        if v is not None:
            values[name] = v
    if args.lam is not None:
        values.pop("dg_schedule", None)
    if args.dg_schedule is not None:
        values.pop("lam", None)
    values.setdefault("out", "gapdg-out")
    try:
        return RunConfig(**values)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _run(args) -> int:
    cfg = config_from_args(args)
    result = run_study(cfg)
    if not args.quiet:
        for row, t in zip(result.table.rows, result.timings):
            rate = "" if row.rate != row.rate else f"  rate {row.rate:.3f}"
            print(f"level {row.level}  h {row.h:.6g}  dg {row.dg:.6g}  dG error {row.dg_error:.6e}"
                  f"{rate}  ({t:.1f}s)")
        print(f"reports written to {cfg.out}")
    return 0


def _geometry(args) -> int:
    inst = build_case(args.case, 0, dg=args.dg, gamma=1.0 if args.case == "ex3" else None)
    write_geometry(args.out, inst.domain)
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _run(args) if args.command == "run" else _geometry(args)
    except UsageError as exc:
        print(f"gapdg: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # report assembly/solve failures as a diagnostic
        print(f"gapdg: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
