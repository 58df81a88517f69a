"""Command-line entry point: ``hipdg [--config FILE] [flags]``.

Exit codes: 0 success, 2 invalid configuration, 3 solver or coercivity failure.
"""
from __future__ import annotations

import argparse
import sys
from typing import Optional, Sequence

import yaml

from .errors import CoercivityError, NumericalFailure, SolverError
from .harness import (
    ConfigError,
    LevelFailure,
    RunConfig,
    ablation_csv,
    convergence_csv,
    format_report,
    run_alpha_sweep,
    run_convergence,
    run_kappa_ablation,
    sweep_csv,
)
from .mesh import generate

EXIT_OK, EXIT_CONFIG, EXIT_FAILURE = 0, 2, 3
MODES = ("convergence", "sweep", "ablation")

# config-file keys accepted besides the RunConfig field names
_KEY_ALIASES = {"lambda": "lam", "kappa-mode": "kappa_mode", "alpha0-sweep": "alpha0_sweep"}


def _levels(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(v) for v in str(text).split(",") if v.strip())
    except ValueError:
        raise ConfigError(f"levels must be comma-separated integers, got {text!r}") from None


def _sweep(text: str) -> tuple[float, float, float]:
    parts = str(text).split(":")
    if len(parts) != 3:
        raise ConfigError(f"alpha0 sweep must be MIN:MAX:STEP, got {text!r}")
    try:
        return tuple(float(p) for p in parts)  # type: ignore[return-value]
    except ValueError:
        raise ConfigError(f"alpha0 sweep must be numeric, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hipdg", description="H-IP discontinuous Galerkin experiments on the unit square.")
    p.add_argument("--config", help="key: value file (YAML); flags override its entries")
    p.add_argument("--mode", choices=MODES, help="study type (default: sweep if --alpha0-sweep is given, else convergence)")
    p.add_argument("--test", choices=("a", "b", "c"))
    p.add_argument("--scheme", choices=("sip", "nip", "iip"))
    p.add_argument("--k", type=int)
    p.add_argument("--delta", type=float)
    p.add_argument("--alpha0", type=float)
    p.add_argument("--alpha0-sweep", dest="alpha0_sweep", metavar="MIN:MAX:STEP")
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--kappa-mode", dest="kappa_mode", choices=("unit", "normal"))
    p.add_argument("--mesh", choices=("tri", "quad"))
    p.add_argument("--levels", metavar="N1,N2,...")
    p.add_argument("--tol", type=float)
    p.add_argument("--size-mode", dest="size_mode", choices=("size", "diameter"), help="h_E in the penalty")
    p.add_argument("--l2-rule", dest="l2_rule", choices=("exact", "gauss"), help="quadrature of the L2 error")
    p.add_argument("--workers", type=int)
    p.add_argument("--deterministic", action="store_true", default=None)
    p.add_argument("--out", metavar="PATH", help="CSV output path (default: stdout)")
    p.add_argument("--dump-mesh", dest="dump_mesh", metavar="PATH", help="write the finest mesh and exit")
    return p


def _read_config(path: str) -> dict:
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh) or {}
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("config file must be a mapping of key: value entries")
    return {_KEY_ALIASES.get(str(k), str(k).replace("-", "_")): v for k, v in data.items()}


def config_from_args(args: argparse.Namespace) -> tuple[RunConfig, str]:
    values = _read_config(args.config) if args.config else {}
    values.update({k: v for k, v in vars(args).items() if v is not None and k not in ("config", "dump_mesh")})
    mode = values.pop("mode", None)
    if "levels" in values and not isinstance(values["levels"], (list, tuple)):
        values["levels"] = _levels(values["levels"])
    if "alpha0_sweep" in values and isinstance(values["alpha0_sweep"], str):
        values["alpha0_sweep"] = _sweep(values["alpha0_sweep"])
    unknown = set(values) - set(RunConfig.__dataclass_fields__)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    try:
        cfg = RunConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    if mode is None:
        mode = "sweep" if cfg.alpha0_sweep is not None else "convergence"
    if mode not in MODES:
        raise ConfigError(f"mode must be one of {MODES}")
    return cfg, mode


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg, mode = config_from_args(args)
        if args.dump_mesh:
            with open(args.dump_mesh, "w") as fh:
                fh.write(generate(cfg.mesh, cfg.levels[-1]).dump())
            return EXIT_OK
        out = cfg.out
        cfg = cfg.replace(out=None)
        if mode == "convergence":
            report = run_convergence(cfg)
            text = convergence_csv(report, cfg)
            print(format_report(report), file=sys.stderr)
        elif mode == "sweep":
            result = run_alpha_sweep(cfg)
            text = sweep_csv(result)
            if all(e != e for e in result.errors):
                raise LevelFailure(result.n, SolverError("no alpha0 in the sweep gave a solvable system"))
            print(f"argmin alpha0 = {result.argmin:g} (L2 error {result.min_error:.3e})", file=sys.stderr)
        else:
            text = ablation_csv(run_kappa_ablation(cfg))
    except (ConfigError, ValueError) as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (LevelFailure, SolverError, CoercivityError, NumericalFailure) as exc:
        print(f"solve failed: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    if out:
        with open(out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
