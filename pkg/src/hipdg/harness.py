"""Refinement studies, penalty sweeps and kappa-mode ablations with CSV output."""
from __future__ import annotations

import csv
import dataclasses
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .assembly import SIZE_MODES, KAPPA_MODES, PenaltyConfig, Scheme, solve_hip
from .basis import MAX_DEGREE
from .errors import CoercivityError, NumericalFailure, SolverError
from .mesh import generate, normalize_kind
from .verify import (
    L2_RULES,
    ConvergenceReport,
    Level,
    enriched_error,
    energy_error,
    expected_rates,
    l2_error,
    l2_quad_degree,
    make_problem,
    min_sample_value,
)

TESTS = ("a", "b", "c")
MAX_SWEEP_POINTS = 10_000
FLOAT_FMT = "%.5e"  # six significant digits

# per-test defaults; alpha0 = 4 makes alpha0 * C_tr^2 = 2 (k + 1)(k + 2)
_DEFAULTS = {
    "a": dict(alpha0=4.0, lam=1.0, mesh="tri", levels=(16, 32, 64, 128)),
    "b": dict(alpha0=4.0, lam=1e-3, mesh="tri", levels=(32,)),
    "c": dict(alpha0=2.0, lam=1.0, mesh="quad", levels=(8, 16, 32, 64)),
}


class ConfigError(ValueError):
    """A run configuration violates a precondition; nothing was solved."""


class LevelFailure(RuntimeError):
    """A solve failed inside a study; ``n`` is the offending level."""

    def __init__(self, n: int, cause: Exception):
        self.n = n
        self.cause = cause
        super().__init__(f"level n={n}: {cause}")


@dataclass(frozen=True)
class RunConfig:
    """One experiment.  ``None`` fields take the per-test defaults.

    ``size_mode`` picks h_E in the penalty ("size" = 1/n, "diameter" = diam E);
    ``l2_rule`` picks the quadrature of the L2 error (see ``verify.L2_RULES``).
    """

    test: str = "a"
    scheme: str = "sip"
    k: int = 2
    delta: float = 0.0
    alpha0: Optional[float] = None
    alpha0_sweep: Optional[tuple[float, float, float]] = None
    lam: Optional[float] = None
    kappa_mode: str = "normal"
    mesh: Optional[str] = None
    levels: Optional[tuple[int, ...]] = None
    tol: float = 1e-12
    size_mode: str = "size"
    l2_rule: str = "exact"
    deterministic: bool = False
    workers: int = 1
    out: Optional[str] = None

    def __post_init__(self):
        test = str(self.test).lower().removeprefix("test")
        if test not in TESTS:
            raise ConfigError(f"test must be one of {TESTS}, got {self.test!r}")
        set_ = lambda name, value: object.__setattr__(self, name, value)  # noqa: E731
        set_("test", test)
        for name, value in _DEFAULTS[test].items():
            if getattr(self, name) is None:
                set_(name, value)
        try:
            set_("scheme", Scheme.parse(self.scheme).name.lower())
            set_("mesh", normalize_kind(self.mesh))
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        set_("levels", tuple(self.levels))
        if int(self.k) != self.k or not 1 <= self.k <= MAX_DEGREE:
            raise ConfigError(f"k must be an integer in 1..{MAX_DEGREE}, got {self.k!r}")
        set_("k", int(self.k))
        if not math.isfinite(self.delta):
            raise ConfigError("delta must be finite")
        if not self.alpha0 > 0:
            raise ConfigError(f"alpha0 must be positive, got {self.alpha0}")
        if not self.lam > 0:
            raise ConfigError(f"lambda must be positive, got {self.lam}")
        if self.kappa_mode not in KAPPA_MODES:
            raise ConfigError(f"kappa_mode must be one of {KAPPA_MODES}")
        if self.size_mode not in SIZE_MODES:
            raise ConfigError(f"size_mode must be one of {SIZE_MODES}")
        if self.l2_rule not in L2_RULES:
            raise ConfigError(f"l2_rule must be one of {L2_RULES}")
        if not self.tol > 0:
            raise ConfigError("tol must be positive")
        if int(self.workers) != self.workers or self.workers < 1:
            raise ConfigError("workers must be a positive integer")
        if not self.levels:
            raise ConfigError("at least one refinement level is required")
        if any(int(n) != n or n < 1 for n in self.levels):
            raise ConfigError(f"levels must be positive integers, got {self.levels}")
        if any(b <= a for a, b in zip(self.levels, self.levels[1:])):
            raise ConfigError("levels must strictly refine (increasing n)")
        if self.test in ("b", "c") and any(n % 2 for n in self.levels):
            raise ConfigError(f"test {self.test} needs even n so material interfaces are mesh lines")
        if self.alpha0_sweep is not None:
            lo, hi, step = (float(v) for v in self.alpha0_sweep)
            if not (0 < lo <= hi and step > 0):
                raise ConfigError("alpha0 sweep needs 0 < MIN <= MAX and STEP > 0")
            if (hi - lo) / step + 1 > MAX_SWEEP_POINTS:
                raise ConfigError(f"alpha0 sweep is limited to {MAX_SWEEP_POINTS} points")
            set_("alpha0_sweep", (lo, hi, step))

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    @property
    def penalty(self) -> PenaltyConfig:
        return PenaltyConfig(self.alpha0, self.delta, self.kappa_mode, self.size_mode)

    def problem(self):
        return make_problem(self.test, self.lam)

    def sweep_values(self) -> list[float]:
        if self.alpha0_sweep is None:
            return [self.alpha0]
        lo, hi, step = self.alpha0_sweep
        count = int(math.floor((hi - lo) / step + 1e-9)) + 1
        return [round(lo + i * step, 10) for i in range(count)]


# -- single solve -----------------------------------------------------------------

def run_level(cfg: RunConfig, n: int) -> Level:
    """Solve one level and measure every error norm."""
    problem = cfg.problem()
    mesh = generate(cfg.mesh, n)
    problem.validate_mesh(mesh)
    sol = solve_hip(
        mesh, cfg.k, problem.element_tensors(mesh), cfg.scheme, cfg.penalty, problem.source(mesh), tol=cfg.tol
    )
    local, fld = sol.local, sol.field
    return Level(
        n=n,
        h=mesh.h,
        err_l2=l2_error(local, fld, problem, l2_quad_degree(cfg.k, cfg.l2_rule)),
        err_energy=energy_error(local, fld, problem),
        err_enriched=enriched_error(local, fld, problem),
        galerkin_residual=sol.galerkin_residual(),
        min_value=min_sample_value(local, fld),
    )


def _run_level_checked(cfg: RunConfig, n: int) -> Level:
    try:
        return run_level(cfg, n)
    except (SolverError, CoercivityError, NumericalFailure) as exc:
        raise LevelFailure(n, exc) from exc


# -- refinement study ------------------------------------------------------------

def run_convergence(cfg: RunConfig) -> ConvergenceReport:
    """One solve per level; levels run in parallel unless ``deterministic`` or ``workers == 1``."""
    if cfg.workers > 1 and not cfg.deterministic and len(cfg.levels) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            levels = list(pool.map(_run_level_checked, [cfg] * len(cfg.levels), cfg.levels))
    else:
        levels = [_run_level_checked(cfg, n) for n in cfg.levels]
    report = ConvergenceReport(levels, expected_rates(Scheme.parse(cfg.scheme), cfg.delta, cfg.k))
    if cfg.out:
        write_text(cfg.out, convergence_csv(report, cfg))
    return report


def _fmt(x: float) -> str:
    return "" if x is None or not math.isfinite(x) else FLOAT_FMT % x


def convergence_csv(report: ConvergenceReport, cfg: Optional[RunConfig] = None) -> str:
    """Header, one row per level (rate columns empty on the first row), then an expected-rates comment."""
    rates = {norm: [math.nan] + report.rates(norm) for norm in ("l2", "energy", "enriched")}
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["n", "h", "err_l2", "err_energy", "err_enriched", "ecr_l2", "ecr_energy", "ecr_enriched"])
    for i, lv in enumerate(report.levels):
        w.writerow([
            lv.n, _fmt(lv.h), _fmt(lv.err_l2), _fmt(lv.err_energy), _fmt(lv.err_enriched),
            _fmt(rates["l2"][i]), _fmt(rates["energy"][i]), _fmt(rates["enriched"][i]),
        ])
    ex = report.expected
    if ex is not None:
        tail = f"# expected rates: energy {ex.energy_rate:g}, l2 {ex.l2_rate:g} (eps={ex.epsilon}, delta={ex.delta:g}, k={ex.k})"
        if cfg is not None:
            tail += f"; l2 rule {cfg.l2_rule}"
        buf.write(tail + "\n")
    return buf.getvalue()


def format_report(report: ConvergenceReport) -> str:
    """Human-readable table of errors and rates."""
    rates = {norm: [math.nan] + report.rates(norm) for norm in ("l2", "energy", "enriched")}
    lines = [f"{'n':>5} {'err_l2':>11} {'ecr':>5} {'err_energy':>11} {'ecr':>5} {'err_enriched':>12} {'ecr':>5}"]
    for i, lv in enumerate(report.levels):
        r = [("%5.2f" % rates[k][i]) if math.isfinite(rates[k][i]) else "    -" for k in ("l2", "energy", "enriched")]
        lines.append(
            f"{lv.n:>5} {lv.err_l2:11.3e} {r[0]} {lv.err_energy:11.3e} {r[1]} {lv.err_enriched:12.3e} {r[2]}"
        )
    ex = report.expected
    if ex is not None:
        lines.append(f"expected rates: energy {ex.energy_rate:g}, l2 {ex.l2_rate:g}")
    return "\n".join(lines)


# -- alpha0 sweep ------------------------------------------------------------------

@dataclass
class SweepResult:
    n: int
    alphas: list[float]
    errors: list[float]  # NaN where the solve failed
    status: list[str] = field(default_factory=list)
    galerkin_residuals: list[float] = field(default_factory=list)

    @property
    def argmin(self) -> float:
        err = np.asarray(self.errors, dtype=float)
        if not np.any(np.isfinite(err)):
            raise ValueError("no successful solve in the sweep")
        return self.alphas[int(np.nanargmin(err))]

    @property
    def min_error(self) -> float:
        return float(np.nanmin(np.asarray(self.errors, dtype=float)))


def run_alpha_sweep(cfg: RunConfig) -> SweepResult:
    """L2 error over the alpha0 range on the finest configured level.

    Values where the local blocks are singular or the solve fails are kept as
    rows with an error status instead of aborting the sweep.
    """
    if cfg.test != "c" or cfg.mesh != "quad":
        raise ConfigError("the alpha0 sweep is defined for test c on square meshes")
    n = cfg.levels[-1]
    problem = cfg.problem()
    mesh = generate(cfg.mesh, n)
    problem.validate_mesh(mesh)
    K, f = problem.element_tensors(mesh), problem.source(mesh)
    qdeg = l2_quad_degree(cfg.k, cfg.l2_rule)
    alphas = sorted(cfg.sweep_values())
    errors, status, residuals = [], [], []
    for a in alphas:
        try:
            sol = solve_hip(mesh, cfg.k, K, cfg.scheme, cfg.replace(alpha0=a).penalty, f, tol=cfg.tol)
        except (CoercivityError, SolverError) as exc:
            errors.append(math.nan)
            status.append(type(exc).__name__)
            residuals.append(math.nan)
            continue
        errors.append(l2_error(sol.local, sol.field, problem, qdeg))
        status.append("ok")
        residuals.append(sol.galerkin_residual())
    result = SweepResult(n, alphas, errors, status, residuals)
    if cfg.out:
        write_text(cfg.out, sweep_csv(result))
    return result


def sweep_csv(result: SweepResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["alpha0", "err_l2", "status"])
    for a, e, s in zip(result.alphas, result.errors, result.status):
        w.writerow([_fmt(a), _fmt(e), s])
    if np.any(np.isfinite(result.errors)):
        buf.write(f"# argmin alpha0 {result.argmin:.6g}, err_l2 {FLOAT_FMT % result.min_error}, n {result.n}\n")
    else:
        buf.write("# argmin undefined: every solve failed\n")
    return buf.getvalue()


# -- kappa ablation ----------------------------------------------------------------

@dataclass(frozen=True)
class AblationRow:
    scheme: str
    kappa_mode: str
    err_l2: float
    min_value: float


def run_kappa_ablation(cfg: RunConfig) -> list[AblationRow]:
    """Both kappa modes for every scheme on the finest configured level."""
    if cfg.test != "b":
        raise ConfigError("the kappa ablation is defined for test b")
    n = cfg.levels[-1]
    rows = []
    for scheme in (Scheme.NIP, Scheme.IIP, Scheme.SIP):
        for mode in KAPPA_MODES:
            lv = _run_level_checked(cfg.replace(scheme=scheme.name, kappa_mode=mode, levels=(n,)), n)
            rows.append(AblationRow(scheme.name.lower(), mode, lv.err_l2, lv.min_value))
    if cfg.out:
        write_text(cfg.out, ablation_csv(rows))
    return rows


def ablation_csv(rows: Sequence[AblationRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["scheme", "kappa_mode", "err_l2", "min_value"])
    for r in rows:
        w.writerow([r.scheme, r.kappa_mode, _fmt(r.err_l2), _fmt(r.min_value)])
    return buf.getvalue()


def write_text(path: str, text: str) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(text)
