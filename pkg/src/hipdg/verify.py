"""Manufactured problems, discrete error norms and convergence-rate bookkeeping."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .assembly import CompositeField, LocalSystems, Scheme, reference_tensors
from .mesh import Mesh

PROBLEMS = ("testA", "testB", "testC")
# "exact": element rule of degree 2k + 4; "gauss": the reduced degree-2k rule
# (sum over Gauss points of the pointwise error), which sees superconvergent nodal values
L2_RULES = ("exact", "gauss")


def l2_quad_degree(k: int, rule: str = "exact") -> int:
    if rule == "exact":
        return 2 * k + 4
    if rule == "gauss":
        return 2 * k
    raise ValueError(f"L2 rule must be one of {L2_RULES}")


# -- problems -----------------------------------------------------------------

def _test_a_fields(x, y):
    p, q = x * (1 - x), y * (1 - y)
    dp, dq = 1 - 2 * x, 1 - 2 * y
    g = np.exp(-x**2 - y**2)
    u = p * q * g
    ax, ay = dp - 2 * x * p, dq - 2 * y * q
    grad = np.stack([q * g * ax, p * g * ay], axis=-1)
    uxx = q * g * (-2 - 2 * p - 4 * x * dp + 4 * x**2 * p)
    uyy = p * g * (-2 - 2 * q - 4 * y * dq + 4 * y**2 * q)
    uxy = g * ax * ay
    hess = np.stack([np.stack([uxx, uxy], -1), np.stack([uxy, uyy], -1)], -2)
    return u, grad, hess


def _sine_fields(x, y):
    sx, sy = np.sin(np.pi * x), np.sin(np.pi * y)
    cx, cy = np.cos(np.pi * x), np.cos(np.pi * y)
    u = sx * sy
    grad = np.pi * np.stack([cx * sy, sx * cy], axis=-1)
    pi2 = np.pi**2
    hess = np.stack(
        [np.stack([-pi2 * u, pi2 * cx * cy], -1), np.stack([pi2 * cx * cy, -pi2 * u], -1)], -2
    )
    return u, grad, hess


@dataclass(frozen=True)
class Problem:
    """-div(K grad u) = f on the unit square with u = 0 on the boundary.

    K is piecewise constant; for testB/testC it takes diag(1, lam) on the
    lower-left and upper-right quarters and diag(1/lam, 1) on the other two.
    """

    name: str
    lam: float = 1.0
    _fields: Callable = field(default=_test_a_fields, repr=False, compare=False)

    def u(self, x, y):
        return self._fields(np.asarray(x, float), np.asarray(y, float))[0]

    def grad(self, x, y):
        return self._fields(np.asarray(x, float), np.asarray(y, float))[1]

    def hessian(self, x, y):
        return self._fields(np.asarray(x, float), np.asarray(y, float))[2]

    @property
    def piecewise(self) -> bool:
        return self.name != "testA"

    def subdomain(self, x, y) -> np.ndarray:
        """1..4 for the quarters Omega_1 (lower left) ... Omega_4 (upper left)."""
        right = np.asarray(x) > 0.5
        top = np.asarray(y) > 0.5
        return np.select([~right & ~top, right & ~top, right & top], [1, 2, 3], 4)

    def tensor(self, x, y) -> np.ndarray:
        x = np.asarray(x, float)
        shape = x.shape
        K = np.zeros(shape + (2, 2))
        if not self.piecewise:
            K[..., 0, 0] = K[..., 1, 1] = 1.0
            return K
        odd = np.isin(self.subdomain(x, y), (1, 3))
        K[..., 0, 0] = np.where(odd, 1.0, 1.0 / self.lam)
        K[..., 1, 1] = np.where(odd, self.lam, 1.0)
        return K

    def element_tensors(self, mesh: Mesh) -> np.ndarray:
        c = mesh.centroids
        return self.tensor(c[:, 0], c[:, 1])

    def forcing(self, x, y, K) -> np.ndarray:
        """f = -K : hess(u) for a constant tensor K."""
        return -np.einsum("...ab,...ab->...", np.asarray(K), self.hessian(x, y))

    def source(self, mesh: Mesh) -> Callable[[np.ndarray], np.ndarray]:
        """Forcing evaluated with each element's own tensor, for ``assemble_local``."""
        K = self.element_tensors(mesh)

        def f(pts):
            return self.forcing(pts[..., 0], pts[..., 1], K[:, None])

        return f

    def validate_mesh(self, mesh: Mesh) -> None:
        if self.piecewise and mesh.n % 2:
            raise ValueError(f"{self.name} needs an even n so the material interfaces are mesh lines (got n={mesh.n})")


def make_problem(name: str, lam: float = 1.0) -> Problem:
    aliases = {"a": "testA", "b": "testB", "c": "testC"}
    name = aliases.get(name, name)
    if name not in PROBLEMS:
        raise ValueError(f"unknown problem {name!r}")
    if name == "testA":
        return Problem("testA", 1.0, _test_a_fields)
    if not lam > 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    return Problem(name, float(lam), _sine_fields)


# -- error norms ----------------------------------------------------------------

def _coeffs(local: LocalSystems, field_: CompositeField) -> np.ndarray:
    return field_.interior.reshape(local.mesh.n_elements, local.dofmap.element_dim)


def _physical_grad(local: LocalSystems, ref_grad: np.ndarray, coeffs: np.ndarray) -> np.ndarray:
    """grad u_h at reference points: ref_grad (Q, m, 2) -> (E, Q, 2)."""
    g = np.einsum("qia,ei->eqa", ref_grad, coeffs)
    return np.einsum("eab,eqa->eqb", local.geometry.invJ, g)


def _volume_terms(local, field_, problem, quad_degree):
    from .basis import element_basis, quadrature_rule

    qdeg = local.quad_degree if quad_degree is None else quad_degree
    basis = element_basis(local.mesh.kind, local.k)
    q = quadrature_rule(local.mesh.kind, qdeg)
    v, g = basis.evaluate(q.points)
    geo = local.geometry
    x = geo.map(q.points)
    c = _coeffs(local, field_)
    uh = c @ v.T
    guh = _physical_grad(local, g, c)
    wdet = geo.det[:, None] * q.weights[None, :]
    return x, wdet, uh, guh


def l2_error(local: LocalSystems, field_: CompositeField, problem: Problem, quad_degree: Optional[int] = None) -> float:
    """(sum_E int_E (u - u_h)^2)^(1/2)."""
    x, wdet, uh, _ = _volume_terms(local, field_, problem, quad_degree)
    e = problem.u(x[..., 0], x[..., 1]) - uh
    return float(math.sqrt(np.sum(wdet * e**2)))


def _grad_error_sq(local, field_, problem, quad_degree) -> float:
    x, wdet, _, guh = _volume_terms(local, field_, problem, quad_degree)
    e = problem.grad(x[..., 0], x[..., 1]) - guh
    return float(np.sum(wdet * np.einsum("eqa,eab,eqb->eq", e, local.tensors, e)))


def _face_data(local: LocalSystems, field_: CompositeField):
    geo = local.geometry
    ref = reference_tensors(local.mesh.kind, local.k, local.quad_degree)
    c = _coeffs(local, field_)
    nf = geo.n_local_faces
    nt = local.dofmap.trace_dim
    uh_face = np.einsum("fqi,ei->efq", ref.face_val, c)
    td = local.trace_dofs.reshape(-1, nf, nt)
    lam = np.where(td >= 0, field_.trace[np.maximum(td, 0)], 0.0)
    tv = ref.trace_val[geo.flip.astype(int)]  # (E, nf, Qf, t)
    lam_face = np.einsum("efqb,efb->efq", tv, lam)
    w = geo.face_measure[..., None] * ref.face_w[None, None, :]
    return ref, c, uh_face, lam_face, w


def jump_seminorm_sq(local: LocalSystems, field_: CompositeField, gamma: Optional[np.ndarray] = None) -> float:
    """sum_E sum_F gamma_{E,F} ||u_h - u^_h||_F^2 (gamma defaults to tau)."""
    _, _, uh_face, lam_face, w = _face_data(local, field_)
    gamma = local.tau if gamma is None else gamma
    return float(np.sum(gamma[..., None] * w * (uh_face - lam_face) ** 2))


def energy_error(local: LocalSystems, field_: CompositeField, problem: Problem, quad_degree: Optional[int] = None) -> float:
    """||(u - u_h, u^ - u^_h)||_* with u^ = u on the skeleton and gamma = tau.

    Since u is single valued on faces, the jump of the error reduces to u^_h - u_h.
    """
    return math.sqrt(_grad_error_sq(local, field_, problem, quad_degree) + jump_seminorm_sq(local, field_))


def _face_grad_error_sq(local: LocalSystems, field_: CompositeField, problem: Problem) -> float:
    geo = local.geometry
    ref, c, _, _, w = _face_data(local, field_)
    nf = geo.n_local_faces
    total = 0.0
    for f in range(nf):
        pts = geo.face_reference_points(ref.face_s)[f]
        x = geo.map(pts)
        g = problem.grad(x[..., 0], x[..., 1]) - _physical_grad(local, ref.face_grad[f], c)
        kg = np.einsum("eqa,eab,eqb->eq", g, local.tensors, g)
        total += float(np.sum(geo.size[:, None] * w[:, f] * kg))
    return total


def enriched_error(local: LocalSystems, field_: CompositeField, problem: Problem, quad_degree: Optional[int] = None) -> float:
    """|||e|||: energy error plus sum_E h_E ||K^1/2 grad_h e||^2_dE."""
    e2 = _grad_error_sq(local, field_, problem, quad_degree) + jump_seminorm_sq(local, field_)
    return math.sqrt(e2 + _face_grad_error_sq(local, field_, problem))


def interpolate(local: LocalSystems, fn: Callable) -> CompositeField:
    """L2 projection of ``fn(x, y)`` onto V_h and, on interior faces, onto the trace space."""
    from .basis import element_basis, quadrature_rule, trace_basis

    q = quadrature_rule(local.mesh.kind, local.quad_degree)
    v = element_basis(local.mesh.kind, local.k).values(q.points)
    x = local.geometry.map(q.points)
    interior = np.einsum("eq,q,qi->ei", fn(x[..., 0], x[..., 1]), q.weights, v)

    mesh, dm = local.mesh, local.dofmap
    fq = quadrature_rule("segment", local.quad_degree)
    s = fq.points[:, 0]
    inner = np.flatnonzero(~mesh.boundary_mask)
    a = mesh.vertices[mesh.face_vertices[inner, 0]]
    b = mesh.vertices[mesh.face_vertices[inner, 1]]
    xf = a[:, None, :] + s[None, :, None] * (b - a)[:, None, :]
    coef = np.einsum("fq,q,qb->fb", fn(xf[..., 0], xf[..., 1]), fq.weights, trace_basis(local.k).values(s))
    trace = np.zeros(dm.n_trace)
    trace[(dm.face_offsets[inner, None] + np.arange(dm.trace_dim)).ravel()] = coef.ravel()
    return CompositeField(interior.ravel(), trace)


def min_sample_value(local: LocalSystems, field_: CompositeField) -> float:
    """Smallest value of u_h over element quadrature points and element vertices."""
    from .basis import REFERENCE_VERTICES, element_basis

    basis = element_basis(local.mesh.kind, local.k)
    ref = reference_tensors(local.mesh.kind, local.k, local.quad_degree)
    pts = np.vstack([ref.vol_pts, REFERENCE_VERTICES[local.mesh.kind]])
    return float((_coeffs(local, field_) @ basis.values(pts).T).min())


# -- rates ------------------------------------------------------------------

@dataclass(frozen=True)
class ExpectedRates:
    epsilon: int
    delta: float
    k: int
    s: float = math.inf

    @property
    def mu(self) -> float:
        return min(self.k + 1, self.s)

    @property
    def r_delta(self) -> float:
        return min(0.0, self.delta)

    @property
    def s_delta(self) -> float:
        d = self.delta
        if self.epsilon == 1:
            return min(0.0, 2 * d)
        if d >= 0:
            return min(0.0, d / 2 - 1)
        return min(2 * d, 1.5 * d - 1)

    @property
    def energy_rate(self) -> float:
        return self.mu + self.r_delta - 1

    @property
    def l2_rate(self) -> float:
        return self.mu + self.s_delta


def expected_rates(epsilon, delta: float, k: int, s: float = math.inf) -> ExpectedRates:
    eps = Scheme.parse(epsilon).epsilon
    return ExpectedRates(eps, float(delta), int(k), s)


def ecr(errors: Sequence[float], hs: Sequence[float]) -> list[float]:
    """log(e_i / e_{i+1}) / log(h_i / h_{i+1}); NaN marks a saturated (zero) error."""
    errors = list(errors)
    hs = list(hs)
    if len(errors) != len(hs) or len(errors) < 2:
        raise ValueError("need matching sequences of length >= 2")
    if any(h <= 0 for h in hs) or any(e < 0 for e in errors):
        raise ValueError("mesh sizes must be positive and errors nonnegative")
    rates = []
    for (e0, e1), (h0, h1) in zip(zip(errors, errors[1:]), zip(hs, hs[1:])):
        if e0 == 0 or e1 == 0:
            rates.append(math.nan)
        else:
            rates.append(math.log(e0 / e1) / math.log(h0 / h1))
    return rates


@dataclass
class Level:
    n: int
    h: float
    err_l2: float
    err_energy: float
    err_enriched: float
    galerkin_residual: float = math.nan
    min_value: float = math.nan


@dataclass
class ConvergenceReport:
    levels: list[Level]
    expected: Optional[ExpectedRates] = None

    def __post_init__(self):
        hs = [lv.h for lv in self.levels]
        if any(b >= a for a, b in zip(hs, hs[1:])):
            raise ValueError("levels must strictly refine")

    @property
    def hs(self) -> list[float]:
        return [lv.h for lv in self.levels]

    def rates(self, norm: str) -> list[float]:
        if len(self.levels) < 2:
            return []
        return ecr([getattr(lv, f"err_{norm}") for lv in self.levels], self.hs)
