"""Hybridizable interior penalty (H-IP) discretization.

For a composite pair u = (u, u^) and test pair v = (v, v^) the bilinear form is

    B(u, v) = (K grad u, grad v)_T
              + <tau (u - u^), (v - v^)>_dT
              - <K grad u . n, v - v^>_dT
              - eps <K grad v . n, u - u^>_dT

with eps = +1 (H-SIP), 0 (H-IIP) or -1 (H-NIP), and the face penalty

    tau_{E,F} = alpha0 * C_tr^2 * kappa_{E,F} / h_E^(1 + delta).

Every element contributes four dense blocks (interior/trace rows x
interior/trace columns).  Interior unknowns are eliminated element by element
(static condensation) before the global trace system is solved.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import linalg
from .basis import (
    REFERENCE_VERTICES,
    DofMap,
    build_dofmap,
    element_basis,
    quadrature_rule,
    trace_basis,
    trace_constant,
)
from .errors import CoercivityError, DegenerateTensorError, NumericalFailure
from .mesh import Mesh

Source = Callable[[np.ndarray], np.ndarray]


class Scheme(enum.IntEnum):
    NIP = -1
    IIP = 0
    SIP = 1

    @property
    def epsilon(self) -> int:
        return int(self)

    @classmethod
    def parse(cls, value) -> "Scheme":
        if isinstance(value, Scheme):
            return value
        if isinstance(value, str):
            key = value.upper().removeprefix("H-")
            if key in cls.__members__:
                return cls[key]
            raise ValueError(f"unknown scheme {value!r}")
        if value in (-1, 0, 1):
            return cls(int(value))
        raise ValueError(f"epsilon must be -1, 0 or 1, got {value!r}")


KAPPA_MODES = ("unit", "normal")
# "diameter": h_E = diam(E); "size": h_E = |det J|^(1/2), i.e. 1/n on the structured grids
SIZE_MODES = ("diameter", "size")


@dataclass(frozen=True)
class PenaltyConfig:
    alpha0: float
    delta: float = 0.0
    kappa_mode: str = "normal"
    size_mode: str = "diameter"

    def __post_init__(self):
        if not self.alpha0 > 0:
            raise ValueError(f"alpha0 must be positive, got {self.alpha0}")
        if self.kappa_mode not in KAPPA_MODES:
            raise ValueError(f"kappa_mode must be one of {KAPPA_MODES}")
        if self.size_mode not in SIZE_MODES:
            raise ValueError(f"size_mode must be one of {SIZE_MODES}")


def penalty_value(cfg: PenaltyConfig, k: int, d: int, kappa_n, h_E):
    kappa_n = np.asarray(kappa_n, dtype=float)
    if np.any(kappa_n <= 0):
        raise DegenerateTensorError("normal diffusivity must be positive")
    if np.any(np.asarray(h_E) <= 0):
        raise ValueError("element size must be positive")
    tau = cfg.alpha0 * trace_constant(k, d) ** 2 * kappa_n / np.asarray(h_E, dtype=float) ** (1.0 + cfg.delta)
    return float(tau) if tau.ndim == 0 else tau


def normal_diffusivity(K, n) -> float:
    K = np.asarray(K, dtype=float)
    n = np.asarray(n, dtype=float)
    if K.shape != (2, 2) or not np.allclose(K, K.T, rtol=1e-12, atol=0.0):
        raise ValueError("diffusion tensor must be a symmetric 2x2 matrix")
    if abs(np.linalg.norm(n) - 1.0) > 1e-12:
        raise ValueError("normal must be a unit vector")
    val = float(n @ K @ n)
    if val <= 0:
        raise DegenerateTensorError("tensor is not positive definite")
    return val


# -- geometry ---------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Geometry:
    """Affine maps x = x0 + J xi for every element plus per-face data."""

    kind: str
    x0: np.ndarray  # (E, 2)
    J: np.ndarray  # (E, 2, 2)
    invJ: np.ndarray
    det: np.ndarray  # (E,), positive
    normals: np.ndarray  # (E, nf, 2) outward
    face_measure: np.ndarray  # (E, nf)
    flip: np.ndarray  # (E, nf) True if the local face runs against its global parametrization
    size: np.ndarray  # (E,) element diameter
    area_size: np.ndarray  # (E,) sqrt(|det J|)

    @property
    def n_local_faces(self) -> int:
        return self.normals.shape[1]

    def map(self, ref: np.ndarray) -> np.ndarray:
        return self.x0[:, None, :] + np.einsum("eab,qb->eqa", self.J, ref)

    def face_reference_points(self, s: np.ndarray) -> np.ndarray:
        """(nf, len(s), 2) reference points along each local face, local orientation."""
        ref = REFERENCE_VERTICES[self.kind]
        nf = len(ref)
        a = ref
        b = np.roll(ref, -1, axis=0)
        return a[:, None, :] + s[None, :, None] * (b - a)[:, None, :]


def geometry(mesh: Mesh) -> Geometry:
    p = mesh.vertices[mesh.cells]
    x0 = p[:, 0]
    J = np.stack([p[:, 1] - x0, p[:, -1] - x0], axis=-1)
    det = np.linalg.det(J)
    if np.any(det <= 0):
        raise ValueError("degenerate or clockwise element")
    if mesh.kind == "quad" and not np.allclose(p[:, 2], x0 + J.sum(axis=-1), atol=1e-14):
        raise ValueError("only affine (parallelogram) quadrilaterals are supported")
    nxt = np.roll(mesh.cells, -1, axis=1)
    t = mesh.vertices[nxt] - p
    flen = np.linalg.norm(t, axis=-1)
    normals = np.stack([t[..., 1], -t[..., 0]], axis=-1) / flen[..., None]
    return Geometry(
        mesh.kind, x0, J, np.linalg.inv(J), det, normals, flen, mesh.cells > nxt,
        mesh.diameters, np.sqrt(det),
    )


def _as_tensors(mesh: Mesh, K) -> np.ndarray:
    K = np.asarray(K, dtype=float)
    if K.shape == (2, 2):
        K = np.broadcast_to(K, (mesh.n_elements, 2, 2))
    if K.shape != (mesh.n_elements, 2, 2):
        raise ValueError("K must be a 2x2 tensor or one tensor per element")
    if not np.allclose(K, np.swapaxes(K, 1, 2), rtol=1e-12, atol=0.0):
        raise ValueError("diffusion tensor must be symmetric")
    return np.ascontiguousarray(K)


def face_penalties(mesh: Mesh, geo: Geometry, k: int, K: np.ndarray, cfg: PenaltyConfig) -> np.ndarray:
    """tau_{E,F}, shape (E, nf)."""
    if cfg.kappa_mode == "normal":
        kappa = np.einsum("efa,eab,efb->ef", geo.normals, K, geo.normals)
    else:
        kappa = np.ones(geo.normals.shape[:2])
    h = geo.size if cfg.size_mode == "diameter" else geo.area_size
    return penalty_value(cfg, k, 2, kappa, h[:, None])


# -- reference tensors --------------------------------------------------------

@dataclass(frozen=True, eq=False)
class _Reference:
    """Quadrature-integrated products of reference basis functions."""

    vol_grad: np.ndarray  # R[a,b,i,j] = sum_q w g_i,a g_j,b
    vol_val: np.ndarray  # (Q, m) basis values at element quadrature points
    vol_pts: np.ndarray
    vol_w: np.ndarray
    face_mass: np.ndarray  # (nf, m, m)  sum_q w phi_i phi_j
    face_val_grad: np.ndarray  # (nf, a, m, m)  sum_q w phi_i g_j,a
    face_grad_grad: np.ndarray  # (nf, a, b, m, m)  sum_q w g_i,a g_j,b
    face_val_trace: np.ndarray  # (2, nf, m, t)  sum_q w phi_i psi_b   [flip index first]
    face_grad_trace: np.ndarray  # (2, nf, a, m, t)  sum_q w g_i,a psi_b
    trace_mass: np.ndarray  # (t, t)
    face_s: np.ndarray
    face_w: np.ndarray
    face_val: np.ndarray  # (nf, Qf, m)
    face_grad: np.ndarray  # (nf, Qf, m, 2)
    trace_val: np.ndarray  # (2, Qf, t)


_REF_CACHE: dict = {}


def reference_tensors(kind: str, k: int, degree: int) -> _Reference:
    key = (kind, k, degree)
    if key in _REF_CACHE:
        return _REF_CACHE[key]
    basis = element_basis(kind, k)
    tb = trace_basis(k)
    q = quadrature_rule(kind, degree)
    v, g = basis.evaluate(q.points)
    vol_grad = np.einsum("q,qia,qjb->abij", q.weights, g, g)

    fq = quadrature_rule("segment", degree)
    s, w = fq.points[:, 0], fq.weights
    ref = REFERENCE_VERTICES[kind]
    nf = len(ref)
    pts = ref[:, None, :] + s[None, :, None] * (np.roll(ref, -1, axis=0) - ref)[:, None, :]
    fv = np.empty((nf, len(s), basis.dim))
    fg = np.empty((nf, len(s), basis.dim, 2))
    for f in range(nf):
        fv[f], fg[f] = basis.evaluate(pts[f])
    tv = np.stack([tb.values(s), tb.values(1.0 - s)])
    out = _Reference(
        vol_grad=vol_grad,
        vol_val=v,
        vol_pts=q.points,
        vol_w=q.weights,
        face_mass=np.einsum("q,fqi,fqj->fij", w, fv, fv),
        face_val_grad=np.einsum("q,fqi,fqja->faij", w, fv, fg),
        face_grad_grad=np.einsum("q,fqia,fqjb->fabij", w, fg, fg),
        face_val_trace=np.einsum("q,fqi,rqb->rfib", w, fv, tv),
        face_grad_trace=np.einsum("q,fqia,rqb->rfaib", w, fg, tv),
        trace_mass=np.einsum("q,qa,qb->ab", w, tv[0], tv[0]),
        face_s=s,
        face_w=w,
        face_val=fv,
        face_grad=fg,
        trace_val=tv,
    )
    _REF_CACHE[key] = out
    return out


# -- local systems ------------------------------------------------------------

@dataclass(eq=False)
class LocalSystems:
    """Dense per-element blocks for all elements.

    Trace columns/rows are ordered (local face, trace function); columns of
    eliminated boundary faces are kept here and dropped during scatter
    (``trace_dofs`` holds -1 for them).
    """

    mesh: Mesh
    k: int
    scheme: Scheme
    cfg: PenaltyConfig
    dofmap: DofMap
    A_EE: np.ndarray  # (E, m, m)
    A_EL: np.ndarray  # (E, m, t)
    A_LE: np.ndarray  # (E, t, m)
    A_LL: np.ndarray  # (E, t, t)
    load: np.ndarray  # (E, m)
    trace_dofs: np.ndarray  # (E, t)
    tau: np.ndarray  # (E, nf)
    tensors: np.ndarray  # (E, 2, 2)
    geometry: Geometry = field(repr=False)
    quad_degree: int = 0

    def block(self, e: int) -> np.ndarray:
        """Full local matrix [[A_EE, A_EL], [A_LE, A_LL]] of one element."""
        return np.block([[self.A_EE[e], self.A_EL[e]], [self.A_LE[e], self.A_LL[e]]])


def default_quad_degree(k: int) -> int:
    return 2 * k + 4


def _face_coefficients(geo: Geometry, K: np.ndarray) -> np.ndarray:
    """c[e,f,a] with (K grad phi) . n = sum_a ref_grad_a(phi) c_a."""
    Kn = np.einsum("eab,efb->efa", K, geo.normals)
    return np.einsum("eab,efb->efa", geo.invJ, Kn)


def assemble_local(
    mesh: Mesh,
    k: int,
    K,
    scheme,
    cfg: PenaltyConfig,
    source: Optional[Source] = None,
    quad_degree: Optional[int] = None,
) -> LocalSystems:
    """Element blocks of the H-IP form and the load (f, v)_E, for every element at once.

    ``K`` is one 2x2 tensor or an (E, 2, 2) array (constant per element);
    ``source`` maps physical points (E, Q, 2) to values (E, Q).
    """
    scheme = Scheme.parse(scheme)
    eps = scheme.epsilon
    K = _as_tensors(mesh, K)
    qdeg = default_quad_degree(k) if quad_degree is None else quad_degree
    ref = reference_tensors(mesh.kind, k, qdeg)
    geo = geometry(mesh)
    dofmap = build_dofmap(mesh, k)
    tau = face_penalties(mesh, geo, k, K, cfg)
    E, nf = tau.shape
    m = dofmap.element_dim
    nt = dofmap.trace_dim

    M = np.einsum("eab,ebc,edc->ead", geo.invJ, K, geo.invJ)  # invJ K invJ^T
    A_EE = geo.det[:, None, None] * np.einsum("eab,abij->eij", M, ref.vol_grad)

    c = _face_coefficients(geo, K)
    F = geo.face_measure
    # C[e,f,i,j] = int phi_i (K grad phi_j . n)
    C = np.einsum("efa,faij->efij", c, ref.face_val_grad)
    A_EE += np.einsum("ef,fij->eij", tau * F, ref.face_mass)
    A_EE -= np.einsum("ef,efij->eij", F, C + eps * np.swapaxes(C, 2, 3))

    flip = geo.flip.astype(int)
    fidx = np.arange(nf)[None, :]
    D = ref.face_val_trace[flip, fidx]  # (E, nf, m, t)
    H = np.einsum("efa,efaib->efib", c, ref.face_grad_trace[flip, fidx])
    A_EL_f = F[..., None, None] * (-tau[..., None, None] * D + eps * H)
    A_LE_f = F[..., None, None] * (-tau[..., None, None] * D + H)
    A_EL = np.transpose(A_EL_f, (0, 2, 1, 3)).reshape(E, m, nf * nt)
    A_LE = np.transpose(A_LE_f, (0, 1, 3, 2)).reshape(E, nf * nt, m)

    A_LL = np.zeros((E, nf * nt, nf * nt))
    for f in range(nf):
        sl = slice(f * nt, (f + 1) * nt)
        A_LL[:, sl, sl] = (tau[:, f] * F[:, f])[:, None, None] * ref.trace_mass

    load = np.zeros((E, m))
    if source is not None:
        x = geo.map(ref.vol_pts)
        fx = np.asarray(source(x), dtype=float)
        load = geo.det[:, None] * np.einsum("eq,q,qi->ei", fx, ref.vol_w, ref.vol_val)

    return LocalSystems(
        mesh, k, scheme, cfg, dofmap, A_EE, A_EL, A_LE, A_LL, load,
        dofmap.element_trace_dofs(mesh), tau, K, geo, qdeg,
    )


# -- global operators -----------------------------------------------------------

def _scatter(rows: np.ndarray, cols: np.ndarray, vals: np.ndarray, shape) -> sp.csr_matrix:
    r = np.broadcast_to(rows[:, :, None], vals.shape).ravel()
    c = np.broadcast_to(cols[:, None, :], vals.shape).ravel()
    v = vals.ravel()
    keep = (r >= 0) & (c >= 0)
    return linalg.from_triplets(shape, r[keep], c[keep], v[keep])


def assemble_full(local: LocalSystems) -> tuple[sp.csr_matrix, np.ndarray]:
    """Uncondensed global matrix over (interior, trace) dofs and its right-hand side."""
    dm = local.dofmap
    N = dm.n_total
    edofs = dm.element_dofs()
    tdofs = np.where(local.trace_dofs >= 0, local.trace_dofs + dm.n_interior, -1)
    rows = np.concatenate([edofs, tdofs], axis=1)
    blocks = np.concatenate(
        [np.concatenate([local.A_EE, local.A_EL], axis=2), np.concatenate([local.A_LE, local.A_LL], axis=2)],
        axis=1,
    )
    A = _scatter(rows, rows, blocks, (N, N))
    rhs = np.zeros(N)
    rhs[: dm.n_interior] = local.load.ravel()
    return A, rhs


@dataclass(frozen=True, eq=False)
class CompositeField:
    interior: np.ndarray
    trace: np.ndarray

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate([self.interior, self.trace])

    @classmethod
    def from_vector(cls, x: np.ndarray, dofmap: DofMap) -> "CompositeField":
        return cls(np.array(x[: dofmap.n_interior]), np.array(x[dofmap.n_interior:]))


@dataclass(eq=False)
class CondensedSystem:
    matrix: sp.csr_matrix
    rhs: np.ndarray
    local: LocalSystems
    inv_A_EL: np.ndarray  # A_EE^{-1} A_EL, (E, m, t)
    inv_load: np.ndarray  # A_EE^{-1} f_E, (E, m)


SINGULAR_RCOND = 1e-13


def condense(local: LocalSystems) -> CondensedSystem:
    """Static condensation S = sum_E A_LL - A_LE A_EE^{-1} A_EL, g = -sum_E A_LE A_EE^{-1} f_E."""
    sv = np.linalg.svd(local.A_EE, compute_uv=False)
    rcond = sv[:, -1] / sv[:, 0]
    bad = np.flatnonzero(~(rcond > SINGULAR_RCOND))
    if bad.size:
        raise CoercivityError(int(bad[0]), local.cfg.alpha0)
    rhs = np.concatenate([local.A_EL, local.load[:, :, None]], axis=2)
    sol = np.linalg.solve(local.A_EE, rhs)
    inv_A_EL, inv_load = sol[:, :, :-1], sol[:, :, -1]
    S_loc = local.A_LL - local.A_LE @ inv_A_EL
    g_loc = -np.einsum("etm,em->et", local.A_LE, inv_load)
    n = local.dofmap.n_trace
    S = _scatter(local.trace_dofs, local.trace_dofs, S_loc, (n, n))
    g = np.zeros(n)
    td = local.trace_dofs.ravel()
    keep = td >= 0
    np.add.at(g, td[keep], g_loc.ravel()[keep])
    return CondensedSystem(S, g, local, inv_A_EL, inv_load)


def recover(cond: CondensedSystem, trace_solution: np.ndarray) -> CompositeField:
    """Back-substitution u_E = A_EE^{-1} (f_E - A_EL lambda_E)."""
    trace_solution = np.asarray(trace_solution, dtype=float)
    if trace_solution.shape != (cond.local.dofmap.n_trace,):
        raise ValueError("trace solution has the wrong length")
    td = cond.local.trace_dofs
    lam = np.where(td >= 0, trace_solution[np.maximum(td, 0)], 0.0)
    u = cond.inv_load - np.einsum("emt,et->em", cond.inv_A_EL, lam)
    return CompositeField(u.ravel(), trace_solution.copy())


@dataclass(eq=False)
class Solution:
    field: CompositeField
    local: LocalSystems
    condensed: CondensedSystem
    report: linalg.SolveReport

    def galerkin_residual(self) -> float:
        """max_v |B(u_h, v) - l(v)| over basis composites, as a normwise backward error.

        The residual is scaled by ||A|| ||x|| + ||b|| (inf-norms), so it stays
        O(eps) however large the penalty makes the matrix entries.
        """
        A, rhs = assemble_full(self.local)
        x = self.field.vector
        r = A @ x - rhs
        scale = abs(A).sum(axis=1).max() * np.abs(x).max() + np.abs(rhs).max()
        return float(np.abs(r).max() / scale) if scale > 0 else float(np.abs(r).max())


def solve_hip(
    mesh: Mesh,
    k: int,
    K,
    scheme,
    cfg: PenaltyConfig,
    source: Optional[Source] = None,
    tol: float = 1e-12,
    method: str = "direct",
    quad_degree: Optional[int] = None,
) -> Solution:
    """Assemble, condense, solve the trace system and recover interior unknowns."""
    local = assemble_local(mesh, k, K, scheme, cfg, source, quad_degree)
    cond = condense(local)
    lam, report = linalg.solve(
        cond.matrix, cond.rhs, symmetric_hint=local.scheme is Scheme.SIP, tol=tol, method=method
    )
    return Solution(recover(cond, lam), local, cond, report)


# -- norms of discrete composites -------------------------------------------------

def norm_matrices(local: LocalSystems) -> dict[str, sp.csr_matrix]:
    """Global Gram matrices over (interior, trace) dofs.

    ``grad``: ||K^1/2 grad_h v||^2, ``jump``: sum tau ||v - v^||^2_F,
    ``face_grad``: sum_E h_E ||K^1/2 grad v||^2_dE.  Then
    ||v||_*^2 = x^T (grad + jump) x and |||v|||^2 adds ``face_grad``.
    The jump weight is gamma = tau.
    """
    geo = local.geometry
    ref = reference_tensors(local.mesh.kind, local.k, local.quad_degree)
    K, tau, F = local.tensors, local.tau, geo.face_measure
    dm = local.dofmap
    N = dm.n_total
    E, m = local.A_EE.shape[:2]
    nf, nt = tau.shape[1], dm.trace_dim

    Mv = np.einsum("eab,ebc,edc->ead", geo.invJ, K, geo.invJ)
    G = geo.det[:, None, None] * np.einsum("eab,abij->eij", Mv, ref.vol_grad)
    FG = np.einsum("ef,eab,fabij->eij", F, Mv, ref.face_grad_grad) * geo.size[:, None, None]

    flip = geo.flip.astype(int)
    D = ref.face_val_trace[flip, np.arange(nf)[None, :]]
    w = tau * F
    J_EE = np.einsum("ef,fij->eij", w, ref.face_mass)
    J_EL = np.transpose(-w[..., None, None] * D, (0, 2, 1, 3)).reshape(E, m, nf * nt)
    J_LL = np.zeros((E, nf * nt, nf * nt))
    for f in range(nf):
        sl = slice(f * nt, (f + 1) * nt)
        J_LL[:, sl, sl] = w[:, f, None, None] * ref.trace_mass

    edofs = dm.element_dofs()
    tdofs = np.where(local.trace_dofs >= 0, local.trace_dofs + dm.n_interior, -1)
    rows = np.concatenate([edofs, tdofs], axis=1)
    Z = np.zeros((E, nf * nt, m))
    ZL = np.zeros((E, nf * nt, nf * nt))
    ZEL = np.zeros((E, m, nf * nt))

    def full(bEE, bEL, bLE, bLL):
        blk = np.concatenate([np.concatenate([bEE, bEL], 2), np.concatenate([bLE, bLL], 2)], 1)
        return _scatter(rows, rows, blk, (N, N))

    return {
        "grad": full(G, ZEL, Z, ZL),
        "jump": full(J_EE, J_EL, np.swapaxes(J_EL, 1, 2), J_LL),
        "face_grad": full(FG, ZEL, Z, ZL),
    }


# -- coercivity ---------------------------------------------------------------

@dataclass(frozen=True)
class CoercivityCertificate:
    min_eigenvalue: float

    @property
    def coercive(self) -> bool:
        return self.min_eigenvalue > 0


MAX_CERTIFICATE_DOFS = 4000


def coercivity_certificate(mesh: Mesh, k: int, scheme, cfg: PenaltyConfig, K=np.eye(2)) -> CoercivityCertificate:
    """Smallest eigenvalue of the symmetric part of the uncondensed H-IP matrix.

    Shift-invert Lanczos around a Gershgorin lower bound, so the eigenvalue
    closest to the shift is the algebraically smallest one.
    """
    local = assemble_local(mesh, k, K, scheme, cfg)
    A, _ = assemble_full(local)
    if A.shape[0] > MAX_CERTIFICATE_DOFS:
        raise ValueError(f"certificate is limited to {MAX_CERTIFICATE_DOFS} dofs, got {A.shape[0]}")
    Ssym = ((A + A.T) * 0.5).tocsc()
    absrow = np.asarray(abs(Ssym).sum(axis=1)).ravel()
    diag = Ssym.diagonal()
    shift = float(np.min(diag - (absrow - np.abs(diag)))) - 1.0
    try:
        vals = spla.eigsh(Ssym, k=1, sigma=shift, which="LM", return_eigenvectors=False, maxiter=5000, tol=1e-12)
    except spla.ArpackNoConvergence as exc:
        raise NumericalFailure("eigenvalue iteration did not converge") from exc
    return CoercivityCertificate(float(vals[0]))
