"""Reference-element modal bases, quadrature rules and the (V_h, V^_h) dof map.

Reference elements: the unit segment [0, 1], the unit triangle with vertices
(0, 0), (1, 0), (0, 1), and the unit square [0, 1]^2.  All bases are
orthonormal in L2 of their reference element.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import eval_jacobi, roots_jacobi

from .mesh import Mesh, normalize_kind

MAX_DEGREE = 6
MAX_QUADRATURE_DEGREE = 80


# -- quadrature -------------------------------------------------------------

@dataclass(frozen=True)
class Quadrature:
    kind: str
    points: np.ndarray  # (npts, dim)
    weights: np.ndarray
    degree: int

    def __len__(self) -> int:
        return len(self.weights)


def _gauss01(npts: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(npts)
    return 0.5 * (x + 1.0), 0.5 * w


@lru_cache(maxsize=None)
def quadrature_rule(kind: str, degree: int) -> Quadrature:
    """Gauss-type rule exact for polynomials up to ``degree``.

    Triangle rules are collapsed (Duffy) tensor rules with a Gauss-Jacobi
    factor, exact in total degree.  Square rules are tensor Gauss rules,
    exact per axis.
    """
    if kind != "segment":
        kind = normalize_kind(kind)
    if degree < 0:
        raise ValueError("quadrature degree must be nonnegative")
    if degree > MAX_QUADRATURE_DEGREE:
        raise ValueError(f"quadrature degree {degree} exceeds the supported maximum {MAX_QUADRATURE_DEGREE}")
    npts = degree // 2 + 1
    if kind == "segment":
        x, w = _gauss01(npts)
        return Quadrature(kind, x[:, None], w, degree)
    if kind == "quad":
        x, w = _gauss01(npts)
        X, Y = np.meshgrid(x, x, indexing="ij")
        W = np.outer(w, w)
        return Quadrature(kind, np.column_stack([X.ravel(), Y.ravel()]), W.ravel(), degree)
    a, wa = _gauss01(npts)
    s, ws = roots_jacobi(npts, 1.0, 0.0)
    b, wb = 0.5 * (s + 1.0), 0.25 * ws
    A, B = np.meshgrid(a, b, indexing="ij")
    W = np.outer(wa, wb)
    pts = np.column_stack([(A * (1.0 - B)).ravel(), B.ravel()])
    return Quadrature(kind, pts, W.ravel(), degree)


# -- bases ------------------------------------------------------------------

def _legendre01(n: int, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Orthonormal Legendre polynomials on [0, 1] and their derivatives, shape (len(x), n + 1)."""
    t = 2.0 * x - 1.0
    vals = np.empty((len(x), n + 1))
    ders = np.empty_like(vals)
    for i in range(n + 1):
        c = math.sqrt(2 * i + 1)
        vals[:, i] = c * eval_jacobi(i, 0, 0, t)
        ders[:, i] = 0.0 if i == 0 else c * (i + 1) * eval_jacobi(i - 1, 1, 1, t)
    return vals, ders


def _dubiner_raw(k: int, pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Unnormalized Dubiner polynomials on the unit triangle.

    Uses u = 2x + y - 1, t = 1 - y and the homogenized Legendre recurrence
    Q_i(u, t) = t^i P_i(u / t), so nothing is singular at the top vertex.
    """
    x, y = pts[:, 0], pts[:, 1]
    u, t = 2.0 * x + y - 1.0, 1.0 - y
    Q = [np.ones_like(x), u]
    Qu = [np.zeros_like(x), np.ones_like(x)]
    Qt = [np.zeros_like(x), np.zeros_like(x)]
    for i in range(1, k):
        Q.append(((2 * i + 1) * u * Q[i] - i * t**2 * Q[i - 1]) / (i + 1))
        Qu.append(((2 * i + 1) * (Q[i] + u * Qu[i]) - i * t**2 * Qu[i - 1]) / (i + 1))
        Qt.append(((2 * i + 1) * u * Qt[i] - i * (2 * t * Q[i - 1] + t**2 * Qt[i - 1])) / (i + 1))
    s = 2.0 * y - 1.0
    vals, gx, gy = [], [], []
    for deg in range(k + 1):
        for i in range(deg, -1, -1):
            j = deg - i
            a = 2 * i + 1
            J = eval_jacobi(j, a, 0, s)
            dJ = 0.0 if j == 0 else (j + a + 1) * eval_jacobi(j - 1, a + 1, 1, s)  # d/dy, includes ds/dy = 2
            vals.append(Q[i] * J)
            gx.append(2.0 * Qu[i] * J)
            gy.append((Qu[i] - Qt[i]) * J + Q[i] * dJ)
    return np.column_stack(vals), np.stack([np.column_stack(gx), np.column_stack(gy)], axis=-1)


@dataclass(frozen=True, eq=False)
class ElementBasis:
    kind: str
    degree: int
    dim: int
    _scale: np.ndarray

    def evaluate(self, pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Values (npts, dim) and reference gradients (npts, dim, 2) at reference points."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        if self.kind == "triangle":
            v, g = _dubiner_raw(self.degree, pts)
        else:
            lx, dx = _legendre01(self.degree, pts[:, 0])
            ly, dy = _legendre01(self.degree, pts[:, 1])
            v = (lx[:, :, None] * ly[:, None, :]).reshape(len(pts), -1)
            g = np.stack(
                [(dx[:, :, None] * ly[:, None, :]).reshape(len(pts), -1),
                 (lx[:, :, None] * dy[:, None, :]).reshape(len(pts), -1)],
                axis=-1,
            )
        return v * self._scale, g * self._scale[:, None]

    def values(self, pts: np.ndarray) -> np.ndarray:
        return self.evaluate(pts)[0]

    def gradients(self, pts: np.ndarray) -> np.ndarray:
        return self.evaluate(pts)[1]


@lru_cache(maxsize=None)
def element_basis(kind: str, k: int) -> ElementBasis:
    """Orthonormal modal basis of P_k (triangle) or Q_k (quad)."""
    kind = normalize_kind(kind)
    if int(k) != k or not 1 <= k <= MAX_DEGREE:
        raise ValueError(f"polynomial degree must be in 1..{MAX_DEGREE}, got {k!r}")
    dim = (k + 1) * (k + 2) // 2 if kind == "triangle" else (k + 1) ** 2
    if kind == "quad":
        return ElementBasis(kind, k, dim, np.ones(dim))
    q = quadrature_rule("triangle", 2 * k)
    v, _ = _dubiner_raw(k, q.points)
    norms = np.sqrt(np.einsum("q,qi,qi->i", q.weights, v, v))
    return ElementBasis(kind, k, dim, 1.0 / norms)


@dataclass(frozen=True)
class TraceBasis:
    degree: int

    @property
    def dim(self) -> int:
        return self.degree + 1

    def values(self, s: np.ndarray) -> np.ndarray:
        return _legendre01(self.degree, np.asarray(s, dtype=float).ravel())[0]


def trace_basis(k: int) -> TraceBasis:
    if int(k) != k or not 1 <= k <= MAX_DEGREE:
        raise ValueError(f"polynomial degree must be in 1..{MAX_DEGREE}, got {k!r}")
    return TraceBasis(int(k))


def trace_constant(k: int, d: int = 2) -> float:
    """Discrete trace inequality constant sqrt((k + 1)(k + d) / d) for degree-k polynomials on a d-simplex."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if d != 2:
        raise ValueError("only d = 2 is supported")
    return math.sqrt((k + 1) * (k + d) / d)


# reference vertices, in the local vertex order used by the mesh
REFERENCE_VERTICES = {
    "triangle": np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]),
    "quad": np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]),
}


# -- dof map ----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class DofMap:
    """Interior dofs are element-major; trace dofs are numbered over interior faces only."""

    n_elements: int
    element_dim: int
    trace_dim: int
    face_offsets: np.ndarray  # (n_faces,), -1 on boundary faces

    @property
    def n_interior(self) -> int:
        return self.n_elements * self.element_dim

    @property
    def n_trace(self) -> int:
        return int(np.count_nonzero(self.face_offsets >= 0)) * self.trace_dim

    @property
    def n_total(self) -> int:
        return self.n_interior + self.n_trace

    def element_offsets(self) -> np.ndarray:
        return np.arange(self.n_elements) * self.element_dim

    def element_dofs(self) -> np.ndarray:
        return np.arange(self.n_interior).reshape(self.n_elements, self.element_dim)

    def face_dofs(self) -> np.ndarray:
        """(n_faces, trace_dim) global trace dofs, -1 rows for eliminated boundary faces."""
        off = self.face_offsets[:, None]
        return np.where(off >= 0, off + np.arange(self.trace_dim), -1)

    def element_trace_dofs(self, mesh: Mesh) -> np.ndarray:
        """(n_elements, n_local_faces * trace_dim) trace dofs seen by each element."""
        return self.face_dofs()[mesh.element_faces].reshape(mesh.n_elements, -1)


def build_dofmap(mesh: Mesh, k: int) -> DofMap:
    basis = element_basis(mesh.kind, k)
    interior = ~mesh.boundary_mask
    offsets = -np.ones(mesh.n_faces, dtype=np.int64)
    offsets[interior] = np.arange(np.count_nonzero(interior)) * (k + 1)
    return DofMap(mesh.n_elements, basis.dim, k + 1, offsets)
