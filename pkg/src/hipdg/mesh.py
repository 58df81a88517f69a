"""Structured triangular and square meshes of the unit square.

Vertices are numbered row by row, ``id = j * (n + 1) + i`` for the point
``(i / n, j / n)``.  Elements are stored counter-clockwise; local face ``f``
of an element joins its local vertices ``f`` and ``f + 1`` (cyclically).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Literal

import numpy as np

ElementKind = Literal["triangle", "quad"]

KIND_ALIASES = {"tri": "triangle", "triangle": "triangle", "quad": "quad", "square": "quad"}


def normalize_kind(kind: str) -> str:
    try:
        return KIND_ALIASES[kind]
    except KeyError:
        raise ValueError(f"unknown element kind {kind!r}") from None


@dataclass(frozen=True)
class Element:
    id: int
    vertex_ids: tuple[int, ...]
    diameter: float
    measure: float
    face_ids: tuple[int, ...]

    @property
    def n_faces(self) -> int:
        return len(self.face_ids)


@dataclass(frozen=True)
class Interface:
    id: int
    vertex_ids: tuple[int, int]  # sorted: lower id first, defines the trace parametrization
    measure: float
    element_ids: tuple[int, ...]
    normal: np.ndarray  # points from element_ids[0] towards element_ids[1] (outward on the boundary)

    @property
    def is_boundary(self) -> bool:
        return len(self.element_ids) == 1


@dataclass(frozen=True, eq=False)
class Mesh:
    """Immutable conforming mesh of [0, 1]^2.

    Besides the per-entity records, array views are kept for vectorized
    assembly: ``cells`` (n_elements, n_local_vertices), ``element_faces``
    (n_elements, n_local_faces), ``face_vertices`` (n_faces, 2) and
    ``face_elements`` (n_faces, 2) with -1 marking a missing neighbour.
    """

    kind: str
    n: int
    vertices: np.ndarray
    cells: np.ndarray
    element_faces: np.ndarray
    face_vertices: np.ndarray
    face_elements: np.ndarray
    elements: list[Element] = field(repr=False)
    interfaces: list[Interface] = field(repr=False)

    @property
    def n_elements(self) -> int:
        return len(self.cells)

    @property
    def n_faces(self) -> int:
        return len(self.face_vertices)

    @property
    def boundary_mask(self) -> np.ndarray:
        return self.face_elements[:, 1] < 0

    @property
    def n_interior_faces(self) -> int:
        return int(np.count_nonzero(~self.boundary_mask))

    @property
    def h(self) -> float:
        return float(self.diameters.max())

    @cached_property
    def diameters(self) -> np.ndarray:
        return _diameters(self.vertices[self.cells])

    @cached_property
    def measures(self) -> np.ndarray:
        return _polygon_area(self.vertices[self.cells])

    @property
    def centroids(self) -> np.ndarray:
        return self.vertices[self.cells].mean(axis=1)

    @property
    def max_faces_per_element(self) -> int:
        return self.cells.shape[1]

    def quasi_uniformity(self) -> float:
        """Achieved ratio min(h_E) / max(h_E)."""
        d = self.diameters
        return float(d.min() / d.max())

    def outward_normals(self) -> np.ndarray:
        """Unit outward normals, shape (n_elements, n_local_faces, 2)."""
        return _outward(self.vertices[self.cells])

    def outward_normal(self, element_id: int, face_id: int) -> np.ndarray:
        if not 0 <= element_id < self.n_elements:
            raise ValueError(f"element {element_id} out of range")
        local = np.flatnonzero(self.element_faces[element_id] == face_id)
        if local.size == 0:
            raise ValueError(f"face {face_id} is not on element {element_id}")
        return self.outward_normals()[element_id, local[0]]

    def face_measures(self) -> np.ndarray:
        v = self.vertices[self.face_vertices]
        return np.linalg.norm(v[:, 1] - v[:, 0], axis=-1)

    def dump(self) -> str:
        """Plain-text dump: header ``kind n``, then ``v x y`` and ``e v0 v1 ...`` lines."""
        lines = [f"{self.kind} {self.n}"]
        lines += [f"v {x!r} {y!r}" for x, y in self.vertices.tolist()]
        lines += ["e " + " ".join(str(v) for v in c) for c in self.cells.tolist()]
        return "\n".join(lines) + "\n"


def _polygon_area(p: np.ndarray) -> np.ndarray:
    x, y = p[..., 0], p[..., 1]
    return 0.5 * np.sum(x * np.roll(y, -1, axis=-1) - np.roll(x, -1, axis=-1) * y, axis=-1)


def _diameters(p: np.ndarray) -> np.ndarray:
    d = np.linalg.norm(p[:, :, None, :] - p[:, None, :, :], axis=-1)
    return d.max(axis=(1, 2))


def generate(kind: str, n: int) -> Mesh:
    """Conforming n x n structured mesh of the unit square.

    For ``kind="triangle"`` every cell is cut along its lower-left to
    upper-right diagonal.
    """
    kind = normalize_kind(kind)
    if int(n) != n or n < 1:
        raise ValueError(f"n must be a positive integer, got {n!r}")
    n = int(n)

    t = np.arange(n + 1) / n
    xx, yy = np.meshgrid(t, t)
    vertices = np.column_stack([xx.ravel(), yy.ravel()])

    j, i = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    v00 = (j * (n + 1) + i).ravel()
    v10, v01 = v00 + 1, v00 + n + 1
    v11 = v01 + 1
    if kind == "triangle":
        lower = np.column_stack([v00, v10, v11])
        upper = np.column_stack([v00, v11, v01])
        cells = np.stack([lower, upper], axis=1).reshape(-1, 3)
    else:
        cells = np.column_stack([v00, v10, v11, v01])

    nloc = cells.shape[1]
    edges = np.stack([cells, np.roll(cells, -1, axis=1)], axis=-1).reshape(-1, 2)
    edges = np.sort(edges, axis=1)
    face_vertices, inverse = np.unique(edges, axis=0, return_inverse=True)
    element_faces = inverse.reshape(-1, nloc)

    # elements visited in id order, so column 0 holds the lower element id
    face_elements = -np.ones((len(face_vertices), 2), dtype=np.int64)
    owners = np.repeat(np.arange(len(cells)), nloc)
    for face, elem in zip(inverse.ravel(), owners):
        slot = 0 if face_elements[face, 0] < 0 else 1
        face_elements[face, slot] = elem

    p = vertices[cells]
    areas = _polygon_area(p)
    diam = _diameters(p)

    mesh_normals = _outward(p)
    fv = vertices[face_vertices]
    flen = np.linalg.norm(fv[:, 1] - fv[:, 0], axis=-1)
    face_normals = np.empty((len(face_vertices), 2))
    for e in range(len(cells)):
        for f in range(nloc):
            face = element_faces[e, f]
            if face_elements[face, 0] == e:
                face_normals[face] = mesh_normals[e, f]

    elements = [
        Element(e, tuple(cells[e].tolist()), float(diam[e]), float(areas[e]), tuple(element_faces[e].tolist()))
        for e in range(len(cells))
    ]
    interfaces = [
        Interface(
            f,
            (int(face_vertices[f, 0]), int(face_vertices[f, 1])),
            float(flen[f]),
            tuple(int(x) for x in face_elements[f] if x >= 0),
            face_normals[f],
        )
        for f in range(len(face_vertices))
    ]
    return Mesh(kind, n, vertices, cells, element_faces, face_vertices, face_elements, elements, interfaces)


def _outward(p: np.ndarray) -> np.ndarray:
    t = np.roll(p, -1, axis=1) - p
    nrm = np.stack([t[..., 1], -t[..., 0]], axis=-1)
    return nrm / np.linalg.norm(nrm, axis=-1, keepdims=True)
