"""Polygonal meshes of the unit square, boundary flags and cellwise permeability."""

from __future__ import annotations

import copy
from pathlib import Path

import numpy as np

from .basis import cell_diameter, polygon_area_centroid

INTERIOR = 0
DIRICHLET = 1
NEUMANN = 2

MAX_DISTORTION = 0.45


def _readonly(a):
    a = np.asarray(a)
    a.setflags(write=False)
    return a


class Mesh:
    """Immutable 2D polygonal mesh.

    Faces are stored with the vertex order of their first incident cell ``T1``
    (counter-clockwise in T1), so ``face_normal`` is the unit normal pointing out
    of T1. ``cell_face_orient[T][i]`` is +1 if T is the owner of its i-th face
    and -1 otherwise; ``n_TF = orient * face_normal``. Local face ``i`` of a cell
    is its edge from vertex ``i`` to vertex ``i + 1``.
    """

    def __init__(self, vertices, cells, u_bc=None, p_bc=None):
        self.vertices = _readonly(np.asarray(vertices, dtype=float))
        self.cells = tuple(_readonly(np.asarray(c, dtype=np.int64)) for c in cells)
        self._build_topology()
        self._build_geometry()
        nf = self.num_faces
        if u_bc is None:
            u_bc = np.where(self.face_is_boundary, DIRICHLET, INTERIOR)
        if p_bc is None:
            p_bc = np.where(self.face_is_boundary, NEUMANN, INTERIOR)
        self.u_bc = _readonly(np.asarray(u_bc, dtype=np.int8).reshape(nf))
        self.p_bc = _readonly(np.asarray(p_bc, dtype=np.int8).reshape(nf))

    # ------------------------------------------------------------------ topology
    def _build_topology(self):
        lookup = {}
        faces, owners, neighbours = [], [], []
        cell_faces, cell_orient = [], []
        for t, loop in enumerate(self.cells):
            m = len(loop)
            fidx, orient = [], []
            for i in range(m):
                a, b = int(loop[i]), int(loop[(i + 1) % m])
                key = (a, b) if a < b else (b, a)
                f = lookup.get(key)
                if f is None:
                    f = len(faces)
                    lookup[key] = f
                    faces.append((a, b))
                    owners.append(t)
                    neighbours.append(-1)
                    orient.append(1)
                else:
                    if neighbours[f] != -1:
                        raise ValueError(f"face {key} shared by more than two cells")
                    if faces[f] != (b, a):
                        raise ValueError("inconsistent cell orientation (cells must be counter-clockwise)")
                    neighbours[f] = t
                    orient.append(-1)
                fidx.append(f)
            cell_faces.append(_readonly(np.array(fidx, dtype=np.int64)))
            cell_orient.append(_readonly(np.array(orient, dtype=np.int8)))
        self.faces = _readonly(np.array(faces, dtype=np.int64).reshape(-1, 2))
        self.face_cells = _readonly(np.column_stack([owners, neighbours]).astype(np.int64))
        self.cell_faces = tuple(cell_faces)
        self.cell_face_orient = tuple(cell_orient)
        self.face_is_boundary = _readonly(self.face_cells[:, 1] < 0)

    def _build_geometry(self):
        areas, centroids, diams = [], [], []
        for loop in self.cells:
            v = self.vertices[loop]
            a, c = polygon_area_centroid(v)
            if a <= 0.0:
                raise ValueError("cells must be counter-clockwise with positive area")
            areas.append(a)
            centroids.append(c)
            diams.append(cell_diameter(v))
        self.cell_area = _readonly(np.array(areas))
        self.cell_centroid = _readonly(np.array(centroids).reshape(-1, 2))
        self.cell_diameter = _readonly(np.array(diams))
        pa = self.vertices[self.faces[:, 0]]
        pb = self.vertices[self.faces[:, 1]]
        d = pb - pa
        length = np.linalg.norm(d, axis=1)
        self.face_length = _readonly(length)
        self.face_midpoint = _readonly(0.5 * (pa + pb))
        self.face_tangent = _readonly(d / length[:, None])
        self.face_normal = _readonly(np.column_stack([d[:, 1], -d[:, 0]]) / length[:, None])

    # ------------------------------------------------------------------ access
    @property
    def num_cells(self):
        return len(self.cells)

    @property
    def num_faces(self):
        return len(self.faces)

    @property
    def num_vertices(self):
        return len(self.vertices)

    @property
    def h(self):
        return float(self.cell_diameter.max())

    @property
    def face_diameter(self):
        return self.face_length

    @property
    def boundary_faces(self):
        return np.flatnonzero(self.face_is_boundary)

    @property
    def interior_faces(self):
        return np.flatnonzero(~self.face_is_boundary)

    def cell_vertices(self, t):
        return self.vertices[self.cells[t]]

    def normal(self, t, i):
        """Unit normal to the i-th face of cell ``t`` pointing out of ``t``."""
        return self.cell_face_orient[t][i] * self.face_normal[self.cell_faces[t][i]]

    def with_boundary_flags(self, u_bc, p_bc):
        other = copy.copy(self)
        other.u_bc = _readonly(np.asarray(u_bc, dtype=np.int8).copy())
        other.p_bc = _readonly(np.asarray(p_bc, dtype=np.int8).copy())
        return other

    @property
    def has_dirichlet_pressure(self):
        return bool(np.any(self.p_bc == DIRICHLET))


def build_trapezoidal_mesh(n, distortion=0.1):
    """n x n quadrilateral mesh of (0,1)^2 whose interior vertical grid lines are
    shifted alternately by +/- distortion/n in y, giving trapezoidal cells."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if not 0.0 <= distortion < MAX_DISTORTION:
        raise ValueError(f"distortion must lie in [0, {MAX_DISTORTION})")
    x = np.linspace(0.0, 1.0, n + 1)
    X, Y = np.meshgrid(x, x, indexing="ij")  # X[i, j] = x_i
    shift = np.zeros_like(X)
    for i in range(1, n):
        shift[i, 1:n] = (-1) ** i * distortion / n
    Y = Y + shift
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    def vid(i, j):
        return i * (n + 1) + j

    cells = []
    for j in range(n):
        for i in range(n):
            cells.append([vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)])
    return Mesh(vertices, cells)


def classify_boundary(mesh, split_axis_value=0.5, mode="mixed"):
    """Return a copy of ``mesh`` with boundary condition flags.

    ``mode="mixed"``: boundary faces with midpoint x1 <= split are (Dirichlet-u,
    Neumann-p), the others (Neumann-u, Dirichlet-p). ``mode="homogeneous"``:
    every boundary face is (Dirichlet-u, Neumann-p), i.e. clamped and impermeable.
    """
    bnd = mesh.face_is_boundary
    u_bc = np.full(mesh.num_faces, INTERIOR, dtype=np.int8)
    p_bc = np.full(mesh.num_faces, INTERIOR, dtype=np.int8)
    if mode == "homogeneous":
        u_bc[bnd] = DIRICHLET
        p_bc[bnd] = NEUMANN
    elif mode == "mixed":
        left = mesh.face_midpoint[:, 0] <= split_axis_value + 1e-12
        u_bc[bnd & left] = DIRICHLET
        p_bc[bnd & left] = NEUMANN
        u_bc[bnd & ~left] = NEUMANN
        p_bc[bnd & ~left] = DIRICHLET
    else:
        raise ValueError(f"unknown boundary mode {mode!r}")
    return mesh.with_boundary_flags(u_bc, p_bc)


def _inradius(p0, p1, p2):
    a = np.linalg.norm(p1 - p2)
    b = np.linalg.norm(p0 - p2)
    c = np.linalg.norm(p0 - p1)
    area = 0.5 * abs((p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]))
    return 2.0 * area / (a + b + c)


def mesh_regularity(mesh):
    """min over cells of (smallest inradius in the centroid fan of T) / h_T."""
    ratios = []
    for t, loop in enumerate(mesh.cells):
        v = mesh.vertices[loop]
        c = mesh.cell_centroid[t]
        m = len(v)
        r = min(_inradius(c, v[i], v[(i + 1) % m]) for i in range(m))
        ratios.append(r / mesh.cell_diameter[t])
    return float(min(ratios))


def save_mesh(mesh, path):
    lines = [f"polymesh2d {mesh.num_vertices} {mesh.num_cells}"]
    lines += [f"{x:.17g} {y:.17g}" for x, y in mesh.vertices]
    lines += [" ".join([str(len(c))] + [str(int(i)) for i in c]) for c in mesh.cells]
    Path(path).write_text("\n".join(lines) + "\n")


def load_mesh(path):
    tokens = Path(path).read_text().split("\n")
    header = tokens[0].split()
    if len(header) != 3 or header[0] != "polymesh2d":
        raise ValueError("not a polymesh2d file")
    nv, nc = int(header[1]), int(header[2])
    vertices = np.array([[float(s) for s in tokens[1 + i].split()] for i in range(nv)])
    cells = []
    for i in range(nc):
        row = [int(s) for s in tokens[1 + nv + i].split()]
        if row[0] != len(row) - 1:
            raise ValueError(f"malformed cell line {i}")
        cells.append(row[1:])
    return Mesh(vertices, cells)


class PermeabilityField:
    """Cellwise-constant symmetric positive definite permeability tensors."""

    def __init__(self, tensors):
        K = np.array(tensors, dtype=float).reshape(-1, 2, 2)
        if not np.allclose(K, np.swapaxes(K, 1, 2), rtol=0.0, atol=1e-14 * np.abs(K).max()):
            raise ValueError("permeability tensors must be symmetric")
        eig = np.linalg.eigvalsh(K)
        if np.any(eig[:, 0] <= 0.0):
            raise ValueError("permeability tensors must be positive definite")
        self.tensors = _readonly(K)
        self.lower = _readonly(eig[:, 0])
        self.upper = _readonly(eig[:, -1])
        self.rho_T = _readonly(self.upper / self.lower)
        self.rho = float(self.rho_T.max())

    @classmethod
    def uniform(cls, num_cells, K):
        K = np.asarray(K, dtype=float)
        if K.ndim == 0:
            K = K * np.eye(2)
        return cls(np.broadcast_to(K, (num_cells, 2, 2)))

    def __len__(self):
        return len(self.tensors)

    def __getitem__(self, t):
        return self.tensors[t]
