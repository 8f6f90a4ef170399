"""Per-cell quadrature/basis tables and global dof layout shared by all operators.

Local operators depend only on a cell's shape relative to its centroid and on the
orientation of its faces, so cells are grouped by that key and each distinct shape
is tabulated once. On the trapezoidal family this reduces thousands of cells to a
handful of distinct elements.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .basis import (
    CellBasis,
    _orthonormal_transform,
    cell_quadrature,
    face_basis,
    face_quadrature,
    poly_dim,
)


@dataclass
class LocalFace:
    normal: np.ndarray  # n_TF
    h: float
    points: np.ndarray  # relative to the cell centroid, ordered along the global face
    weights: np.ndarray
    psi: np.ndarray  # (nq, nf) face basis
    phi: np.ndarray  # (nq, n1) cell basis traces
    dphi: np.ndarray  # (nq, n1, 2)
    mass: np.ndarray  # (nf, nf)
    trace: np.ndarray  # (nf, n1): face L2 projection of cell basis traces


def load_exactness(k):
    """Quadrature exactness for non-polynomial data (loads, interpolation)."""
    return max(2 * (k + 3), 12)


class LocalElement:
    """Quadrature and basis tables of one cell shape, in centroid-relative coordinates.

    The cell basis has degree k+1; its first ``nk`` functions span P^k(T).
    """

    def __init__(self, rel_vertices, orient, k, orthonormal=True):
        self.k = k
        self.vertices = np.asarray(rel_vertices, dtype=float)
        self.orient = tuple(int(o) for o in orient)
        self.nk = poly_dim(k)
        self.n1 = poly_dim(k + 1)
        self.nf = k + 1
        self.num_faces = len(self.vertices)
        self.orthonormal = orthonormal

        v = self.vertices
        d = v[:, None, :] - v[None, :, :]
        self.h = float(np.sqrt((d**2).sum(-1)).max())
        rule = cell_quadrature(v, 2 * (k + 2))
        self.area = float(rule.weights.sum())
        basis = CellBasis(k + 1, np.zeros(2), self.h)
        if orthonormal:
            basis.transform = _orthonormal_transform(basis.values(rule.points), rule.weights)
        self.basis = basis
        self.points = rule.points
        self.weights = rule.weights
        self.phi = basis.values(rule.points)
        self.dphi = basis.gradients(rule.points)
        self.mass = self.phi.T @ (self.weights[:, None] * self.phi)
        nk = self.nk
        self.proj_k = np.linalg.solve(self.mass[:nk, :nk], self.mass[:nk, :])

        lrule = cell_quadrature(v, load_exactness(k))
        self.load_points = lrule.points
        self.load_weights = lrule.weights
        self.load_phi = basis.values(lrule.points)[:, :nk]

        self.faces = []
        m = self.num_faces
        for i in range(m):
            p, q = v[i], v[(i + 1) % m]
            a, b = (p, q) if self.orient[i] > 0 else (q, p)
            frule = face_quadrature(a, b, 2 * (k + 2))
            fb = face_basis(a, b, k, orthonormal)
            psi = fb.values(frule.points)
            phi = basis.values(frule.points)
            dphi = basis.gradients(frule.points)
            fmass = psi.T @ (frule.weights[:, None] * psi)
            trace = np.linalg.solve(fmass, psi.T @ (frule.weights[:, None] * phi))
            t = q - p
            length = float(np.linalg.norm(t))
            normal = np.array([t[1], -t[0]]) / length
            self.faces.append(LocalFace(normal, length, frule.points, frule.weights, psi, phi, dphi, fmass, trace))

    @property
    def mass_k(self):
        return self.mass[: self.nk, : self.nk]


def _shape_key(rel, orient):
    scale = np.abs(rel).max()
    return (len(rel), tuple(np.round(rel.ravel() / scale, 11)), float(np.round(scale, 13)), tuple(orient))


class HHOSpace:
    """Degree-k hybrid space on a mesh: element tables, dof numbering, projections.

    Displacement numbering: cell blocks ``T*2nk + c*nk + a`` (component c, mode a),
    then face blocks ``2nk*NC + F*2nf + c*nf + a``.
    Pressure numbering: cell blocks ``T*nk + a``, then (HHO only) face blocks
    ``nk*NC + F*nf + a``.
    """

    def __init__(self, mesh, k, orthonormal=True):
        if k < 0:
            raise ValueError("polynomial degree must be >= 0")
        self.mesh = mesh
        self.k = k
        self.orthonormal = orthonormal
        self.nk = poly_dim(k)
        self.n1 = poly_dim(k + 1)
        self.nf = k + 1
        self._elements = {}
        keys = []
        for t in range(mesh.num_cells):
            rel = mesh.cell_vertices(t) - mesh.cell_centroid[t]
            orient = mesh.cell_face_orient[t]
            key = _shape_key(rel, orient)
            if key not in self._elements:
                self._elements[key] = LocalElement(rel, orient, k, orthonormal)
            keys.append(key)
        self.cell_keys = keys
        self._cache = {}

    # ---------------------------------------------------------------- elements
    def element(self, t):
        return self._elements[self.cell_keys[t]]

    @property
    def num_distinct_elements(self):
        return len(self._elements)

    def groups(self):
        """Map element key -> array of cells sharing it."""
        out = {}
        for t, key in enumerate(self.cell_keys):
            out.setdefault(key, []).append(t)
        return {key: np.array(cells) for key, cells in out.items()}

    # ---------------------------------------------------------------- dof layout
    @property
    def num_cells(self):
        return self.mesh.num_cells

    @property
    def num_faces(self):
        return self.mesh.num_faces

    @property
    def n_u_cell(self):
        return 2 * self.nk * self.num_cells

    @property
    def n_u_face(self):
        return 2 * self.nf * self.num_faces

    @property
    def n_u(self):
        return self.n_u_cell + self.n_u_face

    def n_p(self, hybrid):
        return self.nk * self.num_cells + (self.nf * self.num_faces if hybrid else 0)

    def u_cell_dofs(self, t):
        return 2 * self.nk * t + np.arange(2 * self.nk)

    def u_face_dofs(self, f):
        return self.n_u_cell + 2 * self.nf * np.asarray(f)[..., None] + np.arange(2 * self.nf)

    def u_local_dofs(self, t):
        faces = self.mesh.cell_faces[t]
        return np.concatenate([self.u_cell_dofs(t), self.u_face_dofs(faces).ravel()])

    def p_cell_dofs(self, t):
        return self.nk * t + np.arange(self.nk)

    def p_face_dofs(self, f):
        return self.nk * self.num_cells + self.nf * np.asarray(f)[..., None] + np.arange(self.nf)

    def p_local_dofs(self, t):
        faces = self.mesh.cell_faces[t]
        return np.concatenate([self.p_cell_dofs(t), self.p_face_dofs(faces).ravel()])

    def u_dirichlet_dofs(self):
        from .mesh import DIRICHLET

        faces = np.flatnonzero(self.mesh.u_bc == DIRICHLET)
        return self.u_face_dofs(faces).ravel()

    def p_dirichlet_dofs(self):
        from .mesh import DIRICHLET

        faces = np.flatnonzero(self.mesh.p_bc == DIRICHLET)
        return self.p_face_dofs(faces).ravel()

    # ---------------------------------------------------------------- quadrature
    def _cell_tables(self):
        if "cell" not in self._cache:
            pts, wts, rows, cols, vals, proj = [], [], [], [], [], []
            offset = 0
            nk = self.nk
            for t in range(self.num_cells):
                el = self.element(t)
                nq = len(el.load_weights)
                pts.append(el.load_points + self.mesh.cell_centroid[t])
                wts.append(el.load_weights)
                mom = (el.load_phi * el.load_weights[:, None]).T  # (nk, nq)
                rows.append(np.repeat(t * nk + np.arange(nk), nq))
                cols.append(np.tile(offset + np.arange(nq), nk))
                vals.append(mom.ravel())
                proj.append(np.linalg.solve(el.mass_k, mom).ravel())
                offset += nq
            rows, cols = np.concatenate(rows), np.concatenate(cols)
            shape = (nk * self.num_cells, offset)
            self._cache["cell"] = (
                np.vstack(pts),
                np.concatenate(wts),
                sp.csr_matrix((np.concatenate(vals), (rows, cols)), shape=shape),
                sp.csr_matrix((np.concatenate(proj), (rows, cols)), shape=shape),
            )
        return self._cache["cell"]

    @property
    def cell_points(self):
        return self._cell_tables()[0]

    @property
    def cell_weights(self):
        return self._cell_tables()[1]

    @property
    def cell_moments(self):
        """Sparse (NC*nk, Nq): point values -> (f, phi_a)_T."""
        return self._cell_tables()[2]

    @property
    def cell_projector(self):
        """Sparse (NC*nk, Nq): point values -> coefficients of pi_T^k f."""
        return self._cell_tables()[3]

    def face_bases(self):
        if "face_bases" not in self._cache:
            m = self.mesh
            self._cache["face_bases"] = [
                face_basis(m.vertices[a], m.vertices[b], self.k, self.orthonormal) for a, b in m.faces
            ]
        return self._cache["face_bases"]

    def _face_tables(self):
        if "face" not in self._cache:
            m = self.mesh
            nf = self.nf
            pts, wts, rows, cols, vals, proj = [], [], [], [], [], []
            offset = 0
            for f, (a, b) in enumerate(m.faces):
                rule = face_quadrature(m.vertices[a], m.vertices[b], load_exactness(self.k))
                psi = self.face_bases()[f].values(rule.points)
                nq = len(rule.weights)
                mom = (psi * rule.weights[:, None]).T
                fmass = psi.T @ (rule.weights[:, None] * psi)
                pts.append(rule.points)
                wts.append(rule.weights)
                rows.append(np.repeat(f * nf + np.arange(nf), nq))
                cols.append(np.tile(offset + np.arange(nq), nf))
                vals.append(mom.ravel())
                proj.append(np.linalg.solve(fmass, mom).ravel())
                offset += nq
            rows, cols = np.concatenate(rows), np.concatenate(cols)
            shape = (nf * m.num_faces, offset)
            self._cache["face"] = (
                np.vstack(pts),
                np.concatenate(wts),
                sp.csr_matrix((np.concatenate(vals), (rows, cols)), shape=shape),
                sp.csr_matrix((np.concatenate(proj), (rows, cols)), shape=shape),
                offset // m.num_faces,
            )
        return self._cache["face"]

    @property
    def face_points(self):
        """(NF*nqf, 2) quadrature points, face-major; ``face_points_per_face`` per face."""
        return self._face_tables()[0]

    @property
    def face_weights(self):
        return self._face_tables()[1]

    @property
    def face_moments(self):
        return self._face_tables()[2]

    @property
    def face_projector(self):
        return self._face_tables()[3]

    @property
    def face_points_per_face(self):
        return self._face_tables()[4]

    def cell_mass(self):
        """Block-diagonal (NC*nk)^2 mass matrix of the broken P^k space."""
        if "cell_mass" not in self._cache:
            blocks = np.stack([self.element(t).mass_k for t in range(self.num_cells)])
            self._cache["cell_mass"] = block_diagonal(blocks)
        return self._cache["cell_mass"]

    def cell_means(self):
        """Vector m with m . q = integral over Omega of the broken polynomial q."""
        if "cell_means" not in self._cache:
            out = np.zeros(self.nk * self.num_cells)
            for t in range(self.num_cells):
                el = self.element(t)
                out[self.p_cell_dofs(t)] = el.phi[:, : self.nk].T @ el.weights
            self._cache["cell_means"] = out
        return self._cache["cell_means"]

    # ---------------------------------------------------------------- interpolation
    def project_cells(self, values):
        """pi_h^k of point values on ``cell_points``; returns (NC*nk,) or (NC*nk, m)."""
        return self.cell_projector @ values

    def project_faces(self, values):
        return self.face_projector @ values

    def interpolate_displacement(self, fun):
        """I_h^k v with ``fun(points) -> (npts, 2)``."""
        vc = self.project_cells(fun(self.cell_points))  # (NC*nk, 2)
        vf = self.project_faces(fun(self.face_points))  # (NF*nf, 2)
        nk, nf = self.nk, self.nf
        cells = vc.reshape(self.num_cells, nk, 2).transpose(0, 2, 1).ravel()
        faces = vf.reshape(self.num_faces, nf, 2).transpose(0, 2, 1).ravel()
        return np.concatenate([cells, faces])

    def interpolate_pressure(self, fun, hybrid=True):
        """Cell (and face, if ``hybrid``) L2 projections of ``fun(points) -> (npts,)``."""
        pc = self.project_cells(fun(self.cell_points))
        if not hybrid:
            return pc
        return np.concatenate([pc, self.project_faces(fun(self.face_points))])

    def cell_field_values(self, coeffs, points_per_cell=None):
        """Evaluate a broken P^k field (NC*nk coefficients) at the load quadrature points."""
        return self.cell_moments_transpose_values() @ coeffs

    def cell_moments_transpose_values(self):
        """Sparse (Nq, NC*nk) evaluation of cell basis functions at ``cell_points``."""
        if "cell_eval" not in self._cache:
            mom = self.cell_moments.tocoo()
            w = self.cell_weights[mom.col]
            self._cache["cell_eval"] = sp.csr_matrix(
                (mom.data / w, (mom.col, mom.row)), shape=(mom.shape[1], mom.shape[0])
            )
        return self._cache["cell_eval"]


def block_diagonal(blocks):
    """Sparse block-diagonal matrix from a (n, b, b) array."""
    blocks = np.asarray(blocks)
    n, b, _ = blocks.shape
    return sp.bsr_matrix((blocks, np.arange(n), np.arange(n + 1)), shape=(n * b, n * b)).tocsr()


def assemble(local_matrices, row_maps, col_maps, shape):
    """Sum local dense blocks into a sparse matrix; maps are lists of index arrays."""
    rows, cols, vals = [], [], []
    for A, r, c in zip(local_matrices, row_maps, col_maps):
        rows.append(np.repeat(r, len(c)))
        cols.append(np.tile(c, len(r)))
        vals.append(np.asarray(A).ravel())
    if not rows:
        return sp.csr_matrix(shape)
    return sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=shape
    )


def assemble_vector(local_vectors, maps, size):
    out = np.zeros(size)
    for v, r in zip(local_vectors, maps):
        np.add.at(out, r, v)
    return out


def assemble_cells(blocks, keys, rows_fn, cols_fn, shape):
    """Assemble per-cell dense blocks shared by cells with equal keys.

    ``blocks`` maps key -> dense block, ``keys[t]`` is the key of cell t and
    ``rows_fn(t)``/``cols_fn(t)`` give the global indices of cell t.
    """
    groups = {}
    for t, key in enumerate(keys):
        groups.setdefault(key, []).append(t)
    rows, cols, vals = [], [], []
    for key, cells in groups.items():
        A = np.asarray(blocks[key])
        r = np.stack([rows_fn(t) for t in cells])
        c = np.stack([cols_fn(t) for t in cells])
        rows.append(np.repeat(r, c.shape[1], axis=1).ravel())
        cols.append(np.tile(c, (1, r.shape[1])).ravel())
        vals.append(np.broadcast_to(A.ravel(), (len(cells), A.size)).ravel())
    return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=shape)


def broken_l2_error(space, coeffs, fun):
    """||q_h - fun||_{L2} for a broken P^k field (NC*nk coefficients, or (.., 2) for vectors)."""
    vals = space.cell_moments_transpose_values() @ coeffs
    diff = vals - fun(space.cell_points)
    if diff.ndim > 1:
        diff = (diff**2).sum(axis=1)
    else:
        diff = diff**2
    return float(np.sqrt(space.cell_weights @ diff))
