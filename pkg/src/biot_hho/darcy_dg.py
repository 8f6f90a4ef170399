"""Symmetric interior-penalty DG discretisation of the Darcy operator with
permeability-weighted averages (k >= 1)."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .mesh import DIRICHLET
from .space import assemble_cells


def default_penalty(k):
    # larger values over-enforce continuity of the broken pressure and slow the
    # pressure convergence on the trapezoidal family (k = 1: EOC 1.9 at eta = 24)
    return 2.0 * (k + 1) ** 2


def penalty_floor(k):
    """Below this value coercivity is not observed on the trapezoidal family."""
    return 0.5 * (k + 1) ** 2


@dataclass
class FaceCoupling:
    cells: tuple
    omega: tuple
    kappa_cells: tuple
    kappa: float
    h: float


def _face_side(space, t, f):
    j = int(np.flatnonzero(space.mesh.cell_faces[t] == f)[0])
    return space.element(t).faces[j]


def face_coupling(space, perm, f):
    mesh = space.mesh
    n = mesh.face_normal[f]
    t1, t2 = (int(t) for t in mesh.face_cells[f])
    k1 = float(np.sqrt(n @ perm[t1] @ n))
    if t2 < 0:
        return FaceCoupling((t1,), (1.0,), (k1,), k1, float(mesh.face_length[f]))
    k2 = float(np.sqrt(n @ perm[t2] @ n))
    s1, s2 = np.sqrt(k1), np.sqrt(k2)
    w1 = s2 / (s1 + s2)
    return FaceCoupling((t1, t2), (w1, 1.0 - w1), (k1, k2), min(k1, k2), float(mesh.face_length[f]))


class DarcyDG:
    """Global SIP-DG Darcy operator on the broken P^k space of ``space``.

    Interior faces get the weighted-average SIP terms; Dirichlet-p boundary faces
    get one-sided terms with omega = 1 and kappa_F = kappa_TF.
    """

    def __init__(self, space, perm, eta=None):
        if space.k < 1:
            raise ValueError("the DG Darcy discretisation requires k >= 1")
        self.space = space
        self.perm = perm
        self.eta = default_penalty(space.k) if eta is None else float(eta)
        if self.eta <= 0.0:
            raise ValueError("penalty must be positive")
        if self.eta < penalty_floor(space.k):
            warnings.warn(
                f"DG penalty eta={self.eta:g} is below the coercivity floor {penalty_floor(space.k):g}",
                RuntimeWarning,
                stacklevel=2,
            )
        mesh = space.mesh
        self.faces = [f for f in range(mesh.num_faces) if not mesh.face_is_boundary[f] or mesh.p_bc[f] == DIRICHLET]
        self.coupling = {f: face_coupling(space, perm, f) for f in self.faces}

    @property
    def size(self):
        return self.space.nk * self.space.num_cells

    def _face_tables(self, f):
        """Jump and weighted-average-flux values at face points, and the dof map."""
        S = self.space
        nk = S.nk
        c = self.coupling[f]
        n = S.mesh.face_normal[f]
        J, A, dofs = [], [], []
        for side, (t, w) in enumerate(zip(c.cells, c.omega)):
            face = _face_side(S, t, f)
            sign = 1.0 if side == 0 else -1.0
            J.append(sign * face.phi[:, :nk])
            A.append(w * face.dphi[:, :nk] @ (self.perm[t] @ n))
            dofs.append(S.p_cell_dofs(t))
        return np.hstack(J), np.hstack(A), np.concatenate(dofs), face.weights, c

    def assemble(self):
        S = self.space
        nk = S.nk
        blocks, keys = {}, []
        for t in range(S.num_cells):
            key = (S.cell_keys[t], self.perm[t].tobytes())
            if key not in blocks:
                el = S.element(t)
                Kd = el.dphi[:, :nk] @ self.perm[t]
                blocks[key] = np.einsum("q,qai,qbi->ab", el.weights, Kd, el.dphi[:, :nk])
            keys.append(key)
        n = self.size
        vol = assemble_cells(blocks, keys, S.p_cell_dofs, S.p_cell_dofs, (n, n))
        rows, cols, vals = [], [], []
        for f in self.faces:
            J, A, d, w, c = self._face_tables(f)
            JW = J.T * w
            M = self.eta * c.kappa / c.h * JW @ J - JW @ A - (JW @ A).T
            rows.append(np.repeat(d, len(d)))
            cols.append(np.tile(d, len(d)))
            vals.append(M.ravel())
        if not rows:
            return vol.tocsr()
        faces = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))
        return (vol + faces).tocsr()

    def norm_matrix(self):
        """Gram matrix of the DG norm: ||grad_h q||^2 + sum_{interior F} kappa_F/h_F ||[q]||^2."""
        S = self.space
        nk = S.nk
        blocks = {}
        for key, el in S._elements.items():
            d = el.dphi[:, :nk]
            blocks[key] = np.einsum("q,qai,qbi->ab", el.weights, d, d)
        n = self.size
        vol = assemble_cells(blocks, S.cell_keys, S.p_cell_dofs, S.p_cell_dofs, (n, n))
        rows, cols, vals = [], [], []
        for f in self.faces:
            if S.mesh.face_is_boundary[f]:
                continue
            J, _, d, w, c = self._face_tables(f)
            M = c.kappa / c.h * (J.T * w) @ J
            rows.append(np.repeat(d, len(d)))
            cols.append(np.tile(d, len(d)))
            vals.append(M.ravel())
        if not rows:
            return vol.tocsr()
        return (vol + sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))).tocsr()

    def dirichlet_load(self, pressure, t=None):
        """Right-hand side of the boundary SIP terms for Dirichlet-p faces.

        ``pressure(points)`` (or ``pressure(points, t)``) gives the boundary datum.
        """
        S = self.space
        out = np.zeros(self.size)
        for f in self.faces:
            if not S.mesh.face_is_boundary[f]:
                continue
            J, A, d, w, c = self._face_tables(f)
            face = _face_side(S, c.cells[0], f)
            x = face.points + S.mesh.cell_centroid[c.cells[0]]
            g = pressure(x) if t is None else pressure(x, t)
            out[d] += (self.eta * c.kappa / c.h * J - A).T @ (w * g)
        return out

    def dirichlet_load_operator(self):
        """Sparse map from boundary point values (face-major) to ``dirichlet_load``.

        Returns (operator, points) so time-dependent data is a single matvec.
        """
        S = self.space
        rows, cols, vals, pts = [], [], [], []
        offset = 0
        for f in self.faces:
            if not S.mesh.face_is_boundary[f]:
                continue
            J, A, d, w, c = self._face_tables(f)
            face = _face_side(S, c.cells[0], f)
            pts.append(face.points + S.mesh.cell_centroid[c.cells[0]])
            M = ((self.eta * c.kappa / c.h * J - A) * w[:, None]).T  # (ndof, nq)
            nq = len(w)
            rows.append(np.repeat(d, nq))
            cols.append(np.tile(offset + np.arange(nq), len(d)))
            vals.append(M.ravel())
            offset += nq
        if not pts:
            return sp.csr_matrix((self.size, 0)), np.zeros((0, 2))
        op = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(self.size, offset))
        return op, np.vstack(pts)


def dg_norm(q, op):
    """DG norm of the broken field with coefficients ``q``."""
    return float(np.sqrt(max(q @ (op.norm_matrix() @ q), 0.0)))


def solve_dg_projection(space, perm, flux_divergence, mean_value=0.0, eta=None, tol=1e-10):
    """Solve c_h^dg(r_h, q_h) = -(div(K grad r), q_h) with int r_h = ``mean_value``."""
    op = DarcyDG(space, perm, eta)
    A = op.assemble()
    b = -(space.cell_moments @ flux_divergence(space.cell_points))
    m = space.cell_means()
    total = abs(b @ space.project_cells(np.ones(len(space.cell_points))))
    if total > tol * max(1.0, np.abs(b).sum()):
        raise ValueError(f"incompatible Neumann datum: integral {total:.3e}")
    M = sp.bmat([[A, sp.csr_matrix(m[:, None])], [sp.csr_matrix(m[None, :]), None]], format="csc")
    sol = spla.spsolve(M, np.append(b, mean_value))
    return sol[:-1], sol[-1]
