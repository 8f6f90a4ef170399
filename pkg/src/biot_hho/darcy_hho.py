"""HHO discretisation of the Darcy operator on hybrid (cell + face) pressure unknowns.

Local pressure dofs are ordered [q_T, q_F for each local face].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .space import assemble_cells


@dataclass
class LocalDarcyHHO:
    P: np.ndarray  # (n1, nloc) coefficients of the pressure reconstruction p_T
    delta: list  # per face: (nf, nloc)
    consistent: np.ndarray  # (K grad p_T, grad p_T)
    stab: np.ndarray  # sum_F kappa_TF / h_F (Delta, Delta)_F
    kappa: np.ndarray  # kappa_TF = K n.n per local face

    @property
    def matrix(self):
        return self.consistent + self.stab


def local_darcy_hho(el, K):
    K = np.asarray(K, dtype=float)
    nk, nf, n1 = el.nk, el.nf, el.n1
    m = el.num_faces
    nloc = nk + nf * m
    w = el.weights
    Kd = el.dphi @ K  # (nq, n1, 2), K symmetric
    S = np.einsum("q,qai,qbi->ab", w, Kd, el.dphi)
    rhs = np.zeros((n1, nloc))
    rhs[:, :nk] = S[:, :nk]
    for j, face in enumerate(el.faces):
        flux = face.dphi @ (K @ face.normal)  # (nq, n1): K grad r . n
        fw = face.weights[:, None]
        rhs[:, nk + j * nf : nk + (j + 1) * nf] += flux.T @ (fw * face.psi)
        rhs[:, :nk] -= flux.T @ (fw * face.phi[:, :nk])
    means = el.phi.T @ w
    A = np.zeros((n1 + 1, n1 + 1))
    A[:n1, :n1] = S
    A[n1, :n1] = A[:n1, n1] = means
    b = np.vstack([rhs, np.zeros((1, nloc))])
    b[n1, :nk] = means[:nk]
    P = np.linalg.solve(A, b)[:n1]

    delta, kappa = [], []
    stab = np.zeros((nloc, nloc))
    cellpart = el.proj_k @ P
    cellpart[:, :nk] -= np.eye(nk)
    for j, face in enumerate(el.faces):
        D = face.trace @ P - face.trace[:, :nk] @ cellpart
        D[:, nk + j * nf : nk + (j + 1) * nf] -= np.eye(nf)
        kap = float(face.normal @ K @ face.normal)
        stab += kap / face.h * D.T @ face.mass @ D
        delta.append(D)
        kappa.append(kap)
    consistent = P.T @ S @ P
    return LocalDarcyHHO(P, delta, consistent, stab, np.array(kappa))


class DarcyHHO:
    """Global HHO Darcy operator c_h^hho on ``space`` with cellwise permeability ``perm``."""

    def __init__(self, space, perm):
        self.space = space
        self.perm = perm
        self.keys = [(space.cell_keys[t], perm[t].tobytes()) for t in range(space.num_cells)]
        self.local = {}
        for t, key in enumerate(self.keys):
            if key not in self.local:
                self.local[key] = local_darcy_hho(space.element(t), perm[t])

    def cell_local(self, t):
        return self.local[self.keys[t]]

    @property
    def size(self):
        return self.space.n_p(hybrid=True)

    def _assemble(self, getter):
        S = self.space
        blocks = {key: getter(L) for key, L in self.local.items()}
        n = self.size
        return assemble_cells(blocks, self.keys, S.p_local_dofs, S.p_local_dofs, (n, n))

    def assemble(self):
        return self._assemble(lambda L: L.matrix)

    def assemble_stabilisation(self):
        return self._assemble(lambda L: L.stab)

    def stabilisation_value(self, q):
        """s_{K,h}(q, q) in factored form sum kappa_TF h_F^-1 ||Delta_TF q||_F^2."""
        S = self.space
        total = 0.0
        for t in range(S.num_cells):
            el, L = S.element(t), self.cell_local(t)
            ql = q[S.p_local_dofs(t)]
            for face, D, kap in zip(el.faces, L.delta, L.kappa):
                d = D @ ql
                total += kap * float(d @ face.mass @ d) / face.h
        return total

    def mean_vector(self):
        """Row vector m with m . q = integral of the broken cell field q_h."""
        out = np.zeros(self.size)
        out[: self.space.nk * self.space.num_cells] = self.space.cell_means()
        return out

    def reconstruct(self, q):
        """Cellwise P^{k+1} coefficients (NC, n1) of p_h q."""
        S = self.space
        return np.stack([self.cell_local(t).P @ q[S.p_local_dofs(t)] for t in range(S.num_cells)])


def solve_hho_projection(space, perm, flux_divergence, mean_value=0.0, tol=1e-10):
    """Solve c_h(r_h, q_h) = -(div(K grad r), q_h) with int r_h = ``mean_value``.

    ``flux_divergence(points)`` returns div(K grad r). Returns (hybrid dofs, multiplier).
    """
    op = DarcyHHO(space, perm)
    A = op.assemble()
    nc = space.nk * space.num_cells
    b = np.zeros(op.size)
    b[:nc] = -(space.cell_moments @ flux_divergence(space.cell_points))
    # compatibility: the datum must integrate to zero against constants
    const = space.interpolate_pressure(lambda x: np.ones(len(x)), hybrid=True)
    total = abs(b @ const)
    if total > tol * max(1.0, np.abs(b).sum()):
        raise ValueError(f"incompatible Neumann datum: integral {total:.3e}")
    m = op.mean_vector()
    M = sp.bmat([[A, sp.csr_matrix(m[:, None])], [sp.csr_matrix(m[None, :]), None]], format="csc")
    sol = spla.spsolve(M, np.append(b, mean_value))
    return sol[:-1], sol[-1]
