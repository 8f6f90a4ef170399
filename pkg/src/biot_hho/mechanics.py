"""HHO operators for linear elasticity: strain and displacement reconstructions,
stabilisation, jump penalisation (k = 0), a_h and the strain seminorm.

Local displacement dofs are ordered [v_T (component-major), then for each local
face i: v_F (component-major)], i.e. ``2*nk + num_faces*2*nf`` entries.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .space import assemble_cells

SQRT2 = np.sqrt(2.0)
# orthonormal basis of symmetric 2x2 tensors: xx, yy, xy
SYM_BASIS = np.array([[[1.0, 0.0], [0.0, 0.0]], [[0.0, 0.0], [0.0, 1.0]], [[0.0, 1.0], [1.0, 0.0]]])
SYM_BASIS[2] /= SQRT2


def _sym_components(grad):
    """Coefficients on SYM_BASIS of sym(grad); grad has trailing (2, 2) = d_j w_i."""
    return np.stack(
        [grad[..., 0, 0], grad[..., 1, 1], (grad[..., 0, 1] + grad[..., 1, 0]) / SQRT2], axis=-1
    )


@dataclass
class LocalMechanics:
    E: np.ndarray  # (3*nk, nloc) strain reconstruction coefficients on phi_a S_c
    R: np.ndarray  # (2*n1, nloc) displacement reconstruction coefficients
    delta: list  # per face: (2*nf, nloc) difference operator Delta_TF
    stab: np.ndarray  # sum_F h_F^-1 (Delta, Delta)_F  (unweighted)
    consistent: np.ndarray  # (E, E) Frobenius Gram and trace Gram pieces
    trace_gram: np.ndarray
    seminorm: np.ndarray  # local strain seminorm matrix (k >= 1 branch; k = 0 handled globally)
    div: np.ndarray  # (nk, nloc) coefficients of D_T = tr E_T
    B: np.ndarray  # (nk, nloc) b_T(v, q) = q^T B v

    def matrix(self, mu, lam):
        return 2.0 * mu * (self.consistent + self.stab) + lam * self.trace_gram


def cell_slices(el):
    nk, nf = el.nk, el.nf
    cell = [slice(i * nk, (i + 1) * nk) for i in range(2)]
    faces = []
    for j in range(el.num_faces):
        base = 2 * nk + 2 * nf * j
        faces.append([slice(base + i * nf, base + (i + 1) * nf) for i in range(2)])
    return cell, faces


def strain_reconstruction(el):
    """E_T: (E v, tau) = -(v_T, div tau) + sum_F (v_F, tau n_TF)_F, tau in P^k_s(T)."""
    nk, nf = el.nk, el.nf
    nloc = 2 * nk + 2 * nf * el.num_faces
    cell, faces = cell_slices(el)
    w = el.weights
    phi = el.phi[:, :nk]
    dphi = el.dphi[:, :nk, :]
    rhs = np.zeros((3, nk, nloc))
    for c in range(3):
        S = SYM_BASIS[c]
        for i in range(2):
            # (div (phi_a S))_i = sum_j S_ij d_j phi_a
            div_i = dphi @ S[i]  # (nq, nk)
            rhs[c, :, cell[i]] -= div_i.T @ (w[:, None] * phi)
            for fj, face in enumerate(el.faces):
                tn = S[i] @ face.normal
                rhs[c, :, faces[fj][i]] += tn * face.phi[:, :nk].T @ (face.weights[:, None] * face.psi)
    Mk = el.mass_k
    E = np.linalg.solve(Mk, rhs.transpose(1, 0, 2).reshape(nk, 3 * nloc))
    return E.reshape(nk, 3, nloc).transpose(1, 0, 2).reshape(3 * nk, nloc)


def _reconstruction_system(el):
    """Symmetric-gradient stiffness of P^{k+1}(T)^2 and the coupling to P^k_s(T)."""
    n1, nk = el.n1, el.nk
    w = el.weights
    # grad of w = phi_alpha e_i: d_j w_i = delta_{i i'} d_j phi_alpha
    g = np.zeros((len(w), 2, n1, 3))
    for i in range(2):
        grad = np.zeros((len(w), n1, 2, 2))
        grad[:, :, i, :] = el.dphi
        g[:, i] = _sym_components(grad)
    g = g.reshape(len(w), 2 * n1, 3)
    K = np.einsum("q,qac,qbc->ab", w, g, g)
    # G[(i,alpha), (c,a)] = int g_c(i,alpha) phi_a
    G = np.einsum("q,qac,qb->acb", w, g, el.phi[:, :nk]).reshape(2 * n1, 3 * nk)
    return K, G


def displacement_reconstruction(el, E):
    """r_T with mean-value and skew-gradient closure, via an augmented symmetric system."""
    n1, nk, nf = el.n1, el.nk, el.nf
    nloc = E.shape[1]
    cell, faces = cell_slices(el)
    K, G = _reconstruction_system(el)
    w = el.weights
    C = np.zeros((3, 2 * n1))
    crhs = np.zeros((3, nloc))
    means = el.phi.T @ w  # int phi_alpha
    for i in range(2):
        C[i, i * n1 : (i + 1) * n1] = means
        crhs[i, cell[i]] = means[:nk]
    # skew part: int (d_2 r_1 - d_1 r_2) / 2
    dm = np.einsum("q,qaj->aj", w, el.dphi)
    C[2, :n1] = 0.5 * dm[:, 1]
    C[2, n1:] = -0.5 * dm[:, 0]
    for fj, face in enumerate(el.faces):
        m = face.psi.T @ face.weights  # int psi_b
        n = face.normal
        crhs[2, faces[fj][0]] += 0.5 * n[1] * m
        crhs[2, faces[fj][1]] -= 0.5 * n[0] * m
    A = np.block([[K, C.T], [C, np.zeros((3, 3))]])
    rhs = np.vstack([G @ E, crhs])
    sol = np.linalg.solve(A, rhs)
    return sol[: 2 * n1]


def difference_operators(el, R):
    nk, nf, n1 = el.nk, el.nf, el.n1
    nloc = R.shape[1]
    cell, faces = cell_slices(el)
    out = []
    for fj, face in enumerate(el.faces):
        D = np.zeros((2 * nf, nloc))
        for i in range(2):
            Ri = R[i * n1 : (i + 1) * n1]
            rows = slice(i * nf, (i + 1) * nf)
            D[rows] = face.trace @ Ri
            D[rows, faces[fj][i]] -= np.eye(nf)
            cellpart = el.proj_k @ Ri
            cellpart[:, cell[i]] -= np.eye(nk)
            D[rows] -= face.trace[:, :nk] @ cellpart
        out.append(D)
    return out


def local_mechanics(el):
    nk, nf = el.nk, el.nf
    nloc = 2 * nk + 2 * nf * el.num_faces
    cell, faces = cell_slices(el)
    E = strain_reconstruction(el)
    R = displacement_reconstruction(el, E)
    delta = difference_operators(el, R)
    stab = np.zeros((nloc, nloc))
    for face, D in zip(el.faces, delta):
        MF2 = np.kron(np.eye(2), face.mass)
        stab += D.T @ MF2 @ D / face.h
    Mk = el.mass_k
    M3 = np.kron(np.eye(3), Mk)
    consistent = E.T @ M3 @ E
    div = E[:nk] + E[nk : 2 * nk]
    trace_gram = div.T @ Mk @ div
    B = -Mk @ div

    seminorm = np.zeros((nloc, nloc))
    if el.k >= 1:
        # ||grad_s v_T||^2 on cell dofs
        w = el.weights
        grad = np.zeros((len(w), 2 * nk, 2, 2))
        for i in range(2):
            grad[:, i * nk : (i + 1) * nk, i, :] = el.dphi[:, :nk]
        g = _sym_components(grad)
        blk = np.einsum("q,qac,qbc->ab", w, g, g)
        seminorm[: 2 * nk, : 2 * nk] += blk
        for fj, face in enumerate(el.faces):
            for i in range(2):
                J = np.zeros((nf, nloc))
                J[:, faces[fj][i]] = np.eye(nf)
                J[:, cell[i]] -= face.trace[:, :nk]
                seminorm += J.T @ face.mass @ J / face.h
    return LocalMechanics(E, R, delta, stab, consistent, trace_gram, seminorm, div, B)


def strain_field(el, E, v):
    """Point values (nq, 2, 2) of E_T v at the element assembly points."""
    nk = el.nk
    coef = (E @ v).reshape(3, nk)
    vals = el.phi[:, :nk] @ coef.T  # (nq, 3)
    return np.einsum("qc,cij->qij", vals, SYM_BASIS)


class MechanicsOperators:
    """Global mechanics operators on an HHOSpace; local blocks cached per element shape."""

    def __init__(self, space):
        self.space = space
        self.local = {key: local_mechanics(el) for key, el in space._elements.items()}

    def cell_local(self, t):
        return self.local[self.space.cell_keys[t]]

    def _assemble(self, getter, rows_fn, cols_fn, shape):
        blocks = {key: getter(L) for key, L in self.local.items()}
        return assemble_cells(blocks, self.space.cell_keys, rows_fn, cols_fn, shape)

    def assemble_ah(self, mu, lam):
        S = self.space
        n = S.n_u
        A = self._assemble(lambda L: L.matrix(mu, lam), S.u_local_dofs, S.u_local_dofs, (n, n))
        if S.k == 0:
            A = A + 2.0 * mu * self.jump_penalisation()
        return A

    def assemble_stabilisation(self, mu=1.0):
        S = self.space
        return 2.0 * mu * self._assemble(lambda L: L.stab, S.u_local_dofs, S.u_local_dofs, (S.n_u, S.n_u))

    def stabilisation_value(self, v, mu=1.0):
        """s_{mu,h}(v, v) in factored form sum 2 mu h_F^-1 ||Delta_TF v||_F^2, which keeps
        full relative accuracy when the value is near zero (no cancellation)."""
        S = self.space
        total = 0.0
        for t in range(S.num_cells):
            el, L = S.element(t), self.cell_local(t)
            vl = v[S.u_local_dofs(t)]
            for face, D in zip(el.faces, L.delta):
                d = (D @ vl).reshape(2, el.nf)
                total += sum(float(c @ face.mass @ c) for c in d) / face.h
        return 2.0 * mu * total

    def assemble_bh(self):
        """b_h as a (NC*nk, n_u) matrix: b_h(v, q) = q^T B v (cell pressure modes only)."""
        S = self.space
        return self._assemble(lambda L: L.B, S.p_cell_dofs, S.u_local_dofs, (S.nk * S.num_cells, S.n_u))

    def assemble_divergence(self):
        """D_h as a (NC*nk, n_u) matrix of P^k cell coefficients."""
        S = self.space
        return self._assemble(lambda L: L.div, S.p_cell_dofs, S.u_local_dofs, (S.nk * S.num_cells, S.n_u))

    def assemble_seminorm(self):
        S = self.space
        if S.k == 0:
            # grad_s r^1 = E^0 for k = 0, so the seminorm is a_h with 2mu = 1, lambda = 0
            return self.assemble_ah(0.5, 0.0)
        return self._assemble(lambda L: L.seminorm, S.u_local_dofs, S.u_local_dofs, (S.n_u, S.n_u))

    def jump_penalisation(self):
        """sum_F h_F^-1 ([r^1 v], [r^1 v])_F over all faces (boundary jump = trace)."""
        S = self.space
        mesh = S.mesh
        n1 = S.n1
        rows, cols, vals = [], [], []
        for f in range(mesh.num_faces):
            blocks, dofs = [], []
            for side, t in enumerate(mesh.face_cells[f]):
                if t < 0:
                    continue
                el = S.element(t)
                L = self.cell_local(t)
                j = int(np.flatnonzero(mesh.cell_faces[t] == f)[0])
                phi = el.faces[j].phi  # (nq, n1), shared global point order
                sign = 1.0 if side == 0 else -1.0
                V = np.stack([phi @ L.R[i * n1 : (i + 1) * n1] for i in range(2)], axis=1)  # (nq, 2, nloc)
                blocks.append(sign * V)
                dofs.append(S.u_local_dofs(t))
                weights = el.faces[j].weights
                h = el.faces[j].h
            V = np.concatenate(blocks, axis=2)
            d = np.concatenate(dofs)
            M = np.einsum("q,qia,qib->ab", weights, V, V) / h
            rows.append(np.repeat(d, len(d)))
            cols.append(np.tile(d, len(d)))
            vals.append(M.ravel())
        n = S.n_u
        return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))

    def bh_facewise(self):
        """Cross-check path: b_h(v, q) = -(div v_T, q_T) - sum_F (v_F - v_T, q_T n_TF)_F."""
        S = self.space
        nk, nf = S.nk, S.nf

        def local_B(el):
            cell, faces = cell_slices(el)
            nloc = 2 * nk + 2 * nf * el.num_faces
            B = np.zeros((nk, nloc))
            w = el.weights
            phi = el.phi[:, :nk]
            for i in range(2):
                B[:, cell[i]] -= phi.T @ (w[:, None] * el.dphi[:, :nk, i])
                for fj, face in enumerate(el.faces):
                    n = face.normal[i]
                    fw = face.weights[:, None]
                    B[:, faces[fj][i]] -= n * face.phi[:, :nk].T @ (fw * face.psi)
                    B[:, cell[i]] += n * face.phi[:, :nk].T @ (fw * face.phi[:, :nk])
            return B

        mats = {key: local_B(el) for key, el in S._elements.items()}
        rows, cols, vals = [], [], []
        for t in range(S.num_cells):
            r, c = S.p_cell_dofs(t), S.u_local_dofs(t)
            rows.append(np.repeat(r, len(c)))
            cols.append(np.tile(c, len(r)))
            vals.append(mats[S.cell_keys[t]].ravel())
        shape = (nk * S.num_cells, S.n_u)
        return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=shape)
