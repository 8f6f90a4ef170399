"""Displacement-pressure coupling: discrete divergence D_h, the form b_h and
dense diagnostics (commutation with the interpolator, inf-sup and boundedness
constants on small meshes)."""

from __future__ import annotations

import numpy as np
import scipy.linalg as sla

from .mechanics import MechanicsOperators
from .mesh import DIRICHLET, INTERIOR, classify_boundary
from .space import HHOSpace

DENSE_CELL_CAP = 64


def assemble_bh(space, mech=None):
    """b_h(v, q) = -(D_h v, q) as a (NC*nk, n_u) matrix acting on cell pressure modes."""
    mech = mech if mech is not None else MechanicsOperators(space)
    return mech.assemble_bh().tocsr()


def discrete_divergence(space, v, mech=None):
    """Cellwise P^k coefficients (NC, nk) of D_h v."""
    mech = mech if mech is not None else MechanicsOperators(space)
    return (mech.assemble_divergence() @ v).reshape(space.num_cells, space.nk)


def commutation_error(space, field, mech=None):
    """max |D_h(I_h v) - pi^k(div v)| over cell coefficients, scaled by max |pi^k div v|.

    ``field`` needs ``__call__`` and ``div`` taking (n, 2) points.
    """
    v = space.interpolate_displacement(field)
    lhs = discrete_divergence(space, v, mech)
    rhs = space.project_cells(field.div(space.cell_points)).reshape(space.num_cells, space.nk)
    scale = max(1.0, float(np.abs(rhs).max()))
    return float(np.abs(lhs - rhs).max()) / scale


def _clamped(mesh):
    """Mesh whose displacement space is U_{h,0}: keep existing flags if every
    boundary face is Dirichlet-u, otherwise use the clamped/impermeable flagging."""
    if mesh.u_bc is not None and np.all(mesh.u_bc[mesh.boundary_faces] == DIRICHLET):
        return mesh
    return classify_boundary(mesh, mode="homogeneous")


def _free_dofs(space):
    return np.setdiff1d(np.arange(space.n_u), space.u_dirichlet_dofs())


def zero_mean_basis(space):
    """Orthonormal (w.r.t. the cell mass) basis of zero-mean cell pressures, as columns."""
    M = space.cell_mass().toarray()
    m = space.cell_means()
    # M-orthogonal complement of the constants: q with m.q = 0
    N = sla.null_space(m[None, :])
    G = N.T @ M @ N
    L = np.linalg.cholesky(G)
    return N @ np.linalg.inv(L).T


def coupling_singular_values(mesh, k, max_cells=DENSE_CELL_CAP):
    """Generalized singular values of b_h between the strain seminorm on U_{h,0}
    and the L2 norm on zero-mean cell pressures (dense; small meshes only)."""
    if mesh.num_cells > max_cells:
        raise ValueError(f"dense inf-sup path limited to {max_cells} cells, got {mesh.num_cells}")
    mesh = _clamped(mesh)
    space = HHOSpace(mesh, k)
    mech = MechanicsOperators(space)
    free = _free_dofs(space)
    Se = mech.assemble_seminorm().toarray()[np.ix_(free, free)]
    B = mech.assemble_bh().toarray()[:, free]
    Q = zero_mean_basis(space)
    # ||b_h(., q)||_*^2 = q^T B Se^{-1} B^T q
    Lc = np.linalg.cholesky(0.5 * (Se + Se.T))
    W = sla.solve_triangular(Lc, (Q.T @ B).T, lower=True)
    return np.linalg.svd(W, compute_uv=False)


def compute_infsup_constant(mesh, k, max_cells=DENSE_CELL_CAP):
    """Discrete inf-sup constant beta of b_h (smallest generalized singular value)."""
    return float(coupling_singular_values(mesh, k, max_cells).min())


def boundedness_constant(mesh, k, max_cells=DENSE_CELL_CAP):
    """Smallest C with |b_h(v, q)| <= C ||v||_{eps,h} ||q - mean q||_{L2}."""
    return float(coupling_singular_values(mesh, k, max_cells).max())


__all__ = [
    "assemble_bh",
    "boundedness_constant",
    "commutation_error",
    "compute_infsup_constant",
    "coupling_singular_values",
    "discrete_divergence",
    "zero_mean_basis",
    "INTERIOR",
]
