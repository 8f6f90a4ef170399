"""Stability constants and the a priori energy inequality for BDF1 runs.

The inequality compares, for a run with clamped and impermeable boundaries,

    a_lo sum tau ||u^n||^2 + sum tau (C0 ||p^n||^2 + beta^2 a_lo / (2 a_hi^2) ||p^n - mean||^2)
        + gamma ||s^N||^2
    <= C1 sum tau ||f^n||_*^2 + C2 (sum tau ||G^n||^2 + t_F ||phi^0||^2)
        + C3 (sum tau ||mean G^n||^2 + t_F ||mean phi^0||^2)

with s^N = sum tau p^n, G^n = sum_{i<=n} tau g^i and phi^0 = C0 p^0 + D_h u^0.
All norms on displacements are the strain seminorm; the constants a_lo, a_hi,
beta, gamma are measured on the mesh (dense eigenproblems).
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
import scipy.linalg as sla
import scipy.sparse.linalg as spla

from .coupling import DENSE_CELL_CAP, compute_infsup_constant, zero_mean_basis
from .darcy_dg import DarcyDG
from .mechanics import MechanicsOperators
from .mesh import DIRICHLET, NEUMANN
from .solver import BiotOperators, LoadTerms, interpolate_state, run


def coercivity_constants(space, mu, lam, mech=None):
    """(a_lo, a_hi): extreme generalized eigenvalues of (a_h, strain seminorm) on U_{h,0}."""
    if space.num_cells > DENSE_CELL_CAP:
        raise ValueError(f"dense coercivity path limited to {DENSE_CELL_CAP} cells")
    mech = mech if mech is not None else MechanicsOperators(space)
    free = np.setdiff1d(np.arange(space.n_u), space.u_dirichlet_dofs())
    A = mech.assemble_ah(mu, lam).toarray()[np.ix_(free, free)]
    Se = mech.assemble_seminorm().toarray()[np.ix_(free, free)]
    ev = sla.eigh(0.5 * (A + A.T), 0.5 * (Se + Se.T), eigvals_only=True)
    return float(ev[0]), float(ev[-1])


def dg_coercivity_constant(space, perm, eta=None):
    """gamma^dg: smallest eigenvalue of c_h^dg against the DG-norm Gram matrix on zero-mean fields."""
    if space.num_cells > DENSE_CELL_CAP:
        raise ValueError(f"dense coercivity path limited to {DENSE_CELL_CAP} cells")
    op = DarcyDG(space, perm, eta)
    Q = zero_mean_basis(space)
    C = Q.T @ op.assemble().toarray() @ Q
    G = Q.T @ op.norm_matrix().toarray() @ Q
    return float(sla.eigh(0.5 * (C + C.T), 0.5 * (G + G.T), eigvals_only=True)[0])


@dataclass
class EnergyReport:
    lhs: dict
    rhs: dict
    constants: dict
    steps: int

    @property
    def lhs_total(self):
        return float(sum(self.lhs.values()))

    @property
    def rhs_total(self):
        return float(sum(self.rhs.values()))

    @property
    def holds(self):
        return self.lhs_total <= self.rhs_total * (1.0 + 1e-12) + 1e-14

    @property
    def slack(self):
        """rhs / lhs (>= 1 when the inequality holds); inf when lhs vanishes."""
        if self.lhs_total == 0.0:
            return float("inf")
        return self.rhs_total / self.lhs_total


@dataclass
class _Sums:
    u: float = 0.0
    p: float = 0.0
    p0: float = 0.0
    f: float = 0.0
    G: float = 0.0
    G0: float = 0.0
    s: np.ndarray | None = None
    Gvec: np.ndarray | None = None


def energy_diagnostic(config, mesh, solution=None, perm=None, steps=None):
    """Run BDF1 on a clamped/impermeable mesh and evaluate both sides of the energy inequality."""
    bnd = mesh.boundary_faces
    if np.any(mesh.u_bc[bnd] != DIRICHLET) or np.any(mesh.p_bc[bnd] != NEUMANN):
        raise ValueError("energy diagnostic requires clamped, impermeable boundary flags")
    if mesh.num_cells > DENSE_CELL_CAP:
        raise ValueError(f"energy diagnostic limited to {DENSE_CELL_CAP} cells")
    cfg = replace(config, bdf_order=1)
    tau, c0 = cfg.tau, cfg.c0

    sums = _Sums()

    def setup(system):
        ops = system.ops
        S = ops.space
        free = np.setdiff1d(np.arange(ops.n_u), S.u_dirichlet_dofs())
        Se = ops.mech.assemble_seminorm().tocsr()
        cache["ops"] = ops
        cache["free"] = free
        cache["Se"] = Se
        cache["Se_lu"] = spla.splu(Se[free][:, free].tocsc())
        cache["Mc"] = S.cell_mass().tocsr()
        cache["Mc_lu"] = spla.splu(cache["Mc"].tocsc())
        cache["means"] = S.cell_means()
        cache["area"] = float(np.sum(cache["means"] @ S.project_cells(np.ones(len(S.cell_points)))))
        sums.s = np.zeros(ops.n_p)
        sums.Gvec = np.zeros(ops.n_pc)

    def l2sq(q):
        return float(q @ (cache["Mc"] @ q))

    def mean_sq(q):
        return float(cache["means"] @ q) ** 2 / cache["area"]

    def observer(n, t, x, b, xD, system):
        if "ops" not in cache:
            setup(system)
        ops = cache["ops"]
        u, p = ops.split(x)
        pc = p[: ops.n_pc]
        sums.u += tau * float(u @ (cache["Se"] @ u))
        sums.p += tau * l2sq(pc)
        sums.p0 += tau * (l2sq(pc) - mean_sq(pc))
        sums.s += tau * p
        f = b[: ops.n_u][cache["free"]]
        sums.f += tau * float(f @ cache["Se_lu"].solve(f))
        # g^n as cell coefficients of pi_h g
        gmom = cache["gmom"](t)
        sums.Gvec += tau * cache["Mc_lu"].solve(gmom)
        sums.G += tau * l2sq(sums.Gvec)
        sums.G0 += tau * mean_sq(sums.Gvec)

    # source moments of g at step n, matching what the solver used
    ops_probe = BiotOperators(cfg, mesh, perm)
    loads = LoadTerms(ops_probe, solution)
    n_u, n_pc = ops_probe.n_u, ops_probe.n_pc

    def gmom(t):
        coeffs = loads.source_coefficients(t - tau, t, cfg.averaged_sources, 1)
        out = np.zeros(n_pc)
        for c, vf in zip(coeffs, loads.source_flow):
            out += c * vf[n_u : n_u + n_pc]
        for a, vf in zip(loads.bnd_fns, loads.bnd_flow):
            out += float(a(t)) * vf[n_u : n_u + n_pc]
        return out

    cache = {"gmom": gmom}
    result = run(cfg, mesh, solution, perm, observer=observer, steps=steps)
    ops = result.ops
    S = ops.space
    nsteps = result.steps
    t_final = nsteps * tau

    # initial porosity phi^0 = C0 p^0 + D_h u^0 (cell coefficients)
    x0 = _initial_vector(ops, solution)
    u0, p0 = ops.split(x0)
    Div = ops.mech.assemble_divergence()
    phi0 = c0 * p0[: ops.n_pc] + Div @ u0
    if "ops" not in cache:
        setup(result.system)

    a_lo, a_hi = coercivity_constants(S, cfg.mu, cfg.lam, ops.mech)
    beta = compute_infsup_constant(mesh, cfg.k)
    if ops.hybrid:
        gamma = 1.0
        s_norm = float(sums.s @ (ops.C @ sums.s)) if sums.s is not None else 0.0
    else:
        gamma = dg_coercivity_constant(S, ops.perm, cfg.eta)
        s_norm = float(sums.s @ (ops.darcy.norm_matrix() @ sums.s)) if sums.s is not None else 0.0

    C1 = (4 * a_hi**2 + 2 * a_lo**2) / (a_lo * a_hi**2)
    C2 = 16 * a_hi**2 / (a_lo * beta**2)
    lhs = {
        "displacement": a_lo * sums.u,
        "storage": c0 * sums.p,
        "pressure": beta**2 * a_lo / (2 * a_hi**2) * sums.p0,
        "integrated_pressure": gamma * s_norm,
    }
    rhs = {
        "load": C1 * sums.f,
        "source": C2 * (sums.G + t_final * l2sq(phi0)),
    }
    if c0 > 0.0:
        rhs["source_mean"] = 4.0 / c0 * (sums.G0 + t_final * mean_sq(phi0))
    constants = {"alpha_lo": a_lo, "alpha_hi": a_hi, "beta": beta, "gamma": gamma, "C1": C1, "C2": C2}
    if c0 > 0.0:
        constants["C3"] = 4.0 / c0
    return EnergyReport(lhs, rhs, constants, nsteps)


def _initial_vector(ops, solution):
    if solution is None:
        return np.zeros(ops.size)
    return interpolate_state(ops, solution, 0.0)
