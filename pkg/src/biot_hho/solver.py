"""Monolithic BDF time stepping for the HHO-HHO and HHO-DG Biot schemes.

Unknown vector layout: [u (space.n_u), p (cells, then HHO faces), multiplier?].
The flow equation is multiplied by -tau/alpha_0 so the per-step matrix

    [[A,  B^T,                      0],
     [B, -(C0 M + theta C),         m],
     [0,  m^T,                      0]],   theta = tau / alpha_0,

is symmetric. Cell displacement dofs (k >= 1) and, for HHO-HHO, cell pressure
dofs are eliminated cell by cell; the face-coupled Schur complement is factorised
once and reused for every step.
"""

from __future__ import annotations

import logging
import time
from collections import deque
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .darcy_dg import DarcyDG
from .darcy_hho import DarcyHHO
from .mechanics import MechanicsOperators
from .mesh import DIRICHLET, NEUMANN, PermeabilityField
from .space import HHOSpace, block_diagonal
from .timestepping import bdf_weights

log = logging.getLogger(__name__)

SCHEMES = ("hho-hho", "hho-dg")


@dataclass
class BiotConfig:
    k: int = 1
    scheme: str = "hho-hho"
    mu: float = 1.0
    lam: float = 1.0
    c0: float = 0.0
    kappa: float = 1.0
    tau: float = 1e-3
    t_final: float = 1.0
    bdf_order: int | None = None  # None -> min(k + 1, 4)
    eta: float | None = None  # DG penalty, None -> default
    source_mode: str = "auto"  # "average", "nodal" or "auto"
    stride: int | None = None  # error sampling stride, None -> 1 for n <= 16 else 5

    def __post_init__(self):
        self.scheme = self.scheme.lower()
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}")
        if self.k < 0 or self.k > 3:
            raise ValueError("k must be in 0..3")
        if self.scheme == "hho-dg" and self.k < 1:
            raise ValueError("the HHO-DG scheme requires k >= 1")
        if self.mu <= 0.0 or self.mu + self.lam < 0.0:
            raise ValueError("need mu > 0 and 2 mu + 2 lambda >= 0")
        if self.c0 < 0.0:
            raise ValueError("C0 must be non-negative")
        if self.tau <= 0.0 or self.t_final <= 0.0:
            raise ValueError("tau and t_final must be positive")
        if self.source_mode not in ("auto", "average", "nodal"):
            raise ValueError("source_mode must be auto, average or nodal")
        if self.bdf_order is not None and self.bdf_order not in (1, 2, 3, 4):
            raise ValueError("bdf_order must be in 1..4")

    @property
    def order(self):
        return self.bdf_order if self.bdf_order is not None else min(self.k + 1, 4)

    @property
    def num_steps(self):
        return int(round(self.t_final / self.tau))

    @property
    def hybrid_pressure(self):
        return self.scheme == "hho-hho"

    @property
    def averaged_sources(self):
        if self.source_mode == "auto":
            return self.order == 1
        return self.source_mode == "average"

    def sampling_stride(self, n):
        if self.stride is not None:
            return int(self.stride)
        return 1 if n <= 16 else 5


def reported_dof_count(space, hybrid):
    """Dofs left after static condensation: face displacements (all
    displacement dofs when k = 0) plus face (HHO) or cell (DG) pressures."""
    S = space
    p = S.nf * S.num_faces if hybrid else S.nk * S.num_cells
    u = S.n_u_face if S.k >= 1 else S.n_u
    return u + p


class BiotOperators:
    """Time-independent assembled forms and dof bookkeeping for one mesh."""

    def __init__(self, config, mesh, perm=None):
        self.config = config
        self.mesh = mesh
        cfg = config
        self.perm = perm if perm is not None else PermeabilityField.uniform(mesh.num_cells, cfg.kappa)
        self.space = S = HHOSpace(mesh, cfg.k)
        self.mech = MechanicsOperators(S)
        self.A = self.mech.assemble_ah(cfg.mu, cfg.lam).tocsr()
        self.hybrid = cfg.hybrid_pressure
        if self.hybrid:
            self.darcy = DarcyHHO(S, self.perm)
        else:
            self.darcy = DarcyDG(S, self.perm, cfg.eta)
        self.C = self.darcy.assemble().tocsr()
        self.n_u = S.n_u
        self.n_p = S.n_p(self.hybrid)
        self.n_pc = S.nk * S.num_cells
        Bc = self.mech.assemble_bh()
        self.B = sp.vstack([Bc, sp.csr_matrix((self.n_p - self.n_pc, self.n_u))]).tocsr()
        Mc = S.cell_mass()
        self.M = sp.block_diag([Mc, sp.csr_matrix((self.n_p - self.n_pc, self.n_p - self.n_pc))]).tocsr()
        self.means = np.zeros(self.n_p)
        self.means[: self.n_pc] = S.cell_means()
        dirichlet_p = mesh.has_dirichlet_pressure
        self.use_multiplier = cfg.c0 == 0.0 and not dirichlet_p
        self.size = self.n_u + self.n_p + int(self.use_multiplier)

        u_dir = S.u_dirichlet_dofs()
        p_dir = self.n_u + S.p_dirichlet_dofs() if self.hybrid else np.zeros(0, dtype=int)
        self.dirichlet = np.sort(np.concatenate([u_dir, p_dir])).astype(np.int64)

        # cell-local eliminated dofs
        cells = []
        for t in range(S.num_cells):
            parts = []
            if cfg.k >= 1:
                parts.append(S.u_cell_dofs(t))
            if self.hybrid:
                parts.append(self.n_u + S.p_cell_dofs(t))
            cells.append(np.concatenate(parts) if parts else np.zeros(0, dtype=int))
        self.cell_dofs = np.array(cells, dtype=np.int64)

    # -------------------------------------------------------------- layout
    def split(self, x):
        return x[: self.n_u], x[self.n_u : self.n_u + self.n_p]

    @property
    def reported_dofs(self):
        return reported_dof_count(self.space, self.hybrid)

    def matrix(self, theta):
        c0 = self.config.c0
        flow = -(c0 * self.M + theta * self.C)
        blocks = [[self.A, self.B.T], [self.B, flow]]
        K = sp.bmat(blocks, format="csr")
        if self.use_multiplier:
            m = np.concatenate([np.zeros(self.n_u), self.means])
            col = sp.csr_matrix(m[:, None])
            K = sp.bmat([[K, col], [col.T, None]], format="csr")
        return K

    def flow_history(self, weights, history):
        """(1/alpha_0) sum_{j>=1} alpha_j (C0 M p^{n-j} - B u^{n-j}) for the flow rows."""
        c0 = self.config.c0
        out = np.zeros(self.n_p)
        for a, x in zip(weights[1:], history):
            u, p = self.split(x)
            out += a * (c0 * (self.M @ p) - self.B @ u)
        return out / weights[0]


def _with_dirichlet_identity(K, dofs):
    """Zero rows/cols of ``dofs`` and put ones on their diagonal (symmetric lifting)."""
    n = K.shape[0]
    keep = np.ones(n)
    keep[dofs] = 0.0
    D = sp.diags(keep)
    out = D @ K @ D
    diag = np.zeros(n)
    diag[dofs] = 1.0
    return (out + sp.diags(diag)).tocsr()


def _solve_accuracy(S, lu):
    b = np.random.default_rng(0).standard_normal(S.shape[0])
    x = lu.solve(b)
    if not np.all(np.isfinite(x)):
        return np.inf
    return float(np.linalg.norm(S @ x - b) / np.linalg.norm(b))


def _factorize(S, tol=1e-9):
    # symmetric mode with diagonal pivots keeps the minimum-degree ordering;
    # threshold pivoting on the small flow diagonal (small kappa) causes heavy
    # fill-in. Fall back to partial pivoting if the static pivots are inaccurate.
    S = S.tocsc()
    try:
        lu = spla.splu(S, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0, options={"SymmetricMode": True})
        if _solve_accuracy(S, lu) < tol:
            return lu
        log.info("static-pivot factorisation inaccurate, retrying with partial pivoting")
    except RuntimeError:
        pass
    return spla.splu(S)


class BiotSystem:
    """Per-step matrix for a given BDF order, statically condensed and factorised once."""

    def __init__(self, ops, order, condense=True):
        self.ops = ops
        self.order = order
        self.weights = bdf_weights(order)
        self.theta = ops.config.tau / self.weights[0]
        K = ops.matrix(self.theta)
        self.K = K
        self.KD = K[:, ops.dirichlet].tocsc()
        self.Kbc = _with_dirichlet_identity(K, ops.dirichlet)
        self.condensed = condense and ops.cell_dofs.shape[1] > 0
        t0 = time.perf_counter()
        if self.condensed:
            self._condense()
        else:
            self.S = self.Kbc
            self.lu = _factorize(self.S)
        self.factor_time = time.perf_counter() - t0

    def _condense(self):
        ops = self.ops
        n = self.Kbc.shape[0]
        cdofs = ops.cell_dofs
        ncell, nloc = cdofs.shape
        cflat = cdofs.ravel()
        mask = np.ones(n, dtype=bool)
        mask[cflat] = False
        sflat = np.flatnonzero(mask)
        Kc_rows = self.Kbc[cflat]
        Kcc = Kc_rows[:, cflat].tocoo()
        rc, cc = Kcc.row // nloc, Kcc.col // nloc
        if np.any(rc != cc):
            raise RuntimeError("eliminated dofs are coupled across cells")
        blocks = np.zeros((ncell, nloc, nloc))
        np.add.at(blocks, (rc, Kcc.row % nloc, Kcc.col % nloc), Kcc.data)
        try:
            inv = np.linalg.inv(blocks)
        except np.linalg.LinAlgError as exc:
            raise RuntimeError("singular cell block in static condensation") from exc
        self.Binv = block_diagonal(inv)
        Kcs = Kc_rows[:, sflat].tocsr()
        Ksc = self.Kbc[sflat][:, cflat].tocsr()
        Kss = self.Kbc[sflat][:, sflat].tocsr()
        self.BinvKcs = (self.Binv @ Kcs).tocsr()
        self.Ksc = Ksc
        S = (Kss - Ksc @ self.BinvKcs).tocsr()
        S.eliminate_zeros()
        self.S = S
        self.cflat, self.sflat = cflat, sflat
        self.lu = _factorize(S)

    # -------------------------------------------------------------- counts
    @property
    def num_dofs(self):
        return self.ops.reported_dofs

    @property
    def nnz(self):
        return int(self.S.nnz)

    # -------------------------------------------------------------- solves
    def lifted_rhs(self, b, xD):
        """Apply Dirichlet values ``xD`` (on ops.dirichlet) to the full right-hand side."""
        rhs = b - self.KD @ xD
        rhs[self.ops.dirichlet] = xD
        return rhs

    def solve(self, b, xD):
        rhs = self.lifted_rhs(b, xD)
        if not self.condensed:
            return self.lu.solve(rhs)
        y = self.Binv @ rhs[self.cflat]
        xs = self.lu.solve(rhs[self.sflat] - self.Ksc @ y)
        x = np.empty_like(rhs)
        x[self.sflat] = xs
        x[self.cflat] = y - self.BinvKcs @ xs
        return x

    def residual(self, x, b, xD):
        """Relative residual of the uncondensed system with lifted Dirichlet data."""
        rhs = self.lifted_rhs(b, xD)
        r = self.Kbc @ x - rhs
        return float(np.linalg.norm(r) / max(np.linalg.norm(rhs), 1e-300))


def assemble_step_system(config, mesh, perm=None, condense=True):
    ops = BiotOperators(config, mesh, perm)
    return BiotSystem(ops, config.order, condense)


# ------------------------------------------------------------------ loads
class LoadTerms:
    """Spatial load vectors of a separable problem, one per time factor.

    ``source`` terms carry f and g (possibly time-averaged); ``boundary`` terms
    carry tractions, fluxes, Dirichlet values and the mean-value target, always
    evaluated at the time nodes. Flow rows are stored unscaled; the solver
    multiplies them by -theta.
    """

    def __init__(self, ops, solution):
        self.ops = ops
        S = ops.space
        mesh = ops.mesh
        N = ops.size
        n_u = ops.n_u
        nk, nf = S.nk, S.nf
        self.source_fns, self.source_mech, self.source_flow = [], [], []
        self.bnd_fns, self.bnd_mech, self.bnd_flow, self.bnd_dir, self.bnd_mean = [], [], [], [], []
        if solution is None:
            return
        cp = S.cell_points
        for a, X in solution.f.terms:
            v = np.zeros(N)
            mom = S.cell_moments @ X(cp)  # (NC*nk, 2)
            v[: S.n_u_cell] = mom.reshape(S.num_cells, nk, 2).transpose(0, 2, 1).ravel()
            self.source_fns.append(a)
            self.source_mech.append(v)
            self.source_flow.append(np.zeros(N))
        for a, X in solution.g.terms:
            v = np.zeros(N)
            v[n_u : n_u + ops.n_pc] = S.cell_moments @ X(cp)
            self.source_fns.append(a)
            self.source_mech.append(np.zeros(N))
            self.source_flow.append(v)

        fp = S.face_points
        nq = S.face_points_per_face
        normals = np.repeat(np.asarray(mesh.face_normal), nq, axis=0)
        u_neu = np.repeat(mesh.u_bc == NEUMANN, nq)
        p_neu = np.repeat(mesh.p_bc == NEUMANN, nq)
        u_dir_faces = np.flatnonzero(mesh.u_bc == DIRICHLET)
        p_dir_faces = np.flatnonzero(mesh.p_bc == DIRICHLET)
        dirichlet = ops.dirichlet

        def empty():
            return np.zeros(N), np.zeros(N), np.zeros(len(dirichlet)), 0.0

        def udofs(faces):
            return S.u_face_dofs(faces).ravel()

        pos = {d: i for i, d in enumerate(dirichlet)}

        # displacement terms: traction, Dirichlet values
        traction = solution.traction()
        for j, (a, U) in enumerate(solution.u_terms):
            mech, flow, dvals, mean = empty()
            tr = traction[j][1](fp, normals) * u_neu[:, None]
            mom = S.face_moments @ tr  # (NF*nf, 2)
            mech[n_u - S.n_u_face : n_u] = mom.reshape(S.num_faces, nf, 2).transpose(0, 2, 1).ravel()
            if len(u_dir_faces):
                proj = S.face_projector @ U(fp)
                vals = proj.reshape(S.num_faces, nf, 2).transpose(0, 2, 1)[u_dir_faces].ravel()
                idx = [pos[d] for d in udofs(u_dir_faces)]
                dvals[idx] = vals
            self._add_boundary(a, mech, flow, dvals, mean)

        # pressure terms: traction (-p n), flux, Dirichlet values, mean value
        flux = solution.flux()
        nu = len(solution.u_terms)
        for j, (b, P) in enumerate(solution.p_terms):
            mech, flow, dvals, _ = empty()
            tr = traction[nu + j][1](fp, normals) * u_neu[:, None]
            mom = S.face_moments @ tr
            mech[n_u - S.n_u_face : n_u] = mom.reshape(S.num_faces, nf, 2).transpose(0, 2, 1).ravel()
            q = flux[j][1](fp, normals) * p_neu
            if ops.hybrid:
                flow[n_u + ops.n_pc : n_u + ops.n_p] = S.face_moments @ q
                if len(p_dir_faces):
                    proj = (S.face_projector @ P(fp)).reshape(S.num_faces, nf)[p_dir_faces].ravel()
                    idx = [pos[d] for d in n_u + S.p_face_dofs(p_dir_faces).ravel()]
                    dvals[idx] = proj
            else:
                flow[n_u : n_u + ops.n_pc] = boundary_trace_moments(S) @ q
                if len(p_dir_faces):
                    op, pts = ops.darcy.dirichlet_load_operator()
                    flow[n_u : n_u + ops.n_pc] += op @ P(pts)
            mean = float(ops.means[: ops.n_pc] @ S.project_cells(P(cp)))
            self._add_boundary(b, mech, flow, dvals, mean)

    def _add_boundary(self, a, mech, flow, dvals, mean):
        self.bnd_fns.append(a)
        self.bnd_mech.append(mech)
        self.bnd_flow.append(flow)
        self.bnd_dir.append(dvals)
        self.bnd_mean.append(mean)

    def source_coefficients(self, t0, t1, averaged, order):
        if averaged:
            s, w = np.polynomial.legendre.leggauss(order + 1)
            ts = 0.5 * (t0 + t1) + 0.5 * (t1 - t0) * s
            return np.array([0.5 * float(w @ a(ts)) for a in self.source_fns])
        return np.array([float(a(t1)) for a in self.source_fns])

    def assemble(self, t0, t1, theta, averaged, order):
        """Full right-hand side (flow rows scaled by -theta) and Dirichlet values at t1."""
        N = self.ops.size
        b = np.zeros(N)
        for c, vm, vf in zip(self.source_coefficients(t0, t1, averaged, order), self.source_mech, self.source_flow):
            b += c * vm - theta * c * vf
        xD = np.zeros(len(self.ops.dirichlet))
        mean = 0.0
        for a, vm, vf, d, m in zip(self.bnd_fns, self.bnd_mech, self.bnd_flow, self.bnd_dir, self.bnd_mean):
            c = float(a(t1))
            b += c * vm - theta * c * vf
            xD += c * d
            mean += c * m
        if self.ops.use_multiplier:
            b[-1] = mean
        return b, xD


def boundary_trace_moments(space):
    """Sparse (NC*nk, NF*nqf): boundary face point values -> int_F v phi_a(T) of the owner cell."""
    key = "boundary_trace"
    if key not in space._cache:
        mesh = space.mesh
        nq = space.face_points_per_face
        nk = space.nk
        fp, fw = space.face_points, space.face_weights
        rows, cols, vals = [], [], []
        for f in mesh.boundary_faces:
            t = int(mesh.face_cells[f, 0])
            el = space.element(t)
            sl = slice(f * nq, (f + 1) * nq)
            phi = el.basis.values(fp[sl] - mesh.cell_centroid[t])[:, :nk]
            rows.append(np.repeat(space.p_cell_dofs(t), nq))
            cols.append(np.tile(np.arange(sl.start, sl.stop), nk))
            vals.append((phi * fw[sl, None]).T.ravel())
        shape = (nk * space.num_cells, len(fw))
        if rows:
            op = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=shape)
        else:
            op = sp.csr_matrix(shape)
        space._cache[key] = op
    return space._cache[key]


# ------------------------------------------------------------------ state
@dataclass
class TimeState:
    """Ring buffer of past solutions; ``history[0]`` is step n-1."""

    history: deque
    step: int = 0
    time: float = 0.0
    order: int = 1

    @property
    def current(self):
        return self.history[0]


def interpolate_state(ops, solution, t):
    S = ops.space
    x = np.zeros(ops.size)
    x[: ops.n_u] = S.interpolate_displacement(lambda pts: solution.u(pts, t))
    x[ops.n_u : ops.n_u + ops.n_p] = S.interpolate_pressure(lambda pts: solution.p(pts, t), hybrid=ops.hybrid)
    return x


def set_initial_state(ops, solution, order):
    """History at t = 0, -tau, ..., -(order-1) tau from the exact solution (zeros if None)."""
    tau = ops.config.tau
    if solution is None:
        return TimeState(deque([np.zeros(ops.size)], maxlen=order), 0, 0.0, order)
    states = [interpolate_state(ops, solution, -j * tau) for j in range(order)]
    return TimeState(deque(states, maxlen=order), 0, 0.0, order)


def advance(state, system, loads, averaged):
    """One BDF step; the order used is min(system order, available history)."""
    ops = system.ops
    n = state.step + 1
    tau = ops.config.tau
    t1 = n * tau
    b, xD = loads.assemble(t1 - tau, t1, system.theta, averaged, system.order)
    hist = ops.flow_history(system.weights, list(state.history)[: system.order])
    b[ops.n_u : ops.n_u + ops.n_p] += hist
    x = system.solve(b, xD)
    if not np.all(np.isfinite(x)):
        raise FloatingPointError(f"non-finite solution at step {n}")
    state.history.appendleft(x)
    state.step = n
    state.time = t1
    return x, b, xD


@dataclass
class RunResult:
    state: TimeState
    ops: BiotOperators
    system: BiotSystem
    wall: float
    steps: int
    extras: dict = field(default_factory=dict)


def run(config, mesh, solution=None, perm=None, observer=None, steps=None, condense=True):
    """Integrate ``steps`` (default: all) BDF steps. ``observer(n, t, x, b, xD, system)``
    is called after every step."""
    t0 = time.perf_counter()
    ops = BiotOperators(config, mesh, perm)
    order = config.order
    averaged = config.averaged_sources
    loads = LoadTerms(ops, solution)
    state = set_initial_state(ops, solution, order)
    systems = {}

    def system_for(m):
        if m not in systems:
            systems[m] = BiotSystem(ops, m, condense)
        return systems[m]

    nsteps = config.num_steps if steps is None else steps
    for _ in range(nsteps):
        # ramp-up when the history is shorter than the requested order
        m = min(order, len(state.history))
        system = system_for(m)
        x, b, xD = advance(state, system, loads, averaged)
        if observer is not None:
            observer(state.step, state.time, x, b, xD, system)
    log.debug("run finished: %d steps", nsteps)
    return RunResult(state, ops, system_for(order), time.perf_counter() - t0, nsteps)
