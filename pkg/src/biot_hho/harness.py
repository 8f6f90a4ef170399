"""Manufactured-solution convergence studies: error accumulation in the
time-accumulated norms, EOCs, dof bookkeeping and CSV output."""

from __future__ import annotations

import csv
import io
import logging
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .manufactured import biot_benchmark, homogeneous_solution
from .mesh import build_trapezoidal_mesh, classify_boundary
from .solver import BiotConfig, run

log = logging.getLogger(__name__)

CSV_HEADER = (
    "scheme", "k", "n", "dofs", "nnz",
    "err_strain", "eoc_strain", "err_l2u", "eoc_l2u", "err_p", "eoc_p", "wall_s",
)


def expected_dofs(scheme, k, n):
    """Closed-form reported dof count on the n x n family: face displacement
    dofs plus skeleton (HHO) or cell (DG) pressure dofs."""
    nf, nc = 2 * n * (n + 1), n * n
    nk = (k + 1) * (k + 2) // 2
    u = 2 * (k + 1) * nf if k >= 1 else 2 * nf + 2 * nc
    p = (k + 1) * nf if scheme == "hho-hho" else nk * nc
    return u + p


class SeparableInterpolant:
    """I_h of a separable exact solution as sum_i a_i(t) I_h X_i, precomputed per term."""

    def __init__(self, ops, solution):
        S = ops.space
        self.size = ops.size
        self.terms = []
        for a, U in solution.u_terms:
            v = np.zeros(ops.size)
            v[: ops.n_u] = S.interpolate_displacement(U)
            self.terms.append((a, v))
        for b, P in solution.p_terms:
            v = np.zeros(ops.size)
            v[ops.n_u : ops.n_u + ops.n_p] = S.interpolate_pressure(P, hybrid=ops.hybrid)
            self.terms.append((b, v))

    def __call__(self, t):
        out = np.zeros(self.size)
        for a, v in self.terms:
            out += float(a(t)) * v
        return out


class ErrorAccumulator:
    """Observer accumulating tau-weighted squared errors against node interpolates.

    Every ``stride``-th step is sampled with weight stride * tau.
    """

    def __init__(self, solution, tau, stride=1):
        self.solution = solution
        self.tau = tau
        self.stride = max(1, int(stride))
        self.sq = np.zeros(3)
        self.samples = 0
        self._ready = False

    def _setup(self, ops):
        S = ops.space
        self.ops = ops
        self.interp = SeparableInterpolant(ops, self.solution)
        self.Se = ops.mech.assemble_seminorm().tocsr()
        self.Mc = S.cell_mass().tocsr()
        self._ready = True

    def local_errors(self, x, t):
        """Squared (strain seminorm, cell L2 displacement, cell L2 pressure) errors at time t."""
        ops = self.ops
        S = ops.space
        e = x - self.interp(t)
        eu, ep = ops.split(e)
        strain = float(eu @ (self.Se @ eu))
        ec = eu[: S.n_u_cell].reshape(S.num_cells, 2, S.nk)
        l2u = sum(float(c @ (self.Mc @ c)) for c in (ec[:, 0].ravel(), ec[:, 1].ravel()))
        pc = ep[: ops.n_pc]
        l2p = float(pc @ (self.Mc @ pc))
        return np.array([strain, l2u, l2p])

    def __call__(self, n, t, x, b, xD, system):
        if not self._ready:
            self._setup(system.ops)
        if n % self.stride:
            return
        self.sq += self.stride * self.tau * self.local_errors(x, t)
        self.samples += 1

    @property
    def errors(self):
        return np.sqrt(self.sq)


def evaluate_errors(config, mesh, solution, perm=None, stride=1, steps=None):
    """Run and return ((err_strain, err_l2u, err_p), RunResult)."""
    acc = ErrorAccumulator(solution, config.tau, stride)
    result = run(config, mesh, solution, perm, observer=acc, steps=steps)
    return acc.errors, result


@dataclass
class StudyRow:
    scheme: str
    k: int
    n: int
    dofs: int
    nnz: int
    err_strain: float
    err_l2u: float
    err_p: float
    wall_s: float = float("nan")


def _rounded(x):
    return float(f"{x:.3e}")


def _eoc(prev, cur):
    if prev is None or prev <= 0.0 or cur <= 0.0:
        return None
    return math.log2(_rounded(prev) / _rounded(cur))


@dataclass
class ConvergenceReport:
    rows: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def eocs(self, name):
        """EOC column for ``name`` in {'strain', 'l2u', 'p'}; first entry None.

        Computed from the errors rounded to 4 significant digits, so the CSV
        columns are consistent with each other.
        """
        out, prev = [], None
        for r in self.rows:
            cur = getattr(r, f"err_{name}")
            out.append(_eoc(prev, cur))
            prev = cur
        return out

    def records(self):
        cols = {name: self.eocs(name) for name in ("strain", "l2u", "p")}
        for i, r in enumerate(self.rows):
            yield r, {name: cols[name][i] for name in cols}


def _fmt_eoc(v):
    return "" if v is None else f"{v:.4f}"


def report_csv_text(report, timing=True):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r, e in report.records():
        wall = f"{r.wall_s:.2f}" if timing and not math.isnan(r.wall_s) else ""
        w.writerow([
            r.scheme, r.k, r.n, r.dofs, r.nnz,
            f"{r.err_strain:.3e}", _fmt_eoc(e["strain"]),
            f"{r.err_l2u:.3e}", _fmt_eoc(e["l2u"]),
            f"{r.err_p:.3e}", _fmt_eoc(e["p"]),
            wall,
        ])
    return buf.getvalue()


def emit_csv(report, path, timing=True):
    text = report_csv_text(report, timing)
    with open(path, "w", newline="") as fh:
        fh.write(text)
    return text


def study_solution(bc, kappa, mu=1.0, lam=1.0, c0=0.0):
    if bc == "homogeneous":
        return homogeneous_solution(kappa, mu, lam, c0)
    return biot_benchmark(kappa, mu, lam, c0)


def run_convergence_study(scheme, k, ns, config=None, distortion=0.1, bc="mixed", steps=None, solution=None):
    """One row per mesh size in ``ns``; ``config`` fields other than scheme/k are reused."""
    base = config if config is not None else BiotConfig()
    cfg = replace(base, scheme=scheme, k=k)
    sol = solution if solution is not None else study_solution(bc, cfg.kappa, cfg.mu, cfg.lam, cfg.c0)
    report = ConvergenceReport(metadata={
        "scheme": cfg.scheme, "k": k, "kappa": cfg.kappa, "tau": cfg.tau, "t_final": cfg.t_final,
        "bdf_order": cfg.order, "distortion": distortion, "bc": bc,
    })
    for n in ns:
        t0 = time.perf_counter()
        mesh = classify_boundary(build_trapezoidal_mesh(n, distortion), mode=bc)
        try:
            errs, result = evaluate_errors(cfg, mesh, sol, stride=cfg.sampling_stride(n), steps=steps)
        except Exception as exc:
            raise RuntimeError(f"study row failed (scheme={cfg.scheme}, k={k}, n={n}): {exc}") from exc
        row = StudyRow(
            cfg.scheme, k, n, result.system.num_dofs, result.system.nnz,
            float(errs[0]), float(errs[1]), float(errs[2]), time.perf_counter() - t0,
        )
        log.info("%s k=%d n=%d dofs=%d errors=%s (%.1fs)", cfg.scheme, k, n, row.dofs, errs, row.wall_s)
        report.rows.append(row)
    return report
