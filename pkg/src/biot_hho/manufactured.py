"""Separable manufactured solutions of the Biot problem.

Every field is a finite sum ``sum_i a_i(t) X_i(x)``. Spatial parts are sums of
products of sin/cos in pi*x1 and pi*x2 with analytic derivatives, so loads,
tractions and fluxes are derived from (u, p) and the physical parameters rather
than typed in by hand, and the solver can precompute one spatial vector per term.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

PI = np.pi
SIN, COS = 0, 1


def _factor(kind, z, order):
    """d^order/dz^order of sin(pi z) (kind 0) or cos(pi z) (kind 1)."""
    # derivative cycles sin -> cos -> -sin -> -cos
    phase = (kind + order) % 4
    base = np.sin(PI * z) if phase % 2 == 0 else np.cos(PI * z)
    sign = -1.0 if phase >= 2 else 1.0
    return sign * PI**order * base


@dataclass(frozen=True)
class TrigScalar:
    """sum_j c_j f_j(pi x1) g_j(pi x2) with f_j, g_j in {sin, cos}."""

    terms: tuple  # ((coef, kind_x, kind_y), ...)

    def _deriv(self, x, ox, oy):
        x = np.atleast_2d(x)
        out = np.zeros(len(x))
        for c, kx, ky in self.terms:
            out += c * _factor(kx, x[:, 0], ox) * _factor(ky, x[:, 1], oy)
        return out

    def __call__(self, x):
        return self._deriv(x, 0, 0)

    def grad(self, x):
        return np.stack([self._deriv(x, 1, 0), self._deriv(x, 0, 1)], axis=-1)

    def hess(self, x):
        dxx, dxy, dyy = self._deriv(x, 2, 0), self._deriv(x, 1, 1), self._deriv(x, 0, 2)
        return np.stack([np.stack([dxx, dxy], -1), np.stack([dxy, dyy], -1)], -2)


ZERO = TrigScalar(())


@dataclass(frozen=True)
class TrigVector:
    c1: TrigScalar
    c2: TrigScalar

    def __call__(self, x):
        return np.stack([self.c1(x), self.c2(x)], axis=-1)

    def grad(self, x):
        """(n, 2, 2) with [i, j] = d_j v_i."""
        return np.stack([self.c1.grad(x), self.c2.grad(x)], axis=-2)

    def div(self, x):
        g = self.grad(x)
        return g[:, 0, 0] + g[:, 1, 1]

    def laplacian(self, x):
        return np.stack([np.trace(self.c1.hess(x), axis1=1, axis2=2), np.trace(self.c2.hess(x), axis1=1, axis2=2)], -1)

    def grad_div(self, x):
        h1, h2 = self.c1.hess(x), self.c2.hess(x)
        return h1[:, 0, :] + h2[:, 1, :]


@dataclass(frozen=True)
class TimeFn:
    """a(t) = c * (sin | cos | 1)(pi t), or c * exp(t), with its derivative."""

    coef: float
    kind: str  # "sin", "cos", "one" or "exp"

    def __call__(self, t):
        if self.kind == "one":
            return self.coef * np.ones_like(np.asarray(t, dtype=float))
        if self.kind == "exp":
            return self.coef * np.exp(t)
        return self.coef * (np.sin(PI * t) if self.kind == "sin" else np.cos(PI * t))

    def derivative(self):
        if self.kind == "one":
            return TimeFn(0.0, "one")
        if self.kind == "exp":
            return self
        if self.kind == "sin":
            return TimeFn(PI * self.coef, "cos")
        return TimeFn(-PI * self.coef, "sin")


@dataclass
class Separable:
    """sum_i a_i(t) X_i(x); X_i maps (n, 2) points to (n,) or (n, 2) values."""

    terms: list = field(default_factory=list)

    def __call__(self, x, t):
        out = None
        for a, X in self.terms:
            v = a(t) * X(x)
            out = v if out is None else out + v
        if out is None:
            raise ValueError("empty separable field")
        return out

    def coefficients(self, t):
        return np.array([float(a(t)) for a, _ in self.terms])

    def averaged_coefficients(self, t0, t1, npts):
        """(1/(t1-t0)) int_{t0}^{t1} a_i(t) dt by Gauss-Legendre with ``npts`` nodes."""
        s, w = np.polynomial.legendre.leggauss(npts)
        ts = 0.5 * (t0 + t1) + 0.5 * (t1 - t0) * s
        return np.array([0.5 * float(w @ a(ts)) for a, _ in self.terms])


class ManufacturedSolution:
    """Exact (u, p) with loads derived for given mu, lam, C0 and uniform K.

    ``u_terms``: list of (TimeFn, TrigVector); ``p_terms``: list of (TimeFn, TrigScalar).
    """

    def __init__(self, u_terms, p_terms, mu=1.0, lam=1.0, c0=0.0, K=1.0, name="custom"):
        self.u_terms = list(u_terms)
        self.p_terms = list(p_terms)
        self.mu, self.lam, self.c0 = float(mu), float(lam), float(c0)
        K = np.asarray(K, dtype=float)
        self.K = K * np.eye(2) if K.ndim == 0 else K
        self.name = name

    # exact fields
    @property
    def u(self):
        return Separable(list(self.u_terms))

    @property
    def p(self):
        return Separable(list(self.p_terms))

    def div_u(self):
        return Separable([(a, U.div) for a, U in self.u_terms])

    def stress(self, U):
        mu, lam = self.mu, self.lam

        def sigma(x):
            G = U.grad(x)
            eps = 0.5 * (G + np.swapaxes(G, 1, 2))
            tr = eps[:, 0, 0] + eps[:, 1, 1]
            return 2 * mu * eps + lam * tr[:, None, None] * np.eye(2)

        return sigma

    # loads
    @property
    def f(self):
        """f = -div sigma(grad_s u) + grad p."""
        mu, lam = self.mu, self.lam
        terms = []
        for a, U in self.u_terms:
            terms.append((a, lambda x, U=U: -mu * U.laplacian(x) - (mu + lam) * U.grad_div(x)))
        for b, P in self.p_terms:
            terms.append((b, P.grad))
        return Separable(terms)

    @property
    def g(self):
        """g = C0 dp/dt + d(div u)/dt - div(K grad p)."""
        K = self.K
        terms = []
        for b, P in self.p_terms:
            if self.c0 != 0.0:
                terms.append((b.derivative(), lambda x, P=P: self.c0 * P(x)))
            terms.append((b, lambda x, P=P: -np.einsum("ij,nij->n", K, P.hess(x))))
        for a, U in self.u_terms:
            terms.append((a.derivative(), U.div))
        return Separable(terms)

    def traction(self):
        """Separable (sigma(grad_s u) - p I) n as functions of (x, n)."""
        terms = []
        for a, U in self.u_terms:
            sig = self.stress(U)
            terms.append((a, lambda x, n, sig=sig: np.einsum("nij,nj->ni", sig(x), n)))
        for b, P in self.p_terms:
            terms.append((b, lambda x, n, P=P: -P(x)[:, None] * n))
        return terms

    def flux(self):
        """Separable K grad p . n as functions of (x, n)."""
        K = self.K
        return [(b, lambda x, n, P=P: np.einsum("ni,ij,nj->n", P.grad(x), K, n)) for b, P in self.p_terms]


def biot_benchmark(kappa=1.0, mu=1.0, lam=1.0, c0=0.0):
    """u = sin(pi t)(-cos cos, sin sin), p = -cos(pi t) sin(pi x1) cos(pi x2)."""
    U = TrigVector(TrigScalar(((-1.0, COS, COS),)), TrigScalar(((1.0, SIN, SIN),)))
    P = TrigScalar(((-1.0, SIN, COS),))
    return ManufacturedSolution(
        [(TimeFn(1.0, "sin"), U)], [(TimeFn(1.0, "cos"), P)], mu, lam, c0, kappa, name="benchmark"
    )


def homogeneous_solution(kappa=1.0, mu=1.0, lam=1.0, c0=0.0):
    """Clamped, impermeable, zero-mean solution: u = sin(pi t)(S, S) with
    S = sin(pi x1) sin(pi x2); p = cos(pi t) cos(pi x1) cos(pi x2)."""
    S = TrigScalar(((1.0, SIN, SIN),))
    P = TrigScalar(((1.0, COS, COS),))
    return ManufacturedSolution(
        [(TimeFn(1.0, "sin"), TrigVector(S, S))], [(TimeFn(1.0, "cos"), P)], mu, lam, c0, kappa, name="homogeneous"
    )


def steady_solution(kappa=1.0, mu=1.0, lam=1.0, c0=1.0):
    """Time-independent version of the benchmark fields."""
    U = TrigVector(TrigScalar(((-1.0, COS, COS),)), TrigScalar(((1.0, SIN, SIN),)))
    P = TrigScalar(((-1.0, SIN, COS),))
    return ManufacturedSolution([(TimeFn(1.0, "one"), U)], [(TimeFn(1.0, "one"), P)], mu, lam, c0, kappa, name="steady")


def exponential_solution(kappa=1.0, mu=1.0, lam=1.0, c0=0.0):
    """Benchmark spatial fields with exp(t) in time. No time derivative vanishes
    at any t, so BDF errors at the final time show the asymptotic order."""
    U = TrigVector(TrigScalar(((-1.0, COS, COS),)), TrigScalar(((1.0, SIN, SIN),)))
    P = TrigScalar(((-1.0, SIN, COS),))
    return ManufacturedSolution(
        [(TimeFn(1.0, "exp"), U)], [(TimeFn(1.0, "exp"), P)], mu, lam, c0, kappa, name="exponential"
    )


SOLUTIONS = {
    "benchmark": biot_benchmark,
    "homogeneous": homogeneous_solution,
    "steady": steady_solution,
    "exponential": exponential_solution,
}
