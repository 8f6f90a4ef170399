"""Quadrature rules, scaled polynomial bases and L2 projections on polygons and faces."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray  # (nq, 2)
    weights: np.ndarray  # (nq,)
    exactness: int

    def integrate(self, values):
        return np.tensordot(self.weights, values, axes=(0, 0))


def _npoints(exactness):
    return max(1, (exactness + 2) // 2)


@lru_cache(maxsize=None)
def _gauss_legendre_01(npts):
    x, w = np.polynomial.legendre.leggauss(npts)
    return 0.5 * (x + 1.0), 0.5 * w


@lru_cache(maxsize=None)
def reference_triangle_rule(exactness):
    """Collapsed (Duffy) Gauss rule on the triangle (0,0), (1,0), (0,1).

    Gauss-Jacobi(1, 0) in the collapsed direction absorbs the Jacobian, so
    ``q`` points per direction integrate total degree ``2q - 1`` exactly.
    """
    q = _npoints(exactness)
    xj, wj = roots_jacobi(q, 1.0, 0.0)
    u = 0.5 * (xj + 1.0)
    wu = 0.25 * wj
    v, wv = _gauss_legendre_01(q)
    U, V = np.meshgrid(u, v, indexing="ij")
    W = np.outer(wu, wv)
    pts = np.column_stack([U.ravel(), (V * (1.0 - U)).ravel()])
    return pts, W.ravel()


def polygon_area_centroid(vertices):
    x, y = vertices[:, 0], vertices[:, 1]
    xs, ys = np.roll(x, -1), np.roll(y, -1)
    cross = x * ys - xs * y
    area = 0.5 * cross.sum()
    if abs(area) < 1e-300:
        raise ValueError("degenerate (zero-area) polygon")
    cx = ((x + xs) * cross).sum() / (6.0 * area)
    cy = ((y + ys) * cross).sum() / (6.0 * area)
    return area, np.array([cx, cy])


def cell_quadrature(vertices, exactness):
    """Quadrature on a star-shaped polygon by fan triangulation from its centroid."""
    vertices = np.asarray(vertices, dtype=float)
    area, c = polygon_area_centroid(vertices)
    if area <= 0.0:
        raise ValueError("cell vertices must be counter-clockwise with positive area")
    ref_pts, ref_w = reference_triangle_rule(exactness)
    pts, wts = [], []
    m = len(vertices)
    for i in range(m):
        a, b = vertices[i], vertices[(i + 1) % m]
        J = np.column_stack([a - c, b - c])
        det = np.linalg.det(J)
        if det <= 0.0:
            raise ValueError("cell is not star-shaped with respect to its centroid")
        pts.append(c + ref_pts @ J.T)
        wts.append(ref_w * det)
    return QuadratureRule(np.vstack(pts), np.concatenate(wts), exactness)


def face_quadrature(a, b, exactness):
    """Gauss-Legendre rule on the segment from ``a`` to ``b`` (points ordered a -> b)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    s, w = _gauss_legendre_01(_npoints(exactness))
    length = np.linalg.norm(b - a)
    return QuadratureRule(a + np.outer(s, b - a), w * length, exactness)


@lru_cache(maxsize=None)
def monomial_exponents(degree):
    """Exponents (a, b) of x^a y^b, ordered by total degree then by decreasing a."""
    return tuple((d - j, j) for d in range(degree + 1) for j in range(d + 1))


def poly_dim(degree, d=2):
    if degree < 0:
        return 0
    return (degree + 1) * (degree + 2) // 2 if d == 2 else degree + 1


def _powers(z, degree):
    out = np.ones((degree + 1,) + z.shape)
    for i in range(1, degree + 1):
        out[i] = out[i - 1] * z
    return out


class CellBasis:
    """Monomials in ((x - x_T)/h_T), optionally orthonormalised in L2(T).

    The orthonormalisation is a Cholesky factor of the monomial Gram matrix, which
    keeps the basis hierarchical: the first ``poly_dim(l)`` functions span P^l(T).
    """

    def __init__(self, degree, center, h, transform=None):
        self.degree = degree
        self.center = np.asarray(center, dtype=float)
        self.h = float(h)
        self.exponents = monomial_exponents(degree)
        self.dim = len(self.exponents)
        self.transform = transform
        ab = np.array(self.exponents)
        self._a, self._b = ab[:, 0], ab[:, 1]

    def _scaled(self, x):
        x = np.atleast_2d(x)
        return (x[:, 0] - self.center[0]) / self.h, (x[:, 1] - self.center[1]) / self.h

    def _apply(self, raw):
        if self.transform is None:
            return raw
        # raw has the basis index on axis 1
        return np.moveaxis(np.tensordot(raw, self.transform, axes=(1, 1)), -1, 1)

    def values(self, x):
        xi, eta = self._scaled(x)
        px, py = _powers(xi, self.degree), _powers(eta, self.degree)
        raw = (px[self._a] * py[self._b]).T
        return self._apply(raw)

    def gradients(self, x):
        xi, eta = self._scaled(x)
        px, py = _powers(xi, self.degree), _powers(eta, self.degree)
        a, b = self._a, self._b
        dx = (a[:, None] * px[np.maximum(a - 1, 0)] * py[b]).T / self.h
        dy = (b[:, None] * px[a] * py[np.maximum(b - 1, 0)]).T / self.h
        return self._apply(np.stack([dx, dy], axis=-1))

    def hessians(self, x):
        xi, eta = self._scaled(x)
        px, py = _powers(xi, self.degree), _powers(eta, self.degree)
        a, b = self._a, self._b
        am1, am2 = np.maximum(a - 1, 0), np.maximum(a - 2, 0)
        bm1, bm2 = np.maximum(b - 1, 0), np.maximum(b - 2, 0)
        h2 = self.h**2
        dxx = ((a * (a - 1))[:, None] * px[am2] * py[b]).T / h2
        dxy = ((a * b)[:, None] * px[am1] * py[bm1]).T / h2
        dyy = ((b * (b - 1))[:, None] * px[a] * py[bm2]).T / h2
        H = np.stack([np.stack([dxx, dxy], -1), np.stack([dxy, dyy], -1)], -2)
        return self._apply(H)


class FaceBasis:
    """Monomials in the arc-length coordinate s/h_F centred at the face midpoint."""

    def __init__(self, degree, midpoint, tangent, h, transform=None):
        self.degree = degree
        self.midpoint = np.asarray(midpoint, dtype=float)
        self.tangent = np.asarray(tangent, dtype=float)
        self.h = float(h)
        self.dim = degree + 1
        self.transform = transform

    def values(self, x):
        s = (np.atleast_2d(x) - self.midpoint) @ self.tangent / self.h
        raw = _powers(s, self.degree).T
        return raw if self.transform is None else raw @ self.transform.T


def _orthonormal_transform(raw_values, weights):
    G = raw_values.T @ (weights[:, None] * raw_values)
    L = np.linalg.cholesky(G)
    return np.linalg.inv(L)


def cell_basis(vertices, degree, orthonormal=True, center=None):
    vertices = np.asarray(vertices, dtype=float)
    _, c = polygon_area_centroid(vertices)
    if center is not None:
        c = np.asarray(center, dtype=float)
    h = cell_diameter(vertices)
    basis = CellBasis(degree, c, h)
    if orthonormal:
        rule = cell_quadrature(vertices, 2 * degree)
        basis.transform = _orthonormal_transform(basis.values(rule.points), rule.weights)
    return basis


def face_basis(a, b, degree, orthonormal=True):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    length = np.linalg.norm(b - a)
    basis = FaceBasis(degree, 0.5 * (a + b), (b - a) / length, length)
    if orthonormal:
        rule = face_quadrature(a, b, 2 * degree)
        basis.transform = _orthonormal_transform(basis.values(rule.points), rule.weights)
    return basis


def cell_diameter(vertices):
    d = vertices[:, None, :] - vertices[None, :, :]
    return float(np.sqrt((d**2).sum(-1)).max())


def gram_matrix(basis, rule, weight=None, kind="mass", basis2=None):
    """Gram matrix of ``basis`` (against ``basis2`` if given) on ``rule``.

    ``kind="mass"`` integrates phi_i phi_j (times a scalar weight if given);
    ``kind="stiffness"`` integrates K grad phi_i . grad phi_j with ``weight`` = K.
    """
    basis2 = basis if basis2 is None else basis2
    w = rule.weights
    if kind == "mass":
        V1, V2 = basis.values(rule.points), basis2.values(rule.points)
        if weight is not None:
            w = w * np.broadcast_to(weight, w.shape)
        return V1.T @ (w[:, None] * V2)
    if kind == "stiffness":
        G1, G2 = basis.gradients(rule.points), basis2.gradients(rule.points)
        K = np.eye(2) if weight is None else np.asarray(weight, dtype=float)
        KG2 = np.einsum("ij,qbj->qbi", K, G2)
        return np.einsum("q,qai,qbi->ab", w, G1, KG2)
    raise ValueError(f"unknown Gram kind {kind!r}")


def l2_project(f, basis, rule):
    """Coefficients of the L2-orthogonal projection of ``f`` onto span(basis).

    ``f`` maps an (nq, 2) array of points to (nq,) or (nq, m) values.
    """
    V = basis.values(rule.points)
    M = V.T @ (rule.weights[:, None] * V)
    rhs = V.T @ (rule.weights[:, None] * np.asarray(f(rule.points)).reshape(len(rule.weights), -1))
    try:
        L = np.linalg.cholesky(M)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError("singular Gram matrix in L2 projection") from exc
    coef = np.linalg.solve(L.T, np.linalg.solve(L, rhs))
    return coef[:, 0] if coef.shape[1] == 1 else coef


def l2_project_cell(f, vertices, degree, orthonormal=True, exactness=None):
    """Project ``f`` onto P^degree of a polygonal cell; returns (coefficients, basis)."""
    basis = cell_basis(vertices, degree, orthonormal)
    rule = cell_quadrature(vertices, exactness if exactness is not None else 2 * degree + 6)
    return l2_project(f, basis, rule), basis
