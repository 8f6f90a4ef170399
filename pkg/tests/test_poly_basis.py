import numpy as np
import pytest
import sympy
from hypothesis import given, settings, strategies as st

from biot_hho.basis import (
    cell_basis, cell_quadrature, face_quadrature, gram_matrix, l2_project_cell, monomial_exponents, poly_dim,
)
from biot_hho.mesh import build_trapezoidal_mesh

UNIT = np.array([[0, 0], [1, 0], [1, 1], [0, 1.0]])
X, Y = sympy.symbols("x y")


def sympy_polygon_integral(expr, verts):
    """Exact integral over a convex polygon via a fan of triangles and affine maps."""
    s, t = sympy.symbols("s t")
    total = 0
    v0 = [sympy.nsimplify(c, rational=True) for c in verts[0]]
    for i in range(1, len(verts) - 1):
        a = [sympy.nsimplify(c, rational=True) for c in verts[i]]
        b = [sympy.nsimplify(c, rational=True) for c in verts[i + 1]]
        xs = v0[0] + s * (a[0] - v0[0]) + t * (b[0] - v0[0])
        ys = v0[1] + s * (a[1] - v0[1]) + t * (b[1] - v0[1])
        jac = abs((a[0] - v0[0]) * (b[1] - v0[1]) - (b[0] - v0[0]) * (a[1] - v0[1]))
        g = expr.subs({X: xs, Y: ys}, simultaneous=True)
        total += jac * sympy.integrate(sympy.integrate(g, (t, 0, 1 - s)), (s, 0, 1))
    return float(total)


def green_monomial_integral(a, b, verts):
    """int x^a y^b over a polygon as (1/(a+1)) * boundary integral of x^(a+1) y^b dy,
    each edge integrated exactly as a polynomial in its parameter."""
    P = np.polynomial.Polynomial
    total = 0.0
    for i in range(len(verts)):
        p, q = verts[i], verts[(i + 1) % len(verts)]
        x, y = P([p[0], q[0] - p[0]]), P([p[1], q[1] - p[1]])
        g = (x ** (a + 1) * y**b * (q[1] - p[1])).integ()
        total += g(1.0) - g(0.0)
    return total / (a + 1)


def test_unit_square_quadratic():
    r = cell_quadrature(UNIT, 2)
    assert abs(r.integrate(r.points[:, 0] ** 2 + r.points[:, 1] ** 2) - 2 / 3) < 1e-14


def test_unit_triangle():
    r = cell_quadrature(np.array([[0, 0], [1, 0], [0, 1.0]]), 1)
    assert abs(r.integrate(r.points[:, 0]) - 1 / 6) < 1e-15


def test_green_oracle_agrees_with_sympy():
    v = np.array([[0.0, 0.0], [1.0, 0.1], [0.9, 1.0], [0.1, 0.8]])
    assert green_monomial_integral(3, 2, v) == pytest.approx(sympy_polygon_integral(X**3 * Y**2, v), rel=1e-13)


def test_trapezoid_against_exact_oracle():
    m = build_trapezoidal_mesh(4, 0.1)
    v = m.vertices[m.cells[5]]
    r = cell_quadrature(v, 5)
    val = r.integrate(r.points[:, 0] ** 3 * r.points[:, 1] ** 2)
    assert abs(val - sympy_polygon_integral(X**3 * Y**2, v)) < 1e-12


@settings(max_examples=20, deadline=None)
@given(deg=st.integers(0, 8), seed=st.integers(0, 10**6))
def test_quadrature_exact_on_monomials(deg, seed):
    rng = np.random.default_rng(seed)
    # random convex quadrilateral: perturbed square corners
    v = UNIT + 0.15 * rng.uniform(-1, 1, (4, 2))
    a = int(rng.integers(0, deg + 1))
    b = deg - a
    r = cell_quadrature(v, deg)
    val = r.integrate(r.points[:, 0] ** a * r.points[:, 1] ** b)
    assert val == pytest.approx(green_monomial_integral(a, b, v), rel=1e-11, abs=1e-13)


def test_face_quadrature_exactness():
    a, b = np.array([0.2, 0.1]), np.array([0.9, 0.6])
    r = face_quadrature(a, b, 7)
    length = np.linalg.norm(b - a)
    s = (r.points - a) @ (b - a) / length**2
    assert abs(r.integrate(s**7) - length / 8) < 1e-14


def test_projector_reproduces_polynomials(rng):
    m = build_trapezoidal_mesh(4, 0.1)
    v = m.vertices[m.cells[6]]
    c = rng.standard_normal(poly_dim(2))
    exps = monomial_exponents(2)

    def f(x):
        return sum(ci * x[:, 0] ** a * x[:, 1] ** b for ci, (a, b) in zip(c, exps))

    coef, basis = l2_project_cell(f, v, 2)
    r = cell_quadrature(v, 6)
    assert np.abs(basis.values(r.points) @ coef - f(r.points)).max() < 1e-12


def test_mean_value_projection():
    coef, _ = l2_project_cell(lambda x: np.sin(np.pi * x[:, 0]) * np.sin(np.pi * x[:, 1]), UNIT, 0, exactness=20)
    # orthonormal constant on the unit square is 1
    assert abs(coef[0] - 4 / np.pi**2) < 1e-12


def test_projection_least_squares_oracle():
    m = build_trapezoidal_mesh(4, 0.1)
    v = m.vertices[m.cells[9]]
    f = lambda x: x[:, 0] ** 4
    coef, basis = l2_project_cell(f, v, 2, orthonormal=False, exactness=12)
    # dense least squares at a high-order rule: minimise sum w (phi c - f)^2
    r = cell_quadrature(v, 16)
    sw = np.sqrt(r.weights)[:, None]
    ref = np.linalg.lstsq(sw * basis.values(r.points), sw[:, 0] * f(r.points), rcond=None)[0]
    np.testing.assert_allclose(coef, ref, rtol=0, atol=1e-10)


def test_orthonormal_mass_is_identity():
    m = build_trapezoidal_mesh(4, 0.1)
    v = m.vertices[m.cells[3]]
    basis = cell_basis(v, 3)
    G = gram_matrix(basis, cell_quadrature(v, 6))
    np.testing.assert_allclose(G, np.eye(basis.dim), atol=1e-10)


def _fd_gradients(basis, x, h=1e-6):
    ex, ey = np.array([h, 0.0]), np.array([0.0, h])
    gx = (basis.values(x + ex) - basis.values(x - ex)) / (2 * h)
    gy = (basis.values(x + ey) - basis.values(x - ey)) / (2 * h)
    return np.stack([gx, gy], axis=-1)


def test_stiffness_gram_p1_unit_square():
    basis = cell_basis(UNIT, 1, orthonormal=False)
    r = cell_quadrature(UNIT, 2)
    G = gram_matrix(basis, r, np.eye(2), kind="stiffness")
    g = _fd_gradients(basis, np.array([[0.3, 0.6]]))[0]  # gradients are constant on P^1
    np.testing.assert_allclose(G, g @ g.T, atol=1e-8)
    assert np.all(G[0] == 0)


def test_anisotropic_weight_scaling():
    m = build_trapezoidal_mesh(4, 0.1)
    v = m.vertices[m.cells[2]]
    basis = cell_basis(v, 2)
    r = cell_quadrature(v, 4)
    Gx = gram_matrix(basis, r, np.diag([1.0, 0.0]), kind="stiffness")
    Gy = gram_matrix(basis, r, np.diag([0.0, 1.0]), kind="stiffness")
    G = gram_matrix(basis, r, np.diag([1.0, 1e-6]), kind="stiffness")
    np.testing.assert_allclose(G, Gx + 1e-6 * Gy, atol=1e-13)


def test_unknown_gram_kind():
    basis = cell_basis(UNIT, 1)
    with pytest.raises(ValueError):
        gram_matrix(basis, cell_quadrature(UNIT, 2), kind="bogus")
