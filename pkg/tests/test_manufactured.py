import numpy as np
import pytest
import sympy as sp

from biot_hho.manufactured import SOLUTIONS, biot_benchmark, exponential_solution, homogeneous_solution

X, Y, T = sp.symbols("x y t")
PI = sp.pi


def sympy_fields(name):
    if name == "benchmark":
        u = sp.Matrix([-sp.sin(PI * T) * sp.cos(PI * X) * sp.cos(PI * Y), sp.sin(PI * T) * sp.sin(PI * X) * sp.sin(PI * Y)])
        p = -sp.cos(PI * T) * sp.sin(PI * X) * sp.cos(PI * Y)
    elif name == "homogeneous":
        s = sp.sin(PI * X) * sp.sin(PI * Y)
        u = sp.Matrix([sp.sin(PI * T) * s, sp.sin(PI * T) * s])
        p = sp.cos(PI * T) * sp.cos(PI * X) * sp.cos(PI * Y)
    elif name == "exponential":
        u = sp.exp(T) * sp.Matrix([-sp.cos(PI * X) * sp.cos(PI * Y), sp.sin(PI * X) * sp.sin(PI * Y)])
        p = -sp.exp(T) * sp.sin(PI * X) * sp.cos(PI * Y)
    else:  # steady
        u = sp.Matrix([-sp.cos(PI * X) * sp.cos(PI * Y), sp.sin(PI * X) * sp.sin(PI * Y)])
        p = -sp.sin(PI * X) * sp.cos(PI * Y)
    return u, p


def sympy_loads(u, p, mu, lam, c0, K):
    G = u.jacobian([X, Y])
    eps = (G + G.T) / 2
    div = G[0, 0] + G[1, 1]
    sigma = 2 * mu * eps + lam * div * sp.eye(2)
    f = sp.Matrix([-(sp.diff(sigma[i, 0], X) + sp.diff(sigma[i, 1], Y)) + sp.diff(p, [X, Y][i]) for i in range(2)])
    Kg = K * sp.Matrix([sp.diff(p, X), sp.diff(p, Y)])
    g = c0 * sp.diff(p, T) + sp.diff(div, T) - (sp.diff(Kg[0], X) + sp.diff(Kg[1], Y))
    return f, g, sigma


@pytest.mark.parametrize("name", sorted(SOLUTIONS))
@pytest.mark.parametrize("kappa", [1.0, 1e-6])
def test_loads_match_symbolic_residuals(name, kappa):
    mu, lam, c0 = 1.3, 0.7, 0.4
    sol = SOLUTIONS[name](kappa=kappa, mu=mu, lam=lam, c0=c0)
    u, p = sympy_fields(name)
    f, g, sigma = sympy_loads(u, p, mu, lam, c0, kappa * sp.eye(2))
    fn = sp.lambdify((X, Y, T), [f[0], f[1], g, u[0], u[1], p], "numpy")
    rng = np.random.default_rng(7)
    pts = rng.random((20, 2))
    for t in rng.random(3) * 2.0:
        ref = [np.broadcast_to(v, (20,)) for v in fn(pts[:, 0], pts[:, 1], t)]
        np.testing.assert_allclose(sol.f(pts, t), np.stack(ref[:2], axis=1), atol=1e-11)
        np.testing.assert_allclose(sol.g(pts, t), ref[2], atol=1e-11)
        np.testing.assert_allclose(sol.u(pts, t), np.stack(ref[3:5], axis=1), atol=1e-13)
        np.testing.assert_allclose(sol.p(pts, t), ref[5], atol=1e-13)


def test_benchmark_closed_form_loads():
    """Unit Lame parameters, C0 = 0: f = (6 pi^2 sin(pi t) + pi cos(pi t)) (-cos cos, sin sin),
    g = 2 (1 - kappa) pi^2 cos(pi t) sin(pi x) cos(pi y)."""
    kappa = 1e-6
    sol = biot_benchmark(kappa=kappa)
    pts = np.random.default_rng(1).random((20, 2))
    x, y = pts.T
    pi = np.pi
    for t in (0.1, 0.55, 1.0):
        amp = 6 * pi**2 * np.sin(pi * t) + pi * np.cos(pi * t)
        f = amp * np.stack([-np.cos(pi * x) * np.cos(pi * y), np.sin(pi * x) * np.sin(pi * y)], axis=1)
        g = 2 * (1 - kappa) * pi**2 * np.cos(pi * t) * np.sin(pi * x) * np.cos(pi * y)
        np.testing.assert_allclose(sol.f(pts, t), f, atol=1e-10)
        np.testing.assert_allclose(sol.g(pts, t), g, atol=1e-10)


def test_traction_and_flux():
    mu, lam = 1.0, 2.0
    sol = homogeneous_solution(kappa=0.5, mu=mu, lam=lam)
    u, p = sympy_fields("homogeneous")
    _, _, sigma = sympy_loads(u, p, mu, lam, 0.0, 0.5 * sp.eye(2))
    pts = np.random.default_rng(2).random((10, 2))
    nrm = np.tile([0.6, 0.8], (10, 1))
    t = 0.3
    trac = sum(a(t) * fn(pts, nrm) for a, fn in sol.traction())
    flux = sum(b(t) * fn(pts, nrm) for b, fn in sol.flux())
    S = sp.lambdify((X, Y, T), sigma - p * sp.eye(2), "numpy")
    F = sp.lambdify((X, Y, T), 0.5 * (sp.diff(p, X) * 0.6 + sp.diff(p, Y) * 0.8), "numpy")
    for i, (xi, yi) in enumerate(pts):
        np.testing.assert_allclose(trac[i], np.array(S(xi, yi, t), dtype=float) @ [0.6, 0.8], atol=1e-12)
        assert flux[i] == pytest.approx(float(F(xi, yi, t)), abs=1e-12)


def test_homogeneous_solution_data():
    sol = homogeneous_solution()
    edge = np.array([[0.0, 0.3], [1.0, 0.7], [0.4, 0.0], [0.2, 1.0]])
    assert np.abs(sol.u(edge, 0.4)).max() < 1e-15
    nrm = np.array([[-1.0, 0.0], [1.0, 0.0], [0.0, -1.0], [0.0, 1.0]])
    assert np.abs(sum(b(0.4) * fn(edge, nrm) for b, fn in sol.flux())).max() < 1e-14


def test_exponential_time_factor():
    sol = exponential_solution()
    a, _ = sol.u_terms[0]
    assert a(0.7) == pytest.approx(np.exp(0.7))
    assert a.derivative()(0.7) == pytest.approx(np.exp(0.7))
