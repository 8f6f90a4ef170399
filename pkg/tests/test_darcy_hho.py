import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from biot_hho.darcy_hho import DarcyHHO, solve_hho_projection
from biot_hho.mesh import PermeabilityField

from conftest import Poly

ANISO = np.diag([1.0, 1e-6])


def perm(space, K=1.0):
    return PermeabilityField.uniform(space.num_cells, K)


def neumann_poly(x):
    """Zero normal derivative on the unit-square boundary; degree 4."""
    return 2 * x[:, 0] ** 3 - 3 * x[:, 0] ** 2 + 3 * x[:, 1] ** 4 - 4 * x[:, 1] ** 3


def neumann_poly_laplacian(x):
    return 12 * x[:, 0] - 6 + 36 * x[:, 1] ** 2 - 24 * x[:, 1]


def grad_energy(space, q, K=np.eye(2)):
    g = q.grad(space.cell_points)
    return float(space.cell_weights @ np.einsum("ni,ij,nj->n", g, K, g))


def test_constants_in_kernel(spaces):
    S = spaces(4, 2)
    C = DarcyHHO(S, perm(S)).assemble()
    one = S.interpolate_pressure(lambda x: np.ones(len(x)))
    assert abs(one @ (C @ one)) < 1e-13
    assert np.abs(C @ one).max() < 1e-12


@settings(max_examples=10, deadline=None)
@given(k=st.integers(0, 3), seed=st.integers(0, 2**31), aniso=st.booleans())
def test_consistency_on_degree_k_plus_1(spaces, k, seed, aniso):
    S = spaces(4, k)
    K = ANISO if aniso else np.eye(2)
    op = DarcyHHO(S, perm(S, K))
    q = Poly.random(k + 1, np.random.default_rng(seed))
    v = S.interpolate_pressure(q)
    assert v @ (op.assemble() @ v) == pytest.approx(grad_energy(S, q, K), rel=1e-10)
    assert 0.0 <= op.stabilisation_value(v) <= 1e-20 * grad_energy(S, q)


def test_reconstruction_reproduces_and_constants(spaces, rng):
    S = spaces(4, 2)
    op = DarcyHHO(S, perm(S))
    q = Poly.random(3, rng)
    v = S.interpolate_pressure(q)
    P = op.reconstruct(v)
    c = S.interpolate_pressure(lambda x: np.full(len(x), 2.5))
    Pc = op.reconstruct(c)
    for t in (0, 7, 15):
        el = S.element(t)
        x = el.points + S.mesh.cell_centroid[t]
        assert np.abs(el.phi @ P[t] - q(x)).max() < 1e-10
        np.testing.assert_allclose(el.phi @ Pc[t], 2.5, atol=1e-12)


def test_reconstruction_identity_anisotropic(spaces, rng):
    """(K grad p_T, grad w) = -(q_T, div K grad w) + sum_F (q_F, K grad w . n) for monomials w."""
    S = spaces(4, 1, 0.2)
    op = DarcyHHO(S, perm(S, ANISO))
    t = 5
    el, L = S.element(t), op.cell_local(t)
    ql = rng.standard_normal(L.P.shape[1])
    nk, nf = el.nk, el.nf
    gp = el.dphi.transpose(0, 2, 1) @ (L.P @ ql)  # (nq, 2)
    qT = el.phi[:, :nk] @ ql[:nk]
    for a, b in [(1, 0), (0, 1), (2, 0), (1, 1), (0, 2)]:
        x, y = el.points[:, 0], el.points[:, 1]
        gw = np.stack([a * x ** max(a - 1, 0) * y**b, b * x**a * y ** max(b - 1, 0)], axis=1)
        lap = ANISO[0, 0] * a * (a - 1) * x ** max(a - 2, 0) * y**b + ANISO[1, 1] * b * (b - 1) * x**a * y ** max(b - 2, 0)
        lhs = el.weights @ np.einsum("ni,ij,nj->n", gp, ANISO, gw)
        rhs = -el.weights @ (qT * lap)
        for j, face in enumerate(el.faces):
            fx, fy = face.points[:, 0], face.points[:, 1]
            gwf = np.stack([a * fx ** max(a - 1, 0) * fy**b, b * fx**a * fy ** max(b - 1, 0)], axis=1)
            qF = face.psi @ ql[nk + j * nf : nk + (j + 1) * nf]
            rhs += face.weights @ (qF * (gwf @ ANISO @ face.normal))
        assert lhs == pytest.approx(rhs, abs=1e-12)


def test_matrix_against_pointwise_oracle(spaces):
    """Entries from point evaluations of reconstructions and face differences."""
    S = spaces(2, 1)
    op = DarcyHHO(S, perm(S, ANISO))
    C = op.assemble().toarray()
    ref = np.zeros_like(C)
    for t in range(S.num_cells):
        el, L = S.element(t), op.cell_local(t)
        d = S.p_local_dofs(t)
        G = np.einsum("qaj,ab->qjb", el.dphi, L.P)  # grad p_T per local dof
        loc = np.einsum("q,qib,ij,qjc->bc", el.weights, G, ANISO, G)
        nk, nf = el.nk, el.nf
        for j, face in enumerate(el.faces):
            # point values of p_T, its P^k cell projection and q_F on the face
            pT = face.phi @ L.P
            cellpart = face.phi[:, :nk] @ (el.proj_k @ L.P)
            cellpart[:, :nk] -= face.phi[:, :nk]
            qF = np.zeros((len(face.weights), L.P.shape[1]))
            qF[:, nk + j * nf : nk + (j + 1) * nf] = face.psi
            vals = pT - cellpart - qF
            # face L2 projection onto P^k(F) by weighted least squares
            sw = np.sqrt(face.weights)[:, None]
            coef = np.linalg.lstsq(sw * face.psi, sw * vals, rcond=None)[0]
            D = face.psi @ coef
            kap = face.normal @ ANISO @ face.normal
            loc += kap / face.h * np.einsum("q,qb,qc->bc", face.weights, D, D)
        ref[np.ix_(d, d)] += loc
    np.testing.assert_allclose(C, ref, atol=1e-12 * np.abs(ref).max())


@pytest.mark.parametrize("k", [2, 3])
def test_projection_reproduces_compatible_polynomial(spaces, k):
    S = spaces(4, k)
    mean = float(S.cell_weights @ neumann_poly(S.cell_points))
    r, lam = solve_hho_projection(S, perm(S), neumann_poly_laplacian, mean_value=mean)
    if k == 3:
        np.testing.assert_allclose(r, S.interpolate_pressure(neumann_poly), atol=1e-9)
    assert abs(lam) < 1e-9


def test_projection_of_constant(spaces):
    S = spaces(4, 1)
    r, lam = solve_hho_projection(S, perm(S), lambda x: np.zeros(len(x)), mean_value=3.0)
    np.testing.assert_allclose(r, 3.0 * S.interpolate_pressure(lambda x: np.ones(len(x))), atol=1e-10)
    assert abs(lam) < 1e-12


def test_projection_rejects_incompatible_datum(spaces):
    S = spaces(2, 1)
    with pytest.raises(ValueError):
        solve_hho_projection(S, perm(S), lambda x: np.ones(len(x)))
