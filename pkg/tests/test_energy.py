import numpy as np
import pytest

from biot_hho.energy import coercivity_constants, dg_coercivity_constant, energy_diagnostic
from biot_hho.manufactured import homogeneous_solution
from biot_hho.mesh import PermeabilityField, build_trapezoidal_mesh, classify_boundary
from biot_hho.solver import BiotConfig


def clamped(n):
    return classify_boundary(build_trapezoidal_mesh(n, 0.1), mode="homogeneous")


def test_zero_data_gives_zero_energy():
    rep = energy_diagnostic(BiotConfig(k=1, tau=0.1), clamped(2), solution=None, steps=3)
    assert rep.lhs_total == 0.0 and rep.rhs_total == 0.0
    assert rep.holds


@pytest.mark.parametrize("c0", [0.0, 1.0])
@pytest.mark.parametrize("scheme", ["hho-hho", "hho-dg"])
def test_inequality_holds(c0, scheme):
    cfg = BiotConfig(k=1, scheme=scheme, c0=c0, tau=0.05, t_final=0.5)
    rep = energy_diagnostic(cfg, clamped(4), homogeneous_solution(c0=c0))
    assert rep.lhs_total > 0.0
    assert rep.holds and rep.slack >= 1.0
    assert rep.steps == 10


def test_mixed_boundary_rejected():
    mesh = classify_boundary(build_trapezoidal_mesh(2, 0.1), mode="mixed")
    with pytest.raises(ValueError):
        energy_diagnostic(BiotConfig(k=1), mesh)


@pytest.mark.parametrize("k", [0, 1, 2])
def test_coercivity_constants(k, spaces):
    lo2, hi2 = coercivity_constants(spaces(2, k), 1.0, 1.0)
    lo4, _ = coercivity_constants(spaces(4, k), 1.0, 1.0)
    assert 0.0 < lo2 <= hi2
    assert abs(lo2 - lo4) / max(lo2, lo4) < 0.25


def test_dg_coercivity_default_penalty(spaces):
    S = spaces(4, 1)
    g = dg_coercivity_constant(S, PermeabilityField.uniform(S.num_cells, 1.0))
    assert 0.5 < g <= 1.0 + 1e-10
