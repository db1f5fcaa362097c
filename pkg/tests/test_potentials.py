import math

import numpy as np
import pytest
import sympy as sp

from gaugeforge.errors import DomainError
from gaugeforge.schemas.report_schemas import StateSource
from gaugeforge.schemas.run_schemas import BoundarySpec, OmegaSpec
from gaugeforge.services import liealg
from gaugeforge.services.domain import Field, build_domain, constant_field, laplacian
from gaugeforge.services.potentials import (
    boundary_field,
    generate_potential,
    manufactured_state,
    mollify,
    rescale,
)
from gaugeforge.services.subcritical import subcritical_service
from gaugeforge.storage.gfld import write_field


def test_zero_kind(grid17):
    potential = generate_potential(grid17, 3, OmegaSpec(kind="zero"))
    assert potential.l_half_m_norm == 0.0
    assert np.all(potential.omega.values == 0.0)
    assert potential.n == 3


@pytest.mark.parametrize("kind", ["constant", "random"])
def test_potential_is_rescaled_to_target(grid17, kind):
    potential = generate_potential(grid17, 3, OmegaSpec(kind=kind, seed=5, target_norm=0.05))
    assert potential.l_half_m_norm == pytest.approx(0.05, abs=1e-10)
    values = potential.omega.values
    assert np.allclose(values, -liealg.transpose(values))


def test_potentials_are_seeded(grid17):
    a = generate_potential(grid17, 3, OmegaSpec(kind="random", seed=1))
    b = generate_potential(grid17, 3, OmegaSpec(kind="random", seed=1))
    c = generate_potential(grid17, 3, OmegaSpec(kind="random", seed=2))
    assert np.array_equal(a.omega.values, b.omega.values)
    assert not np.allclose(a.omega.values, c.omega.values)


def test_only_sampled_potentials_record_smoothing(grid17):
    assert generate_potential(grid17, 3, OmegaSpec(kind="random", seed=1, smoothness_passes=3)).smoothness_passes == 3
    assert generate_potential(grid17, 3, OmegaSpec(kind="constant", seed=1)).smoothness_passes is None
    assert generate_potential(grid17, 3, OmegaSpec(kind="zero")).smoothness_passes is None


def test_constant_so2_potential_is_a_multiple_of_J(grid17):
    potential = generate_potential(grid17, 2, OmegaSpec(kind="constant", seed=4))
    values = potential.omega.values
    assert np.allclose(values, values[0])
    assert np.allclose(values[0], liealg.hat2(values[0, 0, 1]))


def test_trivial_algebra_is_rejected(grid17):
    with pytest.raises(DomainError):
        generate_potential(grid17, 1, OmegaSpec(kind="random"))


def test_mollify_keeps_constants(grid17):
    f = constant_field(grid17, 2.5)
    assert np.allclose(mollify(f, 3).values, 2.5)


def test_rescale_keeps_zero(grid17):
    zero = Field(grid17, np.zeros(grid17.n_interior))
    assert rescale(zero, 1.0) is zero


def test_linear_boundary_is_harmonic(grid17):
    g = boundary_field(grid17, 2, BoundarySpec(kind="linear"))
    assert g.value_shape == (2,)
    assert np.allclose(laplacian(g).values, 0.0, atol=1e-9)


def test_boundary_from_file(grid17, tmp_path):
    g = boundary_field(grid17, 3, BoundarySpec(kind="trig"))
    path = write_field(tmp_path / "g.gfld", g, 3)
    loaded = boundary_field(grid17, 3, BoundarySpec(kind="file", path=path))
    assert np.array_equal(loaded.boundary_values, g.boundary_values)


def test_manufactured_family_solves_the_system_symbolically():
    x = sp.symbols("x0:3")
    k = (sp.Rational(3, 5), sp.Rational(4, 5), 0)
    l = (sp.Rational(4, 5), 0, sp.Rational(3, 5))
    kx = sum(ki * xi for ki, xi in zip(k, x))
    lx = sum(li * xi for li, xi in zip(l, x))
    v = sp.Matrix([sp.exp(kx) * sp.cos(lx), sp.exp(kx) * sp.sin(lx)])
    kl = sum(ki * li for ki, li in zip(k, l))
    omega = 2 * kl * sp.Matrix([[0, 1], [-1, 0]])
    lap = v.applyfunc(lambda c: sum(sp.diff(c, xi, 2) for xi in x))
    assert sp.simplify(lap + omega * v) == sp.zeros(2, 1)


def test_manufactured_state_matches_its_potential(grid17):
    k = (0.6, 0.8, 0.0)
    l = (0.8, 0.0, 0.6)
    v, potential = manufactured_state(grid17, k, l)
    assert v.value_shape == (2,)
    assert np.allclose(potential.omega.values, liealg.hat2(2.0 * 0.48))
    with pytest.raises(DomainError):
        manufactured_state(grid17, (1.0, 0.0, 0.0), (0.5, 0.0, 0.0))


def test_direct_solver_converges_on_the_manufactured_family():
    k = (0.5, 0.0, 0.0)
    l = (0.25, math.sqrt(0.1875), 0.0)
    errors = []
    for N in (17, 33):
        domain = build_domain(3, N)
        exact, potential = subcritical_service.manufactured(domain, k, l)
        assert exact.source is StateSource.MANUFACTURED
        state = subcritical_service.solve_direct(potential, exact.g, tol=1e-12)
        assert state.report.converged
        errors.append(float(np.max(np.abs(state.v.values - exact.v.values))))
    assert errors[1] < errors[0]
    assert math.log2(errors[0] / errors[1]) >= 1.5
