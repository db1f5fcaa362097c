import math

import numpy as np
import pytest

from gaugeforge.errors import DomainError
from gaugeforge.services.domain import (
    BallSpec,
    Field,
    Symmetry,
    ball_volume,
    build_domain,
    constant_field,
    divergence,
    evaluate,
    gradient,
    integral,
    laplacian,
    lp_norm,
    restrict,
    sobolev2_norm,
    sub_domain,
)


@pytest.mark.parametrize("m,N", [(2, 17), (6, 9), (3, 16), (3, 7)])
def test_build_domain_rejects_bad_parameters(m, N):
    with pytest.raises(DomainError):
        build_domain(m, N)


def test_grid_covers_the_ball(grid17):
    assert grid17.h == pytest.approx(0.125)
    assert grid17.n_interior * grid17.h ** 3 == pytest.approx(ball_volume(3), rel=0.1)
    assert np.all(np.linalg.norm(grid17.coords, axis=1) < 1.0)
    assert np.allclose(np.linalg.norm(grid17.boundary_points, axis=1), 1.0, atol=1e-12)
    assert np.all((grid17.arms > 0) & (grid17.arms <= 1.0))
    assert np.all(np.diff(grid17.keys) > 0)


def test_laplacian_exact_on_quadratics(grid17):
    f = evaluate(grid17, lambda x: np.sum(x ** 2, axis=1))
    assert np.allclose(laplacian(f).values, 6.0, atol=1e-9)


def test_gradient_exact_on_quadratics(grid17):
    f = evaluate(grid17, lambda x: x[:, 0] ** 2 + x[:, 1])
    g0, g1, g2 = gradient(f)
    assert np.allclose(g0.values, 2.0 * grid17.coords[:, 0], atol=1e-10)
    assert np.allclose(g1.values, 1.0, atol=1e-10)
    assert np.allclose(g2.values, 0.0, atol=1e-10)


def test_divergence_of_linear_flux(grid17):
    flux = [evaluate(grid17, lambda x, d=d: x[:, d]) for d in range(3)]
    assert np.allclose(divergence(flux).values, 3.0, atol=1e-8)
    with pytest.raises(DomainError):
        divergence([Field(grid17, grid17.coords[:, d]) for d in range(3)])


def test_divergence_of_gradient_keeps_every_axis():
    grid = build_domain(3, 19)
    # nodes with |x|^2 = 1 - h^2 have no interior neighbour along some axis
    isolated = np.all(grid.neighbors < 0, axis=2)
    assert isolated.any()
    f = evaluate(grid, lambda x: np.sum(x ** 2, axis=1))
    grads = gradient(f)
    for d in range(3):
        on_axis = np.zeros(grid.n_boundary, dtype=bool)
        on_axis[grid.boundary_index[:, d, :][grid.boundary_index[:, d, :] >= 0]] = True
        assert np.allclose(grads[d].boundary_values[on_axis], 2.0 * grid.boundary_points[on_axis, d], atol=1e-8)
    assert np.allclose(divergence(grads).values, 6.0, atol=1e-6)
    assert np.allclose(divergence(grads).values, laplacian(f).values, atol=1e-6)


def test_lp_norms(grid17):
    one = constant_field(grid17, 1.0)
    half = BallSpec((0.0, 0.0, 0.0), 0.5)
    assert lp_norm(one, 2, half) == pytest.approx(math.sqrt(ball_volume(3, 0.5)), rel=0.15)
    assert lp_norm(one, math.inf) == 1.0
    with pytest.raises(DomainError):
        lp_norm(one, 0.5)


def test_region_must_be_contained(grid17):
    with pytest.raises(DomainError):
        integral(grid17, np.ones(grid17.n_interior), BallSpec((0.8, 0.0, 0.0), 0.5))


def test_sub_domain_checks(grid17):
    with pytest.raises(DomainError):
        sub_domain(grid17, (0.0, 0.0, 0.0), 0.125)
    with pytest.raises(DomainError):
        sub_domain(grid17, (0.9, 0.0, 0.0), 0.25)
    sub = sub_domain(grid17, (0.25, 0.0, 0.0), 0.25)
    assert sub.n_interior > 0
    assert np.all(np.linalg.norm(sub.coords - np.array([0.25, 0.0, 0.0]), axis=1) < 0.25)


def test_restrict_matches_parent_nodes(grid17):
    f = evaluate(grid17, lambda x: x[:, 0] - 2.0 * x[:, 2])
    sub = sub_domain(grid17, (0.0, 0.25, 0.0), 0.375)
    g = restrict(f, sub)
    assert np.allclose(g.values, sub.coords[:, 0] - 2.0 * sub.coords[:, 2])
    assert g.boundary_values is None


def test_fields_are_immutable(grid17):
    f = constant_field(grid17, 2.0)
    with pytest.raises(ValueError):
        f.values[0] = 1.0


def test_symmetry_class_is_enforced(grid17):
    with pytest.raises(DomainError):
        Field(grid17, np.ones((grid17.n_interior, 2, 2)), None, Symmetry.ANTISYMMETRIC)
    with pytest.raises(DomainError):
        Field(grid17, np.full(grid17.n_interior, np.nan))


def test_sobolev_proxy_vanishes_on_zero(grid17):
    zero = Field(grid17, np.zeros((grid17.n_interior, 2, 2)))
    assert sobolev2_norm(zero, 1.5) == 0.0


def test_four_ball_volume():
    grid = build_domain(4, 17)
    assert grid.n_interior * grid.h ** 4 == pytest.approx(math.pi ** 2 / 2.0, rel=0.02)
    assert grid.n_interior * grid.h ** 4 == pytest.approx(ball_volume(4), rel=0.02)


def _sine_laplacian_error(N):
    grid = build_domain(3, N)
    f = evaluate(grid, lambda x: np.sin(np.pi * x[:, 0]))
    error = np.abs(laplacian(f).values + np.pi ** 2 * np.sin(np.pi * grid.coords[:, 0]))
    return float(error[grid.distance_to_boundary() > 4.0 * grid.h].max())


def test_laplacian_is_second_order_inside():
    coarse, fine = _sine_laplacian_error(17), _sine_laplacian_error(33)
    assert math.log2(coarse / fine) >= 1.8


@pytest.mark.slow
def test_laplacian_refinement_order_up_to_65():
    errors = [_sine_laplacian_error(N) for N in (17, 33, 65)]
    assert math.log2(errors[1] / errors[2]) >= 1.9
    assert errors[0] > errors[1] > errors[2]


def test_sobolev_proxy_of_an_eigenfunction(grid17):
    f = evaluate(grid17, lambda x: np.prod(np.sin(0.5 * np.pi * (x + 1.0)), axis=1))
    eigenvalue = 3.0 * np.pi ** 2 / 4.0
    assert sobolev2_norm(f, 1.5) == pytest.approx(eigenvalue * lp_norm(f, 1.5), rel=0.1)


def test_sobolev_proxy_of_a_dirichlet_solution(grid17):
    g = evaluate(grid17, lambda x: np.cos(x[:, 0]) * x[:, 1])
    u = Field(grid17, np.linalg.solve(grid17.lap_int.toarray(), g.values))
    assert sobolev2_norm(u, 1.5) == pytest.approx(lp_norm(g, 1.5), rel=1e-8)
