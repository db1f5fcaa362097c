import numpy as np
import pytest

from gaugeforge.errors import DomainError, MonitorBreachError
from gaugeforge.schemas.run_schemas import ContinuationConfig, OmegaSpec
from gaugeforge.services import liealg
from gaugeforge.services.domain import Field, Symmetry, build_domain
from gaugeforge.services.gauge import AntisymmetricPotential, gauge_service
from gaugeforge.services.potentials import generate_potential

from conftest import smooth_antisymmetric


def _zero_U(domain, n):
    return Field(domain, np.zeros((domain.n_interior, n, n)), np.zeros((domain.n_boundary, n, n)),
                 Symmetry.ANTISYMMETRIC)


@pytest.fixture(scope="module")
def zero_potential17(grid17):
    return generate_potential(grid17, 3, OmegaSpec(kind="zero"))


def test_residual_of_trivial_frame(grid17, zero_potential17, random_potential17):
    U = _zero_U(grid17, 3)
    assert np.max(np.abs(gauge_service.residual_F(U, zero_potential17).values)) < 1e-10
    R = gauge_service.residual_F(U, random_potential17)
    assert np.allclose(R.values, random_potential17.omega.values, atol=1e-10)


def test_residual_is_antisymmetric(grid17, random_potential17):
    U = smooth_antisymmetric(grid17, 3, seed=10)
    R = gauge_service.residual_F(U, random_potential17).values
    assert np.allclose(R, -liealg.transpose(R), atol=1e-14)


@pytest.mark.parametrize("exact", [True, False])
def test_linearization_at_identity_is_laplacian(grid17, exact):
    P0 = gauge_service.frame(_zero_U(grid17, 3))
    zeta = smooth_antisymmetric(grid17, 3, seed=11)
    applied = gauge_service.linearized_apply(P0, None, zeta, exact=exact)
    expected = grid17.laplacian_values(zeta.values, zeta.boundary_or_zero())
    assert np.allclose(applied.values, expected, atol=1e-8)
    assert np.max(np.abs(gauge_service.linearized_apply(P0, None, _zero_U(grid17, 3)).values)) < 1e-10


def test_linearization_matches_finite_differences(grid17, zero_potential17):
    U0 = smooth_antisymmetric(grid17, 3, seed=12)
    W = smooth_antisymmetric(grid17, 3, seed=13)
    eps = 1e-5

    def shifted(s):
        return Field(grid17, U0.values + s * W.values, U0.boundary_values, Symmetry.ANTISYMMETRIC)

    fd = (gauge_service.residual_F(shifted(eps), zero_potential17).values
          - gauge_service.residual_F(shifted(-eps), zero_potential17).values) / (2.0 * eps)
    P0 = gauge_service.frame(U0)
    zeta = Field(grid17, liealg.dexp_conj(U0.values, W.values), np.zeros((grid17.n_boundary, 3, 3)))
    applied = gauge_service.linearized_apply(P0, None, zeta).values
    assert np.linalg.norm(applied - fd) <= 1e-4 * np.linalg.norm(fd)
    assert np.allclose(applied, -liealg.transpose(applied), atol=1e-8 * np.abs(applied).max())


def test_linearization_rejects_foreign_potential(grid17):
    P0 = gauge_service.frame(_zero_U(grid17, 3))
    foreign = smooth_antisymmetric(grid17, 3, seed=14, zero_boundary=False)
    with pytest.raises(DomainError):
        gauge_service.linearized_apply(P0, foreign, smooth_antisymmetric(grid17, 3, seed=15))


def test_zero_potential_needs_no_newton(grid17, continuation):
    potential = generate_potential(grid17, 2, OmegaSpec(kind="zero"))
    U, P, trace = gauge_service.construct_P(potential, continuation)
    assert np.all(U.values == 0.0)
    assert np.allclose(P.values, np.eye(2))
    assert trace.steps == []


def test_constant_potential_converges(constant_gauge17, continuation):
    triple = constant_gauge17
    assert triple.diagnostics.residual_P <= continuation.newton_tol
    assert len(triple.trace.steps) == continuation.steps
    assert triple.trace.newton_iterations > 0

    U, P = triple.U.values, triple.P.values
    assert np.allclose(U, -liealg.transpose(U), atol=1e-14)
    assert np.allclose(liealg.transpose(P) @ P, np.eye(2), atol=1e-12)
    assert np.allclose(np.linalg.det(P), 1.0, atol=1e-12)


def test_newton_converges_quadratically(constant_gauge17):
    for step in constant_gauge17.trace.steps:
        residuals = step.newton_residuals
        for before, after in zip(residuals, residuals[1:]):
            assert after <= 1e3 * before ** 2 + 1e-12


def test_continuation_step_count_does_not_change_the_answer(constant_potential17, constant_gauge17):
    U16, _, trace = gauge_service.construct_P(constant_potential17, ContinuationConfig(steps=16))
    assert len(trace.steps) == 16
    assert np.max(np.abs(U16.values - constant_gauge17.U.values)) <= 1e-7


def test_identity_frame_gives_identity_Q(grid17):
    Q, report = gauge_service.construct_Q(gauge_service.frame(_zero_U(grid17, 3)))
    assert report.converged
    assert report.iterations == 0
    assert np.array_equal(Q.values, np.broadcast_to(np.eye(3), Q.values.shape))
    assert np.array_equal(Q.boundary_values, np.broadcast_to(np.eye(3), Q.boundary_values.shape))


def test_Q_obeys_maximum_principle(random_gauge17):
    h2 = random_gauge17.Q.domain.h ** 2
    sub_min, sup = gauge_service.max_principle_checks(random_gauge17.Q, directions=10, seed=0)
    assert sup <= 1.0 + 10.0 * h2
    assert sub_min >= -10.0 * h2


def test_curvature_coefficients_are_psd(random_gauge17):
    b, K = gauge_service.curvature_coefficients(random_gauge17.P)
    assert len(b) == 3
    for b_d in b:
        assert np.allclose(b_d, -liealg.transpose(b_d))
    assert np.allclose(K, liealg.transpose(K), atol=1e-14)
    assert np.linalg.eigvalsh(K).min() >= -1e-10


def test_eps0_breach(random_gauge17):
    with pytest.raises(MonitorBreachError) as excinfo:
        gauge_service.construct_Q(random_gauge17.P, eps0=1e-30)
    assert excinfo.value.monitor == "eps0"
    assert excinfo.value.exit_code == 2


def test_zero_potential_verifies_cleanly(grid17, continuation):
    potential = generate_potential(grid17, 2, OmegaSpec(kind="zero"))
    triple = gauge_service.build_gauge(potential, continuation)
    report = gauge_service.verify_gauge(triple, potential, continuation)
    assert report.omega_norm == 0.0
    assert report.residual_A < 1e-8
    assert report.dist_A_On < 1e-8
    assert report.grad_P_energy == 0.0
    assert report.gram_defect < 1e-8
    assert report.steps == 0
    assert report.monitors_passed


def test_random_potential_report(random_potential17, random_gauge17, continuation):
    report = gauge_service.verify_gauge(random_gauge17, random_potential17, continuation)
    for name in ("residual_P", "residual_A", "dist_A_On", "dist_Q_On", "grad_P_energy",
                 "w2_P_minus_id", "w2_Q_minus_id", "w2_A_minus_id", "gram_defect", "s_symmetry_defect"):
        assert np.isfinite(getattr(report, name)), name
    assert report.grad_P_energy > 0.0
    assert report.steps == continuation.steps
    assert len(report.a3_ratios) == continuation.steps
    assert report.s_symmetry_defect < 1e-10
    assert report.bilinear_ok
    assert report.monitors_passed


def test_oversized_potential_is_refused(constant_potential17):
    with pytest.raises(MonitorBreachError) as excinfo:
        gauge_service.construct_P(constant_potential17, ContinuationConfig(max_omega_norm=0.01))
    assert excinfo.value.monitor == "max_omega_norm"


def test_eps1_breach_names_the_step(constant_potential17):
    with pytest.raises(MonitorBreachError) as excinfo:
        gauge_service.construct_P(constant_potential17, ContinuationConfig(eps1_monitor=1e-12))
    assert excinfo.value.monitor == "eps1"
    assert excinfo.value.step == 1


def test_sweep_convergence_radius(constant_potential17, continuation):
    rows = gauge_service.sweep_convergence_radius(constant_potential17, [0.025, 0.05, 2.0], continuation)
    assert [row.target_norm for row in rows] == [0.025, 0.05, 2.0]
    assert rows[0].converged and rows[1].converged
    assert rows[0].newton_iterations > 0
    assert not rows[2].converged
    assert "max_omega_norm" in rows[2].failure


@pytest.mark.slow
def test_gradient_energy_settles_under_refinement(continuation):
    energies = []
    for N in (17, 33):
        domain = build_domain(3, N)
        potential = generate_potential(domain, 3, OmegaSpec(kind="random", seed=3, target_norm=0.05))
        _, P, _ = gauge_service.construct_P(potential, continuation)
        energies.append(gauge_service.gradient_energy(P))
    assert abs(energies[1] - energies[0]) <= 0.2 * energies[1]


def test_tight_linear_tolerance_still_converges(constant_potential17):
    cfg = ContinuationConfig(linear_tol=1e-12)
    _, P, trace = gauge_service.construct_P(constant_potential17, cfg)
    assert len(trace.steps) == cfg.steps
    assert trace.steps[-1].newton_residuals[-1] <= cfg.newton_tol * max(constant_potential17.l_half_m_norm, 1.0)
    assert np.allclose(liealg.transpose(P.values) @ P.values, np.eye(2), atol=1e-12)


def test_unsmoothed_sample_is_refused(random_potential17, continuation):
    raw = AntisymmetricPotential.from_field(random_potential17.omega, smoothness_passes=0)
    with pytest.raises(DomainError):
        gauge_service.construct_P(raw, continuation)


def test_distance_to_On_tracks_gradient_energy(random_potential17, continuation):
    rows = gauge_service.sweep_convergence_radius(random_potential17, [0.025, 0.05, 0.1], continuation)
    assert all(row.converged for row in rows)
    dists = [row.dist_A_On for row in rows]
    assert dists[0] < dists[1] < dists[2]
    ratios = [row.dist_A_On / row.grad_P_energy ** (2.0 / 3.0) for row in rows]
    assert all(np.isfinite(r) and r > 0.0 for r in ratios)
    assert max(ratios) <= 4.0 * min(ratios)


def _coarse_to_fine(coarse, fine):
    """Indices into `fine` of the interior nodes of `coarse` (both lattices share x = -1)."""
    scale = (fine.N - 1) / 2.0
    index = {tuple(k): i for i, k in enumerate(np.rint((fine.coords + 1.0) * scale).astype(int))}
    keys = np.rint((coarse.coords + 1.0) * scale).astype(int)
    return np.array([index[tuple(k)] for k in keys])


@pytest.mark.slow
def test_frame_converges_under_refinement(grid17, grid33, continuation):
    spec = OmegaSpec(kind="random", seed=3, target_norm=0.05)
    U17, _, _ = gauge_service.construct_P(generate_potential(grid17, 3, spec), continuation)
    U33, _, _ = gauge_service.construct_P(generate_potential(grid33, 3, spec), continuation)
    U33_on_coarse = U33.values[_coarse_to_fine(grid17, grid33)]
    scale = np.max(np.abs(U33_on_coarse))
    assert scale > 0.0
    assert np.max(np.abs(U17.values - U33_on_coarse)) <= 0.1 * scale


@pytest.mark.slow
def test_residual_A_is_second_order_up_to_65(continuation):
    residuals = []
    for N in (33, 65):
        domain = build_domain(3, N)
        potential = generate_potential(domain, 3, OmegaSpec(kind="random", seed=3, target_norm=0.05))
        residuals.append(gauge_service.build_gauge(potential, continuation).diagnostics.residual_A)
    assert np.log2(residuals[0] / residuals[1]) >= 1.5
