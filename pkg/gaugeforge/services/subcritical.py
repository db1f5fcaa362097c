"""The system Delta v + Omega v = 0, its conservation form
div(A grad v - grad A v) = 0, and the Morrey-decay experiments on small balls.
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from gaugeforge.config import settings
from gaugeforge.schemas.report_schemas import DecayReport, DecayRow, IntegrabilityRow, SolveReport, StateSource
from gaugeforge.services.domain import (
    BallSpec,
    Field,
    GridDomain,
    divergence,
    gradient,
    integral,
    lp_norm,
    pointwise_norm,
    restrict,
    sub_domain,
)
from gaugeforge.services.elliptic import LinearOperatorSpec, elliptic_service
from gaugeforge.services.gauge import AntisymmetricPotential
from gaugeforge.services.potentials import manufactured_state

logger = logging.getLogger(__name__)

GAMMA_RADII = 6
MAX_GAMMA_RADIUS = 0.25
MIN_GAMMA_RADIUS = 0.125
SLACK_PER_CELL = 5.0


@dataclass(frozen=True)
class StateField:
    v: Field
    g: np.ndarray
    source: StateSource
    report: SolveReport


@dataclass(frozen=True)
class LocalDecomposition:
    """w = phi + xi on B_r(x0): phi has zero trace, xi is discrete-harmonic."""

    center: Tuple[float, ...]
    radius: float
    w: Field
    phi: Field
    xi: Field
    harmonic_defect: float
    report: SolveReport


def _boundary_values(g, domain: GridDomain) -> np.ndarray:
    if isinstance(g, Field):
        return g.boundary_or_zero()
    return np.asarray(g, dtype=float).reshape(domain.n_boundary, -1)


def _power_integral(f: Field, p: float, region: Optional[BallSpec] = None) -> float:
    return integral(f.domain, pointwise_norm(f.values) ** p, region)


class SubcriticalService:
    def manufactured(self, domain: GridDomain, k: Sequence[float],
                     l: Sequence[float]) -> Tuple[StateField, AntisymmetricPotential]:
        """Exact state of the manufactured family with its constant potential."""
        v, potential = manufactured_state(domain, k, l)
        return StateField(v=v, g=v.boundary_values, source=StateSource.MANUFACTURED, report=SolveReport()), potential

    def solve_direct(self, omega: AntisymmetricPotential, g, tol: float = 1e-10) -> StateField:
        """Delta_h v + Omega v = 0 inside, v = g on the sphere."""
        domain = omega.domain
        bvals = _boundary_values(g, domain)
        n = bvals.shape[1]
        spec = LinearOperatorSpec(domain, (n,), zero_order=(omega.omega.values, None))
        rhs = Field(domain, np.zeros((domain.n_interior, n)))
        v, report = elliptic_service.solve_perturbed(spec, rhs, bvals, tol,
                                                     monitors={"omega_norm": omega.l_half_m_norm})
        logger.info(f"Direct solve: {report.iterations} iterations, relative residual {report.relative_residual:.3e}")
        return StateField(v=v, g=bvals, source=StateSource.DIRECT, report=report)

    def conservation_operator(self, A: Field) -> LinearOperatorSpec:
        """v -> Delta_h(A v) - 2 div_h(d_d A v), the product reading of div(A grad v - grad A v)."""
        domain = A.domain
        n = A.value_shape[-1]
        coefficients = [Field(domain, -2.0 * g.values, -2.0 * g.boundary_values) for g in gradient(A)]
        return LinearOperatorSpec(domain, (n,), inner=A, divergence_order=coefficients)

    def conservation_residual(self, A: Field, v: Field) -> float:
        """L^1 norm of the conservation-form residual over nodes farther than 2h from the sphere."""
        domain = A.domain
        residual = self.conservation_operator(A).apply(v.values, v.boundary_or_zero())
        mask = domain.distance_to_boundary() > 2.0 * domain.h
        return float(np.sum(domain.weights[mask] * pointwise_norm(residual)[mask]))

    def solve_conservation(self, A: Field, g, tol: float = 1e-10) -> StateField:
        domain = A.domain
        bvals = _boundary_values(g, domain)
        n = bvals.shape[1]
        rhs = Field(domain, np.zeros((domain.n_interior, n)))
        v, report = elliptic_service.solve_perturbed(self.conservation_operator(A), rhs, bvals, tol)
        logger.info(f"Conservation solve: {report.iterations} iterations, "
                    f"relative residual {report.relative_residual:.3e}")
        return StateField(v=v, g=bvals, source=StateSource.CONSERVATION, report=report)

    def relative_difference(self, v: Field, w: Field) -> float:
        denominator = lp_norm(v, 2)
        if denominator == 0.0:
            return lp_norm(w, 2)
        return lp_norm(Field(v.domain, v.values - w.values), 2) / denominator

    def local_decomposition(self, A: Field, v: Field, x0: Sequence[float], r: float,
                            tol: float = 1e-10) -> LocalDecomposition:
        """Split w = A v on B_r(x0) into phi (Delta phi = 2 div(grad A A^{-1} w), phi = 0 on the
        sub-sphere) and xi = w - phi."""
        domain = A.domain
        w_values = np.einsum("kij,kj->ki", A.values, v.values)
        w_bvals = np.einsum("kij,kj->ki", A.boundary_or_zero(), v.boundary_or_zero())
        grads = gradient(A)
        pulled = np.einsum("kij,kj->ki", np.linalg.inv(A.values), w_values)
        pulled_b = np.einsum("kij,kj->ki", np.linalg.inv(A.boundary_or_zero()), w_bvals)
        flux = [Field(domain, np.einsum("kij,kj->ki", g.values, pulled),
                      np.einsum("kij,kj->ki", g.boundary_values, pulled_b)) for g in grads]
        source = divergence(flux)

        sub = sub_domain(domain, x0, r)
        phi, report = elliptic_service.solve_dirichlet(Field(sub, 2.0 * restrict(source, sub).values), None, tol)
        w_sub = restrict(Field(domain, w_values), sub).values
        xi = Field(sub, w_sub - phi.values)

        full = sub.full_stencil
        if full.any():
            lap_xi = np.asarray(sub.lap_int @ xi.values)[full]
            scale = max(float(np.max(pointwise_norm(w_sub))), 1e-300)
            defect = float(np.max(pointwise_norm(lap_xi))) / scale
        else:
            defect = 0.0
        return LocalDecomposition(
            center=tuple(float(c) for c in x0),
            radius=float(r),
            w=Field(sub, w_sub),
            phi=phi,
            xi=xi,
            harmonic_defect=defect,
            report=report,
        )

    def _decay_row(self, A: Field, v: Field, x0: Sequence[float], r: float, lam: float,
                   tol: float) -> DecayRow:
        domain = A.domain
        m = domain.m
        p = m / (m - 2.0)
        h = domain.h
        dec = self.local_decomposition(A, v, x0, r, tol)
        inner = BallSpec(dec.center, lam * r)

        xi_total = _power_integral(dec.xi, p)
        w_total = _power_integral(dec.w, p)
        xi_ratio = _power_integral(dec.xi, p, inner) / xi_total if xi_total > 0 else 0.0
        w_ratio = _power_integral(dec.w, p, inner) / w_total if w_total > 0 else 0.0
        phi_fraction = _power_integral(dec.phi, p) / w_total if w_total > 0 else 0.0

        ball = BallSpec(dec.center, r)
        grads = domain.gradient_values(A.values, A.boundary_or_zero())
        grad_density = np.sum(grads ** 2, axis=(0, 2, 3)) ** (m / 2.0)
        grad_energy = integral(domain, grad_density, ball)
        in_ball = domain.in_ball(ball)
        inv_norm = float(np.max(np.linalg.norm(np.linalg.inv(A.values[in_ball]), ord=2, axis=(1, 2))))
        denominator = inv_norm * grad_energy ** (1.0 / (m - 2.0)) * w_total
        phi_const = _power_integral(dec.phi, p) / denominator if denominator > 1e-300 else None

        c = 2.0 ** (2.0 / (m - 2.0))
        lam_m = lam ** m
        smallness = c * (c * lam_m + phi_fraction + lam_m * phi_fraction * c)

        harmonic_bound = lam_m * (1.0 + SLACK_PER_CELL * h / r)
        combined_bound = 0.5 + SLACK_PER_CELL * h / r
        return DecayRow(
            center=list(dec.center),
            radius=r,
            harmonic_ratio=xi_ratio,
            harmonic_bound=harmonic_bound,
            harmonic_ok=xi_ratio <= harmonic_bound,
            combined_ratio=w_ratio,
            combined_bound=combined_bound,
            combined_ok=w_ratio <= combined_bound,
            phi_fraction=phi_fraction,
            phi_bound_const=phi_const,
            smallness_lhs=smallness,
            harmonic_defect=dec.harmonic_defect,
        )

    def morrey_radii(self, domain: GridDomain, min_radius_cells: float = 4.0) -> np.ndarray:
        """GAMMA_RADII geometric radii up to 1/4, starting no higher than 1/8."""
        low = min(min_radius_cells * domain.h, MIN_GAMMA_RADIUS)
        return np.geomspace(low, MAX_GAMMA_RADIUS, GAMMA_RADII)

    def gamma_fit(self, v: Field, center: Sequence[float], min_radius_cells: float = 4.0) -> Optional[float]:
        """Least-squares slope of log (int_{B_rho}|v|^p)^{(m-2)/m} against log rho."""
        domain = v.domain
        m = domain.m
        p = m / (m - 2.0)
        radii = self.morrey_radii(domain, min_radius_cells)
        levels = []
        for rho in radii:
            value = _power_integral(v, p, BallSpec(tuple(center), float(rho)))
            if value <= 0.0:
                return None
            levels.append(value ** ((m - 2.0) / m))
        slope, _ = np.polyfit(np.log(radii), np.log(levels), 1)
        return float(slope)

    def decay_experiment(self, A: Field, v: Field, centers: Sequence[Sequence[float]], radii: Sequence[float],
                         lam: float = 0.5, tol: float = 1e-10, min_radius_cells: float = 4.0) -> DecayReport:
        m = A.domain.m
        pairs = [(tuple(c), float(r)) for c in centers for r in radii]
        with ThreadPoolExecutor(max_workers=settings.MAX_WORKERS) as pool:
            futures = [pool.submit(self._decay_row, A, v, c, r, lam, tol) for c, r in pairs]
            rows = [f.result() for f in futures]

        gammas = [self.gamma_fit(v, c, min_radius_cells) for c in centers]
        finite = [g for g in gammas if g is not None and math.isfinite(g)]
        report = DecayReport(
            centers=[list(c) for c in centers],
            radii=list(radii),
            lambda_=lam,
            exponent=m / (m - 2.0),
            rows=rows,
            gamma_per_center=gammas,
            gamma_hat=min(finite) if finite else None,
        )
        passed = sum(row.combined_ok for row in rows)
        logger.info(f"Decay experiment: {passed}/{len(rows)} balls within the combined bound, "
                    f"gamma_hat = {report.gamma_hat}")
        return report

    def integrability_report(self, v: Field, exponents: Sequence[float], gamma_hat: Optional[float] = None,
                             min_radius_cells: float = 4.0) -> List[IntegrabilityRow]:
        """Interior L^p norms of v on B_1/2 and the profile r^{-gamma} int_{B_r} |Delta_h v| at the center."""
        domain = v.domain
        center = tuple(float(c) for c in domain.center)
        half = BallSpec(center, 0.5 * domain.radius)
        rows = [IntegrabilityRow(quantity="lp_norm", parameter=float(p), value=lp_norm(v, p, half))
                for p in exponents]

        lap = domain.laplacian_values(v.values, v.boundary_or_zero())
        gamma = gamma_hat if gamma_hat is not None else 0.0
        for rho in self.morrey_radii(domain, min_radius_cells):
            mass = integral(domain, pointwise_norm(lap), BallSpec(center, float(rho)))
            rows.append(IntegrabilityRow(quantity="morrey_laplacian", parameter=float(rho),
                                         value=float(rho) ** (-gamma) * mass))
        return rows


subcritical_service = SubcriticalService()
