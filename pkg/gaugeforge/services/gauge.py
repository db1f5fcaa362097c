"""Gauge construction: P = exp(U) by Newton continuation, Q from the linear
system with boundary Id, A = QP, and the verification of the gauge equation
Delta A + A Omega = 0 with the distance of A to O(n).
"""
import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from gaugeforge.errors import DomainError, MonitorBreachError, SolverFailureError
from gaugeforge.schemas.report_schemas import (
    ContinuationStep,
    ContinuationTrace,
    GaugeDiagnostics,
    SolveReport,
    SweepRow,
    VerificationReport,
)
from gaugeforge.schemas.run_schemas import ContinuationConfig
from gaugeforge.services import liealg
from gaugeforge.services.domain import (
    BallSpec,
    Field,
    GridDomain,
    Symmetry,
    integral,
    lp_norm,
    sobolev2_norm,
)
from gaugeforge.services.elliptic import LinearOperatorSpec, elliptic_service

logger = logging.getLogger(__name__)

INNER_RADIUS = 0.5
PSD_TOL = 1e-10
SLACK_FACTOR = 10.0
FORCING = 0.1
FORCING_CAP = 1e-6


@dataclass(frozen=True)
class AntisymmetricPotential:
    """Omega with its L^{m/2} norm; smoothness_passes is None for potentials smooth by construction."""

    omega: Field
    l_half_m_norm: float
    smoothness_passes: Optional[int] = None

    @classmethod
    def from_field(cls, omega: Field, smoothness_passes: Optional[int] = None) -> "AntisymmetricPotential":
        if omega.symmetry is not Symmetry.ANTISYMMETRIC:
            omega = omega.with_values(omega.values, omega.boundary_values, Symmetry.ANTISYMMETRIC)
        return cls(omega, lp_norm(omega, omega.domain.m / 2.0), smoothness_passes)

    @property
    def domain(self) -> GridDomain:
        return self.omega.domain

    @property
    def n(self) -> int:
        return self.omega.value_shape[-1]

    def scaled(self, t: float) -> "AntisymmetricPotential":
        bvals = None if self.omega.boundary_values is None else t * self.omega.boundary_values
        omega = Field(self.domain, t * self.omega.values, bvals, Symmetry.ANTISYMMETRIC)
        return AntisymmetricPotential(omega, abs(t) * self.l_half_m_norm, self.smoothness_passes)


@dataclass(frozen=True)
class GaugeTriple:
    U: Field
    P: Field
    Q: Field
    A: Field
    diagnostics: GaugeDiagnostics
    trace: ContinuationTrace = field(default_factory=ContinuationTrace)
    q_report: Optional[SolveReport] = None


def _identity(domain: GridDomain, n: int) -> Tuple[np.ndarray, np.ndarray]:
    eye = np.eye(n)
    return (np.broadcast_to(eye, (domain.n_interior, n, n)).copy(),
            np.broadcast_to(eye, (domain.n_boundary, n, n)).copy())


def _minus_identity(f: Field) -> Field:
    n = f.value_shape[-1]
    eye = np.eye(n)
    return Field(f.domain, f.values - eye, f.boundary_or_zero() - eye)


def _frobenius(values: np.ndarray) -> np.ndarray:
    return np.linalg.norm(values, axis=(-2, -1))


def _inner_mask(domain: GridDomain) -> np.ndarray:
    return domain.in_ball(BallSpec(tuple(domain.center), INNER_RADIUS * domain.radius))


def _unit_directions(n: int, count: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(count, n))
    return X / np.linalg.norm(X, axis=1, keepdims=True)


class GaugeService:
    def frame(self, U: Field) -> Field:
        """P = exp(U) node-wise, Id on the sphere where U vanishes."""
        return Field(U.domain, liealg.exp_so(U.values), liealg.exp_so(U.boundary_or_zero()), Symmetry.ORTHOGONAL)

    def frame_laplacians(self, P: Field) -> Tuple[np.ndarray, np.ndarray]:
        """(P^t Delta_h P, Delta_h(P^t) P) at interior nodes."""
        domain = P.domain
        Pt, Pbt = liealg.transpose(P.values), liealg.transpose(P.boundary_or_zero())
        lap_P = domain.laplacian_values(P.values, P.boundary_or_zero())
        lap_Pt = domain.laplacian_values(Pt, Pbt)
        return Pt @ lap_P, lap_Pt @ P.values

    def residual_F(self, U: Field, omega: AntisymmetricPotential) -> Field:
        """1/2 (P^t Delta_h P - Delta_h(P^t) P) + Omega with P = exp(U)."""
        return self._frame_residual(self.frame(U), omega)

    def _frame_residual(self, P: Field, omega: AntisymmetricPotential) -> Field:
        left, right = self.frame_laplacians(P)
        R = 0.5 * (left - right) + omega.omega.values
        return Field(P.domain, liealg.skew(R), None, Symmetry.ANTISYMMETRIC)

    def linearized_operator(self, P0: Field, exact: bool = True) -> LinearOperatorSpec:
        """L_{P0} on so(n)-valued perturbations zeta of P0 = P0 (Id + zeta).

        exact=True is the derivative of residual_F itself (Newton uses it);
        exact=False is Delta zeta + sum_d [P0^t d_d P0, d_d zeta] + [Omega0, zeta].
        """
        domain = P0.domain
        n = P0.value_shape[-1]
        left, right = self.frame_laplacians(P0)
        if exact:
            return LinearOperatorSpec(domain, (n, n), frame=P0, zero_order=(-0.5 * right, -0.5 * left))

        omega0 = 0.5 * (left - right)
        grads = domain.gradient_values(P0.values, P0.boundary_or_zero())
        Pt = liealg.transpose(P0.values)
        first_order = []
        for d in range(domain.m):
            a_d = Pt @ grads[d]
            first_order.append((a_d, -a_d))
        return LinearOperatorSpec(domain, (n, n), first_order=first_order, zero_order=(omega0, -omega0))

    def linearized_apply(self, P0: Field, omega0: Optional[Field], zeta: Field, exact: bool = True) -> Field:
        left, right = self.frame_laplacians(P0)
        if omega0 is not None:
            mismatch = float(np.max(np.abs(omega0.values - 0.5 * (left - right)), initial=0.0))
            if mismatch > 1e-10 * max(1.0, float(np.max(np.abs(left), initial=0.0))):
                raise DomainError(f"Omega0 does not belong to P0 (mismatch {mismatch:.3e})")
        spec = self.linearized_operator(P0, exact=exact)
        return Field(zeta.domain, spec.apply(zeta.values, zeta.boundary_or_zero()))

    def gradient_energy(self, P: Field) -> float:
        """int |grad P|^m over the ball."""
        domain = P.domain
        grads = domain.gradient_values(P.values, P.boundary_or_zero())
        density = np.sum(grads ** 2, axis=(0, 2, 3))
        return integral(domain, density ** (domain.m / 2.0))

    def curvature_coefficients(self, P: Field) -> Tuple[List[np.ndarray], np.ndarray]:
        """b_d = skew(d_d P P^t) and K = -(sum_d b_d^2), symmetric PSD node-wise."""
        domain = P.domain
        grads = domain.gradient_values(P.values, P.boundary_or_zero())
        Pt = liealg.transpose(P.values)
        b = [liealg.skew(grads[d] @ Pt) for d in range(domain.m)]
        K = -sum(b_d @ b_d for b_d in b)
        return b, K

    def _w2_and_ratio(self, P: Field) -> Tuple[float, Optional[float], float]:
        q = P.domain.m / 2.0
        w2 = sobolev2_norm(_minus_identity(P), q)
        left, right = self.frame_laplacians(P)
        gauge_norm = lp_norm(Field(P.domain, left - right), q)
        ratio = w2 / gauge_norm if gauge_norm > 0 else None
        return w2, ratio, gauge_norm

    def construct_P(self, omega: AntisymmetricPotential,
                    cfg: ContinuationConfig) -> Tuple[Field, Field, ContinuationTrace]:
        """Newton continuation along Omega_t = t Omega, t = 1/steps, ..., 1."""
        domain = omega.domain
        n = omega.n
        q = domain.m / 2.0
        if omega.smoothness_passes is not None and omega.smoothness_passes < 1:
            raise DomainError(f"sampled potential needs at least one smoothing pass, got {omega.smoothness_passes}")
        if omega.l_half_m_norm > cfg.max_omega_norm:
            raise MonitorBreachError("max_omega_norm", omega.l_half_m_norm, cfg.max_omega_norm,
                                     detail="potential too large for the continuation")

        U = Field(domain, np.zeros((domain.n_interior, n, n)), np.zeros((domain.n_boundary, n, n)),
                  Symmetry.ANTISYMMETRIC)
        trace = ContinuationTrace()
        if omega.l_half_m_norm == 0.0:
            logger.info("Zero potential: P = Id without Newton iterations")
            return U, self.frame(U), trace

        target = cfg.newton_tol * max(omega.l_half_m_norm, 1.0)
        P = self.frame(U)
        for step in range(1, cfg.steps + 1):
            t = step / cfg.steps
            omega_t = omega.scaled(t)
            R = self._frame_residual(P, omega_t)
            r = lp_norm(R, q)
            residuals = [r]
            iterations: List[int] = []
            start = r
            while r > target:
                if len(iterations) >= cfg.newton_max:
                    raise MonitorBreachError("newton_convergence", r, target, step=step,
                                             detail=f"no convergence in {cfg.newton_max} Newton iterations")
                w2, _, _ = self._w2_and_ratio(P)
                spec = self.linearized_operator(P, exact=True)
                # linear tolerance follows the Newton residual
                forcing = max(cfg.linear_tol, min(FORCING_CAP, FORCING * r / start))
                zeta, report = elliptic_service.solve_perturbed(
                    spec, Field(domain, -R.values), None, forcing,
                    monitors={"step": step, "t": t, "w2_P_minus_id": w2, "newton_residual": r},
                )
                size = float(np.max(_frobenius(U.values), initial=0.0))
                try:
                    increment = liealg.dexp_conj_inverse(U.values, liealg.skew(zeta.values))
                except DomainError as e:
                    raise MonitorBreachError("dexp_guard", size, liealg.DEXP_INVERSE_GUARD, step=step,
                                             detail=e.message) from e
                U = Field(domain, liealg.skew(U.values + increment), U.boundary_values, Symmetry.ANTISYMMETRIC)
                P = self.frame(U)
                R = self._frame_residual(P, omega_t)
                r = lp_norm(R, q)
                residuals.append(r)
                iterations.append(report.iterations)
                logger.debug(f"Step {step} Newton {len(iterations)}: residual {r:.3e} "
                             f"({report.iterations} Krylov iterations)")
                if not math.isfinite(r) or r > cfg.divergence_factor * max(start, target):
                    raise MonitorBreachError("newton_divergence", r, cfg.divergence_factor * max(start, target),
                                             step=step, detail="Newton residual grew")

            w2, ratio, gauge_norm = self._w2_and_ratio(P)
            if w2 > cfg.eps1_monitor:
                raise MonitorBreachError("eps1", w2, cfg.eps1_monitor, step=step,
                                         detail="||P - Id||_W2 proxy too large")
            trace.steps.append(ContinuationStep(
                step=step,
                t=t,
                newton_residuals=residuals,
                linear_iterations=iterations,
                w2_P_minus_id=w2,
                gauge_residual_norm=gauge_norm,
                a3_ratio=ratio,
                max_U=float(np.max(_frobenius(U.values), initial=0.0)),
            ))
            logger.info(f"Continuation step {step}/{cfg.steps}: {len(iterations)} Newton iterations, "
                        f"residual {r:.3e}, ||P-Id||_W2 {w2:.3e}")
        return U, P, trace

    def construct_Q(self, P: Field, tol: float = 1e-10,
                    eps0: Optional[float] = None) -> Tuple[Field, SolveReport]:
        """Q with Delta Q + 2 sum_d d_d Q b_d + Q sum_d b_d^2 = 0 inside, Q = Id on the sphere."""
        domain = P.domain
        n = P.value_shape[-1]
        energy = self.gradient_energy(P)
        if eps0 is not None and energy >= eps0:
            raise MonitorBreachError("eps0", energy, eps0, detail="int |grad P|^m too large for the Q equation")

        b, K = self.curvature_coefficients(P)
        eye, eye_b = _identity(domain, n)
        if not any(np.any(b_d) for b_d in b):
            logger.info("Flat frame: Q = Id without a solve")
            return Field(domain, eye, eye_b), SolveReport(iterations=0, relative_residual=0.0)

        # Q = Id + R with R = 0 on the sphere; the operator maps Id to Id sum_d b_d^2 = -K
        spec = LinearOperatorSpec(
            domain, (n, n),
            first_order=[(None, 2.0 * b_d) for b_d in b],
            zero_order=(None, -K),
        )
        try:
            R, report = elliptic_service.solve_perturbed(spec, Field(domain, K), None, tol, monitors={"eps0": energy})
        except SolverFailureError as e:
            raise MonitorBreachError("eps0", energy, eps0 if eps0 is not None else float("nan"),
                                     detail=f"Q solve failed: {e.message}") from e
        logger.info(f"Solved Q: {report.iterations} Krylov iterations, int |grad P|^m = {energy:.3e}")
        return Field(domain, eye + R.values, eye_b), report

    def max_principle_checks(self, Q: Field, directions: int = 10, seed: int = 0) -> Tuple[float, float]:
        """(min over nodes and X of Delta_h |Q^t X|^2, sup over nodes and X of |Q^t X|^2)."""
        domain = Q.domain
        X = _unit_directions(Q.value_shape[-1], directions, seed)
        Qt, Qbt = liealg.transpose(Q.values), liealg.transpose(Q.boundary_or_zero())
        sub_min, sup = math.inf, -math.inf
        for x in X:
            values = np.sum((Qt @ x) ** 2, axis=1)
            bvals = np.sum((Qbt @ x) ** 2, axis=1)
            sub_min = min(sub_min, float(domain.laplacian_values(values, bvals).min()))
            sup = max(sup, float(values.max()))
        return sub_min, sup

    def assemble_A(self, U: Field, P: Field, Q: Field, omega: AntisymmetricPotential,
                   trace: Optional[ContinuationTrace] = None) -> GaugeTriple:
        domain = P.domain
        q = domain.m / 2.0
        trace = trace or ContinuationTrace()
        A = Field(domain, Q.values @ P.values, Q.boundary_or_zero() @ P.boundary_or_zero())
        lap_A = domain.laplacian_values(A.values, A.boundary_values)
        residual_A = lp_norm(Field(domain, lap_A + A.values @ omega.omega.values), q)
        inner = _inner_mask(domain)
        dist_A = float(liealg.project_orthogonal(A.values[inner]).dist.max()) if inner.any() else 0.0
        diagnostics = GaugeDiagnostics(
            residual_P=lp_norm(self.residual_F(U, omega), q),
            residual_A=residual_A,
            dist_A_On=dist_A,
            w2_proxy_norms={
                "P_minus_id": sobolev2_norm(_minus_identity(P), q),
                "Q_minus_id": sobolev2_norm(_minus_identity(Q), q),
                "A_minus_id": sobolev2_norm(_minus_identity(A), q),
            },
            continuation_steps=len(trace.steps),
            eps0_monitor=self.gradient_energy(P),
            newton_residuals=[s.newton_residuals for s in trace.steps],
        )
        logger.info(f"Assembled A: residual {residual_A:.3e}, dist(A, O(n)) on B_1/2 {dist_A:.3e}")
        return GaugeTriple(U=U, P=P, Q=Q, A=A, diagnostics=diagnostics, trace=trace)

    def build_gauge(self, omega: AntisymmetricPotential, cfg: ContinuationConfig) -> GaugeTriple:
        U, P, trace = self.construct_P(omega, cfg)
        Q, q_report = self.construct_Q(P, cfg.linear_tol, cfg.eps0_monitor)
        triple = self.assemble_A(U, P, Q, omega, trace)
        return GaugeTriple(U=triple.U, P=triple.P, Q=triple.Q, A=triple.A,
                           diagnostics=triple.diagnostics, trace=trace, q_report=q_report)

    def verify_gauge(self, triple: GaugeTriple, omega: AntisymmetricPotential,
                     cfg: Optional[ContinuationConfig] = None, directions: int = 10,
                     seed: int = 0) -> VerificationReport:
        cfg = cfg or ContinuationConfig()
        domain = triple.A.domain
        m = domain.m
        h2 = domain.h ** 2
        diag = triple.diagnostics
        inner = _inner_mask(domain)

        energy = diag.eps0_monitor
        energy_scale = energy ** (2.0 / m)
        Q_inner = triple.Q.values[inner]
        projection_Q = liealg.project_orthogonal(Q_inner)
        projection_A = liealg.project_orthogonal(triple.A.values[inner])
        dist_Q = float(projection_Q.dist.max(initial=0.0))

        eye = np.eye(omega.n)
        gram = eye - liealg.transpose(Q_inner) @ Q_inner
        gram_norm = _frobenius(gram)
        S = projection_Q.S
        bilinear = _frobenius(2.0 * S + S @ S)
        bilinear_ok = bool(np.all(np.abs(bilinear - gram_norm) <= 1e-8 * np.maximum(1.0, gram_norm))
                           and np.all(bilinear + 1e-14 >= _frobenius(S)))

        X = _unit_directions(omega.n, directions, seed)
        Qt = liealg.transpose(triple.Q.values)
        harnack_sup, harnack_int, harnack_ratio = 0.0, 0.0, None
        for x in X:
            defect = 1.0 - np.sum((Qt @ x) ** 2, axis=1)
            sup = float(defect[inner].max(initial=0.0))
            total = integral(domain, defect)
            harnack_sup = max(harnack_sup, sup)
            harnack_int = max(harnack_int, total)
            if total > 0:
                ratio = sup / total
                harnack_ratio = ratio if harnack_ratio is None else max(harnack_ratio, ratio)

        sub_min, sup_QX = self.max_principle_checks(triple.Q, directions, seed)
        _, K = self.curvature_coefficients(triple.P)
        psd_min = float(np.linalg.eigvalsh(K).min()) if K.size else 0.0
        w2 = diag.w2_proxy_norms
        w2_P = w2["P_minus_id"]
        max_principle_ok = sup_QX <= 1.0 + SLACK_FACTOR * h2
        subharmonic_ok = sub_min >= -SLACK_FACTOR * h2
        monitors_passed = (
            energy < cfg.eps0_monitor
            and w2_P <= cfg.eps1_monitor
            and max_principle_ok
            and subharmonic_ok
            and psd_min >= -PSD_TOL
        )
        report = VerificationReport(
            omega_norm=omega.l_half_m_norm,
            residual_P=diag.residual_P,
            residual_A=diag.residual_A,
            dist_A_On=diag.dist_A_On,
            dist_Q_On=dist_Q,
            grad_P_energy=energy,
            eps0_monitor=energy,
            eps1_monitor=w2_P,
            dist_Q_ratio=dist_Q / energy_scale if energy_scale > 0 else None,
            w2_Q_minus_id=w2["Q_minus_id"],
            w2_Q_ratio=w2["Q_minus_id"] / energy_scale if energy_scale > 0 else None,
            w2_A_minus_id=w2["A_minus_id"],
            w2_P_minus_id=w2_P,
            harnack_sup=harnack_sup,
            harnack_integral=harnack_int,
            harnack_ratio=harnack_ratio,
            gram_defect=float(gram_norm.max(initial=0.0)),
            s_symmetry_defect=float(max(projection_Q.symmetry_defect.max(initial=0.0),
                                        projection_A.symmetry_defect.max(initial=0.0))),
            bilinear_ok=bilinear_ok,
            max_principle_sup=sup_QX,
            subharmonic_min=sub_min,
            max_principle_ok=max_principle_ok,
            subharmonic_ok=subharmonic_ok,
            psd_min_eigenvalue=psd_min,
            steps=len(triple.trace.steps),
            newton_residuals=[s.newton_residuals for s in triple.trace.steps],
            a3_ratios=[s.a3_ratio for s in triple.trace.steps],
            monitors_passed=monitors_passed,
        )
        if not monitors_passed:
            logger.warning(f"Gauge verification: monitors not passed (eps0 {energy:.3e}, eps1 {w2_P:.3e}, "
                           f"sup|Q^tX|^2 {sup_QX:.6f}, min Delta {sub_min:.3e})")
        return report

    def sweep_convergence_radius(self, omega: AntisymmetricPotential, norms: Sequence[float],
                                 cfg: ContinuationConfig) -> List[SweepRow]:
        """Rescale Omega to each norm and record whether the whole construction goes through."""
        rows = []
        for norm in norms:
            scaled = omega.scaled(norm / omega.l_half_m_norm if omega.l_half_m_norm > 0 else 0.0)
            try:
                triple = self.build_gauge(scaled, cfg)
            except (MonitorBreachError, SolverFailureError) as e:
                logger.info(f"Sweep norm {norm}: construction failed ({e.message})")
                rows.append(SweepRow(target_norm=norm, converged=False, newton_iterations=0, failure=e.message))
                continue
            rows.append(SweepRow(
                target_norm=norm,
                converged=True,
                newton_iterations=triple.trace.newton_iterations,
                residual_A=triple.diagnostics.residual_A,
                dist_A_On=triple.diagnostics.dist_A_On,
                grad_P_energy=triple.diagnostics.eps0_monitor,
            ))
        return rows


gauge_service = GaugeService()
