"""Sparse solves on a GridDomain.

The zero-Dirichlet inverse Laplacian is only ever used through an incomplete
LU factorization of the interior Shortley-Weller matrix; every solve is a
preconditioned BiCGSTAB on the stacked unknown (n_int * prod(value_shape)).
"""
import logging
import threading
import time
import weakref
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.sparse.linalg import LinearOperator, bicgstab, spilu

from gaugeforge.config import settings
from gaugeforge.errors import DomainError, SolverFailureError
from gaugeforge.schemas.report_schemas import SolveReport
from gaugeforge.services.domain import Field, GridDomain

logger = logging.getLogger(__name__)

MIN_TOL = 1e-14
MAX_TOL = 1e-4
MAX_RESTARTS = 3

Coefficient = Optional[np.ndarray]


def _values(f) -> Coefficient:
    if f is None:
        return None
    return f.values if isinstance(f, Field) else np.asarray(f, dtype=float)


def _left(coeff: Coefficient, u: np.ndarray) -> np.ndarray:
    if u.ndim == 1:
        return coeff * u
    if u.ndim == 2:
        return np.einsum("kij,kj->ki", coeff, u)
    return coeff @ u


@dataclass
class LinearOperatorSpec:
    """u -> base(u) + sum_d (left_d du/dx_d + du/dx_d right_d) + left u + u right + div(C_d u).

    base is Delta_h u, or with a rotation `frame` F the Leibniz-symmetric
    1/2 [F^t Delta_h(F u) + Delta_h(u F^t) F], or with `inner` G the
    divergence-form Delta_h(G u). Coefficients are Fields (matrix values) or
    plain (n_int, n, n) arrays; right factors need matrix unknowns. Divergence
    coefficients C_d are Fields with boundary values, since the flux C_d u is
    differenced up to the sphere.
    """

    domain: GridDomain
    value_shape: Tuple[int, ...]
    frame: Optional[Field] = None
    inner: Optional[Field] = None
    first_order: List[Tuple[Coefficient, Coefficient]] = field(default_factory=list)
    zero_order: Tuple[Coefficient, Coefficient] = (None, None)
    divergence_order: List[Field] = field(default_factory=list)

    def __post_init__(self):
        self.value_shape = tuple(self.value_shape)
        if len(self.value_shape) not in (0, 1, 2):
            raise DomainError(f"unsupported unknown shape {self.value_shape}")
        if self.frame is not None and self.inner is not None:
            raise DomainError("an operator has either a frame or an inner factor, not both")
        if self.frame is not None and len(self.value_shape) != 2:
            raise DomainError("a frame base term needs matrix unknowns")
        if self.first_order and len(self.first_order) != self.domain.m:
            raise DomainError(f"first_order needs {self.domain.m} directions, got {len(self.first_order)}")
        if self.divergence_order and len(self.divergence_order) != self.domain.m:
            raise DomainError(f"divergence_order needs {self.domain.m} directions")
        if any(not isinstance(c, Field) or c.boundary_values is None for c in self.divergence_order):
            raise DomainError("divergence coefficients need boundary values")
        self.first_order = [(_values(a), _values(b)) for a, b in self.first_order]
        self.zero_order = (_values(self.zero_order[0]), _values(self.zero_order[1]))
        if len(self.value_shape) < 2:
            has_right = self.zero_order[1] is not None or any(b is not None for _, b in self.first_order)
            if has_right:
                raise DomainError("right-multiplying coefficients need matrix unknowns")

    @classmethod
    def laplacian(cls, domain: GridDomain, value_shape: Sequence[int] = ()) -> "LinearOperatorSpec":
        return cls(domain, tuple(value_shape))

    @property
    def size(self) -> int:
        return self.domain.n_interior * int(np.prod(self.value_shape, dtype=int))

    def apply(self, values: np.ndarray, boundary_values: Optional[np.ndarray] = None) -> np.ndarray:
        domain = self.domain
        if boundary_values is None:
            boundary_values = np.zeros((domain.n_boundary,) + self.value_shape)

        if self.frame is not None:
            F, Fb = self.frame.values, self.frame.boundary_or_zero()
            Ft, Fbt = np.swapaxes(F, 1, 2), np.swapaxes(Fb, 1, 2)
            left = domain.laplacian_values(F @ values, Fb @ boundary_values)
            right = domain.laplacian_values(values @ Ft, boundary_values @ Fbt)
            out = 0.5 * (Ft @ left + right @ F)
        elif self.inner is not None:
            G, Gb = self.inner.values, self.inner.boundary_or_zero()
            out = domain.laplacian_values(_left(G, values), _left(Gb, boundary_values))
        else:
            out = domain.laplacian_values(values, boundary_values)

        if self.first_order:
            grads = domain.gradient_values(values, boundary_values)
            for d, (left, right) in enumerate(self.first_order):
                if left is not None:
                    out = out + _left(left, grads[d])
                if right is not None:
                    out = out + grads[d] @ right

        left, right = self.zero_order
        if left is not None:
            out = out + _left(left, values)
        if right is not None:
            out = out + values @ right

        if self.divergence_order:
            flux = np.stack([_left(c.values, values) for c in self.divergence_order])
            bflux = np.stack([_left(c.boundary_values, boundary_values) for c in self.divergence_order])
            out = out + domain.divergence_values(flux, bflux)
        return out


class EllipticService:
    def __init__(self):
        self._preconditioners: "weakref.WeakKeyDictionary[GridDomain, object]" = weakref.WeakKeyDictionary()
        self._lock = threading.Lock()

    def preconditioner(self, domain: GridDomain):
        """Incomplete LU of the interior Laplacian, cached per domain."""
        with self._lock:
            ilu = self._preconditioners.get(domain)
            if ilu is not None:
                return ilu
            ilu = spilu(
                domain.lap_int.tocsc(),
                drop_tol=settings.ILU_DROP_TOL,
                fill_factor=settings.ILU_FILL_FACTOR,
            )
            self._preconditioners[domain] = ilu
            logger.debug(f"Factored Delta_0 preconditioner for {domain.n_interior} nodes")
        return ilu

    def _krylov(self, spec: LinearOperatorSpec, rhs: np.ndarray, g: Optional[np.ndarray],
                tol: float) -> Tuple[np.ndarray, SolveReport]:
        if not (MIN_TOL < tol < MAX_TOL):
            raise DomainError(f"tolerance {tol} outside ({MIN_TOL}, {MAX_TOL})")
        domain = spec.domain
        shape = (domain.n_interior,) + spec.value_shape
        rhs = np.asarray(rhs, dtype=float)
        if rhs.shape != shape:
            raise DomainError(f"right-hand side of shape {rhs.shape}, expected {shape}")
        if not np.all(np.isfinite(rhs)):
            raise DomainError("right-hand side must be finite")
        if g is not None and not np.all(np.isfinite(g)):
            raise DomainError("boundary data must be finite")

        start = time.perf_counter()
        zero = np.zeros(shape)
        lifted = rhs - spec.apply(zero, g) if g is not None else rhs
        b = lifted.reshape(-1)
        b_norm = float(np.linalg.norm(b))
        if b_norm == 0.0:
            return zero, SolveReport(iterations=0, relative_residual=0.0, converged=True,
                                     wall_time=time.perf_counter() - start)

        ilu = self.preconditioner(domain)
        width = spec.size // domain.n_interior

        def matvec(x):
            return spec.apply(x.reshape(shape)).reshape(-1)

        def precondition(x):
            cols = x.reshape(domain.n_interior, width)
            return ilu.solve(cols).reshape(-1)

        operator = LinearOperator((spec.size, spec.size), matvec=matvec, dtype=float)
        M = LinearOperator((spec.size, spec.size), matvec=precondition, dtype=float)

        iterations = 0

        def count(_):
            nonlocal iterations
            iterations += 1

        x = np.zeros_like(b)
        rel = 1.0
        for _ in range(MAX_RESTARTS):
            x, info = bicgstab(operator, b, x0=x, rtol=0.5 * tol, atol=0.0,
                               maxiter=settings.KRYLOV_MAXITER, M=M, callback=count)
            residual = b - matvec(x)
            rel = float(np.linalg.norm(residual) / b_norm) if np.all(np.isfinite(x)) else float("inf")
            if rel <= tol or not np.isfinite(rel) or info < 0:
                break
            logger.debug(f"BiCGSTAB restart: info={info}, relative residual {rel:.3e}")

        report = SolveReport(
            iterations=iterations,
            relative_residual=rel,
            converged=bool(np.isfinite(rel) and rel <= tol),
            wall_time=time.perf_counter() - start,
        )
        logger.debug(f"Krylov solve: {report.iterations} iterations, relative residual {rel:.3e}")
        return x.reshape(shape), report

    def solve_dirichlet(self, rhs: Field, g: Optional[np.ndarray], tol: float = 1e-10) -> Tuple[Field, SolveReport]:
        """Delta_h u = rhs inside, u = g on the sphere; every value component solved on its own."""
        domain = rhs.domain
        value_shape = rhs.value_shape
        bvals = np.zeros((domain.n_boundary,) + value_shape) if g is None else np.asarray(g, dtype=float)
        width = int(np.prod(value_shape, dtype=int))
        flat_rhs = rhs.values.reshape(domain.n_interior, width)
        flat_g = bvals.reshape(domain.n_boundary, width)

        spec = LinearOperatorSpec.laplacian(domain)
        columns, reports = [], []
        for c in range(width):
            u, report = self._krylov(spec, flat_rhs[:, c], flat_g[:, c], tol)
            columns.append(u)
            reports.append(report)
        values = np.stack(columns, axis=1).reshape((domain.n_interior,) + value_shape)
        report = SolveReport(
            iterations=sum(r.iterations for r in reports),
            relative_residual=max(r.relative_residual for r in reports),
            converged=all(r.converged for r in reports),
            wall_time=sum(r.wall_time for r in reports),
        )
        if not report.converged:
            logger.warning(f"Dirichlet solve did not converge: relative residual {report.relative_residual:.3e}")
        return Field(domain, values, bvals), report

    def solve_perturbed(self, spec: LinearOperatorSpec, rhs: Field, g: Optional[np.ndarray] = None,
                        tol: float = 1e-10, monitors: Optional[Dict[str, float]] = None) -> Tuple[Field, SolveReport]:
        """Solve spec(u) = rhs with u = g on the sphere as one coupled system.

        Raises SolverFailureError carrying `monitors` (the smallness values
        the caller tracks) when the residual contract is not met.
        """
        domain = spec.domain
        bvals = np.zeros((domain.n_boundary,) + spec.value_shape) if g is None else np.asarray(g, dtype=float)
        values, report = self._krylov(spec, rhs.values, bvals, tol)
        if not report.converged:
            logger.error(f"Perturbed solve failed: relative residual {report.relative_residual:.3e} "
                         f"after {report.iterations} iterations; monitors {monitors or {}}")
            raise SolverFailureError(
                f"Krylov solve did not reach tolerance {tol:.1e} "
                f"(relative residual {report.relative_residual:.3e}); the perturbation is likely too large",
                report=report,
                monitors=monitors,
            )
        return Field(domain, values, bvals), report


elliptic_service = EllipticService()
