"""Dense n x n algebra on so(n) and SO(n).

All functions accept a single matrix (n, n) or a stack (..., n, n) and work
node-wise on stacks.
"""
import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from gaugeforge.errors import DomainError

logger = logging.getLogger(__name__)

DEXP_INVERSE_GUARD = 1.0
POLAR_TOL = 1e-14
POLAR_MAX_ITER = 100
POLAR_SIGMA_MIN = 0.5
SERIES_MAX_TERMS = 120
RODRIGUES_SERIES_BELOW = 1e-4


def transpose(M: np.ndarray) -> np.ndarray:
    return np.swapaxes(M, -1, -2)


def skew(M: np.ndarray) -> np.ndarray:
    return 0.5 * (M - transpose(M))


def sym(M: np.ndarray) -> np.ndarray:
    return 0.5 * (M + transpose(M))


def commutator(X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    return X @ Y - Y @ X


def hat2(theta: float) -> np.ndarray:
    """theta * J with J_12 = 1, the generator of planar rotations."""
    return np.array([[0.0, theta], [-theta, 0.0]])


def antisym_basis(n: int) -> np.ndarray:
    """E_ab = e_a e_b^t - e_b e_a^t for a < b, stacked as (n(n-1)/2, n, n)."""
    pairs = [(a, b) for a in range(n) for b in range(a + 1, n)]
    basis = np.zeros((len(pairs), n, n))
    for k, (a, b) in enumerate(pairs):
        basis[k, a, b] = 1.0
        basis[k, b, a] = -1.0
    return basis


def antisym_coordinates(M: np.ndarray) -> np.ndarray:
    n = M.shape[-1]
    rows, cols = np.triu_indices(n, k=1)
    return M[..., rows, cols]


def antisym_from_coordinates(c: np.ndarray, n: int) -> np.ndarray:
    rows, cols = np.triu_indices(n, k=1)
    out = np.zeros(c.shape[:-1] + (n, n))
    out[..., rows, cols] = c
    out[..., cols, rows] = -c
    return out


def antisym_random(n: int, seed: int) -> np.ndarray:
    """Uniform entries in [-1, 1] on the upper triangle, deterministic per seed."""
    rng = np.random.default_rng(seed)
    return antisym_from_coordinates(rng.uniform(-1.0, 1.0, size=n * (n - 1) // 2), n)


def exp_so(U: np.ndarray) -> np.ndarray:
    """exp(U) for U in so(n), n = 2 and 3 in closed form, otherwise by scaling-and-squaring Pade."""
    U = np.asarray(U, dtype=float)
    n = U.shape[-1]
    if n == 2:
        theta = U[..., 0, 1]
        c, s = np.cos(theta), np.sin(theta)
        return np.stack([np.stack([c, s], axis=-1), np.stack([-s, c], axis=-1)], axis=-2)
    if n == 3:
        return _rodrigues(U)
    return expm(U)


def _rodrigues(U: np.ndarray) -> np.ndarray:
    theta2 = 0.5 * np.sum(U * U, axis=(-2, -1))
    theta = np.sqrt(theta2)
    small = theta < RODRIGUES_SERIES_BELOW
    safe = np.where(small, 1.0, theta)
    a = np.where(small, 1.0 - theta2 / 6.0 + theta2 ** 2 / 120.0, np.sin(safe) / safe)
    b = np.where(small, 0.5 - theta2 / 24.0 + theta2 ** 2 / 720.0, (1.0 - np.cos(safe)) / safe ** 2)
    return np.eye(3) + a[..., None, None] * U + b[..., None, None] * (U @ U)


def dexp_conj(U: np.ndarray, W: np.ndarray) -> np.ndarray:
    """D(U).W = exp(-U) d/dt exp(U + tW)|_{t=0} = sum_k (-ad_U)^k W / (k+1)!"""
    U = np.asarray(U, dtype=float)
    W = np.asarray(W, dtype=float)
    U, W = np.broadcast_arrays(U, W)
    term = W.copy()
    total = W.copy()
    for k in range(1, SERIES_MAX_TERMS):
        term = -commutator(U, term) / (k + 1)
        total = total + term
        if np.max(np.abs(term)) <= 1e-17 * max(1.0, np.max(np.abs(total))):
            break
    return total


def dexp_matrix(U: np.ndarray) -> np.ndarray:
    """Matrix of W -> D(U).W in antisymmetric coordinates, shape (..., d, d)."""
    U = np.asarray(U, dtype=float)
    n = U.shape[-1]
    basis = antisym_basis(n)
    images = dexp_conj(U[..., None, :, :], basis)
    # column j holds the coordinates of D(U).E_j
    return np.swapaxes(antisym_coordinates(images), -1, -2)


def dexp_conj_inverse(U: np.ndarray, Z: np.ndarray) -> np.ndarray:
    """W with D(U).W = Z, solved in the n(n-1)/2-dimensional antisymmetric basis."""
    U = np.asarray(U, dtype=float)
    Z = np.asarray(Z, dtype=float)
    size = float(np.max(np.linalg.norm(U, axis=(-2, -1)))) if U.size else 0.0
    if size > DEXP_INVERSE_GUARD:
        raise DomainError(
            f"dexp inverse guard violated: |U|_F = {size:.3e} > {DEXP_INVERSE_GUARD}; "
            f"use smaller continuation steps or a smaller potential"
        )
    n = U.shape[-1]
    U, Z = np.broadcast_arrays(U, Z)
    matrix = dexp_matrix(U)
    coords = np.linalg.solve(matrix, antisym_coordinates(Z)[..., None])[..., 0]
    return antisym_from_coordinates(coords, n)


@dataclass(frozen=True)
class ProjectionResult:
    R: np.ndarray
    S: np.ndarray
    dist: np.ndarray
    det: np.ndarray

    @property
    def symmetry_defect(self) -> np.ndarray:
        return np.linalg.norm(self.S - transpose(self.S), axis=(-2, -1))


def project_orthogonal(Q: np.ndarray) -> ProjectionResult:
    """Nearest orthogonal matrix in the Frobenius metric (polar factor).

    Newton iteration R <- (R + R^{-t}) / 2; S := R^{-1}(Q - R) is symmetric
    at the projection and |S|_F = dist(Q, O(n)).
    """
    Q = np.asarray(Q, dtype=float)
    n = Q.shape[-1]
    gram_min = np.linalg.eigvalsh(transpose(Q) @ Q)[..., 0]
    if np.any(gram_min <= POLAR_SIGMA_MIN ** 2):
        sigma = math.sqrt(max(float(np.min(gram_min)), 0.0))
        raise DomainError(f"matrix too far from O({n}) to project: smallest singular value {sigma:.3e}")

    R = Q.copy()
    for _ in range(POLAR_MAX_ITER):
        nxt = 0.5 * (R + transpose(np.linalg.inv(R)))
        change = float(np.max(np.abs(nxt - R))) if R.size else 0.0
        R = nxt
        if change <= POLAR_TOL:
            break
    else:
        logger.warning(f"Polar iteration stopped after {POLAR_MAX_ITER} steps")

    S = transpose(R) @ Q - np.eye(n)
    dist = np.linalg.norm(S, axis=(-2, -1))
    return ProjectionResult(R=R, S=S, dist=dist, det=np.linalg.det(R))
