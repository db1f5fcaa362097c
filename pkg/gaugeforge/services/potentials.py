"""Seeded antisymmetric potentials, boundary data and the manufactured family."""
import logging
from pathlib import Path
from typing import Optional, Sequence, Tuple

import numpy as np

from gaugeforge.errors import ConfigurationError, DomainError
from gaugeforge.schemas.run_schemas import BoundarySpec, OmegaSpec
from gaugeforge.services import liealg
from gaugeforge.services.domain import Field, GridDomain, Symmetry, evaluate, lp_norm
from gaugeforge.services.gauge import AntisymmetricPotential
from gaugeforge.storage.gfld import read_field

logger = logging.getLogger(__name__)

MAX_WAVENUMBER = np.pi


def trigonometric_so(points: np.ndarray, n: int, seed: int, modes: int = 4) -> np.ndarray:
    """sum_k c_k cos(kappa_k . x + phi_k) in antisymmetric coordinates.

    The same function of x for every grid, so refinement studies compare like with like.
    """
    m = points.shape[1]
    rng = np.random.default_rng(seed)
    dim = n * (n - 1) // 2
    coords = np.zeros((points.shape[0], dim))
    for k in range(1, modes + 1):
        kappa = rng.uniform(-MAX_WAVENUMBER, MAX_WAVENUMBER, size=m)
        phase = rng.uniform(0.0, 2.0 * np.pi)
        c = rng.uniform(-1.0, 1.0, size=dim) / k
        coords += np.cos(points @ kappa + phase)[:, None] * c
    return liealg.antisym_from_coordinates(coords, n)


def mollify(f: Field, passes: int) -> Field:
    """Nearest-neighbour averaging over the interior stencil, `passes` times."""
    domain = f.domain
    values = np.array(f.values)
    nbrs = domain.neighbors.reshape(domain.n_interior, -1)
    present = nbrs >= 0
    counts = 1.0 + present.sum(axis=1)
    safe = np.where(present, nbrs, 0)
    extra = (1,) * (values.ndim - 1)
    for _ in range(passes):
        gathered = values[safe] * present.reshape(present.shape + extra)
        values = (values + gathered.sum(axis=1)) / counts.reshape((-1,) + extra)
    return Field(domain, values, f.boundary_values, f.symmetry)


def rescale(f: Field, target_norm: float) -> Field:
    """f scaled so that ||f||_{L^{m/2}} equals target_norm (zero stays zero)."""
    norm = lp_norm(f, f.domain.m / 2.0)
    if norm == 0.0:
        return f
    scale = target_norm / norm
    bvals = None if f.boundary_values is None else scale * f.boundary_values
    return Field(f.domain, scale * f.values, bvals, f.symmetry)


def generate_potential(domain: GridDomain, n: int, spec: OmegaSpec) -> AntisymmetricPotential:
    if n < 2 and spec.kind != "zero":
        raise DomainError(f"so({n}) is trivial; use kind 'zero' or n >= 2")
    if spec.kind == "zero":
        values = np.zeros((domain.n_interior, n, n))
    elif spec.kind == "constant":
        values = np.broadcast_to(liealg.antisym_random(n, spec.seed), (domain.n_interior, n, n))
    else:
        values = trigonometric_so(domain.coords, n, spec.seed, spec.modes)

    omega = Field(domain, values, None, Symmetry.ANTISYMMETRIC)
    if spec.kind == "random":
        omega = mollify(omega, spec.smoothness_passes)
    if spec.kind != "zero":
        omega = rescale(omega, spec.target_norm)
    passes = spec.smoothness_passes if spec.kind == "random" else None
    potential = AntisymmetricPotential.from_field(omega, passes)
    logger.info(f"Generated {spec.kind} potential (seed {spec.seed}): ||Omega||_L^(m/2) = {potential.l_half_m_norm:.6e}")
    return potential


def manufactured_state(domain: GridDomain, k: Sequence[float], l: Sequence[float]) -> Tuple[Field, AntisymmetricPotential]:
    """v = e^{k.x}(cos l.x, sin l.x) and Omega = 2(k.l) J, so that -Delta v = Omega v when |k| = |l|."""
    k = np.asarray(k, dtype=float)
    l = np.asarray(l, dtype=float)
    if k.shape != (domain.m,) or l.shape != (domain.m,):
        raise DomainError(f"wave vectors must lie in R^{domain.m}")
    if abs(np.linalg.norm(k) - np.linalg.norm(l)) > 1e-12:
        raise DomainError("the manufactured family needs |k| = |l|")

    def v(x):
        amplitude = np.exp(x @ k)
        phase = x @ l
        return np.stack([amplitude * np.cos(phase), amplitude * np.sin(phase)], axis=1)

    omega_value = liealg.hat2(2.0 * float(k @ l))
    omega = Field(domain, np.broadcast_to(omega_value, (domain.n_interior, 2, 2)), None, Symmetry.ANTISYMMETRIC)
    return evaluate(domain, v), AntisymmetricPotential.from_field(omega)


def linear_boundary(x: np.ndarray, n: int) -> np.ndarray:
    m = x.shape[1]
    return np.stack([1.0 + 0.25 * x[:, i % m] for i in range(n)], axis=1)


def trig_boundary(x: np.ndarray, n: int) -> np.ndarray:
    m = x.shape[1]
    return np.stack([np.cos(x[:, i % m]) + 0.5 * np.sin(x[:, (i + 1) % m]) for i in range(n)], axis=1)


def boundary_field(domain: GridDomain, n: int, spec: BoundarySpec, path: Optional[Path] = None) -> Field:
    """Boundary data g as a field; for `linear` its interior values are the harmonic extension."""
    if spec.kind == "linear":
        return evaluate(domain, lambda x: linear_boundary(x, n))
    if spec.kind == "trig":
        return evaluate(domain, lambda x: trig_boundary(x, n))
    source = path or spec.path
    if source is None:
        raise ConfigurationError("boundary kind 'file' needs a path")
    f = read_field(source, domain, rank=1)
    if f.value_shape != (n,):
        raise ConfigurationError(f"boundary file {source} holds values of shape {f.value_shape}, expected ({n},)")
    return f
