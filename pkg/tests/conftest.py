import numpy as np
import pytest

from gaugeforge.schemas.run_schemas import ContinuationConfig, OmegaSpec
from gaugeforge.services import liealg
from gaugeforge.services.domain import Field, Symmetry, build_domain
from gaugeforge.services.gauge import AntisymmetricPotential, gauge_service
from gaugeforge.services.potentials import generate_potential


@pytest.fixture(scope="session")
def grid17():
    return build_domain(3, 17)


@pytest.fixture(scope="session")
def grid33():
    return build_domain(3, 33)


@pytest.fixture(scope="session")
def continuation():
    return ContinuationConfig()


def smooth_antisymmetric(domain, n, seed, amplitude=0.3, zero_boundary=True):
    """Antisymmetric field vanishing on the sphere: amplitude (1 - |x|^2) sum_k c_k sin(k . x + phi)."""
    rng = np.random.default_rng(seed)
    dim = n * (n - 1) // 2
    kappas = rng.uniform(-2.0, 2.0, size=(3, domain.m))
    phases = rng.uniform(0.0, 2.0 * np.pi, size=3)
    coeffs = rng.uniform(-1.0, 1.0, size=(3, dim))

    def fn(x):
        coords = sum(np.sin(x @ kappas[k] + phases[k])[:, None] * coeffs[k] for k in range(3))
        bump = (1.0 - np.sum(x ** 2, axis=1)) if zero_boundary else np.ones(x.shape[0])
        return liealg.antisym_from_coordinates(amplitude * bump[:, None] * coords, n)

    values = fn(domain.coords)
    bvals = np.zeros((domain.n_boundary, n, n)) if zero_boundary else fn(domain.boundary_points)
    return Field(domain, values, bvals, Symmetry.ANTISYMMETRIC)


@pytest.fixture(scope="session")
def random_potential17(grid17):
    return generate_potential(grid17, 3, OmegaSpec(kind="random", seed=3, target_norm=0.05))


@pytest.fixture(scope="session")
def constant_potential17(grid17):
    omega = Field(grid17, np.broadcast_to(liealg.hat2(1.0), (grid17.n_interior, 2, 2)), None, Symmetry.ANTISYMMETRIC)
    potential = AntisymmetricPotential.from_field(omega)
    return potential.scaled(0.05 / potential.l_half_m_norm)


@pytest.fixture(scope="session")
def random_gauge17(random_potential17, continuation):
    return gauge_service.build_gauge(random_potential17, continuation)


@pytest.fixture(scope="session")
def constant_gauge17(constant_potential17, continuation):
    return gauge_service.build_gauge(constant_potential17, continuation)
