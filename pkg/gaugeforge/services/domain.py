"""Discrete geometry of the ball B^m: a masked Cartesian lattice with
Shortley-Weller arms at the sphere, difference operators and L^p norms.

Interior nodes are the lattice points strictly inside the ball, kept in
lexicographic order. Every interior node has 2m arms; an arm either reaches
an interior neighbour at distance h or ends on the sphere at distance s*h,
s in (0, 1], where a boundary point carries Dirichlet data.
"""
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional, Sequence, Tuple

import numpy as np
from scipy import sparse

from gaugeforge.errors import DomainError

logger = logging.getLogger(__name__)

SYMMETRY_TOL = 1e-12
MAX_DIMENSION = 5
MIN_SUBBALL_NODES_ACROSS = 5


class Symmetry(str, Enum):
    NONE = "none"
    ANTISYMMETRIC = "antisymmetric"
    ORTHOGONAL = "orthogonal"


@dataclass(frozen=True)
class BallSpec:
    """Closed-form description of B_r(x0); membership is decided by node centers."""

    center: Tuple[float, ...]
    radius: float

    @classmethod
    def whole(cls, domain: "GridDomain") -> "BallSpec":
        return cls(tuple(float(c) for c in domain.center), float(domain.radius))


@dataclass(frozen=True, eq=False)
class GridDomain:
    m: int
    N: int
    h: float
    center: np.ndarray
    radius: float
    keys: np.ndarray            # raveled lattice index of each interior node, increasing
    coords: np.ndarray          # (n_int, m)
    boundary_points: np.ndarray  # (n_bdy, m) points on the sphere
    neighbors: np.ndarray       # (n_int, m, 2) interior index or -1; side 0 is -e_d, side 1 is +e_d
    arms: np.ndarray            # (n_int, m, 2) arm length in units of h
    boundary_index: np.ndarray  # (n_int, m, 2) boundary point index or -1
    weights: np.ndarray         # (n_int,) quadrature weights h^m
    lap_full: sparse.csr_matrix = field(repr=False)
    grad_full: Tuple[sparse.csr_matrix, ...] = field(repr=False)
    grad_boundary: Tuple[sparse.csr_matrix, ...] = field(repr=False)

    @property
    def n_interior(self) -> int:
        return int(self.coords.shape[0])

    @property
    def n_boundary(self) -> int:
        return int(self.boundary_points.shape[0])

    @property
    def lap_int(self) -> sparse.csr_matrix:
        return self.lap_full[:, :self.n_interior].tocsr()

    @property
    def full_stencil(self) -> np.ndarray:
        """Nodes whose 2m neighbours are all interior."""
        return np.all(self.neighbors >= 0, axis=(1, 2))

    def distance_to_boundary(self) -> np.ndarray:
        return self.radius - np.linalg.norm(self.coords - self.center, axis=1)

    def stack(self, values: np.ndarray, boundary_values: np.ndarray) -> np.ndarray:
        """Concatenate interior and boundary values into one array indexed like the stencils."""
        return np.concatenate([values, boundary_values], axis=0)

    def laplacian_values(self, values: np.ndarray, boundary_values: np.ndarray) -> np.ndarray:
        full = self.stack(values, boundary_values)
        return _apply_rows(self.lap_full, full)

    def gradient_values(self, values: np.ndarray, boundary_values: np.ndarray) -> np.ndarray:
        """(m, n_int, ...) three-point non-uniform derivatives along each axis."""
        full = self.stack(values, boundary_values)
        return np.stack([_apply_rows(g, full) for g in self.grad_full])

    def boundary_gradient_values(self, values: np.ndarray, boundary_values: np.ndarray) -> np.ndarray:
        """(m, n_bdy, ...) derivatives at the boundary points.

        Along the axis of its own arm a point gets the end slope of the
        three-point quadratic; the other axes take the owning node's value.
        """
        full = self.stack(values, boundary_values)
        return np.stack([_apply_rows(g, full) for g in self.grad_boundary])

    def divergence_values(self, flux: np.ndarray, boundary_flux: np.ndarray) -> np.ndarray:
        """Divergence of a flux (m, n_int, ...) with its values (m, n_bdy, ...) on the sphere."""
        return sum(_apply_rows(self.grad_full[d], self.stack(flux[d], boundary_flux[d])) for d in range(self.m))

    def locate(self, other: "GridDomain") -> np.ndarray:
        """Indices into this domain's interior of every interior node of `other` (same lattice)."""
        if other.N != self.N or other.m != self.m:
            raise DomainError("domains do not share a lattice")
        idx = np.searchsorted(self.keys, other.keys)
        if np.any(idx >= self.n_interior) or np.any(self.keys[np.minimum(idx, self.n_interior - 1)] != other.keys):
            raise DomainError("sub-domain nodes are not interior nodes of the parent domain")
        return idx

    def in_ball(self, ball: BallSpec) -> np.ndarray:
        center = np.asarray(ball.center, dtype=float)
        return np.linalg.norm(self.coords - center, axis=1) < ball.radius


def _apply_rows(matrix: sparse.csr_matrix, array: np.ndarray) -> np.ndarray:
    flat = array.reshape(array.shape[0], -1)
    out = matrix @ flat
    return np.asarray(out).reshape((matrix.shape[0],) + array.shape[1:])


def _lattice_axis(N: int) -> np.ndarray:
    return -1.0 + (2.0 / (N - 1)) * np.arange(N)


def _assemble(m: int, N: int, center: np.ndarray, radius: float) -> GridDomain:
    h = 2.0 / (N - 1)
    axis = _lattice_axis(N)

    ranges = []
    for d in range(m):
        ks = np.nonzero(np.abs(axis - center[d]) < radius)[0]
        ranges.append(ks)
    mesh = np.meshgrid(*ranges, indexing="ij")
    multi = np.stack([g.ravel() for g in mesh], axis=1)
    coords = axis[multi]
    r2 = np.sum((coords - center) ** 2, axis=1)
    inside = r2 < radius * radius * (1.0 - 1e-12)
    multi = multi[inside]
    coords = coords[inside]
    r2 = r2[inside]
    n_int = coords.shape[0]
    if n_int == 0:
        raise DomainError(f"no lattice nodes inside ball of radius {radius} at {center.tolist()}")

    shape = (N,) * m
    keys = np.ravel_multi_index(tuple(multi.T), shape)

    neighbors = np.full((n_int, m, 2), -1, dtype=np.int64)
    arms = np.ones((n_int, m, 2))
    boundary_index = np.full((n_int, m, 2), -1, dtype=np.int64)
    boundary_chunks = []
    owner_chunks, axis_chunks, side_chunks = [], [], []
    n_bdy = 0
    for d in range(m):
        for side, sigma in enumerate((-1, 1)):
            shifted = multi.copy()
            shifted[:, d] += sigma
            valid = (shifted[:, d] >= 0) & (shifted[:, d] < N)
            nkeys = np.where(valid, np.ravel_multi_index(tuple(np.clip(shifted, 0, N - 1).T), shape), -1)
            pos = np.searchsorted(keys, nkeys)
            pos_c = np.minimum(pos, n_int - 1)
            found = valid & (keys[pos_c] == nkeys)
            neighbors[found, d, side] = pos_c[found]

            cut = ~found
            offset = coords[cut, d] - center[d]
            disc = offset ** 2 + radius * radius - r2[cut]
            t = -sigma * offset + np.sqrt(np.maximum(disc, 0.0))
            s = np.clip(t / h, 1e-12, 1.0)
            arms[cut, d, side] = s
            points = coords[cut].copy()
            points[:, d] += sigma * s * h
            boundary_index[cut, d, side] = n_bdy + np.arange(points.shape[0])
            boundary_chunks.append(points)
            owner_chunks.append(np.nonzero(cut)[0])
            axis_chunks.append(np.full(points.shape[0], d))
            side_chunks.append(np.full(points.shape[0], side))
            n_bdy += points.shape[0]
    boundary_points = np.concatenate(boundary_chunks, axis=0) if boundary_chunks else np.zeros((0, m))
    owner = np.concatenate(owner_chunks)
    arm_axis = np.concatenate(axis_chunks)
    arm_side = np.concatenate(side_chunks)

    # targets into the stacked [interior; boundary] array
    targets = np.where(neighbors >= 0, neighbors, n_int + boundary_index)

    a = arms[:, :, 0] * h
    b = arms[:, :, 1] * h
    w_minus = 2.0 / (a * (a + b))
    w_plus = 2.0 / (b * (a + b))
    n_full = n_int + n_bdy
    rows = np.arange(n_int)

    lap_rows = [rows]
    lap_cols = [rows]
    lap_vals = [-np.sum(w_minus + w_plus, axis=1)]
    for d in range(m):
        for side, w in ((0, w_minus[:, d]), (1, w_plus[:, d])):
            lap_rows.append(rows)
            lap_cols.append(targets[:, d, side])
            lap_vals.append(w)
    lap_full = sparse.csr_matrix(
        (np.concatenate(lap_vals), (np.concatenate(lap_rows), np.concatenate(lap_cols))),
        shape=(n_int, n_full),
    )

    grad_full = []
    grad_boundary = []
    b_rows = np.arange(n_bdy)
    for d in range(m):
        ad, bd = a[:, d], b[:, d]
        c_minus = -bd / (ad * (ad + bd))
        c_zero = (bd - ad) / (ad * bd)
        c_plus = ad / (bd * (ad + bd))
        grad_full.append(sparse.csr_matrix(
            (np.concatenate([c_minus, c_zero, c_plus]),
             (np.concatenate([rows, rows, rows]),
              np.concatenate([targets[:, d, 0], rows, targets[:, d, 1]]))),
            shape=(n_int, n_full),
        ))

        # end slope of the quadratic along its own arm, owner slope otherwise
        ends = np.where(arm_side == 0, -ad[owner], bd[owner])
        t = np.where(arm_axis == d, ends, 0.0)
        wm, wp = w_minus[owner, d], w_plus[owner, d]
        grad_boundary.append(sparse.csr_matrix(
            (np.concatenate([c_minus[owner] + t * wm, c_zero[owner] - t * (wm + wp), c_plus[owner] + t * wp]),
             (np.concatenate([b_rows, b_rows, b_rows]),
              np.concatenate([targets[owner, d, 0], owner, targets[owner, d, 1]]))),
            shape=(n_bdy, n_full),
        ))

    return GridDomain(
        m=m,
        N=N,
        h=h,
        center=center,
        radius=float(radius),
        keys=keys,
        coords=coords,
        boundary_points=boundary_points,
        neighbors=neighbors,
        arms=arms,
        boundary_index=boundary_index,
        weights=np.full(n_int, h ** m),
        lap_full=lap_full,
        grad_full=tuple(grad_full),
        grad_boundary=tuple(grad_boundary),
    )


def build_domain(m: int, N: int) -> GridDomain:
    """Uniform grid of [-1, 1]^m restricted to the unit ball."""
    if int(m) != m or m < 3:
        raise DomainError(f"dimension m={m} rejected: the construction needs m >= 3")
    if m > MAX_DIMENSION:
        raise DomainError(f"dimension m={m} exceeds the supported maximum {MAX_DIMENSION}")
    if int(N) != N or N < 9 or N % 2 == 0:
        raise DomainError(f"points per axis N={N} rejected: N must be an odd integer >= 9")
    domain = _assemble(int(m), int(N), np.zeros(int(m)), 1.0)
    logger.debug(f"Built domain m={m} N={N}: {domain.n_interior} interior nodes, {domain.n_boundary} boundary points")
    return domain


def sub_domain(domain: GridDomain, x0: Sequence[float], r: float) -> GridDomain:
    """Grid of B_r(x0) on the parent's lattice with its own Shortley-Weller arms."""
    center = np.asarray(x0, dtype=float)
    if center.shape != (domain.m,):
        raise DomainError(f"center {list(x0)} is not a point of R^{domain.m}")
    if r <= 0 or np.linalg.norm(center - domain.center) + r > domain.radius + 1e-12:
        raise DomainError(f"ball B_{r}({center.tolist()}) is not contained in the domain")
    across = 2.0 * r / domain.h + 1.0
    if across < MIN_SUBBALL_NODES_ACROSS - 1e-9:
        raise DomainError(
            f"sub-ball radius {r} spans {across:.2f} nodes, "
            f"need at least {MIN_SUBBALL_NODES_ACROSS} nodes across"
        )
    return _assemble(domain.m, domain.N, center, float(r))


@dataclass(frozen=True, eq=False)
class Field:
    """Grid function: interior values plus (optionally) values at the boundary points.

    Derived quantities such as Laplacians and gradients are interior-only
    (`boundary_values is None`).
    """

    domain: GridDomain
    values: np.ndarray
    boundary_values: Optional[np.ndarray] = None
    symmetry: Symmetry = Symmetry.NONE

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.shape[0] != self.domain.n_interior:
            raise DomainError(f"field has {values.shape[0]} interior values, domain has {self.domain.n_interior}")
        if not np.all(np.isfinite(values)):
            raise DomainError("field values must be finite")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        if self.boundary_values is not None:
            bvals = np.array(self.boundary_values, dtype=float)
            if bvals.shape != (self.domain.n_boundary,) + values.shape[1:]:
                raise DomainError(f"boundary values of shape {bvals.shape} do not match the field")
            if not np.all(np.isfinite(bvals)):
                raise DomainError("boundary values must be finite")
            bvals.setflags(write=False)
            object.__setattr__(self, "boundary_values", bvals)
        if self.symmetry is not Symmetry.NONE:
            self._check_symmetry()

    def _check_symmetry(self):
        if self.values.ndim != 3 or self.values.shape[1] != self.values.shape[2]:
            raise DomainError(f"symmetry class {self.symmetry.value} needs square matrix values")
        for arr in (self.values, self.boundary_values):
            if arr is None or arr.shape[0] == 0:
                continue
            if self.symmetry is Symmetry.ANTISYMMETRIC:
                defect = np.linalg.norm(arr + np.swapaxes(arr, 1, 2), axis=(1, 2)).max()
            else:
                eye = np.eye(arr.shape[1])
                defect = np.linalg.norm(np.swapaxes(arr, 1, 2) @ arr - eye, axis=(1, 2)).max()
            if defect > SYMMETRY_TOL:
                raise DomainError(f"field violates its {self.symmetry.value} class by {defect:.3e}")

    @property
    def value_shape(self) -> Tuple[int, ...]:
        return tuple(self.values.shape[1:])

    @property
    def has_boundary(self) -> bool:
        return self.boundary_values is not None

    def boundary_or_zero(self) -> np.ndarray:
        if self.boundary_values is None:
            return np.zeros((self.domain.n_boundary,) + self.value_shape)
        return self.boundary_values

    def with_values(self, values: np.ndarray, boundary_values: Optional[np.ndarray] = None,
                    symmetry: Symmetry = Symmetry.NONE) -> "Field":
        return Field(self.domain, values, boundary_values, symmetry)


def constant_field(domain: GridDomain, value, symmetry: Symmetry = Symmetry.NONE) -> Field:
    value = np.asarray(value, dtype=float)
    values = np.broadcast_to(value, (domain.n_interior,) + value.shape)
    bvals = np.broadcast_to(value, (domain.n_boundary,) + value.shape)
    return Field(domain, values, bvals, symmetry)


def evaluate(domain: GridDomain, fn: Callable[[np.ndarray], np.ndarray],
             symmetry: Symmetry = Symmetry.NONE) -> Field:
    """Sample fn (taking an (K, m) array of points) at interior nodes and boundary points."""
    values = np.asarray(fn(domain.coords), dtype=float)
    if domain.n_boundary:
        bvals = np.asarray(fn(domain.boundary_points), dtype=float)
    else:
        bvals = np.zeros((0,) + values.shape[1:])
    return Field(domain, values, bvals, symmetry)


def restrict(f: Field, sub: GridDomain) -> Field:
    """Interior values of f on the nodes of a sub-ball grid (interior-only result)."""
    idx = f.domain.locate(sub)
    return Field(sub, f.values[idx], None)


def pointwise_norm(values: np.ndarray) -> np.ndarray:
    """|f| at each node: absolute value, Euclidean or Frobenius norm."""
    if values.ndim == 1:
        return np.abs(values)
    return np.sqrt(np.sum(values.reshape(values.shape[0], -1) ** 2, axis=1))


def laplacian(f: Field) -> Field:
    if f.boundary_values is None:
        raise DomainError("laplacian needs boundary values")
    return Field(f.domain, f.domain.laplacian_values(f.values, f.boundary_values))


def gradient(f: Field) -> Tuple[Field, ...]:
    """Components of grad f, with slopes at the boundary points so the result can be fed to divergence."""
    if f.boundary_values is None:
        raise DomainError("gradient needs boundary values")
    grads = f.domain.gradient_values(f.values, f.boundary_values)
    bgrads = f.domain.boundary_gradient_values(f.values, f.boundary_values)
    return tuple(Field(f.domain, g, bg) for g, bg in zip(grads, bgrads))


def divergence(F: Sequence[Field]) -> Field:
    if len(F) != F[0].domain.m:
        raise DomainError(f"divergence needs {F[0].domain.m} components, got {len(F)}")
    if any(c.boundary_values is None for c in F):
        raise DomainError("divergence needs the flux on the sphere")
    domain = F[0].domain
    flux = np.stack([c.values for c in F])
    return Field(domain, domain.divergence_values(flux, np.stack([c.boundary_values for c in F])))


def _region_mask(domain: GridDomain, region: Optional[BallSpec]) -> np.ndarray:
    if region is None:
        return np.ones(domain.n_interior, dtype=bool)
    center = np.asarray(region.center, dtype=float)
    if np.linalg.norm(center - domain.center) + region.radius > domain.radius + 1e-12:
        raise DomainError(f"region B_{region.radius}({list(region.center)}) is not contained in the domain")
    mask = domain.in_ball(region)
    if not mask.any():
        raise DomainError(f"region B_{region.radius}({list(region.center)}) contains no nodes")
    return mask


def integral(domain: GridDomain, nodal: np.ndarray, region: Optional[BallSpec] = None) -> float:
    """Quadrature of a nodal scalar over a region (node-center membership)."""
    mask = _region_mask(domain, region)
    return float(np.sum(domain.weights[mask] * nodal[mask]))


def lp_norm(f: Field, p: float, region: Optional[BallSpec] = None) -> float:
    """(sum_i w_i |f_i|^p)^(1/p); p = inf gives the max over the region."""
    mask = _region_mask(f.domain, region)
    mags = pointwise_norm(f.values)[mask]
    if math.isinf(p):
        return float(mags.max())
    if p < 1:
        raise DomainError(f"lp_norm needs p >= 1, got {p}")
    return float(np.sum(f.domain.weights[mask] * mags ** p) ** (1.0 / p))


def sobolev2_norm(f: Field, q: float) -> float:
    """||Delta_h f||_{L^q}, the discrete stand-in for the W^{2,q}_0 norm.

    Elliptic estimates control ||f||_{W^{2,q}_0} by ||Delta f||_{L^q} for
    functions with zero trace; f without boundary values is read as zero there.
    """
    bvals = f.boundary_or_zero()
    return lp_norm(Field(f.domain, f.domain.laplacian_values(f.values, bvals)), q)


def ball_volume(m: int, radius: float = 1.0) -> float:
    return math.pi ** (m / 2.0) / math.gamma(m / 2.0 + 1.0) * radius ** m
