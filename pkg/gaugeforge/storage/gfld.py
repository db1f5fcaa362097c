"""GFLD: binary grid-field files.

Layout: b"GFLD", u16 version, u32 m, u32 n, u32 N, then float64 little-endian
interior values (lexicographic node order) followed by the boundary-point
values (boundary-set order). The value rank is inferred from the payload size.
"""
import logging
import struct
from pathlib import Path
from typing import Optional, Union

import numpy as np

from gaugeforge.errors import ConfigurationError
from gaugeforge.services.domain import Field, GridDomain, Symmetry

logger = logging.getLogger(__name__)

MAGIC = b"GFLD"
VERSION = 1
HEADER = struct.Struct("<4sHIII")


def encode_field(f: Field, n: int) -> bytes:
    domain = f.domain
    payload = np.concatenate([
        f.values.reshape(domain.n_interior, -1),
        f.boundary_or_zero().reshape(domain.n_boundary, -1),
    ])
    header = HEADER.pack(MAGIC, VERSION, domain.m, n, domain.N)
    return header + np.ascontiguousarray(payload, dtype="<f8").tobytes()


def decode_field(data: bytes, domain: GridDomain, symmetry: Symmetry = Symmetry.NONE,
                 rank: Optional[int] = None) -> Field:
    """Decode a GFLD payload; `rank` (0, 1 or 2) pins the value shape when n = 1 makes the width ambiguous."""
    if len(data) < HEADER.size:
        raise ConfigurationError("GFLD data is shorter than its header")
    magic, version, m, n, N = HEADER.unpack_from(data)
    if magic != MAGIC:
        raise ConfigurationError(f"not a GFLD file (magic {magic!r})")
    if version != VERSION:
        raise ConfigurationError(f"unsupported GFLD version {version}")
    if m != domain.m or N != domain.N:
        raise ConfigurationError(f"GFLD grid m={m} N={N} does not match the domain m={domain.m} N={domain.N}")

    payload = np.frombuffer(data, dtype="<f8", offset=HEADER.size)
    nodes = domain.n_interior + domain.n_boundary
    if nodes == 0 or payload.size % nodes:
        raise ConfigurationError(f"GFLD payload of {payload.size} values does not fit {nodes} nodes")
    width = payload.size // nodes
    if rank is not None:
        if width != n ** rank:
            raise ConfigurationError(f"GFLD payload width {width} does not hold rank-{rank} values for n={n}")
        value_shape = (n,) * rank
    elif width == 1:
        value_shape = ()
    elif width == n:
        value_shape = (n,)
    elif width == n * n:
        value_shape = (n, n)
    else:
        raise ConfigurationError(f"GFLD payload width {width} is neither 1, n nor n*n for n={n}")

    table = payload.reshape(nodes, width).astype(float)
    values = table[:domain.n_interior].reshape((domain.n_interior,) + value_shape)
    bvals = table[domain.n_interior:].reshape((domain.n_boundary,) + value_shape)
    return Field(domain, values, bvals, symmetry)


def write_field(path: Union[str, Path], f: Field, n: int) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_field(f, n))
    logger.debug(f"Wrote field {f.value_shape} to {path}")
    return path


def read_field(path: Union[str, Path], domain: GridDomain, symmetry: Symmetry = Symmetry.NONE,
               rank: Optional[int] = None) -> Field:
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"field file {path} does not exist")
    try:
        data = path.read_bytes()
    except OSError as e:
        raise ConfigurationError(f"cannot read field file {path}: {e}") from e
    return decode_field(data, domain, symmetry, rank)


def read_header(path: Union[str, Path]):
    """(m, n, N) of a GFLD file without decoding its payload."""
    path = Path(path)
    try:
        with path.open("rb") as fh:
            head = fh.read(HEADER.size)
    except OSError as e:
        raise ConfigurationError(f"cannot read field file {path}: {e}") from e
    if len(head) < HEADER.size or head[:4] != MAGIC:
        raise ConfigurationError(f"{path} is not a GFLD file")
    _, _, m, n, N = HEADER.unpack(head)
    return m, n, N
