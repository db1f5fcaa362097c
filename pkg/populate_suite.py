"""
Script to write the seeded acceptance suite as run configurations.
Ten random potentials spread over ||Omega||_{L^{3/2}} in {0.025, 0.05, 0.1}, plus the Omega = 0 control.
Run it once, then `python -m gaugeforge gen --config configs/suite/<name>.toml` and so on.
"""

import logging
from pathlib import Path

logging.basicConfig(level=logging.INFO)
logger = logging.getLogger(__name__)

SUITE_DIR = Path("configs/suite")
SUITE_NORMS = [0.025, 0.05, 0.1]
SUITE_SIZE = 10

TEMPLATE = """m = {m}
n = {n}
N = {N}
output_dir = "runs/suite/{name}"

[omega]
kind = "{kind}"
seed = {seed}
target_norm = {norm}
smoothness_passes = 2

[boundary]
kind = "linear"

[solver]
tol = 1e-10
newton_tol = 1e-9
steps = 8
newton_max = 20

[experiment]
lambda = 0.5
radii = [0.125, 0.25]

[study]
grids = [17, 33, 65]
"""


def suite_entries():
    """(name, kind, seed, norm, n) for every suite member; n alternates between 2 and 3."""
    entries = []
    for seed in range(SUITE_SIZE):
        norm = SUITE_NORMS[seed % len(SUITE_NORMS)]
        n = 2 if seed % 2 == 0 else 3
        entries.append((f"random_{seed:02d}", "random", seed, norm, n))
    entries.append(("zero_control", "zero", 0, 0.0, 2))
    return entries


def populate_suite(directory: Path = SUITE_DIR, N: int = 33):
    directory.mkdir(parents=True, exist_ok=True)
    for name, kind, seed, norm, n in suite_entries():
        path = directory / f"{name}.toml"
        path.write_text(TEMPLATE.format(m=3, n=n, N=N, name=name, kind=kind, seed=seed, norm=norm),
                        encoding="utf-8")
        logger.info(f"Wrote {path}")
    logger.info(f"Suite of {len(suite_entries())} configurations written to {directory}")


if __name__ == "__main__":
    populate_suite()
