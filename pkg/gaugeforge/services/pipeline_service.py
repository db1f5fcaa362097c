import logging
import math
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

from pydantic import ValidationError

from gaugeforge.errors import ConfigurationError, MonitorBreachError
from gaugeforge.schemas.report_schemas import EquivalenceReport, StudyRow, VerificationReport
from gaugeforge.schemas.run_schemas import RunConfig
from gaugeforge.services.domain import GridDomain, Symmetry, build_domain
from gaugeforge.services.gauge import AntisymmetricPotential, GaugeTriple, gauge_service
from gaugeforge.services.potentials import boundary_field, generate_potential
from gaugeforge.services.subcritical import subcritical_service
from gaugeforge.storage import gfld, results

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

logger = logging.getLogger(__name__)

OMEGA_FILE = "omega.gfld"
OMEGA_META = "omega.json"
FIELD_FILES = ("U", "P", "Q", "A")


def parse_override(assignment: str) -> Tuple[List[str], Any]:
    """'section.key=value' with value read as a TOML literal, else kept as a string."""
    if "=" not in assignment:
        raise ConfigurationError(f"override '{assignment}' is not of the form key=value")
    key, raw = assignment.split("=", 1)
    path = [part for part in key.strip().split(".") if part]
    if not path:
        raise ConfigurationError(f"override '{assignment}' has an empty key")
    try:
        value = tomllib.loads(f"value = {raw.strip()}")["value"]
    except tomllib.TOMLDecodeError:
        value = raw.strip()
    return path, value


def load_run_config(path: Optional[Union[str, Path]], overrides: Sequence[str] = ()) -> RunConfig:
    raw: Dict[str, Any] = {}
    if path is not None:
        path = Path(path)
        try:
            raw = tomllib.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError as e:
            raise ConfigurationError(f"config file {path} does not exist") from e
        except tomllib.TOMLDecodeError as e:
            raise ConfigurationError(f"config file {path} is not valid TOML: {e}") from e

    for assignment in overrides:
        keys, value = parse_override(assignment)
        node = raw
        for key in keys[:-1]:
            node = node.setdefault(key, {})
            if not isinstance(node, dict):
                raise ConfigurationError(f"override '{assignment}' descends into a non-table value")
        node[keys[-1]] = value

    try:
        return RunConfig.model_validate(raw)
    except ValidationError as e:
        raise ConfigurationError(f"invalid run configuration: {e}") from e


def observed_orders(hs: Sequence[float], errors: Sequence[float]) -> List[Optional[float]]:
    """log(e_i / e_{i-1}) / log(h_i / h_{i-1}); None for the coarsest grid or non-positive errors."""
    orders: List[Optional[float]] = [None]
    for i in range(1, len(hs)):
        if errors[i] > 0 and errors[i - 1] > 0:
            orders.append(math.log(errors[i] / errors[i - 1]) / math.log(hs[i] / hs[i - 1]))
        else:
            orders.append(None)
    return orders


class PipelineService:
    def domain_for(self, cfg: RunConfig, N: Optional[int] = None) -> GridDomain:
        return build_domain(cfg.m, N or cfg.N)

    def potential_for(self, cfg: RunConfig, domain: GridDomain) -> AntisymmetricPotential:
        return generate_potential(domain, cfg.n, cfg.omega)

    def run_gen(self, cfg: RunConfig) -> AntisymmetricPotential:
        domain = self.domain_for(cfg)
        potential = self.potential_for(cfg, domain)
        out = cfg.output_dir
        gfld.write_field(out / OMEGA_FILE, potential.omega, cfg.n)
        results.write_json(out / OMEGA_META, {
            "kind": cfg.omega.kind,
            "seed": cfg.omega.seed,
            "m": cfg.m,
            "n": cfg.n,
            "N": cfg.N,
            "target_norm": cfg.omega.target_norm,
            "l_half_m_norm": potential.l_half_m_norm,
            "smoothness_passes": potential.smoothness_passes,
        })
        logger.info(f"Wrote potential to {out / OMEGA_FILE}")
        return potential

    def _check_header(self, cfg: RunConfig, path: Path):
        m, n, N = gfld.read_header(path)
        if (m, n, N) != (cfg.m, cfg.n, cfg.N):
            raise ConfigurationError(f"{path} holds m={m}, n={n}, N={N} but the run asks for "
                                     f"m={cfg.m}, n={cfg.n}, N={cfg.N}; rerun the earlier stage")

    def load_potential(self, cfg: RunConfig, domain: GridDomain) -> AntisymmetricPotential:
        path = cfg.output_dir / OMEGA_FILE
        if not path.exists():
            raise ConfigurationError(f"potential file {path} not found; run 'gen' first")
        self._check_header(cfg, path)
        omega = gfld.read_field(path, domain, Symmetry.ANTISYMMETRIC, rank=2)
        meta_path = cfg.output_dir / OMEGA_META
        passes = results.read_json(meta_path).get("smoothness_passes") if meta_path.exists() else None
        return AntisymmetricPotential.from_field(omega, passes)

    def load_gauge_field(self, cfg: RunConfig, name: str, domain: GridDomain):
        path = cfg.output_dir / f"{name}.gfld"
        if not path.exists():
            raise ConfigurationError(f"gauge file {path} not found; run 'gauge' first")
        self._check_header(cfg, path)
        return gfld.read_field(path, domain, rank=2)

    def run_gauge(self, cfg: RunConfig) -> VerificationReport:
        domain = self.domain_for(cfg)
        potential = self.load_potential(cfg, domain)
        continuation = cfg.continuation()
        out = cfg.output_dir

        if cfg.omega.sweep_norms:
            rows = gauge_service.sweep_convergence_radius(potential, cfg.omega.sweep_norms, continuation)
            results.write_csv(out / "sweep.csv", rows)
            logger.info(f"Sweep over {len(rows)} norms: {sum(r.converged for r in rows)} converged")

        triple = gauge_service.build_gauge(potential, continuation)
        for name in FIELD_FILES:
            gfld.write_field(out / f"{name}.gfld", getattr(triple, name), cfg.n)
        report = gauge_service.verify_gauge(triple, potential, continuation,
                                            directions=cfg.experiment.directions,
                                            seed=cfg.experiment.direction_seed)
        results.write_json(out / "verification.json", report)
        logger.info(f"Gauge verification written: residual_A {report.residual_A:.3e}, "
                    f"dist_A_On {report.dist_A_On:.3e}, monitors passed {report.monitors_passed}")
        if not report.monitors_passed:
            self._raise_failed_monitor(report, cfg)
        return report

    def _raise_failed_monitor(self, report: VerificationReport, cfg: RunConfig):
        h2 = (2.0 / (cfg.N - 1)) ** 2
        if report.eps0_monitor >= cfg.monitors.eps0:
            raise MonitorBreachError("eps0", report.eps0_monitor, cfg.monitors.eps0)
        if report.eps1_monitor > cfg.monitors.eps1:
            raise MonitorBreachError("eps1", report.eps1_monitor, cfg.monitors.eps1)
        if not report.max_principle_ok:
            raise MonitorBreachError("max_principle", report.max_principle_sup, 1.0 + 10.0 * h2)
        if not report.subharmonic_ok:
            raise MonitorBreachError("subharmonicity", report.subharmonic_min, -10.0 * h2)
        raise MonitorBreachError("psd_coefficient", report.psd_min_eigenvalue, 0.0)

    def _solve_pair(self, cfg: RunConfig, domain: GridDomain, potential: AntisymmetricPotential, A):
        g = boundary_field(domain, cfg.n, cfg.boundary)
        direct = subcritical_service.solve_direct(potential, g, cfg.solver.tol)
        conservation = subcritical_service.solve_conservation(A, g, cfg.solver.tol)
        report = EquivalenceReport(
            relative_l2_difference=subcritical_service.relative_difference(direct.v, conservation.v),
            conservation_residual_direct=subcritical_service.conservation_residual(A, direct.v),
            conservation_residual_conservation=subcritical_service.conservation_residual(A, conservation.v),
            direct=direct.report,
            conservation=conservation.report,
        )
        return direct, conservation, report

    def run_solve(self, cfg: RunConfig) -> EquivalenceReport:
        domain = self.domain_for(cfg)
        potential = self.load_potential(cfg, domain)
        A = self.load_gauge_field(cfg, "A", domain)
        direct, conservation, report = self._solve_pair(cfg, domain, potential, A)
        out = cfg.output_dir
        gfld.write_field(out / "v_direct.gfld", direct.v, cfg.n)
        gfld.write_field(out / "v_conservation.gfld", conservation.v, cfg.n)
        results.write_json(out / "equivalence.json", report)
        logger.info(f"Equivalence: relative L2 difference {report.relative_l2_difference:.3e}")
        return report

    def run_morrey(self, cfg: RunConfig):
        domain = self.domain_for(cfg)
        A = self.load_gauge_field(cfg, "A", domain)
        path = cfg.output_dir / "v_direct.gfld"
        if not path.exists():
            raise ConfigurationError(f"state file {path} not found; run 'solve' first")
        v = gfld.read_field(path, domain, rank=1)
        exp = cfg.experiment
        report = subcritical_service.decay_experiment(
            A, v, exp.centers, exp.radii, exp.lambda_, cfg.solver.tol, exp.min_radius_cells,
        )
        table = subcritical_service.integrability_report(v, exp.exponents, report.gamma_hat, exp.min_radius_cells)
        out = cfg.output_dir
        results.write_csv(out / "decay.csv", report.rows)
        results.write_json(out / "decay.json", report)
        results.write_csv(out / "integrability.csv", table)
        return report, table

    def run_study(self, cfg: RunConfig) -> List[StudyRow]:
        """Rerun gen, gauge and solve on every study grid and fit observed orders."""
        continuation = cfg.continuation()
        rows = []
        for N in cfg.study.grids:
            domain = self.domain_for(cfg, N)
            potential = self.potential_for(cfg, domain)
            triple: GaugeTriple = gauge_service.build_gauge(potential, continuation)
            _, _, eq = self._solve_pair(cfg, domain, potential, triple.A)
            rows.append(StudyRow(
                N=N,
                h=domain.h,
                residual_A=triple.diagnostics.residual_A,
                equivalence_error=eq.relative_l2_difference,
                conservation_residual=eq.conservation_residual_direct,
            ))
            logger.info(f"Study N={N}: residual_A {rows[-1].residual_A:.3e}, "
                        f"equivalence {rows[-1].equivalence_error:.3e}")

        hs = [r.h for r in rows]
        for field_name, order_name in (("residual_A", "order_residual_A"),
                                       ("equivalence_error", "order_equivalence"),
                                       ("conservation_residual", "order_conservation")):
            orders = observed_orders(hs, [getattr(r, field_name) for r in rows])
            for row, order in zip(rows, orders):
                setattr(row, order_name, order)

        out = cfg.output_dir
        results.write_csv(out / "study.csv", rows)
        results.write_json(out / "study.json", {"rows": rows})
        return rows


pipeline_service = PipelineService()
