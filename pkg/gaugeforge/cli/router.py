import logging
from typing import Callable, Dict

from gaugeforge.errors import GaugeForgeError
from gaugeforge.schemas.run_schemas import RunConfig
from gaugeforge.services.pipeline_service import pipeline_service

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_UNEXPECTED = 1

Handler = Callable[[RunConfig], object]


class CommandRouter:
    def __init__(self):
        self.commands: Dict[str, Handler] = {}
        self.descriptions: Dict[str, str] = {}

    def command(self, name: str, description: str = ""):
        def register(handler: Handler) -> Handler:
            self.commands[name] = handler
            self.descriptions[name] = description or (handler.__doc__ or "").strip()
            return handler
        return register

    def dispatch(self, name: str, cfg: RunConfig) -> int:
        """Run a command; GaugeForgeError maps to its exit code, anything else to 1."""
        handler = self.commands.get(name)
        if handler is None:
            logger.error(f"Unknown command '{name}'")
            return EXIT_UNEXPECTED
        logger.info(f"{name} called (m={cfg.m}, n={cfg.n}, N={cfg.N}, output {cfg.output_dir})")
        try:
            handler(cfg)
        except GaugeForgeError as e:
            logger.error(f"{name} failed: {e.message}")
            return e.exit_code
        except Exception as e:
            logger.exception(f"Unexpected error in {name}: {str(e)}")
            return EXIT_UNEXPECTED
        logger.info(f"{name} finished")
        return EXIT_OK


router = CommandRouter()


@router.command("gen")
def cmd_gen(cfg: RunConfig):
    """Generate the seeded, mollified, rescaled potential"""
    return pipeline_service.run_gen(cfg)


@router.command("gauge")
def cmd_gauge(cfg: RunConfig):
    """Construct P, Q and A = QP and write the verification report"""
    return pipeline_service.run_gauge(cfg)


@router.command("solve")
def cmd_solve(cfg: RunConfig):
    """Solve the system directly and in conservation form"""
    return pipeline_service.run_solve(cfg)


@router.command("morrey")
def cmd_morrey(cfg: RunConfig):
    """Run the decay experiments and the integrability table"""
    return pipeline_service.run_morrey(cfg)


@router.command("study")
def cmd_study(cfg: RunConfig):
    """Refinement study over the configured grids"""
    return pipeline_service.run_study(cfg)
