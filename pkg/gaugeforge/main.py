import argparse
import logging
import sys
from typing import List, Optional

from gaugeforge.cli.router import router
from gaugeforge.config import settings
from gaugeforge.errors import GaugeForgeError
from gaugeforge.logging_config import LOG_FORMAT, setup_file_logging
from gaugeforge.services.pipeline_service import load_run_config

# Configure logging
logging.basicConfig(
    level=getattr(logging, settings.LOG_LEVEL.upper(), logging.INFO),
    format=LOG_FORMAT,
)
logger = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    commands = "\n".join(f"  {name:<8} {router.descriptions[name]}" for name in sorted(router.commands))
    parser = argparse.ArgumentParser(
        prog="gaugeforge",
        description="Gauge construction and sub-criticality experiments for Delta v + Omega v = 0",
        epilog=f"commands:\n{commands}",
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("command", choices=sorted(router.commands))
    parser.add_argument("--config", help="TOML run configuration")
    parser.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override a configuration entry, e.g. solver.tol=1e-9")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_run_config(args.config, args.overrides)
    except GaugeForgeError as e:
        logger.error(e.message)
        return e.exit_code

    try:
        setup_file_logging(cfg.output_dir / settings.LOG_DIR)
    except OSError as e:
        logger.error(f"Cannot open log directory under {cfg.output_dir}: {e}")
        return 4
    return router.dispatch(args.command, cfg)


if __name__ == "__main__":
    sys.exit(main())
