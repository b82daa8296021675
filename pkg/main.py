"""
Main entry point for the Poincaré–Perron asymptotics toolkit.

Parses the command line, validates the process configuration and dispatches
to the subcommand handlers. Exit codes: 0 success, 2 configuration error,
3 numerical failure, 4 failed acceptance check.
"""

import sys
from typing import List, Optional

from cli.handlers import HANDLERS, setup_parser
from config import config
from utils.errors import StageError, ToolkitError
from utils.logger import logger, setup_logger


def main(argv: Optional[List[str]] = None) -> int:
    """
    Run one subcommand.

    Args:
        argv: Command line arguments without the program name

    Returns:
        Process exit code
    """
    setup_logger(level=config.LOG_LEVEL)
    args = setup_parser().parse_args(argv)

    # Validate configuration
    try:
        config.validate()
    except ValueError as e:
        logger.error(f"Configuration error: {e}")
        logger.error("Please check your environment variables and try again.")
        return 2

    logger.info(f"Running '{args.command}'")
    try:
        return HANDLERS[args.command](args)
    except StageError as e:
        logger.error(f"Numerical failure in stage '{e.stage}': {e}")
        return e.exit_code
    except ToolkitError as e:
        logger.error(f"{type(e).__name__}: {e}")
        return e.exit_code
    except KeyboardInterrupt:
        logger.info("Stopped by user")
        return 1


if __name__ == "__main__":
    sys.exit(main())
