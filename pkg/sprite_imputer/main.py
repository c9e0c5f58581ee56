import argparse
import logging
import os
import sys
from datetime import datetime
from typing import List, Optional

from sprite_imputer import __version__, config
from sprite_imputer.commands import evaluate, impute, report, synth_data, train

logger = logging.getLogger(__name__)

COMMANDS = (synth_data, train, evaluate, impute, report)


def configure_logging(log_dir: Optional[str] = None) -> None:
    """Console logging at LOG_LEVEL plus a daily file that only receives warnings and above."""
    log_level = "DEBUG" if config.ENABLE_DEBUG_LOGGING else config.LOG_LEVEL
    handlers: List[logging.Handler] = [logging.StreamHandler(sys.stdout)]
    log_dir = log_dir or config.LOG_DIR
    try:
        os.makedirs(log_dir, exist_ok=True)
        file_handler = logging.FileHandler(
            os.path.join(log_dir, f"sprite_imputer_{datetime.now().strftime('%Y%m%d')}.log"),
            encoding='utf-8'
        )
        file_handler.setLevel(logging.WARNING)
        handlers.append(file_handler)
    except OSError as e:
        print(f"Log directory {log_dir} is not writable, logging to console only: {e}", file=sys.stderr)

    logging.basicConfig(
        level=getattr(logging, log_level, logging.INFO),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=handlers,
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sprite-imputer",
        description="Generate missing character poses for pixel-art sprites",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--log-dir", default=None, help="Directory for the warning log file (default: $LOG_DIR)")
    subparsers = parser.add_subparsers(dest="command", required=True)
    for command in COMMANDS:
        command.register(subparsers)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.log_dir)
    logger.debug(f"sprite-imputer {__version__}: {args.command}")
    return args.handler(args)


if __name__ == "__main__":
    sys.exit(main())
