import argparse
import logging
import sys
from datetime import datetime
from pathlib import Path
from typing import Any, Callable, Dict, Optional, Union

from pydantic import ValidationError

from sprite_imputer.exceptions import SpriteImputerError
from sprite_imputer.schemas.manifest import RunManifest
from sprite_imputer.services.lock_service import DirectoryLock
from sprite_imputer.services.system_service import system_service

logger = logging.getLogger(__name__)

RUN_MANIFEST = "run_manifest.json"

EXIT_OK = 0
EXIT_FAILURE = 1


def arguments_dict(args: argparse.Namespace) -> Dict[str, Any]:
    """JSON-friendly view of parsed arguments."""
    result = {}
    for key, value in vars(args).items():
        if key == "handler":
            continue
        if isinstance(value, Path):
            value = str(value)
        elif isinstance(value, (list, tuple)):
            value = [str(v) if isinstance(v, Path) else v for v in value]
        result[key] = value
    return result


def execute(command: str, args: argparse.Namespace, out_dir: Union[str, Path],
            work: Callable[[RunManifest], None], seed: Optional[int] = None,
            manifest_name: str = RUN_MANIFEST) -> int:
    """
    Run ``work`` holding the output-directory lock, with the run manifest written first.

    Returns:
        0 when ``work`` completed, 1 on any expected failure (message on stderr)
    """
    out_dir = Path(out_dir)
    manifest = RunManifest(command=command, arguments=arguments_dict(args), seed=seed,
                           host=system_service.get_host_info())
    manifest_path = out_dir / manifest_name
    started = False
    try:
        with DirectoryLock(out_dir):
            manifest.write(manifest_path)
            started = True
            work(manifest)
            manifest.status = "completed"
            manifest.finished_at = datetime.now()
            manifest.write(manifest_path)
    except (SpriteImputerError, ValidationError, OSError) as e:
        logger.error(f"{command} failed: {e}")
        print(f"error: {e}", file=sys.stderr)
        if started:
            manifest.status = "failed"
            manifest.finished_at = datetime.now()
            try:
                manifest.write(manifest_path)
            except OSError:
                pass
        return EXIT_FAILURE
    return EXIT_OK


def fail(message: str) -> int:
    logger.error(message)
    print(f"error: {message}", file=sys.stderr)
    return EXIT_FAILURE
