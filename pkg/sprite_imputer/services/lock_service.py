"""Exclusive output-directory locks so two commands never write into the same run directory."""
import logging
import os
from pathlib import Path
from typing import Union

from sprite_imputer.exceptions import RunDirectoryLockedError

logger = logging.getLogger(__name__)

LOCK_NAME = ".lock"


class DirectoryLock:
    """
    Context manager holding ``<directory>/.lock`` for its lifetime.

    The lock file is created with O_EXCL and holds the owner's pid. A stale lock
    left by a crashed process must be removed by hand.
    """

    def __init__(self, directory: Union[str, Path]):
        self.directory = Path(directory)
        self.path = self.directory / LOCK_NAME
        self._held = False

    def acquire(self) -> "DirectoryLock":
        self.directory.mkdir(parents=True, exist_ok=True)
        try:
            fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError as e:
            owner = self.path.read_text(encoding="utf-8").strip() if self.path.exists() else "unknown"
            message = f"Output directory {self.directory} is locked by process {owner} ({self.path})"
            logger.error(message)
            raise RunDirectoryLockedError(message) from e
        with os.fdopen(fd, "w", encoding="utf-8") as f:
            f.write(str(os.getpid()))
        self._held = True
        logger.debug(f"Acquired lock {self.path}")
        return self

    def release(self) -> None:
        if self._held:
            self.path.unlink(missing_ok=True)
            self._held = False
            logger.debug(f"Released lock {self.path}")

    def __enter__(self) -> "DirectoryLock":
        return self.acquire()

    def __exit__(self, exc_type, exc, tb) -> None:
        self.release()
