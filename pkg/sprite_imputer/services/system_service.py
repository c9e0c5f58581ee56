import logging
import os
import platform
from typing import Any, Dict, Optional

import torch

from sprite_imputer.schemas.manifest import HostInfo

logger = logging.getLogger(__name__)


class SystemService:
    """Host facts for run manifests and memory readings for the metrics log."""

    def __init__(self):
        # psutil is loaded lazily; manifests fall back to os.cpu_count without it
        self._psutil = None
        self._psutil_missing = False

    def _get_psutil(self):
        """Lazy load psutil only when needed."""
        if self._psutil is None and not self._psutil_missing:
            try:
                import psutil
                self._psutil = psutil
            except ImportError as e:
                logger.warning(f"psutil unavailable, host memory will not be recorded: {e}")
                self._psutil_missing = True
        return self._psutil

    def get_host_info(self) -> HostInfo:
        psutil = self._get_psutil()
        total_memory: Optional[int] = None
        cpu_count = os.cpu_count()
        if psutil is not None:
            try:
                total_memory = int(psutil.virtual_memory().total)
                cpu_count = psutil.cpu_count(logical=True) or cpu_count
            except Exception as e:
                logger.warning(f"Could not read host memory: {e}")
        return HostInfo(
            platform=platform.platform(),
            python_version=platform.python_version(),
            torch_version=torch.__version__,
            cpu_count=cpu_count,
            total_memory_bytes=total_memory,
        )

    def get_process_memory(self) -> Dict[str, Any]:
        """Resident set size of this process, plus CUDA allocation when a GPU is in use."""
        memory: Dict[str, Any] = {}
        psutil = self._get_psutil()
        if psutil is not None:
            try:
                memory["rss_bytes"] = int(psutil.Process(os.getpid()).memory_info().rss)
            except Exception as e:
                logger.debug(f"Could not read process memory: {e}")
        if torch.cuda.is_available():
            memory["cuda_allocated_bytes"] = int(torch.cuda.memory_allocated())
        return memory


system_service = SystemService()
