from datetime import datetime
from pathlib import Path
from typing import Any, Dict, Optional

from pydantic import BaseModel, Field

from sprite_imputer import __version__


class HostInfo(BaseModel):
    platform: str
    python_version: str
    torch_version: Optional[str] = None
    cpu_count: Optional[int] = None
    total_memory_bytes: Optional[int] = None


class RunManifest(BaseModel):
    """Everything needed to replay a command: written before the command does any work."""
    command: str
    arguments: Dict[str, Any] = Field(default_factory=dict)
    resolved_config: Optional[Dict[str, Any]] = None
    inputs: Dict[str, str] = Field(default_factory=dict)
    outputs: Dict[str, str] = Field(default_factory=dict)
    seed: Optional[int] = None
    tool_version: str = __version__
    host: Optional[HostInfo] = None
    started_at: datetime = Field(default_factory=datetime.now)
    finished_at: Optional[datetime] = None
    status: str = "running"

    def write(self, path: Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.model_dump_json(indent=2), encoding="utf-8")
        return path
