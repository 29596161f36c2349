"""
Blab Config - Run settings from ~/.blab/config.json and the command line
"""

import json
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Optional

from .errors import PreconditionError

LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR")


@dataclass(frozen=True)
class Settings:
    N: int = 256
    L: float = 4.0
    tol: float = 1e-10
    max_iterations: int = 500
    pad_factor: int = 2
    seed: int = 0
    jobs: int = 1
    out_dir: str = "."
    log_level: str = "WARNING"

    def __post_init__(self):
        if self.jobs < 1:
            raise PreconditionError(f"jobs must be at least 1, got {self.jobs}")
        if self.log_level.upper() not in LOG_LEVELS:
            raise PreconditionError(f"Unknown log level {self.log_level!r}")
        object.__setattr__(self, "log_level", self.log_level.upper())

    def merged(self, **overrides) -> "Settings":
        """Copy with every override that is not None applied"""
        return replace(self, **{k: v for k, v in overrides.items() if v is not None})

    def output_path(self, name: str) -> Path:
        path = Path(name)
        return path if path.is_absolute() else Path(self.out_dir) / path


def config_path() -> Path:
    return Path.home() / ".blab" / "config.json"


def load_settings(path: Optional[Path] = None) -> Settings:
    """Settings from a JSON file; the default location may be absent, an explicit one may not"""
    explicit = path is not None
    path = Path(path) if explicit else config_path()
    if not path.exists():
        if explicit:
            raise PreconditionError(f"Config file not found: {path}")
        return Settings()
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise PreconditionError(f"Invalid JSON in {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise PreconditionError(f"Config {path} must hold a JSON object")
    known = {f.name: f.type for f in fields(Settings)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise PreconditionError(f"Unknown config keys in {path}: {', '.join(unknown)}")
    try:
        values = {k: known[k](v) for k, v in data.items()}
    except (TypeError, ValueError) as exc:
        raise PreconditionError(f"Bad config value in {path}: {exc}") from exc
    return Settings(**values)
