"""Pipeline configuration: defaults, JSON config file, environment overrides.

Secrets never live in config files; provider entries name the environment
variable holding the credential (``api_key_env``) and the adapter reads it
at request time.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

DEFAULT_ENDPOINT = "https://opendata.cbs.nl"

_ENV_PREFIX = "STATVIZ_"


@dataclass
class CliConfig:
    endpoint: str = DEFAULT_ENDPOINT
    data_dir: Path = Path("data")
    index_dir: Path = Path("index")
    output_dir: Path = Path("output")
    grades_dir: Path = Path("grades")
    cache_dir: Path | None = None
    embedder: dict = field(default_factory=lambda: {"kind": "hash", "dim": 64})
    provider: dict = field(default_factory=dict)
    max_iters: int = 25
    timeout_s: float = 60.0
    page_size: int = 1000
    workers: int = 1

    def __post_init__(self) -> None:
        self.data_dir = Path(self.data_dir)
        self.index_dir = Path(self.index_dir)
        self.output_dir = Path(self.output_dir)
        self.grades_dir = Path(self.grades_dir)
        if self.cache_dir is not None:
            self.cache_dir = Path(self.cache_dir)


_PATH_KEYS = ("data_dir", "index_dir", "output_dir", "grades_dir", "cache_dir")
_INT_KEYS = ("max_iters", "page_size", "workers")
_FLOAT_KEYS = ("timeout_s",)


def load_config(path: Path | str | None = None,
                env: dict[str, str] | None = None) -> CliConfig:
    """Defaults, overridden by the JSON config file, overridden by env vars.

    Environment variables use the ``STATVIZ_`` prefix with the upper-cased
    field name (``STATVIZ_DATA_DIR``, ``STATVIZ_MAX_ITERS``, ...).
    """
    env = os.environ if env is None else env
    values: dict = {}
    if path is not None:
        values.update(json.loads(Path(path).read_text(encoding="utf-8")))

    for key in ("endpoint", *_PATH_KEYS, *_INT_KEYS, *_FLOAT_KEYS):
        raw = env.get(_ENV_PREFIX + key.upper())
        if raw is None:
            continue
        if key in _INT_KEYS:
            values[key] = int(raw)
        elif key in _FLOAT_KEYS:
            values[key] = float(raw)
        else:
            values[key] = raw
    return CliConfig(**values)
