"""Task suites: the natural-language chart requests the pipeline is run on.

Suites are versioned tab-separated text files shipped with the repo
(``id<TAB>difficulty<TAB>gold_table<TAB>prompt``); a ``-`` gold_table means
none is recorded.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from importlib import resources
from pathlib import Path


class Difficulty(Enum):
    EASY = "easy"
    MEDIUM = "medium"
    HARD = "hard"


@dataclass(frozen=True)
class TaskSpec:
    id: str
    prompt: str
    difficulty: Difficulty
    gold_table: str | None = None

    def __post_init__(self) -> None:
        if not self.prompt.strip():
            raise ValueError("task prompt must be non-empty")


def parse_task_file(path: Path | str) -> list[TaskSpec]:
    tasks = []
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 4:
            raise ValueError(f"{path}:{lineno}: expected 4 tab-separated fields, got {len(parts)}")
        task_id, difficulty, gold, prompt = (p.strip() for p in parts)
        tasks.append(TaskSpec(
            id=task_id,
            prompt=prompt,
            difficulty=Difficulty(difficulty),
            gold_table=None if gold in ("", "-") else gold,
        ))
    if len({t.id for t in tasks}) != len(tasks):
        raise ValueError(f"{path}: duplicate task ids")
    return tasks


def load_default_tasks() -> list[TaskSpec]:
    """The suite shipped with the package (one seed task per difficulty tier)."""
    ref = resources.files("statviz").joinpath("assets/tasks/default_suite.tsv")
    with resources.as_file(ref) as path:
        return parse_task_file(path)
