"""Prompt assembly for both experiment modes.

Two fixed templates: the zero-shot prompt packs dataset context (column
names, one sample row, the description) and a constraints block around the
task; the agentic prompt sets up the tool-using workflow with run-specific
file paths, seven numbered steps, and the five tool descriptions. Optional
instruction modules (visualization context, lessons learned, a
self-assessment checklist) are curated text assets shipped with the package
and injected in a fixed order; their content hashes travel with every run so
results stay attributable to exact prompt text.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

from .catalog import ColumnKind, TableMetadata, canonical_value

_RUN_ID_PATTERN = re.compile(r"^[A-Za-z0-9._-]+$")


class ModuleId(Enum):
    # Enum order is the injection order when several modules are enabled.
    VIZ_CONTEXT = "viz_context"
    LESSONS_LEARNED = "lessons_learned"
    VIZ_CHECKLIST = "viz_checklist"


class PromptKind(Enum):
    ZERO_SHOT = "zero_shot"
    AGENTIC = "agentic"


def render_module(module_id: ModuleId | str) -> str:
    """The module's curated body, from the versioned text asset."""
    module_id = module_id if isinstance(module_id, ModuleId) else ModuleId(module_id)
    ref = resources.files("statviz").joinpath(
        f"assets/prompt_modules/{module_id.value}.txt")
    body = ref.read_text(encoding="utf-8").strip()
    if not body:
        raise ValueError(f"prompt module {module_id.value} has an empty body")
    return body


def _coerce_modules(modules: Iterable[ModuleId | str]) -> frozenset[ModuleId]:
    return frozenset(m if isinstance(m, ModuleId) else ModuleId(m) for m in modules)


def _module_sections(modules: frozenset[ModuleId]) -> tuple[list[str], dict[str, str]]:
    bodies, hashes = [], {}
    for module_id in ModuleId:  # fixed enum order
        if module_id in modules:
            body = render_module(module_id)
            bodies.append(body)
            hashes[module_id.value] = hashlib.sha256(body.encode("utf-8")).hexdigest()
    return bodies, hashes


@dataclass(frozen=True)
class PromptBundle:
    kind: PromptKind
    system_text: str
    user_text: str | None
    enabled_modules: frozenset[ModuleId]
    hashes: dict[str, str] = field(default_factory=dict, compare=False)


@dataclass(frozen=True)
class RunPaths:
    """The four file paths a run's prompt advertises, all under its output dir."""

    run_id: str
    log_file: Path
    code_save_pattern: str
    target_plot: Path
    feedback_file: Path

    def __post_init__(self) -> None:
        if not _RUN_ID_PATTERN.match(self.run_id):
            raise ValueError(f"run id {self.run_id!r} is not filesystem-safe")

    @classmethod
    def for_run(cls, output_dir: Path | str, run_id: str) -> "RunPaths":
        run_dir = Path(output_dir) / run_id
        return cls(
            run_id=run_id,
            log_file=run_dir / "agent_log",
            code_save_pattern=str(run_dir / "code_iter_<n>.py-source"),
            target_plot=run_dir / "plot.png",
            feedback_file=run_dir / "feedback.txt",
        )

    @property
    def run_dir(self) -> Path:
        return self.target_plot.parent

    def virtual(self) -> dict[str, str]:
        """The run-relative view advertised in prompts and understood by the
        agent's tools, independent of where the output dir physically lives."""
        base = f"./output/{self.run_id}"
        return {
            "log_file": f"{base}/{self.log_file.name}",
            "code_save_pattern": f"{base}/code_iter_<n>.py-source",
            "target_plot": f"{base}/{self.target_plot.name}",
            "feedback_file": f"{base}/{self.feedback_file.name}",
        }


def assemble_zero_shot(meta: TableMetadata, sample: Sequence[object], task: str,
                       modules: Iterable[ModuleId | str] = ()) -> PromptBundle:
    """Build the single-pass prompt: columns, sample row, description,
    optional modules, constraints, then the task."""
    if not meta.columns:
        raise ValueError("metadata must list at least one column")
    if not task.strip():
        raise ValueError("task must be non-empty")
    enabled = _coerce_modules(modules)
    module_bodies, hashes = _module_sections(enabled)

    sample_text = ", ".join(
        "null" if v is None or v == "" else canonical_value(v) for v in sample)
    sections = [
        "Data Analysis Request",
        "Column names (attributes) of data to be analyzed:\n"
        + ", ".join(c.name for c in meta.columns),
        "Sample row from the data (example):\n" + sample_text,
        "Data description:\n" + meta.description,
        *module_bodies,
        "Additional information: Don't use the sample row as input. "
        "Make sure to use only the corresponding column name(s) from the list "
        "provided above. Assume that you already have access to all the data "
        "stored in a variable named df. Don't use any variables other than df "
        "and those derived from df. "
        f"Now do the following: Write Python code to {task.strip()}. "
        "Provide a short description of the data, separated from the code.",
    ]
    text = "\n\n".join(sections)
    hashes["assembled"] = hashlib.sha256(text.encode("utf-8")).hexdigest()
    return PromptBundle(kind=PromptKind.ZERO_SHOT, system_text=text, user_text=None,
                        enabled_modules=enabled, hashes=hashes)


_WORKFLOW_STEPS = (
    ("Understand Request", "Clarify the user's goal."),
    ("Explore Data", "Use list_files if needed."),
    ("Inspect Data", "Use read_file_head."),
    ("Plan Code", "Plan pandas/matplotlib/seaborn code."),
    ("Execute Code", "Use execute_python_code."),
    ("Analyze Results", "Check execution output."),
    ("Respond", "Explain steps, results, describe plot."),
)

_TOOL_SUMMARIES = (
    ("list_files", "Lists files in directory"),
    ("read_file_head", "Reads start of file"),
    ("execute_python_code", "Executes Python code"),
    ("read_visualization_image", "Reads the plot"),
    ("get_human_feedback", "Logs request for help"),
)

TOOL_NAMES = tuple(name for name, _ in _TOOL_SUMMARIES)


def assemble_agentic(paths: RunPaths, dataset_context: str,
                     modules: Iterable[ModuleId | str] = ()) -> PromptBundle:
    """Build the tool-loop system prompt around a run's file paths."""
    enabled = _coerce_modules(modules)
    module_bodies, hashes = _module_sections(enabled)

    steps = "\n".join(
        f"{i}. {name}: {hint}" for i, (name, hint) in enumerate(_WORKFLOW_STEPS, 1))
    tools = "\n".join(f"- {name}: {hint}" for name, hint in _TOOL_SUMMARIES)
    virtual = paths.virtual()
    sections = [
        "You are an expert data analysis and visualization assistant. "
        "Your goal is to help the user create a visualization based on their request.",
        dataset_context.strip(),
        *module_bodies,
        "You have access to a filesystem restricted to the './data/' directory. "
        f"All outputs for this run will be saved within './output/{paths.run_id}/'.\n"
        "Key file paths for this run:\n"
        f"- Log File: {virtual['log_file']}\n"
        f"- Executed Code: {virtual['code_save_pattern']}\n"
        f"- Target Plot: {virtual['target_plot']}\n"
        f"- Human Feedback: {virtual['feedback_file']}",
        "Follow these steps:\n" + steps,
        "Available Tools:\n" + tools,
    ]
    text = "\n\n".join(s for s in sections if s)
    hashes["assembled"] = hashlib.sha256(text.encode("utf-8")).hexdigest()
    return PromptBundle(kind=PromptKind.AGENTIC, system_text=text, user_text=None,
                        enabled_modules=enabled, hashes=hashes)


def build_dataset_context(meta: TableMetadata, csv_name: str) -> str:
    """The dataset block injected into the agentic prompt: where the top-1
    table lives and what its columns mean."""
    lines = [
        f"Dataset for this request: './data/{csv_name}'",
        f"Title: {meta.title}",
        f"Description: {meta.description}",
        "Columns:",
    ]
    for col in meta.columns:
        unit = f" [{col.unit}]" if col.unit else ""
        note = " (stored as strings)" if col.kind is ColumnKind.PERIOD else ""
        lines.append(f"- {col.name} ({col.kind.value}{unit}){note}")
    return "\n".join(lines)
