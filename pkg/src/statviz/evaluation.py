"""Binary-rubric scoring of chart-generation runs.

A grader answers 22 yes/no questions per run, split over three categories
(8 visual, 7 code, 7 data). Category totals are normalised to scores out of
10 and averaged per model configuration, optionally broken down by task
difficulty. Rounding is half-up to two decimals, applied at normalisation and
again when a report is rendered.
"""

from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from enum import Enum
from pathlib import Path
from typing import Mapping, Sequence

from .errors import GradeSheetError
from .tasks import TaskSpec


class Category(Enum):
    VISUAL = "visual"
    CODE = "code"
    DATA = "data"


@dataclass(frozen=True)
class ChecklistItem:
    """One yes/no question; ``id`` is stable, ``question`` prose is editable."""

    id: str
    category: Category
    question: str


# The fixed rubric: 8 visual + 7 code + 7 data items. Ids are stable keys;
# only the question wording may change between versions.
_CHECKLIST: tuple[ChecklistItem, ...] = (
    ChecklistItem("x_axis_correct", Category.VISUAL,
                  "Is the x-axis the right variable, ordered and scaled sensibly?"),
    ChecklistItem("y_axis_correct", Category.VISUAL,
                  "Is the y-axis the right variable, with a sensible range?"),
    ChecklistItem("axis_labels_clear", Category.VISUAL,
                  "Are the axis labels clear and readable?"),
    ChecklistItem("color_used_well", Category.VISUAL,
                  "Are colours used purposefully and distinguishably?"),
    ChecklistItem("legend_accurate", Category.VISUAL,
                  "Is the legend present when needed and accurate?"),
    ChecklistItem("good_scaling", Category.VISUAL,
                  "Is the scaling honest (no exaggerated fluctuations, sensible baseline)?"),
    ChecklistItem("marks_correct", Category.VISUAL,
                  "Are the visual marks (bars, lines, points) appropriate and not overplotted?"),
    ChecklistItem("readable_layout", Category.VISUAL,
                  "Is the overall layout readable (no overlap, sensible size)?"),
    ChecklistItem("correct_imports", Category.CODE,
                  "Does the code import exactly the libraries it uses?"),
    ChecklistItem("code_runs", Category.CODE,
                  "Does the code execute without errors and produce a figure?"),
    ChecklistItem("correct_columns", Category.CODE,
                  "Does the code reference only existing column names?"),
    ChecklistItem("filters_correctly", Category.CODE,
                  "Does the filtering logic in the code match the stated conditions?"),
    ChecklistItem("no_hardcoding", Category.CODE,
                  "Does the code operate on the provided dataframe rather than hard-coded literals?"),
    ChecklistItem("prompt_fully_handled", Category.CODE,
                  "Does the code address every part of the request?"),
    ChecklistItem("no_redundancy", Category.CODE,
                  "Is the code free of redundant or dead computation?"),
    ChecklistItem("correct_chart_type", Category.DATA,
                  "Is the chart type appropriate for the data and the request?"),
    ChecklistItem("column_selection", Category.DATA,
                  "Were the correct columns selected for the request?"),
    ChecklistItem("correct_filtering", Category.DATA,
                  "Does the plotted subset reflect the requested filters?"),
    ChecklistItem("correct_aggregation", Category.DATA,
                  "Are aggregations applied exactly once and at the right level?"),
    ChecklistItem("subset_accurate", Category.DATA,
                  "Is the displayed subset of the data accurate?"),
    ChecklistItem("handles_nulls", Category.DATA,
                  "Are null values handled deliberately rather than silently distorting the plot?"),
    ChecklistItem("prompt_fully_covered", Category.DATA,
                  "Does the final chart cover the full intent of the prompt?"),
)

CATEGORY_SIZES = {Category.VISUAL: 8, Category.CODE: 7, Category.DATA: 7}

# Startup sanity check: the rubric shape is load-bearing for normalisation.
assert len(_CHECKLIST) == 22
for _cat, _size in CATEGORY_SIZES.items():
    assert sum(1 for _i in _CHECKLIST if _i.category is _cat) == _size
assert len({_i.id for _i in _CHECKLIST}) == 22


def checklist() -> list[ChecklistItem]:
    """Return the 22 fixed checklist items in canonical order."""
    return list(_CHECKLIST)


def round_half_up(value: float | Decimal, places: int = 2) -> float:
    """Round half away from zero, the convention used for all reported scores."""
    q = Decimal(1).scaleb(-places)
    return float(Decimal(str(value)).quantize(q, rounding=ROUND_HALF_UP))


@dataclass
class GradeSheet:
    """One grader's 22 binary answers for one (model configuration, task) run."""

    run_id: str
    model_config: str
    task_id: str
    answers: dict[str, int]
    grader: str = ""
    notes: str = ""

    def __post_init__(self) -> None:
        validate_answers(self.answers)

    def raw_totals(self) -> dict[Category, int]:
        by_id = {item.id: item.category for item in _CHECKLIST}
        totals = {cat: 0 for cat in Category}
        for item_id, answer in self.answers.items():
            totals[by_id[item_id]] += answer
        return totals


def validate_answers(answers: Mapping[str, int]) -> None:
    """Reject missing, unknown, or non-binary answers, naming the offender."""
    known = {item.id for item in _CHECKLIST}
    missing = sorted(known - set(answers))
    if missing:
        raise GradeSheetError(f"missing answers for: {', '.join(missing)}")
    extra = sorted(set(answers) - known)
    if extra:
        raise GradeSheetError(f"unknown item ids: {', '.join(extra)}")
    for item_id, answer in answers.items():
        if answer not in (0, 1):
            raise GradeSheetError(f"answer for {item_id!r} must be 0 or 1, got {answer!r}")


@dataclass(frozen=True)
class CategoryScores:
    """Per-category scores out of 10 plus the raw yes-counts behind them."""

    visual: float
    code: float
    data: float
    raw_visual: int
    raw_code: int
    raw_data: int


def normalize(sheet: GradeSheet) -> CategoryScores:
    """Scale raw yes-counts to scores out of 10, rounded half-up to 2 decimals."""
    totals = sheet.raw_totals()
    v, c, d = totals[Category.VISUAL], totals[Category.CODE], totals[Category.DATA]
    return CategoryScores(
        visual=round_half_up(v / CATEGORY_SIZES[Category.VISUAL] * 10),
        code=round_half_up(c / CATEGORY_SIZES[Category.CODE] * 10),
        data=round_half_up(d / CATEGORY_SIZES[Category.DATA] * 10),
        raw_visual=v,
        raw_code=c,
        raw_data=d,
    )


# ---------------------------------------------------------------------------
# Grade forms on disk
# ---------------------------------------------------------------------------

_FORM_SEPARATOR = "---"


def emit_grade_form(run_id: str, model_config: str, task_id: str,
                    out_dir: Path | str) -> Path:
    """Write a blank fill-in form for one run; re-emitting is byte-identical."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / f"{model_config}__{task_id}.grade"
    lines = [
        "# Grade sheet. Answer every item with 1 (yes) or 0 (no).",
        f"run_id: {run_id}",
        f"model_config: {model_config}",
        f"task_id: {task_id}",
        "grader: ",
        "notes: ",
        _FORM_SEPARATOR,
    ]
    current = None
    for item in _CHECKLIST:
        if item.category is not current:
            current = item.category
            lines.append(f"# -- {current.value} --")
        lines.append(f"# {item.question}")
        lines.append(f"{item.id} = ")
    text = "\n".join(lines) + "\n"
    tmp = path.with_suffix(".grade.tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)
    return path


def ingest_grades(path: Path | str) -> GradeSheet:
    """Parse and validate a filled-in grade form."""
    text = Path(path).read_text(encoding="utf-8")
    header: dict[str, str] = {}
    answers: dict[str, int] = {}
    in_header = True
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line == _FORM_SEPARATOR:
            in_header = False
            continue
        if in_header:
            key, _, value = line.partition(":")
            header[key.strip()] = value.strip()
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise GradeSheetError(f"{path}:{lineno}: expected 'item = 0|1', got {raw!r}")
        item_id = key.strip()
        if item_id in answers:
            raise GradeSheetError(f"{path}:{lineno}: duplicate item id {item_id!r}")
        value = value.strip()
        if value not in ("0", "1"):
            raise GradeSheetError(
                f"{path}:{lineno}: answer for {item_id!r} must be 0 or 1, got {value!r}")
        answers[item_id] = int(value)
    for required in ("run_id", "model_config", "task_id"):
        if not header.get(required):
            raise GradeSheetError(f"{path}: header field {required!r} is missing")
    return GradeSheet(
        run_id=header["run_id"],
        model_config=header["model_config"],
        task_id=header["task_id"],
        answers=answers,
        grader=header.get("grader", ""),
        notes=header.get("notes", ""),
    )


def write_grade_sheet(sheet: GradeSheet, out_dir: Path | str) -> Path:
    """Persist a filled sheet in the same flat key-value format forms use."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / f"{sheet.model_config}__{sheet.task_id}.grade"
    lines = [
        f"run_id: {sheet.run_id}",
        f"model_config: {sheet.model_config}",
        f"task_id: {sheet.task_id}",
        f"grader: {sheet.grader}",
        f"notes: {sheet.notes}",
        _FORM_SEPARATOR,
    ]
    lines.extend(f"{item.id} = {sheet.answers[item.id]}" for item in _CHECKLIST)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


# ---------------------------------------------------------------------------
# Aggregation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ReportRow:
    """Mean normalised scores for one model configuration."""

    model_config: str
    visual: float
    code: float
    data: float
    n: int


@dataclass(frozen=True)
class BreakdownGroup:
    difficulty: str
    n_tasks: int
    rows: tuple[ReportRow, ...]


@dataclass
class ScoreReport:
    rows: list[ReportRow]
    breakdowns: list[BreakdownGroup] = field(default_factory=list)
    n_sheets: int = 0


def _mean_rows(groups: Mapping[str, list[CategoryScores]]) -> list[ReportRow]:
    rows = []
    for model_config in sorted(groups):
        scores = groups[model_config]
        n = len(scores)
        rows.append(ReportRow(
            model_config=model_config,
            visual=sum(s.visual for s in scores) / n,
            code=sum(s.code for s in scores) / n,
            data=sum(s.data for s in scores) / n,
            n=n,
        ))
    return rows


def aggregate(sheets: Sequence[GradeSheet], tasks: Sequence[TaskSpec] = ()) -> ScoreReport:
    """Average normalised per-sheet scores per model configuration.

    When ``tasks`` is given, every sheet's task_id must resolve to one of
    them and the report gains a per-difficulty breakdown.
    """
    if not sheets:
        raise ValueError("no grade sheets to aggregate")
    difficulty_of: dict[str, str] = {task.id: task.difficulty.value for task in tasks}
    if tasks:
        for sheet in sheets:
            if sheet.task_id not in difficulty_of:
                raise GradeSheetError(
                    f"sheet for run {sheet.run_id!r} references unknown task {sheet.task_id!r}")

    by_config: dict[str, list[CategoryScores]] = {}
    by_difficulty: dict[str, dict[str, list[CategoryScores]]] = {}
    tasks_per_difficulty: dict[str, set[str]] = {}
    for sheet in sheets:
        scores = normalize(sheet)
        by_config.setdefault(sheet.model_config, []).append(scores)
        if difficulty_of:
            diff = difficulty_of[sheet.task_id]
            by_difficulty.setdefault(diff, {}).setdefault(sheet.model_config, []).append(scores)
            tasks_per_difficulty.setdefault(diff, set()).add(sheet.task_id)

    breakdowns = [
        BreakdownGroup(
            difficulty=diff,
            n_tasks=len(tasks_per_difficulty[diff]),
            rows=tuple(_mean_rows(by_difficulty[diff])),
        )
        for diff in sorted(by_difficulty)
    ]
    return ScoreReport(rows=_mean_rows(by_config), breakdowns=breakdowns,
                       n_sheets=len(sheets))


# ---------------------------------------------------------------------------
# Rendering
# ---------------------------------------------------------------------------

def _fmt(value: float) -> str:
    return f"{round_half_up(value):.2f}"


def render_report(report: ScoreReport, format: str = "text-table") -> str:
    """Render a score report as an aligned text table or as CSV.

    The CSV schema is ``model_config,visual,code,data,n`` and round-trips
    through :func:`parse_report_csv`.
    """
    if format == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["model_config", "visual", "code", "data", "n"])
        for row in report.rows:
            writer.writerow([row.model_config, _fmt(row.visual), _fmt(row.code),
                             _fmt(row.data), row.n])
        return buf.getvalue()
    if format != "text-table":
        raise ValueError(f"unknown report format {format!r}")

    width = max([len("model_config")] + [len(r.model_config) for r in report.rows])
    lines = [f"{'model_config':<{width}}  visual  code    data    n"]
    for row in report.rows:
        lines.append(f"{row.model_config:<{width}}  {_fmt(row.visual):>6}  "
                     f"{_fmt(row.code):>6}  {_fmt(row.data):>6}  {row.n}")
    for group in report.breakdowns:
        lines.append("")
        lines.append(f"difficulty: {group.difficulty} (tasks: {group.n_tasks})")
        for row in group.rows:
            lines.append(f"  {row.model_config:<{width}}  {_fmt(row.visual):>6}  "
                         f"{_fmt(row.code):>6}  {_fmt(row.data):>6}  {row.n}")
    return "\n".join(lines) + "\n"


def parse_report_csv(text: str) -> list[ReportRow]:
    reader = csv.DictReader(io.StringIO(text))
    return [
        ReportRow(model_config=rec["model_config"], visual=float(rec["visual"]),
                  code=float(rec["code"]), data=float(rec["data"]), n=int(rec["n"]))
        for rec in reader
    ]


def ingest_grades_dir(sheets_dir: Path | str) -> list[GradeSheet]:
    """Load every ``*.grade`` file under a directory, sorted by filename."""
    sheets_dir = Path(sheets_dir)
    return [ingest_grades(p) for p in sorted(sheets_dir.glob("*.grade"))]
