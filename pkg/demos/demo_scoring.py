"""The evaluation harness: grade forms, binary answers, normalized reports.

Recreates a four-model case study: each model's chart for the same request
is graded on the fixed 22-item checklist, normalized to category scores out
of 10, and aggregated into a report table.
"""

from _workspace import fresh_workspace

from statviz.evaluation import (
    Category,
    GradeSheet,
    aggregate,
    checklist,
    emit_grade_form,
    ingest_grades,
    normalize,
    render_report,
    write_grade_sheet,
)
from statviz.tasks import Difficulty, TaskSpec

VISUAL = [i.id for i in checklist() if i.category is Category.VISUAL]
CODE = [i.id for i in checklist() if i.category is Category.CODE]
DATA = [i.id for i in checklist() if i.category is Category.DATA]

# Four graded attempts at the same regional-births chart.
CASE_STUDY = {
    "llama":  ([1, 1, 1, 1, 1, 1, 0, 1], [1, 1, 0, 0, 1, 0, 1], [1, 0, 1, 1, 0, 0, 0]),
    "claude": ([1, 1, 1, 1, 1, 0, 1, 1], [1, 1, 1, 1, 1, 1, 1], [1, 1, 0, 0, 1, 1, 1]),
    "gpt4":   ([1, 1, 1, 1, 1, 0, 1, 1], [1, 1, 1, 1, 1, 0, 1], [0, 1, 0, 0, 1, 1, 0]),
    "o1":     ([1] * 8, [1] * 7, [1] * 7),
}


def main() -> None:
    workspace = fresh_workspace("scoring")

    form = emit_grade_form("run-demo", "o1", "caribbean-births",
                           workspace / "forms")
    print(f"blank grade form emitted: {form}")
    print("first lines:")
    for line in form.read_text().splitlines()[:10]:
        print(f"  {line}")

    sheets = []
    for model, (visual, code, data) in CASE_STUDY.items():
        answers = dict(zip(VISUAL, visual))
        answers.update(zip(CODE, code))
        answers.update(zip(DATA, data))
        sheet = GradeSheet(run_id=f"run-{model}", model_config=model,
                           task_id="caribbean-births", answers=answers,
                           grader="demo")
        path = write_grade_sheet(sheet, workspace / "sheets")
        sheets.append(ingest_grades(path))  # round-trip through disk

    print("\nnormalized category scores (out of 10):")
    for sheet in sheets:
        scores = normalize(sheet)
        print(f"  {sheet.model_config:<8} visual {scores.visual:>5.2f}  "
              f"code {scores.code:>5.2f}  data {scores.data:>5.2f}  "
              f"(raw {scores.raw_visual}/{scores.raw_code}/{scores.raw_data})")

    tasks = [TaskSpec("caribbean-births", "newborns by region", Difficulty.MEDIUM)]
    report = aggregate(sheets, tasks)
    print("\nreport (text table):")
    print(render_report(report))
    print("report (csv):")
    print(render_report(report, format="csv"))


if __name__ == "__main__":
    main()
