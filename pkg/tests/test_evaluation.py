"""Tests for the binary-rubric scoring framework."""

from __future__ import annotations

import pytest
from hypothesis import given
from hypothesis import strategies as st

from statviz.errors import GradeSheetError
from statviz.evaluation import (
    Category,
    GradeSheet,
    aggregate,
    checklist,
    emit_grade_form,
    ingest_grades,
    normalize,
    parse_report_csv,
    render_report,
    round_half_up,
    write_grade_sheet,
)
from statviz.tasks import Difficulty, TaskSpec

ALL_IDS = [item.id for item in checklist()]


def sheet_with(yes_ids: set[str], *, run_id="r1", model_config="m1",
               task_id="t1") -> GradeSheet:
    answers = {item_id: (1 if item_id in yes_ids else 0) for item_id in ALL_IDS}
    return GradeSheet(run_id=run_id, model_config=model_config, task_id=task_id,
                      answers=answers)


def all_yes_sheet(**kwargs) -> GradeSheet:
    return sheet_with(set(ALL_IDS), **kwargs)


class TestChecklist:
    def test_category_counts(self):
        items = checklist()
        counts = {cat: sum(1 for i in items if i.category is cat) for cat in Category}
        assert counts == {Category.VISUAL: 8, Category.CODE: 7, Category.DATA: 7}
        assert len(items) == 22

    def test_ids_unique_and_stable(self):
        ids = [i.id for i in checklist()]
        assert len(set(ids)) == 22
        assert checklist() == checklist()

    def test_good_scaling_is_a_visual_item(self):
        item = next(i for i in checklist() if i.id == "good_scaling")
        assert item.category is Category.VISUAL


class TestNormalize:
    # Case-study raw totals and their normalized scores: raw counts v/8, c/7,
    # d/7 scaled to 10 and rounded half-up (e.g. 4/7*10 = 5.714... -> 5.71).
    @pytest.mark.parametrize("raw,expected", [
        ((8, 7, 7), (10.00, 10.00, 10.00)),
        ((7, 4, 3), (8.75, 5.71, 4.29)),
        ((7, 7, 5), (8.75, 10.00, 7.14)),
        ((7, 6, 3), (8.75, 8.57, 4.29)),
    ])
    def test_case_study_totals(self, raw, expected):
        visual_ids = [i.id for i in checklist() if i.category is Category.VISUAL]
        code_ids = [i.id for i in checklist() if i.category is Category.CODE]
        data_ids = [i.id for i in checklist() if i.category is Category.DATA]
        yes = set(visual_ids[:raw[0]]) | set(code_ids[:raw[1]]) | set(data_ids[:raw[2]])
        scores = normalize(sheet_with(yes))
        assert (scores.visual, scores.code, scores.data) == pytest.approx(expected, abs=0.005)
        assert (scores.raw_visual, scores.raw_code, scores.raw_data) == raw

    def test_all_zero(self):
        scores = normalize(sheet_with(set()))
        assert (scores.visual, scores.code, scores.data) == (0.0, 0.0, 0.0)

    def test_all_yes(self):
        scores = normalize(all_yes_sheet())
        assert (scores.visual, scores.code, scores.data) == (10.0, 10.0, 10.0)

    @given(st.sets(st.sampled_from(ALL_IDS)))
    def test_bounds_and_monotonicity(self, yes_ids):
        scores = normalize(sheet_with(yes_ids))
        for value in (scores.visual, scores.code, scores.data):
            assert 0.0 <= value <= 10.0
        if len(yes_ids) < len(ALL_IDS):
            extra = next(i for i in ALL_IDS if i not in yes_ids)
            bigger = normalize(sheet_with(yes_ids | {extra}))
            assert (bigger.visual >= scores.visual
                    and bigger.code >= scores.code
                    and bigger.data >= scores.data)


class TestSheetValidation:
    def test_rejects_missing_answer(self):
        answers = {i: 1 for i in ALL_IDS if i != "handles_nulls"}
        with pytest.raises(GradeSheetError, match="handles_nulls"):
            GradeSheet("r", "m", "t", answers)

    def test_rejects_extra_answer(self):
        answers = {i: 1 for i in ALL_IDS}
        answers["made_up_item"] = 1
        with pytest.raises(GradeSheetError, match="made_up_item"):
            GradeSheet("r", "m", "t", answers)

    def test_rejects_non_binary(self):
        answers = {i: 1 for i in ALL_IDS}
        answers["code_runs"] = 2
        with pytest.raises(GradeSheetError, match="code_runs"):
            GradeSheet("r", "m", "t", answers)


class TestForms:
    def test_emit_form_has_22_unanswered_entries(self, tmp_path):
        path = emit_grade_form("run9", "cfg", "task3", tmp_path)
        lines = path.read_text().splitlines()
        blanks = [l for l in lines if l.endswith("= ") and not l.startswith("#")]
        assert len(blanks) == 22

    def test_reemit_is_identical(self, tmp_path):
        first = emit_grade_form("run9", "cfg", "task3", tmp_path).read_bytes()
        second = emit_grade_form("run9", "cfg", "task3", tmp_path).read_bytes()
        assert first == second

    def test_roundtrip_through_disk(self, tmp_path):
        sheet = sheet_with({"code_runs", "x_axis_correct"}, run_id="rr",
                           model_config="mm", task_id="tt")
        sheet.grader = "g1"
        path = write_grade_sheet(sheet, tmp_path)
        loaded = ingest_grades(path)
        assert loaded == sheet

    def test_ingest_rejects_missing_item(self, tmp_path):
        sheet = all_yes_sheet()
        path = write_grade_sheet(sheet, tmp_path)
        text = path.read_text().replace("handles_nulls = 1\n", "")
        path.write_text(text)
        with pytest.raises(GradeSheetError, match="handles_nulls"):
            ingest_grades(path)

    def test_ingest_rejects_duplicate_item(self, tmp_path):
        path = write_grade_sheet(all_yes_sheet(), tmp_path)
        path.write_text(path.read_text() + "code_runs = 0\n")
        with pytest.raises(GradeSheetError, match="duplicate"):
            ingest_grades(path)

    def test_ingest_rejects_out_of_domain_answer(self, tmp_path):
        path = write_grade_sheet(all_yes_sheet(), tmp_path)
        path.write_text(path.read_text().replace("code_runs = 1", "code_runs = 2"))
        with pytest.raises(GradeSheetError, match="0 or 1"):
            ingest_grades(path)


class TestAggregate:
    def test_mean_of_two_sheets(self):
        # visual means 10.00 and 8.75 -> 9.375, displayed as 9.38 (half-up).
        s1 = all_yes_sheet(task_id="t1")
        visual_ids = [i.id for i in checklist() if i.category is Category.VISUAL]
        others = [i.id for i in checklist() if i.category is not Category.VISUAL]
        s2 = sheet_with(set(visual_ids[:7]) | set(others), task_id="t2")
        report = aggregate([s1, s2])
        assert report.rows[0].n == 2
        assert round_half_up(report.rows[0].visual) == 9.38

    def test_single_sheet_equals_normalized(self):
        sheet = sheet_with({"code_runs", "correct_imports", "x_axis_correct"})
        report = aggregate([sheet])
        scores = normalize(sheet)
        row = report.rows[0]
        assert (row.visual, row.code, row.data) == (
            scores.visual, scores.code, scores.data)

    def test_identical_sheets_do_not_move_the_mean(self):
        sheet = sheet_with({"code_runs", "handles_nulls"})
        one = aggregate([sheet]).rows[0]
        many = aggregate([sheet] * 5).rows[0]
        assert (many.visual, many.code, many.data) == (one.visual, one.code, one.data)
        assert many.n == 5

    def test_difficulty_breakdown_groups(self):
        tasks = (
            [TaskSpec(f"e{i}", "p", Difficulty.EASY) for i in range(7)]
            + [TaskSpec(f"m{i}", "p", Difficulty.MEDIUM) for i in range(11)]
            + [TaskSpec(f"h{i}", "p", Difficulty.HARD) for i in range(7)]
        )
        sheets = [all_yes_sheet(task_id=t.id, run_id=f"r-{t.id}") for t in tasks]
        report = aggregate(sheets, tasks)
        sizes = {g.difficulty: g.n_tasks for g in report.breakdowns}
        assert sizes == {"easy": 7, "medium": 11, "hard": 7}
        assert report.n_sheets == 25

    def test_unknown_task_rejected(self):
        sheet = all_yes_sheet(task_id="ghost")
        with pytest.raises(GradeSheetError, match="ghost"):
            aggregate([sheet], [TaskSpec("real", "p", Difficulty.EASY)])


class TestRender:
    def make_report(self):
        from statviz.evaluation import ReportRow, ScoreReport
        return ScoreReport(rows=[
            ReportRow("o1-High", 7.50, 8.97, 7.37, 25),
        ], n_sheets=25)

    def test_table_two_shaped_row(self):
        text = render_report(self.make_report())
        assert "7.50" in text and "8.97" in text and "7.37" in text

    def test_csv_round_trip(self):
        text = render_report(self.make_report(), format="csv")
        rows = parse_report_csv(text)
        assert rows[0].model_config == "o1-High"
        assert (rows[0].visual, rows[0].code, rows[0].data) == (7.50, 8.97, 7.37)
        assert rows[0].n == 25

    def test_empty_breakdown_section_omitted(self):
        text = render_report(self.make_report())
        assert "difficulty" not in text
