"""Tests for prompt assembly: structure, ordering, module injection."""

from __future__ import annotations

import re

import pytest

from statviz.catalog import ColumnKind, ColumnSpec, TableMetadata, TableRef
from statviz.prompting import (
    ModuleId,
    PromptKind,
    RunPaths,
    assemble_agentic,
    assemble_zero_shot,
    build_dataset_context,
    render_module,
)


def births_meta() -> TableMetadata:
    return TableMetadata(
        ref=TableRef("85332ENG"),
        title="Caribbean Netherlands; births",
        description="Live born children by sex and region.",
        columns=(
            ColumnSpec("Regions", ColumnKind.CATEGORICAL),
            ColumnSpec("Periods", ColumnKind.PERIOD),
            ColumnSpec("LiveBornBoys_1", ColumnKind.NUMERIC, unit="number"),
        ),
        source_url="http://example/ODataApi/OData/85332ENG/TypedDataSet",
    )


SAMPLE = ("Bonaire", "2021JJ00", 83)
TASK = "plot the regional distribution of newborn boys"


class TestRenderModule:
    def test_checklist_names_its_criteria(self):
        body = render_module(ModuleId.VIZ_CHECKLIST)
        assert "clarity, data accuracy, and task alignment" in body

    def test_viz_context_covers_design_principles(self):
        body = render_module(ModuleId.VIZ_CONTEXT)
        assert body
        assert "principles" in body.lower()

    def test_unknown_id_rejected(self):
        with pytest.raises(ValueError):
            render_module("not_a_module")


class TestZeroShot:
    def test_section_order(self):
        bundle = assemble_zero_shot(births_meta(), SAMPLE, TASK,
                                    modules={ModuleId.VIZ_CONTEXT})
        text = bundle.system_text
        positions = [
            text.index("Column names (attributes)"),
            text.index("Sample row from the data (example):"),
            text.index("Data description:"),
            text.index(render_module(ModuleId.VIZ_CONTEXT)[:40]),
            text.index("Additional information:"),
            text.index("Write Python code to"),
        ]
        assert positions == sorted(positions)

    def test_no_modules_keeps_all_fixed_sections(self):
        bundle = assemble_zero_shot(births_meta(), SAMPLE, TASK)
        text = bundle.system_text
        for marker in ("Data Analysis Request",
                       "Column names (attributes)",
                       "Sample row from the data (example):",
                       "Data description:",
                       "Additional information:"):
            assert marker in text
        for module_id in ModuleId:
            assert render_module(module_id)[:40] not in text

    def test_constraints_block_verbatim(self):
        text = assemble_zero_shot(births_meta(), SAMPLE, TASK).system_text
        assert "Don't use the sample row as input." in text
        assert ("Assume that you already have access to all the data stored "
                "in a variable named df.") in text
        assert "Don't use any variables other than df and those derived from df." in text
        assert f"Write Python code to {TASK}." in text

    def test_deterministic(self):
        a = assemble_zero_shot(births_meta(), SAMPLE, TASK, {ModuleId.VIZ_CHECKLIST})
        b = assemble_zero_shot(births_meta(), SAMPLE, TASK, {ModuleId.VIZ_CHECKLIST})
        assert a.system_text == b.system_text
        assert a.hashes == b.hashes

    def test_sample_row_renders_nulls(self):
        bundle = assemble_zero_shot(births_meta(), ("Saba", None, ""), TASK)
        assert "Saba, null, null" in bundle.system_text

    def test_only_sample_row_values_appear(self):
        # Rows other than the sample must not leak into the prompt.
        other_rows = [("SENTINELREGION", "1999XX99", 424242)]
        text = assemble_zero_shot(births_meta(), SAMPLE, TASK).system_text
        for row in other_rows:
            for value in row:
                assert str(value) not in text

    def test_each_module_body_appears_once(self):
        body = render_module(ModuleId.LESSONS_LEARNED)
        bundle = assemble_zero_shot(births_meta(), SAMPLE, TASK,
                                    modules=[ModuleId.LESSONS_LEARNED,
                                             "lessons_learned"])
        assert bundle.system_text.count(body[:60]) == 1

    def test_unknown_module_rejected(self):
        with pytest.raises(ValueError):
            assemble_zero_shot(births_meta(), SAMPLE, TASK, modules={"bogus"})

    def test_empty_task_rejected(self):
        with pytest.raises(ValueError):
            assemble_zero_shot(births_meta(), SAMPLE, "  ")

    def test_kind(self):
        assert assemble_zero_shot(births_meta(), SAMPLE, TASK).kind \
            is PromptKind.ZERO_SHOT


class TestAgentic:
    def paths(self, run_id="r1"):
        return RunPaths.for_run("output", run_id)

    def context(self):
        return build_dataset_context(births_meta(), "85332ENG.csv")

    def test_seven_steps_and_five_tools(self):
        text = assemble_agentic(self.paths(), self.context()).system_text
        steps = re.findall(r"^\d+\. ", text, flags=re.MULTILINE)
        assert len(steps) == 7
        tools_section = text.split("Available Tools:")[1]
        assert len(re.findall(r"^- \w+:", tools_section, flags=re.MULTILINE)) == 5
        for name in ("list_files", "read_file_head", "execute_python_code",
                     "read_visualization_image", "get_human_feedback"):
            assert name in tools_section

    def test_all_four_paths_under_run_dir(self):
        text = assemble_agentic(self.paths("r1"), self.context()).system_text
        assert text.count("output/r1/") >= 4

    def test_persona_line_first(self):
        text = assemble_agentic(self.paths(), self.context()).system_text
        assert text.startswith("You are an expert data analysis and visualization "
                               "assistant.")

    def test_filesystem_restriction_notice(self):
        text = assemble_agentic(self.paths("r7"), self.context()).system_text
        assert "restricted to the './data/' directory" in text
        assert "'./output/r7/'" in text

    def test_three_modules_in_enum_order(self):
        bundle = assemble_agentic(self.paths(), self.context(),
                                  modules={ModuleId.VIZ_CHECKLIST,
                                           ModuleId.VIZ_CONTEXT,
                                           ModuleId.LESSONS_LEARNED})
        text = bundle.system_text
        positions = [text.index(render_module(m)[:40]) for m in ModuleId]
        assert positions == sorted(positions)
        assert len(bundle.hashes) == 4  # three modules + assembled

    def test_dataset_context_included(self):
        text = assemble_agentic(self.paths(), self.context()).system_text
        assert "'./data/85332ENG.csv'" in text
        assert "(stored as strings)" in text  # period column warning


class TestRunPaths:
    def test_unsafe_run_id_rejected(self):
        with pytest.raises(ValueError):
            RunPaths.for_run("output", "../evil")

    def test_layout(self, tmp_path):
        paths = RunPaths.for_run(tmp_path, "run-1")
        assert paths.run_dir == tmp_path / "run-1"
        assert paths.target_plot.name == "plot.png"
        assert paths.feedback_file.name == "feedback.txt"
        assert "code_iter_<n>.py-source" in paths.code_save_pattern

    def test_virtual_view_is_location_independent(self, tmp_path):
        a = RunPaths.for_run(tmp_path / "x", "r1").virtual()
        b = RunPaths.for_run(tmp_path / "y", "r1").virtual()
        assert a == b
        assert a["target_plot"] == "./output/r1/plot.png"
