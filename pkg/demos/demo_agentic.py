"""The agentic mode: inspect, execute, recover from an error, verify, stop.

The scripted provider plays a model that first runs broken code (wrong
column name), reads the error observation, fixes itself, checks the plot,
and finishes. Every code iteration is preserved in the run directory.
"""

from _workspace import fresh_workspace, materialize_all

from statviz.agent import AgentConfig, AgentMode, run_agentic
from statviz.catalog import list_materialized, stored_metadata
from statviz.errors import HarnessUnavailableError
from statviz.gateway import FinishReason, ModelTurn, ScriptedProvider, ToolCall
from statviz.prompting import ModuleId
from statviz.retrieval import HashedEmbeddings, build_index
from statviz.sandbox import StubExecutor, StubOutcome, ExitStatus, select_executor
from statviz.tasks import Difficulty, TaskSpec

GOOD_CODE = (
    "fig, ax = plt.subplots(figsize=(9, 4))\n"
    "ax.plot(range(len(df)), df['RawCowsMilkDelivered_1'])\n"
    "ax.set_xlabel('Month index')\n"
    "ax.set_ylabel('Raw milk delivered (mln kg)')\n"
    "ax.set_title('Monthly raw milk deliveries')\n"
    "fig.savefig('plot.png')\n"
)


def turn(name, arguments, call_id, text=None):
    return ModelTurn(text=text,
                     tool_calls=[ToolCall(call_id, name, arguments)],
                     finish_reason=FinishReason.TOOL_USE)


PROGRAM = [
    turn("list_files", {"path": "data/"}, "c1", "Let me see what data exists."),
    turn("read_file_head", {"path": "data/7425eng.csv", "n": 4}, "c2"),
    turn("execute_python_code", {"code": "plt.plot(df['MilkDelivered'])"}, "c3",
         "Plotting the delivery volumes."),
    turn("execute_python_code", {"code": GOOD_CODE}, "c4",
         "Wrong column name; using the real one."),
    turn("read_visualization_image", {}, "c5"),
    ModelTurn(text="The chart shows monthly raw milk deliveries.",
              finish_reason=FinishReason.STOP),
]


def main() -> None:
    workspace = fresh_workspace("agentic")
    data_dir = materialize_all(workspace)

    embedder = HashedEmbeddings(dim=128)
    metas = [stored_metadata(data_dir, ref) for ref in list_materialized(data_dir)]
    index = build_index(metas, embedder)

    try:
        executor = select_executor()
        print("executor: real harness")
    except HarnessUnavailableError:
        # The stub cannot raise KeyError for the bad column, so script it.
        executor = StubExecutor([
            StubOutcome(ExitStatus.RUNTIME_ERROR, stderr="KeyError: 'MilkDelivered'"),
            StubOutcome(ExitStatus.OK),
        ])
        print("executor: stub (build harness/ for real execution)")

    task = TaskSpec(id="milk-monthly",
                    prompt="Plot the monthly volume of raw cow's milk delivered "
                           "by dairy farmers between 2010-2015",
                    difficulty=Difficulty.MEDIUM, gold_table="7425eng")
    config = AgentConfig(mode=AgentMode.AGENTIC, data_dir=data_dir,
                         output_dir=workspace / "output", max_iters=25,
                         enabled_modules=frozenset({ModuleId.VIZ_CONTEXT,
                                                    ModuleId.VIZ_CHECKLIST}))
    record = run_agentic(task, config, index, embedder,
                         ScriptedProvider(PROGRAM), executor)

    print(f"\nrun {record.run_id}: {record.status.value} "
          f"after {len(record.turns)} turns")
    for i, turn_record in enumerate(record.turns, 1):
        calls = ", ".join(c.name for c in turn_record.turn.tool_calls) or "stop"
        results = ", ".join(r.status.value for r in turn_record.results)
        print(f"  turn {i}: {calls}" + (f" -> {results}" if results else ""))
    print(f"code iterations preserved: "
          f"{[p.name for p in record.code_iterations]}")
    print(f"final plot: {record.final_plot}")
    print("\nagent log:")
    for line in (record.run_dir / "agent_log").read_text().splitlines():
        print(f"  {line}")


if __name__ == "__main__":
    main()
