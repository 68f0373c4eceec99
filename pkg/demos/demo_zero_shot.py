"""The zero-shot mode: one prompt, one model call, one execution.

A scripted provider stands in for the chat model so the demo is fully
offline and deterministic. Code execution goes through the real harness
when it has been built (harness/dist), otherwise through the stub executor.
"""

from _workspace import fresh_workspace, materialize_all

from statviz.agent import AgentConfig, AgentMode, run_zero_shot
from statviz.catalog import list_materialized, stored_metadata
from statviz.errors import HarnessUnavailableError
from statviz.gateway import FinishReason, ModelTurn, ScriptedProvider
from statviz.prompting import ModuleId
from statviz.retrieval import HashedEmbeddings, build_index
from statviz.sandbox import StubExecutor, select_executor
from statviz.tasks import Difficulty, TaskSpec

SCRIPTED_RESPONSE = ModelTurn(
    text=(
        "The table holds monthly milk deliveries and cheese production.\n\n"
        "```python\n"
        "monthly = df[['Periods', 'CheeseProduction_2']]\n"
        "fig, ax = plt.subplots(figsize=(9, 4))\n"
        "ax.plot(range(len(monthly)), monthly['CheeseProduction_2'])\n"
        "ax.set_xlabel('Month index')\n"
        "ax.set_ylabel('Cheese production (mln kg)')\n"
        "ax.set_title('Cheese production in the Netherlands')\n"
        "fig.savefig('plot.png')\n"
        "```\n"
    ),
    finish_reason=FinishReason.STOP,
)


def main() -> None:
    workspace = fresh_workspace("zero_shot")
    data_dir = materialize_all(workspace)

    embedder = HashedEmbeddings(dim=128)
    metas = [stored_metadata(data_dir, ref) for ref in list_materialized(data_dir)]
    index = build_index(metas, embedder)

    try:
        executor = select_executor()
        print("executor: real harness "
              f"(version {executor.handshake().harness_version})")
    except HarnessUnavailableError:
        executor = StubExecutor()
        print("executor: stub (build harness/ for real execution)")

    task = TaskSpec(id="cheese-volume",
                    prompt="Plot the volume of cheese production in the Netherlands",
                    difficulty=Difficulty.EASY, gold_table="7425eng")
    config = AgentConfig(mode=AgentMode.ZERO_SHOT, data_dir=data_dir,
                         output_dir=workspace / "output",
                         enabled_modules=frozenset({ModuleId.VIZ_CONTEXT}))
    record = run_zero_shot(task, config, index, embedder,
                           ScriptedProvider([SCRIPTED_RESPONSE]), executor)

    print(f"\nrun {record.run_id}: {record.status.value}")
    print(f"retrieved table: {record.retrieved.ref} "
          f"(score {record.retrieved.score:+.4f})")
    print(f"artifacts under {record.run_dir}:")
    for path in sorted(record.run_dir.iterdir()):
        print(f"  {path.name}")
    print("\nassembled prompt (first 20 lines):")
    prompt_hash = record.prompt_hashes["assembled"][:12]
    print(f"  [sha256 {prompt_hash}...]")
    llm_log = (record.run_dir / "llm_log").read_text().splitlines()
    print(f"  llm_log records: {len(llm_log)}")


if __name__ == "__main__":
    main()
