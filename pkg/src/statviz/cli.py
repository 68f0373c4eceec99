"""Command-line entry points tying the pipeline together.

Every command is non-interactive and exit-code disciplined: 0 on success,
1 for user errors (bad arguments, unknown refs, invalid files), 2 for
internal failures.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import json
import sys
from pathlib import Path

from . import agent, catalog, evaluation, gateway, retrieval, sandbox, tasks
from .config import CliConfig, load_config
from .errors import StatvizError
from .prompting import ModuleId

EXIT_OK = 0
EXIT_USER_ERROR = 1
EXIT_INTERNAL_ERROR = 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with code 2 on bad usage; the CLI contract wants 1.
    def error(self, message):
        raise UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="statviz",
                     description="Charts from natural-language questions "
                                 "over official statistics tables.")
    parser.add_argument("--config", type=Path, default=None,
                        help="JSON config file (env vars override it)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fetch", help="materialize tables into the data directory")
    p.add_argument("refs", nargs="+", help="table identifiers")
    p.add_argument("--endpoint")
    p.add_argument("--data-dir", type=Path)
    p.add_argument("--cache-dir", type=Path)
    p.add_argument("--page-size", type=int)

    p = sub.add_parser("index", help="build the retrieval index from materialized tables")
    p.add_argument("--data-dir", type=Path)
    p.add_argument("--index-dir", type=Path)
    p.add_argument("--embedder", help="embedder config as JSON")

    p = sub.add_parser("retrieve", help="rank tables against a prompt")
    p.add_argument("prompt")
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--index-dir", type=Path)
    p.add_argument("--embedder", help="embedder config as JSON")

    p = sub.add_parser("run", help="run tasks in zero-shot or agentic mode")
    source = p.add_mutually_exclusive_group(required=True)
    source.add_argument("--task-file", type=Path)
    source.add_argument("--prompt")
    p.add_argument("--mode", choices=[m.value for m in agent.AgentMode],
                   default=agent.AgentMode.AGENTIC.value)
    p.add_argument("--modules", default="",
                   help="comma-separated module ids "
                        f"({', '.join(m.value for m in ModuleId)})")
    p.add_argument("--max-iters", type=int)
    p.add_argument("--model-config", default="default")
    p.add_argument("--provider-config", type=Path, required=True,
                   help="JSON file with the chat provider settings")
    p.add_argument("--embedder", help="embedder config as JSON")
    p.add_argument("--executor", choices=["harness", "stub"], default="harness",
                   help="stub fakes code execution; for tests and demos only")
    p.add_argument("--data-dir", type=Path)
    p.add_argument("--index-dir", type=Path)
    p.add_argument("--output-dir", type=Path)
    p.add_argument("--timeout-s", type=float)
    p.add_argument("--workers", type=int)
    p.add_argument("--force", action="store_true",
                   help="rerun tasks that already have a completed run")

    p = sub.add_parser("grade", help="emit blank grade forms for finished runs")
    p.add_argument("--runs-dir", type=Path)
    p.add_argument("--grades-dir", type=Path)

    p = sub.add_parser("report", help="aggregate grade sheets into a score report")
    p.add_argument("--sheets-dir", type=Path)
    p.add_argument("--task-file", type=Path)
    p.add_argument("--by-difficulty", action="store_true")
    p.add_argument("--format", choices=["text-table", "csv"], default="text-table")

    return parser


def _config_from_args(args) -> CliConfig:
    config = load_config(args.config)
    for key in ("endpoint", "data_dir", "index_dir", "output_dir", "grades_dir",
                "cache_dir", "page_size", "max_iters", "timeout_s", "workers"):
        value = getattr(args, key, None)
        if value is not None:
            setattr(config, key, value)
    return config


def _embedder(args, config: CliConfig):
    spec = config.embedder
    if getattr(args, "embedder", None):
        spec = json.loads(args.embedder)
    return retrieval.embedder_from_config(spec)


def _parse_modules(raw: str) -> frozenset[ModuleId]:
    names = [part.strip() for part in raw.split(",") if part.strip()]
    try:
        return frozenset(ModuleId(name) for name in names)
    except ValueError:
        valid = ", ".join(m.value for m in ModuleId)
        raise UsageError(f"unknown module in {raw!r}; valid ids: {valid}")


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_fetch(args, config: CliConfig) -> int:
    config.data_dir.mkdir(parents=True, exist_ok=True)
    for raw_ref in args.refs:
        ref = catalog.TableRef(raw_ref)
        meta = catalog.fetch_metadata(ref, config.endpoint, cache_dir=config.cache_dir)
        table = catalog.fetch_table(ref, config.endpoint, config.page_size, meta,
                                    cache_dir=config.cache_dir)
        catalog.materialize(table, meta, config.data_dir)
        print(f"{ref}: {len(table.rows)} rows")
    return EXIT_OK


def cmd_index(args, config: CliConfig) -> int:
    refs = catalog.list_materialized(config.data_dir)
    if not refs:
        raise UsageError(f"no materialized tables under {config.data_dir}")
    metas = [catalog.stored_metadata(config.data_dir, ref) for ref in refs]
    provider = _embedder(args, config)
    index = retrieval.build_index(metas, provider)
    retrieval.save_index(index, config.index_dir)
    print(f"indexed {len(index)} tables into {config.index_dir} "
          f"(provider {provider.provider_id})")
    return EXIT_OK


def cmd_retrieve(args, config: CliConfig) -> int:
    index = retrieval.load_index(config.index_dir)
    provider = _embedder(args, config)
    for match in retrieval.query(index, args.prompt, args.k, provider):
        print(f"{match.rank:>3}  {match.score:+.6f}  {match.ref}")
    return EXIT_OK


def cmd_run(args, config: CliConfig) -> int:
    if args.task_file:
        suite = tasks.parse_task_file(args.task_file)
    else:
        suite = [tasks.TaskSpec(id="adhoc", prompt=args.prompt,
                                difficulty=tasks.Difficulty.MEDIUM)]
    mode = agent.AgentMode(args.mode)
    modules = _parse_modules(args.modules)
    provider_settings = json.loads(args.provider_config.read_text(encoding="utf-8"))
    index = retrieval.load_index(config.index_dir)
    embedder = _embedder(args, config)
    executor = (sandbox.StubExecutor() if args.executor == "stub"
                else sandbox.select_executor())

    agent_config = agent.AgentConfig(
        mode=mode, data_dir=config.data_dir, output_dir=config.output_dir,
        max_iters=config.max_iters, enabled_modules=modules,
        model_config=args.model_config, provider_settings=provider_settings,
        timeout_s=config.timeout_s,
    )

    def run_one(task: tasks.TaskSpec) -> tuple[str, str]:
        run_id = agent.deterministic_run_id(task, mode, args.model_config)
        run_dir = config.output_dir / run_id
        if not args.force and agent.run_is_completed(run_dir):
            return run_id, "skipped (already completed)"
        llm = gateway.provider_from_config(provider_settings)
        runner = agent.run_zero_shot if mode is agent.AgentMode.ZERO_SHOT \
            else agent.run_agentic
        record = runner(task, agent_config, index, embedder, llm, executor,
                        run_id=run_id)
        return run_id, record.status.value

    failures = 0
    if config.workers > 1 and len(suite) > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=config.workers) as pool:
            outcomes = list(pool.map(run_one, suite))
    else:
        outcomes = [run_one(task) for task in suite]
    for run_id, outcome in outcomes:
        print(f"{run_id}: {outcome}")
        if outcome == agent.RunStatus.FAILED.value:
            failures += 1
    return EXIT_OK if failures == 0 else EXIT_USER_ERROR


def cmd_grade(args, config: CliConfig) -> int:
    runs_dir = args.runs_dir or config.output_dir
    count = 0
    for manifest_path in sorted(Path(runs_dir).glob("*/manifest.json")):
        manifest = agent.load_manifest(manifest_path.parent)
        path = evaluation.emit_grade_form(
            run_id=manifest["run_id"],
            model_config=manifest["model_config"],
            task_id=manifest["task"]["id"],
            out_dir=config.grades_dir,
        )
        print(path)
        count += 1
    if count == 0:
        raise UsageError(f"no run manifests under {runs_dir}")
    return EXIT_OK


def cmd_report(args, config: CliConfig) -> int:
    sheets_dir = args.sheets_dir or config.grades_dir
    sheets = evaluation.ingest_grades_dir(sheets_dir)
    if not sheets:
        raise UsageError(f"no grade sheets under {sheets_dir}")
    suite: list[tasks.TaskSpec] = []
    if args.by_difficulty:
        if not args.task_file:
            raise UsageError("--by-difficulty needs --task-file for difficulty labels")
        suite = tasks.parse_task_file(args.task_file)
    report = evaluation.aggregate(sheets, suite)
    print(evaluation.render_report(report, format=args.format), end="")
    return EXIT_OK


_COMMANDS = {
    "fetch": cmd_fetch,
    "index": cmd_index,
    "retrieve": cmd_retrieve,
    "run": cmd_run,
    "grade": cmd_grade,
    "report": cmd_report,
}


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        config = _config_from_args(args)
        return _COMMANDS[args.command](args, config)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USER_ERROR
    except (StatvizError, FileNotFoundError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USER_ERROR
    except Exception as exc:  # pragma: no cover - defensive
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL_ERROR


if __name__ == "__main__":
    sys.exit(main())
