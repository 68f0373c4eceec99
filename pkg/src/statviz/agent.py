"""Run orchestration: zero-shot single-pass generation and the agentic loop.

A run owns a directory ``output/<run_id>/`` holding everything needed to
grade or replay it:

    manifest.json              the persisted RunRecord
    llm_log                    raw gateway exchanges, line-delimited JSON
    agent_log                  human-readable loop events
    code_iter_<n>.py-source    every executed code version, in order
    plot.png                   the final chart, when one was produced
    feedback.txt               appended if the model asked for human help

Tools the model may call are dispatched through a path guard: reads are
confined to the data directory and the run's own output directory, code
execution writes only inside the run directory. The guard resolves symlinks
and ``..`` before deciding, and a denial is an observation returned to the
model, not an abort.
"""

from __future__ import annotations

import base64
import json
import re
import uuid
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path, PurePosixPath

from .catalog import load_stored, sample_row, stored_metadata
from .errors import NotFoundError, TransportError
from .gateway import (
    FinishReason,
    LlmGateway,
    Message,
    ModelTurn,
    ParamSpec,
    Role,
    ToolCall,
    ToolSpec,
    turn_to_json,
)
from .prompting import (
    ModuleId,
    RunPaths,
    assemble_agentic,
    assemble_zero_shot,
    build_dataset_context,
)
from .retrieval import EmbeddingProvider, RankedMatch, RetrievalIndex, query
from .sandbox import ExecutionRequest, Executor, ExitStatus, png_dimensions
from .tasks import TaskSpec

_CODE_BLOCK = re.compile(r"```(?:[Pp]ython)?\s*\n(.*?)```", re.DOTALL)
_UNSAFE_RUN_ID = re.compile(r"[^A-Za-z0-9._-]+")


class AgentMode(Enum):
    ZERO_SHOT = "zero_shot"
    AGENTIC = "agentic"


class RunStatus(Enum):
    COMPLETED = "completed"
    EXHAUSTED_ITERS = "exhausted_iters"
    FAILED = "failed"


class ToolStatus(Enum):
    OK = "ok"
    ERROR = "error"
    DENIED = "denied"


@dataclass
class AgentConfig:
    mode: AgentMode
    data_dir: Path
    output_dir: Path
    max_iters: int = 25
    enabled_modules: frozenset[ModuleId] = frozenset()
    model_config: str = "default"
    provider_settings: dict = field(default_factory=dict)
    timeout_s: float = 60.0
    multimodal: bool = False

    def __post_init__(self) -> None:
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        self.data_dir = Path(self.data_dir)
        self.output_dir = Path(self.output_dir)


@dataclass
class ToolResult:
    call_id: str
    status: ToolStatus
    payload: str | dict

    def payload_text(self) -> str:
        if isinstance(self.payload, str):
            return self.payload
        return json.dumps(self.payload, sort_keys=True)


@dataclass
class TurnRecord:
    turn: ModelTurn
    results: list[ToolResult] = field(default_factory=list)


@dataclass
class RunRecord:
    run_id: str
    task: TaskSpec
    mode: AgentMode
    model_config: str
    retrieved: RankedMatch | None
    turns: list[TurnRecord]
    code_iterations: list[Path]
    final_plot: Path | None
    status: RunStatus
    failure_reason: str | None
    prompt_hashes: dict[str, str]
    run_dir: Path
    max_iters: int
    provider_settings: dict
    started_at: str
    finished_at: str

    def to_manifest(self) -> dict:
        return {
            "run_id": self.run_id,
            "run_dir": str(self.run_dir),
            "task": {
                "id": self.task.id,
                "prompt": self.task.prompt,
                "difficulty": self.task.difficulty.value,
                "gold_table": self.task.gold_table,
            },
            "mode": self.mode.value,
            "model_config": self.model_config,
            "retrieved": None if self.retrieved is None else {
                "ref": self.retrieved.ref,
                "score": self.retrieved.score,
                "rank": self.retrieved.rank,
            },
            "status": self.status.value,
            "failure_reason": self.failure_reason,
            "code_iterations": [p.name for p in self.code_iterations],
            "final_plot": self.final_plot.name if self.final_plot else None,
            "prompt_hashes": self.prompt_hashes,
            "max_iters": self.max_iters,
            "provider_settings": self.provider_settings,
            "turns": [
                {
                    "turn": turn_to_json(rec.turn),
                    "latency_s": rec.turn.latency_s,
                    "results": [
                        {"call_id": r.call_id, "status": r.status.value,
                         "payload": r.payload}
                        for r in rec.results
                    ],
                }
                for rec in self.turns
            ],
            "started_at": self.started_at,
            "finished_at": self.finished_at,
        }


def deterministic_run_id(task: TaskSpec, mode: AgentMode, model_config: str) -> str:
    raw = f"{task.id}--{mode.value}--{model_config}"
    return _UNSAFE_RUN_ID.sub("-", raw)


def fresh_run_id(task: TaskSpec, mode: AgentMode, model_config: str) -> str:
    return f"{deterministic_run_id(task, mode, model_config)}--{uuid.uuid4().hex[:8]}"


# ---------------------------------------------------------------------------
# Path guard
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GuardDecision:
    allowed: bool
    resolved: Path | None
    violation: str | None = None


class PathGuard:
    """Confines tool file access to the data dir and the run's own output dir.

    Candidates use the virtual layout the prompt advertises ("data/...",
    "output/<run_id>/..."); they are mapped onto the real directories, then
    canonicalized (symlinks resolved, ``..`` collapsed) and accepted only if
    they land inside a root. Denial is a value, never an exception.
    """

    def __init__(self, data_dir: Path, run_dir: Path):
        self._data_dir = Path(data_dir).resolve()
        self._run_dir = Path(run_dir).resolve()
        self._output_root = self._run_dir.parent
        self._roots = (self._data_dir, self._run_dir)

    def _map_virtual(self, candidate: str) -> Path:
        text = str(candidate).replace("\\", "/")
        pure = PurePosixPath(text)
        parts = [p for p in pure.parts if p != "."]
        if pure.is_absolute():
            return Path(text)
        if parts and parts[0] == "data":
            return self._data_dir.joinpath(*parts[1:])
        if parts and parts[0] == "output":
            return self._output_root.joinpath(*parts[1:])
        # Bare relative names have no sanctioned meaning; anchor them next to
        # the data dir so traversal still has to escape a real root to matter.
        return self._data_dir.joinpath(*parts)

    def check(self, candidate: str | Path) -> GuardDecision:
        if not str(candidate).strip():
            return GuardDecision(False, None, violation=str(candidate))
        mapped = self._map_virtual(str(candidate))
        try:
            resolved = mapped.resolve()
        except (OSError, RuntimeError):
            return GuardDecision(False, None, violation=str(candidate))
        for root in self._roots:
            if resolved == root or root in resolved.parents:
                return GuardDecision(True, resolved)
        return GuardDecision(False, resolved, violation=str(candidate))


def guard_path(candidate: str | Path, guard: PathGuard) -> GuardDecision:
    return guard.check(candidate)


# ---------------------------------------------------------------------------
# Tool suite
# ---------------------------------------------------------------------------

def tool_specs() -> list[ToolSpec]:
    """The five tools, wire names fixed for prompt compatibility."""
    return [
        ToolSpec("list_files", "Lists files in directory", {
            "path": ParamSpec("string", "Directory to list, e.g. 'data/'",
                              required=False, default="data"),
        }),
        ToolSpec("read_file_head", "Reads start of file", {
            "path": ParamSpec("string", "File to read"),
            "n": ParamSpec("integer", "Number of lines", required=False, default=20),
        }),
        ToolSpec("execute_python_code", "Executes Python code", {
            "code": ParamSpec("string", "Python source to run; the dataset is "
                                        "preloaded as the variable df"),
        }),
        ToolSpec("read_visualization_image", "Reads the plot", {}),
        ToolSpec("get_human_feedback", "Logs request for help", {
            "message": ParamSpec("string", "What you need help with"),
        }),
    ]


@dataclass
class ToolContext:
    guard: PathGuard
    paths: RunPaths
    dataset_csv: Path
    executor: Executor
    timeout_s: float
    code_iterations: list[Path]
    multimodal: bool = False


def _next_code_path(ctx: ToolContext) -> Path:
    n = len(ctx.code_iterations) + 1
    return ctx.paths.run_dir / f"code_iter_{n}.py-source"


def dispatch_tool(call: ToolCall, ctx: ToolContext) -> ToolResult:
    """Route one validated tool call; never raises for model mistakes."""
    handler = {
        "list_files": _tool_list_files,
        "read_file_head": _tool_read_file_head,
        "execute_python_code": _tool_execute,
        "read_visualization_image": _tool_read_image,
        "get_human_feedback": _tool_feedback,
    }.get(call.name)
    if handler is None:
        return ToolResult(call.id, ToolStatus.ERROR, f"unknown tool {call.name!r}")
    return handler(call, ctx)


def _tool_list_files(call: ToolCall, ctx: ToolContext) -> ToolResult:
    candidate = call.arguments.get("path", "data")
    decision = ctx.guard.check(candidate)
    if not decision.allowed:
        return ToolResult(call.id, ToolStatus.DENIED,
                          f"access denied: {decision.violation}")
    if not decision.resolved.is_dir():
        return ToolResult(call.id, ToolStatus.ERROR,
                          f"not a directory: {candidate}")
    names = sorted(p.name for p in decision.resolved.iterdir())
    return ToolResult(call.id, ToolStatus.OK, "\n".join(names))


def _tool_read_file_head(call: ToolCall, ctx: ToolContext) -> ToolResult:
    candidate = call.arguments["path"]
    n = call.arguments.get("n", 20)
    if n < 1:
        return ToolResult(call.id, ToolStatus.ERROR, "n must be at least 1")
    decision = ctx.guard.check(candidate)
    if not decision.allowed:
        return ToolResult(call.id, ToolStatus.DENIED,
                          f"access denied: {decision.violation}")
    if not decision.resolved.is_file():
        return ToolResult(call.id, ToolStatus.ERROR, f"no such file: {candidate}")
    lines = []
    with decision.resolved.open(encoding="utf-8", errors="replace") as fh:
        for i, line in enumerate(fh):
            if i >= n:
                break
            lines.append(line.rstrip("\n"))
    return ToolResult(call.id, ToolStatus.OK, "\n".join(lines))


def _tool_execute(call: ToolCall, ctx: ToolContext) -> ToolResult:
    code = call.arguments["code"]
    if not code.strip():
        return ToolResult(call.id, ToolStatus.ERROR, "code must be non-empty")
    code_path = _next_code_path(ctx)
    code_path.write_text(code, encoding="utf-8")
    ctx.code_iterations.append(code_path)
    result = ctx.executor.execute(ExecutionRequest(
        code=code,
        dataset_csv=ctx.dataset_csv,
        target_plot=ctx.paths.target_plot,
        allowed_write_dir=ctx.paths.run_dir,
        timeout_s=ctx.timeout_s,
    ))
    payload = {
        "exit_status": result.exit_status.value,
        "stdout": result.stdout,
        "stderr": result.stderr,
        "plot_written": result.plot_written,
        "duration_s": result.duration_s,
        "code_file": code_path.name,
    }
    status = ToolStatus.OK if result.exit_status is ExitStatus.OK else ToolStatus.ERROR
    return ToolResult(call.id, status, payload)


def _tool_read_image(call: ToolCall, ctx: ToolContext) -> ToolResult:
    plot = ctx.paths.target_plot
    if not plot.exists() or plot.stat().st_size == 0:
        return ToolResult(call.id, ToolStatus.ERROR,
                          "no visualization has been produced yet")
    try:
        width, height = png_dimensions(plot)
    except ValueError as exc:
        return ToolResult(call.id, ToolStatus.ERROR, str(exc))
    payload: dict = {"exists": True, "format": "png", "width": width,
                     "height": height, "file": plot.name}
    if ctx.multimodal:
        payload["image_b64"] = base64.b64encode(plot.read_bytes()).decode("ascii")
    return ToolResult(call.id, ToolStatus.OK, payload)


def _tool_feedback(call: ToolCall, ctx: ToolContext) -> ToolResult:
    message = call.arguments["message"]
    with ctx.paths.feedback_file.open("a", encoding="utf-8") as fh:
        fh.write(message.rstrip("\n") + "\n---\n")
    return ToolResult(call.id, ToolStatus.OK,
                      "Request logged. No human is available during the run; "
                      "proceed with your best judgement.")


# ---------------------------------------------------------------------------
# Run drivers
# ---------------------------------------------------------------------------

def extract_code_block(text: str | None) -> str | None:
    """First fenced code block in a response, or None."""
    if not text:
        return None
    match = _CODE_BLOCK.search(text)
    return match.group(1) if match else None


class _RunContext:
    """Shared setup/teardown for both run modes."""

    def __init__(self, task: TaskSpec, config: AgentConfig, run_id: str | None):
        self.task = task
        self.config = config
        self.run_id = run_id or fresh_run_id(task, config.mode, config.model_config)
        self.paths = RunPaths.for_run(config.output_dir, self.run_id)
        self.paths.run_dir.mkdir(parents=True, exist_ok=True)
        self.log_lines: list[str] = []
        self.started_at = _utcnow()

    def log(self, line: str) -> None:
        self.log_lines.append(line)

    def finish(self, *, retrieved, turns, code_iterations, status,
               failure_reason, prompt_hashes) -> RunRecord:
        plot = self.paths.target_plot
        final_plot = plot if plot.exists() and plot.stat().st_size > 0 else None
        record = RunRecord(
            run_id=self.run_id,
            task=self.task,
            mode=self.config.mode,
            model_config=self.config.model_config,
            retrieved=retrieved,
            turns=turns,
            code_iterations=code_iterations,
            final_plot=final_plot,
            status=status,
            failure_reason=failure_reason,
            prompt_hashes=prompt_hashes,
            run_dir=self.paths.run_dir,
            max_iters=self.config.max_iters,
            provider_settings=self.config.provider_settings,
            started_at=self.started_at,
            finished_at=_utcnow(),
        )
        self.log(f"status: {status.value}"
                 + (f" ({failure_reason})" if failure_reason else ""))
        self.paths.log_file.write_text("\n".join(self.log_lines) + "\n",
                                       encoding="utf-8")
        manifest_path = self.paths.run_dir / "manifest.json"
        manifest_path.write_text(
            json.dumps(record.to_manifest(), indent=2, sort_keys=True) + "\n",
            encoding="utf-8")
        return record


def _utcnow() -> str:
    return datetime.now(timezone.utc).isoformat()


def _retrieve_dataset(task: TaskSpec, config: AgentConfig, index: RetrievalIndex,
                      embedder: EmbeddingProvider, ctx: _RunContext):
    """Top-1 retrieval plus the materialized dataset it points at."""
    top1 = query(index, task.prompt, k=1, provider=embedder)[0]
    ctx.log(f"retrieved: {top1.ref} (score {top1.score:.6f})")
    try:
        table, _ = load_stored(config.data_dir, top1.ref)
    except NotFoundError:
        raise NotFoundError(
            f"top-1 table {top1.ref} is not materialized in {config.data_dir}; "
            f"run the fetch step first")
    meta = stored_metadata(config.data_dir, top1.ref)
    return top1, table, meta


def run_zero_shot(task: TaskSpec, config: AgentConfig, index: RetrievalIndex,
                  embedder: EmbeddingProvider, llm, executor: Executor,
                  run_id: str | None = None) -> RunRecord:
    """One model call, one execution, no revision regardless of outcome."""
    ctx = _RunContext(task, config, run_id)
    top1, table, meta = _retrieve_dataset(task, config, index, embedder, ctx)
    bundle = assemble_zero_shot(meta, sample_row(table), task.prompt,
                                config.enabled_modules)

    gateway = LlmGateway(llm, log_path=ctx.paths.run_dir / "llm_log")
    turns: list[TurnRecord] = []
    code_iterations: list[Path] = []
    status, reason = RunStatus.FAILED, None
    try:
        turn = gateway.complete([Message(Role.USER, bundle.system_text)], system="")
    except TransportError as exc:
        return ctx.finish(retrieved=top1, turns=turns, code_iterations=code_iterations,
                          status=RunStatus.FAILED, failure_reason=str(exc),
                          prompt_hashes=bundle.hashes)
    record = TurnRecord(turn)
    turns.append(record)
    ctx.log(f"turn 1: finish={turn.finish_reason.value}")

    if turn.finish_reason is FinishReason.ERROR:
        reason = turn.diagnostics or "provider error"
    else:
        code = extract_code_block(turn.text)
        if code is None:
            reason = "no code block in model response"
        else:
            code_path = ctx.paths.run_dir / "code_iter_1.py-source"
            code_path.write_text(code, encoding="utf-8")
            code_iterations.append(code_path)
            result = executor.execute(ExecutionRequest(
                code=code,
                dataset_csv=config.data_dir / f"{top1.ref}.csv",
                target_plot=ctx.paths.target_plot,
                allowed_write_dir=ctx.paths.run_dir,
                timeout_s=config.timeout_s,
            ))
            record.results.append(ToolResult("exec_1",
                                             ToolStatus.OK if result.exit_status is ExitStatus.OK
                                             else ToolStatus.ERROR,
                                             {
                                                 "exit_status": result.exit_status.value,
                                                 "stdout": result.stdout,
                                                 "stderr": result.stderr,
                                                 "plot_written": result.plot_written,
                                                 "duration_s": result.duration_s,
                                                 "code_file": code_path.name,
                                             }))
            ctx.log(f"executed code_iter_1: {result.exit_status.value}")
            if result.exit_status is ExitStatus.OK and result.plot_written:
                status = RunStatus.COMPLETED
            else:
                reason = f"execution {result.exit_status.value}"
    return ctx.finish(retrieved=top1, turns=turns, code_iterations=code_iterations,
                      status=status, failure_reason=reason,
                      prompt_hashes=bundle.hashes)


def run_agentic(task: TaskSpec, config: AgentConfig, index: RetrievalIndex,
                embedder: EmbeddingProvider, llm, executor: Executor,
                run_id: str | None = None) -> RunRecord:
    """The iterative loop: converse, dispatch tools, stop on a valid plot.

    Terminates when the model issues a stop turn while the target plot
    exists; a stop without a plot fails the run; running out of iterations
    ends with status exhausted_iters. Tool denials are returned to the model
    as observations and never abort the loop.
    """
    ctx = _RunContext(task, config, run_id)
    top1, table, meta = _retrieve_dataset(task, config, index, embedder, ctx)
    dataset_context = build_dataset_context(meta, f"{top1.ref}.csv")
    bundle = assemble_agentic(ctx.paths, dataset_context, config.enabled_modules)

    gateway = LlmGateway(llm, log_path=ctx.paths.run_dir / "llm_log")
    tools = tool_specs()
    guard = PathGuard(config.data_dir, ctx.paths.run_dir)
    code_iterations: list[Path] = []
    tool_ctx = ToolContext(
        guard=guard, paths=ctx.paths,
        dataset_csv=(config.data_dir / f"{top1.ref}.csv").resolve(),
        executor=executor, timeout_s=config.timeout_s,
        code_iterations=code_iterations, multimodal=config.multimodal,
    )

    history: list[Message] = [Message(Role.USER, task.prompt)]
    turns: list[TurnRecord] = []
    status: RunStatus | None = None
    reason: str | None = None

    for iteration in range(1, config.max_iters + 1):
        try:
            turn = gateway.complete(history, system=bundle.system_text, tools=tools)
        except TransportError as exc:
            status, reason = RunStatus.FAILED, str(exc)
            break
        record = TurnRecord(turn)
        turns.append(record)

        if turn.finish_reason is FinishReason.ERROR:
            status = RunStatus.FAILED
            reason = turn.diagnostics or "provider error"
            ctx.log(f"turn {iteration}: provider error ({reason})")
            break

        if turn.tool_calls:
            names = ", ".join(c.name for c in turn.tool_calls)
            ctx.log(f"turn {iteration}: tool_use [{names}]")
            history.append(Message(Role.ASSISTANT, turn.text or "",
                                   tool_calls=tuple(turn.tool_calls)))
            for call in turn.tool_calls:
                result = dispatch_tool(call, tool_ctx)
                record.results.append(result)
                ctx.log(f"  {call.name} -> {result.status.value}")
                history.append(Message(Role.TOOL_RESULT, result.payload_text(),
                                       tool_call_id=call.id))
            continue

        # Stop turn: valid only once a plot exists.
        plot = ctx.paths.target_plot
        if plot.exists() and plot.stat().st_size > 0:
            status = RunStatus.COMPLETED
            ctx.log(f"turn {iteration}: stop with plot present")
        else:
            status = RunStatus.FAILED
            reason = "model stopped before producing a plot"
            ctx.log(f"turn {iteration}: stop without plot")
        break

    if status is None:
        status = RunStatus.EXHAUSTED_ITERS
        reason = f"no stop turn within max_iters={config.max_iters}"
        ctx.log(f"loop exhausted after {config.max_iters} turns")

    return ctx.finish(retrieved=top1, turns=turns, code_iterations=code_iterations,
                      status=status, failure_reason=reason,
                      prompt_hashes=bundle.hashes)


def load_manifest(run_dir: Path | str) -> dict:
    return json.loads((Path(run_dir) / "manifest.json").read_text(encoding="utf-8"))


def run_is_completed(run_dir: Path | str) -> bool:
    """True when a prior run in this directory finished with status completed."""
    try:
        manifest = load_manifest(run_dir)
    except (FileNotFoundError, ValueError):
        return False
    return manifest.get("status") == RunStatus.COMPLETED.value
