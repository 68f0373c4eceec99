"""Client side of the code-execution harness.

Model-generated analysis code runs out of process: each request is handed to
a single-shot harness subprocess that loads the dataset CSV into ``df``,
executes the code with a non-interactive plotting backend, captures
stdout/stderr, and saves the figure to the target path. The request/response
JSON schema lives in ``harness/protocol.md``.

The primary package only talks the protocol. ``select_executor`` performs a
handshake; when no harness answers it either refuses (the production
default) or falls back to the stub executor, which fakes execution
deterministically so the rest of the pipeline can be tested without the
harness installed.
"""

from __future__ import annotations

import json
import os
import shlex
import struct
import subprocess
import tempfile
import zlib
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Protocol, Sequence

from .errors import HarnessUnavailableError

HARNESS_CMD_ENV = "STATVIZ_HARNESS_CMD"


class ExitStatus(Enum):
    OK = "ok"
    RUNTIME_ERROR = "runtime_error"
    TIMEOUT = "timeout"
    SETUP_ERROR = "setup_error"


@dataclass(frozen=True)
class ExecutionRequest:
    code: str
    dataset_csv: Path
    target_plot: Path
    allowed_write_dir: Path
    timeout_s: float = 60.0

    def __post_init__(self) -> None:
        if not self.code.strip():
            raise ValueError("execution request must carry non-empty code")
        if self.timeout_s <= 0:
            raise ValueError("timeout_s must be positive")

    def to_json(self) -> dict:
        return {
            "code": self.code,
            "dataset_csv": str(self.dataset_csv),
            "target_plot": str(self.target_plot),
            "allowed_write_dir": str(self.allowed_write_dir),
            "timeout_s": self.timeout_s,
        }


@dataclass(frozen=True)
class ExecutionResult:
    exit_status: ExitStatus
    stdout: str
    stderr: str
    plot_written: bool
    duration_s: float


@dataclass(frozen=True)
class CapabilityReport:
    ok: bool
    harness_version: str = ""
    capabilities: dict[str, bool] = field(default_factory=dict)
    detail: str = ""
    stub: bool = False


class Executor(Protocol):
    def handshake(self) -> CapabilityReport: ...
    def execute(self, request: ExecutionRequest) -> ExecutionResult: ...


# ---------------------------------------------------------------------------
# Harness subprocess client
# ---------------------------------------------------------------------------

class HarnessExecutor:
    """Talks to the external harness over its single-shot CLI protocol."""

    def __init__(self, command: Sequence[str]):
        if not command:
            raise ValueError("harness command must be non-empty")
        self.command = list(command)

    def handshake(self) -> CapabilityReport:
        try:
            proc = subprocess.run(
                [*self.command, "handshake"],
                capture_output=True, text=True, timeout=30)
        except (OSError, subprocess.TimeoutExpired) as exc:
            return CapabilityReport(ok=False, detail=f"harness did not answer: {exc}")
        if proc.returncode != 0:
            return CapabilityReport(
                ok=False, detail=f"handshake exited {proc.returncode}: "
                                 f"{proc.stderr.strip()[:200]}")
        try:
            payload = json.loads(proc.stdout)
        except ValueError:
            return CapabilityReport(ok=False,
                                    detail=f"handshake output was not JSON: "
                                           f"{proc.stdout[:200]!r}")
        capabilities = {k: bool(v) for k, v in payload.get("capabilities", {}).items()}
        missing = sorted(k for k, v in capabilities.items() if not v)
        ok = bool(payload.get("ok", not missing))
        detail = payload.get("detail", "")
        if missing and not detail:
            detail = f"missing: {', '.join(missing)}"
        return CapabilityReport(ok=ok, harness_version=str(payload.get("version", "")),
                                capabilities=capabilities, detail=detail)

    def execute(self, request: ExecutionRequest) -> ExecutionResult:
        with tempfile.NamedTemporaryFile(
                mode="w", suffix=".json", delete=False, encoding="utf-8") as fh:
            json.dump(request.to_json(), fh)
            request_path = fh.name
        try:
            proc = subprocess.run(
                [*self.command, "exec", request_path],
                capture_output=True, text=True,
                timeout=request.timeout_s + 30)
        except subprocess.TimeoutExpired:
            return ExecutionResult(ExitStatus.TIMEOUT, "", "harness did not return",
                                   plot_written=False, duration_s=request.timeout_s)
        except OSError as exc:
            return ExecutionResult(ExitStatus.SETUP_ERROR, "",
                                   f"harness could not be started: {exc}",
                                   plot_written=False, duration_s=0.0)
        finally:
            os.unlink(request_path)
        if proc.returncode != 0:
            return ExecutionResult(ExitStatus.SETUP_ERROR, proc.stdout,
                                   f"harness exited {proc.returncode}: {proc.stderr}",
                                   plot_written=False, duration_s=0.0)
        try:
            payload = json.loads(proc.stdout)
        except ValueError:
            return ExecutionResult(ExitStatus.SETUP_ERROR, proc.stdout,
                                   "harness response was not JSON",
                                   plot_written=False, duration_s=0.0)
        return ExecutionResult(
            exit_status=ExitStatus(payload["exit_status"]),
            stdout=payload.get("stdout", ""),
            stderr=payload.get("stderr", ""),
            plot_written=bool(payload.get("plot_written", False)),
            duration_s=float(payload.get("duration_s", 0.0)),
        )


def default_harness_command() -> list[str] | None:
    """Resolve the harness command from the environment or the repo layout."""
    env_cmd = os.environ.get(HARNESS_CMD_ENV)
    if env_cmd:
        return shlex.split(env_cmd)
    probe = Path.cwd()
    for candidate in (probe, *probe.parents):
        built = candidate / "harness" / "dist" / "main.js"
        if built.exists():
            return ["node", str(built)]
    return None


# ---------------------------------------------------------------------------
# Stub executor
# ---------------------------------------------------------------------------

# Smallest well-formed PNG we can write: 1x1 grey pixel.
def _placeholder_png() -> bytes:
    def chunk(tag: bytes, data: bytes) -> bytes:
        return (struct.pack(">I", len(data)) + tag + data
                + struct.pack(">I", zlib.crc32(tag + data) & 0xFFFFFFFF))

    ihdr = struct.pack(">IIBBBBB", 1, 1, 8, 0, 0, 0, 0)
    idat = zlib.compress(b"\x00\x80")
    return (b"\x89PNG\r\n\x1a\n" + chunk(b"IHDR", ihdr)
            + chunk(b"IDAT", idat) + chunk(b"IEND", b""))


PLACEHOLDER_PNG = _placeholder_png()


@dataclass(frozen=True)
class StubOutcome:
    """One scripted result for the stub executor."""

    exit_status: ExitStatus = ExitStatus.OK
    stdout: str = ""
    stderr: str = ""
    write_plot: bool | None = None  # None: write exactly when status is ok


class StubExecutor:
    """Deterministic fake executor used when the harness is not installed.

    Without a script it reports success and materializes a placeholder PNG at
    the target path; scripted outcomes drive error-path tests. Call order and
    requests are recorded so tests can assert execution counts.
    """

    def __init__(self, outcomes: Sequence[StubOutcome] | None = None):
        self._outcomes = list(outcomes) if outcomes else None
        self._cursor = 0
        self.requests: list[ExecutionRequest] = []

    @property
    def calls(self) -> int:
        return len(self.requests)

    def handshake(self) -> CapabilityReport:
        return CapabilityReport(
            ok=True, harness_version="stub",
            capabilities={"pandas": True, "matplotlib": True,
                          "seaborn": True, "numpy": True},
            detail="stub executor: results are simulated", stub=True)

    def execute(self, request: ExecutionRequest) -> ExecutionResult:
        self.requests.append(request)
        if self._outcomes is None:
            outcome = StubOutcome()
        elif self._cursor < len(self._outcomes):
            outcome = self._outcomes[self._cursor]
            self._cursor += 1
        else:
            outcome = StubOutcome()
        write_plot = outcome.write_plot
        if write_plot is None:
            write_plot = outcome.exit_status is ExitStatus.OK
        if write_plot:
            request.target_plot.parent.mkdir(parents=True, exist_ok=True)
            request.target_plot.write_bytes(PLACEHOLDER_PNG)
        plot_written = (request.target_plot.exists()
                        and request.target_plot.stat().st_size > 0)
        return ExecutionResult(
            exit_status=outcome.exit_status,
            stdout=outcome.stdout,
            stderr=outcome.stderr,
            plot_written=plot_written,
            duration_s=0.0,
        )


def select_executor(command: Sequence[str] | None = None, *,
                    allow_stub: bool = False) -> Executor:
    """Handshake with the harness; fall back to the stub only when allowed.

    Agentic code execution against a missing harness is refused by default:
    simulated results must be opted into.
    """
    cmd = list(command) if command else default_harness_command()
    if cmd:
        executor = HarnessExecutor(cmd)
        report = executor.handshake()
        if report.ok:
            return executor
        detail = report.detail
    else:
        detail = "no harness command configured and none found in the repo"
    if allow_stub:
        return StubExecutor()
    raise HarnessUnavailableError(f"execution harness unavailable: {detail}")


# ---------------------------------------------------------------------------
# PNG helpers
# ---------------------------------------------------------------------------

def png_dimensions(path: Path | str) -> tuple[int, int]:
    """(width, height) from the PNG header; raises ValueError for non-PNGs."""
    with open(path, "rb") as fh:
        header = fh.read(24)
    if len(header) < 24 or header[:8] != b"\x89PNG\r\n\x1a\n":
        raise ValueError(f"{path} is not a PNG file")
    width, height = struct.unpack(">II", header[16:24])
    return width, height
