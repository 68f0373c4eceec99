"""Provider-agnostic chat interface.

A gateway handle serves one run: it sends the system prompt, conversation
history, and tool specifications to a provider, normalizes the reply into a
ModelTurn, validates any tool-call arguments against the offered schemas
(invalid calls become an error turn and never reach the agent), retries
transport failures with capped exponential backoff, and logs every raw
exchange as line-delimited JSON so a run can be replayed through the
scripted mock.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Mapping, Protocol, Sequence

import requests

from .errors import TransportError


class Role(Enum):
    SYSTEM = "system"
    USER = "user"
    ASSISTANT = "assistant"
    TOOL_RESULT = "tool_result"


class FinishReason(Enum):
    STOP = "stop"
    TOOL_USE = "tool_use"
    LENGTH = "length"
    ERROR = "error"


@dataclass(frozen=True)
class ToolCall:
    id: str
    name: str
    arguments: dict


@dataclass(frozen=True)
class Message:
    role: Role
    content: str
    tool_call_id: str | None = None
    tool_calls: tuple[ToolCall, ...] = ()

    def __post_init__(self) -> None:
        if self.role is Role.TOOL_RESULT and not self.tool_call_id:
            raise ValueError("tool_result messages must carry a tool_call_id")


@dataclass(frozen=True)
class ParamSpec:
    type: str  # string | integer | number | boolean
    description: str = ""
    required: bool = True
    default: object = None


@dataclass(frozen=True)
class ToolSpec:
    name: str
    description: str
    parameters: dict[str, ParamSpec] = field(default_factory=dict)


@dataclass
class ModelTurn:
    text: str | None = None
    tool_calls: list[ToolCall] = field(default_factory=list)
    reasoning_trace: str | None = None
    finish_reason: FinishReason = FinishReason.STOP
    usage: dict | None = None
    latency_s: float | None = None
    diagnostics: str | None = None
    raw: object = None

    def __post_init__(self) -> None:
        if self.finish_reason is FinishReason.TOOL_USE and not self.tool_calls:
            raise ValueError("tool_use finish requires at least one tool call")
        if self.finish_reason is FinishReason.STOP and self.tool_calls:
            raise ValueError("stop finish must carry no tool calls")


def turn_to_json(turn: ModelTurn) -> dict:
    return {
        "text": turn.text,
        "tool_calls": [
            {"id": c.id, "name": c.name, "arguments": c.arguments}
            for c in turn.tool_calls
        ],
        "reasoning_trace": turn.reasoning_trace,
        "finish_reason": turn.finish_reason.value,
        "usage": turn.usage,
        "diagnostics": turn.diagnostics,
    }


def turn_from_json(payload: Mapping) -> ModelTurn:
    return ModelTurn(
        text=payload.get("text"),
        tool_calls=[
            ToolCall(id=c["id"], name=c["name"], arguments=dict(c["arguments"]))
            for c in payload.get("tool_calls", [])
        ],
        reasoning_trace=payload.get("reasoning_trace"),
        finish_reason=FinishReason(payload.get("finish_reason", "stop")),
        usage=payload.get("usage"),
        diagnostics=payload.get("diagnostics"),
    )


_TYPE_CHECKS = {
    "string": lambda v: isinstance(v, str),
    "integer": lambda v: isinstance(v, int) and not isinstance(v, bool),
    "number": lambda v: isinstance(v, (int, float)) and not isinstance(v, bool),
    "boolean": lambda v: isinstance(v, bool),
}


def validate_tool_call(call: ToolCall, tools: Sequence[ToolSpec]) -> str | None:
    """Return a diagnostic string if the call violates its spec, else None."""
    spec = next((t for t in tools if t.name == call.name), None)
    if spec is None:
        return f"unknown tool {call.name!r}"
    for name, param in spec.parameters.items():
        if param.required and name not in call.arguments:
            return f"tool {call.name!r}: missing required argument {name!r}"
    for name, value in call.arguments.items():
        if name not in spec.parameters:
            return f"tool {call.name!r}: unexpected argument {name!r}"
        check = _TYPE_CHECKS[spec.parameters[name].type]
        if not check(value):
            return (f"tool {call.name!r}: argument {name!r} should be "
                    f"{spec.parameters[name].type}, got {type(value).__name__}")
    return None


class ChatProvider(Protocol):
    def complete(self, history: Sequence[Message], system: str,
                 tools: Sequence[ToolSpec]) -> ModelTurn: ...


# ---------------------------------------------------------------------------
# Scripted provider (offline mock)
# ---------------------------------------------------------------------------

class ScriptedProvider:
    """Replays a fixed program of turns; exhausting it yields an error turn."""

    def __init__(self, program: Sequence[ModelTurn]):
        if not program:
            raise ValueError("scripted program must be non-empty")
        self._program = list(program)
        self._cursor = 0
        self.calls = 0

    def complete(self, history: Sequence[Message], system: str,
                 tools: Sequence[ToolSpec]) -> ModelTurn:
        self.calls += 1
        if self._cursor >= len(self._program):
            return ModelTurn(finish_reason=FinishReason.ERROR,
                             diagnostics="scripted program exhausted")
        turn = self._program[self._cursor]
        self._cursor += 1
        return turn

    @classmethod
    def from_file(cls, path: Path | str) -> "ScriptedProvider":
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls([turn_from_json(t) for t in payload["turns"]])


def scripted_from_log(log_path: Path | str) -> ScriptedProvider:
    """Rebuild a scripted provider from a run's llm_log (response records)."""
    turns = []
    for line in Path(log_path).read_text(encoding="utf-8").splitlines():
        record = json.loads(line)
        if record.get("kind") == "response":
            turns.append(turn_from_json(record["turn"]))
    return ScriptedProvider(turns)


# ---------------------------------------------------------------------------
# Remote adapters
# ---------------------------------------------------------------------------

def _messages_for_chat_api(history: Sequence[Message], system: str) -> list[dict]:
    messages: list[dict] = []
    if system:
        messages.append({"role": "system", "content": system})
    for msg in history:
        if msg.role is Role.TOOL_RESULT:
            messages.append({"role": "tool", "content": msg.content,
                             "tool_call_id": msg.tool_call_id})
        elif msg.role is Role.ASSISTANT and msg.tool_calls:
            messages.append({
                "role": "assistant",
                "content": msg.content or None,
                "tool_calls": [
                    {"id": c.id, "type": "function",
                     "function": {"name": c.name, "arguments": json.dumps(c.arguments)}}
                    for c in msg.tool_calls
                ],
            })
        else:
            messages.append({"role": msg.role.value, "content": msg.content})
    return messages


def _tools_for_chat_api(tools: Sequence[ToolSpec]) -> list[dict]:
    out = []
    for tool in tools:
        properties = {
            name: {"type": p.type, "description": p.description}
            for name, p in tool.parameters.items()
        }
        required = [n for n, p in tool.parameters.items() if p.required]
        out.append({
            "type": "function",
            "function": {
                "name": tool.name,
                "description": tool.description,
                "parameters": {"type": "object", "properties": properties,
                               "required": required},
            },
        })
    return out


class ChatCompletionsProvider:
    """Adapter for chat-completions style APIs (OpenAI-compatible wire format)."""

    def __init__(self, endpoint: str, model: str, api_key_env: str | None = None,
                 temperature: float | None = None, timeout_s: float = 120.0,
                 session: requests.Session | None = None):
        import os
        self.endpoint = endpoint
        self.model = model
        self.temperature = temperature
        self._timeout_s = timeout_s
        self._session = session or requests.Session()
        self._headers = {"Content-Type": "application/json"}
        if api_key_env and os.environ.get(api_key_env):
            self._headers["Authorization"] = f"Bearer {os.environ[api_key_env]}"

    def complete(self, history: Sequence[Message], system: str,
                 tools: Sequence[ToolSpec]) -> ModelTurn:
        payload: dict = {"model": self.model,
                         "messages": _messages_for_chat_api(history, system)}
        if tools:
            payload["tools"] = _tools_for_chat_api(tools)
        if self.temperature is not None:
            payload["temperature"] = self.temperature
        try:
            response = self._session.post(self.endpoint, json=payload,
                                          headers=self._headers,
                                          timeout=self._timeout_s)
        except requests.RequestException as exc:
            raise TransportError(f"chat endpoint unreachable: {exc}") from exc
        if response.status_code >= 500 or response.status_code == 429:
            raise TransportError(f"chat endpoint returned HTTP {response.status_code}")
        if response.status_code != 200:
            return ModelTurn(finish_reason=FinishReason.ERROR,
                             diagnostics=f"HTTP {response.status_code}",
                             raw=response.text[:500])
        return self.parse_response(response.json())

    @staticmethod
    def parse_response(payload: Mapping) -> ModelTurn:
        try:
            choice = payload["choices"][0]
            message = choice["message"]
        except (KeyError, IndexError):
            return ModelTurn(finish_reason=FinishReason.ERROR,
                             diagnostics="response missing choices[0].message",
                             raw=payload)
        calls = []
        for raw_call in message.get("tool_calls") or []:
            args_text = raw_call.get("function", {}).get("arguments", "")
            try:
                arguments = json.loads(args_text) if args_text else {}
            except ValueError:
                return ModelTurn(finish_reason=FinishReason.ERROR,
                                 diagnostics="tool call arguments are not valid JSON",
                                 raw=raw_call)
            calls.append(ToolCall(id=raw_call.get("id", f"call_{len(calls)}"),
                                  name=raw_call.get("function", {}).get("name", ""),
                                  arguments=arguments))
        reason_map = {"stop": FinishReason.STOP, "tool_calls": FinishReason.TOOL_USE,
                      "length": FinishReason.LENGTH}
        finish = reason_map.get(choice.get("finish_reason"),
                                FinishReason.TOOL_USE if calls else FinishReason.STOP)
        if finish is FinishReason.STOP and calls:
            finish = FinishReason.TOOL_USE
        return ModelTurn(text=message.get("content"), tool_calls=calls,
                         reasoning_trace=message.get("reasoning_content"),
                         finish_reason=finish, usage=payload.get("usage"),
                         raw=payload)


class ToolUseProvider:
    """Adapter for tool-use style APIs (content-block wire format)."""

    def __init__(self, endpoint: str, model: str, api_key_env: str | None = None,
                 max_tokens: int = 4096, timeout_s: float = 120.0,
                 session: requests.Session | None = None):
        import os
        self.endpoint = endpoint
        self.model = model
        self.max_tokens = max_tokens
        self._timeout_s = timeout_s
        self._session = session or requests.Session()
        self._headers = {"Content-Type": "application/json"}
        if api_key_env and os.environ.get(api_key_env):
            self._headers["x-api-key"] = os.environ[api_key_env]

    def complete(self, history: Sequence[Message], system: str,
                 tools: Sequence[ToolSpec]) -> ModelTurn:
        messages = []
        for msg in history:
            if msg.role is Role.TOOL_RESULT:
                messages.append({"role": "user", "content": [
                    {"type": "tool_result", "tool_use_id": msg.tool_call_id,
                     "content": msg.content}]})
            elif msg.role is Role.ASSISTANT and msg.tool_calls:
                blocks: list[dict] = []
                if msg.content:
                    blocks.append({"type": "text", "text": msg.content})
                blocks.extend({"type": "tool_use", "id": c.id, "name": c.name,
                               "input": c.arguments} for c in msg.tool_calls)
                messages.append({"role": "assistant", "content": blocks})
            else:
                messages.append({"role": msg.role.value, "content": msg.content})
        payload: dict = {"model": self.model, "max_tokens": self.max_tokens,
                         "messages": messages}
        if system:
            payload["system"] = system
        if tools:
            payload["tools"] = [
                {"name": t.name, "description": t.description,
                 "input_schema": {
                     "type": "object",
                     "properties": {
                         n: {"type": p.type, "description": p.description}
                         for n, p in t.parameters.items()},
                     "required": [n for n, p in t.parameters.items() if p.required]}}
                for t in tools
            ]
        try:
            response = self._session.post(self.endpoint, json=payload,
                                          headers=self._headers,
                                          timeout=self._timeout_s)
        except requests.RequestException as exc:
            raise TransportError(f"chat endpoint unreachable: {exc}") from exc
        if response.status_code >= 500 or response.status_code == 429:
            raise TransportError(f"chat endpoint returned HTTP {response.status_code}")
        if response.status_code != 200:
            return ModelTurn(finish_reason=FinishReason.ERROR,
                             diagnostics=f"HTTP {response.status_code}",
                             raw=response.text[:500])
        return self.parse_response(response.json())

    @staticmethod
    def parse_response(payload: Mapping) -> ModelTurn:
        text_parts, calls, reasoning = [], [], []
        for block in payload.get("content", []):
            if block.get("type") == "text":
                text_parts.append(block.get("text", ""))
            elif block.get("type") == "thinking":
                reasoning.append(block.get("thinking", ""))
            elif block.get("type") == "tool_use":
                arguments = block.get("input", {})
                if not isinstance(arguments, dict):
                    return ModelTurn(finish_reason=FinishReason.ERROR,
                                     diagnostics="tool_use input is not an object",
                                     raw=block)
                calls.append(ToolCall(id=block.get("id", f"call_{len(calls)}"),
                                      name=block.get("name", ""),
                                      arguments=arguments))
        reason_map = {"end_turn": FinishReason.STOP, "tool_use": FinishReason.TOOL_USE,
                      "max_tokens": FinishReason.LENGTH}
        finish = reason_map.get(payload.get("stop_reason"),
                                FinishReason.TOOL_USE if calls else FinishReason.STOP)
        if finish is FinishReason.STOP and calls:
            finish = FinishReason.TOOL_USE
        return ModelTurn(text="\n".join(t for t in text_parts if t) or None,
                         tool_calls=calls,
                         reasoning_trace="\n".join(reasoning) or None,
                         finish_reason=finish, usage=payload.get("usage"),
                         raw=payload)


def provider_from_config(config: Mapping[str, object]) -> ChatProvider:
    kind = config.get("kind")
    if kind == "scripted":
        return ScriptedProvider.from_file(str(config["program_file"]))
    if kind == "chat_completions":
        return ChatCompletionsProvider(
            endpoint=str(config["endpoint"]), model=str(config["model"]),
            api_key_env=config.get("api_key_env"),
            temperature=config.get("temperature"))
    if kind == "tool_use":
        return ToolUseProvider(
            endpoint=str(config["endpoint"]), model=str(config["model"]),
            api_key_env=config.get("api_key_env"))
    raise ValueError(f"unknown provider kind {kind!r}")


# ---------------------------------------------------------------------------
# Gateway
# ---------------------------------------------------------------------------

class LlmGateway:
    """One gateway per run: sequential completes, raw exchanges logged."""

    MAX_ATTEMPTS = 3

    def __init__(self, provider: ChatProvider, log_path: Path | str | None = None,
                 backoff_s: float = 0.5, sleep=time.sleep):
        self.provider = provider
        self.log_path = Path(log_path) if log_path is not None else None
        self._backoff_s = backoff_s
        self._sleep = sleep

    def complete(self, history: Sequence[Message], system: str,
                 tools: Sequence[ToolSpec] = ()) -> ModelTurn:
        self._log({
            "kind": "request",
            "system_sha256": hashlib.sha256(system.encode("utf-8")).hexdigest(),
            "messages": [
                {"role": m.role.value, "content": m.content,
                 "tool_call_id": m.tool_call_id}
                for m in history
            ],
            "tools": [t.name for t in tools],
        })
        started = time.monotonic()
        last_error: TransportError | None = None
        turn: ModelTurn | None = None
        for attempt in range(self.MAX_ATTEMPTS):
            try:
                turn = self.provider.complete(history, system, tools)
                break
            except TransportError as exc:
                last_error = exc
                if attempt < self.MAX_ATTEMPTS - 1:
                    self._sleep(min(self._backoff_s * 2 ** attempt, 4.0))
        if turn is None:
            self._log({"kind": "transport_failure", "error": str(last_error)})
            raise TransportError(
                f"provider failed after {self.MAX_ATTEMPTS} attempts: {last_error}")
        turn.latency_s = time.monotonic() - started

        if turn.tool_calls:
            for call in turn.tool_calls:
                problem = validate_tool_call(call, tools)
                if problem:
                    turn = ModelTurn(finish_reason=FinishReason.ERROR,
                                     diagnostics=problem,
                                     raw=turn_to_json(turn))
                    break
        self._log({"kind": "response", "turn": turn_to_json(turn)})
        return turn

    def _log(self, record: dict) -> None:
        if self.log_path is None:
            return
        self.log_path.parent.mkdir(parents=True, exist_ok=True)
        with self.log_path.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(record, sort_keys=True) + "\n")
