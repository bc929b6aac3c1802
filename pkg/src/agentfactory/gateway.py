"""Pluggable LLM backend with per-origin token accounting.

Every completion flows through LLMGateway.complete, which stamps the
exchange with its origin (orchestrator or a named subagent), a per-task
sequence number, and token usage, then appends it to the task's
history.jsonl. The orchestration token total for a task is the sum of
output tokens over orchestrator-origin exchanges only.

Two backends ship: a generic HTTP chat backend (messages in, completion +
usage out) and a deterministic replay backend that serves pre-authored
completions for tests and fixtures.
"""

from __future__ import annotations

import difflib
import hashlib
import json
import re
import threading
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, List, Optional

import httpx

from .errors import BackendUnavailable, ReplayExhausted, ReplayMismatch, UnknownTask

PROMPT_HEAD_CHARS = 500


@dataclass(frozen=True)
class CallOrigin:
    """Who issued an LLM call: the orchestrator, or a subagent by name."""

    subagent: Optional[str] = None

    @property
    def is_orchestrator(self) -> bool:
        return self.subagent is None

    def to_json(self):
        return "orchestrator" if self.subagent is None else {"subagent": self.subagent}


ORCHESTRATOR = CallOrigin()


@dataclass
class LLMRequest:
    messages: List[dict]
    model: str
    max_output_tokens: int = 2048

    def validate(self) -> None:
        if not self.messages:
            raise ValueError("messages must be non-empty")
        for m in self.messages:
            if m.get("role") not in ("system", "user", "assistant", "tool"):
                raise ValueError(f"bad message role: {m.get('role')!r}")
        if self.messages[0]["role"] not in ("system", "user"):
            raise ValueError("first message role must be system or user")
        if self.max_output_tokens < 1:
            raise ValueError("max_output_tokens must be positive")

    def rendered_prompt(self) -> str:
        return "\n".join(f"{m['role']}: {m['content']}" for m in self.messages)


@dataclass
class LLMExchange:
    request: LLMRequest
    completion: str
    input_tokens: int
    output_tokens: int
    origin: CallOrigin
    task_id: str
    sequence: int
    approximate: bool = False
    timestamp: str = ""


@dataclass
class BackendReply:
    completion: str
    input_tokens: int
    output_tokens: int
    approximate: bool = False


def _approximate_tokens(text: str) -> int:
    return len(text.split())


class HttpChatBackend:
    """Thin client for a generic chat-completions endpoint.

    Accepts either {"completion": str, "usage": {...}} or the common
    {"choices": [{"message": {"content": str}}], "usage": {...}} response
    shape; tolerates missing usage by falling back to a whitespace-token
    approximation (flagged approximate).
    """

    def __init__(self, url: str, api_key: str = "", timeout: float = 60.0, transport=None):
        if not url:
            raise BackendUnavailable("http backend requires a backend url (AF_BACKEND_URL)")
        self.url = url
        self.api_key = api_key
        self._client = httpx.Client(timeout=timeout, transport=transport)

    def complete(self, request: LLMRequest) -> BackendReply:
        headers = {"content-type": "application/json"}
        if self.api_key:
            headers["authorization"] = f"Bearer {self.api_key}"
        body = {
            "model": request.model,
            "messages": request.messages,
            "max_tokens": request.max_output_tokens,
        }
        try:
            response = self._client.post(self.url, json=body, headers=headers)
        except httpx.HTTPError as exc:
            raise BackendUnavailable(f"backend request failed: {exc}")
        if response.status_code >= 400:
            raise BackendUnavailable(f"backend returned status {response.status_code}")
        try:
            payload = response.json()
        except json.JSONDecodeError:
            raise BackendUnavailable("backend returned a non-JSON body")

        completion = payload.get("completion")
        if completion is None:
            choices = payload.get("choices") or []
            if choices:
                completion = (choices[0].get("message") or {}).get("content")
        if not isinstance(completion, str):
            raise BackendUnavailable("backend response carries no completion text")

        usage = payload.get("usage") or {}
        output = usage.get("output_tokens", usage.get("completion_tokens"))
        inp = usage.get("input_tokens", usage.get("prompt_tokens"))
        approximate = output is None
        if output is None:
            output = _approximate_tokens(completion)
        if inp is None:
            inp = 0
        return BackendReply(completion=completion, input_tokens=int(inp), output_tokens=int(output), approximate=approximate)


@dataclass
class ReplayEntry:
    matcher: str
    completion: str
    output_tokens: int
    input_tokens: int = 0
    regex: bool = False

    def matches(self, prompt: str) -> bool:
        if self.regex:
            return re.search(self.matcher, prompt) is not None
        return self.matcher in prompt


def load_replay_script(path: Path) -> List[ReplayEntry]:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    entries = data["entries"] if isinstance(data, dict) else data
    script = []
    for i, e in enumerate(entries):
        try:
            script.append(
                ReplayEntry(
                    matcher=e["expected_prompt_matcher"],
                    completion=e["completion"],
                    output_tokens=int(e["output_tokens"]),
                    input_tokens=int(e.get("input_tokens", 0)),
                    regex=bool(e.get("regex", False)),
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ReplayMismatch(f"replay script entry {i} malformed: {exc}")
    return script


class ReplayBackend:
    """Serves scripted completions strictly in order.

    Each entry's matcher (substring, or regex when flagged) must match the
    rendered prompt of the incoming request; a mismatch raises with a
    unified diff of matcher vs prompt head. Bound to one task execution.
    """

    def __init__(self, script: List[ReplayEntry]):
        self.script = list(script)
        self._cursor = 0

    @classmethod
    def from_file(cls, path: Path) -> "ReplayBackend":
        return cls(load_replay_script(path))

    @property
    def remaining(self) -> int:
        return len(self.script) - self._cursor

    def complete(self, request: LLMRequest) -> BackendReply:
        if self._cursor >= len(self.script):
            raise ReplayExhausted(f"replay script exhausted after {len(self.script)} entries")
        entry = self.script[self._cursor]
        prompt = request.rendered_prompt()
        if not entry.matches(prompt):
            head = prompt[:PROMPT_HEAD_CHARS]
            diff = "\n".join(
                difflib.unified_diff(
                    entry.matcher.splitlines(),
                    head.splitlines(),
                    fromfile="expected_matcher",
                    tofile="prompt_head",
                    lineterm="",
                )
            )
            raise ReplayMismatch(
                f"replay entry {self._cursor} did not match the incoming prompt", diff=diff
            )
        self._cursor += 1
        return BackendReply(
            completion=entry.completion,
            input_tokens=entry.input_tokens,
            output_tokens=entry.output_tokens,
            approximate=False,
        )


class TaskLog:
    """Append-only per-task record stream: history.jsonl plus completion files."""

    def __init__(self, task_id: str, history_path: Path, exchanges_dir: Path):
        self.task_id = task_id
        self.history_path = Path(history_path)
        self.exchanges_dir = Path(exchanges_dir)
        self._lock = threading.Lock()
        self._seq = 0

    def next_seq(self) -> int:
        with self._lock:
            self._seq += 1
            return self._seq

    def _append(self, record: dict) -> None:
        line = json.dumps(record, separators=(",", ":"), ensure_ascii=False)
        with self._lock:
            self.history_path.parent.mkdir(parents=True, exist_ok=True)
            with self.history_path.open("a", encoding="utf-8") as fh:
                fh.write(line + "\n")

    def record_exchange(self, exchange: LLMExchange) -> None:
        record = {
            "seq": exchange.sequence,
            "origin": exchange.origin.to_json(),
            "task_id": exchange.task_id,
            "model": exchange.request.model,
            "output_tokens": exchange.output_tokens,
            "input_tokens": exchange.input_tokens,
            "approximate": exchange.approximate,
            "completion_sha256": hashlib.sha256(exchange.completion.encode("utf-8")).hexdigest(),
            "timestamp": exchange.timestamp,
        }
        self._append(record)
        self.exchanges_dir.mkdir(parents=True, exist_ok=True)
        (self.exchanges_dir / f"{exchange.sequence}.txt").write_text(exchange.completion, encoding="utf-8")

    def record_meta_step(self, step: int, action: str, args: dict, observation: str, exchange_seq: int) -> None:
        record = {
            "type": "meta_step",
            "step": step,
            "action": action,
            "args": args,
            "observation_sha256": hashlib.sha256(observation.encode("utf-8")).hexdigest(),
            "exchange_seq": exchange_seq,
        }
        self._append(record)


@dataclass
class _TaskState:
    log: TaskLog
    backend: Optional[object] = None
    exchanges: List[LLMExchange] = field(default_factory=list)


class LLMGateway:
    """Shared gateway: routes completions to a backend and accounts tokens per task."""

    def __init__(self, default_backend=None):
        self.default_backend = default_backend
        self._tasks: Dict[str, _TaskState] = {}
        self._lock = threading.Lock()

    # -- task binding ------------------------------------------------------------

    def bind_task(self, task_id: str, log: TaskLog, backend=None) -> None:
        with self._lock:
            self._tasks[task_id] = _TaskState(log=log, backend=backend)

    def task_known(self, task_id: str) -> bool:
        return task_id in self._tasks

    def _state(self, task_id: str) -> _TaskState:
        state = self._tasks.get(task_id)
        if state is None:
            raise UnknownTask(f"no exchanges logged for task {task_id!r}")
        return state

    # -- operations ----------------------------------------------------------------

    def complete(self, request: LLMRequest, origin: CallOrigin, task_id: str) -> LLMExchange:
        request.validate()
        state = self._state(task_id)
        backend = state.backend or self.default_backend
        if backend is None:
            raise BackendUnavailable("no LLM backend configured for this task")
        reply = backend.complete(request)
        exchange = LLMExchange(
            request=request,
            completion=reply.completion,
            input_tokens=reply.input_tokens,
            output_tokens=reply.output_tokens,
            origin=origin,
            task_id=task_id,
            sequence=state.log.next_seq(),
            approximate=reply.approximate,
            timestamp=datetime.now(timezone.utc).isoformat(timespec="seconds"),
        )
        with self._lock:
            state.exchanges.append(exchange)
        state.log.record_exchange(exchange)
        return exchange

    def exchanges(self, task_id: str) -> List[LLMExchange]:
        return list(self._state(task_id).exchanges)

    def orchestration_token_total(self, task_id: str) -> int:
        state = self._state(task_id)
        return sum(e.output_tokens for e in state.exchanges if e.origin.is_orchestrator)

    def subagent_token_total(self, task_id: str) -> int:
        state = self._state(task_id)
        return sum(e.output_tokens for e in state.exchanges if not e.origin.is_orchestrator)

    def batch_report(self, task_ids: List[str]) -> dict:
        per_task = {tid: self.orchestration_token_total(tid) for tid in task_ids}
        mean = sum(per_task.values()) / len(per_task) if per_task else 0.0
        return {"per_task": per_task, "mean": mean}
