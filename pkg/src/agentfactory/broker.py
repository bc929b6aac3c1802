"""Tool broker: serves tool and LLM calls to one subagent process.

Wire protocol (newline-delimited JSON over the child's stdio, one compact
object per line, UTF-8):

    child -> broker   {"id": int, "verb": "tool_call", "tool": str, "args": {...}}
    child -> broker   {"id": int, "verb": "llm_call", "args": {"messages": [...]}}
    broker -> child   {"id": int, "verb": "response", "ok": bool, "payload": {...}}
    child -> broker   {"verb": "result", "payload": ...}          (terminal)
    child -> broker   {"verb": "error", "payload": ...}           (terminal failure report)
    broker -> child   {"verb": "query", "payload": "<text>"}      (first message, delivers the task)

Every request id gets exactly one response with the same id. Ungranted
tool_call requests are answered ok=false with "tool not granted";
llm_call is always served (grants scope tools, not reasoning). Any
non-envelope line on the child's stdout is a protocol violation.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import List, Optional

from .errors import AgentFactoryError, UnresolvedToolGrant, error_name
from .gateway import CallOrigin, LLMGateway, LLMRequest
from .tools import ToolSet

TOOL_NOT_GRANTED = "tool not granted"


def encode_envelope(obj: dict) -> str:
    return json.dumps(obj, separators=(",", ":"), ensure_ascii=False)


def query_envelope(query: str) -> str:
    return encode_envelope({"verb": "query", "payload": query})


class BrokerSession:
    """Protocol state for one subagent execution."""

    def __init__(
        self,
        toolset: ToolSet,
        gateway: Optional[LLMGateway],
        grants: List[str],
        workspace_root: Path,
        out_dir: Path,
        task_id: str,
        subagent_name: str,
        model: str = "default-chat",
        max_output_tokens: int = 2048,
        registered_tools: Optional[List[str]] = None,
    ):
        known = registered_tools if registered_tools is not None else [
            "web_search", "web_reading", "browser_automation", "shell_command",
        ]
        for grant in grants:
            if grant not in known:
                raise UnresolvedToolGrant(grant)
        self.toolset = toolset
        self.gateway = gateway
        self.grants = set(grants)
        self.workspace_root = Path(workspace_root)
        self.out_dir = Path(out_dir)
        self.task_id = task_id
        self.subagent_name = subagent_name
        self.model = model
        self.max_output_tokens = max_output_tokens

        self.tool_calls_made = 0
        self.llm_calls_made = 0
        self.result_payload = None
        self.result_count = 0
        self.error_payload = None
        self.protocol_errors: List[str] = []
        self._seen_ids: set = set()
        self._line_no = 0

    @property
    def finished(self) -> bool:
        return self.result_count > 0 or self.error_payload is not None

    def handle_line(self, line: str) -> Optional[str]:
        """Process one line from the child; returns the response line to send, if any."""
        self._line_no += 1
        stripped = line.rstrip("\n")
        if not stripped.strip():
            return None
        try:
            message = json.loads(stripped)
        except json.JSONDecodeError:
            self.protocol_errors.append(f"line {self._line_no}: not a protocol envelope: {stripped[:120]!r}")
            return None
        if not isinstance(message, dict) or "verb" not in message:
            self.protocol_errors.append(f"line {self._line_no}: not a protocol envelope: {stripped[:120]!r}")
            return None

        verb = message.get("verb")
        if verb == "result":
            self.result_count += 1
            if self.result_count > 1:
                self.protocol_errors.append(f"line {self._line_no}: duplicate result message")
            else:
                self.result_payload = message.get("payload")
            return None
        if verb == "error":
            self.error_payload = message.get("payload")
            return None
        if verb in ("tool_call", "llm_call"):
            request_id = message.get("id")
            if not isinstance(request_id, int):
                self.protocol_errors.append(f"line {self._line_no}: request without an integer id")
                return None
            if request_id in self._seen_ids:
                self.protocol_errors.append(f"line {self._line_no}: reused request id {request_id}")
                return self._respond(request_id, False, {"error": f"duplicate request id {request_id}"})
            self._seen_ids.add(request_id)
            if verb == "tool_call":
                return self._handle_tool_call(request_id, message)
            return self._handle_llm_call(request_id, message)

        self.protocol_errors.append(f"line {self._line_no}: unknown verb {verb!r}")
        request_id = message.get("id")
        if isinstance(request_id, int):
            return self._respond(request_id, False, {"error": f"unknown verb {verb!r}"})
        return None

    # -- internals ---------------------------------------------------------------

    def _respond(self, request_id: int, ok: bool, payload) -> str:
        return encode_envelope({"id": request_id, "verb": "response", "ok": ok, "payload": payload})

    def _handle_tool_call(self, request_id: int, message: dict) -> str:
        tool = message.get("tool")
        args = message.get("args") or {}
        self.tool_calls_made += 1
        if not isinstance(tool, str) or not tool:
            return self._respond(request_id, False, {"error": "tool_call without a tool name"})
        if tool not in self.grants:
            return self._respond(request_id, False, {"error": TOOL_NOT_GRANTED, "tool": tool})
        try:
            payload = self.toolset.invoke(
                tool, args if isinstance(args, dict) else {}, self.workspace_root, self.out_dir
            )
        except AgentFactoryError as exc:
            return self._respond(request_id, False, {"error": str(exc), "error_type": error_name(exc)})
        except Exception as exc:
            return self._respond(request_id, False, {"error": str(exc), "error_type": error_name(exc)})
        return self._respond(request_id, True, payload)

    def _handle_llm_call(self, request_id: int, message: dict) -> str:
        args = message.get("args") or {}
        messages = args.get("messages") if isinstance(args, dict) else None
        self.llm_calls_made += 1
        if self.gateway is None:
            return self._respond(request_id, False, {"error": "no LLM gateway available", "error_type": "BackendUnavailable"})
        try:
            request = LLMRequest(
                messages=messages or [], model=self.model, max_output_tokens=self.max_output_tokens
            )
            exchange = self.gateway.complete(
                request, CallOrigin(subagent=self.subagent_name), self.task_id
            )
        except AgentFactoryError as exc:
            self.llm_calls_made -= 1
            return self._respond(request_id, False, {"error": str(exc), "error_type": error_name(exc)})
        except ValueError as exc:
            self.llm_calls_made -= 1
            return self._respond(request_id, False, {"error": str(exc), "error_type": "ProtocolError"})
        return self._respond(request_id, True, {"completion": exchange.completion})

    def first_protocol_error(self) -> str:
        return self.protocol_errors[0] if self.protocol_errors else ""
