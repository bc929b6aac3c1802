"""Supervised execution of subagent scripts.

Brokered mode launches the script as a child process inside the workspace,
delivers the query as the first protocol message, pumps the broker session
over the child's stdio, and enforces a timeout with terminate-then-kill.
Standalone mode runs a bundled script with no broker at all: the SDK inside
the bundle handles tools directly and the script prints its result payload
as a single JSON line.
"""

from __future__ import annotations

import json
import os
import re
import shutil
import subprocess
import threading
import time
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import List, Optional

from .broker import BrokerSession, query_envelope
from .errors import BundleInvalid, InterpreterNotFound, SpawnFailure
from .gateway import LLMGateway
from .tools import ToolSet
from .workspace import Workspace

STDERR_TAIL_BYTES = 4096
GRACE_SECONDS = 5.0
_USAGE_TIMEOUT_RE = re.compile(r"(?im)^\s*timeout-seconds\s*:\s*(\d+)\s*$")


class OutcomeStatus(str, Enum):
    SUCCESS = "success"
    NONZERO_EXIT = "nonzero_exit"
    TIMEOUT = "timeout"
    PROTOCOL_ERROR = "protocol_error"


@dataclass
class SubagentOutcome:
    status: OutcomeStatus
    result_payload: object = None
    exit_code: Optional[int] = None
    detail: str = ""
    stderr_tail: str = ""
    duration: float = 0.0
    tool_calls_made: int = 0
    llm_calls_made: int = 0

    @property
    def success(self) -> bool:
        return self.status is OutcomeStatus.SUCCESS

    def describe(self) -> str:
        if self.success:
            return json.dumps(self.result_payload, ensure_ascii=False)
        parts = [f"status={self.status.value}"]
        if self.exit_code is not None:
            parts.append(f"exit_code={self.exit_code}")
        if self.detail:
            parts.append(f"detail={self.detail}")
        if self.stderr_tail:
            parts.append(f"stderr_tail={self.stderr_tail.strip()}")
        return " ".join(parts)


def usage_timeout_override(usage: str) -> Optional[float]:
    """Per-skill timeout declared in the manifest's Usage metadata."""
    match = _USAGE_TIMEOUT_RE.search(usage or "")
    return float(match.group(1)) if match else None


def _tail(path: Path) -> str:
    try:
        data = path.read_bytes()
    except OSError:
        return ""
    return data[-STDERR_TAIL_BYTES:].decode("utf-8", errors="replace")


class SubagentRunner:
    def __init__(self, config, toolset: ToolSet, gateway: Optional[LLMGateway]):
        self.config = config
        self.toolset = toolset
        self.gateway = gateway

    # -- brokered execution ------------------------------------------------------

    def execute(
        self,
        name: str,
        code: str,
        workspace: Workspace,
        query: str,
        grants: List[str],
        task_id: str,
        timeout: Optional[float] = None,
        run_index: int = 0,
    ) -> SubagentOutcome:
        interpreter = self.config.interpreter
        if not shutil.which(interpreter) and not Path(interpreter).exists():
            raise InterpreterNotFound(f"script interpreter not found: {interpreter!r}")

        exec_dir = workspace.root_dir / ".exec" / name
        exec_dir.mkdir(parents=True, exist_ok=True)
        script_path = exec_dir / f"agent.{self.config.script_ext}"
        script_path.write_text(code, encoding="utf-8")
        workspace.out_dir.mkdir(parents=True, exist_ok=True)
        stderr_log = workspace.out_dir / f"subagent-{name}-{run_index}.stderr.log"

        session = BrokerSession(
            toolset=self.toolset,
            gateway=self.gateway,
            grants=grants,
            workspace_root=workspace.root_dir,
            out_dir=workspace.out_dir,
            task_id=task_id,
            subagent_name=name,
            model=self.config.model,
            max_output_tokens=self.config.max_output_tokens,
        )

        env = dict(os.environ)
        env.update(
            {
                "AF_BROKER": "stdio",
                "AF_TASK_ID": task_id,
                "AF_SUBAGENT_NAME": name,
                "AF_WORKSPACE_OUT": str(workspace.out_dir.resolve()),
                "PYTHONUNBUFFERED": "1",
            }
        )
        sdk_dir = self._sdk_import_root()
        if sdk_dir:
            existing = env.get("PYTHONPATH", "")
            env["PYTHONPATH"] = str(sdk_dir) + (os.pathsep + existing if existing else "")

        started = time.monotonic()
        try:
            proc = subprocess.Popen(
                [interpreter, str(script_path)],
                cwd=str(workspace.out_dir),
                env=env,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=subprocess.PIPE,
                text=True,
                bufsize=1,
            )
        except FileNotFoundError:
            raise InterpreterNotFound(f"script interpreter not found: {interpreter!r}")
        except OSError as exc:
            raise SpawnFailure(f"could not launch subagent {name!r}: {exc}")

        stderr_lock = threading.Lock()

        def _drain_stderr():
            with stderr_log.open("wb") as fh:
                while True:
                    chunk = proc.stderr.readline()
                    if not chunk:
                        break
                    with stderr_lock:
                        fh.write(chunk.encode("utf-8", errors="replace"))
                        fh.flush()

        def _pump_stdout():
            for line in proc.stdout:
                response = session.handle_line(line)
                if response is not None:
                    try:
                        proc.stdin.write(response + "\n")
                        proc.stdin.flush()
                    except (BrokenPipeError, ValueError, OSError):
                        break

        # Deliver the query before the response pump starts so the two stdin
        # writers can never interleave.
        timed_out = False
        try:
            proc.stdin.write(query_envelope(query) + "\n")
            proc.stdin.flush()
        except (BrokenPipeError, OSError):
            pass  # child died before reading its query; exit handling below reports it

        stderr_thread = threading.Thread(target=_drain_stderr, daemon=True)
        stdout_thread = threading.Thread(target=_pump_stdout, daemon=True)
        stderr_thread.start()
        stdout_thread.start()

        limit = timeout if timeout is not None else self.config.subagent_timeout
        try:
            exit_code = proc.wait(timeout=limit)
        except subprocess.TimeoutExpired:
            timed_out = True
            proc.terminate()
            try:
                exit_code = proc.wait(timeout=GRACE_SECONDS)
            except subprocess.TimeoutExpired:
                proc.kill()
                exit_code = proc.wait()
        stdout_thread.join(timeout=5.0)
        stderr_thread.join(timeout=5.0)
        try:
            proc.stdin.close()
        except OSError:
            pass
        duration = time.monotonic() - started

        if timed_out:
            status, detail = OutcomeStatus.TIMEOUT, f"timed out after {limit}s"
        elif session.protocol_errors:
            status, detail = OutcomeStatus.PROTOCOL_ERROR, session.first_protocol_error()
        elif exit_code != 0:
            status, detail = OutcomeStatus.NONZERO_EXIT, ""
            if session.error_payload is not None:
                detail = json.dumps(session.error_payload, ensure_ascii=False)
        elif session.result_count == 1:
            status, detail = OutcomeStatus.SUCCESS, ""
        else:
            status, detail = OutcomeStatus.PROTOCOL_ERROR, "no result message emitted"

        return SubagentOutcome(
            status=status,
            result_payload=session.result_payload if status is OutcomeStatus.SUCCESS else None,
            exit_code=exit_code,
            detail=detail,
            stderr_tail=_tail(stderr_log),
            duration=duration,
            tool_calls_made=session.tool_calls_made,
            llm_calls_made=session.llm_calls_made,
        )

    # -- standalone execution ------------------------------------------------------

    def standalone_execute(
        self,
        bundle_dir: Path,
        query: str,
        skill: Optional[str] = None,
        out_dir: Optional[Path] = None,
        timeout: Optional[float] = None,
    ) -> SubagentOutcome:
        return standalone_execute(
            bundle_dir,
            query,
            skill=skill,
            interpreter=self.config.interpreter,
            out_dir=out_dir,
            timeout=timeout if timeout is not None else self.config.subagent_timeout,
        )

    def _sdk_import_root(self) -> Optional[Path]:
        return resolve_sdk_import_root(self.config.sdk_source)


def resolve_sdk_import_root(configured: Optional[Path] = None) -> Optional[Path]:
    """Directory to put on PYTHONPATH so `import af_sdk` works, if available."""
    if configured:
        return Path(configured)
    try:
        import importlib.util

        spec = importlib.util.find_spec("af_sdk")
    except (ImportError, ValueError):
        return None
    if spec is None or not spec.origin:
        return None
    return Path(spec.origin).parent.parent


def standalone_execute(
    bundle_dir: Path,
    query: str,
    skill: Optional[str] = None,
    interpreter: Optional[str] = None,
    out_dir: Optional[Path] = None,
    timeout: float = 120.0,
) -> SubagentOutcome:
    """Run a bundled subagent with no runtime or broker, per the bundle's contract."""
    import sys
    import tempfile

    bundle_dir = Path(bundle_dir)
    index_path = bundle_dir / "index.json"
    if not index_path.exists():
        raise BundleInvalid(f"no index.json under {bundle_dir}")
    try:
        index = json.loads(index_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise BundleInvalid(f"index.json unreadable: {exc}")
    skills = {s["name"]: s for s in index.get("skills", [])}
    if skill is None:
        if len(skills) != 1:
            raise BundleInvalid(
                f"bundle holds {len(skills)} skills; name the one to run"
            )
        skill = next(iter(skills))
    if skill not in skills:
        raise BundleInvalid(f"bundle has no skill named {skill!r}")
    entry = bundle_dir / skills[skill]["entry"]
    if not entry.exists():
        raise BundleInvalid(f"bundle entry script missing: {entry}")

    interpreter = interpreter or sys.executable
    if not shutil.which(interpreter) and not Path(interpreter).exists():
        raise InterpreterNotFound(f"script interpreter not found: {interpreter!r}")

    created_tmp = None
    if out_dir is None:
        created_tmp = tempfile.mkdtemp(prefix="af-standalone-")
        out_dir = Path(created_tmp)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    env = dict(os.environ)
    env.pop("AF_BROKER", None)
    sdk_path = str((bundle_dir / index.get("sdk", "sdk")).resolve())
    existing = env.get("PYTHONPATH", "")
    env["PYTHONPATH"] = sdk_path + (os.pathsep + existing if existing else "")
    env["AF_SUBAGENT_NAME"] = skill
    env["AF_WORKSPACE_OUT"] = str(out_dir.resolve())
    env["PYTHONUNBUFFERED"] = "1"
    env["PYTHONDONTWRITEBYTECODE"] = "1"  # keep the bundle byte-stable

    started = time.monotonic()
    try:
        proc = subprocess.run(
            [interpreter, str(entry), "--query", query],
            cwd=str(out_dir),
            env=env,
            capture_output=True,
            text=True,
            timeout=timeout,
        )
    except subprocess.TimeoutExpired:
        return SubagentOutcome(
            status=OutcomeStatus.TIMEOUT,
            detail=f"timed out after {timeout}s",
            duration=time.monotonic() - started,
        )
    except FileNotFoundError:
        raise InterpreterNotFound(f"script interpreter not found: {interpreter!r}")
    duration = time.monotonic() - started

    stderr_tail = proc.stderr[-STDERR_TAIL_BYTES:] if proc.stderr else ""
    lines = [ln for ln in proc.stdout.splitlines() if ln.strip()]
    if proc.returncode != 0:
        return SubagentOutcome(
            status=OutcomeStatus.NONZERO_EXIT,
            exit_code=proc.returncode,
            stderr_tail=stderr_tail,
            duration=duration,
        )
    if len(lines) != 1:
        return SubagentOutcome(
            status=OutcomeStatus.PROTOCOL_ERROR,
            exit_code=proc.returncode,
            detail=f"expected exactly one result line on stdout, got {len(lines)}",
            stderr_tail=stderr_tail,
            duration=duration,
        )
    try:
        payload = json.loads(lines[0])
    except json.JSONDecodeError:
        return SubagentOutcome(
            status=OutcomeStatus.PROTOCOL_ERROR,
            exit_code=proc.returncode,
            detail=f"result line is not JSON: {lines[0][:120]!r}",
            stderr_tail=stderr_tail,
            duration=duration,
        )
    return SubagentOutcome(
        status=OutcomeStatus.SUCCESS,
        result_payload=payload,
        exit_code=proc.returncode,
        stderr_tail=stderr_tail,
        duration=duration,
    )
