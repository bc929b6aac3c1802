"""Client library for subagent scripts.

Two modes, selected solely by the AF_BROKER environment variable:

* brokered — the script runs under the runtime. Its stdin/stdout carry
  newline-delimited JSON envelopes: the first incoming message delivers the
  query, tool and LLM calls go out as requests and block for the matching
  response, and report_result emits the terminal result envelope. stdout is
  reserved for envelopes; use log() (stderr) for anything human-readable.

* standalone — the script runs from an exported bundle with no runtime.
  The query comes from --query, tools dispatch to built-in direct adapters
  (same argument and payload shapes as the broker, same fixture formats,
  same safety-rules file), and report_result prints the result payload as a
  single JSON line on stdout.

Stdlib only: bundles must be self-contained.
"""

from __future__ import annotations

import json
import os
import re
import subprocess
import sys
import urllib.error
import urllib.request
from html.parser import HTMLParser
from pathlib import Path
from urllib.parse import urlparse

__version__ = "0.1.0"

STREAM_CAP = 256 * 1024
TRUNCATION_MARKER = "[truncated]"
TOOL_NAMES = ("web_search", "web_reading", "browser_automation", "shell_command")


class SdkError(Exception):
    pass


class ProtocolError(SdkError):
    def __init__(self, message, line_number=None):
        super().__init__(message if line_number is None else f"line {line_number}: {message}")
        self.line_number = line_number


class ToolDenied(SdkError):
    pass


class AdapterUnconfigured(SdkError):
    pass


class BackendUnavailable(SdkError):
    pass


class AlreadyReported(SdkError):
    pass


class MissingArgument(SdkError):
    pass


class SafetyDenied(SdkError):
    def __init__(self, rule, fragment):
        super().__init__(f"denied by safety rule {rule!r} (matched {fragment!r})")
        self.rule = rule
        self.fragment = fragment


def log(*parts):
    """Human-readable logging; never touches the protocol channel."""
    print(*parts, file=sys.stderr)


# --- safety rules (same file format the runtime broker uses) -------------------


def _load_safety_rules():
    path = Path(__file__).parent / "safety_rules.txt"
    rules = []
    for raw in path.read_text(encoding="utf-8").splitlines():
        line = raw.strip()
        if not line or line.startswith("#") or line.startswith("version "):
            continue
        parts = line.split(None, 2)
        if len(parts) == 3 and parts[0] == "deny":
            rules.append((parts[1], re.compile(parts[2], re.IGNORECASE)))
    return rules


_SAFETY_RULES = None


def check_command_safety(command):
    """(allowed, rule, fragment) verdict from the bundled safety policy."""
    global _SAFETY_RULES
    if _SAFETY_RULES is None:
        _SAFETY_RULES = _load_safety_rules()
    for name, pattern in _SAFETY_RULES:
        match = pattern.search(command)
        if match:
            return False, name, match.group(0).strip()
    return True, None, None


# --- standalone adapters ---------------------------------------------------------


def _valid_url(url):
    parsed = urlparse(url)
    return parsed.scheme in ("http", "https") and bool(parsed.netloc)


class _TextExtractor(HTMLParser):
    SKIP = {"script", "style", "noscript"}

    def __init__(self):
        super().__init__()
        self.chunks = []
        self.title_chunks = []
        self._skip_depth = 0
        self._in_title = False

    def handle_starttag(self, tag, attrs):
        if tag in self.SKIP:
            self._skip_depth += 1
        if tag == "title":
            self._in_title = True

    def handle_endtag(self, tag):
        if tag in self.SKIP and self._skip_depth:
            self._skip_depth -= 1
        if tag == "title":
            self._in_title = False

    def handle_data(self, data):
        if self._in_title:
            self.title_chunks.append(data)
        elif not self._skip_depth:
            self.chunks.append(data)


def _extract_page_text(html):
    parser = _TextExtractor()
    parser.feed(html)
    return {
        "content_text": " ".join(" ".join(parser.chunks).split()),
        "title": " ".join(" ".join(parser.title_chunks).split()),
    }


def _cap_stream(data):
    text = data.decode("utf-8", errors="replace")
    if len(data) > STREAM_CAP:
        text = data[:STREAM_CAP].decode("utf-8", errors="replace") + TRUNCATION_MARKER
    return text


class _StandaloneAdapters:
    def __init__(self, env):
        self.env = env
        self.browser_actions = []

    def _fixtures_dir(self):
        fixtures = self.env.get("AF_FIXTURES", "")
        return Path(fixtures) if fixtures else None

    def web_search(self, args):
        query = str(args.get("query", ""))
        max_results = int(args.get("max_results", 5))
        if max_results <= 0:
            return {"results": []}
        fixtures = self._fixtures_dir()
        if fixtures and (fixtures / "search").is_dir():
            for path in sorted((fixtures / "search").glob("*.json")):
                data = json.loads(path.read_text(encoding="utf-8"))
                if data.get("query", "").strip().lower() == query.strip().lower():
                    results = [
                        {"title": r["title"], "url": r["url"], "snippet": r.get("snippet", "")}
                        for r in data.get("results", [])
                        if _valid_url(r.get("url", ""))
                    ]
                    return {"results": results[:max_results]}
            return {"results": []}
        url = self.env.get("AF_SEARCH_URL", "")
        key = self.env.get("AF_SEARCH_KEY", "")
        if not url or not key:
            raise AdapterUnconfigured("web_search requires AF_FIXTURES or AF_SEARCH_URL + AF_SEARCH_KEY")
        body = json.dumps({"q": query, "num": max_results}).encode("utf-8")
        request = urllib.request.Request(
            url, data=body, headers={"Content-Type": "application/json", "X-API-KEY": key}
        )
        try:
            with urllib.request.urlopen(request, timeout=30) as response:
                payload = json.loads(response.read().decode("utf-8"))
        except urllib.error.URLError as exc:
            raise BackendUnavailable(f"web_search upstream failed: {exc}")
        results = []
        for e in payload.get("organic", [])[:max_results]:
            link = e.get("link", e.get("url", ""))
            if _valid_url(link):
                results.append({"title": e.get("title", ""), "url": link, "snippet": e.get("snippet", "")})
        return {"results": results}

    def web_reading(self, args):
        url = str(args.get("url", ""))
        if not _valid_url(url):
            raise SdkError(f"InvalidUrl: not an absolute http(s) url: {url!r}")
        fixtures = self._fixtures_dir()
        if fixtures and (fixtures / "pages").is_dir():
            index_path = fixtures / "pages" / "index.json"
            index = json.loads(index_path.read_text(encoding="utf-8")) if index_path.exists() else {}
            entry = index.get(url)
            if entry is None:
                raise SdkError(f"FetchFailure: no fixture page for {url!r} (status 404)")
            if "status" in entry and entry["status"] != 200:
                raise SdkError(f"FetchFailure: fetch failed with status {entry['status']}")
            html = (fixtures / "pages" / entry["file"]).read_text(encoding="utf-8")
            return _extract_page_text(html)
        prefix = self.env.get("AF_READER_URL", "")
        if not prefix:
            raise AdapterUnconfigured("web_reading requires AF_FIXTURES or AF_READER_URL")
        try:
            with urllib.request.urlopen(prefix + url, timeout=30) as response:
                return {"content_text": response.read().decode("utf-8", errors="replace"), "title": ""}
        except urllib.error.URLError as exc:
            raise BackendUnavailable(f"web_reading upstream failed: {exc}")

    def shell_command(self, args):
        command = str(args.get("command", ""))
        allowed, rule, fragment = check_command_safety(command)
        if not allowed:
            raise SafetyDenied(rule, fragment)
        workspace_out = self.env.get("AF_WORKSPACE_OUT", "")
        raw_cwd = args.get("cwd")
        if raw_cwd in (None, ""):
            cwd = Path(workspace_out) if workspace_out else Path.cwd()
        else:
            cwd = Path(str(raw_cwd))
            if not cwd.is_absolute() and workspace_out:
                cwd = Path(workspace_out) / cwd
        cwd = cwd.resolve()
        if workspace_out:
            root = Path(workspace_out).resolve()
            if not (cwd == root or root in cwd.parents):
                raise SdkError(f"CwdOutsideWorkspace: cwd {cwd} is outside {root}")
        proc = subprocess.run(command, shell=True, cwd=str(cwd), capture_output=True, timeout=120)
        return {
            "exit_code": proc.returncode,
            "stdout": _cap_stream(proc.stdout),
            "stderr": _cap_stream(proc.stderr),
        }

    def browser_automation(self, args):
        script = args.get("action_script", args)
        self.browser_actions.append(script)
        return {"status": "NotImplemented", "observations": []}

    def dispatch(self, tool, args):
        if tool not in TOOL_NAMES:
            raise SdkError(f"unknown tool {tool!r}")
        return getattr(self, tool)(args)


# --- the session ------------------------------------------------------------------


class SdkSession:
    """One subagent process's view of the world."""

    def __init__(self, stdin=None, stdout=None, env=None, argv=None):
        self.stdin = stdin if stdin is not None else sys.stdin
        self.stdout = stdout if stdout is not None else sys.stdout
        self.env = dict(os.environ if env is None else env)
        self.argv = list(sys.argv if argv is None else argv)
        self.mode = "brokered" if self.env.get("AF_BROKER") else "standalone"
        self._next_id = 1
        self._line_no = 0
        self._query = None
        self._query_read = False
        self._reported = False
        self._adapters = _StandaloneAdapters(self.env)

    # -- wire helpers ---------------------------------------------------------

    def _send(self, obj):
        self.stdout.write(json.dumps(obj, separators=(",", ":"), ensure_ascii=False) + "\n")
        self.stdout.flush()

    def _read_envelope(self):
        line = self.stdin.readline()
        self._line_no += 1
        if not line:
            raise ProtocolError("broker closed the stream", self._line_no)
        stripped = line.strip()
        if not stripped:
            raise ProtocolError("blank line where an envelope was expected", self._line_no)
        try:
            message = json.loads(stripped)
        except json.JSONDecodeError:
            raise ProtocolError(f"malformed envelope: {stripped[:120]!r}", self._line_no)
        if not isinstance(message, dict) or "verb" not in message:
            raise ProtocolError(f"malformed envelope: {stripped[:120]!r}", self._line_no)
        return message

    def _ensure_query(self):
        if self._query_read:
            return
        message = self._read_envelope()
        if message.get("verb") != "query":
            raise ProtocolError(f"expected the query message first, got verb {message.get('verb')!r}", self._line_no)
        self._query = message.get("payload", "")
        self._query_read = True

    def _roundtrip(self, envelope):
        self._ensure_query()
        request_id = self._next_id
        self._next_id += 1
        envelope = dict(envelope, id=request_id)
        self._send(envelope)
        response = self._read_envelope()
        if response.get("verb") != "response":
            raise ProtocolError(f"expected a response, got verb {response.get('verb')!r}", self._line_no)
        if response.get("id") != request_id:
            raise ProtocolError(
                f"response id {response.get('id')!r} does not match request id {request_id}", self._line_no
            )
        return response

    # -- public surface -----------------------------------------------------------

    def read_query(self):
        if self.mode == "brokered":
            self._ensure_query()
            return self._query
        if "--query" in self.argv:
            index = self.argv.index("--query")
            if index + 1 < len(self.argv):
                return self.argv[index + 1]
        raise MissingArgument("standalone mode requires --query <text>")

    def call_tool(self, tool, args):
        if self.mode == "brokered":
            response = self._roundtrip({"verb": "tool_call", "tool": tool, "args": args})
            payload = response.get("payload")
            if not response.get("ok"):
                message = (payload or {}).get("error", "tool call failed") if isinstance(payload, dict) else str(payload)
                raise ToolDenied(message)
            return payload
        self._next_id += 1  # ids stay strictly increasing in both modes
        return self._adapters.dispatch(tool, args)

    def call_llm(self, messages):
        if not messages:
            raise ProtocolError("messages must be non-empty")
        if self.mode == "brokered":
            response = self._roundtrip({"verb": "llm_call", "args": {"messages": messages}})
            payload = response.get("payload")
            if not response.get("ok"):
                message = (payload or {}).get("error", "llm call failed") if isinstance(payload, dict) else str(payload)
                raise BackendUnavailable(message)
            return payload.get("completion", "")
        return self._standalone_llm(messages)

    def report_result(self, payload):
        if self._reported:
            raise AlreadyReported("report_result was already called in this session")
        self._reported = True
        if self.mode == "brokered":
            self._send({"verb": "result", "payload": payload})
        else:
            self.stdout.write(json.dumps(payload, separators=(",", ":"), ensure_ascii=False) + "\n")
            self.stdout.flush()

    # -- standalone llm ---------------------------------------------------------------

    def _standalone_llm(self, messages):
        url = self.env.get("AF_BACKEND_URL", "")
        if not url:
            raise BackendUnavailable("standalone llm calls require AF_BACKEND_URL")
        body = {
            "model": self.env.get("AF_MODEL", "default-chat"),
            "messages": messages,
            "max_tokens": int(self.env.get("AF_MAX_OUTPUT_TOKENS", "2048")),
        }
        headers = {"Content-Type": "application/json"}
        key = self.env.get("AF_BACKEND_KEY", "")
        if key:
            headers["Authorization"] = f"Bearer {key}"
        request = urllib.request.Request(url, data=json.dumps(body).encode("utf-8"), headers=headers)
        try:
            with urllib.request.urlopen(request, timeout=60) as response:
                payload = json.loads(response.read().decode("utf-8"))
        except urllib.error.URLError as exc:
            raise BackendUnavailable(f"backend request failed: {exc}")
        completion = payload.get("completion")
        if completion is None:
            choices = payload.get("choices") or []
            if choices:
                completion = (choices[0].get("message") or {}).get("content")
        if not isinstance(completion, str):
            raise BackendUnavailable("backend response carries no completion text")
        usage = payload.get("usage") or {}
        self._log_usage(
            {
                "model": body["model"],
                "output_tokens": usage.get("output_tokens", usage.get("completion_tokens", 0)),
                "input_tokens": usage.get("input_tokens", usage.get("prompt_tokens", 0)),
            }
        )
        return completion

    def _log_usage(self, record):
        out = self.env.get("AF_WORKSPACE_OUT", "")
        target = (Path(out) if out else Path.cwd()) / "llm_usage.jsonl"
        try:
            with target.open("a", encoding="utf-8") as fh:
                fh.write(json.dumps(record, separators=(",", ":")) + "\n")
        except OSError:
            log("af_sdk: could not append llm usage record")


# --- module-level convenience for generated scripts ----------------------------------

_session = None


def session():
    global _session
    if _session is None:
        _session = SdkSession()
    return _session


def read_query():
    return session().read_query()


def call_tool(tool, args):
    return session().call_tool(tool, args)


def call_llm(messages):
    return session().call_llm(messages)


def report_result(payload):
    return session().report_result(payload)
