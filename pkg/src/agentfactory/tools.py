"""Adapters behind the four built-in tool skills.

web_search and web_reading each have a fixture mode (deterministic, keyed
by a corpus directory) and a thin live HTTP mode. shell_command screens
every command against the safety rules and confines the working directory
to the workspace. browser_automation defaults to a recording stub that
returns NotImplemented; a real driver can be plugged in behind the same
call shape.

Fixture corpus layout:

    <corpus>/search/*.json            {"query": str, "results": [{title,url,snippet}]}
    <corpus>/pages/index.json         {"<url>": {"file": name} | {"status": int}}
    <corpus>/pages/<name>             stored HTML page
"""

from __future__ import annotations

import json
import subprocess
from html.parser import HTMLParser
from pathlib import Path
from typing import Dict, List, Optional
from urllib.parse import urlparse

import httpx

from .errors import (
    AdapterUnconfigured,
    CwdOutsideWorkspace,
    ExecFailure,
    FetchFailure,
    InvalidUrl,
    SafetyDenied,
    UpstreamFailure,
)
from .safety import SafetyRules, default_rules

STREAM_CAP = 256 * 1024
TRUNCATION_MARKER = "[truncated]"


def _valid_url(url: str) -> bool:
    parsed = urlparse(url)
    return parsed.scheme in ("http", "https") and bool(parsed.netloc)


# -- web search ---------------------------------------------------------------


class FixtureSearchAdapter:
    def __init__(self, corpus_dir: Path):
        self.corpus_dir = Path(corpus_dir)

    def search(self, query: str, max_results: int = 5) -> List[dict]:
        if max_results <= 0:
            return []
        for path in sorted(self.corpus_dir.glob("*.json")):
            data = json.loads(path.read_text(encoding="utf-8"))
            if data.get("query", "").strip().lower() == query.strip().lower():
                results = [
                    {"title": r["title"], "url": r["url"], "snippet": r.get("snippet", "")}
                    for r in data.get("results", [])
                    if _valid_url(r.get("url", ""))
                ]
                return results[:max_results]
        return []


class HttpSearchAdapter:
    """Generic JSON search endpoint: POST {"q": query, "num": n} with an API key header."""

    def __init__(self, url: str, api_key: str, timeout: float = 30.0, transport=None):
        self.url = url
        self.api_key = api_key
        self._client = httpx.Client(timeout=timeout, transport=transport)

    def search(self, query: str, max_results: int = 5) -> List[dict]:
        if not self.url or not self.api_key:
            raise AdapterUnconfigured("web_search has no endpoint/key configured")
        if max_results <= 0:
            return []
        response = self._client.post(
            self.url, json={"q": query, "num": max_results}, headers={"X-API-KEY": self.api_key}
        )
        if response.status_code >= 400:
            raise UpstreamFailure(response.status_code)
        entries = response.json().get("organic", [])
        results = []
        for e in entries[:max_results]:
            url = e.get("link", e.get("url", ""))
            if _valid_url(url):
                results.append({"title": e.get("title", ""), "url": url, "snippet": e.get("snippet", "")})
        return results


class UnconfiguredSearchAdapter:
    def search(self, query: str, max_results: int = 5) -> List[dict]:
        raise AdapterUnconfigured("web_search adapter is not configured (set a fixture corpus or an API key)")


# -- web reading ----------------------------------------------------------------


class _TextExtractor(HTMLParser):
    SKIP = {"script", "style", "noscript"}

    def __init__(self):
        super().__init__()
        self.chunks: List[str] = []
        self.title_chunks: List[str] = []
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


def extract_page_text(html: str) -> Dict[str, str]:
    parser = _TextExtractor()
    parser.feed(html)
    content = " ".join(" ".join(parser.chunks).split())
    title = " ".join(" ".join(parser.title_chunks).split())
    return {"content_text": content, "title": title}


class FixtureReadingAdapter:
    def __init__(self, pages_dir: Path):
        self.pages_dir = Path(pages_dir)

    def read(self, url: str) -> Dict[str, str]:
        if not _valid_url(url):
            raise InvalidUrl(f"not an absolute http(s) url: {url!r}")
        index_path = self.pages_dir / "index.json"
        index = json.loads(index_path.read_text(encoding="utf-8")) if index_path.exists() else {}
        entry = index.get(url)
        if entry is None:
            raise FetchFailure(404, f"no fixture page for {url!r}")
        if "status" in entry and entry["status"] != 200:
            raise FetchFailure(int(entry["status"]))
        html = (self.pages_dir / entry["file"]).read_text(encoding="utf-8")
        return extract_page_text(html)


class HttpReadingAdapter:
    """Reader-proxy style fetch: GET <prefix><url>, body is the extracted text."""

    def __init__(self, prefix: str, timeout: float = 30.0, transport=None):
        self.prefix = prefix
        self._client = httpx.Client(timeout=timeout, transport=transport, follow_redirects=True)

    def read(self, url: str) -> Dict[str, str]:
        if not self.prefix:
            raise AdapterUnconfigured("web_reading has no reader endpoint configured")
        if not _valid_url(url):
            raise InvalidUrl(f"not an absolute http(s) url: {url!r}")
        response = self._client.get(self.prefix + url)
        if response.status_code >= 400:
            raise FetchFailure(response.status_code)
        return {"content_text": response.text, "title": ""}


class UnconfiguredReadingAdapter:
    def read(self, url: str) -> Dict[str, str]:
        if not _valid_url(url):
            raise InvalidUrl(f"not an absolute http(s) url: {url!r}")
        raise AdapterUnconfigured("web_reading adapter is not configured (set a fixture corpus or an endpoint)")


# -- shell ---------------------------------------------------------------------


def _cap_stream(data: bytes) -> str:
    text = data.decode("utf-8", errors="replace")
    if len(data) > STREAM_CAP:
        text = data[:STREAM_CAP].decode("utf-8", errors="replace") + TRUNCATION_MARKER
    return text


class ShellAdapter:
    def __init__(self, rules: Optional[SafetyRules] = None, timeout: float = 120.0):
        self.rules = rules or default_rules()
        self.timeout = timeout

    def run(self, command: str, cwd: Path, workspace_root: Path) -> Dict[str, object]:
        verdict = self.rules.check(command)
        if verdict.denied:
            raise SafetyDenied(verdict.rule or "", verdict.fragment or "")
        cwd = Path(cwd).resolve()
        root = Path(workspace_root).resolve()
        if not (cwd == root or root in cwd.parents):
            raise CwdOutsideWorkspace(f"cwd {cwd} is outside the workspace {root}")
        if not cwd.is_dir():
            raise ExecFailure(f"cwd does not exist: {cwd}")
        try:
            proc = subprocess.run(
                command,
                shell=True,
                cwd=str(cwd),
                capture_output=True,
                timeout=self.timeout,
            )
        except subprocess.TimeoutExpired:
            raise ExecFailure(f"command timed out after {self.timeout}s")
        except OSError as exc:
            raise ExecFailure(f"command could not be executed: {exc}")
        return {
            "exit_code": proc.returncode,
            "stdout": _cap_stream(proc.stdout),
            "stderr": _cap_stream(proc.stderr),
        }


# -- browser --------------------------------------------------------------------


class StubBrowserAdapter:
    """Records requested actions and reports NotImplemented.

    The real driver is an extension point: anything exposing
    run(action_script) -> {"status", "observations"} can replace this.
    """

    def __init__(self):
        self.actions: List[dict] = []

    def run(self, action_script: dict) -> Dict[str, object]:
        self.actions.append(action_script)
        return {"status": "NotImplemented", "observations": []}


# -- toolset --------------------------------------------------------------------


class ToolSet:
    """Dispatch table from tool-skill names to adapter calls."""

    def __init__(self, search, reading, shell: ShellAdapter, browser):
        self.search = search
        self.reading = reading
        self.shell = shell
        self.browser = browser

    @classmethod
    def from_config(cls, config) -> "ToolSet":
        corpus = config.fixtures_dir
        if corpus and (Path(corpus) / "search").exists():
            search = FixtureSearchAdapter(Path(corpus) / "search")
        elif config.search_url and config.search_key:
            search = HttpSearchAdapter(config.search_url, config.search_key)
        else:
            search = UnconfiguredSearchAdapter()
        if corpus and (Path(corpus) / "pages").exists():
            reading = FixtureReadingAdapter(Path(corpus) / "pages")
        elif config.reader_url:
            reading = HttpReadingAdapter(config.reader_url)
        else:
            reading = UnconfiguredReadingAdapter()
        shell = ShellAdapter(rules=config.safety_rules(), timeout=config.shell_timeout)
        return cls(search=search, reading=reading, shell=shell, browser=StubBrowserAdapter())

    def invoke(self, tool: str, args: dict, workspace_root: Path, default_cwd: Path) -> dict:
        if tool == "web_search":
            results = self.search.search(
                query=str(args.get("query", "")), max_results=int(args.get("max_results", 5))
            )
            return {"results": results}
        if tool == "web_reading":
            return self.reading.read(url=str(args.get("url", "")))
        if tool == "shell_command":
            raw_cwd = args.get("cwd")
            cwd = Path(default_cwd) if raw_cwd in (None, "") else Path(str(raw_cwd))
            if not cwd.is_absolute():
                cwd = Path(default_cwd) / cwd
            return dict(self.shell.run(str(args.get("command", "")), cwd, workspace_root))
        if tool == "browser_automation":
            script = args.get("action_script", args)
            return dict(self.browser.run(script if isinstance(script, dict) else {"action": script}))
        raise ExecFailure(f"no adapter for tool {tool!r}")
