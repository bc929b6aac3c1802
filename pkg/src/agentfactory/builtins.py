"""Static declarations of the built-in meta and tool skills.

These are fixed for the lifetime of a runtime: they live in code, not on
disk, and the registry refuses to version or overwrite them.
"""

from __future__ import annotations

from typing import Dict

from .manifest import SkillKind, SkillManifest, SkillParameter, SkillReturns
from .registry_types import SkillRecord


def _skill(kind: SkillKind, name: str, description: str, params, returns: SkillReturns, usage: str) -> SkillRecord:
    manifest = SkillManifest(
        name=name,
        description=description,
        parameters=params,
        returns=returns,
        usage=usage,
        version=1,
    )
    return SkillRecord(kind=kind, manifest=manifest, code="", tool_grants=[], versions=[])


def _p(name: str, type_: str, required: bool, description: str) -> SkillParameter:
    return SkillParameter(name=name, type=type_, required=required, description=description)


META_SKILLS = [
    _skill(
        SkillKind.META,
        "create_subagent",
        "Draft a new subagent in the task workspace.\nThe draft is an executable script plus its manifest, with an explicit allow-list of\ntool skills it may call.",
        [
            _p("name", "identifier", True, "unique lowercase skill name"),
            _p("code", "source", True, "the subagent script"),
            _p("tool_grants", "list[identifier]", False, "tool skills the subagent may call"),
            _p("manifest", "object", True, "description, parameters, returns, usage"),
        ],
        SkillReturns("text", "confirmation that the subagent is staged"),
        'Stage a drafted helper before running it:\n{"action": "create_subagent", "args": {"name": "csv-summarizer", "code": "...", "tool_grants": ["shell_command"], "manifest": {...}}}',
    ),
    _skill(
        SkillKind.META,
        "get_skill_description",
        "Fetch the full manifest text of any registered skill.\nIncludes parameter and return documentation.",
        [_p("name", "identifier", True, "skill to describe")],
        SkillReturns("text", "the skill's rendered manifest document"),
        '{"action": "get_skill_description", "args": {"name": "web_search"}}',
    ),
    _skill(
        SkillKind.META,
        "run_subagent",
        "Execute a staged or saved subagent as a supervised child process.\nReturns its result payload, or a structured failure description the loop can act on.",
        [
            _p("name", "identifier", True, "subagent to run"),
            _p("query", "text", True, "the assignment passed to the subagent"),
        ],
        SkillReturns("text", "result payload on success, failure details otherwise"),
        '{"action": "run_subagent", "args": {"name": "csv-summarizer", "query": "summarize out/data.csv"}}',
    ),
    _skill(
        SkillKind.META,
        "modify_subagent",
        "Stage an improved copy of an existing subagent.\nThe saved library is untouched until the task finishes and the modification is\npromoted.",
        [
            _p("name", "identifier", True, "subagent to modify"),
            _p("code", "source", True, "the full replacement script"),
            _p("manifest", "object", True, "updated manifest payload"),
            _p("reason", "text", True, "why the change was needed"),
        ],
        SkillReturns("text", "confirmation that the modified copy is staged"),
        '{"action": "modify_subagent", "args": {"name": "csv-summarizer", "code": "...", "manifest": {...}, "reason": "handle quoted fields"}}',
    ),
    _skill(
        SkillKind.META,
        "finish",
        "Complete the task and optionally persist staged subagents.\nOnly the named staged skills are promoted into the persistent library.",
        [
            _p("answer", "text", True, "final answer for the user"),
            _p("skills_to_save", "list[identifier]", False, "staged subagents to persist"),
        ],
        SkillReturns("object", "task result with saved skills and token total"),
        '{"action": "finish", "args": {"answer": "done", "skills_to_save": ["csv-summarizer"]}}',
    ),
    _skill(
        SkillKind.META,
        "list_saved_subagents",
        "List every subagent saved in the persistent library.\nEach entry carries the name, head version, and a one-line description.",
        [],
        SkillReturns("list[object]", "saved subagent summaries, sorted by name"),
        '{"action": "list_saved_subagents", "args": {}}',
    ),
    _skill(
        SkillKind.META,
        "view_subagent_code",
        "Read the head-version source of a saved subagent.\nUseful for reuse assessment or as the starting point of a modification.",
        [_p("name", "identifier", True, "subagent to inspect")],
        SkillReturns("source", "the head-version script, verbatim"),
        '{"action": "view_subagent_code", "args": {"name": "csv-summarizer"}}',
    ),
]

TOOL_SKILLS = [
    _skill(
        SkillKind.TOOL,
        "web_search",
        "Query the web and return ranked result entries (title, url, snippet).",
        [
            _p("query", "text", True, "search terms"),
            _p("max_results", "count", False, "maximum entries to return (default 5)"),
        ],
        SkillReturns("list[object]", "entries with title, url, and snippet fields"),
        'call_tool("web_search", {"query": "population of Japan", "max_results": 3})',
    ),
    _skill(
        SkillKind.TOOL,
        "web_reading",
        "Fetch a web page and extract its main text content and title.",
        [_p("url", "text", True, "absolute http(s) URL to read")],
        SkillReturns("object", "content_text and title fields"),
        'call_tool("web_reading", {"url": "https://example.org/article"})',
    ),
    _skill(
        SkillKind.TOOL,
        "browser_automation",
        "Drive a browser through a structured action script.\nThe default adapter is a recording stub that returns NotImplemented; a real\ndriver can be plugged in.",
        [_p("action_script", "object", True, "structured browser actions to perform")],
        SkillReturns("object", "status and observations fields"),
        'call_tool("browser_automation", {"action": "open", "url": "https://example.org"})',
    ),
    _skill(
        SkillKind.TOOL,
        "shell_command",
        "Run a shell command inside the task workspace.\nCommands are screened against a deny-rule policy first; destructive operations\nare refused.",
        [
            _p("command", "text", True, "the command line to execute"),
            _p("cwd", "path", False, "working directory, inside the workspace (default: out/)"),
        ],
        SkillReturns("object", "exit_code, stdout, and stderr fields"),
        'call_tool("shell_command", {"command": "ls -la"})',
    ),
]


def builtin_records() -> Dict[str, SkillRecord]:
    records = {}
    for record in META_SKILLS + TOOL_SKILLS:
        records[record.manifest.name] = record
    return records


TOOL_SKILL_NAMES = tuple(r.manifest.name for r in TOOL_SKILLS)
META_SKILL_NAMES = tuple(r.manifest.name for r in META_SKILLS)
