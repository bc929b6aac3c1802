"""Shared builders for tests: fixture subagent scripts, replay scripts, oracles."""

from __future__ import annotations

import hashlib
import json
import textwrap
from pathlib import Path

from agentfactory.gateway import ReplayEntry
from agentfactory.manifest import (
    SkillKind,
    SkillManifest,
    SkillParameter,
    SkillReturns,
)
from agentfactory.registry_types import SkillRecord

# --- raw-protocol fixture scripts (no SDK dependency) ---------------------------

RAW_PRELUDE = textwrap.dedent(
    '''
    import json, sys

    def send(obj):
        sys.stdout.write(json.dumps(obj, separators=(",", ":")) + "\\n")
        sys.stdout.flush()

    def read():
        line = sys.stdin.readline()
        if not line:
            raise SystemExit(9)
        return json.loads(line)

    query_msg = read()
    assert query_msg["verb"] == "query", query_msg
    query = query_msg["payload"]
    '''
).strip()

RAW_ECHO = RAW_PRELUDE + '\nsend({"verb": "result", "payload": {"echo": query}})\n'

RAW_SLEEPER = RAW_PRELUDE + '\nimport time\ntime.sleep(30)\nsend({"verb": "result", "payload": {"slept": True}})\n'

RAW_CRASHER = RAW_PRELUDE + '\nprint("deliberate failure: boom", file=sys.stderr)\nraise SystemExit(3)\n'

RAW_POLLUTER = RAW_PRELUDE + '\nprint("this is not an envelope")\nsend({"verb": "result", "payload": {"ok": True}})\n'

RAW_NO_RESULT = RAW_PRELUDE + "\nraise SystemExit(0)\n"

RAW_DOUBLE_RESULT = (
    RAW_PRELUDE
    + '\nsend({"verb": "result", "payload": 1})\nsend({"verb": "result", "payload": 2})\n'
)

RAW_UNGRANTED = RAW_PRELUDE + textwrap.dedent(
    '''
    send({"id": 1, "verb": "tool_call", "tool": "web_search", "args": {"query": "anything", "max_results": 1}})
    resp = read()
    if not resp["ok"]:
        print("denied: " + resp["payload"]["error"], file=sys.stderr)
        raise SystemExit(3)
    send({"verb": "result", "payload": resp["payload"]})
    '''
)


def raw_tool_caller(tool: str, args: dict) -> str:
    return RAW_PRELUDE + textwrap.dedent(
        f'''
        send({{"id": 1, "verb": "tool_call", "tool": {json.dumps(tool)}, "args": {json.dumps(args)}}})
        resp = read()
        if not resp["ok"]:
            print("tool failed: " + json.dumps(resp["payload"]), file=sys.stderr)
            raise SystemExit(4)
        send({{"verb": "result", "payload": resp["payload"]}})
        '''
    )


def raw_llm_caller(content: str) -> str:
    return RAW_PRELUDE + textwrap.dedent(
        f'''
        send({{"id": 1, "verb": "llm_call", "args": {{"messages": [{{"role": "user", "content": {json.dumps(content)}}}]}}}})
        resp = read()
        if not resp["ok"]:
            print("llm failed: " + json.dumps(resp["payload"]), file=sys.stderr)
            raise SystemExit(4)
        send({{"verb": "result", "payload": {{"completion": resp["payload"]["completion"]}}}})
        '''
    )


# readme-generator evolution chain: hardcoded -> naive last-token parse -> regex.
README_GEN_V1 = RAW_PRELUDE + textwrap.dedent(
    '''
    project = "alpha"
    if project not in query:
        print("hardcoded for project alpha; cannot handle: " + query, file=sys.stderr)
        raise SystemExit(2)
    send({"verb": "result", "payload": {"project": project, "readme": "# alpha\\n\\nGenerated readme."}})
    '''
)

README_GEN_V2 = RAW_PRELUDE + textwrap.dedent(
    '''
    token = query.split()[-1].strip(".,!?")
    if ("project " + token) not in query:
        print("naive parse picked " + repr(token) + " which is not the project", file=sys.stderr)
        raise SystemExit(2)
    send({"verb": "result", "payload": {"project": token, "readme": "# " + token + "\\n\\nGenerated readme."}})
    '''
)

README_GEN_V3 = RAW_PRELUDE + textwrap.dedent(
    '''
    import re
    match = re.search(r"project\\s+([a-z0-9_-]+)", query)
    if not match:
        print("no project name found in: " + query, file=sys.stderr)
        raise SystemExit(2)
    project = match.group(1)
    send({"verb": "result", "payload": {"project": project, "readme": "# " + project + "\\n\\nGenerated readme."}})
    '''
)

SDK_ECHO = textwrap.dedent(
    '''
    import af_sdk

    query = af_sdk.read_query()
    af_sdk.log("echoing query")
    af_sdk.report_result({"echo": query})
    '''
).strip()


def sdk_tool_caller(tool: str, args: dict) -> str:
    return textwrap.dedent(
        f'''
        import af_sdk

        query = af_sdk.read_query()
        payload = af_sdk.call_tool({json.dumps(tool)}, {json.dumps(args)})
        af_sdk.report_result(payload)
        '''
    ).strip()


def sdk_llm_caller(content: str) -> str:
    return textwrap.dedent(
        f'''
        import af_sdk

        query = af_sdk.read_query()
        completion = af_sdk.call_llm([{{"role": "user", "content": {json.dumps(content)}}}])
        af_sdk.report_result({{"completion": completion}})
        '''
    ).strip()


# --- manifests -----------------------------------------------------------------


def manifest_payload(description: str, usage: str = "", params=None, returns=None) -> dict:
    return {
        "description": description,
        "parameters": params
        or [{"name": "query", "type": "text", "required": True, "description": "the assignment"}],
        "returns": returns or {"type": "object", "description": "result payload"},
        "usage": usage or "pass the assignment as the query text.",
    }


def make_manifest(name: str, description: str = "", version: int = 1, usage: str = "") -> SkillManifest:
    return SkillManifest(
        name=name,
        description=description or f"Fixture skill {name}.",
        parameters=[SkillParameter("query", "text", True, "the assignment")],
        returns=SkillReturns("object", "result payload"),
        usage=usage or "pass the assignment as the query text.",
        version=version,
    )


def make_record(name: str, code: str = RAW_ECHO, grants=None, **kwargs) -> SkillRecord:
    return SkillRecord(
        kind=SkillKind.SUBAGENT,
        manifest=make_manifest(name, **kwargs),
        code=code,
        tool_grants=list(grants or []),
    )


# --- replay building ----------------------------------------------------------------


def fenced_action(action: str, args: dict, prose: str = "Proceeding.") -> str:
    return f"{prose}\n```json\n" + json.dumps({"action": action, "args": args}) + "\n```\n"


def entry(matcher: str, completion: str, output_tokens: int = 10, **kwargs) -> ReplayEntry:
    return ReplayEntry(matcher=matcher, completion=completion, output_tokens=output_tokens, **kwargs)


def dump_replay(entries, path: Path) -> Path:
    payload = {
        "entries": [
            {
                "expected_prompt_matcher": e.matcher,
                "completion": e.completion,
                "output_tokens": e.output_tokens,
                "input_tokens": e.input_tokens,
                "regex": e.regex,
            }
            for e in entries
        ]
    }
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2), encoding="utf-8")
    return path


def install_audio_entries():
    """Two subagents created, both run, both saved (the audio-and-music flow)."""
    transcriber_code = sdk_tool_caller("shell_command", {"command": "echo transcript of meeting.wav"})
    player_code = textwrap.dedent(
        '''
        import af_sdk

        query = af_sdk.read_query()
        af_sdk.report_result({"status": "playing", "source": query})
        '''
    ).strip()
    return [
        entry(
            "Task: Transcribe the audio file",
            fenced_action(
                "create_subagent",
                {
                    "name": "audio-transcriber",
                    "code": transcriber_code,
                    "tool_grants": ["shell_command"],
                    "manifest": manifest_payload(
                        "Transcribe an audio file to text.",
                        usage='run_subagent("audio-transcriber", "<audio path>")',
                    ),
                },
            ),
            output_tokens=120,
        ),
        entry(
            "Staged subagent 'audio-transcriber'",
            fenced_action(
                "create_subagent",
                {
                    "name": "qq-music-player",
                    "code": player_code,
                    "tool_grants": [],
                    "manifest": manifest_payload(
                        "Play a track through the music service.",
                        usage='run_subagent("qq-music-player", "<track>")',
                    ),
                },
            ),
            output_tokens=110,
        ),
        entry(
            "Staged subagent 'qq-music-player'",
            fenced_action("run_subagent", {"name": "audio-transcriber", "query": "meeting.wav"}),
            output_tokens=40,
        ),
        entry(
            "'audio-transcriber' succeeded",
            fenced_action("run_subagent", {"name": "qq-music-player", "query": "the transcribed request"}),
            output_tokens=40,
        ),
        entry(
            "'qq-music-player' succeeded",
            fenced_action(
                "finish",
                {"answer": "Transcribed the audio and played the track.", "skills_to_save": ["audio-transcriber", "qq-music-player"]},
            ),
            output_tokens=35,
        ),
    ]


def evolve_task_a_entries():
    return [
        entry(
            "Task: generate a readme for project alpha",
            fenced_action(
                "create_subagent",
                {
                    "name": "readme-generator",
                    "code": README_GEN_V1,
                    "tool_grants": [],
                    "manifest": manifest_payload(
                        "Generate a README for a project.",
                        usage='run_subagent("readme-generator", "generate a readme for project <name>")',
                    ),
                },
            ),
            output_tokens=100,
        ),
        entry(
            "Staged subagent 'readme-generator'",
            fenced_action("run_subagent", {"name": "readme-generator", "query": "generate a readme for project alpha"}),
            output_tokens=40,
        ),
        entry(
            "'readme-generator' succeeded",
            fenced_action("finish", {"answer": "Readme generated.", "skills_to_save": ["readme-generator"]}),
            output_tokens=30,
        ),
    ]


def evolve_task_b_entries():
    return [
        entry("Task: generate a readme for project beta", fenced_action("list_saved_subagents", {}), output_tokens=20),
        entry(
            "readme-generator",
            fenced_action("run_subagent", {"name": "readme-generator", "query": "generate a readme for project beta"}),
            output_tokens=30,
        ),
        entry(
            "'readme-generator' failed",
            fenced_action("view_subagent_code", {"name": "readme-generator"}),
            output_tokens=20,
        ),
        entry(
            'project = "alpha"',
            fenced_action(
                "modify_subagent",
                {
                    "name": "readme-generator",
                    "code": README_GEN_V2,
                    "manifest": manifest_payload(
                        "Generate a README for a project.",
                        usage='run_subagent("readme-generator", "generate a readme for project <name>")',
                    ),
                    "reason": "parse the project name from the query instead of hardcoding it",
                },
            ),
            output_tokens=90,
        ),
        entry(
            "Staged modified subagent 'readme-generator' as version 2",
            fenced_action("run_subagent", {"name": "readme-generator", "query": "generate a readme for project beta"}),
            output_tokens=30,
        ),
        entry(
            "'readme-generator' succeeded",
            fenced_action("finish", {"answer": "Readme generated for beta.", "skills_to_save": ["readme-generator"]}),
            output_tokens=25,
        ),
    ]


def evolve_task_c_entries():
    return [
        entry("Task: project gamma needs a readme", fenced_action("list_saved_subagents", {}), output_tokens=20),
        entry(
            "readme-generator",
            fenced_action("run_subagent", {"name": "readme-generator", "query": "project gamma needs a readme"}),
            output_tokens=30,
        ),
        entry(
            "'readme-generator' failed",
            fenced_action("view_subagent_code", {"name": "readme-generator"}),
            output_tokens=20,
        ),
        entry(
            "query.split()",
            fenced_action(
                "modify_subagent",
                {
                    "name": "readme-generator",
                    "code": README_GEN_V3,
                    "manifest": manifest_payload(
                        "Generate a README for a project.",
                        usage='run_subagent("readme-generator", "... project <name> ...")',
                    ),
                    "reason": "extract the project name with a regular expression",
                },
            ),
            output_tokens=85,
        ),
        entry(
            "Staged modified subagent 'readme-generator' as version 3",
            fenced_action("run_subagent", {"name": "readme-generator", "query": "project gamma needs a readme"}),
            output_tokens=30,
        ),
        entry(
            "'readme-generator' succeeded",
            fenced_action("finish", {"answer": "Readme generated for gamma.", "skills_to_save": ["readme-generator"]}),
            output_tokens=25,
        ),
    ]


def scratch_task_entries(index: int):
    """A from-scratch task: create a helper (expensive), exercise it, save it."""
    name = f"data-fetcher-{index}"
    code = raw_llm_caller(f"summarize dataset {index}")
    return [
        entry(
            f"Task: fetch and summarize dataset {index}",
            fenced_action(
                "create_subagent",
                {
                    "name": name,
                    "code": code,
                    "tool_grants": [],
                    "manifest": manifest_payload(
                        f"Fetch and summarize dataset {index}.",
                        usage=f'run_subagent("{name}", "dataset {index}")',
                    ),
                },
            ),
            output_tokens=700 + 50 * index,
        ),
        entry(
            f"Staged subagent '{name}'",
            fenced_action("run_subagent", {"name": name, "query": f"dataset {index}"}),
            output_tokens=80,
        ),
        # The subagent's own llm call: attributed to the subagent, not the orchestrator.
        entry(f"summarize dataset {index}", f"Summary of dataset {index}: values trend upward.", output_tokens=999),
        entry(
            f"'{name}' succeeded",
            fenced_action("finish", {"answer": f"dataset {index} summarized", "skills_to_save": [name]}),
            output_tokens=60,
        ),
    ]


def reuse_task_entries(index: int):
    """The mirrored with-saved task: discover, reuse, finish."""
    name = f"data-fetcher-{index}"
    return [
        entry(f"Task: fetch and summarize dataset {index}", fenced_action("list_saved_subagents", {}), output_tokens=30),
        entry(
            name,
            fenced_action("run_subagent", {"name": name, "query": f"dataset {index}"}),
            output_tokens=40,
        ),
        entry(f"summarize dataset {index}", f"Summary of dataset {index}: values trend upward.", output_tokens=999),
        entry(
            f"'{name}' succeeded",
            fenced_action("finish", {"answer": f"dataset {index} summarized from the library", "skills_to_save": []}),
            output_tokens=30,
        ),
    ]


# --- oracles -----------------------------------------------------------------------


def library_tree_hash(root: Path) -> str:
    """Recursive content hash of the library directory (lock files excluded)."""
    digest = hashlib.sha256()
    root = Path(root)
    if not root.exists():
        return digest.hexdigest()
    for path in sorted(root.rglob("*")):
        if path.name.endswith(".lock"):
            continue
        rel = str(path.relative_to(root))
        digest.update(rel.encode("utf-8"))
        if path.is_file():
            digest.update(b"\x00")
            digest.update(path.read_bytes())
    return digest.hexdigest()


def recompute_orchestration_tokens(history_path: Path) -> int:
    """Independent recomputation of the orchestration total from history.jsonl."""
    total = 0
    for line in Path(history_path).read_text(encoding="utf-8").splitlines():
        record = json.loads(line)
        if record.get("type") == "meta_step":
            continue
        if record.get("origin") == "orchestrator":
            total += int(record["output_tokens"])
    return total


def recompute_all_tokens(history_path: Path) -> int:
    total = 0
    for line in Path(history_path).read_text(encoding="utf-8").splitlines():
        record = json.loads(line)
        if record.get("type") == "meta_step":
            continue
        total += int(record["output_tokens"])
    return total
