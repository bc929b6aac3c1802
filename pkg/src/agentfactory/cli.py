"""Operator CLI.

A thin client over the service API. By default each invocation hosts the
app in-process (no daemon to manage); point --server / AF_SERVER at a
running instance to talk to a shared runtime instead.

Exit codes: 0 success, 1 task- or skill-level failure, 2 configuration or
usage failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path
from typing import Optional

import httpx

from .config import build_config
from .errors import ConfigError

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="agentfactory",
        description="Run tasks, inspect the skill library, export bundles, and report tokens.",
    )
    parser.add_argument("--library", help="skill library directory")
    parser.add_argument("--state", help="state directory (workspaces live here)")
    parser.add_argument("--backend", choices=["http", "replay"], help="LLM backend kind")
    parser.add_argument("--backend-url", dest="backend_url", help="chat endpoint for the http backend")
    parser.add_argument("--replay", help="replay script file for the replay backend")
    parser.add_argument("--model", help="model identifier")
    parser.add_argument("--step-limit", dest="step_limit", type=int, help="max meta steps per task")
    parser.add_argument("--fixtures", help="tool fixture corpus directory")
    parser.add_argument("--config", help="config file (flat key = value)")
    parser.add_argument("--server", help="URL of a running service (default: in-process)")
    parser.add_argument("--json", action="store_true", help="machine-readable output")

    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a task")
    run.add_argument("query")
    run.add_argument("--task-id", dest="task_id")
    run.add_argument("--dry-plan", action="store_true", help="print the skill listing shown to the orchestrator; no LLM call")

    skills = sub.add_parser("skills", help="inspect the skill library")
    skills_sub = skills.add_subparsers(dest="skills_command", required=True)
    skills_sub.add_parser("list", help="list saved subagents and built-ins")
    show = skills_sub.add_parser("show", help="print a skill's manifest document")
    show.add_argument("name")
    code = skills_sub.add_parser("code", help="print a saved subagent's head-version script")
    code.add_argument("name")

    export = sub.add_parser("export", help="export saved subagents as a standalone bundle")
    export.add_argument("names", nargs="+")
    export.add_argument("--dest", required=True)
    export.add_argument("--reproducible", action="store_true")
    export.add_argument("--verify", action="store_true")

    evalp = sub.add_parser("eval", help="run a scripted batch and report orchestration tokens")
    evalp.add_argument("manifest")
    evalp.add_argument("--report", default="eval_report.json")
    return parser


class _Client:
    """Uniform .get/.post over a remote server or an in-process app."""

    def __init__(self, args):
        server = args.server or os.environ.get("AF_SERVER", "")
        if server:
            self._client = httpx.Client(base_url=server, timeout=300.0)
        else:
            config = build_config(
                flags={
                    "library": args.library,
                    "state": args.state,
                    "backend": args.backend,
                    "backend_url": args.backend_url,
                    "replay": args.replay,
                    "model": args.model,
                    "step_limit": args.step_limit,
                    "fixtures": args.fixtures,
                },
                config_file=Path(args.config) if args.config else None,
            )
            import warnings

            with warnings.catch_warnings():
                # some starlette builds warn about their test transport's httpx pin;
                # irrelevant to this in-process client
                warnings.filterwarnings("ignore", message=r"Using `httpx` with `starlette.testclient`")
                from fastapi.testclient import TestClient

            from .service import create_app

            self._client = TestClient(create_app(config), raise_server_exceptions=False)

    def get(self, path: str):
        return self._client.get(path)

    def post(self, path: str, payload: dict):
        return self._client.post(path, json=payload)


def _error_exit(response) -> int:
    try:
        body = response.json()
    except json.JSONDecodeError:
        body = {}
    error = body.get("error") or {}
    message = error.get("message") or body.get("detail") or response.text
    print(f"error: {message}", file=sys.stderr)
    if error.get("type") == "ConfigError":
        return EXIT_CONFIG
    return EXIT_FAILURE


def _cmd_run(client: _Client, args) -> int:
    if args.dry_plan:
        response = client.post("/tasks/dry-plan", {"query": args.query})
        if response.status_code != 200:
            return _error_exit(response)
        listing = response.json()["listing"]
        print(json.dumps(response.json()) if args.json else listing)
        return EXIT_OK
    payload = {"query": args.query}
    if args.task_id:
        payload["task_id"] = args.task_id
    if args.replay:
        # forwarded for remote servers; the path must be readable server-side
        payload["replay_path"] = str(Path(args.replay).resolve())
    response = client.post("/tasks/run", payload)
    if response.status_code != 200:
        return _error_exit(response)
    result = response.json()
    if args.json:
        print(json.dumps(result, indent=2))
    else:
        print(f"task: {result['task_id']}")
        print(f"outcome: {result['outcome']}")
        if result.get("answer"):
            print(f"answer: {result['answer']}")
        saved = ", ".join(f"{s['name']} v{s['version']}" for s in result.get("saved_skills", []))
        print(f"saved skills: {saved or '(none)'}")
        for skipped in result.get("skipped_skills", []):
            print(f"skipped: {skipped['name']} ({skipped['reason']})")
        print(f"orchestration tokens: {result.get('orchestration_tokens', 0)}")
        if result.get("error"):
            print(f"error: {result['error']}", file=sys.stderr)
    return EXIT_OK if result["outcome"] == "completed" else EXIT_FAILURE


def _cmd_skills(client: _Client, args) -> int:
    if args.skills_command == "list":
        response = client.get("/skills")
        if response.status_code != 200:
            return _error_exit(response)
        data = response.json()
        if args.json:
            print(json.dumps(data, indent=2))
            return EXIT_OK
        print("Saved subagents:")
        if data["subagents"]:
            for s in data["subagents"]:
                print(f"  {s['name']} (v{s['version']}): {s['description']}")
        else:
            print("  (none)")
        print("Built-in skills:")
        for s in data["builtins"]:
            print(f"  [{s['kind']}] {s['name']}: {s['description']}")
        return EXIT_OK
    name = args.name
    path = f"/skills/{name}" if args.skills_command == "show" else f"/skills/{name}/code"
    response = client.get(path)
    if response.status_code != 200:
        return _error_exit(response)
    body = response.json()
    if args.json:
        print(json.dumps(body, indent=2))
    else:
        sys.stdout.write(body["skill_md"] if args.skills_command == "show" else body["code"])
    return EXIT_OK


def _cmd_export(client: _Client, args) -> int:
    response = client.post(
        "/export",
        {
            "names": args.names,
            "dest": str(Path(args.dest).resolve()),
            "reproducible": args.reproducible,
            "verify": args.verify,
        },
    )
    if response.status_code != 200:
        return _error_exit(response)
    body = response.json()
    if args.json:
        print(json.dumps(body, indent=2))
    else:
        print(f"bundle: {body['bundle_dir']}")
        for entry in body["skills"]:
            print(f"  {entry['name']} v{entry['version']} -> {entry['entry']}")
        if args.verify:
            print(f"verified: {'pass' if body['verified'] else 'FAIL'}")
    if args.verify and not body["verified"]:
        return EXIT_FAILURE
    return EXIT_OK


def _cmd_eval(client: _Client, args) -> int:
    response = client.post(
        "/eval",
        {
            "manifest_path": str(Path(args.manifest).resolve()),
            "report_path": str(Path(args.report).resolve()),
        },
    )
    if response.status_code != 200:
        return _error_exit(response)
    report = response.json()
    if args.json:
        print(json.dumps(report, indent=2))
    else:
        for mode, stats in report["modes"].items():
            per_task = ", ".join(str(n) for n in stats["per_task"]) or "-"
            print(f"{mode}: per-task [{per_task}] mean {stats['mean']:.1f}")
        print(f"report written: {args.report}")
    return EXIT_OK


def main(argv: Optional[list] = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        client = _Client(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        if args.command == "run":
            return _cmd_run(client, args)
        if args.command == "skills":
            return _cmd_skills(client, args)
        if args.command == "export":
            return _cmd_export(client, args)
        if args.command == "eval":
            return _cmd_eval(client, args)
    except httpx.HTTPError as exc:
        print(f"error: could not reach the service: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    parser.error(f"unknown command {args.command!r}")
    return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
