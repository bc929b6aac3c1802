"""The orchestration loop.

One task execution: create a workspace, then repeatedly prompt the
orchestrator model with the task, the available skills, and the history;
parse exactly one meta-skill action from each completion; execute it; feed
the observation back. The loop ends on finish (promoting any skills the
model chose to save), on the step limit, or on an unrecoverable backend or
parse failure — in which case the workspace is discarded and the library
is untouched.

Subagent failures are not task failures: they come back as observations so
the model can inspect, modify, and retry.
"""

from __future__ import annotations

import json
import re
import uuid
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional

from .errors import (
    ActionParseFailure,
    AgentFactoryError,
    DuplicateStagedName,
    UnknownStagedSkill,
    UnknownSubagent,
    summarize,
)
from .gateway import ORCHESTRATOR, LLMGateway, LLMRequest, ReplayBackend, TaskLog
from .manifest import SkillManifest, manifest_from_payload
from .registry import SkillRegistry
from .runner import SubagentRunner, usage_timeout_override
from .workspace import Workspace, WorkspaceManager

FENCED_BLOCK_RE = re.compile(r"```(?:json)?\s*\n(.*?)```", re.DOTALL)

OBSERVATION_LIMIT = 8000


class MetaAction(str, Enum):
    CREATE_SUBAGENT = "create_subagent"
    GET_SKILL_DESCRIPTION = "get_skill_description"
    RUN_SUBAGENT = "run_subagent"
    MODIFY_SUBAGENT = "modify_subagent"
    FINISH = "finish"
    LIST_SAVED_SUBAGENTS = "list_saved_subagents"
    VIEW_SUBAGENT_CODE = "view_subagent_code"


class TaskOutcome(str, Enum):
    COMPLETED = "completed"
    FAILED = "failed"
    STEP_LIMIT = "step_limit"


@dataclass
class MetaStep:
    step_index: int
    action: MetaAction
    arguments: dict
    observation: str
    exchange_seq: int
    ok: bool = True


@dataclass
class ExecutionHistory:
    task_id: str
    steps: List[MetaStep] = field(default_factory=list)
    outcome: TaskOutcome = TaskOutcome.FAILED


@dataclass
class TaskResult:
    task_id: str
    outcome: TaskOutcome
    answer: str
    saved_skills: List[dict] = field(default_factory=list)   # {"name", "version"}
    skipped_skills: List[dict] = field(default_factory=list)
    orchestration_tokens: int = 0
    steps: int = 0
    error: str = ""


SYSTEM_PROMPT_TEMPLATE = """You are the orchestrator of a skill-building agent runtime. Decompose the task, \
reuse saved subagents when one fits, and create or modify subagents when none does. Subagents are \
executable scripts you write; each runs in an isolated workspace with only the tool skills you grant it.

Reply with exactly ONE action per turn as a single fenced JSON block, nothing else is interpreted:

```json
{{"action": "<action_name>", "args": {{...}}}}
```

Actions:
- create_subagent: args {{"name": str, "code": str, "tool_grants": [str], "manifest": {{"description": str, "parameters": [{{"name","type","required","description"}}], "returns": {{"type","description"}}, "usage": str}}}}
- run_subagent: args {{"name": str, "query": str}}
- modify_subagent: args {{"name": str, "code": str, "manifest": {{...}}, "reason": str}}
- get_skill_description: args {{"name": str}}
- list_saved_subagents: args {{}}
- view_subagent_code: args {{"name": str}}
- finish: args {{"answer": str, "skills_to_save": [str]}}

Subagent scripts use the af_sdk client library and communicate only through it:

    import af_sdk
    query = af_sdk.read_query()                      # the assignment text
    payload = af_sdk.call_tool("web_search", {{"query": query, "max_results": 5}})  # granted tools only
    answer = af_sdk.call_llm([{{"role": "user", "content": query}}])                 # reasoning if needed
    af_sdk.log("progress notes go to stderr")
    af_sdk.report_result({{"answer": answer}})         # exactly once, at the end

Never print to stdout directly. Created and modified subagents are staged in the workspace; only \
the names you pass to finish's skills_to_save are saved to the persistent library.

{listing}"""


def render_skill_listing(registry: SkillRegistry) -> str:
    """The skills section shown to the orchestrator (and to --dry-plan)."""
    lines = ["Tool skills a subagent may be granted:"]
    for summary in registry.builtin_summaries():
        if summary.kind.value == "tool":
            lines.append(f"- {summary.name}: {summary.description}")
    lines.append("")
    lines.append("Saved subagents:")
    saved = registry.list_saved_subagents()
    if saved:
        for s in saved:
            lines.append(f"- {s.name} (v{s.version}): {s.description}")
    else:
        lines.append("- (none)")
    return "\n".join(lines)


def parse_action_block(completion: str) -> tuple:
    """Extract the single {"action", "args"} object from a completion.

    Raises ActionParseFailure describing what was wrong; the loop turns that
    into a corrective re-prompt.
    """
    candidates = []
    for block in FENCED_BLOCK_RE.findall(completion):
        try:
            data = json.loads(block)
        except json.JSONDecodeError:
            continue
        if isinstance(data, dict) and "action" in data:
            candidates.append(data)
    if not candidates:
        raise ActionParseFailure("no fenced JSON action block found in the reply")
    if len(candidates) > 1:
        raise ActionParseFailure(f"expected exactly one action block, found {len(candidates)}")
    data = candidates[0]
    try:
        action = MetaAction(data["action"])
    except ValueError:
        raise ActionParseFailure(f"unknown action {data['action']!r}")
    args = data.get("args", {})
    if not isinstance(args, dict):
        raise ActionParseFailure("args must be a JSON object")
    return action, args


class MetaAgent:
    def __init__(
        self,
        registry: SkillRegistry,
        workspaces: WorkspaceManager,
        gateway: LLMGateway,
        runner: SubagentRunner,
        config,
    ):
        self.registry = registry
        self.workspaces = workspaces
        self.gateway = gateway
        self.runner = runner
        self.config = config
        self._run_counts: dict = {}

    # -- the loop -----------------------------------------------------------------

    def run_task(
        self,
        query: str,
        task_id: Optional[str] = None,
        replay_backend: Optional[ReplayBackend] = None,
        step_limit: Optional[int] = None,
    ) -> TaskResult:
        task_id = task_id or f"task-{uuid.uuid4().hex[:8]}"
        limit = step_limit or self.config.step_limit
        workspace = self.workspaces.create_workspace(task_id)
        log = TaskLog(task_id, workspace.history_path, workspace.out_dir / "exchanges")
        self.gateway.bind_task(task_id, log, backend=replay_backend)
        history = ExecutionHistory(task_id=task_id)
        self._run_counts: dict = {}

        system_prompt = SYSTEM_PROMPT_TEMPLATE.format(listing=render_skill_listing(self.registry))
        messages = [
            {"role": "system", "content": system_prompt},
            {"role": "user", "content": f"Task: {query}"},
        ]

        try:
            for step_index in range(1, limit + 1):
                action, args, exchange = self._next_action(messages, task_id)
                messages.append({"role": "assistant", "content": exchange.completion})
                if action is MetaAction.FINISH:
                    try:
                        result = self.finish(
                            workspace,
                            answer=str(args.get("answer", "")),
                            skills_to_save=[str(n) for n in args.get("skills_to_save", [])],
                        )
                    except AgentFactoryError as exc:
                        observation = f"Error: {summarize(exc)}"
                        self._record_step(history, log, step_index, action, args, observation, exchange.sequence, ok=False)
                        messages.append({"role": "user", "content": f"Observation: {observation}"})
                        continue
                    observation = self._finish_observation(result)
                    self._record_step(history, log, step_index, action, args, observation, exchange.sequence)
                    history.outcome = TaskOutcome.COMPLETED
                    result.orchestration_tokens = self.gateway.orchestration_token_total(task_id)
                    result.steps = len(history.steps)
                    self._history = history
                    return result

                observation, ok = self._execute_action(workspace, task_id, action, args)
                self._record_step(history, log, step_index, action, args, observation, exchange.sequence, ok=ok)
                messages.append({"role": "user", "content": f"Observation: {observation}"})

            history.outcome = TaskOutcome.STEP_LIMIT
            self.workspaces.discard(workspace)
            self._history = history
            return TaskResult(
                task_id=task_id,
                outcome=TaskOutcome.STEP_LIMIT,
                answer="",
                orchestration_tokens=self.gateway.orchestration_token_total(task_id),
                steps=len(history.steps),
                error=f"step limit of {limit} reached without finish",
            )
        except AgentFactoryError:
            history.outcome = TaskOutcome.FAILED
            self._history = history
            if self.workspaces.is_active(workspace):
                self.workspaces.discard(workspace)
            raise

    def last_history(self) -> Optional[ExecutionHistory]:
        return getattr(self, "_history", None)

    # -- meta skills -----------------------------------------------------------------

    def create_subagent(
        self,
        workspace: Workspace,
        name: str,
        code: str,
        tool_grants: List[str],
        manifest: SkillManifest,
    ) -> str:
        self.registry.resolve_tool_grants(tool_grants)
        if self.workspaces.is_staged(workspace, name):
            raise DuplicateStagedName(f"skill {name!r} is already staged; use modify_subagent to change it")
        manifest.validate()
        self.workspaces.stage_skill(workspace, name, code, manifest, tool_grants)
        return name

    def modify_subagent(
        self,
        workspace: Workspace,
        name: str,
        code: str,
        manifest_payload: dict,
        reason: str,
    ) -> int:
        staged = self.workspaces.is_staged(workspace, name)
        in_library = self.registry.has_saved_skill(name)
        if not staged and not in_library:
            raise UnknownSubagent(f"no staged or saved subagent named {name!r}")
        if staged:
            version = self.workspaces.load_staged(workspace, name).manifest.version
            grants = self.workspaces.load_staged(workspace, name).tool_grants
        else:
            record = self.registry.get_record(name)
            version = record.manifest.version + 1
            grants = record.tool_grants
        manifest = manifest_from_payload(name, dict(manifest_payload, version=version))
        new_grants = manifest_payload.get("tool_grants")
        if new_grants is not None:
            grants = [str(g) for g in new_grants]
            self.registry.resolve_tool_grants(grants)
        self.workspaces.stage_skill(
            workspace, name, code, manifest, grants, reason=reason, overwrite=True
        )
        return version

    def run_subagent(self, workspace: Workspace, task_id: str, name: str, query: str):
        if self.workspaces.is_staged(workspace, name):
            staged = self.workspaces.load_staged(workspace, name)
            code, grants, usage = staged.code, staged.tool_grants, staged.manifest.usage
        elif self.registry.has_saved_skill(name):
            record = self.registry.get_record(name)
            code, grants, usage = record.code, record.tool_grants, record.manifest.usage
        else:
            raise UnknownSubagent(f"no staged or saved subagent named {name!r}")
        run_index = self._run_counts.get(name, 0)
        self._run_counts[name] = run_index + 1
        return self.runner.execute(
            name=name,
            code=code,
            workspace=workspace,
            query=query,
            grants=grants,
            task_id=task_id,
            timeout=usage_timeout_override(usage),
            run_index=run_index,
        )

    def finish(self, workspace: Workspace, answer: str, skills_to_save: List[str]) -> TaskResult:
        staged = set(workspace.staged_skills)
        for name in skills_to_save:
            if name not in staged:
                raise UnknownStagedSkill(f"{name!r} is not staged in this workspace")
        promotion = self.workspaces.promote(workspace, skills_to_save)
        return TaskResult(
            task_id=workspace.task_id,
            outcome=TaskOutcome.COMPLETED,
            answer=answer,
            saved_skills=promotion.promoted,
            skipped_skills=promotion.skipped,
        )

    # -- internals ----------------------------------------------------------------------

    def _next_action(self, messages: List[dict], task_id: str):
        last_error = None
        for _attempt in range(self.config.parse_retries + 1):
            request = LLMRequest(
                messages=list(messages),
                model=self.config.model,
                max_output_tokens=self.config.max_output_tokens,
            )
            exchange = self.gateway.complete(request, ORCHESTRATOR, task_id)
            try:
                action, args = parse_action_block(exchange.completion)
                return action, args, exchange
            except ActionParseFailure as exc:
                last_error = exc
                messages.append({"role": "assistant", "content": exchange.completion})
                messages.append(
                    {
                        "role": "system",
                        "content": (
                            f"Your reply could not be executed: {exc}. Respond again with exactly one "
                            'fenced JSON block of the form {"action": "<name>", "args": {...}}.'
                        ),
                    }
                )
        raise ActionParseFailure(
            f"completion could not be parsed after {self.config.parse_retries} retries: {last_error}"
        )

    def _execute_action(self, workspace: Workspace, task_id: str, action: MetaAction, args: dict):
        try:
            if action is MetaAction.CREATE_SUBAGENT:
                name = str(args.get("name", ""))
                manifest = manifest_from_payload(name, args.get("manifest") or {}, version=1)
                self.create_subagent(
                    workspace,
                    name=name,
                    code=str(args.get("code", "")),
                    tool_grants=[str(g) for g in args.get("tool_grants", [])],
                    manifest=manifest,
                )
                return f"Staged subagent {name!r} (version 1); not yet in the library.", True
            if action is MetaAction.RUN_SUBAGENT:
                name = str(args.get("name", ""))
                outcome = self.run_subagent(workspace, task_id, name, str(args.get("query", "")))
                if outcome.success:
                    text = f"Subagent {name!r} succeeded. Result: {outcome.describe()}"
                else:
                    text = f"Subagent {name!r} failed: {outcome.describe()}"
                return text[:OBSERVATION_LIMIT], outcome.success
            if action is MetaAction.MODIFY_SUBAGENT:
                name = str(args.get("name", ""))
                version = self.modify_subagent(
                    workspace,
                    name=name,
                    code=str(args.get("code", "")),
                    manifest_payload=args.get("manifest") or {},
                    reason=str(args.get("reason", "")),
                )
                return f"Staged modified subagent {name!r} as version {version}; the library is unchanged until finish.", True
            if action is MetaAction.GET_SKILL_DESCRIPTION:
                return self.registry.get_skill_description(str(args.get("name", "")))[:OBSERVATION_LIMIT], True
            if action is MetaAction.LIST_SAVED_SUBAGENTS:
                summaries = self.registry.list_saved_subagents()
                if not summaries:
                    return "No saved subagents in the library.", True
                lines = [f"- {s.name} (v{s.version}): {s.description}" for s in summaries]
                return "Saved subagents:\n" + "\n".join(lines), True
            if action is MetaAction.VIEW_SUBAGENT_CODE:
                return self.registry.view_subagent_code(str(args.get("name", "")))[:OBSERVATION_LIMIT], True
        except AgentFactoryError as exc:
            return f"Error: {summarize(exc)}", False
        raise ActionParseFailure(f"unhandled action {action}")

    def _record_step(
        self,
        history: ExecutionHistory,
        log: TaskLog,
        step_index: int,
        action: MetaAction,
        args: dict,
        observation: str,
        exchange_seq: int,
        ok: bool = True,
    ) -> None:
        step = MetaStep(
            step_index=step_index,
            action=action,
            arguments=args,
            observation=observation,
            exchange_seq=exchange_seq,
            ok=ok,
        )
        history.steps.append(step)
        log.record_meta_step(step_index, action.value, args, observation, exchange_seq)

    @staticmethod
    def _finish_observation(result: TaskResult) -> str:
        saved = ", ".join(f"{s['name']} v{s['version']}" for s in result.saved_skills) or "none"
        skipped = ""
        if result.skipped_skills:
            skipped = "; skipped: " + ", ".join(f"{s['name']} ({s['reason']})" for s in result.skipped_skills)
        return f"Task finished. Saved skills: {saved}{skipped}."
