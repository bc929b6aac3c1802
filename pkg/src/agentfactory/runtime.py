"""Facade wiring the runtime's components from one RuntimeConfig.

The service layer and anything embedding the runtime programmatically go
through this object; it owns the registry, workspace manager, gateway,
toolset, runner, meta agent, and exporter.
"""

from __future__ import annotations

from pathlib import Path
from typing import List, Optional

from .config import RuntimeConfig
from .errors import ConfigError
from .evaluation import run_batch
from .exporter import DeployExporter, verify_bundle
from .gateway import HttpChatBackend, LLMGateway, ReplayBackend
from .meta_agent import MetaAgent, TaskResult, render_skill_listing
from .registry import SkillRegistry
from .runner import SubagentRunner
from .tools import ToolSet
from .workspace import WorkspaceManager


class AgentRuntime:
    def __init__(self, config: RuntimeConfig):
        self.config = config
        config.state_dir.mkdir(parents=True, exist_ok=True)
        self.registry = SkillRegistry(
            config.library_root, script_ext=config.script_ext, lock_timeout=config.lock_timeout
        )
        self.workspaces = WorkspaceManager(config.workspaces_dir, self.registry)
        self.gateway = LLMGateway(default_backend=self._default_backend())
        self.toolset = ToolSet.from_config(config)
        self.runner = SubagentRunner(config, self.toolset, self.gateway)
        self.meta = MetaAgent(self.registry, self.workspaces, self.gateway, self.runner, config)
        self.exporter = DeployExporter(
            self.registry,
            workspaces_parent=config.workspaces_dir,
            sdk_source=config.sdk_source,
            interpreter_name=Path(config.interpreter).name or "python3",
        )

    def _default_backend(self):
        if self.config.backend == "http" and self.config.backend_url:
            return HttpChatBackend(self.config.backend_url, self.config.backend_key)
        return None

    # -- tasks -------------------------------------------------------------------

    def run_task(
        self,
        query: str,
        task_id: Optional[str] = None,
        replay_path: Optional[Path] = None,
        step_limit: Optional[int] = None,
    ) -> TaskResult:
        if self.config.backend not in ("http", "replay"):
            raise ConfigError(
                "no LLM backend configured: set backend to 'http' or 'replay' "
                "(--backend / AF_BACKEND / config key 'backend')",
                key="backend",
            )
        backend = None
        if self.config.backend == "replay":
            path = replay_path or self.config.replay_path
            if not path:
                raise ConfigError(
                    "replay backend needs a script file (--replay / AF_REPLAY / key 'replay')", key="replay"
                )
            backend = ReplayBackend.from_file(Path(path))
        elif not self.config.backend_url:
            raise ConfigError(
                "http backend needs an endpoint (--backend-url / AF_BACKEND_URL / key 'backend_url')",
                key="backend_url",
            )
        return self.meta.run_task(query, task_id=task_id, replay_backend=backend, step_limit=step_limit)

    def dry_plan(self) -> str:
        return render_skill_listing(self.registry)

    # -- library -------------------------------------------------------------------

    def list_skills(self):
        return self.registry.list_saved_subagents(), self.registry.builtin_summaries()

    def skill_description(self, name: str) -> str:
        return self.registry.get_skill_description(name)

    def skill_code(self, name: str) -> str:
        return self.registry.view_subagent_code(name)

    # -- deploy ---------------------------------------------------------------------

    def export(self, names: List[str], dest: Path, reproducible: bool = False, verify: bool = False) -> dict:
        bundle = self.exporter.export_bundle(names, Path(dest), reproducible=reproducible)
        payload = {
            "bundle_dir": str(bundle.bundle_dir),
            "skills": bundle.skills,
            "verified": False,
        }
        if verify:
            report = verify_bundle(bundle.bundle_dir, interpreter=self.config.interpreter)
            payload["verified"] = bool(report["ok"])
            payload["report"] = report
        return payload

    # -- accounting -------------------------------------------------------------------

    def token_total(self, task_id: str) -> int:
        return self.gateway.orchestration_token_total(task_id)

    def batch_report(self, task_ids: List[str]) -> dict:
        return self.gateway.batch_report(task_ids)

    def evaluate(self, manifest_path: Path, report_path: Optional[Path] = None) -> dict:
        return run_batch(self.meta, Path(manifest_path), report_path=report_path)
