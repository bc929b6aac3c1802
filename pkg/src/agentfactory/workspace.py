"""Per-task isolated workspaces with promotion into the skill library.

A workspace is a directory tree owned by exactly one task execution:

    <parent>/<task_id>/
        staged/<name>/     skill drafts (library-layout mirror)
        out/               artifacts the task's subagents produce
        history.jsonl      execution record stream
        workspace.json     status marker

Nothing a task does escapes its root except through promote(), which copies
staged skills into the registry under the writer lock. Discarding removes
the tree; promoting retains it as the execution record's evidence.
"""

from __future__ import annotations

import json
import re
import shutil
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Dict, List

from .errors import (
    DuplicateStagedName,
    DuplicateTask,
    InvalidManifest,
    InvalidTaskId,
    IoFailure,
    UnknownStagedSkill,
    VersionConflict,
    WorkspaceNotActive,
)
from .manifest import SkillKind, SkillManifest, parse_skill_md, render_skill_md
from .registry import SkillRegistry
from .registry_types import SkillRecord

TASK_ID_RE = re.compile(r"^[A-Za-z0-9][A-Za-z0-9._-]{0,127}$")


class WorkspaceStatus(str, Enum):
    ACTIVE = "active"
    PROMOTED = "promoted"
    DISCARDED = "discarded"


@dataclass
class Workspace:
    task_id: str
    root_dir: Path
    created_at: str
    status: WorkspaceStatus = WorkspaceStatus.ACTIVE

    @property
    def staged_dir(self) -> Path:
        return self.root_dir / "staged"

    @property
    def out_dir(self) -> Path:
        return self.root_dir / "out"

    @property
    def history_path(self) -> Path:
        return self.root_dir / "history.jsonl"

    @property
    def staged_skills(self) -> List[str]:
        if not self.staged_dir.exists():
            return []
        return sorted(p.name for p in self.staged_dir.iterdir() if p.is_dir())


@dataclass
class StagedSkill:
    name: str
    code: str
    manifest: SkillManifest
    tool_grants: List[str]
    reason: str = ""


@dataclass
class PromotionResult:
    promoted: List[dict] = field(default_factory=list)  # {"name", "version"}
    skipped: List[dict] = field(default_factory=list)   # {"name", "reason"}


def _utc_now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


class WorkspaceManager:
    def __init__(self, parent_dir: Path, registry: SkillRegistry):
        self.parent = Path(parent_dir)
        self.registry = registry
        self._active: Dict[str, Workspace] = {}
        self.parent.mkdir(parents=True, exist_ok=True)

    # -- lifecycle ------------------------------------------------------------

    def create_workspace(self, task_id: str) -> Workspace:
        if not TASK_ID_RE.match(task_id):
            raise InvalidTaskId(
                f"task id {task_id!r} is not filesystem-safe (letters, digits, dot, dash, underscore)"
            )
        root = self.parent / task_id
        if task_id in self._active or root.exists():
            raise DuplicateTask(f"task {task_id!r} already has a workspace")
        try:
            root.mkdir(parents=True)
            (root / "staged").mkdir()
            (root / "out").mkdir()
        except OSError as exc:
            raise IoFailure(f"could not create workspace for {task_id!r}: {exc}")
        workspace = Workspace(task_id=task_id, root_dir=root, created_at=_utc_now())
        self._write_marker(workspace)
        self._active[task_id] = workspace
        return workspace

    def is_active(self, workspace: Workspace) -> bool:
        return workspace.status is WorkspaceStatus.ACTIVE and workspace.task_id in self._active

    def discard(self, workspace: Workspace) -> None:
        self._require_active(workspace)
        shutil.rmtree(workspace.root_dir, ignore_errors=True)
        workspace.status = WorkspaceStatus.DISCARDED
        self._active.pop(workspace.task_id, None)

    def promote(self, workspace: Workspace, skill_names: List[str]) -> PromotionResult:
        self._require_active(workspace)
        result = PromotionResult()
        if skill_names:
            with self.registry.locked_for_write():
                for name in skill_names:
                    try:
                        version = self._promote_one(workspace, name)
                    except InvalidManifest as exc:
                        result.skipped.append({"name": name, "reason": f"InvalidManifest: {exc}"})
                    except VersionConflict as exc:
                        result.skipped.append({"name": name, "reason": f"VersionConflict: {exc}"})
                    except UnknownStagedSkill as exc:
                        result.skipped.append({"name": name, "reason": f"NotStaged: {exc}"})
                    except Exception as exc:  # one bad skill must not abort the rest
                        result.skipped.append({"name": name, "reason": f"{type(exc).__name__}: {exc}"})
                    else:
                        result.promoted.append({"name": name, "version": version})
        workspace.status = WorkspaceStatus.PROMOTED
        self._write_marker(workspace)
        self._active.pop(workspace.task_id, None)
        return result

    # -- staging ---------------------------------------------------------------

    def stage_skill(
        self,
        workspace: Workspace,
        name: str,
        code: str,
        manifest: SkillManifest,
        tool_grants: List[str],
        reason: str = "",
        overwrite: bool = False,
    ) -> Path:
        self._require_active(workspace)
        manifest.validate()
        sdir = workspace.staged_dir / name
        if sdir.exists() and not overwrite:
            raise DuplicateStagedName(f"skill {name!r} is already staged in this workspace")
        if sdir.exists():
            shutil.rmtree(sdir)
        sdir.mkdir(parents=True)
        script = sdir / f"agent.{self.registry.script_ext}"
        script.write_text(code, encoding="utf-8")
        (sdir / "SKILL.md").write_text(render_skill_md(manifest, SkillKind.SUBAGENT), encoding="utf-8")
        (sdir / "grants.json").write_text(
            json.dumps({"tool_grants": list(tool_grants)}, separators=(",", ":")), encoding="utf-8"
        )
        (sdir / "meta.json").write_text(json.dumps({"reason": reason}, separators=(",", ":")), encoding="utf-8")
        return sdir

    def is_staged(self, workspace: Workspace, name: str) -> bool:
        return (workspace.staged_dir / name / "SKILL.md").exists()

    def load_staged(self, workspace: Workspace, name: str) -> StagedSkill:
        sdir = workspace.staged_dir / name
        skill_md = sdir / "SKILL.md"
        if not skill_md.exists():
            raise UnknownStagedSkill(f"no staged skill named {name!r} in workspace {workspace.task_id!r}")
        manifest, kind = parse_skill_md(skill_md.read_text(encoding="utf-8"))
        if kind is not SkillKind.SUBAGENT:
            raise InvalidManifest("kind", f"staged skill {name!r} has kind {kind.value!r}")
        script = sdir / f"agent.{self.registry.script_ext}"
        code = script.read_text(encoding="utf-8") if script.exists() else ""
        grants: List[str] = []
        grants_path = sdir / "grants.json"
        if grants_path.exists():
            grants = list(json.loads(grants_path.read_text(encoding="utf-8")).get("tool_grants", []))
        reason = ""
        meta_path = sdir / "meta.json"
        if meta_path.exists():
            reason = str(json.loads(meta_path.read_text(encoding="utf-8")).get("reason", ""))
        return StagedSkill(name=name, code=code, manifest=manifest, tool_grants=grants, reason=reason)

    # -- internals ---------------------------------------------------------------

    def _promote_one(self, workspace: Workspace, name: str) -> int:
        staged = self.load_staged(workspace, name)
        if staged.manifest.name != name:
            raise InvalidManifest("name", f"staged manifest names {staged.manifest.name!r}, expected {name!r}")
        if self.registry.has_saved_skill(name):
            head = self.registry.get_record(name).manifest.version
            if staged.manifest.version != head + 1:
                raise VersionConflict(expected=head + 1, found=staged.manifest.version)
            return self.registry.save_new_version(name, staged.code, staged.manifest, staged.reason)
        record = SkillRecord(
            kind=SkillKind.SUBAGENT,
            manifest=staged.manifest,
            code=staged.code,
            tool_grants=staged.tool_grants,
        )
        self.registry.register_skill(record)
        return staged.manifest.version

    def _require_active(self, workspace: Workspace) -> None:
        if workspace.status is not WorkspaceStatus.ACTIVE or workspace.task_id not in self._active:
            raise WorkspaceNotActive(f"workspace {workspace.task_id!r} is {workspace.status.value}")

    def _write_marker(self, workspace: Workspace) -> None:
        marker = {
            "task_id": workspace.task_id,
            "created_at": workspace.created_at,
            "status": workspace.status.value,
        }
        (workspace.root_dir / "workspace.json").write_text(
            json.dumps(marker, separators=(",", ":")), encoding="utf-8"
        )
