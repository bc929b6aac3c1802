"""Persistent skill library.

On-disk layout, one directory per saved subagent under the library root:

    <root>/<name>/SKILL.md            head manifest (commit point of every write)
    <root>/<name>/agent.<ext>         head script, convenience copy
    <root>/<name>/grants.json         tool-skill allow-list
    <root>/<name>/versions/<n>/       immutable snapshot per version
        SKILL.md, agent.<ext>, meta.json {created_at, reason}

Writes serialize on an advisory lock file; readers need no lock. The head
SKILL.md is replaced via write-to-temp-then-rename, making its rename the
commit point: a crash mid-save leaves either the old or the new head
observable. Head code is always read from the committed version's snapshot,
so a stale convenience copy can never leak through the API. Version
directories numbered above the committed head are uncommitted leftovers and
are ignored (the next save overwrites them).

Built-in meta and tool skills live in code, not on disk; they are listed,
describable, and immutable.
"""

from __future__ import annotations

import json
import os
import re
from contextlib import contextmanager
from datetime import datetime, timezone
from pathlib import Path
from typing import List, Optional

from filelock import FileLock, Timeout

from .builtins import builtin_records
from .errors import (
    DuplicateName,
    InvalidManifest,
    LibraryCorrupt,
    LockTimeout,
    NotASubagent,
    UnknownSkill,
    UnresolvedToolGrant,
    VersionConflict,
)
from .manifest import SkillKind, SkillManifest, parse_skill_md, render_skill_md
from .registry_types import SkillRecord, SkillSummary, SkillVersion

LOCK_FILE = ".writer.lock"
_VERSION_DIR_RE = re.compile(r"^[0-9]+$")


def _utc_now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _write_bytes(path: Path, data: bytes) -> None:
    path.write_bytes(data)


def _replace(src: Path, dst: Path) -> None:
    os.replace(src, dst)


def _atomic_write_text(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    _write_bytes(tmp, text.encode("utf-8"))
    _replace(tmp, path)


class SkillRegistry:
    """Skill store over a library directory plus the fixed built-in skills."""

    def __init__(self, library_root: Path, script_ext: str = "py", lock_timeout: float = 10.0):
        self.root = Path(library_root)
        self.script_ext = script_ext
        self.lock_timeout = lock_timeout
        self.root.mkdir(parents=True, exist_ok=True)
        self._builtins = builtin_records()
        # One shared FileLock instance: re-entrant within a holder, so promote()
        # can wrap register/save calls without self-deadlocking.
        self._writer_lock = FileLock(str(self.root / LOCK_FILE))

    # -- locking ------------------------------------------------------------

    @contextmanager
    def locked_for_write(self, timeout: Optional[float] = None):
        limit = self.lock_timeout if timeout is None else timeout
        try:
            self._writer_lock.acquire(timeout=limit)
        except Timeout:
            raise LockTimeout(f"could not acquire library writer lock within {limit}s")
        try:
            yield
        finally:
            self._writer_lock.release()

    # -- path helpers ---------------------------------------------------------

    def skill_dir(self, name: str) -> Path:
        return self.root / name

    def _script_name(self) -> str:
        return f"agent.{self.script_ext}"

    def _head_manifest_path(self, name: str) -> Path:
        return self.skill_dir(name) / "SKILL.md"

    def _version_dir(self, name: str, version: int) -> Path:
        return self.skill_dir(name) / "versions" / str(version)

    # -- membership -----------------------------------------------------------

    def is_builtin(self, name: str) -> bool:
        return name in self._builtins

    def is_tool_skill(self, name: str) -> bool:
        record = self._builtins.get(name)
        return record is not None and record.kind is SkillKind.TOOL

    def has_saved_skill(self, name: str) -> bool:
        return self._head_manifest_path(name).exists()

    def has_skill(self, name: str) -> bool:
        return self.is_builtin(name) or self.has_saved_skill(name)

    def resolve_tool_grants(self, grants: List[str]) -> None:
        for grant in grants:
            if not self.is_tool_skill(grant):
                raise UnresolvedToolGrant(grant)

    # -- operations -------------------------------------------------------------

    def register_skill(self, record: SkillRecord) -> str:
        """Persist a new subagent skill; returns the (normalized) name."""
        if record.kind is not SkillKind.SUBAGENT:
            raise InvalidManifest("kind", "only subagent skills can be registered in the library")
        manifest = record.manifest
        if manifest.name != manifest.name.lower():
            manifest = SkillManifest(
                name=manifest.name.lower(),
                description=manifest.description,
                parameters=manifest.parameters,
                returns=manifest.returns,
                usage=manifest.usage,
                version=manifest.version,
                changelog=manifest.changelog,
            )
        manifest.validate()
        if manifest.version != 1:
            raise InvalidManifest("version", f"new skills register at version 1, got {manifest.version}")
        name = manifest.name
        self.resolve_tool_grants(record.tool_grants)
        with self.locked_for_write():
            if self.is_builtin(name) or self.has_saved_skill(name):
                raise DuplicateName(f"skill name already registered: {name!r}")
            self._write_version(name, 1, record.code, manifest, reason="", created_at=_utc_now())
            self._write_grants(name, record.tool_grants)
            self._commit_head(name, manifest, record.code, kind=SkillKind.SUBAGENT)
        return name

    def list_saved_subagents(self) -> List[SkillSummary]:
        summaries = []
        for entry in sorted(self.root.iterdir() if self.root.exists() else []):
            if not entry.is_dir():
                continue
            head = entry / "SKILL.md"
            if not head.exists():
                # Uncommitted leftovers from a torn registration: not part of the library.
                continue
            try:
                manifest, kind = parse_skill_md(head.read_text(encoding="utf-8"))
            except InvalidManifest as exc:
                raise LibraryCorrupt(entry.name, str(exc))
            if kind is not SkillKind.SUBAGENT:
                raise LibraryCorrupt(entry.name, f"on-disk skill has kind {kind.value!r}")
            if manifest.name != entry.name:
                raise LibraryCorrupt(entry.name, f"manifest name {manifest.name!r} does not match directory")
            summaries.append(
                SkillSummary(
                    name=manifest.name,
                    kind=kind,
                    description=manifest.one_line_description(),
                    version=manifest.version,
                )
            )
        return summaries

    def get_record(self, name: str) -> SkillRecord:
        """Load a full record (builtin or saved)."""
        builtin = self._builtins.get(name)
        if builtin is not None:
            return builtin
        head = self._head_manifest_path(name)
        if not head.exists():
            raise UnknownSkill(f"no skill named {name!r}")
        try:
            manifest, kind = parse_skill_md(head.read_text(encoding="utf-8"))
        except InvalidManifest as exc:
            raise LibraryCorrupt(name, str(exc))
        code = self._read_version_code(name, manifest.version)
        versions = self._load_versions(name, manifest.version)
        return SkillRecord(
            kind=kind,
            manifest=manifest,
            code=code,
            tool_grants=self._read_grants(name),
            versions=versions,
        )

    def get_skill_description(self, name: str) -> str:
        builtin = self._builtins.get(name)
        if builtin is not None:
            return render_skill_md(builtin.manifest, builtin.kind)
        head = self._head_manifest_path(name)
        if not head.exists():
            raise UnknownSkill(f"no skill named {name!r}")
        return head.read_text(encoding="utf-8")

    def view_subagent_code(self, name: str) -> str:
        builtin = self._builtins.get(name)
        if builtin is not None:
            raise NotASubagent(f"{name!r} is a built-in {builtin.kind.value} skill with no inspectable script")
        record = self.get_record(name)
        return record.code

    def save_new_version(self, name: str, code: str, manifest: SkillManifest, reason: str) -> int:
        if self.is_builtin(name):
            raise NotASubagent(f"{name!r} is a built-in skill and cannot be modified")
        with self.locked_for_write():
            current = self.get_record(name)
            expected = current.manifest.version + 1
            if manifest.version != expected:
                raise VersionConflict(expected=expected, found=manifest.version)
            if manifest.name != name:
                raise InvalidManifest("name", f"manifest name {manifest.name!r} does not match skill {name!r}")
            manifest = self._merge_changelog(current.manifest, manifest)
            manifest = self._with_changelog_entry(manifest, reason)
            manifest.validate()
            self._write_version(name, manifest.version, code, manifest, reason=reason, created_at=_utc_now())
            self._commit_head(name, manifest, code, kind=SkillKind.SUBAGENT)
            return manifest.version

    def builtin_summaries(self) -> List[SkillSummary]:
        return [r.summary() for r in sorted(self._builtins.values(), key=lambda r: (r.kind.value, r.name))]

    # -- internals ---------------------------------------------------------------

    @staticmethod
    def _merge_changelog(stored: SkillManifest, incoming: SkillManifest) -> SkillManifest:
        """History is registry-maintained: carry stored entries the caller's manifest omits."""
        incoming_versions = {e.version for e in incoming.changelog}
        carried = [e for e in stored.changelog if e.version not in incoming_versions]
        if not carried:
            return incoming
        merged = sorted(carried + list(incoming.changelog), key=lambda e: e.version)
        return SkillManifest(
            name=incoming.name,
            description=incoming.description,
            parameters=incoming.parameters,
            returns=incoming.returns,
            usage=incoming.usage,
            version=incoming.version,
            changelog=merged,
        )

    @staticmethod
    def _with_changelog_entry(manifest: SkillManifest, reason: str) -> SkillManifest:
        from .manifest import ChangelogEntry

        if any(e.version == manifest.version for e in manifest.changelog):
            return manifest
        summary = reason.strip().splitlines()[0] if reason.strip() else f"version {manifest.version}"
        changelog = list(manifest.changelog) + [ChangelogEntry(version=manifest.version, summary=summary)]
        return SkillManifest(
            name=manifest.name,
            description=manifest.description,
            parameters=manifest.parameters,
            returns=manifest.returns,
            usage=manifest.usage,
            version=manifest.version,
            changelog=changelog,
        )

    def _write_version(self, name: str, version: int, code: str, manifest: SkillManifest, reason: str, created_at: str) -> None:
        vdir = self._version_dir(name, version)
        vdir.mkdir(parents=True, exist_ok=True)
        _write_bytes(vdir / self._script_name(), code.encode("utf-8"))
        _write_bytes(vdir / "SKILL.md", render_skill_md(manifest, SkillKind.SUBAGENT).encode("utf-8"))
        meta = {"created_at": created_at, "reason": reason}
        _write_bytes(vdir / "meta.json", json.dumps(meta, separators=(",", ":")).encode("utf-8"))

    def _write_grants(self, name: str, grants: List[str]) -> None:
        payload = json.dumps({"tool_grants": list(grants)}, separators=(",", ":"))
        _write_bytes(self.skill_dir(name) / "grants.json", payload.encode("utf-8"))

    def _commit_head(self, name: str, manifest: SkillManifest, code: str, kind: SkillKind) -> None:
        _atomic_write_text(self._head_manifest_path(name), render_skill_md(manifest, kind))
        _atomic_write_text(self.skill_dir(name) / self._script_name(), code)

    def _read_grants(self, name: str) -> List[str]:
        path = self.skill_dir(name) / "grants.json"
        if not path.exists():
            return []
        try:
            return list(json.loads(path.read_text(encoding="utf-8")).get("tool_grants", []))
        except (json.JSONDecodeError, AttributeError) as exc:
            raise LibraryCorrupt(name, f"grants.json unreadable: {exc}")

    def _read_version_code(self, name: str, version: int) -> str:
        snapshot = self._version_dir(name, version) / self._script_name()
        if snapshot.exists():
            return snapshot.read_text(encoding="utf-8")
        # Hand-assembled library without version snapshots: fall back to the head copy.
        head_copy = self.skill_dir(name) / self._script_name()
        if head_copy.exists():
            return head_copy.read_text(encoding="utf-8")
        raise LibraryCorrupt(name, f"no script for version {version}")

    def _load_versions(self, name: str, head_version: int) -> List[SkillVersion]:
        versions_dir = self.skill_dir(name) / "versions"
        if not versions_dir.exists():
            return []
        loaded = []
        for entry in sorted(versions_dir.iterdir(), key=lambda p: int(p.name) if _VERSION_DIR_RE.match(p.name) else 0):
            if not (_VERSION_DIR_RE.match(entry.name) and entry.is_dir()):
                continue
            number = int(entry.name)
            if number > head_version:
                continue  # uncommitted leftover from an interrupted save
            skill_md = entry / "SKILL.md"
            script = entry / self._script_name()
            meta_path = entry / "meta.json"
            if not skill_md.exists() or not script.exists():
                raise LibraryCorrupt(name, f"version {number} snapshot incomplete")
            try:
                manifest, _ = parse_skill_md(skill_md.read_text(encoding="utf-8"))
            except InvalidManifest as exc:
                raise LibraryCorrupt(name, f"version {number}: {exc}")
            meta = {}
            if meta_path.exists():
                try:
                    meta = json.loads(meta_path.read_text(encoding="utf-8"))
                except json.JSONDecodeError:
                    meta = {}
            loaded.append(
                SkillVersion(
                    version=number,
                    code=script.read_text(encoding="utf-8"),
                    manifest=manifest,
                    created_at=str(meta.get("created_at", "")),
                    reason=str(meta.get("reason", "")),
                )
            )
        return loaded
