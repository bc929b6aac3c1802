import pytest

from agentfactory.errors import (
    DuplicateStagedName,
    DuplicateTask,
    InvalidTaskId,
    UnknownStagedSkill,
    WorkspaceNotActive,
)
from agentfactory.workspace import WorkspaceStatus

from helpers import RAW_ECHO, library_tree_hash, make_manifest, make_record


def stage(workspaces, ws, name, version=1, grants=(), reason=""):
    manifest = make_manifest(name, version=version)
    workspaces.stage_skill(ws, name, RAW_ECHO, manifest, list(grants), reason=reason)


def test_create_workspace_fresh_and_empty(workspaces, config):
    ws = workspaces.create_workspace("task-001")
    assert ws.root_dir == config.workspaces_dir / "task-001"
    assert ws.root_dir.is_dir()
    assert ws.staged_skills == []
    assert (ws.root_dir / "out").is_dir()
    assert ws.status is WorkspaceStatus.ACTIVE


def test_create_workspace_duplicate(workspaces):
    workspaces.create_workspace("task-001")
    with pytest.raises(DuplicateTask):
        workspaces.create_workspace("task-001")


def test_task_id_with_path_separator_rejected(workspaces):
    for bad in ("a/b", "../escape", "a\\b", "", ".hidden", "x" * 200):
        with pytest.raises(InvalidTaskId):
            workspaces.create_workspace(bad)


def test_workspaces_are_disjoint(workspaces):
    a = workspaces.create_workspace("task-a")
    b = workspaces.create_workspace("task-b")
    (a.out_dir / "artifact.txt").write_text("from a")
    # filesystem-scan oracle across both roots
    files_in_b = [p for p in b.root_dir.rglob("*") if p.is_file() and p.name != "workspace.json"]
    assert files_in_b == []
    assert (a.out_dir / "artifact.txt").exists()


def test_promote_registers_new_skills(runtime, workspaces):
    ws = workspaces.create_workspace("task-001")
    stage(workspaces, ws, "audio-transcriber")
    stage(workspaces, ws, "qq-music-player")
    result = workspaces.promote(ws, ["audio-transcriber", "qq-music-player"])
    assert [p["name"] for p in result.promoted] == ["audio-transcriber", "qq-music-player"]
    assert result.skipped == []
    assert ws.status is WorkspaceStatus.PROMOTED
    names = [s.name for s in runtime.registry.list_saved_subagents()]
    assert names == ["audio-transcriber", "qq-music-player"]
    # promoted workspaces are retained for audit
    assert ws.root_dir.exists()


def test_promote_empty_set(workspaces):
    ws = workspaces.create_workspace("task-001")
    result = workspaces.promote(ws, [])
    assert result.promoted == [] and result.skipped == []
    assert ws.status is WorkspaceStatus.PROMOTED


def test_promote_skips_invalid_manifest_but_keeps_valid(runtime, workspaces):
    ws = workspaces.create_workspace("task-001")
    stage(workspaces, ws, "good-skill")
    bad_dir = ws.staged_dir / "bad-skill"
    bad_dir.mkdir()
    (bad_dir / "SKILL.md").write_text("garbage", encoding="utf-8")
    result = workspaces.promote(ws, ["good-skill", "bad-skill"])
    assert [p["name"] for p in result.promoted] == ["good-skill"]
    assert len(result.skipped) == 1
    assert result.skipped[0]["name"] == "bad-skill"
    assert "InvalidManifest" in result.skipped[0]["reason"]
    assert [s.name for s in runtime.registry.list_saved_subagents()] == ["good-skill"]


def test_promote_existing_skill_appends_version(runtime, workspaces):
    runtime.registry.register_skill(make_record("readme-generator", code="v1"))
    ws = workspaces.create_workspace("task-001")
    stage(workspaces, ws, "readme-generator", version=2, reason="better parsing")
    result = workspaces.promote(ws, ["readme-generator"])
    assert result.promoted == [{"name": "readme-generator", "version": 2}]
    record = runtime.registry.get_record("readme-generator")
    assert record.manifest.version == 2
    assert record.manifest.changelog[-1].summary == "better parsing"


def test_promote_version_conflict_skipped(runtime, workspaces):
    runtime.registry.register_skill(make_record("readme-generator"))
    ws = workspaces.create_workspace("task-001")
    stage(workspaces, ws, "readme-generator", version=1)  # head+1 would be 2
    result = workspaces.promote(ws, ["readme-generator"])
    assert result.promoted == []
    assert "VersionConflict" in result.skipped[0]["reason"]
    assert runtime.registry.get_record("readme-generator").manifest.version == 1


def test_promote_unstaged_name_reported_not_raised(workspaces):
    ws = workspaces.create_workspace("task-001")
    result = workspaces.promote(ws, ["ghost"])
    assert result.promoted == []
    assert "NotStaged" in result.skipped[0]["reason"]


def test_promote_requires_active(workspaces):
    ws = workspaces.create_workspace("task-001")
    workspaces.promote(ws, [])
    with pytest.raises(WorkspaceNotActive):
        workspaces.promote(ws, [])


def test_discard_removes_tree_and_preserves_library(runtime, workspaces, config):
    runtime.registry.register_skill(make_record("saved-before"))
    before = library_tree_hash(config.library_root)
    ws = workspaces.create_workspace("task-001")
    stage(workspaces, ws, "broken-draft")
    (ws.out_dir / "junk.bin").write_bytes(b"\x00\x01")
    workspaces.discard(ws)
    assert not ws.root_dir.exists()
    assert ws.status is WorkspaceStatus.DISCARDED
    assert library_tree_hash(config.library_root) == before
    assert [s.name for s in runtime.registry.list_saved_subagents()] == ["saved-before"]


def test_discard_empty_workspace(workspaces):
    ws = workspaces.create_workspace("task-001")
    workspaces.discard(ws)
    assert not ws.root_dir.exists()


def test_discard_twice_errors_without_touching_fs(workspaces, config):
    ws = workspaces.create_workspace("task-001")
    workspaces.discard(ws)
    snapshot = library_tree_hash(config.workspaces_dir)
    with pytest.raises(WorkspaceNotActive):
        workspaces.discard(ws)
    assert library_tree_hash(config.workspaces_dir) == snapshot


def test_promote_lock_timeout(runtime, workspaces, config):
    from filelock import FileLock

    from agentfactory.errors import LockTimeout

    runtime.registry.lock_timeout = 0.2
    ws = workspaces.create_workspace("task-001")
    stage(workspaces, ws, "skill-a")
    foreign = FileLock(str(config.library_root / ".writer.lock"))
    foreign.acquire()
    try:
        with pytest.raises(LockTimeout):
            workspaces.promote(ws, ["skill-a"])
    finally:
        foreign.release()


def test_staging_duplicate_name_rejected(workspaces):
    ws = workspaces.create_workspace("task-001")
    stage(workspaces, ws, "skill-a")
    with pytest.raises(DuplicateStagedName):
        stage(workspaces, ws, "skill-a")


def test_load_staged_unknown(workspaces):
    ws = workspaces.create_workspace("task-001")
    with pytest.raises(UnknownStagedSkill):
        workspaces.load_staged(ws, "ghost")


def test_staged_skill_round_trips(workspaces):
    ws = workspaces.create_workspace("task-001")
    stage(workspaces, ws, "skill-a", grants=("web_search",), reason="initial draft")
    staged = workspaces.load_staged(ws, "skill-a")
    assert staged.name == "skill-a"
    assert staged.code == RAW_ECHO
    assert staged.tool_grants == ["web_search"]
    assert staged.reason == "initial draft"
    assert ws.staged_skills == ["skill-a"]
