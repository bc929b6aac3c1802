
import pytest

from agentfactory.errors import ActionParseFailure, ReplayExhausted
from agentfactory.gateway import ReplayBackend
from agentfactory.manifest import parse_skill_md
from agentfactory.meta_agent import MetaAction, TaskOutcome, parse_action_block

from conftest import read_history
from helpers import (
    RAW_ECHO,
    entry,
    evolve_task_a_entries,
    evolve_task_b_entries,
    evolve_task_c_entries,
    fenced_action,
    install_audio_entries,
    library_tree_hash,
    make_record,
    manifest_payload,
)


def run(runtime, query, entries, task_id="task-1"):
    return runtime.meta.run_task(query, task_id=task_id, replay_backend=ReplayBackend(list(entries)))


# -- action parsing ------------------------------------------------------------------


def test_parse_action_block_happy_path():
    action, args = parse_action_block('prose first\n```json\n{"action": "finish", "args": {"answer": "x"}}\n```\ntrailing prose')
    assert action is MetaAction.FINISH
    assert args == {"answer": "x"}


def test_parse_action_block_plain_fence():
    action, args = parse_action_block('```\n{"action": "list_saved_subagents", "args": {}}\n```')
    assert action is MetaAction.LIST_SAVED_SUBAGENTS


def test_parse_action_block_rejects_no_block():
    with pytest.raises(ActionParseFailure):
        parse_action_block("I think we should create a subagent.")


def test_parse_action_block_rejects_two_blocks():
    block = '```json\n{"action": "finish", "args": {}}\n```\n'
    with pytest.raises(ActionParseFailure):
        parse_action_block(block + block)


def test_parse_action_block_rejects_unknown_action():
    with pytest.raises(ActionParseFailure):
        parse_action_block('```json\n{"action": "self_destruct", "args": {}}\n```')


# -- scenarios -------------------------------------------------------------------------


def test_install_scenario_saves_both_subagents(runtime, config):
    result = run(runtime, "Transcribe the audio file meeting.wav and play the result through the music service", install_audio_entries())
    assert result.outcome is TaskOutcome.COMPLETED
    assert [s["name"] for s in result.saved_skills] == ["audio-transcriber", "qq-music-player"]
    assert all(s["version"] == 1 for s in result.saved_skills)

    saved = runtime.registry.list_saved_subagents()
    assert [s.name for s in saved] == ["audio-transcriber", "qq-music-player"]
    for name in ("audio-transcriber", "qq-music-player"):
        manifest, _ = parse_skill_md((config.library_root / name / "SKILL.md").read_text())
        assert manifest.name == name

    history = runtime.meta.last_history()
    actions = [step.action for step in history.steps]
    assert actions == [
        MetaAction.CREATE_SUBAGENT,
        MetaAction.CREATE_SUBAGENT,
        MetaAction.RUN_SUBAGENT,
        MetaAction.RUN_SUBAGENT,
        MetaAction.FINISH,
    ]


def test_zero_subagent_task_single_finish(runtime):
    entries = [entry("Task: what is 2 + 2", fenced_action("finish", {"answer": "4", "skills_to_save": []}), output_tokens=12)]
    result = run(runtime, "what is 2 + 2", entries)
    assert result.outcome is TaskOutcome.COMPLETED
    assert result.answer == "4"
    assert result.saved_skills == []
    assert result.steps == 1
    assert runtime.registry.list_saved_subagents() == []


def test_self_evolve_scenario_versions_advance(runtime):
    run(runtime, "generate a readme for project alpha", evolve_task_a_entries(), task_id="task-a")
    assert runtime.registry.get_record("readme-generator").manifest.version == 1

    result = run(runtime, "generate a readme for project beta", evolve_task_b_entries(), task_id="task-b")
    assert result.outcome is TaskOutcome.COMPLETED
    record = runtime.registry.get_record("readme-generator")
    assert record.manifest.version == 2
    assert [v.version for v in record.versions] == [1, 2]

    history = runtime.meta.last_history()
    actions = [step.action for step in history.steps]
    assert actions == [
        MetaAction.LIST_SAVED_SUBAGENTS,
        MetaAction.RUN_SUBAGENT,
        MetaAction.VIEW_SUBAGENT_CODE,
        MetaAction.MODIFY_SUBAGENT,
        MetaAction.RUN_SUBAGENT,
        MetaAction.FINISH,
    ]
    # the failed run is observable, not fatal
    assert history.steps[1].ok is False
    assert "failed" in history.steps[1].observation
    assert history.steps[4].ok is True


def test_full_three_run_evolution(runtime):
    run(runtime, "generate a readme for project alpha", evolve_task_a_entries(), task_id="task-a")
    run(runtime, "generate a readme for project beta", evolve_task_b_entries(), task_id="task-b")
    run(runtime, "project gamma needs a readme", evolve_task_c_entries(), task_id="task-c")
    record = runtime.registry.get_record("readme-generator")
    assert record.manifest.version == 3
    assert len(record.manifest.changelog) == 2
    assert [v.version for v in record.versions] == [1, 2, 3]


def test_parse_retry_then_success(runtime):
    entries = [
        entry("Task: quick answer", "I will just finish now without a block.", output_tokens=9),
        entry("could not be executed", fenced_action("finish", {"answer": "ok", "skills_to_save": []}), output_tokens=8),
    ]
    result = run(runtime, "quick answer", entries)
    assert result.outcome is TaskOutcome.COMPLETED
    assert result.orchestration_tokens == 17  # both completions count


def test_parse_failure_after_retries_discards_workspace(runtime, config):
    before = library_tree_hash(config.library_root)
    entries = [
        entry("Task: hopeless", "no block 1", output_tokens=1),
        entry("could not be executed", "no block 2", output_tokens=1),
        entry("could not be executed", "no block 3", output_tokens=1),
    ]
    with pytest.raises(ActionParseFailure):
        run(runtime, "hopeless", entries)
    assert library_tree_hash(config.library_root) == before
    assert not (config.workspaces_dir / "task-1").exists()


def test_replay_exhaustion_discards_workspace(runtime, config):
    runtime.registry.register_skill(make_record("existing-skill"))
    before = library_tree_hash(config.library_root)
    entries = [
        entry(
            "Task: partial",
            fenced_action(
                "create_subagent",
                {"name": "draft-skill", "code": RAW_ECHO, "tool_grants": [], "manifest": manifest_payload("A draft.")},
            ),
            output_tokens=5,
        ),
    ]
    with pytest.raises(ReplayExhausted):
        run(runtime, "partial", entries)
    assert library_tree_hash(config.library_root) == before
    assert not (config.workspaces_dir / "task-1").exists()


def test_step_limit_reported_in_outcome_not_thrown(runtime, config):
    entries = [
        entry("Task: loop", fenced_action("list_saved_subagents", {}), output_tokens=3),
        entry("", fenced_action("list_saved_subagents", {}), output_tokens=3),
    ]
    result = runtime.meta.run_task("loop", task_id="task-1", replay_backend=ReplayBackend(entries), step_limit=2)
    assert result.outcome is TaskOutcome.STEP_LIMIT
    assert "step limit" in result.error
    assert not (config.workspaces_dir / "task-1").exists()


def test_staged_skill_absent_from_listing_until_finish(runtime):
    entries = [
        entry(
            "Task: stage then list",
            fenced_action(
                "create_subagent",
                {"name": "draft-skill", "code": RAW_ECHO, "tool_grants": [], "manifest": manifest_payload("A draft.")},
            ),
            output_tokens=5,
        ),
        entry("Staged subagent 'draft-skill'", fenced_action("list_saved_subagents", {}), output_tokens=5),
        entry("No saved subagents", fenced_action("finish", {"answer": "done", "skills_to_save": []}), output_tokens=5),
    ]
    result = run(runtime, "stage then list", entries)
    assert result.outcome is TaskOutcome.COMPLETED
    history = runtime.meta.last_history()
    assert "No saved subagents" in history.steps[1].observation


def test_unresolved_grant_is_observable_error(runtime):
    entries = [
        entry(
            "Task: bad grant",
            fenced_action(
                "create_subagent",
                {"name": "skill-x", "code": RAW_ECHO, "tool_grants": ["nonexistent_tool"], "manifest": manifest_payload("X.")},
            ),
            output_tokens=5,
        ),
        entry("UnresolvedToolGrant", fenced_action("finish", {"answer": "gave up", "skills_to_save": []}), output_tokens=5),
    ]
    result = run(runtime, "bad grant", entries)
    assert result.outcome is TaskOutcome.COMPLETED
    history = runtime.meta.last_history()
    assert history.steps[0].ok is False
    assert "UnresolvedToolGrant" in history.steps[0].observation


def test_finish_with_unstaged_name_errors_before_promotion(runtime, config):
    before = library_tree_hash(config.library_root)
    entries = [
        entry("Task: bad finish", fenced_action("finish", {"answer": "x", "skills_to_save": ["ghost"]}), output_tokens=5),
        entry("UnknownStagedSkill", fenced_action("finish", {"answer": "x", "skills_to_save": []}), output_tokens=5),
    ]
    result = run(runtime, "bad finish", entries)
    assert result.outcome is TaskOutcome.COMPLETED
    assert library_tree_hash(config.library_root) == before
    history = runtime.meta.last_history()
    assert history.steps[0].ok is False
    assert "UnknownStagedSkill" in history.steps[0].observation


def test_modify_without_save_leaves_library_untouched(runtime, config):
    runtime.registry.register_skill(make_record("tweakable", code="original"))
    before = library_tree_hash(config.library_root)
    entries = [
        entry(
            "Task: tweak",
            fenced_action(
                "modify_subagent",
                {"name": "tweakable", "code": "changed", "manifest": manifest_payload("Tweakable."), "reason": "testing"},
            ),
            output_tokens=5,
        ),
        entry("as version 2", fenced_action("finish", {"answer": "not saving", "skills_to_save": []}), output_tokens=5),
    ]
    result = run(runtime, "tweak", entries)
    assert result.outcome is TaskOutcome.COMPLETED
    assert library_tree_hash(config.library_root) == before
    assert runtime.registry.view_subagent_code("tweakable") == "original"


def test_history_log_schema_and_completeness(runtime, config):
    result = run(runtime, "Transcribe the audio file meeting.wav and play it", install_audio_entries(), task_id="hist-task")
    assert result.outcome is TaskOutcome.COMPLETED
    records = read_history(config.workspaces_dir / "hist-task" / "history.jsonl")
    steps = [r for r in records if r.get("type") == "meta_step"]
    exchanges = [r for r in records if "seq" in r and r.get("type") != "meta_step"]
    assert len(steps) == 5
    assert [s["step"] for s in steps] == [1, 2, 3, 4, 5]
    assert list(steps[0].keys()) == ["type", "step", "action", "args", "observation_sha256", "exchange_seq"]
    # every meta step's exchange_seq resolves to an orchestrator-origin exchange record
    by_seq = {e["seq"]: e for e in exchanges}
    for s in steps:
        assert by_seq[s["exchange_seq"]]["origin"] == "orchestrator"
    # sequence numbers are 1..n with no gaps
    assert sorted(by_seq) == list(range(1, len(exchanges) + 1))


def test_run_counts_give_distinct_stderr_logs(runtime, config):
    entries = [
        entry(
            "Task: run twice",
            fenced_action(
                "create_subagent",
                {"name": "echoer", "code": RAW_ECHO, "tool_grants": [], "manifest": manifest_payload("Echo.")},
            ),
            output_tokens=5,
        ),
        entry("Staged subagent 'echoer'", fenced_action("run_subagent", {"name": "echoer", "query": "one"}), output_tokens=5),
        entry("'echoer' succeeded", fenced_action("run_subagent", {"name": "echoer", "query": "two"}), output_tokens=5),
        entry("'echoer' succeeded", fenced_action("finish", {"answer": "done", "skills_to_save": []}), output_tokens=5),
    ]
    run(runtime, "run twice", entries, task_id="twice")
    out = config.workspaces_dir / "twice" / "out"
    assert (out / "subagent-echoer-0.stderr.log").exists()
    assert (out / "subagent-echoer-1.stderr.log").exists()
