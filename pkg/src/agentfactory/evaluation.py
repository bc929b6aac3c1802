"""Scripted evaluation batches and the token report.

A batch manifest lists tasks with a mode tag and a replay script each:

    {"tasks": [{"task_id": str, "query": str, "mode": "from_scratch"|"with_saved",
                "replay": "<path, relative to the manifest>"}]}

Tasks run sequentially in manifest order (with_saved tasks can therefore
reuse skills saved by earlier from_scratch tasks). The report groups
per-task orchestration token totals by mode and takes arithmetic means.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Optional

from .errors import ConfigError
from .gateway import ReplayBackend

MODES = ("from_scratch", "with_saved")


def load_batch_manifest(path: Path) -> list:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"batch manifest unreadable: {exc}", key="batch_manifest")
    tasks = data.get("tasks")
    if not isinstance(tasks, list) or not tasks:
        raise ConfigError("batch manifest must carry a non-empty 'tasks' list", key="batch_manifest")
    parsed = []
    for i, task in enumerate(tasks):
        where = f"tasks[{i}]"
        for key in ("task_id", "query", "mode", "replay"):
            if key not in task:
                raise ConfigError(f"{where} is missing {key!r}", key="batch_manifest")
        if task["mode"] not in MODES:
            raise ConfigError(f"{where} has unknown mode {task['mode']!r}", key="batch_manifest")
        replay = Path(task["replay"])
        if not replay.is_absolute():
            replay = path.parent / replay
        if not replay.exists():
            raise ConfigError(f"{where} replay script not found: {replay}", key="batch_manifest")
        parsed.append(
            {"task_id": task["task_id"], "query": task["query"], "mode": task["mode"], "replay": replay}
        )
    return parsed


def run_batch(meta_agent, manifest_path: Path, report_path: Optional[Path] = None) -> dict:
    """Run every task in the batch and assemble the per-mode token report."""
    tasks = load_batch_manifest(manifest_path)
    per_mode: dict = {mode: [] for mode in MODES}
    task_rows = []
    for task in tasks:
        backend = ReplayBackend.from_file(task["replay"])
        result = meta_agent.run_task(task["query"], task_id=task["task_id"], replay_backend=backend)
        tokens = result.orchestration_tokens
        per_mode[task["mode"]].append(tokens)
        task_rows.append(
            {
                "task_id": task["task_id"],
                "mode": task["mode"],
                "outcome": result.outcome.value,
                "orchestration_tokens": tokens,
            }
        )
    report = {
        "modes": {
            mode: {
                "per_task": per_mode[mode],
                "mean": (sum(per_mode[mode]) / len(per_mode[mode])) if per_mode[mode] else 0.0,
            }
            for mode in MODES
        },
        "tasks": task_rows,
    }
    if report_path is not None:
        Path(report_path).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return report
