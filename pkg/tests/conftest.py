import json
import shutil
from pathlib import Path

import pytest

from agentfactory.config import RuntimeConfig
from agentfactory.runtime import AgentRuntime

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def tool_corpus(tmp_path):
    """A private copy of the tool fixture corpus (search + pages)."""
    corpus = tmp_path / "toolcorpus"
    shutil.copytree(FIXTURES / "toolcorpus", corpus)
    return corpus


@pytest.fixture
def make_config(tmp_path, tool_corpus):
    def _make(**overrides):
        base = dict(
            library_root=tmp_path / "library",
            state_dir=tmp_path / "state",
            backend="replay",
            fixtures_dir=tool_corpus,
            subagent_timeout=20.0,
            shell_timeout=20.0,
        )
        base.update(overrides)
        return RuntimeConfig(**base)

    return _make


@pytest.fixture
def config(make_config):
    return make_config()


@pytest.fixture
def runtime(config):
    return AgentRuntime(config)


@pytest.fixture
def registry(runtime):
    return runtime.registry


@pytest.fixture
def workspaces(runtime):
    return runtime.workspaces


def load_corpus_lines(name: str):
    lines = []
    for raw in (FIXTURES / "safety" / name).read_text(encoding="utf-8").splitlines():
        line = raw.strip()
        if line and not line.startswith("#"):
            lines.append(line)
    return lines


def read_history(path: Path):
    return [json.loads(line) for line in Path(path).read_text(encoding="utf-8").splitlines()]
