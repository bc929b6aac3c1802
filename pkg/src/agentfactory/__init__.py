"""agentfactory: a self-evolving agent runtime.

Tasks are decomposed by an orchestrating model into executable subagent
scripts that are staged in isolated workspaces, improved from execution
feedback, promoted into a persistent versioned skill library, and exported
as standalone bundles other agent systems can drive.
"""

from .config import RuntimeConfig, build_config
from .errors import AgentFactoryError
from .gateway import CallOrigin, LLMGateway, LLMRequest, ReplayBackend
from .manifest import SkillKind, SkillManifest, parse_skill_md, render_skill_md
from .meta_agent import MetaAgent, TaskOutcome, TaskResult
from .registry import SkillRegistry
from .registry_types import SkillRecord, SkillSummary
from .runtime import AgentRuntime
from .workspace import WorkspaceManager

__version__ = "0.1.0"

__all__ = [
    "AgentFactoryError",
    "AgentRuntime",
    "CallOrigin",
    "LLMGateway",
    "LLMRequest",
    "MetaAgent",
    "ReplayBackend",
    "RuntimeConfig",
    "SkillKind",
    "SkillManifest",
    "SkillRecord",
    "SkillRegistry",
    "SkillSummary",
    "TaskOutcome",
    "TaskResult",
    "WorkspaceManager",
    "build_config",
    "parse_skill_md",
    "render_skill_md",
    "__version__",
]
