"""Error types shared across the runtime.

Every operational failure surfaces as an AgentFactoryError subclass so the
service layer and CLI can map failure kinds to status codes deterministically.
"""

from __future__ import annotations

from typing import Optional


class AgentFactoryError(Exception):
    """Base class for all runtime errors."""


class ConfigError(AgentFactoryError):
    """Configuration is missing or inconsistent; names the offending key."""

    def __init__(self, message: str, key: str = ""):
        super().__init__(message)
        self.key = key


# --- skill registry ---------------------------------------------------------

class DuplicateName(AgentFactoryError):
    pass


class InvalidManifest(AgentFactoryError):
    """Manifest validation or SKILL.md parsing failed; names the field."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


class UnresolvedToolGrant(AgentFactoryError):
    def __init__(self, grant: str):
        super().__init__(f"tool grant does not resolve to a registered tool skill: {grant!r}")
        self.grant = grant


class UnknownSkill(AgentFactoryError):
    pass


class NotASubagent(AgentFactoryError):
    pass


class VersionConflict(AgentFactoryError):
    def __init__(self, expected: int, found: int):
        super().__init__(f"expected version {expected}, found {found}")
        self.expected = expected
        self.found = found


class LibraryCorrupt(AgentFactoryError):
    def __init__(self, skill: str, message: str):
        super().__init__(f"skill {skill!r}: {message}")
        self.skill = skill


class LockTimeout(AgentFactoryError):
    pass


# --- workspaces -------------------------------------------------------------

class DuplicateTask(AgentFactoryError):
    pass


class InvalidTaskId(AgentFactoryError):
    pass


class WorkspaceNotActive(AgentFactoryError):
    pass


class IoFailure(AgentFactoryError):
    pass


# --- llm gateway ------------------------------------------------------------

class BackendUnavailable(AgentFactoryError):
    pass


class ReplayExhausted(AgentFactoryError):
    pass


class ReplayMismatch(AgentFactoryError):
    def __init__(self, message: str, diff: str = ""):
        super().__init__(message if not diff else f"{message}\n{diff}")
        self.diff = diff


class UnknownTask(AgentFactoryError):
    pass


# --- meta agent -------------------------------------------------------------

class ActionParseFailure(AgentFactoryError):
    pass


class DuplicateStagedName(AgentFactoryError):
    pass


class UnknownStagedSkill(AgentFactoryError):
    pass


class UnknownSubagent(AgentFactoryError):
    pass


# --- subagent runner --------------------------------------------------------

class InterpreterNotFound(AgentFactoryError):
    pass


class SpawnFailure(AgentFactoryError):
    pass


class BundleInvalid(AgentFactoryError):
    pass


# --- tool broker ------------------------------------------------------------

class AdapterUnconfigured(AgentFactoryError):
    pass


class UpstreamFailure(AgentFactoryError):
    def __init__(self, status: int, message: str = ""):
        super().__init__(message or f"upstream returned status {status}")
        self.status = status


class FetchFailure(AgentFactoryError):
    def __init__(self, status: int, message: str = ""):
        super().__init__(message or f"fetch failed with status {status}")
        self.status = status


class InvalidUrl(AgentFactoryError):
    pass


class SafetyDenied(AgentFactoryError):
    def __init__(self, rule: str, fragment: str):
        super().__init__(f"denied by safety rule {rule!r} (matched {fragment!r})")
        self.rule = rule
        self.fragment = fragment


class CwdOutsideWorkspace(AgentFactoryError):
    pass


class ExecFailure(AgentFactoryError):
    pass


# --- deploy exporter --------------------------------------------------------

class StagedOnlySkill(AgentFactoryError):
    pass


class DestinationNotEmpty(AgentFactoryError):
    pass


def error_name(exc: Exception) -> str:
    """Stable short name used in wire payloads and observations."""
    return type(exc).__name__


def summarize(exc: Exception, limit: Optional[int] = 500) -> str:
    text = f"{error_name(exc)}: {exc}"
    if limit is not None and len(text) > limit:
        text = text[: limit - 3] + "..."
    return text
