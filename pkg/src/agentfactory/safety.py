"""Shell-command safety checks.

The policy is a versioned, ordered list of deny rules loaded from a plain
data file (one rule per line). First matching rule wins; anything unmatched
is allowed. The verdict is a pure function of the command text.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import List, Optional, Tuple

from .errors import ConfigError

RULES_RESOURCE = "safety_rules.txt"


@dataclass(frozen=True)
class SafetyVerdict:
    allowed: bool
    rule: Optional[str] = None
    fragment: Optional[str] = None

    @property
    def denied(self) -> bool:
        return not self.allowed


ALLOW = SafetyVerdict(allowed=True)


class SafetyRules:
    """Ordered deny-rules compiled from the policy file."""

    def __init__(self, rules: List[Tuple[str, "re.Pattern[str]"]], version: int, source: str = "<builtin>"):
        self.rules = rules
        self.version = version
        self.source = source

    @classmethod
    def from_text(cls, text: str, source: str = "<text>") -> "SafetyRules":
        version = 0
        rules: List[Tuple[str, re.Pattern[str]]] = []
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if line.startswith("version "):
                try:
                    version = int(line.split(None, 1)[1])
                except (IndexError, ValueError):
                    raise ConfigError(f"{source}:{lineno}: malformed version line", key="safety_rules")
                continue
            parts = line.split(None, 2)
            if len(parts) != 3 or parts[0] != "deny":
                raise ConfigError(f"{source}:{lineno}: expected 'deny <name> <pattern>'", key="safety_rules")
            _, name, pattern = parts
            try:
                compiled = re.compile(pattern, re.IGNORECASE)
            except re.error as exc:
                raise ConfigError(f"{source}:{lineno}: bad pattern for rule {name!r}: {exc}", key="safety_rules")
            rules.append((name, compiled))
        if version < 1:
            raise ConfigError(f"{source}: missing 'version <n>' line", key="safety_rules")
        return cls(rules, version, source)

    @classmethod
    def load(cls, path: Path) -> "SafetyRules":
        return cls.from_text(path.read_text(encoding="utf-8"), source=str(path))

    @classmethod
    def builtin(cls) -> "SafetyRules":
        text = (resources.files("agentfactory") / "data" / RULES_RESOURCE).read_text(encoding="utf-8")
        return cls.from_text(text, source="agentfactory/data/" + RULES_RESOURCE)

    def check(self, command: str) -> SafetyVerdict:
        for name, pattern in self.rules:
            match = pattern.search(command)
            if match:
                return SafetyVerdict(allowed=False, rule=name, fragment=match.group(0).strip())
        return ALLOW


_default_rules: Optional[SafetyRules] = None


def default_rules() -> SafetyRules:
    global _default_rules
    if _default_rules is None:
        _default_rules = SafetyRules.builtin()
    return _default_rules


def check_command_safety(command: str, rules: Optional[SafetyRules] = None) -> SafetyVerdict:
    """Deterministic allow/deny verdict for a shell command."""
    return (rules or default_rules()).check(command)
