"""Record types for the skill library."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List

from .manifest import SkillKind, SkillManifest


@dataclass
class SkillVersion:
    version: int
    code: str
    manifest: SkillManifest
    created_at: str
    reason: str = ""


@dataclass
class SkillRecord:
    kind: SkillKind
    manifest: SkillManifest
    code: str = ""
    tool_grants: List[str] = field(default_factory=list)
    versions: List[SkillVersion] = field(default_factory=list)

    @property
    def name(self) -> str:
        return self.manifest.name

    def summary(self) -> "SkillSummary":
        return SkillSummary(
            name=self.manifest.name,
            kind=self.kind,
            description=self.manifest.one_line_description(),
            version=self.manifest.version,
        )


@dataclass
class SkillSummary:
    name: str
    kind: SkillKind
    description: str
    version: int
