"""Skill manifests and the SKILL.md document format.

A SKILL.md is a UTF-8 document with a fenced metadata block (name, version,
kind) followed by exactly five level-2 sections in fixed order: Description,
Parameters, Returns, Usage, Changelog. Rendering and parsing are lossless for
valid manifests; parsers reject missing sections and unknown metadata keys.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Tuple

from .errors import InvalidManifest

NAME_RE = re.compile(r"^[a-z0-9][a-z0-9_-]{0,63}$")
PARAM_NAME_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")
TYPE_RE = re.compile(r"^[^,()\n]+$")

_PARAM_BULLET_RE = re.compile(
    r"^- (?P<name>\S+) \((?P<type>[^,()]+), (?P<req>required|optional)\):(?: (?P<desc>.*))?$"
)
_RETURNS_LINE_RE = re.compile(r"^- \((?P<type>[^()]+)\):(?: (?P<desc>.*))?$")
_CHANGELOG_BULLET_RE = re.compile(r"^- v(?P<version>\d+): (?P<summary>.*)$")
_HEADER_RE = re.compile(r"^## (.+)$")

SECTION_ORDER = ("Description", "Parameters", "Returns", "Usage", "Changelog")
METADATA_KEYS = ("name", "version", "kind")


class SkillKind(str, Enum):
    META = "meta"
    TOOL = "tool"
    SUBAGENT = "subagent"


@dataclass
class SkillParameter:
    name: str
    type: str
    required: bool
    description: str = ""


@dataclass
class SkillReturns:
    type: str
    description: str = ""


@dataclass
class ChangelogEntry:
    version: int
    summary: str


@dataclass
class SkillManifest:
    name: str
    description: str
    parameters: List[SkillParameter] = field(default_factory=list)
    returns: SkillReturns = field(default_factory=lambda: SkillReturns("none"))
    usage: str = ""
    version: int = 1
    changelog: List[ChangelogEntry] = field(default_factory=list)

    def one_line_description(self) -> str:
        return self.description.splitlines()[0] if self.description else ""

    def validate(self) -> None:
        validate_manifest(self)


def _check_block_text(field_name: str, text: str) -> None:
    if not text or not text.strip():
        raise InvalidManifest(field_name, "must not be empty")
    if text != text.strip():
        raise InvalidManifest(field_name, "must not have leading or trailing whitespace")
    for line in text.splitlines():
        if line.startswith("## "):
            raise InvalidManifest(field_name, "must not contain section headers ('## ')")


def _check_inline_text(field_name: str, text: str, allow_empty: bool = True) -> None:
    if "\n" in text:
        raise InvalidManifest(field_name, "must be a single line")
    if text != text.strip():
        raise InvalidManifest(field_name, "must not have leading or trailing whitespace")
    if not allow_empty and not text:
        raise InvalidManifest(field_name, "must not be empty")


def _check_type_label(field_name: str, label: str) -> None:
    if not TYPE_RE.match(label) or label != label.strip() or not label:
        raise InvalidManifest(field_name, f"invalid semantic type label: {label!r}")


def validate_manifest(manifest: SkillManifest) -> None:
    """Raise InvalidManifest naming the first field that fails."""
    if not NAME_RE.match(manifest.name):
        raise InvalidManifest(
            "name", f"{manifest.name!r} (lowercase alphanumerics, hyphen/underscore, max 64 chars)"
        )
    _check_block_text("description", manifest.description)
    seen = set()
    for i, param in enumerate(manifest.parameters):
        where = f"parameters[{i}]"
        if not PARAM_NAME_RE.match(param.name):
            raise InvalidManifest(where, f"invalid parameter name: {param.name!r}")
        if param.name in seen:
            raise InvalidManifest(where, f"duplicate parameter name: {param.name!r}")
        seen.add(param.name)
        _check_type_label(where, param.type)
        if not isinstance(param.required, bool):
            raise InvalidManifest(where, "required flag must be a boolean")
        _check_inline_text(where, param.description)
    _check_type_label("returns", manifest.returns.type)
    _check_inline_text("returns", manifest.returns.description)
    _check_block_text("usage", manifest.usage)
    if not isinstance(manifest.version, int) or manifest.version < 1:
        raise InvalidManifest("version", f"must be a positive integer, got {manifest.version!r}")
    prev = 0
    for i, entry in enumerate(manifest.changelog):
        where = f"changelog[{i}]"
        if not isinstance(entry.version, int) or entry.version < 1:
            raise InvalidManifest(where, "entry version must be a positive integer")
        if entry.version <= prev:
            raise InvalidManifest(where, "entry versions must be strictly increasing")
        prev = entry.version
        _check_inline_text(where, entry.summary, allow_empty=False)


def render_skill_md(manifest: SkillManifest, kind: SkillKind) -> str:
    """Render the canonical SKILL.md document for a validated manifest."""
    validate_manifest(manifest)
    meta = f"---\nname: {manifest.name}\nversion: {manifest.version}\nkind: {kind.value}\n---"

    param_lines = []
    for p in manifest.parameters:
        req = "required" if p.required else "optional"
        bullet = f"- {p.name} ({p.type}, {req}):"
        if p.description:
            bullet += f" {p.description}"
        param_lines.append(bullet)

    returns_line = f"- ({manifest.returns.type}):"
    if manifest.returns.description:
        returns_line += f" {manifest.returns.description}"

    changelog_lines = [f"- v{e.version}: {e.summary}" for e in manifest.changelog]

    blocks = [
        meta,
        "## Description\n" + manifest.description,
        "## Parameters" + ("\n" + "\n".join(param_lines) if param_lines else ""),
        "## Returns\n" + returns_line,
        "## Usage\n" + manifest.usage,
        "## Changelog" + ("\n" + "\n".join(changelog_lines) if changelog_lines else ""),
    ]
    return "\n\n".join(blocks) + "\n"


def _parse_metadata(lines: List[str]) -> Tuple[dict, int]:
    if not lines or lines[0].strip() != "---":
        raise InvalidManifest("metadata", "document must begin with a '---' metadata fence")
    meta = {}
    i = 1
    while i < len(lines):
        line = lines[i]
        if line.strip() == "---":
            break
        if ":" not in line:
            raise InvalidManifest("metadata", f"malformed metadata line: {line!r}")
        key, _, value = line.partition(":")
        key = key.strip()
        if key not in METADATA_KEYS:
            raise InvalidManifest("metadata", f"unknown metadata key: {key!r}")
        if key in meta:
            raise InvalidManifest("metadata", f"duplicate metadata key: {key!r}")
        meta[key] = value.strip()
        i += 1
    else:
        raise InvalidManifest("metadata", "unterminated metadata fence")
    for key in METADATA_KEYS:
        if key not in meta:
            raise InvalidManifest("metadata", f"missing metadata key: {key!r}")
    return meta, i + 1


def _strip_blank_edges(lines: List[str]) -> List[str]:
    start, end = 0, len(lines)
    while start < end and not lines[start].strip():
        start += 1
    while end > start and not lines[end - 1].strip():
        end -= 1
    return lines[start:end]


def parse_skill_md(text: str) -> Tuple[SkillManifest, SkillKind]:
    """Parse a SKILL.md document; raises InvalidManifest on any contract violation."""
    lines = text.splitlines()
    meta, body_start = _parse_metadata(lines)

    try:
        version = int(meta["version"])
    except ValueError:
        raise InvalidManifest("metadata", f"version is not an integer: {meta['version']!r}")
    try:
        kind = SkillKind(meta["kind"])
    except ValueError:
        raise InvalidManifest("metadata", f"unknown kind: {meta['kind']!r}")

    sections: dict = {}
    current = None
    order_seen: List[str] = []
    for line in lines[body_start:]:
        header = _HEADER_RE.match(line)
        if header:
            title = header.group(1).strip()
            if title not in SECTION_ORDER:
                raise InvalidManifest("sections", f"unknown section: {title!r}")
            if title in sections:
                raise InvalidManifest("sections", f"duplicate section: {title!r}")
            sections[title] = []
            order_seen.append(title)
            current = title
        elif current is None:
            if line.strip():
                raise InvalidManifest("sections", f"content before first section: {line!r}")
        else:
            sections[current].append(line)

    if tuple(order_seen) != SECTION_ORDER:
        missing = [s for s in SECTION_ORDER if s not in sections]
        if missing:
            raise InvalidManifest("sections", f"missing sections: {', '.join(missing)}")
        raise InvalidManifest("sections", f"sections out of order: {order_seen}")

    description = "\n".join(_strip_blank_edges(sections["Description"]))
    usage = "\n".join(_strip_blank_edges(sections["Usage"]))

    parameters = []
    for line in _strip_blank_edges(sections["Parameters"]):
        m = _PARAM_BULLET_RE.match(line)
        if not m:
            raise InvalidManifest("parameters", f"malformed parameter bullet: {line!r}")
        parameters.append(
            SkillParameter(
                name=m.group("name"),
                type=m.group("type"),
                required=m.group("req") == "required",
                description=m.group("desc") or "",
            )
        )

    returns_lines = _strip_blank_edges(sections["Returns"])
    if len(returns_lines) != 1:
        raise InvalidManifest("returns", "Returns section must contain exactly one '- (<type>): <description>' line")
    m = _RETURNS_LINE_RE.match(returns_lines[0])
    if not m:
        raise InvalidManifest("returns", f"malformed returns line: {returns_lines[0]!r}")
    returns = SkillReturns(type=m.group("type"), description=m.group("desc") or "")

    changelog = []
    for line in _strip_blank_edges(sections["Changelog"]):
        m = _CHANGELOG_BULLET_RE.match(line)
        if not m:
            raise InvalidManifest("changelog", f"malformed changelog bullet: {line!r}")
        changelog.append(ChangelogEntry(version=int(m.group("version")), summary=m.group("summary")))

    manifest = SkillManifest(
        name=meta["name"],
        description=description,
        parameters=parameters,
        returns=returns,
        usage=usage,
        version=version,
        changelog=changelog,
    )
    validate_manifest(manifest)
    return manifest, kind


def _as_int(field_name: str, value) -> int:
    if isinstance(value, bool):
        raise InvalidManifest(field_name, f"not an integer: {value!r}")
    try:
        return int(value)
    except (TypeError, ValueError):
        raise InvalidManifest(field_name, f"not an integer: {value!r}")


def manifest_from_payload(name: str, payload: dict, version: int = 1) -> SkillManifest:
    """Build a manifest from the structured JSON shape used in meta-agent actions."""
    if not isinstance(payload, dict):
        raise InvalidManifest("manifest", "manifest payload must be an object")
    params = []
    for i, p in enumerate(payload.get("parameters") or []):
        if not isinstance(p, dict):
            raise InvalidManifest(f"parameters[{i}]", "parameter entries must be objects")
        params.append(
            SkillParameter(
                name=str(p.get("name", "")),
                type=str(p.get("type", "text")),
                required=bool(p.get("required", True)),
                description=str(p.get("description", "")),
            )
        )
    ret = payload.get("returns") or {}
    if not isinstance(ret, dict):
        raise InvalidManifest("returns", "returns must be an object")
    changelog = []
    for i, e in enumerate(payload.get("changelog") or []):
        if not isinstance(e, dict):
            raise InvalidManifest(f"changelog[{i}]", "changelog entries must be objects")
        changelog.append(ChangelogEntry(version=_as_int(f"changelog[{i}]", e.get("version", 0)), summary=str(e.get("summary", ""))))
    manifest = SkillManifest(
        name=name,
        description=str(payload.get("description", "")),
        parameters=params,
        returns=SkillReturns(type=str(ret.get("type", "object")), description=str(ret.get("description", ""))),
        usage=str(payload.get("usage", "")),
        version=_as_int("version", payload.get("version", version)),
        changelog=changelog,
    )
    validate_manifest(manifest)
    return manifest
