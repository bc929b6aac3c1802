import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from agentfactory.errors import InvalidManifest
from agentfactory.manifest import (
    ChangelogEntry,
    SkillKind,
    SkillManifest,
    SkillParameter,
    SkillReturns,
    manifest_from_payload,
    parse_skill_md,
    render_skill_md,
)

from helpers import make_manifest


def test_render_and_parse_simple_manifest():
    manifest = make_manifest("audio-transcriber", description="Transcribe audio files to text.")
    text = render_skill_md(manifest, SkillKind.SUBAGENT)
    assert text.startswith("---\nname: audio-transcriber\nversion: 1\nkind: subagent\n---\n")
    for section in ("## Description", "## Parameters", "## Returns", "## Usage", "## Changelog"):
        assert section in text
    parsed, kind = parse_skill_md(text)
    assert kind is SkillKind.SUBAGENT
    assert parsed == manifest


def test_parse_rejects_missing_section():
    manifest = make_manifest("skill-a")
    text = render_skill_md(manifest, SkillKind.SUBAGENT)
    broken = text.replace("## Usage\n", "").replace(manifest.usage + "\n\n## Changelog", "## Changelog")
    with pytest.raises(InvalidManifest) as exc:
        parse_skill_md(broken)
    assert "Usage" in str(exc.value) or "sections" in exc.value.field


def test_parse_rejects_unknown_metadata_key():
    manifest = make_manifest("skill-a")
    text = render_skill_md(manifest, SkillKind.SUBAGENT)
    broken = text.replace("kind: subagent\n", "kind: subagent\nauthor: somebody\n")
    with pytest.raises(InvalidManifest) as exc:
        parse_skill_md(broken)
    assert exc.value.field == "metadata"


def test_parse_rejects_missing_metadata_key():
    text = render_skill_md(make_manifest("skill-a"), SkillKind.SUBAGENT).replace("version: 1\n", "")
    with pytest.raises(InvalidManifest):
        parse_skill_md(text)


def test_parse_rejects_out_of_order_sections():
    manifest = make_manifest("skill-a")
    text = render_skill_md(manifest, SkillKind.SUBAGENT)
    swapped = text.replace("## Description", "## TEMP").replace("## Usage", "## Description").replace(
        "## TEMP", "## Usage"
    )
    with pytest.raises(InvalidManifest):
        parse_skill_md(swapped)


def test_parse_rejects_malformed_parameter_bullet():
    manifest = make_manifest("skill-a")
    text = render_skill_md(manifest, SkillKind.SUBAGENT)
    broken = text.replace("- query (text, required): the assignment", "- query: the assignment")
    with pytest.raises(InvalidManifest) as exc:
        parse_skill_md(broken)
    assert exc.value.field == "parameters"


def test_parse_rejects_stray_prose_before_sections():
    manifest = make_manifest("skill-a")
    text = render_skill_md(manifest, SkillKind.SUBAGENT)
    broken = text.replace("\n## Description", "\nstray prose\n\n## Description", 1)
    with pytest.raises(InvalidManifest):
        parse_skill_md(broken)


def test_kind_round_trips_for_all_kinds():
    manifest = make_manifest("skill-a")
    for kind in SkillKind:
        parsed, parsed_kind = parse_skill_md(render_skill_md(manifest, kind))
        assert parsed_kind is kind
        assert parsed == manifest


def test_validate_names_offending_field():
    bad = make_manifest("skill-a")
    bad.version = 0
    with pytest.raises(InvalidManifest) as exc:
        bad.validate()
    assert exc.value.field == "version"

    bad = make_manifest("Skill-A")
    with pytest.raises(InvalidManifest) as exc:
        bad.validate()
    assert exc.value.field == "name"

    bad = make_manifest("skill-a", description="x")
    bad.description = "  padded  "
    with pytest.raises(InvalidManifest) as exc:
        bad.validate()
    assert exc.value.field == "description"


def test_validate_rejects_duplicate_parameters():
    manifest = make_manifest("skill-a")
    manifest.parameters = [
        SkillParameter("path", "text", True, "first"),
        SkillParameter("path", "text", False, "second"),
    ]
    with pytest.raises(InvalidManifest) as exc:
        manifest.validate()
    assert "parameters[1]" == exc.value.field


def test_validate_rejects_non_increasing_changelog():
    manifest = make_manifest("skill-a", version=3)
    manifest.changelog = [ChangelogEntry(2, "two"), ChangelogEntry(2, "again")]
    with pytest.raises(InvalidManifest):
        manifest.validate()


def test_manifest_from_payload_rejects_bad_version():
    with pytest.raises(InvalidManifest):
        manifest_from_payload("skill-a", {"description": "d", "usage": "u", "version": "two"})


def test_multiline_description_and_usage_round_trip():
    manifest = make_manifest("skill-a")
    manifest.description = "First line.\n\nSecond paragraph with - bullets\n- one\n- two"
    manifest.usage = "Line one\nLine two\n\nLine four"
    text = render_skill_md(manifest, SkillKind.SUBAGENT)
    parsed, _ = parse_skill_md(text)
    assert parsed == manifest


# --- generated round-trip property ------------------------------------------------

_word = st.text(alphabet="abcdefghijklmnopqrstuvwxyz0123456789", min_size=1, max_size=8)
_names = st.from_regex(r"[a-z0-9][a-z0-9_-]{0,30}", fullmatch=True)
_param_names = st.from_regex(r"[a-z_][a-z0-9_]{0,12}", fullmatch=True)
_types = st.sampled_from(["text", "path", "count", "object", "list[object]", "source", "identifier"])

_inline = st.lists(_word, min_size=1, max_size=6).map(" ".join)


@st.composite
def _blocks(draw):
    lines = draw(st.lists(_inline, min_size=1, max_size=4))
    # internal blank lines are legal; leading/trailing are not
    rendered = []
    for i, line in enumerate(lines):
        rendered.append(line)
        if i < len(lines) - 1 and draw(st.booleans()):
            rendered.append("")
    return "\n".join(rendered)


@st.composite
def manifests(draw):
    params = []
    for name in draw(st.lists(_param_names, max_size=4, unique=True)):
        params.append(
            SkillParameter(
                name=name,
                type=draw(_types),
                required=draw(st.booleans()),
                description=draw(st.one_of(st.just(""), _inline)),
            )
        )
    version = draw(st.integers(min_value=1, max_value=9))
    changelog_versions = sorted(draw(st.sets(st.integers(min_value=1, max_value=20), max_size=4)))
    changelog = [ChangelogEntry(v, draw(_inline)) for v in changelog_versions]
    return SkillManifest(
        name=draw(_names),
        description=draw(_blocks()),
        parameters=params,
        returns=SkillReturns(type=draw(_types), description=draw(st.one_of(st.just(""), _inline))),
        usage=draw(_blocks()),
        version=version,
        changelog=changelog,
    )


@settings(max_examples=200, deadline=None)
@given(manifest=manifests(), kind=st.sampled_from(list(SkillKind)))
def test_round_trip_property(manifest, kind):
    text = render_skill_md(manifest, kind)
    parsed, parsed_kind = parse_skill_md(text)
    assert parsed == manifest
    assert parsed_kind is kind
