"""Export saved subagents as standalone, relocatable bundles.

Bundle layout:

    <dest>/skills/<name>/SKILL.md      byte-equal to the library head version
    <dest>/skills/<name>/agent.<ext>   byte-equal head script
    <dest>/sdk/af_sdk/                 standalone-mode SDK copy
    <dest>/ONBOARDING.md               deterministic prompt for host agents
    <dest>/index.json                  machine-readable contents index

Bundles contain no absolute paths; moving the directory preserves
standalone execution. With reproducible=True the index timestamp is
normalized to a fixed epoch so identical inputs produce identical bytes.
"""

from __future__ import annotations

import json
import re
import shutil
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import List, Optional

from .errors import BundleInvalid, DestinationNotEmpty, StagedOnlySkill, UnknownSkill
from .manifest import SkillManifest, parse_skill_md
from .registry import SkillRegistry
from . import runner as runner_mod

FORMAT_VERSION = 1
REPRODUCIBLE_EPOCH = "1970-01-01T00:00:00+00:00"
_SMOKE_QUERY_RE = re.compile(r"(?im)^\s*(?:smoke|example)-query\s*:\s*(.+)$")


@dataclass
class SkillBundle:
    bundle_dir: Path
    skills: List[dict] = field(default_factory=list)  # {"name", "version", "entry"}
    sdk_rel: str = "sdk"
    onboarding_rel: str = "ONBOARDING.md"
    interpreter: str = "python3"

    @property
    def index_path(self) -> Path:
        return self.bundle_dir / "index.json"


def smoke_query_from_usage(usage: str) -> Optional[str]:
    match = _SMOKE_QUERY_RE.search(usage or "")
    return match.group(1).strip() if match else None


class DeployExporter:
    def __init__(
        self,
        registry: SkillRegistry,
        workspaces_parent: Optional[Path] = None,
        sdk_source: Optional[Path] = None,
        interpreter_name: str = "python3",
    ):
        self.registry = registry
        self.workspaces_parent = workspaces_parent
        self.sdk_source = sdk_source
        self.interpreter_name = interpreter_name

    # -- export ---------------------------------------------------------------

    def export_bundle(self, skill_names: List[str], dest_dir: Path, reproducible: bool = False) -> SkillBundle:
        dest = Path(dest_dir)
        if dest.exists() and any(dest.iterdir()):
            raise DestinationNotEmpty(f"destination {dest} is not empty")
        for name in skill_names:
            if not self.registry.has_saved_skill(name):
                if self._is_staged_somewhere(name):
                    raise StagedOnlySkill(
                        f"{name!r} is staged in a workspace but not saved; finish and save it before exporting"
                    )
                raise UnknownSkill(f"no saved skill named {name!r}")

        dest.mkdir(parents=True, exist_ok=True)
        script_name = f"agent.{self.registry.script_ext}"
        entries = []
        for name in skill_names:
            record = self.registry.get_record(name)
            skill_dir = dest / "skills" / name
            skill_dir.mkdir(parents=True)
            # Authoritative head bytes live in the committed version snapshot.
            vdir = self.registry.skill_dir(name) / "versions" / str(record.manifest.version)
            src_md = vdir / "SKILL.md"
            src_script = vdir / script_name
            if src_md.exists():
                shutil.copyfile(src_md, skill_dir / "SKILL.md")
            else:
                shutil.copyfile(self.registry.skill_dir(name) / "SKILL.md", skill_dir / "SKILL.md")
            if src_script.exists():
                shutil.copyfile(src_script, skill_dir / script_name)
            else:
                (skill_dir / script_name).write_text(record.code, encoding="utf-8")
            entries.append(
                {"name": name, "version": record.manifest.version, "entry": f"skills/{name}/{script_name}"}
            )

        sdk_version = self._copy_sdk(dest / "sdk")

        bundle = SkillBundle(bundle_dir=dest, skills=entries, interpreter=self.interpreter_name)
        onboarding = generate_onboarding_prompt(bundle)
        (dest / "ONBOARDING.md").write_text(onboarding, encoding="utf-8")

        index = {
            "format_version": FORMAT_VERSION,
            "skills": entries,
            "sdk": "sdk",
            "onboarding": "ONBOARDING.md",
            "interpreter": self.interpreter_name,
            "sdk_version": sdk_version,
            "generated_at": REPRODUCIBLE_EPOCH
            if reproducible
            else datetime.now(timezone.utc).isoformat(timespec="seconds"),
        }
        (dest / "index.json").write_text(json.dumps(index, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return bundle

    def _is_staged_somewhere(self, name: str) -> bool:
        if not self.workspaces_parent or not Path(self.workspaces_parent).exists():
            return False
        return any(Path(self.workspaces_parent).glob(f"*/staged/{name}/SKILL.md"))

    def _copy_sdk(self, dest: Path) -> str:
        import_root = runner_mod.resolve_sdk_import_root(self.sdk_source)
        if import_root is None or not (Path(import_root) / "af_sdk").exists():
            raise BundleInvalid(
                "standalone SDK not found: install the af_sdk package or set sdk_source"
            )
        src = Path(import_root) / "af_sdk"
        dest.mkdir(parents=True, exist_ok=True)
        target = dest / "af_sdk"
        shutil.copytree(src, target, ignore=shutil.ignore_patterns("__pycache__", "*.pyc"))
        # The runtime's safety policy is authoritative; keep the bundled copy in sync.
        from importlib import resources

        rules_text = (resources.files("agentfactory") / "data" / "safety_rules.txt").read_text(encoding="utf-8")
        (target / "safety_rules.txt").write_text(rules_text, encoding="utf-8")
        version = "unknown"
        init = target / "__init__.py"
        if init.exists():
            for line in init.read_text(encoding="utf-8").splitlines():
                if line.startswith("__version__"):
                    version = line.split("=", 1)[1].strip().strip("\"'")
                    break
        return version


def load_bundle(bundle_dir: Path) -> SkillBundle:
    bundle_dir = Path(bundle_dir)
    index_path = bundle_dir / "index.json"
    if not index_path.exists():
        raise BundleInvalid(f"no index.json under {bundle_dir}")
    try:
        index = json.loads(index_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise BundleInvalid(f"index.json unreadable: {exc}")
    if index.get("format_version") != FORMAT_VERSION:
        raise BundleInvalid(f"unsupported bundle format_version: {index.get('format_version')!r}")
    return SkillBundle(
        bundle_dir=bundle_dir,
        skills=list(index.get("skills", [])),
        sdk_rel=index.get("sdk", "sdk"),
        onboarding_rel=index.get("onboarding", "ONBOARDING.md"),
        interpreter=index.get("interpreter", "python3"),
    )


def generate_onboarding_prompt(bundle: SkillBundle) -> str:
    """Deterministic host-agent onboarding text assembled from the bundled manifests."""
    lines = [
        "# Bundled subagent skills",
        "",
        "This directory is a self-contained bundle of executable subagent skills.",
        "Each skill is a script plus a SKILL.md manifest documenting what it does,",
        "its parameters, and its return format. Read the SKILL.md files to decide",
        "which skills apply, then invoke them as shown below. Chain several skills",
        "when a task needs more than one capability.",
        "",
    ]
    for entry in bundle.skills:
        name = entry["name"]
        skill_md = bundle.bundle_dir / "skills" / name / "SKILL.md"
        if not skill_md.exists():
            raise BundleInvalid(f"bundle is missing skills/{name}/SKILL.md")
        try:
            manifest, _ = parse_skill_md(skill_md.read_text(encoding="utf-8"))
        except Exception as exc:
            raise BundleInvalid(f"skills/{name}/SKILL.md does not parse: {exc}")
        lines.extend(_skill_section(manifest, entry["entry"], bundle.sdk_rel, bundle.interpreter))
    return "\n".join(lines).rstrip("\n") + "\n"


def _skill_section(manifest: SkillManifest, entry_rel: str, sdk_rel: str, interpreter: str) -> List[str]:
    lines = [f"## {manifest.name}", "", "Purpose: " + manifest.one_line_description(), ""]
    lines.append("Invocation:")
    lines.append("```")
    lines.append(f'PYTHONPATH={sdk_rel} {interpreter} {entry_rel} --query "<task text>"')
    lines.append("```")
    lines.append("")
    lines.append("Inputs:")
    if manifest.parameters:
        for p in manifest.parameters:
            req = "required" if p.required else "optional"
            lines.append(f"- {p.name} ({p.type}, {req}): {p.description}".rstrip())
    else:
        lines.append("- the query text only")
    lines.append("")
    lines.append(f"Outputs: ({manifest.returns.type}) {manifest.returns.description}".rstrip())
    lines.append("")
    lines.append(f"See skills/{manifest.name}/SKILL.md for full documentation.")
    lines.append("")
    return lines


def verify_bundle(bundle_dir: Path, interpreter: Optional[str] = None, timeout: float = 60.0) -> dict:
    """Per-skill health report: manifest parse, script presence, optional smoke run."""
    report: dict = {"bundle_dir": str(bundle_dir), "skills": [], "ok": True}
    try:
        bundle = load_bundle(bundle_dir)
    except BundleInvalid as exc:
        report["ok"] = False
        report["error"] = str(exc)
        return report

    for entry in bundle.skills:
        name = entry["name"]
        item = {"name": name, "manifest_ok": False, "script_present": False, "smoke": "skipped"}
        skill_md = bundle.bundle_dir / "skills" / name / "SKILL.md"
        manifest = None
        if skill_md.exists():
            try:
                manifest, _ = parse_skill_md(skill_md.read_text(encoding="utf-8"))
                item["manifest_ok"] = True
            except Exception as exc:
                item["manifest_error"] = str(exc)
        else:
            item["manifest_error"] = "SKILL.md missing"
        script = bundle.bundle_dir / entry["entry"]
        item["script_present"] = script.exists()

        if item["manifest_ok"] and item["script_present"] and manifest is not None:
            query = smoke_query_from_usage(manifest.usage)
            if query is not None:
                try:
                    outcome = runner_mod.standalone_execute(
                        bundle.bundle_dir, query, skill=name, interpreter=interpreter, timeout=timeout
                    )
                    item["smoke"] = "pass" if outcome.success else f"fail: {outcome.describe()}"
                except Exception as exc:
                    item["smoke"] = f"fail: {exc}"
        if not (item["manifest_ok"] and item["script_present"]) or str(item["smoke"]).startswith("fail"):
            report["ok"] = False
        report["skills"].append(item)
    return report
