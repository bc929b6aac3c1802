"""Runtime configuration.

Precedence: explicit flags > AF_* environment variables > config file
(flat `key = value` document) > defaults. The backend must be configured
explicitly; everything else has a workable default.
"""

from __future__ import annotations

import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional

from .errors import ConfigError
from .safety import SafetyRules, default_rules

ENV_MAP = {
    "AF_LIBRARY": "library",
    "AF_STATE": "state",
    "AF_BACKEND": "backend",
    "AF_BACKEND_URL": "backend_url",
    "AF_BACKEND_KEY": "backend_key",
    "AF_MODEL": "model",
    "AF_STEP_LIMIT": "step_limit",
    "AF_REPLAY": "replay",
    "AF_FIXTURES": "fixtures",
    "AF_SEARCH_URL": "search_url",
    "AF_SEARCH_KEY": "search_key",
    "AF_READER_URL": "reader_url",
    "AF_INTERPRETER": "interpreter",
    "AF_SDK_SOURCE": "sdk_source",
}

_INT_KEYS = {"step_limit", "parse_retries", "max_output_tokens"}
_FLOAT_KEYS = {"subagent_timeout", "shell_timeout", "lock_timeout"}


@dataclass
class RuntimeConfig:
    library_root: Path
    state_dir: Path
    backend: str = ""  # "http" | "replay"; empty means unconfigured
    backend_url: str = ""
    backend_key: str = ""
    model: str = "default-chat"
    replay_path: Optional[Path] = None
    step_limit: int = 32
    parse_retries: int = 2
    max_output_tokens: int = 2048
    interpreter: str = field(default_factory=lambda: sys.executable)
    script_ext: str = "py"
    subagent_timeout: float = 120.0
    shell_timeout: float = 120.0
    lock_timeout: float = 10.0
    fixtures_dir: Optional[Path] = None
    search_url: str = ""
    search_key: str = ""
    reader_url: str = ""
    sdk_source: Optional[Path] = None
    safety_rules_path: Optional[Path] = None

    @property
    def workspaces_dir(self) -> Path:
        return self.state_dir / "workspaces"

    def safety_rules(self) -> SafetyRules:
        if self.safety_rules_path:
            return SafetyRules.load(self.safety_rules_path)
        return default_rules()

    def require_backend(self) -> None:
        if self.backend not in ("http", "replay"):
            raise ConfigError(
                "no LLM backend configured: set backend to 'http' or 'replay' "
                "(--backend / AF_BACKEND / config key 'backend')",
                key="backend",
            )
        if self.backend == "http" and not self.backend_url:
            raise ConfigError(
                "http backend needs an endpoint (--backend-url / AF_BACKEND_URL / key 'backend_url')",
                key="backend_url",
            )
        if self.backend == "replay" and not self.replay_path:
            raise ConfigError(
                "replay backend needs a script file (--replay / AF_REPLAY / key 'replay')",
                key="replay",
            )


def parse_config_file(path: Path) -> dict:
    """Flat key/value document: `key = value`, # comments, optional quotes."""
    values: dict = {}
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'", key="config_file")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if len(value) >= 2 and value[0] == value[-1] and value[0] in "\"'":
            value = value[1:-1]
        values[key] = value
    return values


def build_config(
    flags: Optional[Mapping] = None,
    env: Optional[Mapping[str, str]] = None,
    config_file: Optional[Path] = None,
) -> RuntimeConfig:
    """Merge the configuration layers into a RuntimeConfig."""
    flags = {k: v for k, v in (flags or {}).items() if v is not None}
    env = os.environ if env is None else env

    merged: dict = {}
    if config_file is None:
        candidate = Path("agentfactory.toml")
        config_file = candidate if candidate.exists() else None
    if config_file is not None:
        if not Path(config_file).exists():
            raise ConfigError(f"config file not found: {config_file}", key="config_file")
        merged.update(parse_config_file(Path(config_file)))
    for env_key, key in ENV_MAP.items():
        if env.get(env_key):
            merged[key] = env[env_key]
    merged.update(flags)

    def _get(key, default=None):
        value = merged.get(key, default)
        if value is None:
            return None
        if key in _INT_KEYS:
            try:
                return int(value)
            except (TypeError, ValueError):
                raise ConfigError(f"config key {key!r} must be an integer, got {value!r}", key=key)
        if key in _FLOAT_KEYS:
            try:
                return float(value)
            except (TypeError, ValueError):
                raise ConfigError(f"config key {key!r} must be a number, got {value!r}", key=key)
        return value

    library = _get("library")
    state = _get("state")
    if not library:
        raise ConfigError("no library directory configured (--library / AF_LIBRARY / key 'library')", key="library")
    if not state:
        raise ConfigError("no state directory configured (--state / AF_STATE / key 'state')", key="state")

    config = RuntimeConfig(
        library_root=Path(library),
        state_dir=Path(state),
        backend=_get("backend", "") or "",
        backend_url=_get("backend_url", "") or "",
        backend_key=_get("backend_key", "") or "",
        model=_get("model", "default-chat") or "default-chat",
        replay_path=Path(merged["replay"]) if merged.get("replay") else None,
        step_limit=_get("step_limit", 32),
        parse_retries=_get("parse_retries", 2),
        max_output_tokens=_get("max_output_tokens", 2048),
        interpreter=_get("interpreter", sys.executable) or sys.executable,
        script_ext=_get("script_ext", "py") or "py",
        subagent_timeout=_get("subagent_timeout", 120.0),
        shell_timeout=_get("shell_timeout", 120.0),
        lock_timeout=_get("lock_timeout", 10.0),
        fixtures_dir=Path(merged["fixtures"]) if merged.get("fixtures") else None,
        search_url=_get("search_url", "") or "",
        search_key=_get("search_key", "") or "",
        reader_url=_get("reader_url", "") or "",
        sdk_source=Path(merged["sdk_source"]) if merged.get("sdk_source") else None,
        safety_rules_path=Path(merged["safety_rules"]) if merged.get("safety_rules") else None,
    )
    if config.step_limit < 1:
        raise ConfigError("step limit must be positive", key="step_limit")
    return config
