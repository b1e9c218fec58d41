"""
Run configuration files: flat `section.key = value` lines, `#` comments.

Keys of the `pipeline` section sit at the top level of the resulting
mapping; every other section becomes a nested mapping. Values stay strings
and are coerced by the pydantic schemas.
"""
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Union

from pydantic import ValidationError

from app.exceptions import ConfigError
from app.schemas.pipeline import PipelineConfig

SECTIONS = ("pipeline", "world", "motion", "partition", "registration", "lm", "corruption", "replay")
NULL_VALUES = ("", "none", "null")


def parse_kv(text: str, source: str = "<config>") -> Dict[str, Any]:
    data: Dict[str, Any] = {}
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{number}: expected 'section.key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        section, _, name = key.partition(".")
        if not name or section not in SECTIONS:
            raise ConfigError(f"{source}:{number}: unknown key '{key}', sections are {', '.join(SECTIONS)}")
        parsed: Optional[str] = None if value.lower() in NULL_VALUES else value
        target = data if section == "pipeline" else data.setdefault(section, {})
        if name in target:
            raise ConfigError(f"{source}:{number}: duplicate key '{key}'")
        target[name] = parsed
    return data


def _error_key(error: Mapping[str, Any]) -> str:
    loc = [str(part) for part in error.get("loc", ())]
    if not loc:
        return "pipeline"
    if loc[0] in SECTIONS:
        return ".".join(loc[:2])
    return "pipeline." + loc[0]


def build_config(data: Mapping[str, Any], overrides: Optional[Mapping[str, Any]] = None) -> PipelineConfig:
    """Validate a nested mapping; `overrides` are applied as dotted keys first"""
    merged: Dict[str, Any] = {k: dict(v) if isinstance(v, dict) else v for k, v in data.items()}
    for key, value in (overrides or {}).items():
        section, _, name = key.partition(".")
        if name and section != "pipeline":
            merged.setdefault(section, {})[name] = value
        else:
            merged[name or section] = value
    try:
        return PipelineConfig.model_validate(merged)
    except ValidationError as exc:
        first = exc.errors()[0]
        raise ConfigError(f"{_error_key(first)}: {first['msg']}") from exc


def load_config(path: Union[str, Path], overrides: Optional[Mapping[str, Any]] = None) -> PipelineConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return build_config(parse_kv(text, str(path)), overrides)

