"""Line-oriented ``section.key = value`` experiment configuration."""
from pathlib import Path
from typing import Dict, List, Optional, Union

from pydantic import BaseModel, ValidationError

from spair.core.errors import ConfigError
from spair.schemas.run import DataConfig, EvalConfig, RunConfig, TrainConfig
from spair.schemas.net import NetSpec

PathLike = Union[str, Path]

SECTIONS: Dict[str, type] = {
    "train": TrainConfig,
    "net": NetSpec,
    "data": DataConfig,
    "eval": EvalConfig,
}
# chosen in the train section so one net block serves every variant
RESERVED = {("net", "variant"), ("net", "snl_policy")}


def parse(text: str, source: str = "<config>") -> Dict[str, Dict[str, str]]:
    """Raw ``{section: {key: value}}``; values stay strings for pydantic to coerce."""
    raw: Dict[str, Dict[str, str]] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        content = line.split("#", 1)[0].strip()
        if not content:
            continue
        if "=" not in content:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {line.strip()!r}")
        key, value = (part.strip() for part in content.split("=", 1))
        section, dot, field = key.partition(".")
        if not dot or not field or "." in field:
            raise ConfigError(f"{source}:{lineno}: key {key!r} must look like section.name")
        if section not in SECTIONS:
            raise ConfigError(f"{source}:{lineno}: unknown section {section!r} "
                              f"(expected one of {', '.join(SECTIONS)})")
        if (section, field) in RESERVED:
            raise ConfigError(f"{source}:{lineno}: {key} is set through train.{field}")
        if field in raw.setdefault(section, {}):
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        raw[section][field] = value
    return raw


def build(raw: Dict[str, Dict[str, str]], overrides: Optional[Dict[str, str]] = None) -> RunConfig:
    merged = {section: dict(values) for section, values in raw.items()}
    for key, value in (overrides or {}).items():
        section, _, field = key.partition(".")
        merged.setdefault(section, {})[field] = value
    try:
        return RunConfig.model_validate(merged)
    except ValidationError as exc:
        problems = "; ".join(
            f"{'.'.join(str(p) for p in err['loc'])}: {err['msg']}" for err in exc.errors()
        )
        raise ConfigError(f"invalid configuration: {problems}") from exc


def load(path: Optional[PathLike], overrides: Optional[Dict[str, str]] = None) -> RunConfig:
    """Config file (or defaults when ``path`` is None) with CLI overrides applied."""
    if path is None:
        return build({}, overrides)
    file = Path(path)
    if not file.is_file():
        raise ConfigError(f"config file not found: {file}")
    return build(parse(file.read_text(encoding="utf-8"), str(file)), overrides)


def _describe(model: type) -> List[str]:
    lines = []
    for name, field in model.model_fields.items():
        default = field.default if field.default_factory is None else field.default_factory()
        if isinstance(default, list):
            default = ",".join(str(d) for d in default)
        lines.append(f"{name} = {default}")
    return lines


def documented_keys() -> str:
    """Every accepted key with its default, for ``--help``."""
    out = []
    for section, model in SECTIONS.items():
        for line in _describe(model):
            key = line.split(" = ", 1)[0]
            if (section, key) in RESERVED:
                continue
            out.append(f"  {section}.{line}")
    return "\n".join(out)


def dump(config: RunConfig) -> str:
    """Serialize back into the file format; ``load(dump(c)) == c``."""
    lines = []
    for section in SECTIONS:
        model: BaseModel = getattr(config, section)
        for name, value in model.model_dump().items():
            if (section, name) in RESERVED or value is None:
                continue
            if isinstance(value, list):
                value = ",".join(str(v) for v in value)
            elif isinstance(value, bool):
                value = str(value).lower()
            lines.append(f"{section}.{name} = {value}")
    return "\n".join(lines) + "\n"
