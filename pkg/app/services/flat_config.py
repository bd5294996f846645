"""
Flat ``key = value`` experiment files.

Keys are dotted paths into :class:`~app.schemas.ExperimentConfig`
(``optimizer.lr = 0.01``). Lines starting with ``#`` and blank lines are
ignored and the first ``=`` separates key from value. Serialization writes
every key in declaration order, so ``dump(parse(dump(c)))`` reproduces the
same bytes.
"""

import logging
from collections.abc import Iterable, Iterator
from enum import Enum
from pathlib import Path
from typing import Any

from pydantic import BaseModel, ValidationError

from app.errors import ConfigError, StorageError
from app.schemas import ExperimentConfig

logger = logging.getLogger(__name__)


def _section_type(model: type[BaseModel], name: str) -> type[BaseModel] | None:
    annotation = model.model_fields[name].annotation
    if isinstance(annotation, type) and issubclass(annotation, BaseModel):
        return annotation
    return None


def known_keys(model: type[BaseModel] = ExperimentConfig, prefix: str = "") -> list[str]:
    """Every dotted key accepted by ``model``, in declaration order."""
    keys: list[str] = []
    for name in model.model_fields:
        section = _section_type(model, name)
        if section is not None:
            keys.extend(known_keys(section, f"{prefix}{name}."))
        else:
            keys.append(f"{prefix}{name}")
    return keys


def format_value(value: Any) -> str:
    """Render one config value the way :func:`parse_flat_config` reads it back."""
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, Enum):
        return str(value.value)
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (list, tuple)):
        return ",".join(format_value(v) for v in value)
    return str(value)


def _items(model: BaseModel, prefix: str = "") -> Iterator[tuple[str, Any]]:
    for name in type(model).model_fields:
        value = getattr(model, name)
        if isinstance(value, BaseModel):
            yield from _items(value, f"{prefix}{name}.")
        else:
            yield f"{prefix}{name}", value


def dump_flat_config(config: ExperimentConfig) -> str:
    """Serialize every key of ``config``, one ``key = value`` line each."""
    lines = []
    for key, value in _items(config):
        text = format_value(value)
        lines.append(f"{key} = {text}" if text else f"{key} =")
    return "\n".join(lines) + "\n"


def parse_pairs(text: str, source: str = "<config>") -> dict[str, str]:
    """
    Split flat config text into raw key/value strings.

    Raises:
        ConfigError: on a line without ``=`` or an unknown key
    """
    allowed = set(known_keys())
    pairs: dict[str, str] = {}
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep:
            raise ConfigError(
                f"Expected 'key = value' at {source}:{line_no}",
                details={"source": source, "line": line_no},
            )
        if key not in allowed:
            raise ConfigError(
                f"Unknown config key '{key}'",
                details={"key": key, "source": source, "line": line_no},
            )
        pairs[key] = value.strip()
    return pairs


def parse_overrides(overrides: Iterable[str]) -> dict[str, str]:
    """Parse repeated ``--set key=value`` arguments."""
    pairs: dict[str, str] = {}
    for item in overrides:
        pairs.update(parse_pairs(item, source="--set"))
    return pairs


def _nest(pairs: dict[str, str]) -> dict[str, Any]:
    tree: dict[str, Any] = {}
    for key, value in pairs.items():
        node = tree
        *parents, leaf = key.split(".")
        for part in parents:
            node = node.setdefault(part, {})
        node[leaf] = value if value != "" else None
    return tree


def build_config(pairs: dict[str, str]) -> ExperimentConfig:
    """
    Validate raw pairs into an experiment configuration.

    Raises:
        ConfigError: wrapping pydantic's field-level errors
    """
    try:
        return ExperimentConfig.model_validate(_nest(pairs))
    except ValidationError as exc:
        errors = [
            {"field": ".".join(str(p) for p in err["loc"]) or "config", "message": err["msg"]}
            for err in exc.errors(include_url=False)
        ]
        first = errors[0]
        raise ConfigError(
            f"Invalid value for {first['field']}: {first['message']}", details={"errors": errors}
        )


def parse_flat_config(text: str, overrides: Iterable[str] = ()) -> ExperimentConfig:
    """Parse config text, then apply ``key=value`` overrides on top."""
    pairs = parse_pairs(text)
    pairs.update(parse_overrides(overrides))
    return build_config(pairs)


def load_flat_config(
    path: str | Path | None,
    overrides: Iterable[str] = (),
    seed: int | None = None,
    output_dir: str | None = None,
) -> ExperimentConfig:
    """
    Load a config file (or defaults when ``path`` is None) with CLI overrides.

    ``seed`` and ``output_dir`` win over both the file and ``--set`` values.

    Raises:
        StorageError: if the file cannot be read
        ConfigError: if the content is invalid
    """
    text = ""
    if path is not None:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise StorageError(f"Cannot read config {path}: {exc}", details={"path": str(path)})
    pairs = parse_pairs(text, source=str(path) if path is not None else "<defaults>")
    pairs.update(parse_overrides(overrides))
    if seed is not None:
        pairs["seed"] = str(seed)
    if output_dir is not None:
        pairs["output_dir"] = output_dir
    config = build_config(pairs)
    logger.debug("Loaded config from %s with %d explicit keys", path or "defaults", len(pairs))
    return config


def write_flat_config(config: ExperimentConfig, path: str | Path) -> None:
    """Write the resolved config snapshot of a run."""
    try:
        Path(path).write_text(dump_flat_config(config), encoding="utf-8")
    except OSError as exc:
        raise StorageError(f"Cannot write {path}: {exc}", details={"path": str(path)})
