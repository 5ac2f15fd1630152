"""Flat key-value config files shared by the CLI subcommands.

Format: one ``key = value`` per line; blank lines and ``#`` comments ignored.
Training keys match TrainingConfig field names exactly; study files use the
keys documented in ``study_config_from_file``.
"""

from __future__ import annotations

from dataclasses import fields
from pathlib import Path

from .study import StudyConfig
from .training import TrainingConfig

_BOOL_VALUES = {"true": True, "1": True, "yes": True, "false": False, "0": False, "no": False}


def read_kv(path: str | Path) -> dict[str, str]:
    entries: dict[str, str] = {}
    for line_number, line in enumerate(Path(path).read_text().splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        key, sep, value = stripped.partition("=")
        if not sep:
            raise ValueError(f"{path}: line {line_number}: expected 'key = value'")
        entries[key.strip()] = value.strip()
    return entries


def write_kv(path: str | Path, entries: dict[str, object]) -> None:
    lines = [f"{key} = {value}" for key, value in entries.items()]
    Path(path).write_text("\n".join(lines) + "\n")


def _coerce_bool(value: str, key: str) -> bool:
    try:
        return _BOOL_VALUES[value.lower()]
    except KeyError:
        raise ValueError(f"{key}: expected a boolean, got {value!r}") from None


def training_config_from_mapping(entries: dict[str, str]) -> TrainingConfig:
    kwargs: dict[str, object] = {}
    known = {f.name: f for f in fields(TrainingConfig)}
    for key, value in entries.items():
        spec = known.get(key)
        if spec is None:
            raise ValueError(f"unknown training config key {key!r}")
        if spec.type in ("int", int):
            kwargs[key] = int(value)
        elif spec.type in ("float", float):
            kwargs[key] = float(value)
        elif spec.type in ("bool", bool):
            kwargs[key] = _coerce_bool(value, key)
        else:
            kwargs[key] = value
    return TrainingConfig(**kwargs)


def training_config_from_file(
    path: str | Path | None, overrides: dict[str, str] | None = None
) -> TrainingConfig:
    entries = read_kv(path) if path is not None else {}
    entries.update({k: str(v) for k, v in (overrides or {}).items() if v is not None})
    return training_config_from_mapping(entries)


def study_config_from_file(path: str | Path) -> StudyConfig:
    """Study config keys: ``sources`` (comma-separated ``tag:directory``),
    ``per_pathology_count``, ``seed``, ``reviewers`` (comma-separated)."""
    entries = read_kv(path)
    try:
        raw_sources = entries["sources"]
        count = int(entries["per_pathology_count"])
        seed = int(entries["seed"])
        reviewers = tuple(r.strip() for r in entries["reviewers"].split(",") if r.strip())
    except KeyError as exc:
        raise ValueError(f"{path}: missing study config key {exc}") from None
    sources = []
    for chunk in raw_sources.split(","):
        tag, sep, directory = chunk.strip().partition(":")
        if not sep:
            raise ValueError(f"{path}: source entry {chunk!r} is not 'tag:directory'")
        sources.append((tag.strip(), directory.strip()))
    return StudyConfig(
        sources=tuple(sources),
        per_pathology_count=count,
        seed=seed,
        reviewers=reviewers,
    )
