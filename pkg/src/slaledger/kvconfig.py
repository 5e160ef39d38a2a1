"""Plain-text ``key = value`` configuration files.

Keys may carry a dotted section prefix (``sla.threshold_percent``).
Blank lines and ``#`` comments are ignored. Repeating a key is an error
so that a typo cannot silently override an earlier setting.
"""

from __future__ import annotations

from pathlib import Path


class ConfigError(ValueError):
    pass


def parse_kv_text(text: str, *, source: str = "<string>") -> dict[str, str]:
    values: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {line!r}")
        if key in values:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        values[key] = value.strip()
    return values


def parse_kv_file(path: str | Path) -> dict[str, str]:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_kv_text(text, source=str(path))


def split_sections(values: dict[str, str]) -> dict[str, dict[str, str]]:
    """Group ``section.key`` entries by section; bare keys land under ``""``."""
    sections: dict[str, dict[str, str]] = {}
    for key, value in values.items():
        section, _, name = key.rpartition(".")
        sections.setdefault(section, {})[name] = value
    return sections
