"""Flat ``section.key = value`` experiment configs.

Grammar, one assignment per line::

    line   := key '=' value | comment | blank
    key    := ident ('.' ident)+
    value  := item (',' item)*
    item   := integer | real | "quoted string" | ident
    comment starts with '#'

Every experiment kind declares its keys with typed defaults; unknown keys and
values that do not fit the declared type are errors.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from pathlib import Path

_IDENT = r"[A-Za-z_][A-Za-z0-9_\-]*"
_KEY_RE = re.compile(rf"^{_IDENT}(\.{_IDENT})+$")
_INT_RE = re.compile(r"^[+-]?\d+$")
_REAL_RE = re.compile(r"^[+-]?(\d+\.\d*|\.\d+|\d+)([eE][+-]?\d+)?$|^[+-]?\d+/\d+$")
_STR_RE = re.compile(r'^"((?:[^"\\]|\\.)*)"$')
_BARE_RE = re.compile(rf"^{_IDENT}$")


class ConfigError(ValueError):
    """Malformed or unknown configuration input."""


def _parse_item(text: str):
    text = text.strip()
    if _INT_RE.match(text):
        return int(text)
    if _REAL_RE.match(text):
        if "/" in text:
            a, b = text.split("/")
            if int(b) == 0:
                raise ConfigError(f"division by zero in {text!r}")
            return int(a) / int(b)
        return float(text)
    m = _STR_RE.match(text)
    if m:
        return re.sub(r"\\(.)", r"\1", m.group(1))
    if _BARE_RE.match(text):
        return text
    raise ConfigError(f"cannot parse value {text!r}")


def _split_items(text: str) -> list[str]:
    items, cur, quoted = [], [], False
    for ch in text:
        if ch == '"' and (not cur or cur[-1] != "\\"):
            quoted = not quoted
        if ch == "," and not quoted:
            items.append("".join(cur))
            cur = []
        else:
            cur.append(ch)
    if quoted:
        raise ConfigError(f"unterminated string in {text!r}")
    items.append("".join(cur))
    return items


def parse_value(text: str):
    items = _split_items(text)
    if any(not it.strip() for it in items):
        raise ConfigError(f"empty list item in {text!r}")
    vals = [_parse_item(it) for it in items]
    return vals if len(vals) > 1 else vals[0]


def parse_text(text: str) -> dict:
    out: dict = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if not _KEY_RE.match(key):
            raise ConfigError(f"line {lineno}: bad key {key!r}")
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        if not value:
            raise ConfigError(f"line {lineno}: missing value for {key!r}")
        out[key] = parse_value(value)
    return out


def format_value(value) -> str:
    if isinstance(value, (list, tuple)):
        if len(value) == 1:
            # list-typed keys re-wrap scalars on the way back in
            return format_value(value[0])
        return ", ".join(format_value(v) for v in value)
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        if not math.isfinite(value):
            raise ConfigError("non-finite reals are not representable")
        return repr(value)
    if isinstance(value, str):
        if _BARE_RE.match(value) and value not in ("true", "false"):
            return value
        return '"' + value.replace("\\", "\\\\").replace('"', '\\"') + '"'
    raise ConfigError(f"unsupported value {value!r}")


def _coerce(key: str, value, default):
    """Fit a parsed value to the type of the declared default."""
    if isinstance(default, bool):
        if value in ("true", "false"):
            return value == "true"
        if isinstance(value, bool):
            return value
        raise ConfigError(f"{key}: expected true or false")
    if isinstance(default, list):
        items = value if isinstance(value, list) else [value]
        proto = default[0] if default else None
        return [_coerce(key, v, proto) if proto is not None else v for v in items]
    if isinstance(value, list):
        raise ConfigError(f"{key}: expected a single value")
    if isinstance(default, int):
        if isinstance(value, int) and not isinstance(value, bool):
            return value
        raise ConfigError(f"{key}: expected an integer")
    if isinstance(default, float):
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            return float(value)
        raise ConfigError(f"{key}: expected a real number")
    if isinstance(default, str):
        if isinstance(value, str):
            return value
        raise ConfigError(f"{key}: expected a string")
    return value


@dataclass
class ExperimentConfig:
    kind: str
    values: dict = field(default_factory=dict)

    def __getitem__(self, key: str):
        return self.values[key]

    def get(self, key: str, default=None):
        return self.values.get(key, default)

    def echo(self) -> str:
        lines = [f"experiment.kind = {format_value(self.kind)}"]
        lines += [f"{k} = {format_value(v)}" for k, v in self.values.items()]
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        return {"experiment.kind": self.kind, **self.values}


def build_config(kind: str, defaults: dict, overrides: dict) -> ExperimentConfig:
    """Merge overrides (from a file or flags) into declared defaults."""
    values = {k: (list(v) if isinstance(v, list) else v) for k, v in defaults.items()}
    for key, value in overrides.items():
        if key == "experiment.kind":
            if value != kind:
                raise ConfigError(f"config is for {value!r}, not {kind!r}")
            continue
        if key not in defaults:
            raise ConfigError(f"unknown key {key!r} for {kind}")
        values[key] = _coerce(key, value, defaults[key])
    return ExperimentConfig(kind, values)


def load_file(path: str | Path) -> dict:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file {str(p)!r} not found")
    try:
        return parse_text(p.read_text())
    except UnicodeDecodeError as exc:
        raise ConfigError(f"config file {str(p)!r} is not text") from exc


def resolve_key(name: str, keys) -> str:
    """Map a flag name to a declared key: exact dotted key or a unique last component."""
    name = name.replace("-", "_")
    if name in keys:
        return name
    hits = [k for k in keys if k.rsplit(".", 1)[-1] == name]
    if len(hits) == 1:
        return hits[0]
    if not hits:
        raise ConfigError(f"unknown option {name!r}")
    raise ConfigError(f"ambiguous option {name!r}: {', '.join(hits)}")
