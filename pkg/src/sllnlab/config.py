"""Flat sectioned key-value configuration with typed values.

Files look like::

    [generator]
    kind = lfss
    H = 0.8
    alpha = 1.5

    [condition]
    phi = power_log(0.8, 1.1667)
    expect = converges

Values are typed by a per-command schema: ints, reals, bools, strings and
comma-separated vectors.  Overrides use ``section.key=value``.  The resolved
config (defaults included) is serialized as canonical JSON, so resolution is
a pure function of file bytes and overrides.
"""

from __future__ import annotations

import configparser
import json
import math
import re
from dataclasses import dataclass, field


class ConfigError(ValueError):
    """Malformed config; the message names the file line and key when known."""


# value types
INT, REAL, BOOL, STR, INTS, REALS, STRS = "int", "real", "bool", "str", "ints", "reals", "strs"

_BOOLS = {"1": True, "true": True, "yes": True, "on": True, "0": False, "false": False, "no": False, "off": False}


def _scalar(kind: str, text: str):
    t = text.strip()
    if kind == INT:
        try:
            return int(t, 0)
        except ValueError:
            raise ValueError(f"expected an integer, got {t!r}") from None
    if kind == REAL:
        try:
            v = float(t)
        except ValueError:
            raise ValueError(f"expected a real number, got {t!r}") from None
        if not math.isfinite(v):
            raise ValueError(f"expected a finite real number, got {t!r}")
        return v
    if kind == BOOL:
        if t.lower() not in _BOOLS:
            raise ValueError(f"expected a boolean (true/false), got {t!r}")
        return _BOOLS[t.lower()]
    return t


def _split_top(text: str, sep: str) -> list[str]:
    """Split on ``sep`` outside parentheses, so ``power_log(1, 2), power(1)`` stays two items."""
    out, depth, cur = [], 0, []
    for ch in text:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        if ch == sep and depth == 0:
            out.append("".join(cur))
            cur = []
        else:
            cur.append(ch)
    out.append("".join(cur))
    return [x.strip() for x in out]


def parse_value(kind: str, text: str):
    if kind in (INTS, REALS, STRS):
        items = [x for x in _split_top(text, ",") if x != ""]
        if not items:
            raise ValueError("expected a nonempty comma-separated list")
        base = {INTS: INT, REALS: REAL, STRS: STR}[kind]
        return [_scalar(base, x) for x in items]
    return _scalar(kind, text)


@dataclass(frozen=True)
class Key:
    kind: str
    default: object = None
    choices: tuple = ()
    required: bool = False


@dataclass
class Schema:
    """``sections`` maps a section name to its keys.  A name ending in ``*``
    matches any section starting with the prefix (repeatable sections)."""

    sections: dict

    def lookup(self, section: str):
        if section in self.sections:
            return self.sections[section]
        for name, keys in self.sections.items():
            if name.endswith("*") and (section == name[:-2] or section.startswith(name[:-1])):
                return keys
        return None


@dataclass
class ResolvedConfig:
    command: str
    values: dict  # section -> key -> typed value
    source: str | None = None
    overrides: list = field(default_factory=list)

    def section(self, name: str) -> dict:
        return self.values.get(name, {})

    def sections_like(self, prefix: str) -> list[str]:
        return sorted(s for s in self.values if s == prefix or s.startswith(prefix + "."))

    def manifest(self, extra: dict | None = None) -> dict:
        out = {"command": self.command, "config": self.values, "overrides": list(self.overrides)}
        if self.source is not None:
            out["config_file"] = self.source
        if extra:
            out.update(extra)
        return out


def manifest_bytes(manifest: dict) -> bytes:
    return (json.dumps(manifest, sort_keys=True, indent=2) + "\n").encode()


def _key_lines(text: str) -> dict:
    """``(section, key) -> line number`` by a plain scan of the file."""
    lines, sec = {}, None
    for i, raw in enumerate(text.splitlines(), 1):
        s = raw.strip()
        m = re.match(r"^\[([^\]]+)\]$", s)
        if m:
            sec = m.group(1).strip()
            lines.setdefault((sec, None), i)
            continue
        m = re.match(r"^([^=:#;\s][^=:]*?)\s*[=:]", s)
        if m and sec is not None:
            lines.setdefault((sec, m.group(1).strip().lower()), i)
    return lines


def _where(src: str, lines: dict, sec: str, key: str | None) -> str:
    ln = lines.get((sec, key))
    loc = f"{src}:{ln}" if ln else src
    return f"{loc}: [{sec}] {key}" if key else f"{loc}: [{sec}]"


def parse_override(text: str) -> tuple[str, str, str]:
    if "=" not in text:
        raise ConfigError(f"override {text!r}: expected section.key=value")
    lhs, value = text.split("=", 1)
    if "." not in lhs:
        raise ConfigError(f"override {text!r}: key must be qualified as section.key")
    sec, key = lhs.strip().rsplit(".", 1)
    if not sec or not key:
        raise ConfigError(f"override {text!r}: empty section or key")
    return sec, key.strip().lower(), value.strip()


def resolve(command: str, schema: Schema, text: str = "", overrides=(), source: str = "<config>") -> ResolvedConfig:
    """Parse ``text``, apply ``overrides`` and fill defaults for every known section.

    Raises ConfigError naming ``file:line: [section] key`` on any problem.
    """
    cp = configparser.ConfigParser(interpolation=None, strict=True, delimiters=("=",), comment_prefixes=("#", ";"), inline_comment_prefixes=("#",))
    try:
        cp.read_string(text, source=source)
    except configparser.MissingSectionHeaderError as e:
        raise ConfigError(f"{source}:{e.lineno}: key outside any [section]") from None
    except configparser.DuplicateSectionError as e:
        raise ConfigError(f"{source}:{e.lineno}: duplicate section [{e.section}]") from None
    except configparser.DuplicateOptionError as e:
        raise ConfigError(f"{source}:{e.lineno}: [{e.section}] {e.option} given twice") from None
    except configparser.ParsingError as e:
        ln = e.errors[0][0] if e.errors else "?"
        raise ConfigError(f"{source}:{ln}: cannot parse line (expected key = value)") from None
    lines = _key_lines(text)
    raw = {s: dict(cp.items(s)) for s in cp.sections()}
    origin = {(s, k): "file" for s in raw for k in raw[s]}
    for ov in overrides:
        sec, key, val = parse_override(ov)
        raw.setdefault(sec, {})[key] = val
        origin[(sec, key)] = "override"
    values = {}
    for sec, items in raw.items():
        keys = schema.lookup(sec)
        if keys is None:
            known = ", ".join(sorted(schema.sections))
            raise ConfigError(f"{_where(source, lines, sec, None)}: unknown section (known: {known})")
        out = {}
        for key, txt in items.items():
            where = _where(source, lines, sec, key) if origin[(sec, key)] == "file" else f"--set {sec}.{key}"
            if key not in keys:
                raise ConfigError(f"{where}: unknown key (known: {', '.join(sorted(keys))})")
            spec = keys[key]
            try:
                v = parse_value(spec.kind, txt)
            except ValueError as e:
                raise ConfigError(f"{where}: {e}") from None
            if spec.choices and v not in spec.choices:
                raise ConfigError(f"{where}: {v!r} not one of {', '.join(map(str, spec.choices))}")
            out[key] = v
        values[sec] = out
    # defaults for fixed sections (always) and for every present repeatable section
    for name, keys in schema.sections.items():
        targets = [s for s in values if schema.lookup(s) is keys] if name.endswith("*") else [name]
        for sec in targets:
            cur = values.setdefault(sec, {})
            for key, spec in keys.items():
                if key in cur:
                    continue
                if spec.required:
                    raise ConfigError(f"{_where(source, lines, sec, None)}: missing required key {key!r}")
                cur[key] = spec.default
    return ResolvedConfig(command, {s: dict(sorted(v.items())) for s, v in sorted(values.items())}, source, list(overrides))
