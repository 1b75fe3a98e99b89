"""Sectioned ``key = value`` documents with line-accurate diagnostics.

Shared lexical layer for platform, scenario and fault-campaign files.
Whole-line comments start with ``#`` or ``;``. Duplicate sections or keys
are errors.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from fractions import Fraction


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None, key: str | None = None) -> None:
        where = f"line {line}: " if line is not None else ""
        super().__init__(f"{where}{message}")
        self.line = line
        self.key = key


class ConfigSyntaxError(ConfigError):
    pass


class MissingField(ConfigError):
    def __init__(self, key: str, section: str, line: int | None = None) -> None:
        super().__init__(f"[{section}] is missing required key {key!r}", line, key)


class UnknownKey(ConfigError):
    def __init__(self, key: str, section: str, line: int) -> None:
        super().__init__(f"unknown key {key!r} in [{section}]", line, key)


class InvalidValue(ConfigError):
    pass


@dataclass
class Entry:
    value: str
    line: int


@dataclass
class Section:
    name: str
    line: int
    entries: dict[str, Entry] = field(default_factory=dict)

    def require(self, key: str) -> Entry:
        entry = self.entries.get(key)
        if entry is None:
            raise MissingField(key, self.name, self.line)
        return entry

    def check_keys(self, allowed: set[str] | frozenset[str]) -> None:
        for key, entry in self.entries.items():
            if key not in allowed:
                raise UnknownKey(key, self.name, entry.line)

    def int(self, key: str, default: int | None = None) -> int:
        entry = self.entries.get(key)
        if entry is None:
            if default is None:
                raise MissingField(key, self.name, self.line)
            return default
        return parse_int(entry, key)

    def str(self, key: str, default: str | None = None) -> str:
        entry = self.entries.get(key)
        if entry is None:
            if default is None:
                raise MissingField(key, self.name, self.line)
            return default
        return unquote(entry.value, entry.line)


_SECTION = re.compile(r"^\[([^\[\]]+)\]$")
_KEYVAL = re.compile(r"^([^=\s][^=]*?)\s*=\s*(.*)$")


def parse(text: str) -> list[Section]:
    sections: list[Section] = []
    seen: set[str] = set()
    current: Section | None = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line[0] in "#;":
            continue
        m = _SECTION.match(line)
        if m:
            name = m.group(1).strip()
            if name in seen:
                raise ConfigSyntaxError(f"duplicate section [{name}]", lineno)
            seen.add(name)
            current = Section(name, lineno)
            sections.append(current)
            continue
        m = _KEYVAL.match(line)
        if not m:
            raise ConfigSyntaxError(f"expected 'key = value' or '[section]', got {line!r}", lineno)
        if current is None:
            raise ConfigSyntaxError("key outside of any section", lineno)
        key = m.group(1).strip()
        if key in current.entries:
            raise ConfigSyntaxError(f"duplicate key {key!r} in [{current.name}]", lineno)
        current.entries[key] = Entry(m.group(2).strip(), lineno)
    return sections


def parse_int(entry: Entry, key: str = "") -> int:
    try:
        return int(entry.value.replace("_", ""), 0)
    except ValueError:
        raise InvalidValue(f"{key or 'value'}: expected an integer, got {entry.value!r}", entry.line, key) from None


def parse_fraction(entry: Entry, key: str = "") -> Fraction:
    try:
        return Fraction(entry.value)
    except (ValueError, ZeroDivisionError):
        raise InvalidValue(f"{key or 'value'}: expected a number, got {entry.value!r}", entry.line, key) from None


def parse_bool(entry: Entry, key: str = "") -> bool:
    v = entry.value.lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise InvalidValue(f"{key or 'value'}: expected a boolean, got {entry.value!r}", entry.line, key)


def unquote(value: str, line: int | None = None) -> str:
    if len(value) >= 2 and value[0] == value[-1] == '"':
        try:
            return value[1:-1].encode("latin-1", "backslashreplace").decode("unicode_escape")
        except UnicodeDecodeError as exc:
            raise InvalidValue(f"bad escape in {value!r}: {exc}", line) from None
    return value


def quote(text: str) -> str:
    return '"' + text.encode("unicode_escape").decode("ascii").replace('"', '\\"') + '"'


def fmt_hex(value: int) -> str:
    return f"0x{value:08x}"


def render(sections: list[tuple[str, list[tuple[str, str]]]]) -> str:
    out: list[str] = []
    for name, entries in sections:
        if out:
            out.append("")
        out.append(f"[{name}]")
        out.extend(f"{k} = {v}" for k, v in entries)
    return "\n".join(out) + "\n"
