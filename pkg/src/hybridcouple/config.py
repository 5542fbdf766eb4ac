"""Line-oriented sectioned key/value format used by scenario files.

::

    # comment
    [section]
    key = 1.5                 # number
    list = 0.5, 0.15, 1.0     # comma-separated list
    flag = true
    mode = coupled            # bare word
    expr = "mg.V_bus / R_DC"  # quoted string, taken verbatim

Every value remembers its line and column so later validation errors can
point at it.  Duplicate sections and duplicate keys are errors.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

from .errors import ConfigError

_SECTION = re.compile(r"^\[\s*([A-Za-z_][\w.]*)\s*\]$")
_KEY = re.compile(r"^[A-Za-z_][\w.]*$")
_WORD = re.compile(r"^[A-Za-z_][\w.+-]*$")


@dataclass(frozen=True)
class Entry:
    section: str
    key: str
    raw: str
    line: int
    column: int            # 1-based column of the value
    quoted: bool = False

    @property
    def path(self):
        return f"{self.section}.{self.key}"

    def error(self, msg):
        return ConfigError(msg, field=self.path, line=self.line, column=self.column)

    def _items(self):
        if self.quoted:
            raise self.error("expected a number or list, got a quoted string")
        return [s.strip() for s in self.raw.split(",")]

    def as_float(self):
        items = self._items()
        if len(items) != 1:
            raise self.error(f"expected one number, got {len(items)} values")
        return _number(items[0], self)

    def as_int(self):
        v = self.as_float()
        if v != int(v):
            raise self.error(f"expected an integer, got {self.raw!r}")
        return int(v)

    def as_floats(self):
        return tuple(_number(s, self) for s in self._items())

    def as_bool(self):
        v = self.raw.strip().lower()
        if self.quoted or v not in ("true", "false"):
            raise self.error(f"expected true or false, got {self.raw!r}")
        return v == "true"

    def as_word(self, choices=None):
        v = self.raw.strip()
        if self.quoted or not _WORD.match(v):
            raise self.error(f"expected a bare word, got {self.raw!r}")
        if choices is not None and v not in choices:
            raise self.error(f"expected one of {sorted(choices)}, got {v!r}")
        return v

    def as_string(self):
        if not self.quoted:
            raise self.error("expected a quoted string")
        return self.raw


def _number(text, entry):
    try:
        v = float(text)
    except ValueError:
        raise entry.error(f"expected a number, got {text!r}") from None
    if not math.isfinite(v):
        raise entry.error(f"expected a finite number, got {text!r}")
    return v


def _strip_comment(text, line_no):
    """Text before an unquoted ``#``; quotes must balance."""
    in_q = False
    for i, ch in enumerate(text):
        if ch == '"':
            in_q = not in_q
        elif ch == "#" and not in_q:
            return text[:i]
    if in_q:
        raise ConfigError("unterminated string", line=line_no, column=text.index('"') + 1)
    return text


@dataclass
class Document:
    sections: dict          # name -> {key: Entry}
    section_lines: dict     # name -> line of its header
    source: str = "<string>"

    def section(self, name):
        return self.sections.get(name, {})


def parse(text: str, source: str = "<string>") -> Document:
    sections, lines_of = {}, {}
    current = None
    for no, raw_line in enumerate(text.splitlines(), start=1):
        body = _strip_comment(raw_line, no)
        stripped = body.strip()
        if not stripped:
            continue
        indent = len(body) - len(body.lstrip())
        if stripped.startswith("["):
            m = _SECTION.match(stripped)
            if not m:
                raise ConfigError(f"malformed section header {stripped!r}", line=no, column=indent + 1)
            current = m.group(1)
            if current in sections:
                raise ConfigError(f"section [{current}] repeated (first at line {lines_of[current]})",
                                  line=no, column=indent + 1)
            sections[current] = {}
            lines_of[current] = no
            continue
        if "=" not in stripped:
            raise ConfigError("expected 'key = value'", line=no, column=indent + 1)
        if current is None:
            raise ConfigError("key outside of any [section]", line=no, column=indent + 1)
        eq = body.index("=")
        key = body[:eq].strip()
        if not _KEY.match(key):
            raise ConfigError(f"invalid key {key!r}", line=no, column=indent + 1)
        rest = body[eq + 1:]
        value = rest.strip()
        col = eq + 2 + (len(rest) - len(rest.lstrip()))
        if not value:
            raise ConfigError(f"missing value for {key!r}", line=no, column=eq + 2)
        quoted = value.startswith('"')
        if quoted:
            if not (value.endswith('"') and len(value) >= 2) or value.count('"') != 2:
                raise ConfigError("a quoted value must be a single \"...\" string",
                                  line=no, column=col)
            value = value[1:-1]
            col += 1
        elif '"' in value:
            raise ConfigError("unexpected quote inside an unquoted value", line=no,
                              column=col + value.index('"'))
        if key in sections[current]:
            first = sections[current][key].line
            raise ConfigError(f"key {key!r} repeated in [{current}] (first at line {first})",
                              field=f"{current}.{key}", line=no, column=indent + 1)
        sections[current][key] = Entry(current, key, value, no, col, quoted)
    return Document(sections, lines_of, source)
