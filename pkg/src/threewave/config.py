"""Reader for the sectioned key-value scenario format.

See ``docs/config.md`` for the grammar.  Parsing never stops at the first
problem: every lexical and structural error is collected with its line and
column so the caller can report them together as a :class:`ConfigError`.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Tuple


@dataclass(frozen=True)
class Issue:
    line: int
    col: int
    message: str

    def __str__(self):
        return f"line {self.line}, col {self.col}: {self.message}"


class ConfigError(ValueError):
    def __init__(self, issues: List[Issue]):
        self.issues = list(issues)
        super().__init__("\n".join(str(i) for i in self.issues))


@dataclass(frozen=True)
class Call:
    """A function-style literal such as ``linspace(0, 1, 5)``."""
    name: str
    args: Tuple[Any, ...]


@dataclass(frozen=True)
class Entry:
    value: Any
    line: int
    col: int


_TOKEN = re.compile(r"""
    (?P<ws>\s+)
  | (?P<num>[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<punct>[\[\](),])
""", re.VERBOSE)

_SECTION = re.compile(r"^\[\s*([A-Za-z_][A-Za-z0-9_.]*)\s*\]$")
_KEY = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*(\[\s*[+-]?\d+(\s*,\s*[+-]?\d+)*\s*\])?$")


class _ValueParser:
    def __init__(self, text: str, line: int, col0: int):
        self.line = line
        self.toks: List[Tuple[str, str, int]] = []
        pos = 0
        while pos < len(text):
            m = _TOKEN.match(text, pos)
            if not m:
                raise ConfigError([Issue(line, col0 + pos, f"unexpected character {text[pos]!r}")])
            kind = m.lastgroup
            if kind != "ws":
                self.toks.append((kind, m.group(), col0 + pos))
            pos = m.end()
        self.i = 0
        self.end_col = col0 + len(text)

    def _peek(self):
        return self.toks[self.i] if self.i < len(self.toks) else ("eof", "", self.end_col)

    def _take(self, want: Optional[str] = None):
        tok = self._peek()
        if want is not None and tok[1] != want:
            found = "end of line" if tok[0] == "eof" else repr(tok[1])
            raise ConfigError([Issue(self.line, tok[2], f"expected {want!r}, found {found}")])
        self.i += 1
        return tok

    def parse(self):
        if not self.toks:
            raise ConfigError([Issue(self.line, self.end_col, "missing value")])
        v = self._value()
        tok = self._peek()
        if tok[0] != "eof":
            raise ConfigError([Issue(self.line, tok[2], f"unexpected trailing token {tok[1]!r}")])
        return v

    def _number(self):
        kind, text, col = self._take()
        if kind != "num":
            raise ConfigError([Issue(self.line, col, f"expected a number, found {text!r}")])
        return float(text) if any(ch in text for ch in ".eE") else int(text)

    def _value(self):
        kind, text, col = self._peek()
        if kind == "num":
            return self._number()
        if kind == "ident":
            self._take()
            if text in ("true", "false"):
                return text == "true"
            if self._peek()[1] == "(":
                self._take("(")
                args = [self._number()]
                while self._peek()[1] == ",":
                    self._take(",")
                    args.append(self._number())
                self._take(")")
                return Call(text, tuple(args))
            return text
        if text == "(":
            self._take("(")
            re_part = self._number()
            self._take(",")
            im_part = self._number()
            self._take(")")
            return complex(re_part, im_part)
        if text == "[":
            self._take("[")
            items = []
            if self._peek()[1] != "]":
                items.append(self._value())
                while self._peek()[1] == ",":
                    self._take(",")
                    items.append(self._value())
            self._take("]")
            return items
        found = "end of line" if kind == "eof" else repr(text)
        raise ConfigError([Issue(self.line, col, f"expected a value, found {found}")])


def parse_value(text: str, line: int = 1, col: int = 1):
    return _ValueParser(text, line, col).parse()


def parse_sections(text: str) -> Tuple[Dict[str, Dict[str, Entry]], Dict[str, int], List[Issue]]:
    """Split into ``{section: {key: Entry}}``, the line of each section
    header, and the issues found.

    Lines with errors are skipped so later validation can still report on
    the rest of the file.
    """
    out: Dict[str, Dict[str, Entry]] = {}
    headers: Dict[str, int] = {}
    issues: List[Issue] = []
    section: Optional[str] = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        body = raw.split("#", 1)[0].rstrip()
        stripped = body.lstrip()
        if not stripped:
            continue
        indent = len(body) - len(stripped)
        if stripped.startswith("["):
            m = _SECTION.match(stripped)
            if not m:
                issues.append(Issue(lineno, indent + 1, f"malformed section header {stripped!r}"))
                section = ""  # swallow its keys without cascading errors
                continue
            section = m.group(1)
            if section in out:
                issues.append(Issue(lineno, indent + 1, f"duplicate section [{section}]"))
            out.setdefault(section, {})
            headers.setdefault(section, lineno)
            continue
        if "=" not in stripped:
            issues.append(Issue(lineno, indent + 1, "expected 'key = value'"))
            continue
        key_part, val_part = stripped.split("=", 1)
        key = key_part.strip()
        if section is None:
            issues.append(Issue(lineno, indent + 1, f"key {key!r} outside of any section"))
            continue
        if section == "":
            continue
        if not _KEY.match(key):
            issues.append(Issue(lineno, indent + 1, f"malformed key {key!r}"))
            continue
        key = re.sub(r"\s+", "", key)
        val_col = indent + len(key_part) + 2 + (len(val_part) - len(val_part.lstrip()))
        try:
            value = parse_value(val_part.strip(), lineno, val_col)
        except ConfigError as exc:
            issues.extend(exc.issues)
            continue
        if key in out[section]:
            issues.append(Issue(lineno, indent + 1, f"duplicate key {key!r} in [{section}]"))
            continue
        out[section][key] = Entry(value, lineno, indent + 1)
    return out, headers, issues
