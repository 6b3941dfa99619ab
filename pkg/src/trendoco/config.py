"""Minimal declarative config loading (TOML-compatible subset).

Supports what experiment configs need and nothing more: ``[table]`` /
``[table.sub]`` headers, ``key = value`` pairs with string, integer,
float, boolean and flat-array values, and ``#`` comments.  Files written
in this subset are valid TOML, so configs stay portable; parsing errors
carry line numbers.
"""

from __future__ import annotations

import re

__all__ = ["ConfigError", "parse_config", "load_config"]

_KEY_RE = re.compile(r"^[A-Za-z0-9_\-]+$")


class ConfigError(ValueError):
    """Malformed config file."""


def _strip_comment(line: str) -> str:
    out = []
    in_string = False
    for ch in line:
        if ch == '"':
            in_string = not in_string
        if ch == "#" and not in_string:
            break
        out.append(ch)
    return "".join(out).strip()


def _parse_scalar(token: str, lineno: int):
    token = token.strip()
    if not token:
        raise ConfigError(f"line {lineno}: empty value")
    if token.startswith('"'):
        if not token.endswith('"') or len(token) < 2:
            raise ConfigError(f"line {lineno}: unterminated string")
        return token[1:-1]
    if token == "true":
        return True
    if token == "false":
        return False
    try:
        return int(token)
    except ValueError:
        pass
    try:
        return float(token)
    except ValueError:
        raise ConfigError(f"line {lineno}: cannot parse value {token!r}") from None


def _parse_value(token: str, lineno: int):
    token = token.strip()
    if token.startswith("["):
        if not token.endswith("]"):
            raise ConfigError(f"line {lineno}: unterminated array")
        body = token[1:-1].strip()
        if not body:
            return []
        # Split on commas outside strings.
        items, depth, current, in_string = [], 0, [], False
        for ch in body:
            if ch == '"':
                in_string = not in_string
            if ch == "," and not in_string and depth == 0:
                items.append("".join(current))
                current = []
                continue
            if ch == "[" and not in_string:
                raise ConfigError(f"line {lineno}: nested arrays are not supported")
            current.append(ch)
        items.append("".join(current))
        return [_parse_scalar(item, lineno) for item in items]
    return _parse_scalar(token, lineno)


def parse_config(text: str) -> dict:
    """Parse config text into a nested dict."""
    root: dict = {}
    table = root
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = _strip_comment(raw)
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError(f"line {lineno}: malformed table header")
            path = line[1:-1].strip()
            if not path:
                raise ConfigError(f"line {lineno}: empty table name")
            table = root
            for part in path.split("."):
                part = part.strip()
                if not _KEY_RE.match(part):
                    raise ConfigError(f"line {lineno}: bad table name {part!r}")
                table = table.setdefault(part, {})
                if not isinstance(table, dict):
                    raise ConfigError(f"line {lineno}: {part!r} is not a table")
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, _, value = line.partition("=")
        key = key.strip()
        if not _KEY_RE.match(key):
            raise ConfigError(f"line {lineno}: bad key {key!r}")
        if key in table:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        table[key] = _parse_value(value, lineno)
    return root


def load_config(path) -> dict:
    with open(path) as fh:
        return parse_config(fh.read())
