"""Helpers that parse and render single :code:`key = value` lines."""

from __future__ import annotations

__all__ = [
    "format_pair",
    "format_value",
    "get_key_value_pair",
    "is_commented",
    "is_empty",
    "string_to_value",
    "strip_comment",
]


import re

_KEY_PATTERN = re.compile(r"^[A-Za-z_][A-Za-z0-9_.\-]*$")


def get_key_value_pair(line: str) -> tuple[str, str]:
    """Split a line into its key and its value.

    Everything before the first equal sign is the key, everything after it is the
    value. Surrounding whitespace and trailing comments are dropped, so
    :code:`stats=true` and :code:`stats = true  # on` give the same pair.
    """
    content = strip_comment(line)
    key, sep, value = content.partition("=")
    key = key.strip()
    value = value.strip()
    if not sep or not _KEY_PATTERN.match(key) or not value:
        msg = f'Line "{content.strip()}" is not a key, value pair!'
        raise SyntaxError(msg)
    return key, value


def is_commented(line: str) -> bool:
    """Check if a line starts with a comment sign (#), ignoring whitespaces."""
    return line.lstrip().startswith("#")


def is_empty(line: str) -> bool:
    """Check if a line holds nothing but whitespace or a comment."""
    return not line.strip() or is_commented(line)


def strip_comment(line: str) -> str:
    """Remove the comment sign (:code:`#`) and everything after it."""
    return line.partition("#")[0]


def string_to_value(string: str) -> bool | float | int | str | None:
    """Attempt to convert a string to a `bool`, `int`, `float` or `None`."""
    lower_string = string.lower()
    if lower_string in {"true", "yes", "on"}:
        return True
    if lower_string in {"false", "no", "off"}:
        return False
    if lower_string == "none":
        return None
    try:
        return int(string, 0) if lower_string.startswith("0x") else int(string)
    except ValueError:
        pass
    try:
        return float(string)
    except ValueError:
        return string


def format_value(value: object) -> str:
    """Render a value so that :func:`string_to_value` reads it back."""
    if isinstance(value, bool):
        return "true" if value else "false"
    if value is None:
        return "none"
    if isinstance(value, float):
        return repr(float(value)).removesuffix(".0")
    if isinstance(value, (bytes, bytearray)):
        msg = f"Cannot render bytes as a value: {value!r}"
        raise TypeError(msg)
    return str(value)


def format_pair(key: str, value: object) -> str:
    """Render one :code:`key=value` report line."""
    if not _KEY_PATTERN.match(key):
        msg = f'"{key}" cannot be used as a key'
        raise ValueError(msg)
    return f"{key}={format_value(value)}"
