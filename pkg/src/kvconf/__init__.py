"""Reader and writer for line-oriented :code:`key = value` text.

The format is the one of Boost :code:`program_options` config files: one pair per
line, :code:`#` starts a comment, repeated keys collect into a list. The same
parser reads seeder configuration files and the :code:`key=value` report blocks
that the runtime, the seeder and the benchmarks print, so a report written by one
run can be loaded and diffed against another.
"""

from __future__ import annotations

from collections.abc import Iterator, Mapping
from typing import TYPE_CHECKING, Any

from . import lineparser

if TYPE_CHECKING:
    from pathlib import Path


class KeyValueConfig:
    """Data structure that holds the pairs of a :code:`key = value` file."""

    def __init__(self, filename: Path | str | None = None) -> None:
        self.__values: dict[str, Any] = {}
        self.__config_file: str | None = None
        if filename is not None:
            self.read_config(filename=filename, reset=True)

    @classmethod
    def from_text(cls, text: str) -> KeyValueConfig:
        """Parse a block of lines, for instance a report printed by a benchmark."""
        config = cls()
        for line in text.splitlines():
            config.append_value_from_line(line)
        return config

    def read_config(self, filename: Path | str, reset: bool = True) -> None:
        """Parse a config file and add its pairs to the internal `dict`."""
        self.__config_file = str(filename)
        if reset:
            self.__values = {}
        with open(filename) as stream:
            for line in stream:
                self.append_value_from_line(line)

    def append_value_from_line(self, line: str) -> None:
        """Smartly append a key-value pair from a line."""
        if lineparser.is_empty(line):
            return
        key, value = lineparser.get_key_value_pair(line)
        self.append_value(key, lineparser.string_to_value(value))

    def append_value(self, key: str, value: Any) -> None:
        """Append a key-value pair.

        A key that shows up again turns its value into a list of all values in order
        of appearance.
        """
        if key in self.__values:
            old_values = self.__values[key]
            if not isinstance(old_values, list):
                self.__values[key] = [old_values]
            self.__values[key].append(value)
        else:
            self.__values[key] = value

    def get(self, key: str, default: Any = None) -> Any:
        return self.__values.get(key, default)

    def as_dict(self) -> dict[str, Any]:
        return dict(self.__values)

    def __getitem__(self, key: str) -> Any:
        return self.__values[key]

    def __contains__(self, key: object) -> bool:
        return key in self.__values

    def __iter__(self) -> Iterator[str]:
        return iter(self.__values)

    def __len__(self) -> int:
        return len(self.__values)

    @property
    def config_file(self) -> str | None:
        return self.__config_file


def dump(values: Mapping[str, object]) -> str:
    """Render a mapping as a stable block of :code:`key=value` lines.

    Keys keep their insertion order so that two reports of the same kind can be
    compared line by line.
    """
    return "\n".join(lineparser.format_pair(k, v) for k, v in values.items())
