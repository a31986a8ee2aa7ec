"""Seeder settings.

Settings come from three layers, each overriding the previous one: the defaults of
`SeederConfig`, an optional :code:`key = value` file (keys are the field names), and
explicit command line options.
"""

from __future__ import annotations

import dataclasses
import logging
import os
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING, Any

from kvconf import KeyValueConfig
from seeder.choke import DEFAULT_UNCHOKED_FRACTION
from seeder.content import DEFAULT_PIECE_LENGTH

if TYPE_CHECKING:
    from collections.abc import Mapping

__all__ = [
    "SeederConfig",
    "load_config",
]

_LOGGER = logging.getLogger(__name__)

PEER_ID_PREFIX = b"-HS0100-"


def _random_peer_id() -> bytes:
    return PEER_ID_PREFIX + os.urandom(20 - len(PEER_ID_PREFIX)).hex()[:12].encode()


@dataclass(frozen=True)
class SeederConfig:
    file: Path = Path("content.bin")
    host: str = "0.0.0.0"  # noqa: S104
    port: int = 6881
    piece_length: int = DEFAULT_PIECE_LENGTH
    unchoked_fraction: float = DEFAULT_UNCHOKED_FRACTION
    idle_timeout_ms: int = 30_000
    handshake_timeout_ms: int = 3_000
    choke_tick_ms: int = 1_000
    stats: bool = False
    stats_interval_ms: int = 5_000
    peer_id: bytes = dataclasses.field(default_factory=_random_peer_id)

    def __post_init__(self) -> None:
        if not isinstance(self.file, Path):
            object.__setattr__(self, "file", Path(self.file))
        if isinstance(self.peer_id, str):
            object.__setattr__(self, "peer_id", self.peer_id.encode())
        if len(self.peer_id) != 20:  # noqa: PLR2004
            msg = f"Peer ID must be 20 bytes long, got {self.peer_id!r}"
            raise ValueError(msg)
        if not 0 <= self.port < 2**16:
            msg = f"Invalid port {self.port}"
            raise ValueError(msg)
        if not 0 < self.unchoked_fraction <= 1:
            msg = f"Unchoked fraction must be in (0, 1], got {self.unchoked_fraction}"
            raise ValueError(msg)
        for name in (
            "idle_timeout_ms",
            "handshake_timeout_ms",
            "choke_tick_ms",
            "stats_interval_ms",
        ):
            if getattr(self, name) <= 0:
                msg = f"{name} must be positive, got {getattr(self, name)}"
                raise ValueError(msg)

    def replace(self, **changes: Any) -> SeederConfig:
        """Return a copy in which the given fields are overridden; `None` values are skipped."""
        return dataclasses.replace(
            self, **{key: value for key, value in changes.items() if value is not None}
        )

    @classmethod
    def from_mapping(cls, values: Mapping[str, Any]) -> SeederConfig:
        names = {field.name for field in dataclasses.fields(cls)}
        unknown = sorted(set(values) - names)
        if unknown:
            msg = f"Unknown seeder settings: {', '.join(unknown)}"
            raise ValueError(msg)
        return cls().replace(**values)


def load_config(filename: Path | str) -> SeederConfig:
    """Read a :code:`key = value` seeder configuration file."""
    config = KeyValueConfig(filename)
    values = config.as_dict()
    repeated = sorted(key for key, value in values.items() if isinstance(value, list))
    if repeated:
        msg = f"{filename} sets {', '.join(repeated)} more than once"
        raise ValueError(msg)
    if "peer_id" in values:
        values["peer_id"] = str(values["peer_id"])
    _LOGGER.debug(f"Loaded seeder settings from {filename}: {values}")
    return SeederConfig.from_mapping(values)
