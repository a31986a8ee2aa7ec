"""Round-robin choking.

Interested peers sit in a ring. Every tick unchokes the next `quota` peers after the
cursor and chokes all others, so most peers are choked at any time while each of
them gets its turn:

>>> manager = ChokeManager(unchoked_fraction=0.25)
>>> for peer in "abcdefgh":
...     manager.add(peer)
>>> manager.quota
2
>>> manager.tick().unchoke
['a', 'b']
>>> decision = manager.tick()
>>> decision.unchoke, decision.choke
(['c', 'd'], ['a', 'b'])
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Generic, TypeVar

__all__ = [
    "DEFAULT_UNCHOKED_FRACTION",
    "ChokeDecision",
    "ChokeManager",
]

DEFAULT_UNCHOKED_FRACTION = 0.10

P = TypeVar("P")


@dataclass
class ChokeDecision(Generic[P]):
    """Peers whose choke state has to change; peers that keep their state are absent."""

    unchoke: list[P] = field(default_factory=list)
    choke: list[P] = field(default_factory=list)

    def __bool__(self) -> bool:
        return bool(self.unchoke or self.choke)


class ChokeManager(Generic[P]):
    """Decides which interested peers are unchoked.

    The manager only keeps the bookkeeping; sending the corresponding messages is
    up to the caller. At every moment the number of unchoked peers is at most
    :code:`max(1, ceil(unchoked_fraction * len(ring)))`.
    """

    def __init__(self, unchoked_fraction: float = DEFAULT_UNCHOKED_FRACTION) -> None:
        if not 0 < unchoked_fraction <= 1:
            msg = f"Unchoked fraction must be in (0, 1], got {unchoked_fraction}"
            raise ValueError(msg)
        self.unchoked_fraction = unchoked_fraction
        self.ring: list[P] = []
        self.cursor = 0
        self._unchoked: dict[P, None] = {}

    def __contains__(self, peer: object) -> bool:
        return peer in self._unchoked or peer in self.ring

    def __len__(self) -> int:
        return len(self.ring)

    @property
    def unchoked(self) -> list[P]:
        return list(self._unchoked)

    @property
    def quota(self) -> int:
        if not self.ring:
            return 0
        return max(1, math.ceil(self.unchoked_fraction * len(self.ring)))

    def is_unchoked(self, peer: P) -> bool:
        return peer in self._unchoked

    def add(self, peer: P) -> None:
        """Put a newly interested peer in the ring, just behind the cursor.

        It stays choked until a tick reaches it.
        """
        if peer in self.ring:
            return
        self.ring.insert(self.cursor, peer)
        self.cursor = (self.cursor + 1) % len(self.ring)

    def remove(self, peer: P) -> ChokeDecision[P]:
        """Drop a peer that lost interest or disconnected.

        The returned decision chokes the peer itself, if it was unchoked, and any peers
        that exceed the quota of the smaller ring.
        """
        decision: ChokeDecision[P] = ChokeDecision()
        if peer not in self.ring:
            return decision
        position = self.ring.index(peer)
        del self.ring[position]
        if position < self.cursor:
            self.cursor -= 1
        if self.cursor >= len(self.ring):
            self.cursor = 0
        if peer in self._unchoked:
            del self._unchoked[peer]
            decision.choke.append(peer)
        while len(self._unchoked) > self.quota:
            extra = next(reversed(self._unchoked))
            del self._unchoked[extra]
            decision.choke.append(extra)
        return decision

    def tick(self) -> ChokeDecision[P]:
        """Advance the cursor by one quota and unchoke the peers it passed."""
        size = len(self.ring)
        if not size:
            return ChokeDecision()
        quota = self.quota
        selected = [self.ring[(self.cursor + i) % size] for i in range(quota)]
        self.cursor = (self.cursor + quota) % size
        decision = ChokeDecision(
            unchoke=[peer for peer in selected if peer not in self._unchoked],
            choke=[peer for peer in self._unchoked if peer not in selected],
        )
        self._unchoked = dict.fromkeys(selected)
        return decision
