import math
from collections import Counter

import pytest

from seeder.choke import ChokeDecision, ChokeManager


def _bound(manager: ChokeManager) -> int:
    return max(1, math.ceil(manager.unchoked_fraction * len(manager)))


@pytest.mark.parametrize("fraction", [0, -0.1, 1.5])
def test_fraction_range(fraction):
    with pytest.raises(ValueError, match=r"in \(0, 1\]"):
        ChokeManager(fraction)


def test_empty_ring():
    manager: ChokeManager[str] = ChokeManager()
    assert manager.quota == 0
    assert not manager.tick()
    assert not manager.remove("ghost")


def test_ten_peers_rotate_one_at_a_time():
    manager: ChokeManager[int] = ChokeManager(0.10)
    for peer in range(10):
        manager.add(peer)
    seen = []
    for _ in range(10):
        decision = manager.tick()
        assert len(decision.unchoke) == 1
        assert len(manager.unchoked) == 1
        seen.extend(manager.unchoked)
    assert sorted(seen) == list(range(10))


def test_single_peer_always_unchoked():
    manager: ChokeManager[str] = ChokeManager(0.10)
    manager.add("only")
    assert manager.tick() == ChokeDecision(unchoke=["only"])
    for _ in range(5):
        assert not manager.tick()
        assert manager.is_unchoked("only")


def test_twenty_peers_get_two_slots_each():
    manager: ChokeManager[int] = ChokeManager(0.10)
    for peer in range(20):
        manager.add(peer)
    assert manager.quota == 2
    slots: Counter[int] = Counter()
    for _ in range(20):
        manager.tick()
        assert len(manager.unchoked) == 2
        slots.update(manager.unchoked)
    assert slots == Counter({peer: 2 for peer in range(20)})


@pytest.mark.parametrize(("peers", "fraction"), [(7, 0.1), (100, 0.1), (33, 0.25)])
def test_fairness(peers, fraction):
    manager: ChokeManager[int] = ChokeManager(fraction)
    for peer in range(peers):
        manager.add(peer)
    window = math.ceil(peers / manager.quota)
    for _ in range(3):
        unchoked = set()
        for _ in range(window):
            manager.tick()
            unchoked.update(manager.unchoked)
        assert unchoked == set(range(peers))


def test_new_peer_waits_for_its_turn():
    manager: ChokeManager[str] = ChokeManager(0.5)
    for peer in "abcd":
        manager.add(peer)
    assert manager.tick().unchoke == ["a", "b"]
    manager.add("e")
    assert not manager.is_unchoked("e")
    assert "e" in manager
    assert manager.ring == ["b", "e", "c", "d", "a"]
    decision = manager.tick()
    assert decision.unchoke == ["c", "d"]
    assert decision.choke == ["b"]
    assert manager.tick().unchoke == ["b", "e"]


def test_add_twice_is_ignored():
    manager: ChokeManager[str] = ChokeManager()
    manager.add("a")
    manager.add("a")
    assert len(manager) == 1


def test_remove_keeps_bound():
    manager: ChokeManager[int] = ChokeManager(0.10)
    for peer in range(20):
        manager.add(peer)
    manager.tick()
    assert manager.unchoked == [0, 1]
    for peer in range(19, 9, -1):
        decision = manager.remove(peer)
        assert len(manager.unchoked) <= _bound(manager)
        assert not decision.unchoke
    assert manager.unchoked == [0]
    decision = manager.remove(0)
    assert decision.choke == [0]
    assert 0 not in manager
    assert manager.tick().unchoke == [2]


def test_bound_holds_under_churn():
    manager: ChokeManager[int] = ChokeManager(0.10)
    next_peer = 0
    for step in range(200):
        if step % 3 == 0 or not len(manager):
            manager.add(next_peer)
            next_peer += 1
        elif step % 7 == 0:
            manager.remove(manager.ring[step % len(manager)])
        else:
            manager.tick()
        assert len(manager.unchoked) <= _bound(manager)
        assert set(manager.unchoked) <= set(manager.ring)
