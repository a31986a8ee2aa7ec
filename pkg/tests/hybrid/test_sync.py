from __future__ import annotations

import time

import pytest

from hybrid.io import Data, IoDirection, IoOutcome, io_wait, read_lazy
from hybrid.scheduler import (
    DetachedModeViolation,
    Runtime,
    current_task,
    detached,
    spawn,
    yield_now,
)
from hybrid.sync import (
    TIMED_OUT,
    AbortToken,
    Completed,
    CondVar,
    TokenState,
    sleep,
    with_timeout,
)
from tests.conftest import run_in_runtime

TOLERANCE = 0.05


def test_signal_without_waiters_is_not_remembered():
    log: list[str] = []

    async def body() -> None:
        gate = CondVar()
        gate.signal()
        gate.broadcast()

        async def waiter() -> None:
            await gate.wait()
            log.append("woken")

        spawn(waiter)
        await yield_now()
        assert len(gate) == 1
        log.append("checked")
        gate.signal()

    run_in_runtime(body)
    assert log == ["checked", "woken"]


def test_signal_wakes_in_wait_order():
    log: list[str] = []
    gate = CondVar()

    def make(name: str):
        async def waiter() -> None:
            await gate.wait()
            log.append(name)

        return waiter

    async def signaller() -> None:
        gate.signal()
        await yield_now()
        gate.signal()

    with Runtime(pool_size=1) as runtime:
        runtime.spawn(make("A"))
        runtime.spawn(make("B"))
        runtime.spawn(signaller)
        runtime.run()
    assert log == ["A", "B"]


def test_broadcast_wakes_all_in_wait_order():
    log: list[int] = []
    gate = CondVar()

    def make(index: int):
        async def waiter() -> None:
            await gate.wait()
            log.append(index)

        return waiter

    async def broadcaster() -> None:
        assert len(gate) == 3
        gate.broadcast()
        assert len(gate) == 0

    with Runtime(pool_size=1) as runtime:
        for index in range(3):
            runtime.spawn(make(index))
        runtime.spawn(broadcaster)
        runtime.run()
    assert log == [0, 1, 2]


def test_condvar_wait_is_attached_only():
    async def wait_detached() -> None:
        await CondVar().wait()

    async def body() -> None:
        await detached(wait_detached)

    with pytest.raises(DetachedModeViolation, match=r"condvar_wait"):
        run_in_runtime(body)


def test_sleep_zero_is_a_yield():
    log: list[str] = []

    async def sleeper() -> None:
        log.append("sleeper")
        await sleep(0)
        log.append("sleeper again")

    async def other() -> None:
        log.append("other")

    with Runtime(pool_size=1) as runtime:
        runtime.spawn(sleeper)
        runtime.spawn(other)
        runtime.run()
        assert runtime.stats.yields == 1
    assert log == ["sleeper", "other", "sleeper again"]


def test_sleep_duration():
    async def body() -> float:
        start = time.monotonic()
        await sleep(50)
        return time.monotonic() - start

    elapsed = run_in_runtime(body)
    assert 0.05 <= elapsed < 0.05 + TOLERANCE


def test_shorter_sleep_wakes_first():
    log: list[int] = []

    def make(duration: int):
        async def sleeper() -> None:
            await sleep(duration)
            log.append(duration)

        return sleeper

    with Runtime(pool_size=1) as runtime:
        runtime.spawn(make(30))
        runtime.spawn(make(10))
        runtime.run()
    assert log == [10, 30]


@pytest.mark.parametrize(
    ("actions", "state"),
    [
        (["fire"], TokenState.FIRED),
        (["disarm"], TokenState.DISARMED),
        (["fire", "disarm"], TokenState.FIRED),
        (["disarm", "fire"], TokenState.DISARMED),
        (["fire", "fire"], TokenState.FIRED),
    ],
)
def test_abort_token_is_single_shot(actions, state):
    token = AbortToken()
    assert token.armed
    results = [getattr(token, action)() for action in actions]
    assert results[0] is True
    assert not any(results[1:])
    assert token.state is state


def test_firing_token_runs_callback_once():
    calls: list[int] = []
    token = AbortToken()
    token._on_fire(lambda: calls.append(1))
    token.fire()
    token.fire()
    assert calls == [1]


def test_with_timeout_completes():
    tokens: list[AbortToken] = []

    async def operation(token: AbortToken) -> str:
        tokens.append(token)
        await sleep(10)
        return "done"

    async def body():
        return await with_timeout(200, operation)

    start = time.monotonic()
    assert run_in_runtime(body) == Completed("done")
    assert time.monotonic() - start < 0.2
    assert tokens[0].state is TokenState.DISARMED


def test_with_timeout_expires(socket_pair):
    silent, _ = socket_pair

    async def body():
        start = time.monotonic()
        result = await with_timeout(
            200, lambda token: io_wait(silent, IoDirection.IN, token)
        )
        return result, time.monotonic() - start

    with Runtime(pool_size=1) as runtime:
        handle = runtime.spawn(body)
        runtime.run()
        assert runtime.stats.timeouts_fired == 1
    result, elapsed = handle.result()
    assert result is TIMED_OUT
    assert 0.2 - TOLERANCE <= elapsed <= 0.2 + TOLERANCE


@pytest.mark.slow
def test_with_timeout_expires_repeatedly(socket_pair):
    silent, _ = socket_pair
    trials = 50

    async def body():
        outcomes = []
        for _ in range(trials):
            start = time.monotonic()
            result = await with_timeout(
                200, lambda token: io_wait(silent, IoDirection.IN, token)
            )
            outcomes.append((result, time.monotonic() - start))
        return outcomes

    with Runtime(pool_size=1) as runtime:
        handle = runtime.spawn(body)
        runtime.run()
        assert runtime.stats.timeouts_fired == trials
    for result, elapsed in handle.result():
        assert result is TIMED_OUT
        assert 0.2 - TOLERANCE <= elapsed <= 0.2 + TOLERANCE


def test_cancelled_timers_are_dropped_from_heap(socket_pair):
    left, right = socket_pair
    reads = 5_000

    async def body() -> list[int]:
        runtime = current_task().runtime  # type: ignore[union-attr]
        sizes = []
        for i in range(reads):
            right.send(b"x")
            result = await read_lazy(left, 16, 30_000)
            assert result == Data(b"x")
            if i % 500 == 0:
                sizes.append(runtime.timer_entries)
        await yield_now()
        sizes.append(runtime.timer_entries)
        return sizes

    start = time.monotonic()
    sizes = run_in_runtime(body)
    assert time.monotonic() - start < 10
    assert max(sizes) <= 2 * 100 + 1


def test_fired_token_aborts_io_wait(socket_pair):
    silent, _ = socket_pair

    async def body() -> IoOutcome:
        token = AbortToken()

        async def fire_later() -> None:
            await sleep(20)
            token.fire()

        spawn(fire_later)
        return await io_wait(silent, IoDirection.IN, token)

    assert run_in_runtime(body) is IoOutcome.ABORTED


def test_with_timeout_propagates_errors():
    async def operation(token: AbortToken) -> None:
        msg = "operation failed"
        raise ConnectionResetError(msg)

    async def body() -> None:
        await with_timeout(200, operation)

    start = time.monotonic()
    with pytest.raises(ConnectionResetError, match=r"operation failed"):
        run_in_runtime(body)
    assert time.monotonic() - start < 0.2


@pytest.mark.parametrize("calls", [100, 10_000])
def test_timeout_helpers_do_not_accumulate(calls):
    async def operation(token: AbortToken) -> int:
        return 1

    async def body() -> tuple[int, int]:
        runtime = current_task().runtime  # type: ignore[union-attr]
        baseline = runtime.stats.live_tasks
        completed = 0
        for _ in range(calls):
            result = await with_timeout(200, operation)
            completed += result.value  # type: ignore[union-attr]
        await yield_now()
        return completed, runtime.stats.live_tasks - baseline

    start = time.monotonic()
    assert run_in_runtime(body) == (calls, 0)
    assert time.monotonic() - start < 0.2 + calls * 1e-3


def test_sleeping_helper_is_released_early():
    async def operation(token: AbortToken) -> str:
        await sleep(5)
        return "fast"

    async def body() -> str:
        result = await with_timeout(60_000, operation)
        return result.value  # type: ignore[union-attr]

    start = time.monotonic()
    assert run_in_runtime(body) == "fast"
    assert time.monotonic() - start < 1
