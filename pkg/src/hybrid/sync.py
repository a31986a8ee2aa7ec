"""Condition variables, sleeping, and timeouts built from helper tasks.

Timeouts follow the helper-task idiom: `with_timeout` spawns a short-lived task that
sleeps for the duration of the timeout and then fires an `AbortToken`. The guarded
operation passes the token to the I/O wait it performs (see `hybrid.io.io_wait`);
firing the token wakes that wait with an aborted outcome. Most timeouts never
expire, so the helper is normally woken early, finds its token disarmed, and exits.

All operations here are attached-only.
"""

from __future__ import annotations

import enum
import logging
import time
from collections import deque
from dataclasses import dataclass
from typing import TYPE_CHECKING, Callable, Generic, TypeVar

from hybrid.scheduler import (
    TaskHandle,
    _Op,
    _require_attached,
    _Trap,
    current_task,
    yield_now,
)

if TYPE_CHECKING:
    from collections.abc import Awaitable

__all__ = [
    "TIMED_OUT",
    "AbortToken",
    "Completed",
    "CondVar",
    "TimedOut",
    "TokenState",
    "interrupt",
    "sleep",
    "with_timeout",
]

_LOGGER = logging.getLogger(__name__)

T = TypeVar("T")


class CondVar:
    """FIFO condition variable for attached tasks.

    Signals are not remembered: signalling a condition variable nobody waits on has
    no effect.
    """

    __slots__ = ("_waiters",)

    def __init__(self) -> None:
        self._waiters: deque[TaskHandle] = deque()

    def __len__(self) -> int:
        return len(self._waiters)

    def wait(self) -> Awaitable[None]:
        """Suspend the calling task until a signal or broadcast reaches it."""
        _require_attached("condvar_wait")
        return _Trap(_Op.PARK, self, "condvar")

    def signal(self) -> None:
        """Move the longest waiting task to the ready queue."""
        task = _require_attached("condvar_signal")
        if self._waiters:
            task.runtime._wake(self._waiters.popleft(), None)

    def broadcast(self) -> None:
        """Move every waiting task to the ready queue, in the order they came."""
        task = _require_attached("condvar_broadcast")
        waiters = self._waiters
        while waiters:
            task.runtime._wake(waiters.popleft(), None)

    def _enlist(self, task: TaskHandle) -> None:
        self._waiters.append(task)


class TokenState(enum.Enum):
    ARMED = "armed"
    FIRED = "fired"
    DISARMED = "disarmed"


class AbortToken:
    """Single-shot link between a timeout helper and a pending I/O wait.

    A token leaves the armed state exactly once, either fired or disarmed; every
    later `fire` or `disarm` is a no-op.
    """

    __slots__ = ("_fire_callback", "_helper", "state")

    def __init__(self) -> None:
        self.state = TokenState.ARMED
        self._fire_callback: Callable[[], None] | None = None
        self._helper: TaskHandle | None = None

    def __repr__(self) -> str:
        return f"<AbortToken {self.state.value}>"

    @property
    def armed(self) -> bool:
        return self.state is TokenState.ARMED

    @property
    def fired(self) -> bool:
        return self.state is TokenState.FIRED

    def fire(self) -> bool:
        """Abort the wait registered against this token, if it is still armed."""
        if self.state is not TokenState.ARMED:
            return False
        self.state = TokenState.FIRED
        callback, self._fire_callback = self._fire_callback, None
        if callback is not None:
            callback()
        return True

    def disarm(self) -> bool:
        """Make the token inert and release its timeout helper, if still armed."""
        if self.state is not TokenState.ARMED:
            return False
        self.state = TokenState.DISARMED
        self._fire_callback = None
        helper, self._helper = self._helper, None
        if helper is not None and not helper.done:
            interrupt(helper)
        return True

    def _on_fire(self, callback: Callable[[], None] | None) -> None:
        self._fire_callback = callback


@dataclass(frozen=True)
class Completed(Generic[T]):
    """Outcome of `with_timeout` when the operation finished in time."""

    value: T


class TimedOut:
    """Outcome of a guarded operation whose timeout expired first."""

    __slots__ = ()

    def __repr__(self) -> str:
        return "TIMED_OUT"


TIMED_OUT = TimedOut()


async def sleep(duration_ms: float) -> None:
    """Suspend the calling task for at least `duration_ms` milliseconds.

    A duration of zero or less is the same as `.scheduler.yield_now`.
    """
    task = _require_attached("sleep")
    if duration_ms <= 0:
        await yield_now()
        return
    task.runtime._sleep_until(task, time.monotonic() + duration_ms / 1000)
    await _Trap(_Op.PARK, None, "sleep")


def interrupt(task: TaskHandle) -> bool:
    """Wake `task` early from `sleep`; returns whether it was sleeping."""
    return task.runtime._interrupt_sleep(task)


async def _timeout_helper(token: AbortToken, duration_ms: float) -> None:
    if not token.armed:
        return
    await sleep(duration_ms)
    if token.fire():
        _LOGGER.debug(f"Timeout of {duration_ms} ms expired")
        task = current_task()
        assert task is not None  # noqa: S101
        task.runtime.stats.timeouts_fired += 1


async def with_timeout(
    duration_ms: float, operation: Callable[[AbortToken], Awaitable[T]]
) -> Completed[T] | TimedOut:
    """Run an abortable operation, giving up after `duration_ms` milliseconds.

    The operation receives a fresh `AbortToken` and must pass it to the waits it
    performs. Exactly one outcome is returned: `Completed` when the operation
    finished with the token still armed, `TIMED_OUT` when the token fired first.
    Errors raised by the operation propagate after the token is disarmed.
    """
    task = _require_attached("with_timeout")
    token = AbortToken()
    helper = task.runtime.spawn(_timeout_helper(token, duration_ms))
    token._helper = helper
    try:
        result = await operation(token)
    except BaseException:
        token.disarm()
        raise
    if not token.disarm():
        return TIMED_OUT
    return Completed(result)

