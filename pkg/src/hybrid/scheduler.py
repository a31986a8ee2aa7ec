"""Cooperative event loop, preemptive thread pools, and migration between them.

A task is an :code:`async def` body. While it is *attached* it runs on the event
loop thread and only gives up control at one of the suspendable operations of this
package (`yield_now`, `.sync.sleep`, `.io.io_wait`, condition variable waits,
`attach`, `detached` ...). Everything in between two of those points runs without
any other attached task interleaving, which is what lets attached tasks share plain
Python objects without a lock.

A task can be moved to a thread pool with `attach` and is then *detached*: it runs
preemptively on a pool worker, where blocking calls are harmless. Calling `attach`
again with the reference it returned moves the task back.

.. code-block:: python

    from hybrid import scheduler

    async def resolve() -> str:
        previous = await scheduler.attach(scheduler.default_pool_ref())
        name = slow_blocking_call()
        await scheduler.attach(previous)
        return name

    runtime = scheduler.Runtime()
    handle = runtime.spawn(resolve)
    runtime.run()
    print(handle.result())
"""

from __future__ import annotations

import enum
import heapq
import inspect
import itertools
import logging
import os
import selectors
import socket
import threading
import time
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields
from typing import TYPE_CHECKING, Any, Callable, TypeVar, Union

import kvconf

if TYPE_CHECKING:
    from collections.abc import Awaitable, Coroutine
    from types import TracebackType

    from hybrid.sync import AbortToken

__all__ = [
    "AlreadyRunning",
    "DetachedModeViolation",
    "HybridError",
    "NotInTask",
    "Runtime",
    "RuntimeShutDown",
    "RuntimeStats",
    "SchedulerKind",
    "SchedulerRef",
    "Stalled",
    "TaskHandle",
    "TaskState",
    "UnknownScheduler",
    "attach",
    "attached",
    "attached_scope",
    "current_task",
    "default_pool_ref",
    "detached",
    "detached_scope",
    "loop_ref",
    "spawn",
    "yield_now",
]

_LOGGER = logging.getLogger(__name__)

T = TypeVar("T")
TaskBody = Union[Callable[[], "Coroutine[Any, Any, Any]"], "Coroutine[Any, Any, Any]"]

POOL_SIZE_VARIABLE = "HS_POOL_SIZE"


class HybridError(Exception):
    """Base class of the errors raised by the runtime."""


class RuntimeShutDown(HybridError):
    """The runtime has finished running and accepts no more work."""


class AlreadyRunning(HybridError):
    """`Runtime.run` was entered while the loop is already running."""


class DetachedModeViolation(HybridError):
    """An attached-only operation was used by a task running on a thread pool."""


class NotInTask(HybridError):
    """A suspendable operation was awaited outside of a runtime task."""


class UnknownScheduler(HybridError):
    """A scheduler reference that does not belong to the task's runtime."""


class Stalled(HybridError):
    """Live tasks remain, but no timer, descriptor or pool can ever wake them."""


class SchedulerKind(enum.Enum):
    EVENT_LOOP = "event-loop"
    THREAD_POOL = "thread-pool"


@dataclass(frozen=True)
class SchedulerRef:
    """Opaque name of the event loop or of one thread pool.

    Two references are equal if and only if they name the same scheduler.
    """

    kind: SchedulerKind
    id: int

    @property
    def is_pool(self) -> bool:
        return self.kind is SchedulerKind.THREAD_POOL


class TaskState(enum.Enum):
    READY = "ready"
    RUNNING = "running"
    SUSPENDED = "suspended"
    DETACHED = "detached"
    DONE = "done"


@dataclass
class RuntimeStats:
    """Counters of one runtime; all but `live_tasks` and `detached_tasks` only grow."""

    tasks_spawned: int = 0
    context_switches: int = 0
    pool_dispatches: int = 0
    live_tasks: int = 0
    yields: int = 0
    io_registrations: int = 0
    timeouts_fired: int = 0
    detached_tasks: int = 0

    def snapshot(self) -> RuntimeStats:
        return RuntimeStats(**self.as_dict())

    def as_dict(self) -> dict[str, int]:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def dump(self) -> str:
        """Render the counters as :code:`key=value` lines."""
        return kvconf.dump(self.as_dict())


_REF_IDS = itertools.count(1)
_TASK_IDS = itertools.count(1)
_MIN_TIMERS_TO_COMPACT = 100
_local = threading.local()


def current_task() -> TaskHandle | None:
    """Return the task whose code is executing on this OS thread, if any."""
    return getattr(_local, "task", None)


class _Op(enum.Enum):
    YIELD = enum.auto()
    PARK = enum.auto()
    ATTACH = enum.auto()


class _Trap:
    """What a task hands to its driver when it suspends.

    Awaiting a trap suspends the awaiting coroutine exactly once; the value the
    driver resumes it with becomes the result of the :code:`await`.
    """

    __slots__ = ("arg", "op", "reason", "sent")

    def __init__(self, op: _Op, arg: Any = None, reason: str = "") -> None:
        self.op = op
        self.arg = arg
        self.reason = reason
        self.sent = False

    def __await__(self) -> _Trap:
        return self

    def __iter__(self) -> _Trap:
        return self

    def __next__(self) -> _Trap:
        return self.send(None)

    def send(self, value: Any) -> _Trap:
        if self.sent:
            raise StopIteration(value)
        self.sent = True
        return self

    def throw(self, exc: Any, val: Any = None, _tb: Any = None) -> _Trap:
        if isinstance(exc, BaseException):
            raise exc
        raise exc if val is None else val

    def close(self) -> None:
        pass


class TaskHandle:
    """Identity and completion state of a spawned task."""

    __slots__ = (
        "_coro",
        "_error",
        "_joiners",
        "_result",
        "_runtime",
        "_throw",
        "_timer",
        "_value",
        "id",
        "reason",
        "scheduler",
        "state",
    )

    def __init__(
        self, runtime: Runtime, coro: Coroutine[Any, Any, Any], scheduler: SchedulerRef
    ) -> None:
        self.id = next(_TASK_IDS)
        self.state = TaskState.READY
        self.reason = ""
        self.scheduler = scheduler
        self._runtime = runtime
        self._coro: Coroutine[Any, Any, Any] | None = coro
        self._value: Any = None
        self._throw: BaseException | None = None
        self._result: Any = None
        self._error: BaseException | None = None
        self._joiners: deque[TaskHandle] | None = None
        self._timer: list[Any] | None = None

    def __repr__(self) -> str:
        name = getattr(self._coro, "__qualname__", "finished")
        return f"<TaskHandle {self.id} {name} {self.state.value}>"

    @property
    def runtime(self) -> Runtime:
        return self._runtime

    @property
    def done(self) -> bool:
        return self.state is TaskState.DONE

    @property
    def detached(self) -> bool:
        return self.scheduler.kind is SchedulerKind.THREAD_POOL

    def result(self) -> Any:
        """Return the value of the finished body, or raise the error it raised."""
        if not self.done:
            msg = f"{self!r} has not finished"
            raise RuntimeError(msg)
        if self._error is not None:
            raise self._error
        return self._result

    def exception(self) -> BaseException | None:
        if not self.done:
            msg = f"{self!r} has not finished"
            raise RuntimeError(msg)
        return self._error

    async def join(self) -> Any:
        """Suspend until this task is done, then return its result."""
        _require_attached("join")
        if not self.done:
            await _Trap(_Op.PARK, self, "join")
        return self.result()

    def _enlist(self, waiter: TaskHandle) -> None:
        if self._joiners is None:
            self._joiners = deque()
        self._joiners.append(waiter)


class _ThreadPool:
    """Preemptive workers that drive detached tasks until they migrate away."""

    def __init__(self, runtime: Runtime, ref: SchedulerRef, size: int) -> None:
        self.ref = ref
        self.size = size
        self._runtime = runtime
        self._executor: ThreadPoolExecutor | None = None

    def submit(self, task: TaskHandle) -> None:
        if self._executor is None:
            self._executor = ThreadPoolExecutor(
                max_workers=self.size, thread_name_prefix=f"hybrid-pool-{self.ref.id}"
            )
        self._executor.submit(self._drive, task)

    def shutdown(self) -> None:
        if self._executor is not None:
            self._executor.shutdown(wait=True)
            self._executor = None

    def _drive(self, task: TaskHandle) -> None:
        runtime = self._runtime
        coro = task._coro
        assert coro is not None  # noqa: S101
        _local.task = task
        try:
            while True:
                try:
                    if task._throw is not None:
                        exc, task._throw = task._throw, None
                        trap = coro.throw(exc)
                    else:
                        trap = coro.send(task._value)
                except StopIteration as stop:
                    runtime._post(_Notice.FINISH, task, (stop.value, None))
                    return
                except Exception as exc:  # noqa: BLE001
                    runtime._post(_Notice.FINISH, task, (None, exc))
                    return
                task._value = None
                if isinstance(trap, _Trap) and trap.op is _Op.ATTACH:
                    if trap.arg == self.ref:
                        task._value = self.ref
                        continue
                    runtime._post(_Notice.ATTACH, task, trap.arg)
                    return
                msg = f"{task!r} tried to suspend while detached"
                task._throw = DetachedModeViolation(msg)
        finally:
            _local.task = None


class _Notice(enum.Enum):
    SPAWN = enum.auto()
    ATTACH = enum.auto()
    FINISH = enum.auto()


class _IoWait:
    __slots__ = ("task", "token")

    def __init__(self, task: TaskHandle, token: AbortToken | None) -> None:
        self.task = task
        self.token = token


class Runtime:
    """One event loop plus its thread pools.

    The loop belongs to the thread that constructs the runtime; `run` must be
    called from that thread. `spawn` may be called from any thread.

    Args:
        pool_size: Number of workers of the default pool. If `None`, the
            :code:`HS_POOL_SIZE` environment variable is used, and failing that the
            number of processors.
    """

    def __init__(self, pool_size: int | None = None) -> None:
        default_size = _default_pool_size(pool_size)
        self.loop = SchedulerRef(SchedulerKind.EVENT_LOOP, next(_REF_IDS))
        self.stats = RuntimeStats()
        self.loop_thread_id = threading.get_ident()
        self._ready: deque[TaskHandle] = deque()
        self._timers: list[list[Any]] = []
        self._timer_seq = itertools.count()
        self._active_timers = 0
        self._cancelled_timers = 0
        self._io: dict[int, dict[int, _IoWait]] = {}
        self._inbox: deque[tuple[_Notice, TaskHandle, Any]] = deque()
        self._inbox_lock = threading.Lock()
        self._selector = selectors.DefaultSelector()
        self._wakeup_r, self._wakeup_w = socket.socketpair()
        self._wakeup_r.setblocking(False)
        self._wakeup_w.setblocking(False)
        self._selector.register(self._wakeup_r, selectors.EVENT_READ)
        self._pools: dict[SchedulerRef, _ThreadPool] = {}
        self._running = False
        self._closed = False
        self.default_pool = self.new_pool(default_size)

    def __enter__(self) -> Runtime:
        return self

    def __exit__(
        self,
        exc_type: type[BaseException] | None,
        exc: BaseException | None,
        tb: TracebackType | None,
    ) -> None:
        self.close()

    @property
    def closed(self) -> bool:
        return self._closed

    @property
    def timer_entries(self) -> int:
        """Size of the timer heap, cancelled entries included."""
        return len(self._timers)

    def new_pool(self, size: int) -> SchedulerRef:
        """Create an additional thread pool and return its reference."""
        self._check_open()
        if size < 1:
            msg = f"Pool size must be positive, got {size}"
            raise ValueError(msg)
        ref = SchedulerRef(SchedulerKind.THREAD_POOL, next(_REF_IDS))
        self._pools[ref] = _ThreadPool(self, ref, size)
        return ref

    def pool_size(self, ref: SchedulerRef) -> int:
        return self._pools[ref].size

    def knows(self, ref: SchedulerRef) -> bool:
        return ref == self.loop or ref in self._pools

    def spawn(self, body: TaskBody) -> TaskHandle:
        """Enqueue a new attached task at the tail of the ready queue.

        The body never starts inside this call; it runs when the loop reaches it.
        """
        coro = body if inspect.iscoroutine(body) else body()  # type: ignore[operator]
        if self._closed:
            coro.close()
            msg = "Cannot spawn: the runtime has shut down"
            raise RuntimeShutDown(msg)
        task = TaskHandle(self, coro, self.loop)
        if threading.get_ident() == self.loop_thread_id:
            self._admit(task)
        else:
            self._post(_Notice.SPAWN, task, None)
        return task

    def run(self) -> None:
        """Drive the loop until no task, timer or I/O wait is left, then shut down."""
        if self._running:
            msg = "The event loop is already running"
            raise AlreadyRunning(msg)
        self._check_open()
        if threading.get_ident() != self.loop_thread_id:
            msg = "run() must be called from the thread that created the runtime"
            raise RuntimeError(msg)
        self._running = True
        try:
            self._loop()
        finally:
            self._running = False
            self.close()

    def close(self) -> None:
        """Stop the pools and release the loop's descriptors."""
        if self._closed:
            return
        self._closed = True
        for pool in self._pools.values():
            pool.shutdown()
        self._selector.close()
        self._wakeup_r.close()
        self._wakeup_w.close()

    # Loop internals. Everything below runs on the loop thread unless it says
    # otherwise.

    def _check_open(self) -> None:
        if self._closed:
            msg = "The runtime has shut down"
            raise RuntimeShutDown(msg)

    def _admit(self, task: TaskHandle) -> None:
        self.stats.tasks_spawned += 1
        self.stats.live_tasks += 1
        self._ready.append(task)

    def _post(self, notice: _Notice, task: TaskHandle, arg: Any) -> None:
        """Hand work to the loop thread; safe from any thread."""
        with self._inbox_lock:
            self._inbox.append((notice, task, arg))
        try:
            self._wakeup_w.send(b"\0")
        except OSError:
            pass

    def _loop(self) -> None:
        ready = self._ready
        stats = self.stats
        while True:
            if self._inbox:
                self._drain_inbox()
            if not ready and not self._active_timers and not self._io:
                if stats.live_tasks == 0:
                    return
                if stats.detached_tasks == 0 and not self._inbox:
                    msg = (
                        f"{stats.live_tasks} task(s) are suspended, but nothing is"
                        " left that could wake them"
                    )
                    raise Stalled(msg)
            self._poll(0 if ready or self._inbox else self._next_timeout())
            if self._active_timers:
                self._fire_timers()
            for _ in range(len(ready)):
                self._step(ready.popleft())

    def _drain_inbox(self) -> None:
        with self._inbox_lock:
            notices = list(self._inbox)
            self._inbox.clear()
        for notice, task, arg in notices:
            if notice is _Notice.SPAWN:
                self._admit(task)
            elif notice is _Notice.ATTACH:
                self.stats.detached_tasks -= 1
                self._migrate(task, arg)
            else:
                self.stats.detached_tasks -= 1
                self._finish(task, *arg)

    def _next_timeout(self) -> float | None:
        timers = self._timers
        while timers and timers[0][2] is None:
            heapq.heappop(timers)
            self._cancelled_timers -= 1
        if not timers:
            return None
        return max(0.0, timers[0][0] - time.monotonic())

    def _poll(self, timeout: float | None) -> None:
        for key, mask in self._selector.select(timeout):
            fd = key.fd
            if key.fileobj is self._wakeup_r:
                try:
                    while self._wakeup_r.recv(4096):
                        pass
                except BlockingIOError:
                    pass
                continue
            waiters = self._io.get(fd)
            if waiters is None:
                continue
            for event in (selectors.EVENT_READ, selectors.EVENT_WRITE):
                if mask & event and event in waiters:
                    self._release_waiter(fd, event, "ready")

    def _fire_timers(self) -> None:
        timers = self._timers
        now = time.monotonic()
        while timers and timers[0][0] <= now:
            entry = heapq.heappop(timers)
            task = entry[2]
            if task is None:
                self._cancelled_timers -= 1
                continue
            entry[2] = None
            self._active_timers -= 1
            task._timer = None
            self._wake(task, None)

    def _step(self, task: TaskHandle) -> None:
        coro = task._coro
        assert coro is not None  # noqa: S101
        task.state = TaskState.RUNNING
        self.stats.context_switches += 1
        _local.task = task
        try:
            if task._throw is not None:
                exc, task._throw = task._throw, None
                trap = coro.throw(exc)
            else:
                value, task._value = task._value, None
                trap = coro.send(value)
        except StopIteration as stop:
            self._finish(task, stop.value, None)
            return
        except Exception as exc:  # noqa: BLE001
            self._finish(task, None, exc)
            return
        finally:
            _local.task = None
        if type(trap) is not _Trap:
            msg = f"{task!r} awaited {trap!r}, which is not a runtime operation"
            task._throw = TypeError(msg)
            self._ready.append(task)
            task.state = TaskState.READY
            return
        op = trap.op
        if op is _Op.YIELD:
            task.state = TaskState.READY
            self._ready.append(task)
        elif op is _Op.PARK:
            task.state = TaskState.SUSPENDED
            task.reason = trap.reason
            if trap.arg is not None:
                trap.arg._enlist(task)
        else:
            self._migrate(task, trap.arg)

    def _migrate(self, task: TaskHandle, target: SchedulerRef) -> None:
        previous = task.scheduler
        task.scheduler = target
        task._value = previous
        if target == self.loop:
            task.state = TaskState.READY
            self._ready.append(task)
            return
        task.state = TaskState.DETACHED
        self.stats.pool_dispatches += 1
        self.stats.detached_tasks += 1
        self._pools[target].submit(task)

    def _wake(self, task: TaskHandle, value: Any) -> None:
        task._value = value
        task.state = TaskState.READY
        task.reason = ""
        self._ready.append(task)

    def _finish(self, task: TaskHandle, result: Any, error: BaseException | None) -> None:
        task.state = TaskState.DONE
        task.scheduler = self.loop
        task._result = result
        task._error = error
        task._coro = None
        self.stats.live_tasks -= 1
        joiners = task._joiners
        if error is not None and not joiners:
            _LOGGER.warning(f"Task {task.id} failed", exc_info=error)
        if joiners:
            task._joiners = None
            for waiter in joiners:
                self._wake(waiter, None)

    # Timers

    def _sleep_until(self, task: TaskHandle, deadline: float) -> None:
        entry = [deadline, next(self._timer_seq), task]
        heapq.heappush(self._timers, entry)
        self._active_timers += 1
        task._timer = entry

    def _interrupt_sleep(self, task: TaskHandle) -> bool:
        """Wake a task sleeping in `.sync.sleep` before its deadline."""
        entry = task._timer
        if entry is None or entry[2] is None:
            return False
        entry[2] = None
        self._active_timers -= 1
        self._cancelled_timers += 1
        task._timer = None
        self._wake(task, None)
        if (
            len(self._timers) > _MIN_TIMERS_TO_COMPACT
            and 2 * self._cancelled_timers > len(self._timers)
        ):
            self._compact_timers()
        return True

    def _compact_timers(self) -> None:
        """Drop cancelled entries, which otherwise stay until their deadline."""
        live = [entry for entry in self._timers if entry[2] is not None]
        heapq.heapify(live)
        self._timers = live
        self._cancelled_timers = 0

    # I/O waiters

    def _has_waiter(self, fd: int, event: int) -> bool:
        waiters = self._io.get(fd)
        return waiters is not None and event in waiters

    def _add_waiter(
        self, fd: int, event: int, task: TaskHandle, token: AbortToken | None
    ) -> None:
        """Register `task` as the one waiter of `event` on `fd`.

        The task is later woken with :code:`"ready"`, :code:`"aborted"` (its token
        fired) or :code:`"closed"` (the descriptor was hung up). Selector errors for
        bad descriptors propagate unchanged.
        """
        waiters = self._io.get(fd)
        mask = event
        if waiters:
            for other in waiters:
                mask |= other
            self._selector.modify(fd, mask)
        else:
            self._selector.register(fd, mask)
        if waiters is None:
            waiters = self._io[fd] = {}
        waiters[event] = _IoWait(task, token)
        self.stats.io_registrations += 1
        if token is not None:
            token._on_fire(lambda: self._release_waiter(fd, event, "aborted"))

    def _release_waiter(self, fd: int, event: int, outcome: Any) -> None:
        waiters = self._io.get(fd)
        if waiters is None:
            return
        waiter = waiters.pop(event, None)
        if waiter is None:
            return
        if waiters:
            mask = 0
            for other in waiters:
                mask |= other
            self._selector.modify(fd, mask)
        else:
            del self._io[fd]
            self._selector.unregister(fd)
        if waiter.token is not None:
            waiter.token._on_fire(None)
        self._wake(waiter.task, outcome)

    def _hangup(self, fd: int) -> int:
        waiters = self._io.get(fd)
        if not waiters:
            return 0
        events = list(waiters)
        for event in events:
            self._release_waiter(fd, event, "closed")
        return len(events)



def _default_pool_size(requested: int | None) -> int:
    if requested is not None:
        return requested
    raw = os.environ.get(POOL_SIZE_VARIABLE)
    if raw is None:
        return os.cpu_count() or 1
    try:
        size = int(raw)
    except ValueError:
        size = 0
    if size < 1:
        msg = f"{POOL_SIZE_VARIABLE} must be a positive integer, got {raw!r}"
        raise ValueError(msg)
    return size


def _require_task(operation: str) -> TaskHandle:
    task = current_task()
    if task is None:
        msg = f"{operation}() can only be used inside a runtime task"
        raise NotInTask(msg)
    return task


def _require_attached(operation: str) -> TaskHandle:
    task = _require_task(operation)
    if task.scheduler.kind is SchedulerKind.THREAD_POOL:
        msg = f"{operation}() is not allowed in a detached task"
        raise DetachedModeViolation(msg)
    return task


def spawn(body: TaskBody) -> TaskHandle:
    """Spawn a sibling task on the runtime of the calling task."""
    return _require_task("spawn").runtime.spawn(body)


def loop_ref() -> SchedulerRef:
    """Reference of the event loop of the calling task."""
    return _require_task("loop_ref").runtime.loop


def default_pool_ref() -> SchedulerRef:
    """Reference of the default thread pool of the calling task."""
    return _require_task("default_pool_ref").runtime.default_pool


def yield_now() -> Awaitable[None]:
    """Move the calling task to the tail of the ready queue."""
    task = _require_attached("yield_now")
    task.runtime.stats.yields += 1
    return _Trap(_Op.YIELD)


async def attach(target: SchedulerRef) -> SchedulerRef:
    """Continue the calling task under `target` and return its previous scheduler.

    Nothing moves if `target` is the current scheduler.
    """
    task = _require_task("attach")
    runtime = task.runtime
    runtime._check_open()
    if target == task.scheduler:
        return target
    if not runtime.knows(target):
        msg = f"{target} does not belong to this runtime"
        raise UnknownScheduler(msg)
    return await _Trap(_Op.ATTACH, target, "attach")


class detached_scope:  # noqa: N801
    """Run the body of an :code:`async with` block on a thread pool.

    The task is attached back to the scheduler it came from on every way out of the
    block, including :code:`return` and errors.
    """

    def __init__(self, pool: SchedulerRef | None = None) -> None:
        self._pool = pool
        self._previous: SchedulerRef | None = None

    async def __aenter__(self) -> SchedulerRef:
        task = _require_attached("detached")
        pool = task.runtime.default_pool if self._pool is None else self._pool
        if not pool.is_pool:
            msg = f"{pool} is not a thread pool"
            raise UnknownScheduler(msg)
        self._previous = await attach(pool)
        return pool

    async def __aexit__(
        self,
        exc_type: type[BaseException] | None,
        exc: BaseException | None,
        tb: TracebackType | None,
    ) -> None:
        assert self._previous is not None  # noqa: S101
        await attach(self._previous)


class attached_scope:  # noqa: N801
    """Run the body of an :code:`async with` block attached to the event loop."""

    def __init__(self) -> None:
        self._previous: SchedulerRef | None = None

    async def __aenter__(self) -> SchedulerRef:
        task = _require_task("attached")
        self._previous = await attach(task.runtime.loop)
        return task.runtime.loop

    async def __aexit__(
        self,
        exc_type: type[BaseException] | None,
        exc: BaseException | None,
        tb: TracebackType | None,
    ) -> None:
        assert self._previous is not None  # noqa: S101
        await attach(self._previous)


async def detached(
    block: Callable[[], T | Awaitable[T]], *, pool: SchedulerRef | None = None
) -> T:
    """Call `block` on a thread pool and return its result once attached again.

    `block` may be a plain function (blocking calls are fine) or an :code:`async`
    function, whose suspendable operations then run in detached mode.
    """
    async with detached_scope(pool):
        result = block()
        if inspect.isawaitable(result):
            result = await result
    return result  # type: ignore[return-value]


async def attached(block: Callable[[], T | Awaitable[T]]) -> T:
    """Call `block` attached to the event loop, then go back where the task was."""
    async with attached_scope():
        result = block()
        if inspect.isawaitable(result):
            result = await result
    return result  # type: ignore[return-value]

