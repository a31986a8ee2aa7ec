"""Spawn, memory and context switch microbenchmarks of the `hybrid` runtime."""

from __future__ import annotations

import gc
import logging
import mmap
import resource
import sys
import time
from pathlib import Path

import numpy as np
import pandas as pd

from hybrid.scheduler import Runtime, spawn, yield_now
from hybrid.sync import CondVar, sleep
from seeder.bench.report import BenchReport

__all__ = [
    "bench_spawn",
    "bench_switch",
    "current_rss",
    "peak_rss",
]

_LOGGER = logging.getLogger(__name__)

STATM = Path("/proc/self/statm")
MEMORY_BATCHES = 4
SETTLE_MS = 20


def current_rss() -> int:
    """Resident set size of this process in bytes.

    Falls back to the peak resident size where :file:`/proc` is not available.
    """
    try:
        fields = STATM.read_text().split()
        return int(fields[1]) * mmap.PAGESIZE
    except (OSError, IndexError, ValueError):
        return peak_rss()


def peak_rss() -> int:
    peak = resource.getrusage(resource.RUSAGE_SELF).ru_maxrss
    if sys.platform == "darwin":
        return peak
    return peak * 1024


async def _noop() -> None:
    pass


async def _park(gate: CondVar) -> None:
    await gate.wait()


def bench_spawn(n: int) -> BenchReport:
    """Measure how fast `n` tasks can be spawned and drained, and what a parked task costs.

    The memory slope is fitted over `MEMORY_BATCHES` steps of parked tasks, measured
    after a short idle pause each, so that it reflects steady state rather than
    allocator noise.
    """
    if n <= 0:
        return BenchReport(
            spawns_per_sec=0.0, bytes_per_task=0.0, peak_rss=peak_rss()
        )
    with Runtime(pool_size=1) as runtime:
        start = time.perf_counter()
        for _ in range(n):
            runtime.spawn(_noop())
        runtime.run()
        elapsed = time.perf_counter() - start
    spawns_per_sec = n / elapsed if elapsed > 0 else float("inf")
    counts, rss = _parked_memory(n)
    slope = float(np.polyfit(counts, rss, 1)[0]) if len(counts) > 1 else 0.0
    _LOGGER.info(f"Spawned {n} tasks in {elapsed:.3f} s, {slope:.0f} bytes per parked task")
    return BenchReport(
        spawns_per_sec=spawns_per_sec,
        bytes_per_task=max(slope, 0.0),
        peak_rss=peak_rss(),
        extra={"spawn_seconds": elapsed},
    )


def _parked_memory(n: int) -> tuple[list[int], list[int]]:
    counts: list[int] = []
    rss: list[int] = []
    batch = max(1, n // MEMORY_BATCHES)

    async def controller() -> None:
        gate = CondVar()
        parked = 0
        while True:
            gc.collect()
            await sleep(SETTLE_MS)
            counts.append(parked)
            rss.append(current_rss())
            if parked >= n:
                break
            size = min(batch, n - parked)
            for _ in range(size):
                spawn(_park(gate))
            parked += size
            await yield_now()
        gate.broadcast()

    with Runtime(pool_size=1) as runtime:
        runtime.spawn(controller)
        runtime.run()
    return counts, rss


async def _ping_pong(iterations: int) -> None:
    for _ in range(iterations):
        await yield_now()


def _switch_run(pairs: int, iterations: int) -> tuple[int, float]:
    with Runtime(pool_size=1) as runtime:
        for _ in range(2 * pairs):
            runtime.spawn(_ping_pong(iterations))
        before = runtime.stats.context_switches
        start = time.perf_counter()
        runtime.run()
        elapsed = time.perf_counter() - start
        switches = runtime.stats.context_switches - before
    return switches, elapsed


def bench_switch(pairs: int, iterations: int, runs: int = 1) -> BenchReport:
    """Let `pairs` pairs of tasks yield to each other `iterations` times each.

    With one pair on the ready queue the two tasks alternate strictly, so every
    resumption is a switch to the other task. The run is repeated `runs` times; the
    best and worst rate give the stability of the measurement.
    """
    if pairs <= 0 or iterations <= 0:
        return BenchReport(switches_per_sec=0.0, extra={"switch_stability": 1.0})
    rows = []
    for run in range(max(1, runs)):
        switches, elapsed = _switch_run(pairs, iterations)
        rows.append({
            "run": run,
            "switches": switches,
            "seconds": elapsed,
            "switches_per_sec": switches / elapsed if elapsed > 0 else float("inf"),
        })
    frame = pd.DataFrame(rows)
    _LOGGER.info(f"Switch runs:\n{frame}")
    return BenchReport(
        switches_per_sec=float(frame["switches_per_sec"].median()),
        extra={
            "switches": int(frame["switches"].iloc[-1]),
            "switch_stability": frame.bench.stability(),
        },
    )
