import time

import pytest

from seeder.bench.micro import bench_spawn, bench_switch, current_rss, peak_rss


def test_rss():
    assert current_rss() > 0
    assert peak_rss() >= current_rss() // 2


def test_spawn_nothing():
    report = bench_spawn(0)
    assert report.spawns_per_sec == 0.0  # noqa: FURB152
    assert report.bytes_per_task == 0.0  # noqa: FURB152
    assert report.switches_per_sec is None


def test_spawn():
    report = bench_spawn(2_000)
    assert report.spawns_per_sec > 0
    assert report.bytes_per_task >= 0
    assert report.peak_rss > 0
    assert report.extra["spawn_seconds"] > 0


@pytest.mark.slow
def test_idle_tasks_are_cheap():
    start = time.monotonic()
    report = bench_spawn(100_000)
    assert time.monotonic() - start < 10
    assert report.extra["spawn_seconds"] < 5
    assert report.bytes_per_task <= 1024
    half = bench_spawn(50_000)
    assert report.bytes_per_task <= 2 * max(half.bytes_per_task, 1)


@pytest.mark.parametrize(("pairs", "iterations"), [(0, 10), (1, 0)])
def test_switch_nothing(pairs, iterations):
    report = bench_switch(pairs, iterations)
    assert report.switches_per_sec == 0.0  # noqa: FURB152
    assert report.extra["switch_stability"] == 1.0  # noqa: FURB152


def test_switch():
    report = bench_switch(2, 1_000, runs=2)
    assert report.switches_per_sec > 0
    assert report.extra["switches"] >= 4 * 1_000
    assert report.extra["switch_stability"] >= 1


@pytest.mark.slow
def test_million_switches():
    start = time.monotonic()
    report = bench_switch(1, 500_000, runs=3)
    assert time.monotonic() - start < 3 * 10
    assert report.extra["switches"] >= 1_000_000
    assert report.switches_per_sec * 10 >= 1_000_000
    assert report.extra["switch_stability"] < 3
