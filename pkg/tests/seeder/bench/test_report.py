import math

import matplotlib.pyplot as plt
import pandas as pd
import pytest

from seeder.bench.report import (
    BenchReport,
    draw_throughput_histogram,
    save_throughput_histogram,
)


def test_dump_skips_unmeasured():
    report = BenchReport(spawns_per_sec=250000.0, peak_rss=1 << 20, extra={"n": 10})
    assert report.dump().splitlines() == [
        "spawns_per_sec=250000",
        "peak_rss=1048576",
        "n=10",
    ]


def test_from_text_reads_dump_back():
    report = BenchReport(
        switches_per_sec=2.5e6,
        aggregate_throughput=12.5e6,
        extra={"pattern": "random", "failures": 0},
    )
    restored = BenchReport.from_text(report.dump())
    assert restored == report


def test_merge():
    first = BenchReport(spawns_per_sec=1.0, extra={"a": 1, "b": 2})
    second = BenchReport(spawns_per_sec=2.0, switches_per_sec=3.0, extra={"b": 3})
    merged = first.merge(second)
    assert merged.spawns_per_sec == 2.0  # noqa: FURB152
    assert merged.switches_per_sec == 3.0  # noqa: FURB152
    assert merged.extra == {"a": 1, "b": 3}
    assert first.extra == {"a": 1, "b": 2}


@pytest.mark.parametrize(
    ("values", "expected"),
    [
        ([2.0e6, 2.5e6, 3.0e6], 1.5),
        ([1.0], 1.0),
        ([], math.nan),
        ([0.0, 1.0], math.nan),
    ],
)
def test_stability(values, expected):
    frame = pd.DataFrame({"switches_per_sec": values}, dtype=float)
    result = frame.bench.stability()
    if math.isnan(expected):
        assert math.isnan(result)
    else:
        assert result == pytest.approx(expected)


def test_percentiles():
    frame = pd.DataFrame({"latency": [float(i) for i in range(101)] + [math.nan]})
    assert frame.bench.percentiles("latency") == {
        "latency_p50": 50.0,
        "latency_p90": 90.0,
        "latency_p99": 99.0,
    }
    assert frame.bench.percentiles("latency", (25,)) == {"latency_p25": 25.0}
    empty = pd.DataFrame({"latency": [math.nan]})
    assert empty.bench.percentiles("latency") == {}


@pytest.fixture
def peers():
    return pd.DataFrame({
        "peer": [0, 1, 2],
        "bytes": [2_000_000, 1_000_000, 0],
        "seconds": [1.0, 0.5, 0.0],
    })


def test_throughput(peers):
    assert peers.bench.throughput().tolist() == [2e6, 2e6, 0.0]


def test_draw_throughput_histogram(peers):
    figure, axes = plt.subplots()
    counts, _, _ = draw_throughput_histogram(peers, axes, bins=2)
    assert counts.sum() == 3
    assert axes.get_xlabel() == "throughput per peer [MB/s]"
    plt.close(figure)


def test_save_throughput_histogram(peers, tmp_path):
    filename = tmp_path / "throughput.png"
    save_throughput_histogram(peers, filename)
    assert filename.stat().st_size > 0
