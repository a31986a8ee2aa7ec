"""Benchmark results: the :code:`key=value` report and per-run tables.

Repeated measurements are kept in `~pandas.DataFrame` objects, which get an extra
:code:`bench` namespace once this module is imported:

>>> import pandas as pd
>>> runs = pd.DataFrame({"switches_per_sec": [2.0e6, 2.5e6, 3.0e6]})
>>> runs.bench.stability()
1.5
"""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any

import matplotlib.pyplot as plt
import numpy as np
import pandas as pd

import kvconf

if TYPE_CHECKING:
    from pathlib import Path

    from matplotlib.axes import Axes
    from matplotlib.container import BarContainer
    from pandas.core.base import PandasObject

__all__ = [
    "BenchAccessor",
    "BenchReport",
    "draw_throughput_histogram",
    "save_throughput_histogram",
]

_LOGGER = logging.getLogger(__name__)


@dataclass
class BenchReport:
    """Outcome of one or more benchmarks.

    Metrics that were not measured stay `None` and are left out of the report text.
    Additional metrics of a benchmark go to `extra`.
    """

    spawns_per_sec: float | None = None
    switches_per_sec: float | None = None
    bytes_per_task: float | None = None
    aggregate_throughput: float | None = None
    peak_rss: int | None = None
    extra: dict[str, Any] = field(default_factory=dict)

    def as_dict(self) -> dict[str, Any]:
        values = {
            f.name: getattr(self, f.name)
            for f in dataclasses.fields(self)
            if f.name != "extra" and getattr(self, f.name) is not None
        }
        values.update(self.extra)
        return values

    def dump(self) -> str:
        """Render the report as one :code:`key=value` line per metric."""
        return kvconf.dump(self.as_dict())

    def merge(self, other: BenchReport) -> BenchReport:
        """Combine two reports; metrics of `other` win where both have a value."""
        merged = dataclasses.replace(self, extra={**self.extra, **other.extra})
        for f in dataclasses.fields(other):
            value = getattr(other, f.name)
            if f.name != "extra" and value is not None:
                setattr(merged, f.name, value)
        return merged

    @classmethod
    def from_text(cls, text: str) -> BenchReport:
        """Read back a report printed by `dump`."""
        values = kvconf.KeyValueConfig.from_text(text).as_dict()
        names = {f.name for f in dataclasses.fields(cls)} - {"extra"}
        known = {key: values.pop(key) for key in list(values) if key in names}
        return cls(**known, extra=values)


@pd.api.extensions.register_dataframe_accessor("bench")
class BenchAccessor:
    """Benchmark-specific accessor for a `~pandas.DataFrame` of repeated runs.

    See :doc:`pandas:development/extending`.
    """

    def __init__(self, pandas_object: PandasObject) -> None:
        self._obj = pandas_object

    def stability(self, column: str = "switches_per_sec") -> float:
        """Ratio of the best to the worst run; 1.0 means perfectly repeatable."""
        values = self._obj[column].to_numpy(dtype=float)  # type: ignore[index]
        if not len(values) or values.min() <= 0:
            return float("nan")
        return float(values.max() / values.min())

    def percentiles(
        self, column: str, quantiles: tuple[float, ...] = (50, 90, 99)
    ) -> dict[str, float]:
        values = self._obj[column].dropna().to_numpy(dtype=float)  # type: ignore[index]
        if not len(values):
            return {}
        results = np.percentile(values, quantiles)
        return {f"{column}_p{q:g}": float(r) for q, r in zip(quantiles, results)}

    def throughput(self) -> pd.Series:
        """Bytes per second of every row with :code:`bytes` and :code:`seconds` columns."""
        frame = self._obj
        seconds = frame["seconds"].where(frame["seconds"] > 0)  # type: ignore[index]
        return (frame["bytes"] / seconds).fillna(0.0)  # type: ignore[index]


def draw_throughput_histogram(
    peers: pd.DataFrame, plot_on: Axes | None = None, **kwargs: Any
) -> tuple[np.ndarray, np.ndarray, BarContainer]:
    """Histogram of the throughput of the simulated peers, in MB/s.

    Args:
        peers: Per-peer table as produced by `.simpeers.sim_peers`.
        plot_on: Axes to draw on. If `None`, the current `matplotlib` figure is used.
        kwargs: See `matplotlib.pyplot.hist` arguments
    """
    rates = peers.bench.throughput() / 1e6
    if plot_on is None:
        plot_on = plt.gca()
    kwargs.setdefault("bins", max(1, min(50, len(rates))))
    result = plot_on.hist(rates, **kwargs)
    plot_on.set_xlabel("throughput per peer [MB/s]")
    plot_on.set_ylabel("peers")
    return result  # type: ignore[return-value]


def save_throughput_histogram(peers: pd.DataFrame, filename: Path | str) -> None:
    figure, axes = plt.subplots()
    try:
        draw_throughput_histogram(peers, axes)
        figure.savefig(filename)
    finally:
        plt.close(figure)
    _LOGGER.info(f"Wrote throughput histogram to {filename}")
