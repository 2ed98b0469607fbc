"""Scenario-level figures of merit: proportional fairness, Jain's index, spectrum use."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .scenario import Channel


@dataclass(frozen=True)
class PfValue:
    value: float
    starved: bool

    def __float__(self) -> float:
        return self.value


def proportional_fairness(x: Iterable[float]) -> PfValue:
    """Sum of natural-log throughputs; -inf with ``starved=True`` if any entry is <= 0."""
    arr = np.asarray(list(x), dtype=float)
    if arr.size == 0:
        raise ValueError("empty throughput vector")
    if np.any(~np.isfinite(arr)):
        raise ValueError("throughputs must be finite")
    if np.any(arr <= 0):
        return PfValue(-math.inf, True)
    return PfValue(float(np.log(arr).sum()), False)


def jain_index(x: Iterable[float]) -> float:
    arr = np.asarray(list(x), dtype=float)
    if arr.size == 0:
        raise ValueError("empty throughput vector")
    if np.any(arr < 0) or np.any(~np.isfinite(arr)):
        raise ValueError("throughputs must be finite and non-negative")
    sq = float((arr * arr).sum())
    if sq == 0.0:
        raise ValueError("Jain's index is undefined for an all-zero vector")
    # normalise first so huge bit/s values cannot overflow the square
    arr = arr / arr.max()
    return float(arr.sum() ** 2 / (arr.size * (arr * arr).sum()))


def covered_channels(alloc: Sequence[Channel], n: int) -> np.ndarray:
    occ = np.zeros(n, dtype=bool)
    for ch in alloc:
        if not ch.fits(n):
            raise ValueError(f"channel {ch} outside 1..{n}")
        occ[ch.low - 1: ch.high] = True
    return occ


def spectrum_utilization(alloc: Sequence[Channel], n: int) -> float:
    """Fraction of the ``n`` basic channels used by at least one WLAN."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return float(covered_channels(alloc, n).mean())


@dataclass(frozen=True)
class MetricsReport:
    aggregate_throughput_mbps: float
    proportional_fairness: float
    starved: bool
    jain_index: float
    spectrum_utilization: float

    def as_dict(self) -> dict:
        return {
            "aggregate_throughput_mbps": self.aggregate_throughput_mbps,
            "proportional_fairness": self.proportional_fairness,
            "starved": self.starved,
            "jain_index": self.jain_index,
            "spectrum_utilization": self.spectrum_utilization,
        }


def metrics_report(result, scenario, per: str = "wlan") -> MetricsReport:
    """Build a report from a solved scenario.

    ``per`` selects whether fairness is measured over WLAN totals (default)
    or over individual nodes.
    """
    if per == "wlan":
        x = np.asarray(list(result.wlan_throughput().values()), dtype=float)
    elif per == "node":
        x = np.asarray(result.throughput_bps, dtype=float)
    else:
        raise ValueError("per must be 'wlan' or 'node'")
    pf = proportional_fairness(x)
    jfi = jain_index(x) if np.any(x > 0) else 0.0
    return MetricsReport(
        aggregate_throughput_mbps=float(x.sum()) / 1e6,
        proportional_fairness=pf.value,
        starved=pf.starved,
        jain_index=jfi,
        spectrum_utilization=spectrum_utilization(scenario.channels, scenario.n_basic_channels),
    )
