"""Monte Carlo studies over random channel allocations.

Realization ``k`` of a study always draws from ``numpy.random.default_rng(base_seed + k)``,
so any subset of realizations can be re-run on its own.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from . import allocation as al
from .ctmn import solve_fixed_point
from .metrics import jain_index, spectrum_utilization
from .phy import ALLOWED_WIDTHS
from .scenario import NetworkScenario, make_scenario

SCHEMES = ("random", "ac", "waterfilling", "colored", "pf")
AXES = ("n", "m", "cw")


@dataclass(frozen=True)
class WidthPolicy:
    """``fixed`` uses one width; ``uniform`` and ``ac`` draw from the allowed widths up to ``c``."""

    kind: str
    c: int

    def __post_init__(self):
        if self.kind not in ("fixed", "uniform", "ac"):
            raise ValueError(f"unknown width policy {self.kind!r}")
        if self.c not in ALLOWED_WIDTHS:
            raise ValueError(f"width must be one of {ALLOWED_WIDTHS}")

    @classmethod
    def parse(cls, text: str) -> "WidthPolicy":
        kind, _, c = text.partition(":")
        if kind == "ac" and not c:
            c = "8"
        try:
            return cls(kind, int(c))
        except ValueError as e:
            raise ValueError(f"bad width policy {text!r}: {e}") from None

    def widths(self, n: int) -> tuple[int, ...]:
        """Allowed widths for ``n`` basic channels; widths that do not fit are dropped."""
        ws = (self.c,) if self.kind == "fixed" else tuple(c for c in ALLOWED_WIDTHS if c <= self.c)
        fit = tuple(c for c in ws if c <= n)
        if not fit:
            # fixed width wider than the band: fall back to the widest allowed width that fits
            fit = (max(c for c in ALLOWED_WIDTHS if c <= n),)
        return fit

    def __str__(self):
        return f"{self.kind}:{self.c}"


@dataclass(frozen=True)
class SweepSpec:
    axis: str
    values: tuple[int, ...]
    m: int = 6
    n: int = 8
    cw: int = 16
    width_policy: WidthPolicy = WidthPolicy("fixed", 1)
    scheme: str = "random"
    w_max: int = 8
    realizations: int = 2000
    base_seed: int = 0
    nodes_per_wlan: int = 2
    scenario: NetworkScenario | None = None  # template for cw sweeps over a fixed topology

    def __post_init__(self):
        if self.axis not in AXES:
            raise ValueError(f"axis must be one of {AXES}")
        if not self.values:
            raise ValueError("axis range is empty")
        if self.realizations < 1:
            raise ValueError("realizations must be >= 1")
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}")
        if any(v < 1 for v in self.values):
            raise ValueError("axis values must be >= 1")

    def point(self, value: int) -> tuple[int, int, int]:
        m, n, cw = self.m, self.n, self.cw
        if self.axis == "m":
            m = value
        elif self.axis == "n":
            n = value
        else:
            cw = value
        return m, n, cw


def parse_range(text: str) -> tuple[int, ...]:
    """``LO:HI:STEP`` (inclusive) or ``LO:HI`` or a single integer."""
    parts = text.split(":")
    try:
        nums = [int(p) for p in parts]
    except ValueError:
        raise ValueError(f"bad range {text!r}") from None
    if len(nums) == 1:
        return (nums[0],)
    if len(nums) not in (2, 3):
        raise ValueError(f"bad range {text!r}")
    lo, hi = nums[0], nums[1]
    step = nums[2] if len(nums) == 3 else 1
    if step <= 0 or hi < lo:
        raise ValueError(f"bad range {text!r}")
    return tuple(range(lo, hi + 1, step))


# --- one realization ---------------------------------------------------------------

@dataclass(frozen=True)
class Realization:
    index: int
    plan: al.AllocationPlan
    wlan_ids: tuple[str, ...]
    throughput_mbps: np.ndarray

    @property
    def aggregate(self) -> float:
        return float(self.throughput_mbps.sum())

    @property
    def jfi(self) -> float:
        x = self.throughput_mbps
        return jain_index(x) if np.any(x > 0) else 0.0

    @property
    def utilization(self) -> float:
        return spectrum_utilization(self.plan.channels, self.plan.n)


def draw_plan(scheme: str, m: int, n: int, policy: WidthPolicy, w_max: int,
              rng: np.random.Generator, scenario: NetworkScenario | None = None) -> al.AllocationPlan:
    if scheme == "random":
        return al.random_allocation(m, n, policy.widths(n), rng)
    if scheme == "ac":
        return al.ac_allocation(m, n, policy.widths(n), rng)
    if scheme in ("waterfilling", "pf"):
        return al.waterfilling(m, n, w_max)
    if scheme == "colored":
        if scenario is None:
            return al.waterfilling(m, n, w_max)
        return al.color_and_waterfill(scenario, w_max)[0]
    raise ValueError(f"unknown scheme {scheme!r}")


def wlan_throughput_mbps(scenario: NetworkScenario) -> np.ndarray:
    mode = "wlan" if scenario.all_saturated else "node"
    wt = solve_fixed_point(scenario, mode=mode).wlan_throughput()
    return np.array([wt[w] for w in scenario.wlan_ids]) / 1e6


def realize(scheme: str, m: int, n: int, cw: int, policy: WidthPolicy, w_max: int, seed: int,
            index: int = 0, nodes_per_wlan: int = 2,
            template: NetworkScenario | None = None) -> Realization:
    rng = np.random.default_rng(seed)
    if template is not None:
        base = template.map_nodes(lambda nd: replace(nd, cw_slots=cw, mean_backoff_us=None))
        m, n = base.n_wlans, base.n_basic_channels
    else:
        base = make_scenario([al.Channel(1, 1)] * m, n, nodes_per_wlan=nodes_per_wlan, cw_slots=cw)
    if scheme == "pf":
        rots = al.waterfilling_rotations(m, n, w_max)
        sched = al.pf_schedule(rots, base)
        x = sched.wlan_throughput / 1e6
        return Realization(index, sched.plans[int(np.argmax(sched.weights))], tuple(base.wlan_ids), x)
    plan = draw_plan(scheme, m, n, policy, w_max, rng, base)
    sc = base.with_channels(plan.channels)
    return Realization(index, plan, tuple(sc.wlan_ids), wlan_throughput_mbps(sc))


def _realize_args(args):
    return realize(*args)


def run_realizations(jobs: list[tuple], workers: int = 1) -> list[Realization]:
    """Evaluate realization jobs, in parallel if ``workers > 1``; output order follows ``jobs``."""
    if workers <= 1 or len(jobs) < 2:
        return [realize(*j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(_realize_args, jobs, chunksize=max(1, len(jobs) // (8 * workers))))


# --- summaries -------------------------------------------------------------------

@dataclass(frozen=True)
class Summary:
    mean_throughput_mbps: float     # expected throughput of one WLAN
    stderr_mbps: float
    aggregate_mbps: float
    aggregate_stderr_mbps: float
    jfi: float
    jfi_stderr: float
    spectrum_utilization: float
    realizations: int


def _stderr(v: np.ndarray) -> float:
    return float(v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else 0.0


def summarize(reals: Sequence[Realization]) -> Summary:
    per_wlan = np.array([r.throughput_mbps.mean() for r in reals])
    agg = np.array([r.aggregate for r in reals])
    jfi = np.array([r.jfi for r in reals])
    util = np.array([r.utilization for r in reals])
    return Summary(float(per_wlan.mean()), _stderr(per_wlan), float(agg.mean()), _stderr(agg),
                   float(jfi.mean()), _stderr(jfi), float(util.mean()), len(reals))


def run_sweep(spec: SweepSpec, workers: int = 1,
              progress: Callable[[int], None] | None = None) -> list[dict]:
    rows = []
    for v in spec.values:
        m, n, cw = spec.point(v)
        jobs = [(spec.scheme, m, n, cw, spec.width_policy, spec.w_max, spec.base_seed + k, k,
                 spec.nodes_per_wlan, spec.scenario) for k in range(spec.realizations)]
        s = summarize(run_realizations(jobs, workers))
        rows.append(dict(axis_value=v, mean_throughput_mbps=s.mean_throughput_mbps,
                         stderr_mbps=s.stderr_mbps, jfi=s.jfi,
                         spectrum_utilization=s.spectrum_utilization,
                         aggregate_mbps=s.aggregate_mbps, aggregate_stderr_mbps=s.aggregate_stderr_mbps))
        if progress:
            progress(v)
    return rows


def wlan_cw_sweep(scenario: NetworkScenario, cws: Sequence[int]) -> list[dict]:
    """Per-WLAN throughput of one fixed topology as every node's CW varies."""
    out = []
    for cw in cws:
        sc = scenario.map_nodes(lambda nd: replace(nd, cw_slots=cw, mean_backoff_us=None))
        x = wlan_throughput_mbps(sc)
        out.append({"cw": cw, **{w: float(v) for w, v in zip(sc.wlan_ids, x)}})
    return out


# --- histogram -------------------------------------------------------------------

@dataclass(frozen=True)
class Histogram:
    edges: np.ndarray
    counts: np.ndarray

    @property
    def fractions(self) -> np.ndarray:
        tot = self.counts.sum()
        return self.counts / tot if tot else self.counts.astype(float)

    def mass_above(self, x: float) -> float:
        """Fraction of samples in bins whose lower edge is >= ``x``."""
        return float(self.fractions[self.edges[:-1] >= x].sum())

    def rows(self) -> list[dict]:
        return [dict(bin_lo_mbps=float(lo), bin_hi_mbps=float(hi), count=int(c), fraction=float(f))
                for lo, hi, c, f in zip(self.edges[:-1], self.edges[1:], self.counts, self.fractions)]


def histogram(m: int, n: int, policy: WidthPolicy, scheme: str = "random", realizations: int = 2000,
              base_seed: int = 0, bins: int = 50, hi_mbps: float = 500.0, cw: int = 16,
              w_max: int = 8, workers: int = 1) -> Histogram:
    """Distribution of per-WLAN throughput over random allocations; fixed edges 0..hi_mbps."""
    jobs = [(scheme, m, n, cw, policy, w_max, base_seed + k, k) for k in range(realizations)]
    xs = np.concatenate([r.throughput_mbps for r in run_realizations(jobs, workers)])
    edges = np.linspace(0.0, hi_mbps, bins + 1)
    counts, _ = np.histogram(np.clip(xs, 0.0, hi_mbps), bins=edges)
    return Histogram(edges, counts)


# --- channelisation comparison ---------------------------------------------------

def compare_channelisation(n: int = 16, m_list: Sequence[int] = (8, 12, 16),
                           w_max_list: Sequence[int] = (1, 2, 4, 8), realizations: int = 2000,
                           base_seed: int = 0, cw: int = 16, workers: int = 1) -> list[dict]:
    """Aggregate throughput and mean JFI for random versus aligned channel selection.

    Every WLAN draws its width uniformly from the allowed widths up to ``w_max``.
    """
    rows = []
    for m in m_list:
        for scheme in ("random", "ac"):
            for w in w_max_list:
                pol = WidthPolicy("uniform", w)
                jobs = [(scheme, m, n, cw, pol, w, base_seed + k, k) for k in range(realizations)]
                s = summarize(run_realizations(jobs, workers))
                rows.append(dict(scheme=scheme, n=n, m=m, w_max=w,
                                 aggregate_mbps=s.aggregate_mbps,
                                 aggregate_stderr_mbps=s.aggregate_stderr_mbps,
                                 jfi=s.jfi, jfi_stderr=s.jfi_stderr))
    return rows


# --- allocation driver -----------------------------------------------------------

@dataclass
class AllocationOutcome:
    plan: al.AllocationPlan
    throughput_mbps: dict[str, float]
    classes: list[list[str]] = field(default_factory=list)
    schedule: al.Schedule | None = None
    support: al.SupportReport | None = None


def allocate(scenario: NetworkScenario, scheme: str, w_max: int = 8, seed: int = 0,
             policy: WidthPolicy | None = None) -> AllocationOutcome:
    m, n = scenario.n_wlans, scenario.n_basic_channels
    policy = policy or WidthPolicy("uniform", w_max)
    if scheme == "pf":
        rots = al.waterfilling_rotations(m, n, w_max)
        sched = al.pf_schedule(rots, scenario)
        rep = al.waterfilling_support_check(sched, w_max, candidates=rots)
        y = sched.wlan_throughput / 1e6
        best = sched.plans[int(np.argmax(sched.weights))]
        return AllocationOutcome(best, dict(zip(scenario.wlan_ids, map(float, y))),
                                 schedule=sched, support=rep)
    classes: list[list[str]] = []
    if scheme == "colored":
        plan, classes = al.color_and_waterfill(scenario, w_max)
    else:
        plan = draw_plan(scheme, m, n, policy, w_max, np.random.default_rng(seed))
    x = wlan_throughput_mbps(scenario.with_channels(plan.channels))
    return AllocationOutcome(plan, dict(zip(scenario.wlan_ids, map(float, x))), classes)
