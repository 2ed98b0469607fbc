"""Channel allocation strategies and proportional-fair time sharing between allocations."""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .ctmn import solve_fixed_point
from .phy import ALLOWED_WIDTHS
from .scenario import Channel, NetworkScenario, channels_overlap

log = logging.getLogger(__name__)

MAX_EXACT_COLORING = 24


class AllocationError(ValueError):
    pass


def _rng(seed) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


@dataclass(frozen=True)
class AllocationPlan:
    """One channel per WLAN, in WLAN order, on ``n`` basic channels."""

    channels: tuple[Channel, ...]
    n: int
    degraded: bool = False
    scheme: str = ""

    def __post_init__(self):
        object.__setattr__(self, "channels", tuple(self.channels))
        if self.n < 1:
            raise AllocationError("n must be >= 1")
        for ch in self.channels:
            if not ch.fits(self.n):
                raise AllocationError(f"channel {ch} does not fit in 1..{self.n}")

    def __len__(self):
        return len(self.channels)

    @property
    def widths(self) -> tuple[int, ...]:
        return tuple(ch.width for ch in self.channels)

    def overlap_counts(self) -> np.ndarray:
        """Number of WLANs on each basic channel (index 0 is basic channel 1)."""
        cnt = np.zeros(self.n, dtype=int)
        for ch in self.channels:
            cnt[ch.low - 1: ch.high] += 1
        return cnt

    def max_overlap(self) -> int:
        return int(self.overlap_counts().max())

    def is_ac_aligned(self) -> bool:
        return all(ch.is_ac_aligned() for ch in self.channels)

    def to_list(self) -> list[dict]:
        return [{"low": ch.low, "high": ch.high} for ch in self.channels]

    def __str__(self):
        return "[" + ", ".join(str(c) for c in self.channels) + "]"


# --- decentralised schemes ---------------------------------------------------

def _check_widths(width_set: Iterable[int], n: int) -> tuple[int, ...]:
    ws = tuple(sorted(set(int(c) for c in width_set)))
    if not ws:
        raise AllocationError("empty width set")
    bad = [c for c in ws if c not in ALLOWED_WIDTHS]
    if bad:
        raise AllocationError(f"widths {bad} not in {ALLOWED_WIDTHS}")
    if ws[-1] > n:
        raise AllocationError(f"width {ws[-1]} exceeds the {n} available basic channels")
    return ws


def widths_up_to(w_max: int) -> tuple[int, ...]:
    if w_max not in ALLOWED_WIDTHS:
        raise AllocationError(f"w_max must be one of {ALLOWED_WIDTHS}")
    return tuple(c for c in ALLOWED_WIDTHS if c <= w_max)


def random_allocation(m: int, n: int, width_set: Iterable[int], seed=None) -> AllocationPlan:
    """Each WLAN draws a width from ``width_set`` then a uniformly placed contiguous block."""
    ws = _check_widths(width_set, n)
    rng = _rng(seed)
    out = []
    for _ in range(m):
        c = ws[rng.integers(len(ws))]
        low = int(rng.integers(1, n - c + 2))
        out.append(Channel(low, low + c - 1))
    return AllocationPlan(tuple(out), n, scheme="random")


def ac_allocation(m: int, n: int, width_set: Iterable[int], seed=None) -> AllocationPlan:
    """Like :func:`random_allocation` but only on blocks aligned to multiples of their width."""
    ws = _check_widths(width_set, n)
    rng = _rng(seed)
    out = []
    for _ in range(m):
        c = ws[rng.integers(len(ws))]
        z = int(rng.integers(1, n // c + 1))
        out.append(Channel(c * (z - 1) + 1, c * z))
    return AllocationPlan(tuple(out), n, scheme="ac")


# --- waterfilling --------------------------------------------------------------

def waterfilling_widths(m: int, n: int, w_max: int = 8) -> list[int]:
    if m < 1 or n < 1:
        raise AllocationError("m and n must be >= 1")
    if w_max not in ALLOWED_WIDTHS:
        raise AllocationError(f"w_max must be one of {ALLOWED_WIDTHS}")
    c = [1] * m
    total = m
    while True:
        for i in range(m):
            # doubling is capped at w_max; the first WLAN that cannot double ends the loop
            if c[i] * 2 > w_max or total + c[i] > n:
                return c
            total += c[i]
            c[i] *= 2


def waterfilling(m: int, n: int, w_max: int = 8) -> AllocationPlan:
    """Round-robin width doubling followed by back-to-back placement.

    With more WLANs than basic channels the blocks wrap around modulo ``n``;
    the plan is then flagged ``degraded``.
    """
    widths = waterfilling_widths(m, n, w_max)
    chans = []
    start = 0
    wrapped = False
    for c in widths:
        lo = start % n
        if lo + c > n:
            # a wrapped block would not be contiguous; only possible with width 1 blocks
            raise AllocationError("waterfilling block straddles the band edge")
        if start + c > n:
            wrapped = True
        chans.append(Channel(lo + 1, lo + c))
        start += c
    return AllocationPlan(tuple(chans), n, degraded=wrapped, scheme="waterfilling")


def waterfilling_rotations(m: int, n: int, w_max: int = 8) -> list[AllocationPlan]:
    """All distinct assignments of the waterfilling blocks to the ``m`` WLANs."""
    base = waterfilling(m, n, w_max)
    seen = set()
    out = []
    for perm in itertools.permutations(base.channels):
        if perm not in seen:
            seen.add(perm)
            out.append(AllocationPlan(perm, n, degraded=base.degraded, scheme="waterfilling"))
    return out


def max_overlap_lower_bound(m: int, n: int) -> int:
    """Smallest achievable maximum number of WLANs sharing a basic channel."""
    return -(-m // n)


# --- colouring ------------------------------------------------------------------

def chromatic_coloring(ids: Sequence[str], edges: Iterable[frozenset]) -> list[list[str]]:
    """Exact minimum colouring by backtracking; classes ordered by their first member in ``ids``."""
    ids = list(ids)
    m = len(ids)
    if m > MAX_EXACT_COLORING:
        raise AllocationError(f"exact colouring limited to {MAX_EXACT_COLORING} WLANs, got {m}")
    pos = {v: k for k, v in enumerate(ids)}
    nbr = [set() for _ in range(m)]
    for e in edges:
        a, b = tuple(e)
        nbr[pos[a]].add(pos[b])
        nbr[pos[b]].add(pos[a])

    def attempt(k: int) -> list[int] | None:
        col = [-1] * m

        def go(v: int, used: int) -> bool:
            if v == m:
                return True
            taken = {col[u] for u in nbr[v] if col[u] >= 0}
            # a fresh colour is only tried once (symmetry breaking)
            for c in range(min(used + 1, k)):
                if c not in taken:
                    col[v] = c
                    if go(v + 1, max(used, c + 1)):
                        return True
            col[v] = -1
            return False

        return col if go(0, 0) else None

    for k in range(1, m + 1):
        col = attempt(k)
        if col is not None:
            classes: list[list[str]] = [[] for _ in range(k)]
            for v, c in enumerate(col):
                classes[c].append(ids[v])
            return classes
    return []  # m == 0


def color_and_waterfill(scenario: NetworkScenario, w_max: int = 8) -> tuple[AllocationPlan, list[list[str]]]:
    """Waterfill over colour classes of the carrier-sense graph; same colour, same channel."""
    classes = chromatic_coloring(scenario.wlan_ids, scenario.cs_adjacency)
    base = waterfilling(len(classes), scenario.n_basic_channels, w_max)
    by_id = {}
    for cls, ch in zip(classes, base.channels):
        for wid in cls:
            by_id[wid] = ch
    plan = AllocationPlan(tuple(by_id[w] for w in scenario.wlan_ids), scenario.n_basic_channels,
                          degraded=base.degraded, scheme="colored")
    return plan, classes


# --- exhaustive enumeration -------------------------------------------------------

def all_channels(n: int, width_set: Iterable[int] = ALLOWED_WIDTHS) -> list[Channel]:
    return [Channel(lo, lo + c - 1) for c in sorted(set(width_set)) if c <= n
            for lo in range(1, n - c + 2)]


def exhaustive_plans(m: int, n: int, width_set: Iterable[int] = ALLOWED_WIDTHS) -> Iterable[AllocationPlan]:
    """Every labelled assignment of contiguous blocks to ``m`` WLANs."""
    opts = all_channels(n, width_set)
    for combo in itertools.product(opts, repeat=m):
        yield AllocationPlan(combo, n, scheme="exhaustive")


# --- proportional-fair schedule ------------------------------------------------

def throughput_matrix(scenario: NetworkScenario, plans: Sequence[AllocationPlan],
                      mode: str | None = None) -> np.ndarray:
    """Per-WLAN throughput (bit/s) of every plan; rows are WLANs, columns plans."""
    if mode is None:
        mode = "wlan" if scenario.all_saturated else "node"
    cache: dict[tuple, np.ndarray] = {}
    cols = []
    for p in plans:
        if len(p) != scenario.n_wlans:
            raise AllocationError("plan size does not match the scenario")
        key = p.channels
        if key not in cache:
            res = solve_fixed_point(scenario.with_channels(p.channels), mode=mode)
            wt = res.wlan_throughput()
            cache[key] = np.array([wt[w] for w in scenario.wlan_ids])
        cols.append(cache[key])
    return np.column_stack(cols) if cols else np.zeros((scenario.n_wlans, 0))


@dataclass
class Schedule:
    plans: list[AllocationPlan]
    weights: np.ndarray
    throughput: np.ndarray          # WLANs x plans, bit/s
    objective: float
    kkt_residual: float
    iterations: int
    converged: bool
    aliases: list[list[int]] = field(default_factory=list)  # indices into the original candidate list

    @property
    def wlan_throughput(self) -> np.ndarray:
        return self.throughput @ self.weights

    def support(self, tol: float = 1e-9) -> list[int]:
        return [k for k, w in enumerate(self.weights) if w > tol]

    def to_list(self) -> list[dict]:
        return [{"plan": p.to_list(), "weight": float(w)} for p, w in zip(self.plans, self.weights)]


def _kkt(X: np.ndarray, p: np.ndarray) -> tuple[float, np.ndarray]:
    m = X.shape[0]
    y = X @ p
    g = (X / y[:, None]).sum(axis=0)  # gradient of sum log y w.r.t. p
    # optimality: g <= m everywhere, equality wherever p > 0
    res = max(float(np.max(g - m)) / m, float(np.max(p * np.abs(g - m))) / m, 0.0)
    return res, g


def pf_schedule(candidates: Sequence[AllocationPlan], scenario: NetworkScenario | None = None,
                tol: float = 1e-6, max_iter: int = 100_000, prune: float = 1e-9,
                throughput: np.ndarray | None = None) -> Schedule:
    """Time shares over ``candidates`` maximising the sum of log WLAN throughputs.

    Throughputs come from the CTMN solver unless an explicit WLANs x candidates
    matrix is passed. Candidates with identical throughput vectors are merged and
    Pareto-dominated ones dropped before the multiplicative-weights iteration.
    """
    cands = list(candidates)
    if not cands:
        raise AllocationError("candidate list is empty")
    if throughput is None:
        if scenario is None:
            raise AllocationError("need a scenario or a throughput matrix")
        X_all = throughput_matrix(scenario, cands)
    else:
        X_all = np.asarray(throughput, dtype=float)
        if X_all.shape[1] != len(cands):
            raise AllocationError("throughput matrix has wrong number of columns")
    if np.any(X_all < 0) or not np.all(np.isfinite(X_all)):
        raise AllocationError("throughputs must be finite and non-negative")
    starving = np.where(~np.any(X_all > 0, axis=1))[0]
    if starving.size:
        raise AllocationError(f"WLANs {starving.tolist()} receive zero throughput in every candidate")

    # merge exact duplicates
    groups: dict[bytes, list[int]] = {}
    for k in range(X_all.shape[1]):
        groups.setdefault(X_all[:, k].tobytes(), []).append(k)
    reps = [g[0] for g in groups.values()]
    aliases = list(groups.values())
    X = X_all[:, reps]

    # drop columns dominated by another column
    keep = []
    for a in range(X.shape[1]):
        dominated = np.any(np.all(X >= X[:, [a]], axis=0) & np.any(X > X[:, [a]], axis=0))
        if not dominated:
            keep.append(a)
    X = X[:, keep]
    aliases = [aliases[a] for a in keep]
    reps = [reps[a] for a in keep]

    m, k = X.shape
    scale = X.max()
    Xs = X / scale
    p = np.full(k, 1.0 / k)
    res, g = _kkt(Xs, p)
    it = 0

    def settled(res, g):
        # off-support weights decay geometrically; wait until they are below the prune level
        return res < tol and not np.any(p[g < m * (1.0 - tol)] > prune)

    while not settled(res, g) and it < max_iter:
        p = p * g / m
        p /= p.sum()
        it += 1
        if it % 50 == 0:
            res, g = _kkt(Xs, p)
        else:
            g = (Xs / (Xs @ p)[:, None]).sum(axis=0)
    res, g = _kkt(Xs, p)
    converged = res < tol
    if not converged:
        log.warning("pf_schedule stopped at KKT residual %.3g after %d iterations", res, it)

    p = np.where(p < prune, 0.0, p)
    p /= p.sum()
    y = X @ p
    return Schedule(plans=[cands[r] for r in reps], weights=p, throughput=X,
                    objective=float(np.log(y).sum()), kkt_residual=res, iterations=it,
                    converged=converged, aliases=aliases)


def is_waterfilling_configuration(plan: AllocationPlan, w_max: int = 8) -> bool:
    ref = waterfilling(len(plan), plan.n, w_max)
    return sorted(plan.widths) == sorted(ref.widths) and plan.max_overlap() == ref.max_overlap()


@dataclass(frozen=True)
class SupportReport:
    holds: bool
    support: list[tuple[str, float, bool]]


def waterfilling_support_check(schedule: Schedule, w_max: int = 8, tol: float = 1e-6,
                             candidates: Sequence[AllocationPlan] | None = None) -> SupportReport:
    """Whether every plan carrying weight above ``tol`` is a waterfilling configuration.

    When the original ``candidates`` are given, a merged plan counts as
    waterfilling if any plan with the same throughput vector is.
    """
    rows = []
    ok = True
    for k, w in enumerate(schedule.weights):
        if w <= tol:
            continue
        pool = [schedule.plans[k]]
        if candidates is not None and schedule.aliases:
            pool = [candidates[a] for a in schedule.aliases[k]]
        wf = any(is_waterfilling_configuration(pl, w_max) for pl in pool)
        ok &= wf
        rows.append((str(schedule.plans[k]), float(w), wf))
    return SupportReport(ok, rows)


def plan_overlaps_partially(plan: AllocationPlan) -> bool:
    """True if two equal-width WLANs share some but not all basic channels."""
    for a, b in itertools.combinations(plan.channels, 2):
        if a.width == b.width and a != b and channels_overlap(a, b):
            return True
    return False
