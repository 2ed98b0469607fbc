"""Event-driven CSMA/CA simulator, an independent check on the CTMN model.

Nodes hear each other when their WLANs are within carrier-sense range and
their channels share a basic channel. Propagation delay is zero, so a node
freezes its backoff the instant a conflicting transmission starts; the only
way two conflicting frames can overlap is a simultaneous expiry, which can
happen in slotted mode but has probability zero with continuous backoff.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np

from .ctmn import build_transmitters, solve_fixed_point
from .phy import mean_backoff
from .scenario import NetworkScenario

@dataclass(frozen=True)
class SimMode:
    """Backoff discipline and loss rules.

    ``slotted`` counts integer slots drawn uniformly from ``[0, CW-1]``;
    otherwise the backoff is exponential with mean E[B]. With ``capture``
    only collisions between nodes of the same WLAN destroy frames.
    """

    slotted: bool
    capture: bool
    collisions: bool
    tx_distribution: str = "deterministic"
    name: str = "custom"

    def __post_init__(self):
        if self.tx_distribution not in ("deterministic", "exponential"):
            raise ValueError("tx_distribution must be 'deterministic' or 'exponential'")

    def with_tx(self, dist: str) -> "SimMode":
        return SimMode(self.slotted, self.capture, self.collisions, dist, self.name)


SIM1 = SimMode(slotted=True, capture=True, collisions=True, name="sim1")
SIM2 = SimMode(slotted=True, capture=False, collisions=True, name="sim2")
SIM3 = SimMode(slotted=False, capture=False, collisions=False, tx_distribution="exponential", name="sim3")
MODES = {"sim1": SIM1, "sim2": SIM2, "sim3": SIM3}


def sim_mode(name: str | SimMode) -> SimMode:
    if isinstance(name, SimMode):
        return name
    try:
        return MODES[name.lower()]
    except KeyError:
        raise ValueError(f"unknown simulation mode {name!r}; choose from {sorted(MODES)}") from None


@numba.njit(cache=True)
def _draw_backoff(slotted, cw, mean_bo):
    if slotted:
        return float(np.random.randint(0, cw))
    return np.random.exponential(mean_bo)


@numba.njit(cache=True)
def _run(conflict, wlan_of, saturated, arr_rate, mean_bo, cw, mean_tx, eta, payload,
         chan_lo, chan_hi, n_chan, slot, slotted, capture, collisions, tx_exp,
         duration, seed, trace_cap):
    np.random.seed(seed)
    n = conflict.shape[0]
    INF = np.inf

    queue = np.zeros(n, np.int64)
    next_arr = np.full(n, INF)
    tx_end = np.full(n, INF)
    transmitting = np.zeros(n, np.bool_)
    collided = np.zeros(n, np.bool_)
    blocked = np.zeros(n, np.int64)
    bo_left = np.zeros(n)          # residual backoff: seconds, or slots when slotted
    bo_start = np.full(n, -1.0)    # time counting resumed, -1 when frozen / idle
    has_bo = np.zeros(n, np.bool_)

    delivered = np.zeros(n)
    attempts = np.zeros(n, np.int64)
    successes = np.zeros(n, np.int64)
    coll = np.zeros(n, np.int64)
    airtime = np.zeros(n)
    ch_count = np.zeros(n_chan, np.int64)
    ch_busy = np.zeros(n_chan)
    ch_since = np.zeros(n_chan)
    trace = np.zeros((trace_cap, 4))   # node, start, end, success (-1 while in flight)
    row = np.full(n, -1, np.int64)
    n_trace = 0
    n_events = 0

    for i in range(n):
        if saturated[i]:
            queue[i] = 1
        else:
            next_arr[i] = np.random.exponential(1.0 / arr_rate[i])
        if queue[i] > 0:
            bo_left[i] = _draw_backoff(slotted, cw[i], mean_bo[i])
            has_bo[i] = True
            bo_start[i] = 0.0

    starters = np.zeros(n, np.int64)
    t = 0.0
    while True:
        # next event time
        t_next = INF
        for i in range(n):
            if tx_end[i] < t_next:
                t_next = tx_end[i]
            if next_arr[i] < t_next:
                t_next = next_arr[i]
            if bo_start[i] >= 0.0:
                e = bo_start[i] + (bo_left[i] * slot if slotted else bo_left[i])
                if e < t_next:
                    t_next = e
        if t_next > duration:
            break
        t = t_next
        n_events += 1

        # 1. transmissions ending now
        for i in range(n):
            if transmitting[i] and tx_end[i] <= t:
                transmitting[i] = False
                tx_end[i] = INF
                for k in range(chan_lo[i], chan_hi[i] + 1):
                    ch_count[k] -= 1
                    if ch_count[k] == 0:
                        ch_busy[k] += t - ch_since[k]
                ok = (not collided[i]) and np.random.random() < eta[i]
                if ok:
                    successes[i] += 1
                    delivered[i] += payload[i]
                    if not saturated[i]:
                        queue[i] -= 1
                else:
                    if collided[i]:
                        coll[i] += 1
                if row[i] >= 0:
                    trace[row[i], 3] = 1.0 if ok else 0.0
                    row[i] = -1
                collided[i] = False
                for j in range(n):
                    if conflict[i, j]:
                        blocked[j] -= 1
                if queue[i] > 0:
                    bo_left[i] = _draw_backoff(slotted, cw[i], mean_bo[i])
                    has_bo[i] = True
                    bo_start[i] = -1.0
        # 2. arrivals
        for i in range(n):
            if next_arr[i] <= t:
                queue[i] += 1
                next_arr[i] = t + np.random.exponential(1.0 / arr_rate[i])
                if queue[i] == 1 and not transmitting[i]:
                    bo_left[i] = _draw_backoff(slotted, cw[i], mean_bo[i])
                    has_bo[i] = True
                    bo_start[i] = -1.0
        # 3. idle, backlogged nodes (re)start counting
        for i in range(n):
            if has_bo[i] and bo_start[i] < 0.0 and blocked[i] == 0 and not transmitting[i]:
                bo_start[i] = t
        # 4. backoff expiries, all starting together
        ns = 0
        for i in range(n):
            if bo_start[i] >= 0.0:
                e = bo_start[i] + (bo_left[i] * slot if slotted else bo_left[i])
                if e <= t:
                    starters[ns] = i
                    ns += 1
        for a in range(ns):
            i = starters[a]
            has_bo[i] = False
            bo_start[i] = -1.0
            bo_left[i] = 0.0
            transmitting[i] = True
            attempts[i] += 1
            d = np.random.exponential(mean_tx[i]) if tx_exp else mean_tx[i]
            tx_end[i] = t + d
            airtime[i] += min(d, duration - t)
            for k in range(chan_lo[i], chan_hi[i] + 1):
                if ch_count[k] == 0:
                    ch_since[k] = t
                ch_count[k] += 1
            if n_trace < trace_cap:
                trace[n_trace, 0] = i
                trace[n_trace, 1] = t
                trace[n_trace, 2] = t + d
                trace[n_trace, 3] = -1.0
                row[i] = n_trace
                n_trace += 1
        if collisions:
            for a in range(ns):
                i = starters[a]
                for b in range(a + 1, ns):
                    j = starters[b]
                    if conflict[i, j] and (not capture or wlan_of[i] == wlan_of[j]):
                        collided[i] = True
                        collided[j] = True
        for a in range(ns):
            i = starters[a]
            for j in range(n):
                if conflict[i, j]:
                    blocked[j] += 1
                    if bo_start[j] >= 0.0:
                        # freeze; a partly elapsed slot is lost
                        el = t - bo_start[j]
                        if slotted:
                            el = math.floor(el / slot + 1e-9)
                        bo_left[j] = max(bo_left[j] - el, 0.0)
                        bo_start[j] = -1.0

    for k in range(n_chan):
        if ch_count[k] > 0:
            ch_busy[k] += duration - ch_since[k]
    return delivered, attempts, successes, coll, airtime, ch_busy, trace[:n_trace], n_events


@dataclass(frozen=True, eq=False)
class SimResult:
    labels: tuple[tuple[str, str], ...]
    delivered_bits: np.ndarray
    attempts: np.ndarray
    successes: np.ndarray
    collisions: np.ndarray
    airtime_s: np.ndarray
    channel_busy_s: np.ndarray   # per basic channel, index 0 is channel 1
    duration_s: float
    seed: int
    mode: SimMode
    events: int
    trace: np.ndarray            # rows (node index, start, end, success)
    scenario_id: str = "scenario"

    @property
    def throughput_bps(self) -> np.ndarray:
        return self.delivered_bits / self.duration_s

    @property
    def airtime_share(self) -> np.ndarray:
        return self.airtime_s / self.duration_s

    def by_node(self) -> dict[str, float]:
        return {nid: float(x) for (_, nid), x in zip(self.labels, self.throughput_bps)}

    def wlan_throughput(self) -> dict[str, float]:
        out: dict[str, float] = {}
        for (wid, _), x in zip(self.labels, self.throughput_bps):
            out[wid] = out.get(wid, 0.0) + float(x)
        return out

    def rows(self) -> list[dict]:
        return [dict(scenario_id=self.scenario_id, wlan=w, node=n,
                     throughput_mbps=float(x) / 1e6, attempts=int(a), collisions=int(c),
                     mode=self.mode.name, seed=self.seed, duration_s=self.duration_s)
                for (w, n), x, a, c in zip(self.labels, self.throughput_bps,
                                           self.attempts, self.collisions)]


def _slotted_cw(node, mac) -> int:
    if node.cw_slots is not None and node.mean_backoff_us is None:
        return int(node.cw_slots)
    # uniform on [0, CW-1] has mean (CW-1)/2 slots
    return max(1, int(round(2.0 * mean_backoff(node, mac) / mac.t_slot_s)) + 1)


def run_sim(scenario: NetworkScenario, mode: SimMode | str = SIM3, duration_s: float = 1000.0,
            seed: int = 0, trace_cap: int = 0) -> SimResult:
    """Simulate ``duration_s`` seconds; identical inputs give bit-identical results."""
    mode = sim_mode(mode)
    if not duration_s > 0:
        raise ValueError("duration must be positive")
    if seed < 0 or seed >= 2 ** 32:
        raise ValueError("seed must fit in 32 unsigned bits")
    tx = build_transmitters(scenario)
    nodes = [n for w in scenario.wlans for n in w.nodes]
    chans = [w.channel for w in scenario.wlans for _ in w.nodes]
    saturated = np.isinf(tx.offered)
    # arrivals are counted in delivery units (one per successful transmission)
    arr_rate = np.where(saturated, 0.0, tx.offered)
    mean_bo = 1.0 / tx.lam
    cw = np.array([_slotted_cw(n, scenario.mac) for n in nodes], dtype=np.int64)
    out = _run(tx.conflict, tx.wlan_index.astype(np.int64), saturated, arr_rate, mean_bo, cw,
               tx.mean_tx.astype(float), tx.eta.astype(float), tx.payload_bits.astype(float),
               np.array([c.low - 1 for c in chans], dtype=np.int64),
               np.array([c.high - 1 for c in chans], dtype=np.int64),
               scenario.n_basic_channels, scenario.mac.t_slot_s, mode.slotted, mode.capture,
               mode.collisions, mode.tx_distribution == "exponential", float(duration_s),
               int(seed), int(trace_cap))
    delivered, attempts, successes, coll, airtime, ch_busy, trace, n_events = out
    return SimResult(tx.labels, delivered, attempts, successes, coll, airtime, ch_busy,
                     float(duration_s), int(seed), mode, int(n_events), trace, scenario.scenario_id)


@dataclass(frozen=True)
class ComparisonRow:
    wlan: str
    node: str
    model_mbps: float
    sim_mbps: float

    @property
    def rel_error(self) -> float:
        if self.model_mbps == 0:
            return 0.0 if self.sim_mbps == 0 else math.inf
        return (self.sim_mbps - self.model_mbps) / self.model_mbps


def compare_model_sim(scenario: NetworkScenario, mode: SimMode | str = SIM3,
                      duration_s: float = 1000.0, seed: int = 0) -> list[ComparisonRow]:
    model = solve_fixed_point(scenario, mode="node")
    sim = run_sim(scenario, mode, duration_s, seed)
    return [ComparisonRow(w, n, float(x) / 1e6, float(y) / 1e6)
            for (w, n), x, y in zip(model.labels, model.throughput_bps, sim.throughput_bps)]
