"""Continuous-time Markov network model of overlapping CSMA/CA WLANs.

A network state is a set of transmitters that can be active at once. The
stationary distribution has product form, so solving the model reduces to
enumerating the feasible states and normalising the activity-ratio products.
Non-saturated nodes need a fixed point on their backlog probability ``rho``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace

import numpy as np

from .phy import backoff_rate, mcs_for_width, tx_duration
from .scenario import NetworkScenario, NodeConfig, channels_overlap

log = logging.getLogger(__name__)

DEFAULT_MAX_STATES = 2 ** 24

_MODES = {"node": "node", "node-centric": "node", "wlan": "wlan", "wlan-centric": "wlan"}


def _mode(mode: str) -> str:
    try:
        return _MODES[mode]
    except KeyError:
        raise ValueError(f"unknown mode {mode!r}; use 'node' or 'wlan'") from None


class StateSpaceTooLarge(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class Transmitters:
    """Per-transmitter parameters in a fixed id order, plus the pairwise conflict matrix."""

    labels: tuple[tuple[str, str], ...]  # (wlan id, node id)
    wlan_index: np.ndarray
    lam: np.ndarray          # backoff rate when backlogged [1/s]
    mean_tx: np.ndarray      # E[T] [s]
    eta: np.ndarray
    payload_bits: np.ndarray  # bits delivered by one successful transmission
    offered: np.ndarray      # offered transmissions per second, inf when saturated
    conflict: np.ndarray     # bool (n, n), symmetric, zero diagonal

    def __len__(self):
        return len(self.labels)

    def index(self, node: str) -> int:
        for k, (_, nid) in enumerate(self.labels):
            if nid == node:
                return k
        raise KeyError(f"unknown transmitter {node!r}")


def node_airtime(scenario: NetworkScenario, wlan, node: NodeConfig) -> tuple[float, int]:
    """(E[T] in seconds, bits delivered per successful transmission) for one node."""
    if node.airtime_us is not None:
        return node.airtime_override_s, node.packet_bits
    c = wlan.channel.width
    t = tx_duration(c, mcs_for_width(c), node.packet_bits, scenario.mac)
    return t, scenario.mac.n_a * node.packet_bits


def build_transmitters(scenario: NetworkScenario) -> Transmitters:
    """Node-centric transmitter table for ``scenario``."""
    labels, widx, lam, mt, eta, pay, off = [], [], [], [], [], [], []
    for k, w in enumerate(scenario.wlans):
        for n in w.nodes:
            t, bits = node_airtime(scenario, w, n)
            labels.append((w.id, n.id))
            widx.append(k)
            lam.append(backoff_rate(n, scenario.mac))
            mt.append(t)
            eta.append(n.eta)
            pay.append(bits)
            off.append(math.inf if n.saturated else n.load_bps / bits)
    widx = np.asarray(widx)
    m = scenario.n_wlans
    wconf = np.zeros((m, m), dtype=bool)
    for a in range(m):
        for b in range(a + 1, m):
            wa, wb = scenario.wlans[a], scenario.wlans[b]
            if scenario.adjacent(wa.id, wb.id) and channels_overlap(wa.channel, wb.channel):
                wconf[a, b] = wconf[b, a] = True
    np.fill_diagonal(wconf, True)  # nodes of one WLAN share its channel
    conflict = wconf[np.ix_(widx, widx)].copy()
    np.fill_diagonal(conflict, False)
    return Transmitters(tuple(labels), widx, np.array(lam), np.array(mt), np.array(eta),
                        np.array(pay, dtype=float), np.array(off), conflict)


# --- state space -----------------------------------------------------------

@dataclass(frozen=True, eq=False)
class StateSpace:
    labels: tuple[tuple[str, str], ...]
    masks: np.ndarray        # int64 bitset per state
    incidence: np.ndarray    # bool (n_states, n_ids)
    theta: np.ndarray | None = None
    log_weight: np.ndarray | None = None
    pi: np.ndarray | None = None

    def __len__(self):
        return len(self.masks)

    def state_members(self, k: int) -> tuple[str, ...]:
        return tuple(self.labels[j][1] for j in np.flatnonzero(self.incidence[k]))

    def states(self) -> list[tuple[str, ...]]:
        return [self.state_members(k) for k in range(len(self))]

    def activity(self) -> np.ndarray:
        """Fraction of time each id is transmitting (sum of pi over states containing it)."""
        if self.pi is None:
            raise ValueError("state space has no stationary distribution yet")
        return self.pi @ self.incidence


def _bit_reverse(masks: np.ndarray, n: int) -> np.ndarray:
    out = np.zeros_like(masks)
    for i in range(n):
        out |= ((masks >> i) & 1) << (n - 1 - i)
    return out


def enumerate_independent_sets(conflict: np.ndarray, max_states: int = DEFAULT_MAX_STATES) -> np.ndarray:
    """All conflict-free subsets as int64 bitsets, ordered by size then lexicographically."""
    n = conflict.shape[0]
    if n > 62:
        raise StateSpaceTooLarge(f"{n} transmitters exceed the 62-bit state encoding")
    lower = np.zeros(n, dtype=np.int64)
    for i in range(n):
        for j in np.flatnonzero(conflict[i, :i]):
            lower[i] |= np.int64(1) << np.int64(j)
    states = np.zeros(1, dtype=np.int64)
    for i in range(n):
        ok = (states & lower[i]) == 0
        states = np.concatenate([states, states[ok] | (np.int64(1) << np.int64(i))])
        if len(states) > max_states:
            raise StateSpaceTooLarge(f"more than {max_states} feasible states")
    size = np.zeros(len(states), dtype=np.int64)
    for i in range(n):
        size += (states >> i) & 1
    # lexicographic order of sorted member tuples == descending bit-reversed value
    order = np.lexsort((-_bit_reverse(states, n), size))
    return states[order]


def _space_from(labels, conflict, max_states) -> StateSpace:
    masks = enumerate_independent_sets(conflict, max_states)
    n = len(labels)
    inc = ((masks[:, None] >> np.arange(n, dtype=np.int64)) & 1).astype(bool)
    return StateSpace(tuple(labels), masks, inc)


def feasible_states(scenario: NetworkScenario, mode: str = "node",
                    max_states: int = DEFAULT_MAX_STATES) -> StateSpace:
    if _mode(mode) == "wlan":
        scenario = wlan_centric_reduce(scenario)
    tx = build_transmitters(scenario)
    return _space_from(tx.labels, tx.conflict, max_states)


def stationary_distribution(space: StateSpace, theta) -> StateSpace:
    """Product-form stationary distribution, computed in log space.

    States containing an id with zero activity ratio carry no mass and are dropped.
    """
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (len(space.labels),):
        raise ValueError("one activity ratio per id required")
    if np.any(theta < 0) or not np.all(np.isfinite(theta)):
        raise ValueError("activity ratios must be finite and non-negative")
    inc = space.incidence
    masks = space.masks
    dead = theta == 0
    if dead.any():
        keep = ~inc[:, dead].any(axis=1)
        inc, masks = inc[keep], masks[keep]
    log_theta = np.where(dead, 0.0, np.log(np.where(dead, 1.0, theta)))
    logw = inc @ log_theta
    shift = logw.max()
    w = np.exp(logw - shift)
    pi = w / w.sum()
    return StateSpace(space.labels, masks, inc, theta, logw, pi)


def node_throughput(space: StateSpace, node: str, eta: float, delivered_bits_per_tx: float,
                    mean_tx_s: float) -> float:
    """Long-run delivered bits/s of ``node``: eta * bits * (1/E[T]) * P(node transmitting)."""
    ids = [nid for _, nid in space.labels]
    try:
        k = ids.index(node)
    except ValueError:
        raise KeyError(f"unknown id {node!r}") from None
    busy = float(space.pi[space.incidence[:, k]].sum())
    return eta * delivered_bits_per_tx * busy / mean_tx_s


# --- solver ----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SolveResult:
    labels: tuple[tuple[str, str], ...]
    rho: np.ndarray
    theta: np.ndarray
    throughput_bps: np.ndarray
    saturated: np.ndarray
    iterations: int
    converged: bool
    space: StateSpace
    mode: str = "node"
    scenario_id: str = "scenario"

    def by_node(self) -> dict[str, float]:
        return {nid: float(x) for (_, nid), x in zip(self.labels, self.throughput_bps)}

    def wlan_throughput(self) -> dict[str, float]:
        out: dict[str, float] = {}
        for (wid, _), x in zip(self.labels, self.throughput_bps):
            out[wid] = out.get(wid, 0.0) + float(x)
        return out

    def rows(self) -> list[dict]:
        return [dict(scenario_id=self.scenario_id, wlan=w, node=n, rho=float(r), theta=float(t),
                     throughput_mbps=float(x) / 1e6, saturated=bool(s),
                     iterations=self.iterations, converged=self.converged)
                for (w, n), r, t, x, s in zip(self.labels, self.rho, self.theta,
                                              self.throughput_bps, self.saturated)]


def solve_fixed_point(scenario: NetworkScenario, mode: str = "node", tol: float = 1e-6,
                      max_iter: int = 10_000, damping: float = 0.5,
                      max_states: int = DEFAULT_MAX_STATES) -> SolveResult:
    """Throughput of every transmitter, iterating rho until carried loads settle.

    Non-saturated nodes have rho adjusted until their carried load equals the
    offered one; a node that cannot reach its offered load even at rho = 1 is
    reported saturated. Returns the last iterate with ``converged=False`` if
    ``max_iter`` sweeps do not reach ``tol``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if not 0 < damping <= 1:
        raise ValueError("damping must be in (0, 1]")
    mode = _mode(mode)
    if mode == "wlan":
        scenario = wlan_centric_reduce(scenario)
    tx = build_transmitters(scenario)
    space = _space_from(tx.labels, tx.conflict, max_states)
    return _solve(tx, space, tol, max_iter, damping, mode, scenario.scenario_id)


def _solve(tx: Transmitters, space: StateSpace, tol, max_iter, damping, mode, sid) -> SolveResult:
    lam, T, eta, pay = tx.lam, tx.mean_tx, tx.eta, tx.payload_bits
    sat_cfg = np.isinf(tx.offered)
    with np.errstate(invalid="ignore"):
        target = np.where(sat_cfg, np.inf, tx.offered / eta * T)  # required busy fraction

    def evaluate(rho):
        theta = rho * lam * T
        sp = stationary_distribution(space, theta)
        busy = sp.activity()
        return theta, sp, busy, eta * pay * busy / T

    if sat_cfg.all():
        rho = np.ones(len(tx))
        theta, sp, busy, x = evaluate(rho)
        return SolveResult(tx.labels, rho, theta, x, np.ones(len(tx), bool), 1, True, sp, mode, sid)

    theta1 = lam * T
    rho = np.where(sat_cfg, 1.0, np.minimum(1.0, target * (1.0 + theta1)))
    x_prev = None
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        theta, sp, busy, x = evaluate(rho)
        if x_prev is not None:
            rel = np.abs(x - x_prev) / np.maximum(np.abs(x_prev), 1e-300)
            if np.all(rel < tol):
                converged = True
                break
        x_prev = x
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(sat_cfg, 1.0, np.minimum(1.0, rho * target / busy))
        rho = (1.0 - damping) * rho + damping * ratio
    if not converged:
        log.warning("fixed point did not converge in %d iterations", max_iter)

    # nodes pinned at the clamp are saturated; finish them exactly at rho = 1
    with np.errstate(divide="ignore", invalid="ignore"):
        pinned = sat_cfg | ((rho >= 1.0 - 1e-6) & (rho * target / busy >= 1.0 - tol))
    rho = np.where(pinned, 1.0, rho)
    theta, sp, busy, x = evaluate(rho)
    saturated = sat_cfg | (pinned & (busy < target))
    return SolveResult(tx.labels, rho, theta, x, saturated, it, converged, sp, mode, sid)


# --- WLAN-centric reduction ------------------------------------------------

def wlan_centric_reduce(scenario: NetworkScenario) -> NetworkScenario:
    """Collapse each WLAN into one saturated super-node whose backoff rate is the sum of its nodes'.

    Requires saturated nodes with identical packet size, error probabilities and
    airtime inside each WLAN.
    """
    new_wlans = []
    for w in scenario.wlans:
        if not all(n.saturated for n in w.nodes):
            raise ValueError(f"WLAN {w.id}: reduction needs saturated nodes")
        if len(w.nodes) == 1:
            new_wlans.append(w)
            continue
        ref = w.nodes[0]
        for n in w.nodes[1:]:
            if (n.packet_bits, n.p_noise, n.p_hidden, n.p_ext, n.airtime_us) != \
               (ref.packet_bits, ref.p_noise, ref.p_hidden, ref.p_ext, ref.airtime_us):
                raise ValueError(f"WLAN {w.id}: heterogeneous node parameters cannot be aggregated")
        lam = sum(backoff_rate(n, scenario.mac) for n in w.nodes)
        agg = replace(ref, id=w.id, cw_slots=None, mean_backoff_us=1e6 / lam)
        new_wlans.append(replace(w, nodes=(agg,)))
    return replace(scenario, wlans=tuple(new_wlans))


def solve_saturated(scenario: NetworkScenario, mode: str = "wlan") -> SolveResult:
    """Shortcut for all-saturated scenarios (single product-form evaluation)."""
    return solve_fixed_point(scenario, mode=mode)
