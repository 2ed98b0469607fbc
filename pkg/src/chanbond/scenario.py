"""Network scenarios: WLANs, their nodes and channels, and who can hear whom."""
from __future__ import annotations

import itertools
from importlib import resources
import json
import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import yaml

from .phy import DEFAULT_MAC, MacConstants, success_probability


class ScenarioError(ValueError):
    """Raised for scenario documents that violate the schema or its invariants."""


@dataclass(frozen=True, order=True)
class Channel:
    """Contiguous block of basic channels ``low..high`` (1-based, inclusive)."""

    low: int
    high: int

    def __post_init__(self):
        if not (isinstance(self.low, int) and isinstance(self.high, int)):
            raise ScenarioError(f"channel bounds must be integers, got {self.low!r}, {self.high!r}")
        if self.low < 1 or self.high < self.low:
            raise ScenarioError(f"invalid channel {self.low}-{self.high}")

    @property
    def width(self) -> int:
        return self.high - self.low + 1

    @property
    def width_mhz(self) -> int:
        return 20 * self.width

    @property
    def basic_channels(self) -> range:
        return range(self.low, self.high + 1)

    def fits(self, n: int) -> bool:
        return self.high <= n

    def is_ac_aligned(self) -> bool:
        c = self.width
        return c in (1, 2, 4, 8) and (self.low - 1) % c == 0

    def __str__(self):
        return f"{self.low}" if self.low == self.high else f"{self.low}-{self.high}"


def channels_overlap(a: Channel, b: Channel) -> bool:
    return a.low <= b.high and b.low <= a.high


@dataclass(frozen=True)
class NodeConfig:
    id: str
    load_mbps: float = math.inf
    packet_bits: int = 12000
    cw_slots: int | None = 16
    mean_backoff_us: float | None = None
    p_noise: float = 0.0
    p_hidden: float = 0.0
    p_ext: float = 0.0
    airtime_us: float | None = None

    def __post_init__(self):
        if not self.load_mbps > 0:
            raise ScenarioError(f"node {self.id}: load must be positive")
        if not self.packet_bits > 0:
            raise ScenarioError(f"node {self.id}: packet_bits must be positive")
        if self.mean_backoff_us is None and self.cw_slots is None:
            raise ScenarioError(f"node {self.id}: needs cw_slots or mean_backoff_us")
        if self.mean_backoff_us is not None and not self.mean_backoff_us > 0:
            raise ScenarioError(f"node {self.id}: mean_backoff_us must be positive")
        if self.cw_slots is not None and self.cw_slots < 1:
            raise ScenarioError(f"node {self.id}: cw_slots must be >= 1")
        if self.airtime_us is not None and not self.airtime_us > 0:
            raise ScenarioError(f"node {self.id}: airtime_us must be positive")
        for p in (self.p_noise, self.p_hidden, self.p_ext):
            if not 0.0 <= p <= 1.0:
                raise ScenarioError(f"node {self.id}: probability {p} outside [0, 1]")

    @property
    def saturated(self) -> bool:
        return math.isinf(self.load_mbps)

    @property
    def load_bps(self) -> float:
        return self.load_mbps * 1e6

    @property
    def load_pkts_per_s(self) -> float:
        return self.load_bps / self.packet_bits

    @property
    def mean_backoff_s(self) -> float | None:
        return None if self.mean_backoff_us is None else self.mean_backoff_us * 1e-6

    @property
    def airtime_override_s(self) -> float | None:
        return None if self.airtime_us is None else self.airtime_us * 1e-6

    @property
    def eta(self) -> float:
        return success_probability(self.p_noise, self.p_hidden, self.p_ext)


@dataclass(frozen=True)
class WlanConfig:
    id: str
    nodes: tuple[NodeConfig, ...]
    channel: Channel
    snr_class: int | None = 1  # None means per-node airtime overrides

    def __post_init__(self):
        if len(self.nodes) < 1:
            raise ScenarioError(f"WLAN {self.id} has no nodes")
        if self.snr_class is None:
            missing = [n.id for n in self.nodes if n.airtime_us is None]
            if missing:
                raise ScenarioError(f"WLAN {self.id}: snr_class 'override' needs airtime_us on {missing}")
        elif self.snr_class not in (1, 2, 3, 4):
            raise ScenarioError(f"WLAN {self.id}: snr_class must be 1-4 or 'override'")
        ids = [n.id for n in self.nodes]
        if len(set(ids)) != len(ids):
            raise ScenarioError(f"WLAN {self.id}: duplicate node ids")


def _pair(a: str, b: str) -> frozenset:
    return frozenset((a, b))


@dataclass(frozen=True)
class NetworkScenario:
    n_basic_channels: int
    wlans: tuple[WlanConfig, ...]
    cs_adjacency: frozenset = None
    mac: MacConstants = DEFAULT_MAC
    scenario_id: str = "scenario"
    _index: dict = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.n_basic_channels < 1:
            raise ScenarioError("n_basic_channels must be >= 1")
        if not self.wlans:
            raise ScenarioError("scenario needs at least one WLAN")
        ids = [w.id for w in self.wlans]
        if len(set(ids)) != len(ids):
            raise ScenarioError("duplicate WLAN ids")
        node_ids = [n.id for w in self.wlans for n in w.nodes]
        if len(set(node_ids)) != len(node_ids):
            raise ScenarioError("node ids must be unique across the scenario")
        for w in self.wlans:
            if not w.channel.fits(self.n_basic_channels):
                raise ScenarioError(f"WLAN {w.id}: channel {w.channel} outside [1, {self.n_basic_channels}]")
        if self.cs_adjacency is None:
            adj = frozenset(_pair(a, b) for a, b in itertools.combinations(ids, 2))
            object.__setattr__(self, "cs_adjacency", adj)
        else:
            adj = frozenset(frozenset(p) for p in self.cs_adjacency)
            known = set(ids)
            for p in adj:
                if len(p) != 2:
                    raise ScenarioError(f"adjacency pair {sorted(p)} is a self-loop or malformed")
                if not p <= known:
                    raise ScenarioError(f"adjacency pair {sorted(p)} names unknown WLANs")
            object.__setattr__(self, "cs_adjacency", adj)
        object.__setattr__(self, "_index", {w.id: k for k, w in enumerate(self.wlans)})

    @property
    def n_wlans(self) -> int:
        return len(self.wlans)

    @property
    def wlan_ids(self) -> list[str]:
        return [w.id for w in self.wlans]

    def wlan(self, wlan_id: str) -> WlanConfig:
        return self.wlans[self._index[wlan_id]]

    def adjacent(self, a: str, b: str) -> bool:
        return a != b and _pair(a, b) in self.cs_adjacency

    @property
    def channels(self) -> list[Channel]:
        return [w.channel for w in self.wlans]

    @property
    def all_saturated(self) -> bool:
        return all(n.saturated for w in self.wlans for n in w.nodes)

    def with_channels(self, channels: Sequence[Channel] | Mapping[str, Channel]) -> "NetworkScenario":
        if isinstance(channels, Mapping):
            chans = [channels.get(w.id, w.channel) for w in self.wlans]
        else:
            if len(channels) != self.n_wlans:
                raise ScenarioError("one channel per WLAN required")
            chans = list(channels)
        wl = tuple(replace(w, channel=c) for w, c in zip(self.wlans, chans))
        return replace(self, wlans=wl)

    def map_nodes(self, fn) -> "NetworkScenario":
        wl = tuple(replace(w, nodes=tuple(fn(n) for n in w.nodes)) for w in self.wlans)
        return replace(self, wlans=wl)


def conflict_graph(s: NetworkScenario) -> set[frozenset]:
    """WLAN pairs that can hear each other *and* share a basic channel."""
    out = set()
    for a, b in itertools.combinations(s.wlans, 2):
        if s.adjacent(a.id, b.id) and channels_overlap(a.channel, b.channel):
            out.add(frozenset((a.id, b.id)))
    return out


# --- documents -------------------------------------------------------------

_MAC_FIELDS = {f.name for f in fields(MacConstants)}


def _num(x, what):
    if isinstance(x, bool) or not isinstance(x, (int, float)):
        raise ScenarioError(f"{what} must be a number, got {x!r}")
    return x


def _parse_node(d: Mapping, default_id: str) -> NodeConfig:
    if not isinstance(d, Mapping):
        raise ScenarioError(f"node entry must be a mapping, got {d!r}")
    unknown = set(d) - {"id", "load_mbps", "packet_bits", "cw_slots", "mean_backoff_us",
                        "p_noise", "p_hidden", "p_ext", "airtime_us"}
    if unknown:
        raise ScenarioError(f"unknown node keys {sorted(unknown)}")
    load = d.get("load_mbps", "saturated")
    if load == "saturated":
        load = math.inf
    else:
        load = float(_num(load, "load_mbps"))
    if "cw_slots" in d and "mean_backoff_us" in d:
        raise ScenarioError("give either cw_slots or mean_backoff_us, not both")
    mean_bo = d.get("mean_backoff_us")
    cw = d.get("cw_slots", None if mean_bo is not None else 16)
    if cw is not None and (isinstance(cw, bool) or not isinstance(cw, int)):
        raise ScenarioError(f"cw_slots must be an integer, got {cw!r}")
    airtime = d.get("airtime_us")
    return NodeConfig(
        id=str(d.get("id", default_id)),
        load_mbps=load,
        packet_bits=int(_num(d.get("packet_bits", 12000), "packet_bits")),
        cw_slots=cw,
        mean_backoff_us=None if mean_bo is None else float(_num(mean_bo, "mean_backoff_us")),
        p_noise=float(_num(d.get("p_noise", 0.0), "p_noise")),
        p_hidden=float(_num(d.get("p_hidden", 0.0), "p_hidden")),
        p_ext=float(_num(d.get("p_ext", 0.0), "p_ext")),
        airtime_us=None if airtime is None else float(_num(airtime, "airtime_us")),
    )


def _parse_adjacency(raw) -> frozenset:
    if isinstance(raw, Mapping):
        # neighbour-list form; must be symmetric
        pairs = {(str(a), str(b)) for a, nbrs in raw.items() for b in nbrs}
        for a, b in pairs:
            if (b, a) not in pairs:
                raise ScenarioError(f"asymmetric adjacency: {a}->{b} without {b}->{a}")
    else:
        pairs = set()
        for p in raw:
            if not isinstance(p, (list, tuple)) or len(p) != 2:
                raise ScenarioError(f"adjacency entries must be id pairs, got {p!r}")
            pairs.add((str(p[0]), str(p[1])))
    out = set()
    for a, b in pairs:
        if a == b:
            raise ScenarioError(f"self-adjacency for {a}")
        out.add(frozenset((a, b)))
    return frozenset(out)


def parse_scenario(doc: str | Mapping[str, Any]) -> NetworkScenario:
    """Build a validated scenario from a YAML/JSON document or an already-loaded mapping."""
    if isinstance(doc, str):
        try:
            doc = yaml.safe_load(doc)
        except yaml.YAMLError as e:
            raise ScenarioError(f"unparseable scenario document: {e}") from e
    if not isinstance(doc, Mapping):
        raise ScenarioError("scenario document must be a mapping")
    known = {"n_basic_channels", "wlans", "cs_adjacency", "aggregation", "mac_constants", "scenario_id"}
    unknown = set(doc) - known
    if unknown:
        raise ScenarioError(f"unknown top-level keys {sorted(unknown)}")
    if "n_basic_channels" not in doc or "wlans" not in doc:
        raise ScenarioError("scenario needs n_basic_channels and wlans")
    n = doc["n_basic_channels"]
    if isinstance(n, bool) or not isinstance(n, int):
        raise ScenarioError("n_basic_channels must be an integer")

    mac_kw = {}
    for block in ("mac_constants", "aggregation"):
        for k, v in (doc.get(block) or {}).items():
            if k not in _MAC_FIELDS:
                raise ScenarioError(f"unknown {block} field {k!r}")
            mac_kw[k] = _num(v, k)
    try:
        mac = DEFAULT_MAC.with_overrides(**mac_kw) if mac_kw else DEFAULT_MAC
    except ValueError as e:
        raise ScenarioError(str(e)) from e

    raw_wlans = doc["wlans"]
    if not isinstance(raw_wlans, list) or not raw_wlans:
        raise ScenarioError("wlans must be a non-empty list")
    wlans = []
    for k, w in enumerate(raw_wlans):
        if not isinstance(w, Mapping):
            raise ScenarioError("WLAN entries must be mappings")
        wid = str(w.get("id", f"W{k + 1}"))
        ch = w.get("channel")
        if not isinstance(ch, Mapping) or "low" not in ch:
            raise ScenarioError(f"WLAN {wid}: channel must be a mapping with low/high")
        channel = Channel(ch["low"], ch.get("high", ch["low"]))
        snr = w.get("snr_class", 1)
        snr = None if snr == "override" else snr
        raw_nodes = w.get("nodes")
        if raw_nodes is None:
            raw_nodes = [{}, {}]  # AP plus one STA
        if not isinstance(raw_nodes, list):
            raise ScenarioError(f"WLAN {wid}: nodes must be a list")
        nodes = tuple(_parse_node(d, f"{wid}.{j + 1}") for j, d in enumerate(raw_nodes))
        wlans.append(WlanConfig(wid, nodes, channel, snr))

    adj = None
    if doc.get("cs_adjacency") is not None:
        adj = _parse_adjacency(doc["cs_adjacency"])
    return NetworkScenario(n, tuple(wlans), adj, mac, str(doc.get("scenario_id", "scenario")))


def scenario_to_dict(s: NetworkScenario) -> dict:
    """Canonical document form; ``parse_scenario(scenario_to_dict(s)) == s``."""
    def node(n: NodeConfig) -> dict:
        d = {"id": n.id,
             "load_mbps": "saturated" if n.saturated else n.load_mbps,
             "packet_bits": n.packet_bits}
        if n.mean_backoff_us is not None:
            d["mean_backoff_us"] = n.mean_backoff_us
        else:
            d["cw_slots"] = n.cw_slots
        d.update(p_noise=n.p_noise, p_hidden=n.p_hidden, p_ext=n.p_ext)
        if n.airtime_us is not None:
            d["airtime_us"] = n.airtime_us
        return d

    out = {
        "scenario_id": s.scenario_id,
        "n_basic_channels": s.n_basic_channels,
        "wlans": [{"id": w.id,
                   "channel": {"low": w.channel.low, "high": w.channel.high},
                   "snr_class": "override" if w.snr_class is None else w.snr_class,
                   "nodes": [node(n) for n in w.nodes]} for w in s.wlans],
        "cs_adjacency": sorted(sorted(p) for p in s.cs_adjacency),
    }
    diff = {f.name: getattr(s.mac, f.name) for f in fields(MacConstants)
            if getattr(s.mac, f.name) != getattr(DEFAULT_MAC, f.name)}
    if diff:
        out["mac_constants"] = diff
    return out


def dump_scenario(s: NetworkScenario) -> str:
    return json.dumps(scenario_to_dict(s), indent=2)


def load_scenario(path: str | Path) -> NetworkScenario:
    return parse_scenario(Path(path).read_text())


def make_scenario(channels: Iterable[Channel], n: int, *, nodes_per_wlan: int = 2,
                  cw_slots: int = 16, adjacency=None, mac: MacConstants = DEFAULT_MAC,
                  scenario_id: str = "scenario", ids: Sequence[str] | None = None) -> NetworkScenario:
    """Saturated scenario with identical default nodes; the shape used by the Monte Carlo studies."""
    channels = list(channels)
    ids = list(ids) if ids is not None else [f"W{k + 1}" for k in range(len(channels))]
    wlans = tuple(
        WlanConfig(wid, tuple(NodeConfig(f"{wid}.{j + 1}", cw_slots=cw_slots) for j in range(nodes_per_wlan)), ch)
        for wid, ch in zip(ids, channels))
    return NetworkScenario(n, wlans, adjacency, mac, scenario_id)


def bundled_scenarios() -> list[str]:
    root = resources.files("chanbond") / "scenarios"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def bundled_scenario(name: str) -> NetworkScenario:
    """Load one of the scenario files shipped with the package, by stem (e.g. ``unsat_ex1``)."""
    if name not in bundled_scenarios():
        raise ScenarioError(f"no bundled scenario {name!r}; available: {bundled_scenarios()}")
    return parse_scenario((resources.files("chanbond") / "scenarios" / f"{name}.json").read_text())
