"""PHY/MAC timing for 802.11ac-style bonded transmissions.

All durations returned by this module are in seconds; the constant table is
kept in microseconds and bits so it can be written straight from a scenario
file's ``mac_constants`` block.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace
from fractions import Fraction


@dataclass(frozen=True)
class McsEntry:
    c: int
    data_subcarriers: int
    bits_per_symbol: int
    coding_rate: Fraction
    nominal_rate_mbps: float

    @property
    def l_dbps(self) -> float:
        """Data bits carried by one OFDM symbol on one spatial stream."""
        return float(self.bits_per_symbol * self.coding_rate * self.data_subcarriers)


# One MCS per bonded width; SNR-adaptive selection is not modelled.
MCS_TABLE: dict[int, McsEntry] = {
    1: McsEntry(1, 52, 6, Fraction(5, 6), 65.0),
    2: McsEntry(2, 108, 6, Fraction(3, 4), 121.5),
    4: McsEntry(4, 234, 4, Fraction(3, 4), 175.5),
    8: McsEntry(8, 468, 4, Fraction(1, 2), 232.0),
}

ALLOWED_WIDTHS = tuple(sorted(MCS_TABLE))


@dataclass(frozen=True)
class MacConstants:
    t_phy_us: float = 40.0
    t_sym_us: float = 4.0
    sf_bits: int = 16
    mpdu_delim_bits: int = 32
    mac_header_bits: int = 288
    tail_bits: int = 6
    ba_bits: int = 256
    sifs_us: float = 16.0
    difs_us: float = 34.0
    t_slot_us: float = 9.0
    n_a: int = 64
    n_su: int = 2

    def __post_init__(self):
        for f in fields(self):
            if getattr(self, f.name) < 0:
                raise ValueError(f"mac constant {f.name} must be non-negative")
        if self.n_a < 1 or self.n_su < 1:
            raise ValueError("n_a and n_su must be >= 1")
        if self.t_sym_us <= 0 or self.t_slot_us <= 0:
            raise ValueError("symbol and slot durations must be positive")

    @property
    def t_slot_s(self) -> float:
        return self.t_slot_us * 1e-6

    def difs_consistent(self, atol: float = 1e-9) -> bool:
        """True when DIFS = SIFS + 2 slots, as in the 5 GHz band."""
        return abs(self.difs_us - (self.sifs_us + 2 * self.t_slot_us)) <= atol

    def with_overrides(self, **kw) -> "MacConstants":
        return replace(self, **kw)


DEFAULT_MAC = MacConstants()


def mcs_for_width(c: int) -> McsEntry:
    try:
        return MCS_TABLE[c]
    except KeyError:
        raise ValueError(f"no MCS entry for {c} bonded channels; allowed {ALLOWED_WIDTHS}") from None


def tx_duration(c: int, mcs: McsEntry | None, packet_bits: int,
                consts: MacConstants = DEFAULT_MAC) -> float:
    """Airtime of one aggregated data exchange, DATA + SIFS + block-ACK + DIFS + slot.

    The block-ACK is always sent with the single-channel MCS row.
    """
    if mcs is None:
        mcs = mcs_for_width(c)
    if mcs.c != c:
        raise ValueError(f"MCS entry is for c={mcs.c}, not c={c}")
    if packet_bits <= 0:
        raise ValueError("packet_bits must be positive")
    l_dbps = mcs.l_dbps
    l_dbps_ba = mcs_for_width(1).l_dbps
    if l_dbps <= 0 or l_dbps_ba <= 0:
        raise ValueError("zero data bits per symbol")

    k = consts
    data_bits = k.sf_bits + k.n_a * (k.mpdu_delim_bits + k.mac_header_bits + packet_bits) + k.tail_bits
    n_data = math.ceil(data_bits / (k.n_su * l_dbps))
    n_ba = math.ceil((k.sf_bits + k.ba_bits + k.tail_bits) / l_dbps_ba)
    total_us = ((k.t_phy_us + n_data * k.t_sym_us) + k.sifs_us
                + (k.t_phy_us + n_ba * k.t_sym_us) + k.difs_us + k.t_slot_us)
    return total_us * 1e-6


def success_probability(p_noise: float, p_hidden: float = 0.0, p_ext: float = 0.0) -> float:
    for name, p in (("p_noise", p_noise), ("p_hidden", p_hidden), ("p_ext", p_ext)):
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"{name}={p} outside [0, 1]")
    return (1.0 - p_noise) * (1.0 - p_hidden) * (1.0 - p_ext)


def mean_backoff(cfg, consts: MacConstants = DEFAULT_MAC) -> float:
    """E[B] in seconds; from ``cw_slots`` as (CW/2) slots when no explicit mean is given."""
    if cfg.mean_backoff_s is not None:
        eb = cfg.mean_backoff_s
    elif cfg.cw_slots is not None:
        if cfg.cw_slots < 1:
            raise ValueError("cw_slots must be >= 1")
        eb = cfg.cw_slots / 2.0 * consts.t_slot_s
    else:
        raise ValueError("node has neither mean_backoff_s nor cw_slots")
    if not eb > 0:
        raise ValueError("mean backoff must be positive")
    return eb


def backoff_rate(cfg, consts: MacConstants = DEFAULT_MAC) -> float:
    """Attempt rate 1/E[B] of a backlogged node, in attempts per second."""
    return 1.0 / mean_backoff(cfg, consts)


def activity_ratio(rho: float, lam: float, mean_tx_s: float) -> float:
    if not 0.0 <= rho <= 1.0:
        raise ValueError(f"rho={rho} outside [0, 1]")
    if lam <= 0 or mean_tx_s <= 0:
        raise ValueError("attempt rate and airtime must be positive")
    return rho * lam * mean_tx_s
