"""Throughput and channel allocation for overlapping WLANs that use channel bonding."""
