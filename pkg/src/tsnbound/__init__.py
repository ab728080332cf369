"""Worst-case latency analysis, gate scheduling, routing and simulation for
time-sensitive Ethernet networks."""

__version__ = "0.1.0"
