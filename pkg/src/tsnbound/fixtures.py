"""Built-in experiment fixtures: the TC2 flow set on the eight-end-system,
four-switch topology, and a small message set for topology synthesis."""

from __future__ import annotations

from fractions import Fraction

from .model import Config, parse_document

# (id, size bytes, period ms)
TT_FLOWS = [
    ("TT_1", 145, "62.5"), ("TT_2", 508, "125"), ("TT_3", 1268, "37.5"),
    ("TT_4", 888, "37.5"), ("TT_5", 170, "25"), ("TT_6", 1527, "37.5"),
    ("TT_7", 578, "62.5"), ("TT_8", 908, "75"), ("TT_9", 186, "37.5"),
    ("TT_10", 1420, "37.5"), ("TT_11", 197, "25"), ("TT_12", 246, "12.5"),
    ("TT_13", 103, "12.5"), ("TT_14", 1053, "37.5"), ("TT_15", 913, "75"),
]

TT_SHRUNK = {
    "TT_1": 70, "TT_2": 71, "TT_3": 72, "TT_4": 77, "TT_5": 73, "TT_6": 80,
    "TT_7": 75, "TT_8": 74, "TT_9": 72, "TT_10": 80, "TT_11": 70, "TT_12": 75,
    "TT_13": 76, "TT_14": 77, "TT_15": 76,
}

# (id, size bytes, period ms, class)
AVB_FLOWS = [
    ("RC_1", 163, "A"), ("RC_2", 157, "A"), ("RC_3", 170, "B"), ("RC_4", 125, "A"),
    ("RC_5", 114, "B"), ("RC_6", 119, "B"), ("RC_7", 156, "A"), ("RC_8", 112, "A"),
    ("RC_9", 110, "B"), ("RC_10", 155, "A"), ("RC_11", 126, "A"), ("RC_12", 114, "B"),
    ("RC_13", 140, "A"), ("RC_14", 114, "A"), ("RC_15", 114, "B"), ("RC_16", 187, "A"),
    ("RC_17", 114, "A"), ("RC_18", 147, "B"), ("RC_19", 116, "A"), ("RC_20", 118, "A"),
    ("RC_21", 138, "A"), ("RC_22", 118, "A"), ("RC_23", 148, "B"), ("RC_24", 118, "A"),
    ("RC_25", 149, "A"), ("RC_26", 116, "B"), ("RC_27", 110, "A"), ("RC_28", 124, "A"),
    ("RC_29", 114, "A"), ("RC_30", 119, "A"), ("RC_31", 168, "A"), ("RC_32", 157, "A"),
    ("RC_33", 116, "B"), ("RC_34", 117, "A"),
]
AVB_PERIOD_MS = "125"

END_SYSTEMS = [f"ES_{i}" for i in range(1, 9)]
SWITCHES = [f"SW_{i}" for i in range(1, 5)]
CLOCKS = ["CLK_1", "CLK_2"]
LINKS = [
    ("ES_1", "SW_1"), ("ES_2", "SW_1"), ("ES_7", "SW_2"), ("ES_8", "SW_2"),
    ("ES_3", "SW_3"), ("ES_4", "SW_3"), ("ES_5", "SW_4"), ("ES_6", "SW_4"),
    ("SW_1", "SW_2"), ("SW_1", "SW_3"), ("SW_2", "SW_4"), ("SW_3", "SW_4"),
    ("CLK_1", "SW_1"), ("CLK_2", "SW_4"), ("CLK_1", "CLK_2"),
]

# numbered data-flow paths; 1-4 carry AVB, 5-10 carry TT
PATHS = {
    1: ("ES_1", "SW_1", "SW_2", "SW_4", "ES_5"),
    2: ("ES_4", "SW_3", "SW_4", "ES_5"),
    3: ("ES_5", "SW_4", "SW_3", "ES_3"),
    4: ("ES_3", "SW_3", "SW_4", "ES_6"),
    5: ("ES_2", "SW_1", "SW_3", "ES_4"),
    6: ("ES_7", "SW_2", "SW_4", "ES_6"),
    7: ("ES_8", "SW_2", "SW_1", "SW_3", "ES_3"),
    8: ("ES_8", "SW_2", "SW_1", "SW_3", "ES_4"),
    9: ("ES_8", "SW_2", "SW_4", "ES_5"),
    10: ("ES_8", "SW_2", "SW_4", "ES_6"),
}
AVB_PATHS = (1, 2, 3, 4)
TT_PATHS = (5, 6, 7, 8, 9, 10)

# GCL parameters in microseconds, link rate in Mbit/s
RATE_MBPS = 100
T_GCL = Fraction(250)
L_TT = Fraction(120)
L_AVB = Fraction(15)
L_SYN = Fraction(2)
L_SYN_GB = Fraction(5)
TT_OFFSET = Fraction(60)
OVERHEAD_BYTES = 24
PREAMBLE_BYTES = 20


def wire_time_us(size_bytes: int, preamble: int = PREAMBLE_BYTES, rate_mbps=RATE_MBPS) -> Fraction:
    return Fraction((size_bytes + preamble) * 8, rate_mbps)


def guard_band_us(preamble: int = PREAMBLE_BYTES) -> Fraction:
    """Guard band long enough to drain the largest AVB frame, and never
    shorter than the nominal syn+guard allowance."""
    largest = max(size for _, size, _ in AVB_FLOWS)
    return max(L_SYN_GB - L_SYN, wire_time_us(largest, preamble))


def gcl_windows(scheduler: str, mode: str, l_tt=L_TT, preamble: int = PREAMBLE_BYTES) -> list:
    """Windows of one hyperperiod: guard band (or overhead), syn, then TT.

    Under CBS+SP the TT window is omitted because the high class is
    event-triggered; syn and its guard stay periodic.
    """
    syn_start = TT_OFFSET - L_SYN
    wins = []
    if mode == "non-preemption":
        gb = guard_band_us(preamble)
        wins.append({"kind": "guard-band", "offset_us": syn_start - gb, "length_us": gb})
    else:
        oh = wire_time_us(OVERHEAD_BYTES, 0)
        wins.append({"kind": "overhead", "offset_us": syn_start - oh, "length_us": oh})
    wins.append({"kind": "syn", "offset_us": syn_start, "length_us": L_SYN})
    if scheduler == "CBS+TAS":
        wins.append({"kind": "TT", "offset_us": TT_OFFSET, "length_us": l_tt})
    return wins


def _ports(path):
    return [f"{a}->{b}" for a, b in zip(path, path[1:])]


def tc2_document(scheduler: str = "CBS+TAS", mode: str = "non-preemption",
                 shrink: bool = False, horizon_us=20000, seed: int = 0) -> dict:
    nodes = ([{"id": n, "kind": "end-system"} for n in END_SYSTEMS]
             + [{"id": n, "kind": "switch"} for n in SWITCHES]
             + [{"id": n, "kind": "clock"} for n in CLOCKS])
    links = [{"a": a, "b": b, "rate_mbps": RATE_MBPS} for a, b in LINKS]
    flows = []
    for i, (fid, size, per) in enumerate(TT_FLOWS):
        path = PATHS[TT_PATHS[i % len(TT_PATHS)]]
        flows.append({"id": fid, "class": "TT", "src": path[0], "dst": [path[-1]],
                      "size_bytes": TT_SHRUNK[fid] if shrink else size,
                      "period_us": Fraction(per) * 1000, "tolerance": 1, "route": [list(path)]})
    for i, (fid, size, cls) in enumerate(AVB_FLOWS):
        path = PATHS[AVB_PATHS[i % len(AVB_PATHS)]]
        flows.append({"id": fid, "class": cls, "src": path[0], "dst": [path[-1]],
                      "size_bytes": size, "period_us": Fraction(AVB_PERIOD_MS) * 1000,
                      "tolerance": 1, "route": [list(path)]})
    ports = sorted({p for f in flows for p in _ports(f["route"][0])})
    schedules = [{"port": p, "hyperperiod_us": T_GCL, "scheduler": scheduler, "mode": mode,
                  "idle_slope_a_pct": 60, "idle_slope_b_pct": 15,
                  "windows": gcl_windows(scheduler, mode)} for p in ports]
    opts = {"horizon_us": horizon_us, "alpha_routing": 1, "seed": seed,
            "preamble_bytes": PREAMBLE_BYTES}
    if shrink:
        opts["shrink_ratio"] = str(shrink_ratio())
    return {"network": {"nodes": nodes, "links": links}, "flows": flows,
            "schedules": schedules, "index_tables": [], "options": opts}


def tc2_config(scheduler: str = "CBS+TAS", mode: str = "non-preemption",
               shrink: bool = False, **kw) -> Config:
    return parse_document(tc2_document(scheduler, mode, shrink, **kw))


def shrink_ratio() -> Fraction:
    """Ratio of shrunk to original TT bytes over the whole flow set."""
    return Fraction(sum(TT_SHRUNK.values()), sum(size for _, size, _ in TT_FLOWS))


# bridge library and message set for topology synthesis (sizes KB, periods ms)
BRIDGE_LIBRARY = [
    {"name": "SW4", "cost": 4, "ports": 4},
    {"name": "SW8", "cost": 7, "ports": 8},
]

EXAMPLE_MESSAGES = [
    ("M_1", "ECU_3", "ECU_2", "1.5", 3, 1),
    ("M_2", "ECU_2", "ECU_2", "0.5", 3, 2),
    ("M_3", "ECU_1", "ECU_2", "0.5", 2, 2),
    ("M_4", "ECU_4", "ECU_2", "1", 2, 1),
]
