"""Network, flow and gate-schedule model plus configuration loading.

Config documents are YAML (JSON is accepted too since it is a YAML subset).
Units in documents follow the key names: microseconds, Mbit/s, bytes. Inside
the package time is in nanoseconds and rates are bits per nanosecond, both as
exact fractions.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Iterable

import yaml

from .minplus import Curve, LeakyBucket, add, make_curve, zero

NODE_KINDS = ("end-system", "switch", "clock")
CLASSES = ("TT", "CDT", "A", "B", "BE")
WINDOW_KINDS = ("TT", "AVB", "syn", "guard-band", "overhead")
SCHEDULERS = ("CBS+TAS", "CBS+SP")
MODES = ("non-preemption", "preemption")

MIN_FRAME = 64
# 1518 B is the untagged MTU; the TT table of the reference workload has a
# 1527 B frame, so the ceiling leaves room for tagged and padded frames.
MAX_FRAME = 1530

# PCP -> queue for an eight-queue port; TT rides on PCP 7, CDT on 6.
PCP_QUEUE = {0: 1, 1: 0, 2: 2, 3: 3, 4: 4, 5: 5, 6: 6, 7: 7}
CLASS_PCP = {"TT": 7, "CDT": 6, "A": 3, "B": 2, "BE": 0}


class ConfigError(ValueError):
    pass


def us(x) -> Fraction:
    """Microseconds (number or numeric string) to nanoseconds."""
    return Fraction(str(x)) * 1000


def to_us(ns: Fraction):
    v = Fraction(ns) / 1000
    return int(v) if v.denominator == 1 else float(v)


@dataclass(frozen=True)
class Node:
    id: str
    kind: str


@dataclass(frozen=True)
class Link:
    a: str
    b: str
    rate: Fraction  # bits/ns

    @property
    def key(self) -> frozenset:
        return frozenset((self.a, self.b))


@dataclass(frozen=True)
class BridgeKind:
    name: str
    cost: Fraction
    ports: int


@dataclass(frozen=True)
class NetworkModel:
    nodes: tuple[Node, ...]
    links: tuple[Link, ...]
    bridge_library: tuple[BridgeKind, ...] = ()

    def node(self, nid: str) -> Node:
        for n in self.nodes:
            if n.id == nid:
                return n
        raise ConfigError(f"unknown node id {nid!r}")

    def link(self, a: str, b: str) -> Link:
        k = frozenset((a, b))
        for l in self.links:
            if l.key == k:
                return l
        raise ConfigError(f"no link between {a!r} and {b!r}")

    def has_link(self, a: str, b: str) -> bool:
        k = frozenset((a, b))
        return any(l.key == k for l in self.links)

    def rate(self, port: str) -> Fraction:
        a, b = split_port(port)
        return self.link(a, b).rate

    def graph(self):
        import networkx as nx

        g = nx.Graph()
        g.add_nodes_from(n.id for n in self.nodes)
        for l in self.links:
            g.add_edge(l.a, l.b, rate=l.rate)
        return g


def port_id(a: str, b: str) -> str:
    return f"{a}->{b}"


def split_port(port: str) -> tuple[str, str]:
    a, _, b = port.partition("->")
    if not b:
        raise ConfigError(f"malformed port id {port!r} (expected 'A->B')")
    return a, b


@dataclass(frozen=True)
class FlowSpec:
    id: str
    cls: str
    src: str
    dst: tuple[str, ...]
    size_bytes: int
    period: Fraction  # ns
    tolerance: int = 1
    route: tuple[tuple[str, ...], ...] = ()

    @property
    def bits(self) -> int:
        return self.size_bytes * 8

    def paths(self) -> tuple[tuple[str, ...], ...]:
        return self.route

    def ports(self) -> list[str]:
        """Every output port the flow crosses, each once, in route order."""
        seen: dict[str, None] = {}
        for path in self.route:
            for a, b in zip(path, path[1:]):
                seen.setdefault(port_id(a, b), None)
        return list(seen)


@dataclass(frozen=True)
class Window:
    kind: str
    offset: Fraction  # ns
    length: Fraction  # ns

    @property
    def end(self) -> Fraction:
        return self.offset + self.length


@dataclass(frozen=True)
class PortSchedule:
    port: str
    hyperperiod: Fraction
    windows: tuple[Window, ...]
    scheduler: str = "CBS+TAS"
    mode: str = "non-preemption"
    idle_a: Fraction = Fraction(0)  # bits/ns
    idle_b: Fraction = Fraction(0)
    rate: Fraction = Fraction(0)

    def idle_slope(self, cls: str) -> Fraction:
        return self.idle_a if cls == "A" else self.idle_b

    def send_slope(self, cls: str) -> Fraction:
        return self.idle_slope(cls) - self.rate

    def windows_of(self, *kinds: str) -> list[Window]:
        return [w for w in self.windows if w.kind in kinds]

    def with_mode(self, scheduler: str | None = None, mode: str | None = None) -> "PortSchedule":
        return replace(
            self,
            scheduler=scheduler or self.scheduler,
            mode=mode or self.mode,
        )


@dataclass(frozen=True)
class IndexTable:
    id: str
    flows: tuple[str, ...]
    rows: tuple[tuple[bytes, tuple[int, ...]], ...]


@dataclass(frozen=True)
class Options:
    horizon_us: Fraction | None = None
    alpha_routing: Fraction = Fraction(1)
    seed: int = 0
    preamble_bytes: int = 20
    extra: dict = field(default_factory=dict, hash=False, compare=True)


@dataclass(frozen=True)
class Config:
    network: NetworkModel
    flows: tuple[FlowSpec, ...]
    schedules: dict
    index_tables: tuple[IndexTable, ...] = ()
    options: Options = Options()

    def flow(self, fid: str) -> FlowSpec:
        for f in self.flows:
            if f.id == fid:
                return f
        raise ConfigError(f"unknown flow {fid!r}")

    def routed_ports(self) -> list[str]:
        seen: dict[str, None] = {}
        for f in self.flows:
            for p in f.ports():
                seen.setdefault(p, None)
        return list(seen)

    def replace(self, **kw) -> "Config":
        return replace(self, **kw)


# --------------------------------------------------------------------------
# loading


def load_config(source) -> Config:
    """Parse and validate a config from a path, a YAML/JSON string or a dict."""
    if isinstance(source, dict):
        doc = source
    else:
        text = source
        if "\n" not in str(source) and not str(source).lstrip().startswith("{"):
            with open(source, encoding="utf-8") as fh:
                text = fh.read()
        doc = yaml.safe_load(text) or {}
    return parse_document(doc)


def parse_document(doc: dict) -> Config:
    net = doc.get("network") or {}
    nodes = []
    for n in net.get("nodes", []):
        kind = n.get("kind", "switch")
        if kind not in NODE_KINDS:
            raise ConfigError(f"node {n.get('id')!r}: unknown kind {kind!r}")
        nodes.append(Node(str(n["id"]), kind))
    ids = {n.id for n in nodes}
    if len(ids) != len(nodes):
        raise ConfigError("duplicate node id")
    links = []
    for l in net.get("links", []):
        a, b = str(l["a"]), str(l["b"])
        for x in (a, b):
            if x not in ids:
                raise ConfigError(f"link {a}-{b}: unknown node id {x!r}")
        if a == b:
            raise ConfigError(f"link {a}-{b}: endpoints must differ")
        rate = Fraction(str(l.get("rate_mbps", 100))) / 1000
        if rate <= 0:
            raise ConfigError(f"link {a}-{b}: rate must be positive")
        links.append(Link(a, b, rate))
    lib = tuple(
        BridgeKind(str(k["name"]), Fraction(str(k["cost"])), int(k["ports"]))
        for k in net.get("bridge_library", [])
    )
    network = NetworkModel(tuple(nodes), tuple(links), lib)

    flows = []
    for f in doc.get("flows", []) or []:
        flows.append(_parse_flow(f, network))
    fids = [f.id for f in flows]
    if len(set(fids)) != len(fids):
        dup = sorted({x for x in fids if fids.count(x) > 1})
        raise ConfigError(f"duplicate flow id {dup[0]!r}")

    schedules = {}
    for s in doc.get("schedules", []) or []:
        ps = _parse_schedule(s, network)
        if ps.port in schedules:
            raise ConfigError(f"port {ps.port}: duplicate schedule")
        schedules[ps.port] = ps

    tables = tuple(_parse_table(t, fids) for t in doc.get("index_tables", []) or [])

    o = doc.get("options") or {}
    known = {"horizon_us", "alpha_routing", "seed", "preamble_bytes"}
    options = Options(
        horizon_us=Fraction(str(o["horizon_us"])) if o.get("horizon_us") is not None else None,
        alpha_routing=Fraction(str(o.get("alpha_routing", 1))),
        seed=int(o.get("seed", 0)),
        preamble_bytes=int(o.get("preamble_bytes", 20)),
        extra={k: v for k, v in o.items() if k not in known},
    )
    cfg = Config(network, tuple(flows), schedules, tables, options)
    validate(cfg)
    return cfg


def _parse_flow(f: dict, network: NetworkModel) -> FlowSpec:
    fid = str(f["id"])
    cls = str(f.get("class", "BE"))
    if cls not in CLASSES:
        raise ConfigError(f"flow {fid}: unknown class {cls!r}")
    dst = f.get("dst", [])
    if isinstance(dst, str):
        dst = [dst]
    period = us(f.get("period_us", 0))
    if period <= 0:
        raise ConfigError(f"flow {fid}: period must be positive")
    size = int(f.get("size_bytes", 0))
    if not MIN_FRAME <= size <= MAX_FRAME:
        raise ConfigError(f"flow {fid}: frame size {size} outside [{MIN_FRAME}, {MAX_FRAME}]")
    tol = int(f.get("tolerance", 1))
    if tol < 1:
        raise ConfigError(f"flow {fid}: tolerance must be >= 1")
    route = f.get("route") or []
    if route and isinstance(route[0], str):
        route = [route]
    paths = tuple(tuple(str(n) for n in p) for p in route)
    spec = FlowSpec(fid, cls, str(f["src"]), tuple(str(d) for d in dst), size, period, tol, paths)
    for nid in (spec.src, *spec.dst):
        network.node(nid)
    return spec


def _parse_schedule(s: dict, network: NetworkModel) -> PortSchedule:
    port = str(s["port"])
    a, b = split_port(port)
    rate = network.link(a, b).rate
    T = us(s["hyperperiod_us"])
    if T <= 0:
        raise ConfigError(f"port {port}: hyperperiod must be positive")
    sched = s.get("scheduler", "CBS+TAS")
    mode = s.get("mode", "non-preemption")
    if sched not in SCHEDULERS:
        raise ConfigError(f"port {port}: unknown scheduler {sched!r}")
    if mode not in MODES:
        raise ConfigError(f"port {port}: unknown mode {mode!r}")
    wins = []
    for w in s.get("windows", []) or []:
        kind = w["kind"]
        if kind not in WINDOW_KINDS:
            raise ConfigError(f"port {port}: unknown window kind {kind!r}")
        wins.append(Window(kind, us(w["offset_us"]), us(w["length_us"])))
    wins.sort(key=lambda w: (w.offset, WINDOW_KINDS.index(w.kind)))
    ia = rate * Fraction(str(s.get("idle_slope_a_pct", 60))) / 100
    ib = rate * Fraction(str(s.get("idle_slope_b_pct", 15))) / 100
    return PortSchedule(port, T, tuple(wins), sched, mode, ia, ib, rate)


def _parse_table(t: dict, fids: list[str]) -> IndexTable:
    tid = str(t["id"])
    flows = tuple(str(x) for x in t["flows"])
    for f in flows:
        if f not in fids:
            raise ConfigError(f"index table {tid}: unknown flow {f!r}")
    rows = []
    for r in t.get("rows", []):
        code = bytes.fromhex(str(r["code_hex"]))
        vals = tuple(int(v) for v in r["values"])
        if len(vals) != len(flows):
            raise ConfigError(f"index table {tid}: row arity mismatch")
        rows.append((code, vals))
    return IndexTable(tid, flows, tuple(rows))


# --------------------------------------------------------------------------
# validation


def validate(cfg: Config) -> None:
    g = cfg.network.graph()
    import networkx as nx

    # a network without links is an input for topology synthesis
    if g.number_of_edges() and not nx.is_connected(g):
        raise ConfigError("network graph is not connected")
    for ps in cfg.schedules.values():
        _validate_schedule(ps)
    for f in cfg.flows:
        for path in f.route:
            if path[0] != f.src:
                raise ConfigError(f"flow {f.id}: route {path} does not start at {f.src}")
            if path[-1] not in f.dst:
                raise ConfigError(f"flow {f.id}: route {path} ends outside the destinations")
            if len(set(path)) != len(path):
                raise ConfigError(f"flow {f.id}: route {path} is not a simple path")
            for a, b in zip(path, path[1:]):
                if not cfg.network.has_link(a, b):
                    raise ConfigError(f"flow {f.id}: no link {a}-{b} on its route")
    if any(s.scheduler == "CBS+TAS" for s in cfg.schedules.values()):
        for p in cfg.routed_ports():
            if p not in cfg.schedules:
                raise ConfigError(f"port {p}: routed but has no schedule")
    for t in cfg.index_tables:
        codes = [c for c, _ in t.rows]
        if len(set(codes)) != len(codes):
            raise ConfigError(f"index table {t.id}: duplicate code")
        combos = [v for _, v in t.rows]
        if len(set(combos)) != len(combos):
            raise ConfigError(f"index table {t.id}: duplicate value combination")


def _validate_schedule(ps: PortSchedule) -> None:
    C = ps.rate
    for cls in ("A", "B"):
        I = ps.idle_slope(cls)
        if not 0 < I < C:
            raise ConfigError(f"port {ps.port}: idle slope of class {cls} must lie in (0, C)")
        if I - ps.send_slope(cls) != C:
            raise ConfigError(f"port {ps.port}: idle/send slope mismatch")
    if ps.idle_a + ps.idle_b > C:
        raise ConfigError(f"port {ps.port}: idle slopes exceed the link rate")
    T = ps.hyperperiod
    spans = []
    for w in ps.windows:
        if w.length <= 0 or w.length > T:
            raise ConfigError(f"port {ps.port}: window length out of range")
        if not 0 <= w.offset < T:
            raise ConfigError(f"port {ps.port}: window offset outside [0, hyperperiod)")
        # unwrap windows that cross the hyperperiod boundary
        if w.end <= T:
            spans.append((w.offset, w.end, w.kind))
        else:
            spans.append((w.offset, T, w.kind))
            spans.append((Fraction(0), w.end - T, w.kind))
    spans.sort()
    for (s1, e1, k1), (s2, e2, k2) in zip(spans, spans[1:]):
        if s2 < e1:
            raise ConfigError(f"port {ps.port}: windows {k1} and {k2} overlap")


# --------------------------------------------------------------------------
# serialization


def to_document(cfg: Config) -> dict:
    net = cfg.network
    doc = {
        "network": {
            "nodes": [{"id": n.id, "kind": n.kind} for n in net.nodes],
            "links": [{"a": l.a, "b": l.b, "rate_mbps": _num(l.rate * 1000)} for l in net.links],
        },
        "flows": [],
        "schedules": [],
        "index_tables": [],
        "options": {
            "alpha_routing": _num(cfg.options.alpha_routing),
            "seed": cfg.options.seed,
            "preamble_bytes": cfg.options.preamble_bytes,
            **cfg.options.extra,
        },
    }
    if net.bridge_library:
        doc["network"]["bridge_library"] = [
            {"name": k.name, "cost": _num(k.cost), "ports": k.ports} for k in net.bridge_library
        ]
    if cfg.options.horizon_us is not None:
        doc["options"]["horizon_us"] = _num(cfg.options.horizon_us)
    for f in cfg.flows:
        d = {
            "id": f.id,
            "class": f.cls,
            "src": f.src,
            "dst": list(f.dst),
            "size_bytes": f.size_bytes,
            "period_us": to_us(f.period),
            "tolerance": f.tolerance,
        }
        if f.route:
            d["route"] = [list(p) for p in f.route]
        doc["flows"].append(d)
    for ps in cfg.schedules.values():
        doc["schedules"].append(
            {
                "port": ps.port,
                "hyperperiod_us": to_us(ps.hyperperiod),
                "scheduler": ps.scheduler,
                "mode": ps.mode,
                "idle_slope_a_pct": _num(ps.idle_a / ps.rate * 100),
                "idle_slope_b_pct": _num(ps.idle_b / ps.rate * 100),
                "windows": [
                    {"kind": w.kind, "offset_us": to_us(w.offset), "length_us": to_us(w.length)}
                    for w in ps.windows
                ],
            }
        )
    for t in cfg.index_tables:
        doc["index_tables"].append(
            {
                "id": t.id,
                "flows": list(t.flows),
                "rows": [{"code_hex": c.hex(), "values": list(v)} for c, v in t.rows],
            }
        )
    return doc


def _num(x: Fraction):
    x = Fraction(x)
    if x.denominator == 1:
        return int(x)
    f = float(x)
    if Fraction(repr(f)) == x:
        return f
    return str(x)


def dump_config(cfg: Config) -> str:
    return yaml.safe_dump(to_document(cfg), sort_keys=False)


# --------------------------------------------------------------------------
# arrival curves


def flow_arrival_curve(flow: FlowSpec, horizon, overhead_bytes: int = 0) -> Curve:
    """One-frame burst, one frame per period."""
    bits = (flow.size_bytes + overhead_bytes) * 8
    return make_curve(LeakyBucket(bits, Fraction(bits) / flow.period), horizon)


def class_aggregate(flows: Iterable[FlowSpec], cls: str, port: str, horizon,
                    overhead_bytes: int = 0) -> Curve:
    members = [f for f in flows if f.cls == cls and port in f.ports()]
    if not members:
        return zero(horizon)
    curves = [flow_arrival_curve(f, horizon, overhead_bytes) for f in members]
    return curves[0] if len(curves) == 1 else add(*curves)
