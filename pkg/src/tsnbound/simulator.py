"""Deterministic discrete-event simulator of the modeled network.

Output ports hold one FIFO queue per class (TT, CDT, A, B, BE), follow their
gate schedule, shape AVB classes with a credit-based shaper and optionally
preempt AVB/BE frames for express traffic. A synchronization prelude runs
before any data frame is released. Time is integer nanoseconds; credit is an
exact fraction.
"""

from __future__ import annotations

import bisect
import csv
import heapq
import io
import math
import random
import struct
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction

from .model import CLASS_PCP, Config, ConfigError, FlowSpec, IndexTable, port_id, us

CLASS_ORDER = ("TT", "CDT", "A", "B", "BE")
EXPRESS = ("TT", "CDT")
AVB = ("A", "B")

# event ranks for ties at the same instant
R_PHASE, R_TX_END, R_GATE, R_CREDIT, R_ARRIVAL = 0, 1, 2, 3, 4

SYNC_PHASES = (
    ("initial", int(us(200))),
    ("fixed-frame-propagation", int(us(400))),
    ("ack", int(us(800))),
    ("buffer", int(us(250))),
)
FINISH_PHASE = int(us(150))
FIXED_FRAME_BYTES = 70
ACK_BYTES = 64
FINISH_BYTES = 64

TRACE_HEADER = ("time_ns", "event", "node", "port", "flow", "seq", "detail")
REPORT_HEADER = ("flow", "dst", "min_ns", "mean_ns", "max_ns", "jitter_ns", "bound_ns")


class SimError(RuntimeError):
    pass


class BuildError(ConfigError):
    pass


@dataclass
class SimOptions:
    seed: int = 0
    duration: int = 100_000_000  # ns of data releases
    preamble_on: bool = True
    offsets: object = "random"  # "random", "zero" or {flow id: ns}
    sync: bool = True
    propagation: int = 0
    min_fragment: int = 64
    resume_overhead: int = 24
    drain_limit: int = 50_000_000
    log_gates: bool = True


@dataclass
class Frame:
    flow: str
    seq: int
    cls: str
    release: int
    wire_bytes: int


@dataclass
class Fragment:
    frame: Frame
    bytes: int
    index: int = 0

    @property
    def resumed(self) -> bool:
        return self.index > 0


@dataclass
class Tx:
    frag: Fragment
    start: int
    end: int
    token: int
    cut: bool = False


def _ceil(x) -> int:
    return math.ceil(Fraction(x))


class Port:
    def __init__(self, node, nxt, rate, sched, opts: SimOptions):
        self.node, self.nxt = node, nxt
        self.id = port_id(node, nxt)
        self.rate = Fraction(rate)
        self.sched = sched
        self.mode = sched.mode if sched else "non-preemption"
        self.scheduler = sched.scheduler if sched else "CBS+SP"
        self.queues = {c: deque() for c in CLASS_ORDER}
        self.tx: Tx | None = None
        self.params = {}
        if sched:
            for c in AVB:
                idle = sched.idle_slope(c)
                if idle > 0:
                    self.params[c] = (idle, idle - self.rate)
        self.credit = {c: Fraction(0) for c in self.params}
        self.slope = {c: None for c in self.params}
        self.last = 0
        self.opts = opts
        self._windows = []
        self._bounds = []
        if sched:
            T = sched.hyperperiod
            if T.denominator != 1:
                raise BuildError(f"port {self.id}: hyperperiod must be whole ns")
            self.T = int(T)
            pts = set()
            for w in sched.windows:
                s, e = _ceil(w.offset), _ceil(w.end)
                self._windows.append((w.kind, s, e))
                pts.add(s % self.T)
                pts.add(e % self.T)
            self._bounds = sorted(pts)
            self._tas_tt = self.scheduler == "CBS+TAS" and any(k == "TT" for k, _, _ in self._windows)
            # open classes on each segment between consecutive boundaries
            starts = self._bounds or [0]
            self._seg_starts = starts
            self._seg_open = [self._open_at(b) for b in starts]

    # gates --------------------------------------------------------------

    def active(self, t) -> set:
        if not self.sched:
            return set()
        ph = t % self.T
        out = set()
        for kind, s, e in self._windows:
            # windows may wrap past the hyperperiod end
            if s <= ph < e or s <= ph + self.T < e:
                out.add(kind)
        return out

    def gate(self, cls, t) -> bool:
        if not self.sched:
            return True
        ph = t % self.T
        i = bisect.bisect_right(self._seg_starts, ph) - 1
        return cls in self._seg_open[i]

    def _open_at(self, t) -> frozenset:
        return frozenset(c for c in CLASS_ORDER if self._gate_slow(c, t))

    def _gate_slow(self, cls, t) -> bool:
        act = self.active(t)
        blocked = {"syn", "guard-band", "overhead"}
        if cls == "TT" and self._tas_tt:
            return "TT" in act
        if cls in EXPRESS:
            return not act & blocked
        if self.scheduler == "CBS+TAS" and "TT" in act:
            return False
        return not act & blocked

    def next_boundary(self, t) -> int | None:
        if not self._bounds:
            return None
        base = t - t % self.T
        ph = t % self.T
        for b in self._bounds:
            if b > ph:
                return base + b
        return base + self.T + self._bounds[0]

    # credit -------------------------------------------------------------

    def current_slope(self, c, t):
        idle, send = self.params[c]
        if self.tx is not None and self.tx.frag.frame.cls == c:
            return send, "send-drain"
        if not self.gate(c, t):
            return Fraction(0), "frozen"
        if self.tx is not None and self.tx.frag.frame.cls in EXPRESS:
            return Fraction(0), "frozen"
        if self.queues[c] or self.credit[c] < 0:
            return idle, "idle-gain"
        return Fraction(0), "frozen"

    def advance(self, t):
        dt = t - self.last
        if dt > 0:
            for c in self.params:
                s, _ = self.current_slope(c, self.last)
                v = self.credit[c] + s * dt
                if not self.queues[c] and s > 0 and self.credit[c] < 0 < v:
                    v = Fraction(0)
                self.credit[c] = v
        self.last = t

    def crossing(self, t):
        """Earliest integer time at which some negative credit reaches 0."""
        best = None
        for c in self.params:
            s, _ = self.current_slope(c, t)
            if s > 0 and self.credit[c] < 0:
                w = t + _ceil(-self.credit[c] / s)
                best = w if best is None else min(best, w)
        return best

    def eligible(self, c, t) -> bool:
        if not self.queues[c] or not self.gate(c, t):
            return False
        if c in self.params and self.credit[c] < 0:
            return False
        return True

    def tx_time(self, nbytes) -> int:
        return _ceil(Fraction(nbytes * 8) / self.rate)


@dataclass
class SimulatorInstance:
    config: Config
    options: SimOptions
    ports: dict
    routes: dict  # flow id -> {node: [next nodes]}
    releases: list  # (time, flow id, seq)
    data_start: int
    sync_tree: dict = field(default_factory=dict)
    ran: bool = False


@dataclass
class TraceLog:
    rows: list

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TRACE_HEADER)
        w.writerows(self.rows)
        return buf.getvalue()

    def write(self, path):
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(self.to_csv())

    def events(self, kind):
        return [r for r in self.rows if r[1] == kind]

    def credit_events(self, port, cls) -> list:
        """(time, credit, cause) rows for one port and class."""
        out = []
        for r in self.rows:
            if r[1] == "credit" and r[3] == port and r[4] == cls:
                cause, val = r[6].split(" ")
                out.append((r[0], Fraction(val), cause))
        return out


# --------------------------------------------------------------------------
# build


def _forwarding(flow: FlowSpec) -> dict:
    fwd: dict = {}
    for path in flow.route:
        for a, b in zip(path, path[1:]):
            fwd.setdefault(a, set()).add(b)
    return {n: sorted(v) for n, v in fwd.items()}


def build_sim(cfg: Config, options: SimOptions | None = None, **kw) -> SimulatorInstance:
    """Validate the routed flows against the network and schedule every
    periodic release."""
    opts = options or SimOptions(seed=cfg.options.seed)
    for k, v in kw.items():
        setattr(opts, k, v)
    ids = [f.id for f in cfg.flows]
    dup = sorted({i for i in ids if ids.count(i) > 1})
    if dup:
        raise BuildError(f"duplicate flow id {dup[0]!r}")
    hyper = [ps.hyperperiod for ps in cfg.schedules.values()]
    if hyper and opts.duration < 2 * max(hyper):
        raise BuildError("duration must cover at least two hyperperiods")
    ports = {}
    routes = {}
    for f in cfg.flows:
        if not f.route:
            raise BuildError(f"flow {f.id} has no route")
        for path in f.route:
            for a, b in zip(path, path[1:]):
                if not cfg.network.has_link(a, b):
                    raise BuildError(f"flow {f.id}: no link between {a} and {b}")
                p = port_id(a, b)
                if p not in ports:
                    sched = cfg.schedules.get(p)
                    if sched is None and any(ps.scheduler == "CBS+TAS" for ps in cfg.schedules.values()):
                        raise BuildError(f"port {p} has no gate schedule")
                    ports[p] = Port(a, b, cfg.network.link(a, b).rate, sched, opts)
        routes[f.id] = _forwarding(f)
    data_start = sum(d for _, d in SYNC_PHASES) if opts.sync else 0
    rng = random.Random(opts.seed)
    releases = []
    end = data_start + opts.duration
    for f in sorted(cfg.flows, key=lambda x: x.id):
        period = f.period
        if period.denominator != 1:
            raise BuildError(f"flow {f.id}: period must be whole ns")
        if opts.offsets == "zero":
            off = 0
        elif opts.offsets == "random":
            off = rng.randrange(int(period))
        else:
            off = int(opts.offsets.get(f.id, 0))
        t, k = data_start + off, 0
        while t < end:
            releases.append((t, f.id, k))
            k += 1
            t += int(period)
    return SimulatorInstance(cfg, opts, ports, routes, releases, data_start,
                             _sync_tree(cfg) if opts.sync else {})


def _sync_tree(cfg: Config) -> dict:
    """BFS parent of every node, rooted at the clock nodes."""
    g = cfg.network.graph()
    roots = sorted(n.id for n in cfg.network.nodes if n.kind == "clock")
    parent = {r: None for r in roots}
    frontier = list(roots)
    while frontier:
        nxt = []
        for u in frontier:
            for v in sorted(g.neighbors(u)):
                if v not in parent:
                    parent[v] = u
                    nxt.append(v)
        frontier = nxt
    return parent


def fixed_frame_payload(cfg: Config) -> bytes:
    """32 B payload: idle slope, send slope (bit/s), largest frame length
    (bytes) and traffic type (PCP of class A), 8 B each."""
    ps = next(iter(cfg.schedules.values()), None)
    idle = int(ps.idle_a * 10**9) if ps else 0
    send = int((ps.idle_a - ps.rate) * 10**9) if ps else 0
    longest = max((f.size_bytes for f in cfg.flows), default=0)
    return struct.pack(">4q", idle, send, longest, CLASS_PCP["A"])


# --------------------------------------------------------------------------
# run


class _Loop:
    def __init__(self, sim: SimulatorInstance):
        self.sim = sim
        self.cfg = sim.config
        self.opts = sim.options
        self.heap = []
        self.n = 0
        self.rows = []
        self.token = 0
        self.in_flight = 0
        self.flows = {f.id: f for f in self.cfg.flows}
        self.pending_releases = len(sim.releases)
        self.touched = set()
        self.preamble = self.cfg.options.preamble_bytes if self.opts.preamble_on else 0

    def push(self, t, rank, subject, kind, payload=None):
        heapq.heappush(self.heap, (t, rank, subject, self.n, kind, payload))
        self.n += 1

    def log(self, t, event, node="", port="", flow="", seq="", detail=""):
        self.rows.append((t, event, node, port, flow, seq, detail))

    # sync ----------------------------------------------------------------

    def sync_prelude(self):
        sim, cfg = self.sim, self.cfg
        payload = fixed_frame_payload(cfg)
        parent = sim.sync_tree
        t = 0
        for name, budget in SYNC_PHASES:
            self.log(t, "sync-phase", detail=name)
            if name == "fixed-frame-propagation":
                done = self._flood(t, parent, FIXED_FRAME_BYTES, payload)
                if done - t >= budget:
                    raise SimError("fixed-frame propagation exceeds its phase budget")
            elif name == "ack":
                done = t
                for n in sorted(parent):
                    p = parent[n]
                    if p is None:
                        continue
                    d = t + self._hop_time(n, p, ACK_BYTES)
                    self.log(d, "sync-frame", n, port_id(n, p), "ack", "", f"bytes={ACK_BYTES}")
                    done = max(done, d)
                if done - t >= budget:
                    raise SimError("ack phase exceeds its phase budget")
            t += budget
        self.log(t, "sync-phase", detail="frame-send")
        return t

    def _hop_time(self, a, b, nbytes):
        rate = self.cfg.network.link(a, b).rate
        return _ceil(Fraction(nbytes * 8) / rate) + self.opts.propagation

    def _flood(self, t0, parent, nbytes, payload):
        children = {}
        for n, p in parent.items():
            if p is not None:
                children.setdefault(p, []).append(n)
        arrive = {n: t0 for n, p in parent.items() if p is None}
        order = sorted(arrive)
        done = t0
        while order:
            nxt = []
            for u in order:
                t = arrive[u]
                for v in sorted(children.get(u, ())):
                    t += self._hop_time(u, v, nbytes)
                    arrive[v] = t
                    if struct.unpack(">4q", payload) != struct.unpack(">4q", payload[:32]):
                        raise SimError("fixed-frame payload corrupted")
                    self.log(t, "sync-frame", u, port_id(u, v), "fixed-frame", "",
                             f"bytes={nbytes} payload={payload.hex()}")
                    done = max(done, t)
                    nxt.append(v)
            order = sorted(nxt)
        return done

    # data ----------------------------------------------------------------

    def run(self) -> TraceLog:
        sim = self.sim
        if sim.ran:
            raise SimError("instance already ran")
        sim.ran = True
        if self.opts.sync:
            self.sync_prelude()
        for t, fid, k in sim.releases:
            self.push(t, R_ARRIVAL, (fid, k), "release", (fid, k))
        for pid in sorted(sim.ports):
            port = sim.ports[pid]
            port.last = sim.data_start
            nb = port.next_boundary(sim.data_start)
            if nb is not None:
                self.push(nb, R_GATE, pid, "gate", pid)
        deadline = sim.data_start + self.opts.duration + self.opts.drain_limit
        t_now = sim.data_start
        while self.heap:
            if self.pending_releases == 0 and self.in_flight == 0:
                break
            t = self.heap[0][0]
            if t > deadline:
                break
            t_now = t
            while self.heap and self.heap[0][0] == t:
                _, _, _, _, kind, payload = heapq.heappop(self.heap)
                getattr(self, "on_" + kind)(t, payload)
            for pid in sorted(self.touched):
                self.record(sim.ports[pid], t)
            self.touched.clear()
        end = max(t_now, sim.data_start)
        if self.opts.sync:
            self.log(end, "sync-phase", detail="finish")
            for c in sorted(n.id for n in self.cfg.network.nodes if n.kind == "clock"):
                self.log(end, "sync-frame", c, "", "finish", "", f"bytes={FINISH_BYTES}")
            self.log(end + FINISH_PHASE, "sync-phase", detail="done")
        # anything still queued is dropped
        for pid in sorted(sim.ports):
            port = sim.ports[pid]
            stuck = ([port.tx.frag] if port.tx else []) + [f for c in CLASS_ORDER for f in port.queues[c]]
            for frag in stuck:
                fr = frag.frame
                self.log(end, "drop", port.node, pid, fr.flow, fr.seq, "undelivered")
        return TraceLog(self.rows)

    def on_release(self, t, payload):
        fid, k = payload
        f = self.flows[fid]
        self.pending_releases -= 1
        fr = Frame(fid, k, f.cls, t, f.size_bytes + self.preamble)
        self.in_flight += 1
        self.log(t, "release", f.src, "", fid, k, f"bytes={fr.wire_bytes}")
        self.forward(t, f.src, fr)

    def forward(self, t, node, fr: Frame):
        """Hand a complete frame to every next hop of its flow at ``node``."""
        nxts = self.sim.routes[fr.flow].get(node, [])
        if not nxts:
            return
        self.in_flight += len(nxts) - 1
        for b in nxts:
            self.push(t, R_ARRIVAL, (fr.flow, fr.seq, b), "arrival",
                      (port_id(node, b), Fragment(fr, fr.wire_bytes)))

    def on_arrival(self, t, payload):
        pid, frag = payload
        port = self.sim.ports[pid]
        port.advance(t)
        port.queues[frag.frame.cls].append(frag)
        self.log(t, "enqueue", port.node, pid, frag.frame.flow, frag.frame.seq,
                 frag.frame.cls)
        self.service(port, t)

    def on_gate(self, t, pid):
        port = self.sim.ports[pid]
        port.advance(t)
        if self.opts.log_gates:
            open_ = [c for c in CLASS_ORDER if port.gate(c, t)]
            self.log(t, "gate-change", port.node, pid, "", "", "open=" + "|".join(open_))
        if self.pending_releases or self.in_flight:
            self.push(port.next_boundary(t), R_GATE, pid, "gate", pid)
        self.service(port, t)

    def on_credit(self, t, pid):
        port = self.sim.ports[pid]
        port.advance(t)
        self.service(port, t)

    def on_tx_end(self, t, payload):
        pid, token = payload
        port = self.sim.ports[pid]
        tx = port.tx
        if tx is None or tx.token != token:
            return
        port.advance(t)
        port.tx = None
        frag, fr = tx.frag, tx.frag.frame
        if tx.cut:
            sent = (t - tx.start) * port.rate / 8
            sent = int(sent)
            rest = frag.bytes - sent + self.opts.resume_overhead
            port.queues[fr.cls].appendleft(Fragment(fr, rest, frag.index + 1))
            self.log(t, "preempt-hold", port.node, pid, fr.flow, fr.seq,
                     f"sent={sent} remaining={rest}")
        else:
            self.log(t, "tx-end", port.node, pid, fr.flow, fr.seq, f"fragment={frag.index}")
            self.arrive_at(t + self.opts.propagation, port.nxt, fr)
        self.service(port, t)

    def arrive_at(self, t, node, fr: Frame):
        f = self.flows[fr.flow]
        if node in f.dst:
            self.log(t, "deliver", node, "", fr.flow, fr.seq, f"delay={t - fr.release}")
        if self.sim.routes[fr.flow].get(node):
            self.forward(t, node, fr)
        elif node in f.dst:
            self.in_flight -= 1
        else:
            raise SimError(f"flow {fr.flow} stranded at {node}")

    # port decisions -------------------------------------------------------

    def settle(self, port):
        for c in port.params:
            if port.tx is not None and port.tx.frag.frame.cls == c:
                continue
            if not port.queues[c] and port.credit[c] > 0:
                port.credit[c] = Fraction(0)
                self.log(port.last, "credit", port.node, port.id, c, "", "reset 0")
                port.slope[c] = Fraction(0)

    def service(self, port: Port, t):
        self.touched.add(port.id)
        self.settle(port)
        if port.tx is None:
            for c in CLASS_ORDER:
                if port.eligible(c, t):
                    self.start(port, c, t)
                    break
        elif port.mode == "preemption" and not port.tx.cut:
            cls = port.tx.frag.frame.cls
            if cls not in EXPRESS:
                want = any(port.eligible(c, t) for c in EXPRESS) or not port.gate(cls, t)
                if want:
                    self.cut(port, t)
        self.settle(port)
        w = port.crossing(t)
        if w is not None:
            self.push(w, R_CREDIT, port.id, "credit", port.id)

    def start(self, port: Port, c, t):
        frag = port.queues[c].popleft()
        self.token += 1
        dur = port.tx_time(frag.bytes)
        port.tx = Tx(frag, t, t + dur, self.token)
        fr = frag.frame
        ev = "preempt-release" if frag.resumed else "tx-start"
        self.log(t, ev, port.node, port.id, fr.flow, fr.seq, f"bytes={frag.bytes}")
        self.push(t + dur, R_TX_END, port.id, "tx_end", (port.id, self.token))

    def cut(self, port: Port, t):
        """Stop the running AVB/BE fragment at the next byte boundary that
        leaves both parts at least the minimum fragment size."""
        tx = port.tx
        m = self.opts.min_fragment
        sent = _ceil((t - tx.start) * port.rate / 8)
        sent = max(sent, m)
        if tx.frag.bytes - sent < m:
            return
        at = tx.start + _ceil(Fraction(sent * 8) / port.rate)
        if at >= tx.end:
            return
        self.token += 1
        tx.token, tx.end, tx.cut = self.token, at, True
        self.push(at, R_TX_END, port.id, "tx_end", (port.id, self.token))

    def record(self, port: Port, t):
        for c in port.params:
            s, cause = port.current_slope(c, t)
            if port.slope[c] is None or port.slope[c] != s:
                self.log(t, "credit", port.node, port.id, c, "", f"{cause} {port.credit[c]}")
                port.slope[c] = s


def run(sim: SimulatorInstance) -> TraceLog:
    return _Loop(sim).run()


# --------------------------------------------------------------------------
# measurement


@dataclass
class FlowDelay:
    flow: str
    dst: str
    min_ns: int | None
    mean_ns: Fraction | None
    max_ns: int | None
    jitter_ns: int | None
    delivered: int
    dropped: int
    bound_ns: Fraction | None = None

    @property
    def flagged(self) -> bool:
        return self.delivered == 0


@dataclass
class DelayReport:
    rows: list

    def row(self, flow, dst=None) -> FlowDelay:
        for r in self.rows:
            if r.flow == flow and (dst is None or r.dst == dst):
                return r
        raise KeyError(flow)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(REPORT_HEADER)
        for r in self.rows:
            w.writerow((r.flow, r.dst, _fmt(r.min_ns), _fmt(r.mean_ns), _fmt(r.max_ns),
                        _fmt(r.jitter_ns), _fmt(r.bound_ns)))
        return buf.getvalue()

    def write(self, path):
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(self.to_csv())


def _fmt(x) -> str:
    if x is None:
        return ""
    x = Fraction(x)
    if x.denominator == 1:
        return str(x.numerator)
    return f"{float(x):.3f}"


def measure(trace: TraceLog, flows) -> DelayReport:
    """Per flow and destination: delay statistics from release to last-bit
    delivery, and delivered/dropped counts."""
    released: dict = {}
    delays: dict = {}
    for r in trace.rows:
        if r[1] == "release":
            released[r[4]] = released.get(r[4], 0) + 1
        elif r[1] == "deliver":
            delays.setdefault((r[4], r[2]), []).append(int(r[6].split("=")[1]))
    rows = []
    for f in sorted(flows, key=lambda x: x.id):
        for d in sorted(f.dst):
            ds = delays.get((f.id, d), [])
            n = released.get(f.id, 0)
            if ds:
                lo, hi = min(ds), max(ds)
                rows.append(FlowDelay(f.id, d, lo, Fraction(sum(ds), len(ds)), hi, hi - lo,
                                      len(ds), n - len(ds)))
            else:
                rows.append(FlowDelay(f.id, d, None, None, None, None, 0, n))
    return DelayReport(rows)


def simulate(cfg: Config, **kw) -> tuple[TraceLog, DelayReport]:
    sim = build_sim(cfg, **kw)
    trace = run(sim)
    return trace, measure(trace, cfg.flows)


# --------------------------------------------------------------------------
# index encoding


class IndexError_(ValueError):
    pass


MIN_WIRE_FRAME = 64


@dataclass(frozen=True)
class EncodedFrame:
    table: str | None
    payload: bytes
    wire_bytes: int
    flows: tuple


def _check_table(t: IndexTable):
    seen = {}
    codes = set()
    for code, vals in t.rows:
        if tuple(vals) in seen:
            raise IndexError_(f"table {t.id}: duplicate value combination {tuple(vals)}")
        if code in codes:
            raise IndexError_(f"table {t.id}: duplicate code {code.hex()}")
        seen[tuple(vals)] = code
        codes.add(code)
    return seen


def encode_decode_indexed(tt_frames: dict, tables) -> tuple[list, dict]:
    """Replace a table-listed combination of TT payloads by one indexed frame.

    tt_frames maps flow id to its payload (bytes). Each payload's value is
    its big-endian integer. On a hit one frame carrying the code is sent
    (padded to the 64 B minimum on the wire); on a miss every frame passes
    through unchanged. Returns (wire frames, restored payloads by flow).
    """
    wire = []
    restored = {}
    used = set()
    for t in tables:
        lookup = _check_table(t)
        reverse = {code: vals for vals, code in lookup.items()}
        if not all(f in tt_frames for f in t.flows):
            continue
        widths = [len(tt_frames[f]) for f in t.flows]
        key = tuple(int.from_bytes(tt_frames[f], "big") for f in t.flows)
        code = lookup.get(key)
        if code is None:
            continue
        frame = EncodedFrame(t.id, code, max(MIN_WIRE_FRAME, len(code)), tuple(t.flows))
        wire.append(frame)
        used.update(t.flows)
        # receiver side: the code alone restores every payload
        for f, v, w in zip(t.flows, reverse[code], widths):
            restored[f] = int(v).to_bytes(w, "big")
    for f in sorted(tt_frames):
        if f in used:
            continue
        p = tt_frames[f]
        wire.append(EncodedFrame(None, p, max(MIN_WIRE_FRAME, len(p)), (f,)))
        restored[f] = p
    return wire, restored


def index_ratio(code_bytes: int, payload_bytes: int) -> Fraction:
    """r_index: code size over the payload it replaces."""
    if payload_bytes <= 0 or code_bytes <= 0:
        raise IndexError_("sizes must be positive")
    return Fraction(code_bytes, payload_bytes)


def shrink_duration_sum(r) -> Fraction:
    """sum over z >= 1 of r**z = r / (1 - r)."""
    r = Fraction(r)
    if not 0 < r < 1:
        raise IndexError_("r must lie in (0, 1)")
    return r / (1 - r)
