"""End-to-end delay bounds: per-port horizontal deviations chained along
each route, with per-flow arrival curves propagated hop by hop."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace
from fractions import Fraction

import networkx as nx

from .credit import class_params
from .minplus import (
    Curve,
    HorizonError,
    LeakyBucket,
    add,
    horizontal_deviation,
    make_curve,
    zero,
)
from .model import MIN_FRAME, Config, ConfigError, FlowSpec, PortSchedule, Window, port_id, us
from .servicecurves import (
    NP,
    P,
    SP,
    TAS,
    avb_service_curve,
    avb_service_curve_amplified,
    context_from_schedule,
    tt_service_curve,
)

EXPRESS = ("TT", "CDT")
AVB = ("A", "B")
DEFAULT_HORIZON = us(20000)


class AnalysisError(ValueError):
    pass


@dataclass(frozen=True)
class HopTerm:
    port: str
    t_queue: int
    d_h: int
    l_c: int

    @property
    def total(self) -> int:
        return self.t_queue + self.d_h + self.l_c


@dataclass
class FlowBound:
    flow: str
    cls: str
    dst: str
    hops: list

    @property
    def bound(self) -> int:
        return sum(h.total for h in self.hops)


@dataclass
class AnalysisResult:
    scheduler: str
    mode: str
    r_index: Fraction
    strict: bool
    bounds: list  # FlowBound, sorted by (flow, dst)
    port_delay: dict  # (port, cls) -> exact d^h in ns
    curves: dict = field(default_factory=dict)  # (port, cls) -> (alpha, beta)

    def bound(self, flow, dst=None) -> int:
        for b in self.bounds:
            if b.flow == flow and (dst is None or b.dst == dst):
                return b.bound
        raise KeyError(flow)

    def by_class(self, *classes) -> list:
        return [b for b in self.bounds if b.cls in classes]

    @property
    def tag(self) -> str:
        s = f"{self.scheduler}/{self.mode}"
        if self.r_index != 1:
            s += f"/shrink={self.r_index}"
        return s


def per_port_delay(alpha: Curve, beta: Curve, port: str = "") -> Fraction:
    """d^h: the horizontal deviation of the class aggregate through the
    class service curve."""
    try:
        return horizontal_deviation(alpha, beta)
    except HorizonError as e:
        raise HorizonError(f"port {port}: {e}") from None


def e2e_bound(flow: FlowSpec, path, port_delay: dict, rates: dict, preamble: int = 0,
              strict: bool = False, max_frame: dict | None = None) -> FlowBound:
    """Sum over the hops of T_queue + d^h + L/C, each rounded up to whole ns."""
    hops = []
    bits = (flow.size_bytes + preamble) * 8
    for a, b in zip(path, path[1:]):
        p = port_id(a, b)
        key = (p, flow.cls)
        if key not in port_delay:
            raise AnalysisError(f"flow {flow.id}: hop {p} was not analyzed")
        tq = math.ceil(max_frame[p] / rates[p]) if strict and max_frame else 0
        hops.append(HopTerm(p, tq, math.ceil(port_delay[key]), math.ceil(bits / rates[p])))
    return FlowBound(flow.id, flow.cls, path[-1], hops)


def shrink_config(cfg: Config, r_index) -> Config:
    """TT/CDT frames scaled by r_index (rounded up, at least the minimum
    frame)."""
    r = Fraction(r_index)
    flows = tuple(
        replace(f, size_bytes=max(MIN_FRAME, math.ceil(f.size_bytes * r)))
        if f.cls in EXPRESS else f for f in cfg.flows)
    return cfg.replace(flows=flows)


def retarget(cfg: Config, scheduler: str | None = None, mode: str | None = None,
             resume_overhead: int = 24) -> Config:
    """Switch every schedule to another scheduler/mode.

    Going to preemption swaps each guard band for an overhead window of one
    resume overhead placed right before the syn window; going back swaps it
    for a guard band sized to the largest lower-priority frame at the port.
    Going to CBS+SP drops the TT windows; CBS+SP to CBS+TAS is refused.
    """
    pre = cfg.options.preamble_bytes
    scheds = {}
    for pid, ps in cfg.schedules.items():
        sch, md = scheduler or ps.scheduler, mode or ps.mode
        if sch == TAS and ps.scheduler == SP and not ps.windows_of("TT"):
            raise AnalysisError(f"port {pid}: CBS+SP schedule has no TT windows to reuse")
        wins = [w for w in ps.windows if not (sch == SP and w.kind == "TT")]
        if md != ps.mode:
            syns = [w for w in wins if w.kind == "syn"]
            wins = [w for w in wins if w.kind not in ("guard-band", "overhead")]
            if md == P:
                L = Fraction(resume_overhead * 8) / ps.rate
                kind = "overhead"
            else:
                big = max((f.size_bytes for f in cfg.flows
                           if f.cls not in EXPRESS and pid in f.ports()), default=0)
                L = Fraction((big + pre) * 8) / ps.rate
                kind = "guard-band"
            for s in syns:
                wins.append(Window(kind, (s.offset - L) % ps.hyperperiod, L))
            wins.sort(key=lambda w: w.offset)
        scheds[pid] = replace(ps, scheduler=sch, mode=md, windows=tuple(wins))
    return cfg.replace(schedules=scheds)


def _port_order(cfg: Config) -> list[str]:
    g = nx.DiGraph()
    for f in cfg.flows:
        for path in f.route:
            ports = [port_id(a, b) for a, b in zip(path, path[1:])]
            g.add_nodes_from(ports)
            g.add_edges_from(zip(ports, ports[1:]))
    try:
        return list(nx.lexicographical_topological_sort(g))
    except nx.NetworkXUnfeasible:
        raise AnalysisError("port dependency graph has a cycle") from None


def _lb(b, r, H) -> Curve:
    return make_curve(LeakyBucket(b, r), H)


def _sum(curves, H) -> Curve:
    if not curves:
        return zero(H)
    return curves[0] if len(curves) == 1 else add(*curves)


def _residue_bits(lower_bytes: list, min_fragment: int, overhead: int) -> Fraction:
    """Largest part of a preemptable frame that cannot be cut: frames
    shorter than two minimum fragments run to the end, longer ones wait at
    most one minimum fragment. Resumed fragments carry the overhead."""
    if not lower_bytes:
        return Fraction(0)
    sizes = set(lower_bytes) | {s - min_fragment + overhead for s in lower_bytes
                                if s >= 2 * min_fragment}
    worst = max(s if s < 2 * min_fragment else min_fragment for s in sizes)
    return Fraction(worst * 8)


def analyze(cfg: Config, scheduler: str | None = None, mode: str | None = None,
            r_index=None, strict: bool = False, horizon=None, keep_curves: bool = False,
            min_fragment: int = 64, resume_overhead: int = 24,
            propagation: str = "output") -> AnalysisResult:
    """Bounds for every flow and destination.

    Ports are visited in dependency order. At each port the TT/CDT class is
    analyzed first; its departures (arrival curves shifted by the TT delay)
    feed the AVB blocking term. A flow's arrival curve at the next hop is
    its curve here shifted left by the class delay at this port.
    With ``r_index`` below 1, AVB classes use the amplified service curves
    and TT frames are taken as given in the config (see shrink_config).
    ``propagation="source"`` uses every flow's source curve at all hops
    instead of the propagated output bound (not a safe bound; for comparison).
    """
    if propagation not in ("output", "source"):
        raise AnalysisError(f"unknown propagation {propagation!r}")
    if scheduler or mode:
        cfg = retarget(cfg, scheduler, mode, resume_overhead)
    r = Fraction(1) if r_index is None else Fraction(r_index)
    if not 0 < r <= 1:
        raise AnalysisError("r_index must lie in (0, 1]")
    H = Fraction(horizon) if horizon is not None else (
        us(cfg.options.horizon_us) if cfg.options.horizon_us else DEFAULT_HORIZON)
    pre = cfg.options.preamble_bytes
    flows = sorted(cfg.flows, key=lambda f: f.id)
    # per flow: accumulated delay before the current port (jitter term)
    acc: dict = {}
    port_delay: dict = {}
    curves: dict = {}
    rates = {}
    max_frame = {}
    scheds = {ps.scheduler for ps in cfg.schedules.values()} or {SP}
    modes = {ps.mode for ps in cfg.schedules.values()} or {NP}
    for pid in _port_order(cfg):
        a, b = pid.split("->")
        C = cfg.network.link(a, b).rate
        rates[pid] = C
        ps: PortSchedule | None = cfg.schedules.get(pid)
        if ps is None:
            raise AnalysisError(f"port {pid} has no schedule")
        here = [f for f in flows if pid in f.ports()]
        wire = {f.id: Fraction((f.size_bytes + pre) * 8) for f in here}
        max_frame[pid] = max(wire.values(), default=Fraction(0))

        def arrival(f):
            rate = wire[f.id] / f.period
            return wire[f.id] + rate * acc.get((f.id, pid), 0), rate

        lower = [f for f in here if f.cls not in EXPRESS]
        lower_bits = max((wire[f.id] for f in lower), default=Fraction(0))
        residue = _residue_bits([f.size_bytes + pre for f in lower], min_fragment,
                                resume_overhead) / C if ps.mode == P else Fraction(0)
        express = [f for f in here if f.cls in EXPRESS]
        tt_bits = max((wire[f.id] for f in express), default=Fraction(0))
        base = dict(t_syn=Fraction(0), lower_frame=lower_bits / C, preempt_residue=residue,
                    tt_overrun=tt_bits / C, max_interfering=lower_bits / C)
        if ps.scheduler == TAS and express and not ps.windows_of("TT"):
            raise AnalysisError(f"port {pid}: TT traffic but no TT window")
        tt_delay = Fraction(0)
        if express:
            ctx = context_from_schedule(ps, {}, **base)
            beta = tt_service_curve(ctx, ps.scheduler, ps.mode, H)
            alpha = _sum([_lb(*arrival(f), H) for f in express], H)
            tt_delay = per_port_delay(alpha, beta, pid)
            for cls in EXPRESS:
                if any(f.cls == cls for f in express):
                    port_delay[(pid, cls)] = tt_delay
                    if keep_curves:
                        curves[(pid, cls)] = (alpha, beta)
        # departures of the express class bound what blocks AVB
        tt_out = [_lb(wire[f.id] + wire[f.id] / f.period * (acc.get((f.id, pid), 0) + tt_delay),
                      wire[f.id] / f.period, H) for f in express]
        frames_out = [_lb(1 + (acc.get((f.id, pid), 0) + tt_delay) / f.period,
                          Fraction(1) / f.period, H) for f in express]
        avb_here = [f for f in here if f.cls in AVB]
        if avb_here:
            sizes = {c: max((wire[f.id] for f in here if f.cls == c), default=Fraction(0))
                     for c in ("A", "B", "BE")}
            pa, pb = class_params(C, ps.idle_a, ps.idle_b, sizes["A"], sizes["B"], sizes["BE"])
            credit = {"A": pa, "B": pb}
            ctx = context_from_schedule(
                ps, credit, tt_traffic=_sum(tt_out, H) if express else None,
                cdt_frames=_sum(frames_out, H) if express else None, **base)
            for cls in AVB:
                members = [f for f in avb_here if f.cls == cls]
                if not members:
                    continue
                if r < 1:
                    beta = avb_service_curve_amplified(ctx.shrunk(r), cls, ps.scheduler,
                                                       ps.mode, H)
                else:
                    beta = avb_service_curve(ctx, cls, ps.scheduler, ps.mode, H)
                alpha = _sum([_lb(*arrival(f), H) for f in members], H)
                port_delay[(pid, cls)] = per_port_delay(alpha, beta, pid)
                if keep_curves:
                    curves[(pid, cls)] = (alpha, beta)
        for f in here:
            if f.cls == "BE":
                continue
            key = (pid, f.cls)
            if key not in port_delay:
                raise AnalysisError(f"port {pid}: class {f.cls} is not analyzed")
            for path in f.route:
                for x, y in zip(path, path[1:]):
                    if port_id(x, y) == pid:
                        idx = path.index(x)
                        if idx + 2 < len(path) and propagation == "output":
                            nxt = port_id(path[idx + 1], path[idx + 2])
                            acc[(f.id, nxt)] = acc.get((f.id, pid), 0) + port_delay[key]
    bounds = []
    for f in flows:
        if f.cls == "BE":
            continue  # best effort carries no guarantee
        for path in f.route:
            bounds.append(e2e_bound(f, path, port_delay, rates, pre, strict, max_frame))
    bounds.sort(key=lambda x: (x.flow, x.dst))
    return AnalysisResult(
        "/".join(sorted(scheds)), "/".join(sorted(modes)), r, strict, bounds, port_delay, curves)


# --------------------------------------------------------------------------
# reports


def report_csv(result: AnalysisResult, sim=None) -> str:
    """DelayReport CSV; simulated columns are filled when a measured report
    is given."""
    from .simulator import REPORT_HEADER, _fmt

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REPORT_HEADER)
    for b in result.bounds:
        row = None
        if sim is not None:
            try:
                row = sim.row(b.flow, b.dst)
            except KeyError:
                row = None
        vals = (row.min_ns, row.mean_ns, row.max_ns, row.jitter_ns) if row else (None,) * 4
        w.writerow((b.flow, b.dst, *(_fmt(v) for v in vals), b.bound))
    return buf.getvalue()


def hops_csv(result: AnalysisResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("flow", "dst", "hop", "port", "t_queue_ns", "d_h_ns", "l_c_ns", "bound_ns",
                "tag"))
    for b in result.bounds:
        for i, h in enumerate(b.hops):
            w.writerow((b.flow, b.dst, i + 1, h.port, h.t_queue, h.d_h, h.l_c, b.bound,
                        result.tag))
    return buf.getvalue()


def curves_csv(result: AnalysisResult, samples: int = 200) -> str:
    """Sampled alpha/beta of every analyzed (port, class) for plotting."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("port", "class", "t_ns", "alpha_bits", "beta_bits"))
    for (pid, cls) in sorted(result.curves):
        alpha, beta = result.curves[(pid, cls)]
        H = min(alpha.horizon, beta.horizon)
        span = min(H, 4 * max(result.port_delay[(pid, cls)], Fraction(1)))
        for i in range(samples + 1):
            t = span * i / samples
            w.writerow((pid, cls, f"{float(t):.3f}", f"{float(alpha(t)):.3f}",
                        f"{float(beta(t)):.3f}"))
    return buf.getvalue()


def compare(result: AnalysisResult, sim_report) -> list[tuple]:
    """(flow, dst, sim max ns, bound ns, verdict) per flow and destination."""
    out = []
    for b in result.bounds:
        try:
            row = sim_report.row(b.flow, b.dst)
        except KeyError:
            row = None
        if row is None or row.max_ns is None:
            out.append((b.flow, b.dst, None, b.bound, "NO-DATA"))
        else:
            out.append((b.flow, b.dst, row.max_ns, b.bound,
                        "PASS" if row.max_ns <= b.bound else "FAIL"))
    return out
