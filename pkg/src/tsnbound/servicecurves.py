"""Arrival and service curves of TT/CDT and AVB traffic at one output port
under CBS+TAS and CBS+SP, with and without frame preemption, plus the
index-shrink and gate-stretch variants."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from fractions import Fraction

from .credit import CreditParams, credit_bounds
from .minplus import (
    Curve,
    F,
    Staircase,
    add,
    linear_combination,
    make_curve,
    max_raw,
    add_rate,
    pointwise_max,
    pointwise_min,
    running_sup_positive,
    zero,
)
from .model import PortSchedule

TAS, SP = "CBS+TAS", "CBS+SP"
NP, P = "non-preemption", "preemption"


class ServiceCurveError(ValueError):
    pass


@dataclass(frozen=True)
class SchedulerContext:
    """Everything the curve formulas need about one output port.

    Lengths are in ns, sizes in bits. ``tt_windows`` holds (offset, length)
    of every TT window in the hyperperiod; a syn window (plus guard band or
    overhead) precedes each of them.
    """

    rate: Fraction
    hyperperiod: Fraction
    tt_windows: tuple  # ((offset, length), ...)
    credit: dict = field(default_factory=dict)  # cls -> CreditParams
    l_syn: Fraction = Fraction(0)
    l_gb: Fraction = Fraction(0)
    l_oh: Fraction = Fraction(0)
    t_syn: Fraction = Fraction(0)
    r_index: Fraction = Fraction(1)
    z: int = 1
    # largest time a TT frame may run past its window end
    tt_overrun: Fraction = Fraction(0)
    # largest non-preemptable remainder of a lower-priority frame (preemption)
    preempt_residue: Fraction = Fraction(0)
    # largest lower-priority frame time (strict-priority blocking of CDT)
    lower_frame: Fraction = Fraction(0)
    # flow-based refinements: arrival curve of TT (or CDT) departures at the
    # port and, for CBS+SP preemption, a curve counting CDT frames
    tt_traffic: Curve | None = None
    cdt_frames: Curve | None = None
    max_interfering: Fraction = Fraction(0)  # largest AVB/BE frame, ns

    def __post_init__(self):
        if self.r_index <= 0 or self.r_index > 1:
            raise ServiceCurveError("r_index must lie in (0, 1]")
        for _, L in self.tt_windows:
            if L > self.hyperperiod:
                raise ServiceCurveError("TT window longer than the hyperperiod")

    @property
    def l_syn_gb(self) -> Fraction:
        return self.l_syn + self.l_gb

    @property
    def l_syn_oh(self) -> Fraction:
        return self.l_syn + self.l_oh

    @property
    def shrink(self) -> Fraction:
        return self.r_index ** self.z

    def shrunk(self, r_index, z: int = 1) -> "SchedulerContext":
        return replace(self, r_index=F(r_index), z=z)


def context_from_schedule(ps: PortSchedule, credit: dict, **kw) -> SchedulerContext:
    """Build a context from a port GCL: TT windows come from the schedule,
    syn/guard/overhead lengths from the windows of those kinds when present."""
    tt = tuple((w.offset, w.length) for w in ps.windows_of("TT"))
    n = max(1, len(tt))
    syn = sum((w.length for w in ps.windows_of("syn")), Fraction(0)) / n
    gb = sum((w.length for w in ps.windows_of("guard-band")), Fraction(0)) / n
    oh = sum((w.length for w in ps.windows_of("overhead")), Fraction(0)) / n
    args = dict(rate=ps.rate, hyperperiod=ps.hyperperiod, tt_windows=tt, credit=credit,
                l_syn=syn, l_gb=gb, l_oh=oh)
    args.update(kw)
    return SchedulerContext(**args)


# --------------------------------------------------------------------------
# staircases


def _floor_stair(step, period, delay, horizon) -> Curve:
    """step * floor((t - delay) / period), clipped at 0 (left-continuous)."""
    return make_curve(Staircase(step, period, delay + period), horizon)


def _rotation_max(ctx: SchedulerContext, heights, shift, horizon, floor=False,
                  extra_delay=None) -> Curve:
    """max over reference windows i of sum_j h_j * stair(t - o_ji + shift_j).

    o_ji is window j's start relative to window i's start, modulo the
    hyperperiod.
    """
    T = ctx.hyperperiod
    offs = [o for o, _ in ctx.tt_windows]
    if not offs:
        return zero(horizon)
    rots = []
    for i, oi in enumerate(offs):
        parts = []
        for j, oj in enumerate(offs):
            o_ji = (oj - oi) % T
            h = heights[j]
            if h == 0:
                continue
            if floor:
                d = o_ji + (extra_delay[j] if extra_delay else 0)
                parts.append(_floor_stair(h, T, d, horizon))
            else:
                parts.append(make_curve(Staircase(h, T, o_ji - shift), horizon))
        if parts:
            rots.append(parts[0] if len(parts) == 1 else add(*parts))
    if not rots:
        return zero(horizon)
    return rots[0] if len(rots) == 1 else pointwise_max(*rots)


def _tt_lengths(ctx: SchedulerContext) -> list[Fraction]:
    return [ctx.shrink * L for _, L in ctx.tt_windows]


def tt_aggregate_arrival(ctx: SchedulerContext, scheduler: str, mode: str, horizon,
                         with_overrun: bool = False, printed_shift: bool = False) -> Curve:
    """Upper bound on the bits of high-priority (and sync) occupancy.

    CBS+TAS non-preemption: TT plus syn+guard per window, ceiling staircase.
    CBS+TAS preemption: TT only (see ``syn_arrival`` for the syn part).
    CBS+SP: CDT departures (flow based) plus the syn part for
    non-preemption, CDT only (with per-frame overhead) for preemption.
    With shrink, each TT window length is scaled by r_index**z.
    """
    C = ctx.rate
    if scheduler == TAS:
        Ls = _tt_lengths(ctx)
        if with_overrun:
            Ls = [L + ctx.tt_overrun for L in Ls]
        if mode == NP:
            heights = [(L + ctx.l_syn_gb) * C for L in Ls]
            return _rotation_max(ctx, heights, _np_shift(ctx, printed_shift), horizon)
        return _rotation_max(ctx, [L * C for L in Ls], Fraction(0), horizon)
    if scheduler != SP:
        raise ServiceCurveError(f"unknown scheduler {scheduler!r}")
    cdt = ctx.tt_traffic if ctx.tt_traffic is not None else zero(horizon)
    cdt = cdt.truncate(horizon) if cdt.horizon > F(horizon) else cdt
    if mode == NP:
        return add(cdt, _syn_staircase(ctx, ctx.l_syn_gb, horizon))
    if ctx.cdt_frames is not None and ctx.l_oh > 0:
        frames = ctx.cdt_frames.truncate(cdt.horizon)
        return add(cdt, frames.scale(ctx.l_oh * C))
    return cdt


def _syn_staircase(ctx, length, horizon) -> Curve:
    n = max(1, len(ctx.tt_windows))
    return make_curve(Staircase(length * ctx.rate * n, ctx.hyperperiod, 0), horizon)


def syn_arrival(ctx: SchedulerContext, scheduler: str, horizon) -> Curve:
    """Syn window plus preemption overhead, floor staircase delayed by the
    preceding TT window and the syn length."""
    C = ctx.rate
    if scheduler == SP:
        return _syn_staircase(ctx, ctx.l_syn_oh, horizon)
    Ls = _tt_lengths(ctx)
    heights = [ctx.l_syn_oh * C for _ in Ls]
    delays = [L + ctx.l_syn for L in Ls]
    return _rotation_max(ctx, heights, 0, horizon, floor=True, extra_delay=delays)


def _np_shift(ctx, printed: bool) -> Fraction:
    """Step shift of the non-preemption block staircase. The literal
    (L_syn - L_syn+GB) shift delays every block by the guard band, which is only a
    valid bound when V_max / I covers the guard band; the default counts each
    block from 0+."""
    return ctx.l_syn - ctx.l_syn_gb if printed else Fraction(0)


def blocking_arrival(ctx: SchedulerContext, scheduler: str, mode: str, horizon,
                     printed_shift: bool = False) -> Curve:
    """High-priority occupancy seen by AVB.

    The window staircase is capped by the flow-based TT departures plus the
    syn part whenever a TT traffic curve is known.
    """
    base = tt_aggregate_arrival(ctx, scheduler, mode, horizon, printed_shift=printed_shift)
    if scheduler != TAS or ctx.tt_traffic is None:
        return base
    H = min(F(horizon), ctx.tt_traffic.horizon)
    if ctx.tt_overrun > 0:
        base = tt_aggregate_arrival(ctx, scheduler, mode, horizon, with_overrun=True,
                                    printed_shift=printed_shift)
    tt = ctx.tt_traffic.truncate(H)
    if mode == NP:
        flow = add(tt, _rotation_max(ctx, [ctx.l_syn_gb * ctx.rate] * len(ctx.tt_windows),
                                     _np_shift(ctx, printed_shift), H))
    else:
        flow = tt
    return pointwise_min(base.truncate(H), flow)


# --------------------------------------------------------------------------
# TT / CDT service


def tt_service_curve(ctx: SchedulerContext, scheduler: str, mode: str, horizon,
                     form: str = "tdma") -> Curve:
    """Lower service curve of TT (CBS+TAS) or CDT (CBS+SP) traffic.

    CBS+TAS forms, with k = floor((t - t_syn) / T) and L the summed TT window:
      tdma        worst phasing of the individual TT windows: C times the
                  least open time over (t_syn, t] across window-end phases
                  (default)
      min         C * min(k L, [t - k (T - L)]+)
      as_printed  the same with max (closure applied; not a valid lower bound)
    Preemption adds the largest non-preemptable remainder to the latency.
    CBS+SP: C*t minus lower-priority blocking and the syn staircase.
    """
    H = F(horizon)
    C = ctx.rate
    lat = ctx.t_syn + (ctx.preempt_residue if mode == P else 0)
    if scheduler == SP:
        blk = ctx.lower_frame if mode == NP else ctx.preempt_residue
        syn = _syn_staircase(ctx, ctx.l_syn_gb if mode == NP else ctx.l_syn_oh, H)
        raw = add_rate(linear_combination([syn], [-1], -C * blk, H), C)
        return running_sup_positive(raw)
    if scheduler != TAS:
        raise ServiceCurveError(f"unknown scheduler {scheduler!r}")
    if not ctx.tt_windows:
        return zero(H)
    T = ctx.hyperperiod
    Ls = _tt_lengths(ctx)
    if form == "tdma":
        ends = [(o + L) % T for (o, _), L in zip(ctx.tt_windows, Ls)]
        curves = [_open_time(ctx, Ls, e, lat, H) for e in ends]
        opened = curves[0] if len(curves) == 1 else pointwise_min(*curves)
        return opened.scale(C)
    L = sum(Ls, Fraction(0))
    if L > T:
        raise ServiceCurveError("L_TT exceeds the hyperperiod")
    pieces = [(Fraction(0), Fraction(0), Fraction(0))]
    k = 0
    t = lat
    while t < H:
        if form == "min":
            # on (lat + kT, lat + (k+1)T] the linear term exceeds k L
            pieces.append((t, C * k * L, Fraction(0)))
        elif form == "as_printed":
            pieces.append((t, C * max(k * L, t - k * (T - L)), C))
        else:
            raise ServiceCurveError(f"unknown TT service form {form!r}")
        k += 1
        t = lat + k * T
    return running_sup_positive(Curve(0, pieces, H, check=False))


def _open_time(ctx, Ls, phase, lat, H) -> Curve:
    """Open time of the TT gates in [phase, phase + t - lat) as a function of t."""
    T = ctx.hyperperiod
    spans = sorted(((o - phase) % T, L) for (o, _), L in zip(ctx.tt_windows, Ls))
    pieces = [(Fraction(0), Fraction(0), Fraction(0))]
    acc = Fraction(0)
    base = lat
    while base < H:
        for s, L in spans:
            if base + s >= H:
                break
            pieces.append((base + s, acc, Fraction(1)))
            acc += L
            if base + s + L < H:
                pieces.append((base + s + L, acc, Fraction(0)))
        base += T
    return Curve(0, pieces, H)


# --------------------------------------------------------------------------
# AVB service


def _vmax(ctx: SchedulerContext, cls: str) -> Fraction:
    try:
        p: CreditParams = ctx.credit[cls]
    except KeyError:
        raise ServiceCurveError(f"missing credit parameters for class {cls}") from None
    pa = ctx.credit.get("A")
    return credit_bounds(p, pa)["V_max"]


def avb_bracket(ctx: SchedulerContext, cls: str, scheduler: str, mode: str, horizon,
                form: str = "as_printed") -> Curve:
    """The raw bracket before the positive part and closure, in bits.

    np: I*t - I*a_block/C - V_max, with the block staircase counted from 0+
    (``safe``) or delayed by the guard band (``as_printed``)
    p, as_printed: I*t - I*a_TT/C - a_syn - V_max
    p, refined: I*t - I*a_TT/C - n(t) * (I*L_syn+OH + C*L_OH) - V_max, where
    n(t) counts syn+overhead blocks with a ceiling from 0+. Credit is frozen
    through syn and overhead, and each resumed fragment costs L_OH at line
    rate.
    """
    H = F(horizon)
    C = ctx.rate
    if cls not in ctx.credit:
        raise ServiceCurveError(f"missing credit parameters for class {cls}")
    I = ctx.credit[cls].idle
    vmax = _vmax(ctx, cls)
    if scheduler == TAS and not ctx.tt_windows:
        raise ServiceCurveError("CBS+TAS needs TT windows")
    blk = blocking_arrival(ctx, scheduler, mode, H, printed_shift=(form == "as_printed"))
    if mode == NP:
        if form not in ("safe", "as_printed"):
            raise ServiceCurveError(f"unknown bracket form {form!r}")
        raw = linear_combination([blk], [-I / C], -vmax, blk.horizon)
    elif form == "as_printed":
        syn = syn_arrival(ctx, scheduler, blk.horizon)
        raw = linear_combination([blk, syn], [-I / C, -1], -vmax, blk.horizon)
    elif form == "refined":
        per = I * ctx.l_syn_oh + C * ctx.l_oh
        if scheduler == TAS:
            n = _rotation_max(ctx, [per] * len(ctx.tt_windows), 0, blk.horizon)
        else:
            n = make_curve(Staircase(per * max(1, len(ctx.tt_windows)), ctx.hyperperiod, 0),
                           blk.horizon)
        raw = linear_combination([blk, n], [-I / C, -1], -vmax, blk.horizon)
    else:
        raise ServiceCurveError(f"unknown bracket form {form!r}")
    return add_rate(raw, I)


def avb_service_curve(ctx: SchedulerContext, cls: str, scheduler: str, mode: str, horizon,
                      form: str = "best") -> Curve:
    """Lower service curve of AVB class ``cls``: positive part and
    non-decreasing closure of the bracket.

    With preemption, ``best`` takes the pointwise max of the literal and the
    refined bracket (both are lower service curves); ``as_printed`` and
    ``refined`` select one of them. Without preemption ``best`` is the
    ``safe`` bracket.
    """
    if mode == P and form == "best":
        a = avb_bracket(ctx, cls, scheduler, mode, horizon, "as_printed")
        b = avb_bracket(ctx, cls, scheduler, mode, horizon, "refined")
        return running_sup_positive(max_raw(a, b))
    f = ("safe" if mode == NP else "as_printed") if form == "best" else form
    return running_sup_positive(avb_bracket(ctx, cls, scheduler, mode, horizon, f))


def avb_service_curve_amplified(ctx: SchedulerContext, cls: str, scheduler: str, mode: str,
                                horizon) -> Curve:
    """Shrink variant: the bracket with shrunk TT windows, scaled by 1/r_index."""
    if ctx.r_index > 1:
        raise ServiceCurveError("amplification needs r_index <= 1")
    base = avb_service_curve(ctx, cls, scheduler, mode, horizon)
    if ctx.r_index == 1:
        return base
    return base.scale(1 / ctx.r_index)


def gcl_scaled_service(ctx: SchedulerContext, eta, cls: str, horizon,
                       blocking: bool = False, eta_floor=Fraction(0)) -> Curve:
    """Service of AVB class ``cls`` with TT windows stretched by eta.

    Without ``blocking``: I*[t - a_TT/C - V_max/I]+ where a_TT uses window
    length eta*L_TT and no guard band. With ``blocking`` the largest
    interfering frame time l_bar is subtracted as well.
    """
    eta = F(eta)
    if eta < eta_floor or eta <= 0:
        raise ServiceCurveError("eta below the feasibility floor")
    H = F(horizon)
    C = ctx.rate
    I = ctx.credit[cls].idle
    vmax = _vmax(ctx, cls)
    heights = [eta * L * C for L in _tt_lengths(ctx)]
    tt = _rotation_max(ctx, heights, 0, H)
    const = -vmax
    if blocking:
        const -= I * ctx.credit[cls].l_bar / C
    raw = add_rate(linear_combination([tt], [-I / C], const, H), I)
    return running_sup_positive(raw)
