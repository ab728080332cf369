"""Credit-based shaper timing: credit extrema, phase durations, A/B credit
geometry, and an event-exact credit trace used as a reference."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

from .minplus import F


class CreditError(ValueError):
    pass


@dataclass(frozen=True)
class CreditParams:
    """Shaper parameters of one AVB class at one port (bits and bits/ns)."""

    cls: str
    idle: Fraction
    send: Fraction
    rate: Fraction
    l_bar: Fraction  # largest interfering lower-priority frame, bits
    l_max: Fraction  # largest own frame, bits

    def __post_init__(self):
        if self.rate <= 0:
            raise CreditError("link rate must be positive")
        if self.idle <= 0:
            raise CreditError("idle slope must be positive")
        if self.send >= 0:
            raise CreditError("send slope must be negative")
        if self.idle - self.send != self.rate:
            raise CreditError("idle slope - send slope must equal the link rate")
        if self.l_bar < 0 or self.l_max < 0:
            raise CreditError("frame sizes must be non-negative")


def make_params(cls: str, idle, rate, l_bar, l_max) -> CreditParams:
    idle, rate = F(idle), F(rate)
    return CreditParams(cls, idle, idle - rate, rate, F(l_bar), F(l_max))


def class_params(rate, idle_a, idle_b, l_a, l_b, l_be) -> tuple[CreditParams, CreditParams]:
    """Parameters for both classes; lower-priority blockers follow strict
    priority (A is blocked by B or BE, B only by BE)."""
    pa = make_params("A", idle_a, rate, max(F(l_b), F(l_be)), l_a)
    pb = make_params("B", idle_b, rate, F(l_be), l_b)
    return pa, pb


# --------------------------------------------------------------------------
# closed forms


def credit_bounds(p: CreditParams, pa: CreditParams | None = None) -> dict:
    """Largest and smallest credit of the class.

    Class B needs the class A parameters because an A burst can hold the link
    while B waits.
    """
    C = p.rate
    if p.cls == "A":
        vmax = p.l_bar / C * p.idle
    else:
        if pa is None:
            raise CreditError("class B bounds need the class A parameters")
        vmax = p.idle * (p.l_bar / C + pa.l_max / C - (pa.l_bar / C) * (pa.idle / pa.send))
    vmin = p.l_max / C * p.send
    return {"V_max": vmax, "V_min": vmin}


def phase_times(p: CreditParams, v_max, v_min) -> dict:
    """Time to accumulate v_max at the idle slope and time to drain from
    v_max to v_min at the send slope (magnitudes)."""
    v_max, v_min = F(v_max), F(v_min)
    if v_max < 0 or v_min > 0:
        raise CreditError("need v_max >= 0 >= v_min")
    return {"dt_plus": v_max / p.idle, "dt_minus": (v_max - v_min) / abs(p.send)}


def idle_time_difference(pa: CreditParams, pb: CreditParams, va_max, vb_max,
                         as_printed: bool = False) -> Fraction:
    """dt(B+) - dt(A+), rewritten with C = I - S.

    The literal closed form carries (C - S_B) in the denominator; the algebra
    of its own preceding line gives I_B = C + S_B. ``as_printed`` keeps the
    literal denominator for comparison.
    """
    va_max, vb_max = F(va_max), F(vb_max)
    C = pa.rate
    num = pa.idle * (vb_max - va_max) - va_max * (pb.send - pa.send)
    den = pa.idle * ((C - pb.send) if as_printed else (C + pb.send))
    return num / den


def send_time_difference(pa: CreditParams, pb: CreditParams, va_max, va_min,
                         vb_max, vb_min) -> Fraction:
    """dt(B-) - dt(A-) with durations signed by the send slope."""
    va_max, va_min, vb_max, vb_min = map(F, (va_max, va_min, vb_max, vb_min))
    sa, sb = pa.send, pb.send
    return (sa * (vb_max - vb_min) - sb * (va_max - va_min)) / (sa * sb)


def send_idle_difference(p: CreditParams, v_max, v_min, as_printed: bool = False) -> Fraction:
    """dt(x-) - dt(x+) with the send duration signed by the send slope.

    For class A the literal closed form adds C*V_max where the derivation
    subtracts it; ``as_printed`` reproduces the literal class A form.
    """
    v_max, v_min = F(v_max), F(v_min)
    C, I = p.rate, p.idle
    if as_printed and p.cls == "A":
        return (I * v_min + C * v_max) / (I * (C - I))
    return (C * v_max - I * v_min) / (I * (I - C))


def signed_phase_times(p: CreditParams, v_max, v_min) -> dict:
    """Phase durations in the signed convention of the difference identities."""
    v_max, v_min = F(v_max), F(v_min)
    return {"dt_plus": v_max / p.idle, "dt_minus": (v_max - v_min) / p.send}


@dataclass(frozen=True)
class Geometry:
    t_same: Fraction
    v_same: Fraction
    t_eq: Fraction
    k: Fraction
    v_mid_b: Fraction


def credit_intersection(pa: CreditParams, pb: CreditParams, t_m, va_m, vb_m,
                        geometric: bool = False) -> tuple[Fraction, Fraction]:
    """Time and value where the A and B credit lines meet.

    Default: both lines rise at their idle slopes from (t_m, V_A) and
    (t_m, V_B), which is the closed form. ``geometric`` instead lets A fall at
    its send slope while B rises, the picture the closed form is drawn from.
    """
    t_m, va_m, vb_m = F(t_m), F(va_m), F(vb_m)
    sa = pa.send if geometric else pa.idle
    sb = pb.idle
    if sa == sb:
        raise CreditError("parallel credit lines never meet")
    t = t_m + (vb_m - va_m) / (sa - sb)
    return t, va_m + sa * (t - t_m)


def zero_crossing(t1, v1, t2, v2) -> tuple[Fraction, Fraction]:
    """Where the segment (t1, v1) -> (t2, v2) crosses zero: (t_eq, k) with
    k = -v1 / v2 the division ratio."""
    t1, v1, t2, v2 = map(F, (t1, v1, t2, v2))
    if not (v1 > 0 > v2 or v1 < 0 < v2):
        raise CreditError("segment does not change sign")
    k = -v1 / v2
    return (t1 + k * t2) / (k + 1), k


def zero_crossing_as_printed(t1, v1, t2, v2) -> Fraction:
    """The literal closed form for the crossing time; it has the opposite
    overall sign of the ratio form and is kept only for comparison."""
    t1, v1, t2, v2 = map(F, (t1, v1, t2, v2))
    return (v2 * t1 - v1 * t2) / (v1 - v2)


def value_at_ratio(v1, v2, t1, t2, t_eq) -> Fraction:
    """Credit of the other class at t_eq on its segment (v1 at t1, v2 at t2)."""
    v1, v2, t1, t2, t_eq = map(F, (v1, v2, t1, t2, t_eq))
    k1 = (t_eq - t1) / (t2 - t_eq)
    return (v1 + k1 * v2) / (k1 + 1)


def credit_geometry(pa: CreditParams, pb: CreditParams, anchors: dict) -> Geometry:
    """Intersection of the class A/B credit lines and the class A zero
    crossing on [t1, t2] with the B credit at that instant.

    anchors: t_m, va_m, vb_m, t1, t2, va_1, va_2, vb_1, vb_2.
    """
    a = {k: F(v) for k, v in anchors.items()}
    t_same, v_same = credit_intersection(pa, pb, a["t_m"], a["va_m"], a["vb_m"])
    t_eq, k = zero_crossing(a["t1"], a["va_1"], a["t2"], a["va_2"])
    v_mid = value_at_ratio(a["vb_1"], a["vb_2"], a["t1"], a["t2"], t_eq)
    return Geometry(t_same, v_same, t_eq, k, v_mid)


def meets_at_midpoint(pa: CreditParams, pb: CreditParams, t_m, va_max, va_min, vb_m) -> bool:
    """Whether the A send line and the B idle line meet exactly halfway
    through A's drain from va_max to va_min."""
    t_m = F(t_m)
    t_next = t_m + (F(va_max) - F(va_min)) / abs(pa.send)
    try:
        t, _ = credit_intersection(pa, pb, t_m, va_max, vb_m, geometric=True)
    except CreditError:
        return False
    return t == (t_m + t_next) / 2


# --------------------------------------------------------------------------
# reference trace


@dataclass(frozen=True)
class CreditEvent:
    time: Fraction
    credit: Fraction
    cause: str  # idle-gain | send-drain | frozen | reset


@dataclass(frozen=True)
class CreditTrace:
    cls: str
    events: tuple[CreditEvent, ...]

    def extrema(self) -> tuple[Fraction, Fraction]:
        vals = [e.credit for e in self.events] or [Fraction(0)]
        return max(vals), min(vals)

    def stretches(self, cause: str) -> list[tuple[Fraction, Fraction]]:
        """(start, end) of every maximal run with the given cause."""
        out = []
        evs = self.events
        for i, e in enumerate(evs):
            if e.cause == cause:
                end = evs[i + 1].time if i + 1 < len(evs) else e.time
                if out and out[-1][1] == e.time:
                    out[-1] = (out[-1][0], end)
                else:
                    out.append((e.time, end))
        return out


def _gate_open(intervals, t) -> bool:
    if intervals is None:
        return True
    return any(s <= t < e for s, e in intervals)


def _gate_changes(intervals):
    if intervals is None:
        return []
    pts = set()
    for s, e in intervals:
        pts.add(F(s))
        pts.add(F(e))
    return sorted(pts)


def credit_trace_oracle(params: dict, gate_open: Sequence | None,
                        arrivals: Iterable, mode: str = "non-preemption",
                        until=None) -> dict:
    """Event-exact credit evolution of the AVB classes at one port.

    params: {"A": CreditParams, "B": CreditParams} (either may be missing).
    gate_open: list of [start, end) intervals when the AVB/BE gates are open,
    or None for always open. arrivals: (time, bits, cls) with cls in
    {"A", "B", "BE"}; arrivals at the same instant are handled in list order
    and the link picks a frame after each one. In preemption mode a frame is
    suspended when its gate closes and resumed when it reopens.

    Returns {cls: CreditTrace}.
    """
    classes = [c for c in ("A", "B") if c in params]
    C = next(iter(params.values())).rate if params else Fraction(1)
    arr = sorted(
        ((F(t), i, F(bits), c) for i, (t, bits, c) in enumerate(arrivals)),
        key=lambda x: (x[0], x[1]),
    )
    gates = [g for g in _gate_changes(gate_open)]
    queues = {c: deque() for c in ("A", "B", "BE")}
    credit = {c: Fraction(0) for c in classes}
    slope = {c: None for c in classes}
    events = {c: [] for c in classes}
    busy = None  # [cls, remaining bits, last start time]
    t = Fraction(0)
    ai = 0
    end_time = F(until) if until is not None else None

    def gate(tt):
        return _gate_open(gate_open, tt)

    def current_slope(c):
        if busy is not None and busy[0] == c:
            return params[c].send, "send-drain"
        if not gate(t):
            return Fraction(0), "frozen"
        if queues[c]:
            return params[c].idle, "idle-gain"
        if credit[c] < 0:
            return params[c].idle, "idle-gain"
        return Fraction(0), "frozen"

    def record(c):
        s, cause = current_slope(c)
        if slope[c] is None or slope[c] != s:
            events[c].append(CreditEvent(t, credit[c], cause))
            slope[c] = s

    def select():
        nonlocal busy
        if busy is not None or not gate(t):
            return
        for c in ("A", "B", "BE"):
            if not queues[c]:
                continue
            if c in credit and credit[c] < 0:
                continue
            busy = [c, queues[c].popleft(), t]
            return

    def settle():
        for c in classes:
            if busy is not None and busy[0] == c:
                continue
            if not queues[c] and credit[c] > 0:
                credit[c] = Fraction(0)
                events[c].append(CreditEvent(t, Fraction(0), "reset"))
                slope[c] = Fraction(0)

    while True:
        cands = []
        if ai < len(arr):
            cands.append(arr[ai][0])
        if busy is not None:
            cands.append(t + busy[1] / C)
        for g in gates:
            if g > t:
                cands.append(g)
                break
        for c in classes:
            s, _ = current_slope(c)
            if s > 0 and credit[c] < 0:
                cands.append(t + (-credit[c]) / s)
        if not cands:
            break
        t_next = min(cands)
        stop = end_time is not None and t_next > end_time
        if stop:
            t_next = end_time
        dt = t_next - t
        for c in classes:
            s, _ = current_slope(c)
            credit[c] += s * dt
        if busy is not None:
            busy[1] -= C * dt
        t = t_next
        if stop:
            break
        if busy is not None and busy[1] == 0:
            busy = None
        if busy is not None and mode == "preemption" and not gate(t):
            # suspend: the remainder waits at the head of its queue
            queues[busy[0]].appendleft(busy[1])
            busy = None
        settle()
        select()
        settle()
        while ai < len(arr) and arr[ai][0] == t:
            _, _, bits, c = arr[ai]
            queues[c].append(bits)
            ai += 1
            select()
            settle()
        for c in classes:
            record(c)
    return {c: CreditTrace(c, tuple(events[c])) for c in classes}


# --------------------------------------------------------------------------
# saturated scenarios


def saturated_arrivals(pa: CreditParams, pb: CreditParams, t0=0) -> list:
    """Arrival pattern that drives both classes to their closed-form extrema.

    Episode 1: a largest BE frame starts; A and B queue behind it. A then
    drains from V_max to exactly 0 with frames no larger than its maximum and
    sends one maximum frame (reaching V_min) while B waits and climbs to its
    maximum. B then drains from V_max to 0 the same way and sends a maximum
    frame. Requires l_bar(A) == l_bar(B) (the BE frame is the largest blocker).
    """
    t0 = F(t0)
    C = pa.rate
    ba = credit_bounds(pa)
    bb = credit_bounds(pb, pa)
    out = [(t0, pb.l_bar, "BE")]
    for bits in _split(ba["V_max"] * C / abs(pa.send), pa.l_max) + [pa.l_max]:
        out.append((t0, bits, "A"))
    for bits in _split(bb["V_max"] * C / abs(pb.send), pb.l_max) + [pb.l_max]:
        out.append((t0, bits, "B"))
    return out


def _split(total: Fraction, cap: Fraction) -> list:
    out = []
    while total > 0:
        b = min(cap, total)
        out.append(b)
        total -= b
    return out
