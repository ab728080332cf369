"""Gate schedule synthesis: pairwise non-overlap test for periodic gates,
a stretch-maximizing placement search, and an exhaustive overlap check."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

from .minplus import F

DEFAULT_STEP = Fraction(1000)  # 1 µs in ns
MAX_VERIFY_INTERVALS = 2_000_000


class GclError(ValueError):
    pass


class GclInfeasible(GclError):
    """No placement works even for an arbitrarily small stretch."""

    def __init__(self, pair):
        self.pair = pair
        super().__init__(f"gates {pair[0]} and {pair[1]} cannot be separated")


@dataclass(frozen=True)
class GateSpec:
    id: str
    period: Fraction
    length: Fraction
    domain: tuple = ()  # ((lo, hi), ...) half-open start intervals; empty = [0, period)

    def __post_init__(self):
        object.__setattr__(self, "period", F(self.period))
        object.__setattr__(self, "length", F(self.length))
        if not 0 < self.length <= self.period:
            raise GclError(f"gate {self.id}: need 0 < L <= T")
        dom = tuple((F(a), F(b)) for a, b in self.domain) or ((Fraction(0), self.period),)
        for a, b in dom:
            if not 0 <= a < b <= self.period:
                raise GclError(f"gate {self.id}: start domain must lie in [0, T)")
        object.__setattr__(self, "domain", dom)

    @property
    def full_domain(self) -> bool:
        return self.domain == ((Fraction(0), self.period),)

    def grid(self, step) -> list[Fraction]:
        pts = []
        for a, b in self.domain:
            t = math.ceil(a / step) * step
            while t < b:
                pts.append(Fraction(t))
                t += step
        return sorted(set(pts))


@dataclass(frozen=True)
class GateSchedule:
    starts: dict  # gate id -> start
    eta: Fraction
    quotients: dict = field(default_factory=dict)  # (i, j) -> floor((t_j - t_i) / g)
    big_z: Fraction = Fraction(0)
    nominal_feasible: bool = True  # eta >= 1


def fgcd(a, b) -> Fraction:
    """gcd of two positive rationals."""
    a, b = F(a), F(b)
    den = a.denominator * b.denominator // math.gcd(a.denominator, b.denominator)
    return Fraction(math.gcd(int(a * den), int(b * den)), den)


def flcm(a, b) -> Fraction:
    a, b = F(a), F(b)
    return a * b / fgcd(a, b)


def check_nonoverlap(gi: GateSpec, ti, gj: GateSpec, tj, eta=1) -> bool:
    """L_i <= (t_j - t_i) mod g <= g - L_j with g = gcd(T_i, T_j), lengths
    scaled by eta. Symmetric in (i, j)."""
    eta = F(eta)
    g = fgcd(gi.period, gj.period)
    d = (F(tj) - F(ti)) % g
    return eta * gi.length <= d <= g - eta * gj.length


def pair_limit(gi: GateSpec, ti, gj: GateSpec, tj) -> Fraction:
    """Largest eta for which the pair at these starts does not overlap."""
    g = fgcd(gi.period, gj.period)
    d = (F(tj) - F(ti)) % g
    return min(d / gi.length, (g - d) / gj.length)


def achieved_eta(gates, starts, eta_max) -> Fraction:
    eta = F(eta_max)
    for g in gates:
        eta = min(eta, g.period / g.length)
    for i in range(len(gates)):
        for j in range(i + 1, len(gates)):
            eta = min(eta, pair_limit(gates[i], starts[i], gates[j], starts[j]))
    return eta


def _candidates(gates, grids, eta_max, step=None) -> list[Fraction]:
    """Every value achieved_eta can take on the grid, ascending."""
    eta_max = F(eta_max)
    vals = {eta_max}
    vals.update(g.period / g.length for g in gates)
    for i in range(len(gates)):
        for j in range(i + 1, len(gates)):
            gi, gj = gates[i], gates[j]
            g = fgcd(gi.period, gj.period)
            if step is not None and gi.full_domain and gj.full_domain and (g / step).denominator == 1:
                # values above eta_max are dropped, so only small differences matter
                n = int(g / step)
                hi_i = min(n - 1, math.floor(eta_max * gi.length / step))
                lo_j = max(0, math.ceil((g - eta_max * gj.length) / step))
                for k in range(hi_i + 1):
                    vals.add(k * step / gi.length)
                for k in range(lo_j, n):
                    vals.add((g - k * step) / gj.length)
                continue
            ga = grids[i] if grids[i] is not None else gi.grid(step)
            gb = grids[j] if grids[j] is not None else gj.grid(step)
            ds = {(b - a) % g for a in ga for b in gb}
            for d in ds:
                vals.add(d / gi.length)
                vals.add((g - d) / gj.length)
    return sorted(v for v in vals if 0 < v <= eta_max)


class SearchBudgetExceeded(GclError):
    pass


def _domain_mask(g: GateSpec, step) -> int:
    """Bit x set iff x * step is a start the gate's domain allows."""
    m = 0
    for a, b in g.domain:
        lo, hi = math.ceil(a / step), math.ceil(b / step)
        if hi > lo:
            m |= ((1 << (hi - lo)) - 1) << lo
    return m


def _search(gates, grids, eta, pin_first, step, budget=None):
    """Lexicographically smallest grid placement feasible at stretch eta.

    Starts are handled as integer grid indices; for each pair the allowed
    start differences form one residue interval modulo the gcd, and the
    candidate starts of the next gate are the AND of those interval masks.
    """
    n = len(gates)
    P = [int(g.period / step) for g in gates]
    dom = [_domain_mask(g, step) for g in gates]
    # pattern[i][k]: bit x set iff x mod g lies in [lo, hi], for x < P_k + g
    pattern = {}
    for i in range(n):
        for k in range(i + 1, n):
            g = math.gcd(P[i], P[k])
            lo = math.ceil(eta * gates[i].length / step)
            hi = math.floor((g * step - eta * gates[k].length) / step)
            if lo > hi:
                return None
            unit = ((1 << (hi - lo + 1)) - 1) << lo
            pat = 0
            for base in range(0, P[k] + g, g):
                pat |= unit << base
            pattern[(i, k)] = (g, pat)
    starts = [0] * n
    nodes = [0]

    def dfs(k):
        if k == n:
            return True
        nodes[0] += 1
        if budget is not None and nodes[0] > budget:
            raise SearchBudgetExceeded("placement search budget exhausted")
        mask = dom[k]
        if k == 0 and pin_first:
            mask &= mask & -mask
        for i in range(k):
            g, pat = pattern[(i, k)]
            mask &= pat >> (g - starts[i] % g)
            if not mask:
                return False
        while mask:
            low = mask & -mask
            starts[k] = low.bit_length() - 1
            if dfs(k + 1):
                return True
            mask ^= low
        return False

    if not dfs(0):
        return None
    return [Fraction(x) * step for x in starts]


def synthesize(gates: list[GateSpec], step=DEFAULT_STEP, eta_max=Fraction(4)) -> GateSchedule:
    """Place gates so that every pair stays disjoint with lengths scaled by
    the largest possible eta (bisection over the finite set of values eta
    can take on the start grid)."""
    if not gates:
        return GateSchedule({}, F(eta_max))
    if len(gates) > 16:
        raise GclError("at most 16 gates")
    ids = [g.id for g in gates]
    if len(set(ids)) != len(ids):
        raise GclError("duplicate gate id")
    step = F(step)
    for g in gates:
        if (g.period / step).denominator != 1:
            raise GclError(f"gate {g.id}: period is not a multiple of the grid step")
    for g in gates:
        if not _domain_mask(g, step):
            raise GclError(f"gate {g.id}: empty start domain on the grid")
    grids = [None if g.full_domain else g.grid(step) for g in gates]
    # relative phases only matter when the first gate may start anywhere
    pin_first = gates[0].full_domain
    cands = _candidates(gates, grids, eta_max, step)
    if not cands or _search(gates, grids, cands[0], pin_first, step) is None:
        raise GclInfeasible(_blocking_pair(gates, grids, step))
    lo, hi = 0, len(cands) - 1
    best = _search(gates, grids, cands[0], pin_first, step)
    while lo < hi:
        mid = (lo + hi + 1) // 2
        sol = _search(gates, grids, cands[mid], pin_first, step)
        if sol is None:
            hi = mid - 1
        else:
            lo, best = mid, sol
    eta = achieved_eta(gates, best, eta_max)
    return _schedule(gates, best, eta)


def feasible_schedule(gates: list[GateSpec], eta=1, step=DEFAULT_STEP, budget=None):
    """A placement that keeps every pair disjoint at the given stretch, or
    None. Gates are searched longest first; ``budget`` caps the number of
    search nodes (SearchBudgetExceeded when hit)."""
    if not gates:
        return GateSchedule({}, F(eta))
    step = F(step)
    order = sorted(gates, key=lambda g: (-g.length, g.id))
    for g in order:
        if (g.period / step).denominator != 1:
            raise GclError(f"gate {g.id}: period is not a multiple of the grid step")
    sol = _search(order, None, F(eta), order[0].full_domain, step, budget)
    if sol is None:
        return None
    return _schedule(order, sol, achieved_eta(order, sol, F(eta)))


def _schedule(gates, starts, eta) -> GateSchedule:
    quot = {}
    for i in range(len(gates)):
        for j in range(i + 1, len(gates)):
            g = fgcd(gates[i].period, gates[j].period)
            quot[(gates[i].id, gates[j].id)] = math.floor((starts[j] - starts[i]) / g)
    big_z = sum(g.period for g in gates) + sum(g.length for g in gates)
    return GateSchedule({g.id: t for g, t in zip(gates, starts)}, eta, quot, big_z, eta >= 1)


def _blocking_pair(gates, grids, step):
    """First pair that cannot be placed apart at any positive stretch."""
    for i in range(len(gates)):
        for j in range(i + 1, len(gates)):
            sub, sg = [gates[i], gates[j]], [grids[i], grids[j]]
            cands = _candidates(sub, sg, Fraction(10**9), step)
            if not cands or _search(sub, sg, cands[0], False, step) is None:
                return (gates[i].id, gates[j].id)
    return (gates[0].id, gates[-1].id)


@dataclass(frozen=True)
class Overlap:
    gate_a: str
    gate_b: str
    start: Fraction
    end: Fraction


def verify_schedule(schedule: GateSchedule, gates: list[GateSpec], eta=None) -> list[Overlap]:
    """Every overlap of open intervals over one lcm of the periods, with
    lengths scaled by eta (the schedule's eta by default), sorted by start."""
    eta = schedule.eta if eta is None else F(eta)
    if not gates:
        return []
    H = gates[0].period
    for g in gates[1:]:
        H = flcm(H, g.period)
    total = sum(H / g.period for g in gates)
    if total > MAX_VERIFY_INTERVALS:
        raise GclError("lcm of the periods is too large; use a coarser time base")
    ivs = []
    for g in gates:
        t0 = F(schedule.starts[g.id])
        L = eta * g.length
        k = 0
        while k * g.period < H:
            s = t0 + k * g.period
            ivs.append((s, s + L, g.id))
            k += 1
    # copies running past H wrap around to the start of the lcm period
    ivs += [(s - H, e - H, gid) for s, e, gid in ivs if e > H]
    ivs.sort()
    out = set()
    active: list = []
    for s, e, gid in ivs:
        active = [a for a in active if a[1] > s]
        for a_s, a_e, a_id in active:
            lo, hi = s, min(e, a_e)
            if lo < hi:
                lo_w = lo % H
                out.add(Overlap(*sorted((a_id, gid)), lo_w, lo_w + (hi - lo)))
        active.append((s, e, gid))
    return sorted(out, key=lambda o: (o.start, o.gate_a, o.gate_b))
