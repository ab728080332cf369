"""Min-plus calculus on finite-horizon piecewise-linear curves.

A curve is left-continuous. It is stored as a value at t = 0 plus a list of
pieces ``(start, value, slope)``. On ``(start, next_start]`` the curve equals
``value + slope * (t - start)``, so ``value`` is the right limit at ``start``.
All arithmetic uses :class:`fractions.Fraction`, so breakpoints and crossing
points are exact.
"""

from __future__ import annotations

from bisect import bisect_left, bisect_right
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

# Stand-in for +infinity in pure-delay and infinite-rate servers.
INF_BITS = Fraction(2**62)


class CurveError(ValueError):
    """Invalid curve construction or mismatched horizons."""


class HorizonError(CurveError):
    """The requested quantity is not attained inside the curve horizon."""


def F(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, float):
        return Fraction(x).limit_denominator(10**12)
    return Fraction(x)


# --------------------------------------------------------------------------
# shapes


@dataclass(frozen=True)
class LeakyBucket:
    b: Fraction
    r: Fraction


@dataclass(frozen=True)
class RateLatency:
    R: Fraction
    T: Fraction


@dataclass(frozen=True)
class Staircase:
    """step * ceil((t - offset) / period), clipped at 0."""

    step: Fraction
    period: Fraction
    offset: Fraction = Fraction(0)


@dataclass(frozen=True)
class AffinePieces:
    value0: Fraction
    pieces: tuple  # ((start, value, slope), ...)


CurveShape = LeakyBucket | RateLatency | Staircase | AffinePieces


# --------------------------------------------------------------------------
# curve


class Curve:
    __slots__ = ("value0", "pieces", "horizon", "_starts")

    def __init__(self, value0, pieces: Iterable, horizon, check: bool = True):
        horizon = F(horizon)
        if horizon <= 0:
            raise CurveError("horizon must be positive")
        ps = [(F(t), F(v), F(s)) for t, v, s in pieces]
        if not ps or ps[0][0] != 0:
            raise CurveError("first segment must start at t=0")
        self.value0 = F(value0)
        self.horizon = horizon
        self.pieces = _normalize(ps, horizon)
        self._starts = [p[0] for p in self.pieces]
        if check:
            self._check()

    def _check(self) -> None:
        prev_end = self.value0
        if prev_end < 0:
            raise CurveError("curve must be non-negative")
        for i, (t, v, s) in enumerate(self.pieces):
            if s < 0:
                raise CurveError(f"negative slope {s} at t={t}")
            if v < prev_end:
                raise CurveError(f"curve decreases at t={t}")
            end = self.pieces[i + 1][0] if i + 1 < len(self.pieces) else self.horizon
            prev_end = v + s * (end - t)

    # evaluation -----------------------------------------------------------

    def _piece_left(self, t: Fraction) -> int:
        # index of the piece containing t in (start, next_start]
        return bisect_left(self._starts, t) - 1

    def __call__(self, t) -> Fraction:
        t = F(t)
        if t < 0 or t > self.horizon:
            raise HorizonError(f"t={t} outside [0, {self.horizon}]")
        if t == 0:
            return self.value0
        i = self._piece_left(t)
        ts, v, s = self.pieces[i]
        return v + s * (t - ts)

    def right(self, t) -> Fraction:
        """Right limit f(t+); equals f(horizon) at the horizon."""
        t = F(t)
        if t < 0 or t > self.horizon:
            raise HorizonError(f"t={t} outside [0, {self.horizon}]")
        if t == self.horizon:
            return self(t)
        i = bisect_right(self._starts, t) - 1
        ts, v, s = self.pieces[i]
        return v + s * (t - ts)

    def slope_after(self, t) -> Fraction:
        t = F(t)
        if t >= self.horizon:
            return self.pieces[-1][2]
        return self.pieces[bisect_right(self._starts, t) - 1][2]

    def slope_before(self, t) -> Fraction:
        t = F(t)
        if t <= 0:
            return self.pieces[0][2]
        return self.pieces[self._piece_left(t)][2]

    def breakpoints(self) -> list[Fraction]:
        return list(self._starts) + [self.horizon]

    def end_values(self) -> list[Fraction]:
        """Left limit at the end of every piece."""
        out = []
        for i, (t, v, s) in enumerate(self.pieces):
            end = self.pieces[i + 1][0] if i + 1 < len(self.pieces) else self.horizon
            out.append(v + s * (end - t))
        return out

    @property
    def final_slope(self) -> Fraction:
        return self.pieces[-1][2]

    def __eq__(self, other) -> bool:
        if not isinstance(other, Curve):
            return NotImplemented
        return (
            self.value0 == other.value0
            and self.horizon == other.horizon
            and self.pieces == other.pieces
        )

    def __hash__(self):
        return hash((self.value0, self.horizon, self.pieces))

    def __repr__(self) -> str:
        ps = ", ".join(f"({t}, {v}, {s})" for t, v, s in self.pieces[:6])
        more = "" if len(self.pieces) <= 6 else f", ... {len(self.pieces)} pieces"
        return f"Curve(v0={self.value0}, [{ps}{more}], H={self.horizon})"

    # convenience ----------------------------------------------------------

    def __add__(self, other: "Curve") -> "Curve":
        return add(self, other)

    def scale(self, k) -> "Curve":
        k = F(k)
        return Curve(
            self.value0 * k,
            [(t, v * k, s * k) for t, v, s in self.pieces],
            self.horizon,
            check=False,
        )

    def truncate(self, horizon) -> "Curve":
        horizon = F(horizon)
        if horizon > self.horizon:
            raise HorizonError("cannot extend a curve beyond its horizon")
        ps = [p for p in self.pieces if p[0] < horizon]
        return Curve(self.value0, ps, horizon, check=False)

    def sample(self, ts: Sequence) -> list[float]:
        return [float(self(t)) for t in ts]


def _normalize(ps: list, horizon: Fraction) -> tuple:
    out: list = []
    for i, (t, v, s) in enumerate(ps):
        end = ps[i + 1][0] if i + 1 < len(ps) else horizon
        if t >= horizon:
            break
        if end <= t:
            continue
        if out:
            t0, v0, s0 = out[-1]
            if s0 == s and v0 + s0 * (t - t0) == v:
                continue
        out.append((t, v, s))
    if not out:
        out.append(ps[0])
    return tuple(out)


# --------------------------------------------------------------------------
# constructors


def make_curve(shape, horizon) -> Curve:
    horizon = F(horizon)
    if horizon <= 0:
        raise CurveError("horizon must be positive")
    if isinstance(shape, LeakyBucket):
        b, r = F(shape.b), F(shape.r)
        if b < 0 or r < 0:
            raise CurveError("leaky bucket parameters must be non-negative")
        return Curve(0, [(0, b, r)], horizon)
    if isinstance(shape, RateLatency):
        R, T = F(shape.R), F(shape.T)
        if R < 0 or T < 0:
            raise CurveError("rate-latency parameters must be non-negative")
        if T == 0:
            return Curve(0, [(0, 0, R)], horizon)
        return Curve(0, [(0, 0, 0), (T, 0, R)], horizon)
    if isinstance(shape, Staircase):
        step, period, off = F(shape.step), F(shape.period), F(shape.offset)
        if step < 0 or period <= 0:
            raise CurveError("staircase needs step >= 0 and period > 0")
        return _staircase(step, period, off, horizon)
    if isinstance(shape, AffinePieces):
        return Curve(shape.value0, shape.pieces, horizon)
    raise CurveError(f"unknown shape {shape!r}")


def _staircase(step, period, off, horizon) -> Curve:
    # value on (off + (k-1)P, off + kP] is k*step, clipped at 0
    def level_after(t):
        return step * max(0, (t - off) // period + 1)

    v0 = step * max(0, _ceil_div(-off, period))
    pieces = []
    k = _ceil_div(-off, period)
    t = off + k * period  # first breakpoint >= 0
    if t > 0:
        pieces.append((Fraction(0), level_after(Fraction(0)), Fraction(0)))
    while t < horizon:
        pieces.append((t, level_after(t), Fraction(0)))
        t += period
    return Curve(v0, pieces, horizon)


def _ceil_div(a: Fraction, b: Fraction) -> int:
    return -((-a) // b)


def zero(horizon) -> Curve:
    return Curve(0, [(0, 0, 0)], horizon)


def constant_rate(rate, horizon) -> Curve:
    return Curve(0, [(0, 0, rate)], horizon)


def pure_delay(T, horizon) -> Curve:
    """delta_T: 0 up to T, then (practically) infinite."""
    T = F(T)
    if T == 0:
        return Curve(0, [(0, INF_BITS, 0)], horizon)
    return Curve(0, [(0, 0, 0), (T, INF_BITS, 0)], horizon)


def infinite_server(horizon) -> Curve:
    return pure_delay(0, horizon)


# --------------------------------------------------------------------------
# envelopes


def _envelope(lines, width, lower: bool):
    """Lower (or upper) envelope of lines p + q*x on x in (0, width].

    Returns [(x_start, p_at_start, q), ...]. Ties at the start go to the
    line that stays extreme longest.
    """
    if lower:
        cur = min(lines, key=lambda l: (l[0], l[1]))
    else:
        cur = max(lines, key=lambda l: (l[0], l[1]))
    x = Fraction(0)
    out = [(x, cur[0], cur[1])]
    while True:
        best = None
        cp, cq = cur
        for p, q in lines:
            if (q < cq) if lower else (q > cq):
                xc = (p - cp) / (cq - q)
                if xc <= x:
                    xc = x  # already equal or better at x: cannot happen
                    continue
                if best is None or xc < best[0] or (
                    xc == best[0] and ((q < best[2]) if lower else (q > best[2]))
                ):
                    best = (xc, p, q)
        if best is None or best[0] >= width:
            return out
        x = best[0]
        cur = (best[1], best[2])
        out.append((x, cp + cq * x, cur[1]))


def _assemble(value0, grid, interval_lines, horizon, lower: bool, check=True):
    """Build a curve from per-interval candidate lines.

    interval_lines(k) returns the list of (p, q) lines valid on
    (grid[k], grid[k+1]], where p is the right limit at grid[k].
    """
    pieces = []
    for k in range(len(grid) - 1):
        lo, hi = grid[k], grid[k + 1]
        lines = interval_lines(k)
        for x, p, q in _envelope(lines, hi - lo, lower):
            pieces.append((lo + x, p, q))
    return Curve(value0, pieces, horizon, check=check)


def _grid(points, horizon) -> list[Fraction]:
    g = sorted({p for p in points if 0 <= p < horizon} | {Fraction(0)})
    g.append(horizon)
    return g


# --------------------------------------------------------------------------
# pointwise operations


def _common_horizon(curves) -> Fraction:
    return min(c.horizon for c in curves)


def _pointwise(curves: Sequence[Curve], coeffs, mode: str, horizon=None, check=True):
    H = horizon if horizon is not None else _common_horizon(curves)
    pts = set()
    for c in curves:
        pts.update(c._starts)
    grid = _grid(pts, H)

    def lines(k):
        lo = grid[k]
        ls = [(c.right(lo) * a, c.slope_after(lo) * a) for c, a in zip(curves, coeffs)]
        if mode == "sum":
            return [(sum(p for p, _ in ls), sum(q for _, q in ls))]
        return ls

    vals = [c.value0 * a for c, a in zip(curves, coeffs)]
    if mode == "sum":
        v0 = sum(vals)
    elif mode == "min":
        v0 = min(vals)
    else:
        v0 = max(vals)
    return _assemble(v0, grid, lines, H, lower=(mode != "max"), check=check)


def add(*curves: Curve) -> Curve:
    return _pointwise(curves, [1] * len(curves), "sum")


def sub_raw(x: Curve, y: Curve) -> Curve:
    """x - y without validation (may be negative or decreasing)."""
    return _pointwise([x, y], [1, -1], "sum", check=False)


def linear_combination(curves, coeffs, const=0, horizon=None) -> Curve:
    """sum(c_i * f_i) + const, unchecked."""
    H = horizon if horizon is not None else _common_horizon(curves)
    base = _pointwise(list(curves) + [zero(H)], list(coeffs) + [1], "sum", horizon=H, check=False)
    const = F(const)
    return Curve(
        base.value0 + const,
        [(t, v + const, s) for t, v, s in base.pieces],
        H,
        check=False,
    )


def pointwise_min(*curves: Curve) -> Curve:
    return _pointwise(curves, [1] * len(curves), "min")


def pointwise_max(*curves: Curve) -> Curve:
    return _pointwise(curves, [1] * len(curves), "max")


def max_raw(*curves: Curve) -> Curve:
    """Pointwise max without validation (inputs may be negative)."""
    return _pointwise(curves, [1] * len(curves), "max", check=False)


def add_rate(c: Curve, rate, const=0) -> Curve:
    """c(t) + rate*t + const, unchecked."""
    rate, const = F(rate), F(const)
    return Curve(
        c.value0 + const,
        [(t, v + rate * t + const, s + rate) for t, v, s in c.pieces],
        c.horizon,
        check=False,
    )


def running_sup_positive(c: Curve) -> Curve:
    """Non-decreasing closure max(0, sup_{u<=t} c(u))."""
    M = max(Fraction(0), c.value0)
    v0 = M
    pieces = []
    for i, (t, v, s) in enumerate(c.pieces):
        end = c.pieces[i + 1][0] if i + 1 < len(c.pieces) else c.horizon
        w = end - t
        if s <= 0:
            M = max(M, v)
            pieces.append((t, M, Fraction(0)))
            continue
        if v >= M:
            pieces.append((t, v, s))
            M = v + s * w
        else:
            end_v = v + s * w
            if end_v <= M:
                pieces.append((t, M, Fraction(0)))
            else:
                tc = t + (M - v) / s
                pieces.append((t, M, Fraction(0)))
                pieces.append((tc, M, s))
                M = end_v
    return Curve(v0, pieces, c.horizon)


def shift_right(c: Curve, d) -> Curve:
    """t -> c(t - d) for t >= d, c(0) before (unchecked if c(0)>0)."""
    d = F(d)
    if d == 0:
        return c
    ps = [(Fraction(0), c.value0, Fraction(0))]
    ps += [(t + d, v, s) for t, v, s in c.pieces if t + d < c.horizon]
    return Curve(c.value0, ps, c.horizon)


def shift_left(c: Curve, d, horizon=None) -> Curve:
    """t -> c(t + d); equals c deconvolved by a pure delay d."""
    d = F(d)
    H = F(horizon) if horizon is not None else c.horizon - d
    if H <= 0 or H + d > c.horizon:
        raise HorizonError("shift exceeds horizon")
    if d == 0:
        return c.truncate(H)
    v0 = c.right(d) if d < c.horizon else c(d)
    grid = _grid([t - d for t in c._starts] + [Fraction(0)], H)
    ps = [(g, c.right(g + d), c.slope_after(g + d)) for g in grid[:-1]]
    return Curve(v0, ps, H)


# --------------------------------------------------------------------------
# convolution / deconvolution


def convolve(x: Curve, y: Curve) -> Curve:
    """(x (*) y)(t) = inf_{0<=s<=t} x(t-s) + y(s), exact."""
    H = min(x.horizon, y.horizon)
    xa = [a for a in x._starts if a < H]
    yb = [b for b in y._starts if b < H]
    grid = _grid([a + b for a in xa for b in yb], H)

    def lines(k):
        lo = grid[k]
        out = []
        for b in yb:
            if b <= lo:
                out.append((x.right(lo - b) + y(b), x.slope_after(lo - b)))
        for a in xa:
            if a <= lo:
                out.append((x(a) + y.right(lo - a), y.slope_after(lo - a)))
        return out

    return _assemble(x.value0 + y.value0, grid, lines, H, lower=True)


def deconvolve(x: Curve, y: Curve, horizon=None) -> Curve:
    """(x (/) y)(t) = sup_{u>=0} x(t+u) - y(u), exact.

    The result lives on [0, horizon] (default: half the input horizon).
    Raises HorizonError when the supremum is only reached at the input
    horizon, i.e. the true value may lie beyond it.
    """
    H = min(x.horizon, y.horizon)
    Ho = F(horizon) if horizon is not None else H / 2
    if Ho <= 0 or Ho > H:
        raise HorizonError("output horizon must lie in (0, input horizon]")
    xa = [a for a in x._starts if a < H] + [H]
    yb = [b for b in y._starts if b < H]
    grid = _grid([a - b for a in xa for b in yb], Ho)

    def lines(k, boundary):
        lo, hi = grid[k], grid[k + 1]
        out = []
        for b in yb:
            if b + hi <= H:
                out.append((x.right(lo + b) - y(b), x.slope_after(lo + b)))
        for a in xa:
            if a >= hi and (a < H or boundary):
                xv = x.right(a) if a < H else x(a)
                out.append((xv - y(a - lo), y.slope_before(a - lo)))
        return out

    v0_int, v0_bnd = _deconv_at_zero(x, y, H)
    full = _assemble(max(v0_int, v0_bnd), grid, lambda k: lines(k, True), Ho, lower=False, check=False)
    inner = _assemble(v0_int, grid, lambda k: lines(k, False), Ho, lower=False, check=False)
    if full != inner:
        raise HorizonError("deconvolution supremum not attained inside the horizon")
    return Curve(full.value0, full.pieces, Ho)


def _deconv_at_zero(x: Curve, y: Curve, H):
    pts = sorted(set(x._starts) | set(y._starts))
    best = x.value0 - y.value0
    for c in pts:
        if c >= H:
            continue
        best = max(best, x(c) - y(c), x.right(c) - y.right(c))
    return best, x(H) - y(H)


# --------------------------------------------------------------------------
# deviations


def lower_inverse(c: Curve, v) -> Fraction | None:
    """inf{s : c(s) >= v}, or None when v exceeds c(horizon)."""
    v = F(v)
    if v <= c.value0:
        return Fraction(0)
    ends = c.end_values()
    for (t, pv, s), e in zip(c.pieces, ends):
        if v <= pv:
            return t
        if v <= e:
            return t + (v - pv) / s
    return None


def upper_inverse(c: Curve, v) -> Fraction | None:
    """inf{s : c(s) > v}, or None when c never exceeds v."""
    v = F(v)
    if v < c.value0:
        return Fraction(0)
    ends = c.end_values()
    for (t, pv, s), e in zip(c.pieces, ends):
        if v < pv:
            return t
        if v < e:
            return t + (v - pv) / s
    return None


def horizontal_deviation(alpha: Curve, beta: Curve) -> Fraction:
    """h(alpha, beta): the worst-case delay of alpha through beta."""
    H = min(alpha.horizon, beta.horizon)
    levels = {beta.value0}
    for (t, v, s), e in zip(beta.pieces, beta.end_values()):
        levels.add(v)
        levels.add(e)
    cand = {a for a in alpha._starts if a <= H} | {H}
    for L in levels:
        for inv in (lower_inverse(alpha, L), upper_inverse(alpha, L)):
            if inv is not None and inv <= H:
                cand.add(inv)

    def inv(v, upper):
        r = upper_inverse(beta, v) if upper else lower_inverse(beta, v)
        if r is None:
            raise HorizonError("arrival exceeds service within the horizon")
        return r

    best = Fraction(0)
    best_t = Fraction(0)
    for t in sorted(cand):
        a0 = alpha(t)
        d = inv(a0, False) - t
        if t < H:
            aR = alpha.right(t)
            if aR > a0:
                d = max(d, inv(aR, False) - t)
            if alpha.slope_after(t) > 0:
                d = max(d, inv(aR, True) - t)
        if d > best:
            best, best_t = d, t
    if best > 0 and best_t == H and alpha.slope_before(H) > 0:
        raise HorizonError("delay still growing at the horizon")
    return best


def vertical_deviation(alpha: Curve, beta: Curve) -> Fraction:
    """v(alpha, beta) = max(0, sup_s alpha(s) - beta(s))."""
    H = min(alpha.horizon, beta.horizon)
    pts = sorted({p for p in alpha._starts + beta._starts if p < H} | {H})
    best = max(Fraction(0), alpha.value0 - beta.value0)
    for p in pts:
        best = max(best, alpha(p) - beta(p))
        if p < H:
            best = max(best, alpha.right(p) - beta.right(p))
    return best


def zero_at_origin(c: Curve) -> Curve:
    """Same curve with value 0 at t = 0 (an empty interval carries no bits)."""
    return Curve(0, c.pieces, c.horizon)


def output_bound(alpha: Curve, beta: Curve, beta_max: Curve | None = None,
                 sigma: Curve | None = None, horizon=None) -> Curve:
    """Arrival curve of the departures: alpha (/) beta, or the refined
    min(sigma, (alpha (*) beta_max) (/) beta) when upper service is known.

    The result is taken as 0 at t = 0.
    """
    inner = alpha if beta_max is None else convolve(alpha, beta_max)
    out = zero_at_origin(deconvolve(inner, beta, horizon))
    if sigma is None:
        return out
    return pointwise_min(out, sigma.truncate(out.horizon))
