"""Brute-force reference implementations used to pin expected values.

Everything here works on an integer-nanosecond grid with numpy and shares no
code with the package, so agreement is evidence rather than tautology.
"""

from fractions import Fraction

import numpy as np


def grid_values(curve, H=None):
    """(f, f_right) sampled at t = 0..H, built from the raw piece list."""
    H = int(curve.horizon if H is None else H)
    t = np.arange(H + 1, dtype=float)
    starts = np.array([float(p[0]) for p in curve.pieces])
    vals = np.array([float(p[1]) for p in curve.pieces])
    slopes = np.array([float(p[2]) for p in curve.pieces])
    # value: piece with start < t <= next start
    idx_l = np.searchsorted(starts, t, side="left") - 1
    idx_l[0] = 0
    f = vals[idx_l] + slopes[idx_l] * (t - starts[idx_l])
    f[0] = float(curve.value0)
    idx_r = np.searchsorted(starts, t, side="right") - 1
    fr = vals[idx_r] + slopes[idx_r] * (t - starts[idx_r])
    fr[-1] = f[-1]
    return f, fr


def conv_at(xf, yf, t):
    return float(np.min(xf[t::-1] + yf[: t + 1]))


def deconv_at(xf, xr, yf, yr, t):
    H = len(xf) - 1
    n = H - t + 1
    a = xf[t:] - yf[:n]
    b = xr[t:] - yr[:n]
    return float(max(a.max(), b.max()))


def hdev(af, ar, bf):
    """Grid horizontal deviation, exact to within one nanosecond."""
    H = len(af) - 1
    inc = np.concatenate([np.diff(af) > 0, [False]])
    # first grid index s with beta(s) >= v (beta is non-decreasing)
    s1 = np.searchsorted(bf, af - 1e-9, side="left")
    s2 = np.searchsorted(bf, ar - 1e-9, side="left")
    s3 = np.searchsorted(bf, ar + 1e-9, side="right")
    if s1.max() > H or s2.max() > H:
        raise OverflowError("not reachable within the horizon")
    t = np.arange(H + 1)
    d = np.maximum(s1 - t, s2 - t)
    s3 = np.where(inc, np.minimum(s3, H), 0)
    d = np.maximum(d, np.where(inc, s3 - t, 0))
    return int(max(0, d.max()))


def vdev(af, ar, bf, br):
    return float(max(0.0, (af - bf).max(), (ar - br).max()))


def tdma_service(C, T, L, t_syn, t):
    """Window-by-window enumeration: worst phasing puts the closed part of
    every period first."""
    t = Fraction(t)
    if t <= t_syn:
        return Fraction(0)
    served = Fraction(0)
    start = Fraction(t_syn)
    while start < t:
        open_from = start + (T - L)
        open_to = start + T
        lo, hi = max(open_from, start), min(open_to, t)
        if hi > lo:
            served += C * (hi - lo)
        start += T
    return served


def line_intersection(t0, va, sa, vb, sb):
    """Where va + sa*(t-t0) meets vb + sb*(t-t0)."""
    t = t0 + Fraction(vb - va, 1) / (sa - sb)
    return t, va + sa * (t - t0)


def exhaustive_eta(gates, step, eta_cap):
    """Best uniform stretch for a tiny gate set on a start-time grid.

    gates: list of (period, length) with integer values. The first gate is
    pinned at 0 (only relative phases matter). Every placement is scored
    exactly as a (numerator, denominator) pair; the maximum is resolved in
    rationals.
    """
    import math

    periods = [int(g[0]) for g in gates]
    lengths = [int(g[1]) for g in gates]
    axes = [np.arange(1)] + [np.arange(0, p, int(step)) for p in periods[1:]]
    grids = np.meshgrid(*axes, indexing="ij")
    cap = Fraction(eta_cap)
    num = np.full(grids[0].shape, cap.numerator, dtype=np.int64)
    den = np.full(grids[0].shape, cap.denominator, dtype=np.int64)
    for i in range(len(gates)):
        for j in range(i + 1, len(gates)):
            g = math.gcd(periods[i], periods[j])
            d = (grids[j] - grids[i]) % g
            # eta*Li <= d and eta*Lj <= g - d
            for n_, d_ in ((d, lengths[i]), (g - d, lengths[j])):
                smaller = n_ * den < num * d_
                num = np.where(smaller, n_, num)
                den = np.where(smaller, d_, den)
    vals = num / den
    top = vals.max()
    near = np.argwhere(vals >= top - 1e-9)
    return max(Fraction(int(num[tuple(k)]), int(den[tuple(k)])) for k in near)


def random_curve(rng, H, max_slope, min_slope=Fraction(0), max_pieces=5,
                 burst=True, zero_ok=False):
    """Random non-decreasing piecewise-linear curve with integer breakpoints."""
    from tsnbound.minplus import Curve

    if zero_ok and rng.random() < 0.1:
        return Curve(0, [(0, 0, 0)], H)
    n = int(rng.integers(1, max_pieces + 1))
    cuts = sorted({0} | {int(c) for c in rng.integers(1, H, size=n - 1)})
    v = Fraction(int(rng.integers(0, 2000))) if burst and rng.random() < 0.6 else Fraction(0)
    pieces = []
    for c in cuts:
        if pieces and rng.random() < 0.3:
            v += int(rng.integers(0, 500))  # jump
        den = int(rng.integers(1, 8))
        lo = min_slope * den
        hi = max_slope * den
        num = int(rng.integers(int(lo), int(hi) + 1))
        s = Fraction(num, den)
        if rng.random() < 0.15 and min_slope == 0:
            s = Fraction(0)
        pieces.append((c, v, s))
        nxt = cuts[cuts.index(c) + 1] if c != cuts[-1] else H
        v += s * (nxt - c)
    return Curve(0, pieces, H)
