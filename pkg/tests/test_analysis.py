import math
from dataclasses import replace
from fractions import Fraction

import pytest

from tsnbound.analysis import (
    AnalysisError,
    analyze,
    e2e_bound,
    hops_csv,
    per_port_delay,
    report_csv,
    retarget,
    shrink_config,
)
from tsnbound.fixtures import shrink_ratio, tc2_config
from tsnbound.minplus import LeakyBucket, RateLatency, make_curve
from tsnbound.model import parse_document

H = Fraction(10**6)


def test_port_delay_of_bucket_through_rate_latency():
    alpha = make_curve(LeakyBucket(4000, Fraction(1, 100)), H)
    beta = make_curve(RateLatency(Fraction(1, 10), 500), H)
    assert per_port_delay(alpha, beta) == 500 + Fraction(4000, Fraction(1, 10))


def test_service_above_arrival_gives_zero_delay():
    alpha = make_curve(LeakyBucket(0, Fraction(1, 100)), H)
    beta = make_curve(RateLatency(Fraction(1, 10), 0), H)
    assert per_port_delay(alpha, beta) == 0


def test_e2e_sums_ceiled_terms():
    cfg = tc2_config()
    f = next(x for x in cfg.flows if len(x.route[0]) == 5)
    path = f.route[0]
    ports = [f"{a}->{b}" for a, b in zip(path, path[1:])]
    delays = {(p, f.cls): Fraction(2 * i + 1, 3) for i, p in enumerate(ports)}
    rates = {p: Fraction(1, 10) for p in ports}
    b = e2e_bound(f, path, delays, rates, preamble=8)
    l_c = math.ceil((f.size_bytes + 8) * 8 * 10)
    assert [h.d_h for h in b.hops] == [1, 1, 2, 3]
    assert b.bound == sum(h.d_h for h in b.hops) + 4 * l_c
    strict = e2e_bound(f, path, delays, rates, 8, strict=True,
                       max_frame={p: Fraction(12_000) for p in ports})
    assert strict.bound == b.bound + 4 * 120_000


def test_missing_hop_is_reported():
    cfg = tc2_config()
    f = cfg.flows[0]
    with pytest.raises(AnalysisError):
        e2e_bound(f, f.route[0], {}, {}, 0)


# Frozen after the simulator dominance check passed for all four combinations.
GOLDEN = {
    ("CBS+TAS", "non-preemption"): (1889577, 4242695, 1190224, 2654254),
    ("CBS+TAS", "preemption"): (1889577, 4242695, 838353, 2608095),
    ("CBS+SP", "non-preemption"): (923271, 2305167, 664864, 1881250),
    ("CBS+SP", "preemption"): (848771, 2171703, 622139, 1880343),
}


@pytest.fixture(scope="module")
def results():
    return {k: analyze(tc2_config(*k)) for k in GOLDEN}


@pytest.mark.parametrize("combo", sorted(GOLDEN))
def test_golden_bound_ranges(results, combo):
    a = results[combo]
    tt = [b.bound for b in a.by_class("TT", "CDT")]
    av = [b.bound for b in a.by_class("A", "B")]
    assert (min(tt), max(tt), min(av), max(av)) == GOLDEN[combo]
    assert len(a.bounds) == 49


@pytest.mark.parametrize("sch", ["CBS+TAS", "CBS+SP"])
def test_preemption_never_worse_for_avb(results, sch):
    np_, p_ = results[(sch, "non-preemption")], results[(sch, "preemption")]
    for b in np_.by_class("A", "B"):
        assert p_.bound(b.flow, b.dst) <= b.bound


def test_bound_is_sum_of_reported_terms(results):
    a = results[("CBS+TAS", "preemption")]
    rows = hops_csv(a).splitlines()[1:]
    per = {}
    for r in rows:
        flow, dst, _, _, tq, dh, lc, bound, tag = r.split(",")
        per.setdefault((flow, dst), [0, int(bound)])[0] += int(tq) + int(dh) + int(lc)
        assert tag == "CBS+TAS/preemption"
    assert per and all(s == b for s, b in per.values())


def test_four_link_route_has_four_hop_terms(results):
    a = results[("CBS+SP", "non-preemption")]
    cfg = tc2_config()
    long = [f for f in cfg.flows if len(f.route[0]) == 5]
    assert long
    for f in long:
        b = next(x for x in a.bounds if x.flow == f.id)
        assert len(b.hops) == 4


def test_shrunk_bounds_not_above_unshrunk(results):
    base = results[("CBS+TAS", "non-preemption")]
    r = shrink_ratio()
    s = analyze(shrink_config(tc2_config("CBS+TAS", "non-preemption"), r), r_index=r)
    for b in s.bounds:
        assert b.bound <= base.bound(b.flow, b.dst)


def test_larger_tt_frames_never_lower_tt_bound(results):
    cfg = tc2_config("CBS+SP", "non-preemption")
    big = cfg.replace(flows=tuple(
        replace(f, size_bytes=min(1518, 2 * f.size_bytes)) if f.cls in ("TT", "CDT") else f
        for f in cfg.flows))
    a, b = results[("CBS+SP", "non-preemption")], analyze(big)
    for x in a.by_class("TT", "CDT"):
        assert b.bound(x.flow, x.dst) >= x.bound


def test_strict_queue_term_adds_one_frame_per_hop():
    cfg = tc2_config("CBS+SP", "non-preemption")
    a, s = analyze(cfg), analyze(cfg, strict=True)
    for x, y in zip(a.bounds, s.bounds):
        assert y.bound - x.bound == sum(h.t_queue for h in y.hops) > 0


def test_retarget_swaps_guard_band_for_overhead():
    cfg = tc2_config("CBS+TAS", "non-preemption")
    p = retarget(cfg, mode="preemption")
    for pid, ps in p.schedules.items():
        assert not ps.windows_of("guard-band")
        assert len(ps.windows_of("overhead")) == len(ps.windows_of("syn"))
    sp = retarget(cfg, scheduler="CBS+SP")
    assert all(not ps.windows_of("TT") for ps in sp.schedules.values())
    with pytest.raises(AnalysisError):
        retarget(sp, scheduler="CBS+TAS")


def test_r_index_out_of_range():
    with pytest.raises(AnalysisError):
        analyze(tc2_config(), r_index=0)


def test_empty_flow_set_gives_header_only():
    cfg = parse_document({
        "network": {"nodes": [{"id": "ES_1", "kind": "end-system"},
                              {"id": "ES_2", "kind": "end-system"}],
                    "links": [{"a": "ES_1", "b": "ES_2", "rate_mbps": 100}]},
        "flows": [], "schedules": [],
    })
    a = analyze(cfg)
    assert a.bounds == []
    assert report_csv(a).splitlines() == ["flow,dst,min_ns,mean_ns,max_ns,jitter_ns,bound_ns"]


def test_best_effort_flows_get_no_bound():
    cfg = parse_document({
        "network": {"nodes": [{"id": "ES_1", "kind": "end-system"},
                              {"id": "ES_2", "kind": "end-system"}],
                    "links": [{"a": "ES_1", "b": "ES_2", "rate_mbps": 100}]},
        "flows": [{"id": "a", "class": "A", "src": "ES_1", "dst": ["ES_2"], "size_bytes": 500,
                   "period_us": 1000, "route": [["ES_1", "ES_2"]]},
                  {"id": "be", "class": "BE", "src": "ES_1", "dst": ["ES_2"], "size_bytes": 1500,
                   "period_us": 1000, "route": [["ES_1", "ES_2"]]}],
        "schedules": [{"port": "ES_1->ES_2", "hyperperiod_us": 1000, "scheduler": "CBS+SP",
                       "mode": "non-preemption", "idle_slope_a_pct": 50,
                       "idle_slope_b_pct": 25, "windows": []}],
    })
    a = analyze(cfg)
    assert [b.flow for b in a.bounds] == ["a"]
