"""Command line front end: analyze, simulate, synth-gcl, route, compare.

Every subcommand reads a YAML/JSON config, writes CSV files to ``--out``
and exits with status 1 when an invariant check fails (2 on bad input).
"""

from __future__ import annotations

import argparse
import csv
import io
import math
import sys
from dataclasses import replace
from fractions import Fraction
from pathlib import Path

from .analysis import (
    AnalysisError,
    analyze,
    compare,
    curves_csv,
    hops_csv,
    report_csv,
    shrink_config,
)
from .gclsynth import GateSpec, GclError, synthesize, verify_schedule
from .minplus import CurveError
from .model import (
    Config,
    ConfigError,
    PortSchedule,
    Window,
    dump_config,
    load_config,
    port_id,
    to_us,
)
from .routing import (
    BridgeKind,
    Message,
    RoutingError,
    RoutingProblem,
    inject_fault_and_reroute,
    synthesize_topology,
)
from .simulator import BuildError, SimOptions, build_sim, measure, run

MODES = {"np": "non-preemption", "p": "preemption",
         "non-preemption": "non-preemption", "preemption": "preemption"}
DEFAULT_LIBRARY = (BridgeKind("SW4", Fraction(4), 4), BridgeKind("SW8", Fraction(7), 8))


def _csv(rows, header) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _write(out: Path, name: str, text: str) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    p = out / name
    p.write_text(text, encoding="utf-8")
    return p


def _ratio(text: str) -> Fraction:
    r = Fraction(text)
    if not 0 < r <= 1:
        raise argparse.ArgumentTypeError("shrink ratio must lie in (0, 1]")
    return r


def _modes(args) -> list:
    if args.mode in (None, "config"):
        return [None]
    if args.mode == "both":
        return ["non-preemption", "preemption"]
    return [MODES[args.mode]]


def _analyze(cfg: Config, args, mode):
    r = args.shrink
    if r is not None and r < 1:
        cfg = shrink_config(cfg, r)
    horizon = args.horizon_us * 1000 if args.horizon_us is not None else None
    return analyze(cfg, scheduler=args.scheduler, mode=mode, r_index=r,
                   strict=args.strict_tqueue, horizon=horizon, keep_curves=True)


def _arithmetic_ok(result) -> bool:
    return all(b.bound == sum(h.t_queue + h.d_h + h.l_c for h in b.hops) for b in result.bounds)


def cmd_analyze(cfg: Config, args) -> int:
    results = [_analyze(cfg, args, m) for m in _modes(args)]
    ok = all(_arithmetic_ok(r) for r in results)
    if len(results) == 1:
        res = results[0]
        _write(args.out, "bounds.csv", report_csv(res))
    else:
        np_, p_ = results
        rows = []
        for a, b in zip(np_.bounds, p_.bounds):
            rows.append((a.flow, a.dst, a.cls, a.bound, b.bound))
            if a.cls in ("A", "B") and b.bound > a.bound:
                print(f"ordering violated: {a.flow} -> {a.dst}", file=sys.stderr)
                ok = False
        _write(args.out, "bounds.csv",
               _csv(rows, ("flow", "dst", "class", "bound_np_ns", "bound_p_ns")))
    _write(args.out, "hops.csv", "".join(
        hops_csv(r) if i == 0 else hops_csv(r).split("\n", 1)[1]
        for i, r in enumerate(results)))
    _write(args.out, "curves.csv", "".join(
        curves_csv(r) if i == 0 else curves_csv(r).split("\n", 1)[1]
        for i, r in enumerate(results)))
    return 0 if ok else 1


def _sim_options(cfg: Config, args) -> SimOptions:
    opts = SimOptions(seed=cfg.options.seed if args.seed is None else args.seed)
    if args.duration_us is not None:
        opts.duration = int(args.duration_us * 1000)
    return opts


def _simulate(cfg: Config, args):
    if args.scheduler or (args.mode not in (None, "config")):
        from .analysis import retarget
        cfg = retarget(cfg, args.scheduler, MODES.get(args.mode))
    trace = run(build_sim(cfg, _sim_options(cfg, args)))
    return trace, measure(trace, cfg.flows)


def cmd_simulate(cfg: Config, args) -> int:
    trace, report = _simulate(cfg, args)
    _write(args.out, "trace.csv", trace.to_csv())
    _write(args.out, "delays.csv", report.to_csv())
    released = len(trace.events("release"))
    accounted = sum(r.delivered + r.dropped for r in report.rows)
    if released != accounted:
        print(f"conservation violated: {released} released, {accounted} accounted",
              file=sys.stderr)
        return 1
    return 0


def cmd_compare(cfg: Config, args) -> int:
    if args.mode == "both":
        raise ConfigError("compare takes a single mode")
    res = _analyze(cfg, args, _modes(args)[0])
    _, report = _simulate(cfg, args)
    rows = compare(res, report)
    _write(args.out, "compare.csv", _csv(
        [(f, d, "" if s is None else s, b, v) for f, d, s, b, v in rows],
        ("flow", "dst", "sim_max_ns", "bound_ns", "verdict")))
    _write(args.out, "bounds.csv", report_csv(res, report))
    bad = [r for r in rows if r[4] == "FAIL"]
    for f, d, s, b, _ in bad:
        print(f"dominance violated: {f} -> {d}: simulated {s} ns > bound {b} ns",
              file=sys.stderr)
    return 1 if bad else 0


def _tt_gates(cfg: Config, pid: str) -> list:
    gates = []
    rate = None
    for f in sorted(cfg.flows, key=lambda x: x.id):
        if f.cls not in ("TT", "CDT") or pid not in f.ports():
            continue
        if rate is None:
            a, b = pid.split("->")
            rate = cfg.network.link(a, b).rate
        wire = Fraction((f.size_bytes + cfg.options.preamble_bytes) * 8) / rate
        length = Fraction(math.ceil(wire / 1000) * 1000)  # whole µs slots
        gates.append(GateSpec(f.id, f.period, length))
    return gates


def cmd_synth_gcl(cfg: Config, args) -> int:
    rows, ok = [], True
    scheds = dict(cfg.schedules)
    for pid in sorted(cfg.routed_ports()):
        gates = _tt_gates(cfg, pid)
        if not gates:
            continue
        sched = synthesize(gates)
        overlaps = verify_schedule(sched, gates, eta=1)
        if overlaps or not sched.nominal_feasible:
            ok = False
            print(f"port {pid}: no overlap-free schedule", file=sys.stderr)
        hyper = Fraction(1)
        for g in gates:
            hyper = hyper * g.period / math.gcd(int(hyper), int(g.period))
        wins = []
        for g in gates:
            t0 = sched.starts[g.id]
            rows.append((pid, g.id, _num(to_us(g.period)), _num(to_us(g.length)),
                         _num(to_us(t0)), _num(sched.eta)))
            for k in range(int(hyper / g.period)):
                wins.append(Window("TT", t0 + k * g.period, g.length))
        wins.sort(key=lambda w: w.offset)
        old = scheds.get(pid)
        a, b = pid.split("->")
        rate = cfg.network.link(a, b).rate
        if old is None:
            old = PortSchedule(pid, hyper, (), "CBS+TAS", "non-preemption",
                               rate * Fraction(3, 4), rate * Fraction(1, 8), rate)
        scheds[pid] = replace(old, hyperperiod=hyper, windows=tuple(wins), scheduler="CBS+TAS")
    _write(args.out, "gcl.csv", _csv(rows, ("port", "gate", "period_us", "length_us",
                                            "start_us", "eta")))
    _write(args.out, "config.yaml", dump_config(cfg.replace(schedules=scheds)))
    return 0 if ok else 1


def _num(x):
    x = Fraction(x)
    return int(x) if x.denominator == 1 else f"{float(x):.3f}"


def routing_problem(cfg: Config, args) -> RoutingProblem:
    ecus = sorted(n.id for n in cfg.network.nodes if n.kind == "end-system")
    switches = [n for n in cfg.network.nodes if n.kind == "switch"]
    max_bridges = int(cfg.options.extra.get("max_bridges", len(switches) or 4))
    lib = list(cfg.network.bridge_library) or list(DEFAULT_LIBRARY)
    msgs = []
    for f in sorted(cfg.flows, key=lambda x: x.id):
        for d in f.dst:
            mid = f.id if len(f.dst) == 1 else f"{f.id}@{d}"
            msgs.append(Message(mid, f.src, d, f.size_bytes, f.period, f.tolerance))
    return RoutingProblem(ecus, max_bridges, lib, msgs, alpha=cfg.options.alpha_routing)


def cmd_route(cfg: Config, args) -> int:
    prob = routing_problem(cfg, args)
    sol = synthesize_topology(prob, check_overlap=not args.skip_overlap)
    routes = [(mid, i + 1, " ".join(p)) for mid in sorted(sol.routes)
              for i, p in enumerate(sol.routes[mid])]
    _write(args.out, "routes.csv", _csv(routes, ("message", "copy", "path")))
    c = sol.costs
    _write(args.out, "cost.csv", _csv(
        [(str(c.c_cost), c.c_hops, c.c_overlap, str(c.alpha), c.total)],
        ("c_cost", "c_hops", "c_overlap", "alpha", "total")))
    tol = {m.id: m.tolerance for m in prob.messages}
    rows, ok = [], True
    for link in sorted(sol.links):
        after = inject_fault_and_reroute(sol, link, prob, check_overlap=False)
        failed = {f.message_id for f in after.failures}
        for mid in sorted(sol.routes):
            intact = bool(after.routes.get(mid)) and mid not in after.rerouted
            state = "intact" if intact else ("rerouted" if mid in after.rerouted else "lost")
            rows.append((f"{link[0]}-{link[1]}", mid, tol[mid], state))
            if tol[mid] >= 2 and (not intact or mid in failed):
                ok = False
    _write(args.out, "faults.csv", _csv(rows, ("failed_link", "message", "tolerance", "state")))
    if not sol.schedule_feasible:
        print("topology has no overlap-free schedule", file=sys.stderr)
        ok = False
    return 0 if ok else 1


COMMANDS = {
    "analyze": cmd_analyze,
    "simulate": cmd_simulate,
    "synth-gcl": cmd_synth_gcl,
    "route": cmd_route,
    "compare": cmd_compare,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tsnbound", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", required=True, help="YAML or JSON config file")
        s.add_argument("--out", type=Path, default=Path("out"), help="output directory")
        s.add_argument("--scheduler", choices=("CBS+TAS", "CBS+SP"))
        s.add_argument("--mode", choices=("config", "np", "p", "non-preemption", "preemption",
                                          "both"), default="config")
        s.add_argument("--shrink", type=_ratio, metavar="R",
                       help="scale TT/CDT frames by R and use the amplified AVB curves")
        s.add_argument("--horizon-us", type=Fraction)
        s.add_argument("--seed", type=int)
        s.add_argument("--duration-us", type=Fraction)
        s.add_argument("--strict-tqueue", action="store_true",
                       help="report one max-frame time per hop as a separate queueing term")
        if name == "route":
            s.add_argument("--skip-overlap", action="store_true",
                           help="do not check schedulability of the synthesized topology")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        return COMMANDS[args.command](cfg, args)
    except (ConfigError, BuildError, AnalysisError, GclError, RoutingError, CurveError,
            OSError) as e:
        print(f"{args.config}: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
