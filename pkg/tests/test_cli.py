import csv

import pytest
import yaml

from tsnbound import cli
from tsnbound.fixtures import tc2_config
from tsnbound.gclsynth import GateSpec, verify_schedule
from tsnbound.model import dump_config, load_config


def rows(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.reader(fh))


@pytest.fixture(scope="module")
def tc2(tmp_path_factory):
    p = tmp_path_factory.mktemp("cfg") / "tc2.yaml"
    p.write_text(dump_config(tc2_config("CBS+TAS", "non-preemption")), encoding="utf-8")
    return p


def two_node(tmp_path, flows):
    doc = {
        "network": {"nodes": [{"id": "ES_1", "kind": "end-system"},
                              {"id": "ES_2", "kind": "end-system"}],
                    "links": [{"a": "ES_1", "b": "ES_2", "rate_mbps": 100}]},
        "flows": flows,
        "schedules": [{"port": "ES_1->ES_2", "hyperperiod_us": 250, "scheduler": "CBS+SP",
                       "mode": "non-preemption", "idle_slope_a_pct": 50,
                       "idle_slope_b_pct": 25, "windows": []}],
    }
    p = tmp_path / "cfg.yaml"
    p.write_text(yaml.safe_dump(doc), encoding="utf-8")
    return p


def test_analyze_empty_flow_list_writes_header_only(tmp_path):
    cfg = two_node(tmp_path, [])
    assert cli.main(["analyze", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    assert rows(tmp_path / "o" / "bounds.csv") == [
        ["flow", "dst", "min_ns", "mean_ns", "max_ns", "jitter_ns", "bound_ns"]]


def test_analyze_both_modes_orders_columns(tc2, tmp_path):
    out = tmp_path / "o"
    assert cli.main(["analyze", "--config", str(tc2), "--out", str(out), "--mode", "both"]) == 0
    table = rows(out / "bounds.csv")
    assert table[0] == ["flow", "dst", "class", "bound_np_ns", "bound_p_ns"]
    body = table[1:]
    assert [r[:2] for r in body] == sorted(r[:2] for r in body)
    for r in body:
        if r[2] in ("A", "B"):
            assert int(r[4]) <= int(r[3])
    hops = rows(out / "hops.csv")[1:]
    assert {h[-1] for h in hops} == {"CBS+TAS/non-preemption", "CBS+TAS/preemption"}


def test_compare_passes_on_fixture(tc2, tmp_path):
    out = tmp_path / "o"
    code = cli.main(["compare", "--config", str(tc2), "--out", str(out),
                     "--duration-us", "30000", "--seed", "3"])
    assert code == 0
    verdicts = {r[4] for r in rows(out / "compare.csv")[1:]}
    assert verdicts <= {"PASS", "NO-DATA"} and "PASS" in verdicts


def test_compare_flags_a_violation(tmp_path, monkeypatch):
    cfg = two_node(tmp_path, [{"id": "a", "class": "A", "src": "ES_1", "dst": ["ES_2"],
                               "size_bytes": 500, "period_us": 1000,
                               "route": [["ES_1", "ES_2"]]}])
    real = cli._analyze

    def tiny(*a, **kw):
        res = real(*a, **kw)
        for b in res.bounds:
            b.hops = [h.__class__(h.port, 0, 0, 1) for h in b.hops]
        return res

    monkeypatch.setattr(cli, "_analyze", tiny)
    code = cli.main(["compare", "--config", str(cfg), "--out", str(tmp_path / "o"),
                     "--duration-us", "5000"])
    assert code == 1
    assert rows(tmp_path / "o" / "compare.csv")[1][4] == "FAIL"


def test_synth_gcl_schedules_are_overlap_free(tc2, tmp_path):
    out = tmp_path / "o"
    assert cli.main(["synth-gcl", "--config", str(tc2), "--out", str(out)]) == 0
    table = rows(out / "gcl.csv")[1:]
    merged = load_config(out / "config.yaml")
    by_port = {}
    for port, gate, period, length, start, _ in table:
        by_port.setdefault(port, []).append((gate, int(period) * 1000, int(length) * 1000,
                                             int(start) * 1000))
    for port, gates in by_port.items():
        specs = [GateSpec(g, p, l) for g, p, l, _ in gates]
        from tsnbound.gclsynth import GateSchedule

        sched = GateSchedule({g: s for g, _, _, s in gates}, 1)
        assert verify_schedule(sched, specs, eta=1) == []
        assert len(merged.schedules[port].windows_of("TT")) >= len(gates)


def test_route_writes_cost_and_fault_tables(tmp_path):
    doc = {
        "network": {"nodes": [{"id": f"E{i}", "kind": "end-system"} for i in range(1, 4)],
                    "links": []},
        "flows": [{"id": "m1", "class": "TT", "src": "E1", "dst": ["E2"], "size_bytes": 500,
                   "period_us": 2000, "tolerance": 2},
                  {"id": "m2", "class": "TT", "src": "E3", "dst": ["E2"], "size_bytes": 800,
                   "period_us": 3000}],
        "options": {"max_bridges": 2},
    }
    p = tmp_path / "r.yaml"
    p.write_text(yaml.safe_dump(doc), encoding="utf-8")
    out = tmp_path / "o"
    assert cli.main(["route", "--config", str(p), "--out", str(out)]) == 0
    routes = rows(out / "routes.csv")[1:]
    assert [r[:2] for r in routes if r[0] == "m1"] == [["m1", "1"], ["m1", "2"]]
    faults = rows(out / "faults.csv")[1:]
    assert all(r[3] == "intact" for r in faults if r[1] == "m1")
    cost = rows(out / "cost.csv")
    assert cost[0] == ["c_cost", "c_hops", "c_overlap", "alpha", "total"]


def test_bad_config_exits_with_2(tmp_path, capsys):
    p = tmp_path / "bad.yaml"
    p.write_text("network: {nodes: [{id: X, kind: toaster}]}\n", encoding="utf-8")
    assert cli.main(["analyze", "--config", str(p), "--out", str(tmp_path / "o")]) == 2
    assert "unknown kind" in capsys.readouterr().err


def test_shrink_ratio_validated():
    with pytest.raises(SystemExit):
        cli.build_parser().parse_args(["analyze", "--config", "x", "--shrink", "1.5"])
