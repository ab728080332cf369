import random
from fractions import Fraction

import pytest

from oracles import exhaustive_eta
from tsnbound.gclsynth import (
    GateSchedule,
    GateSpec,
    GclError,
    GclInfeasible,
    check_nonoverlap,
    synthesize,
    verify_schedule,
)


def test_nonoverlap_examples():
    tt, avb = GateSpec("tt", 250, 120), GateSpec("avb", 250, 15)
    assert check_nonoverlap(tt, 0, avb, 130)
    assert not check_nonoverlap(tt, 0, avb, 100)
    assert check_nonoverlap(avb, 130, tt, 0)


def test_identical_gates_overlap():
    g = GateSpec("g", 100, 10)
    assert not check_nonoverlap(g, 5, g, 5)


def test_nonoverlap_matches_interval_check():
    rng = random.Random(3)
    for _ in range(300):
        a = GateSpec("a", rng.choice([10, 20, 30, 40]), rng.randint(1, 9))
        b = GateSpec("b", rng.choice([10, 20, 30, 40]), rng.randint(1, 9))
        ta, tb = rng.randrange(int(a.period)), rng.randrange(int(b.period))
        sched = GateSchedule({"a": Fraction(ta), "b": Fraction(tb)}, Fraction(1))
        clash = [o for o in verify_schedule(sched, [a, b]) if o.gate_a != o.gate_b]
        assert check_nonoverlap(a, ta, b, tb) == (not clash)


def test_single_gate_capped():
    s = synthesize([GateSpec("g", 250_000, 100_000)], eta_max=2)
    assert s.eta == 2
    s = synthesize([GateSpec("g", 250_000, 100_000)], eta_max=10)
    assert s.eta == Fraction(5, 2)


def test_two_gate_stretch():
    gates = [GateSpec("tt", 250_000, 120_000), GateSpec("avb", 250_000, 15_000)]
    s = synthesize(gates)
    best = Fraction(250, 135)
    # one 1 µs grid step in the start difference moves eta by at most 1/120
    assert best - Fraction(1, 120) <= s.eta <= best
    assert s.eta == exhaustive_eta([(250, 120), (250, 15)], 1, 4)
    assert s.starts["avb"] - s.starts["tt"] >= s.eta * 120_000
    assert verify_schedule(s, gates) == []


def test_lexicographic_tie_break():
    gates = [GateSpec("a", 100, 10), GateSpec("b", 100, 10)]
    s = synthesize(gates, step=1, eta_max=10)
    assert s.starts == {"a": 0, "b": 50}
    # with the cap binding, the smallest start reaching it wins
    s = synthesize(gates, step=1, eta_max=4)
    assert s.starts == {"a": 0, "b": 40}


def test_over_budget_flagged():
    gates = [GateSpec("a", 100, 50), GateSpec("b", 100, 40), GateSpec("c", 100, 30)]
    s = synthesize(gates, step=1)
    assert s.eta < 1
    assert not s.nominal_feasible
    assert s.eta == exhaustive_eta([(100, 50), (100, 40), (100, 30)], 1, 4)
    assert verify_schedule(s, gates) == []
    assert verify_schedule(s, gates, eta=1) != []


def test_infeasible_reports_pair():
    gates = [GateSpec("a", 100, 10, domain=((0, 1),)), GateSpec("b", 100, 10, domain=((0, 1),))]
    with pytest.raises(GclInfeasible) as e:
        synthesize(gates, step=1)
    assert e.value.pair == ("a", "b")


def test_quotients_satisfy_bounds():
    gates = [GateSpec("a", 60, 7), GateSpec("b", 40, 5), GateSpec("c", 30, 4)]
    s = synthesize(gates, step=1)
    from tsnbound.gclsynth import fgcd
    for (i, j), q in s.quotients.items():
        gi = next(g for g in gates if g.id == i)
        gj = next(g for g in gates if g.id == j)
        g = fgcd(gi.period, gj.period)
        d = s.starts[j] - s.starts[i] - q * g
        assert s.eta * gi.length <= d <= g - s.eta * gj.length
    assert s.big_z == 60 + 40 + 30 + 7 + 5 + 4


def test_verify_reports_first_overlap():
    gates = [GateSpec("a", 100, 20), GateSpec("b", 50, 10)]
    good = GateSchedule({"a": Fraction(0), "b": Fraction(25)}, Fraction(1))
    assert verify_schedule(good, gates) == []
    bad = GateSchedule({"a": Fraction(0), "b": Fraction(15)}, Fraction(1))
    report = verify_schedule(bad, gates)
    assert report[0].gate_a == "a" and report[0].gate_b == "b"
    assert (report[0].start, report[0].end) == (15, 20)


def test_verify_single_gate_empty():
    g = [GateSpec("g", 10, 3)]
    assert verify_schedule(GateSchedule({"g": Fraction(7)}, Fraction(1)), g) == []


def test_grid_step_must_divide_period():
    with pytest.raises(GclError):
        synthesize([GateSpec("g", 2500, 100)], step=1000)


def test_random_instances_match_oracle():
    rng = random.Random(11)
    for _ in range(40):
        n = rng.randint(2, 4)
        gates = [GateSpec(f"g{i}", rng.choice([20, 30, 40, 60]), rng.randint(1, 8))
                 for i in range(n)]
        s = synthesize(gates, step=1)
        assert s.eta == exhaustive_eta([(g.period, g.length) for g in gates], 1, 4)
        assert verify_schedule(s, gates) == []
