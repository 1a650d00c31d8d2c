import json
import math
from fractions import Fraction

import pytest

from vassterm.decision import decide_demonic
from vassterm.model import Config
from vassterm.scheme import choice_vector, scheme_constants
from vassterm.simulator import (Accumulator, EventError, MdPolicy, Record, SafetyEvent,
                                SimulationError, audit_trace, csv_text, estimate_event,
                                estimate_statistics, evaluate, fit_exponent,
                                nondecreasing_within_ci, quantile, run_once, tail_points,
                                wilson)
from vassterm.strategies import (MdFactory, SchemeFactory, ScriptError, ScriptFactory,
                                 ScriptedStrategy, angelic_opt, compile_script, demonic_opt,
                                 size_for_epsilon)

from conftest import self_loop


def test_countdown_run(countdown):
    t = run_once(countdown, MdPolicy((-1,)), Config("s", (5,)), 100, seed=0)
    assert t.term == 6 and not t.censored and t.final.counters == (-1,)


def test_censoring():
    m = self_loop((1,))
    t = run_once(m, MdPolicy((0,)), Config("s", (0,)), 100, seed=0)
    assert t.censored and t.term == 100


def test_deterministic_cycle(a2):
    policy = MdPolicy(choice_vector(a2, {"q1": 0, "q2": 2}))
    t = run_once(a2, policy, Config("q1", (3, 3)), 1000, seed=1, record=True)
    assert t.term == 4 and t.final.counters == (-1, -1)
    assert audit_trace(a2, t) == []


def test_terminal_start_has_term_zero(countdown):
    t = run_once(countdown, MdPolicy((-1,)), Config("s", (-1,)), 10, seed=0)
    assert t.term == 0


def test_run_errors(countdown):
    with pytest.raises(SimulationError):
        run_once(countdown, MdPolicy((-1,)), Config("s", (1,)), 0, seed=0)
    with pytest.raises(SimulationError):
        run_once(countdown, MdPolicy((-1,)), Config("s", (1, 2)), 10, seed=0)


def test_reproducible_traces(a1):
    policy = choice_vector(a1, {"q1": 1, "q2": 3})
    runs = [run_once(a1, MdPolicy(policy), Config("q1", (20, 20)), 5000, seed=42, record=True)
            for _ in range(2)]
    assert runs[0] == runs[1]
    assert audit_trace(a1, runs[0]) == []


def test_auditor_catches_tampering(a2):
    policy = MdPolicy(choice_vector(a2, {"q1": 0, "q2": 2}))
    t = run_once(a2, policy, Config("q1", (3, 3)), 1000, seed=1, record=True)
    steps = list(t.steps)
    steps[1] = (steps[1][0], (9, 9))
    from dataclasses import replace
    assert audit_trace(a2, replace(t, steps=tuple(steps)))


def test_countdown_statistics_are_exact(countdown):
    f = MdFactory((-1,), "s")
    stats = estimate_statistics(countdown, f, [10, 100], 5, seed=3)
    assert [(r.n, r.mean, r.stderr) for r in stats.records] == [(10, 11, 0.0), (100, 101, 0.0)]
    assert all(r.q50 == r.q99 == r.n + 1 and r.censored == 0 for r in stats.records)


def test_countdown_event(countdown):
    rows = estimate_event(countdown, MdFactory((-1,), "s"), [5, 50], SafetyEvent("term", "n"), 4, 1)
    assert [f for _, f, _ in rows] == [1, 1]


def test_merge_law():
    a, b = Accumulator(), Accumulator()
    for x in (3, 5, 8):
        a.add(x, False, x > 4)
    for x in (1, 13):
        b.add(x, x > 10, False)
    c = Accumulator()
    for x in (3, 5, 8, 1, 13):
        c.add(x, x > 10, 4 < x < 10)
    m = a.merge(b)
    assert (m.count, m.total, m.total_sq, sorted(m.values), m.censored, m.events) == \
        (c.count, c.total, c.total_sq, sorted(c.values), c.censored, c.events)
    r = Record.from_acc(7, m, True, {})
    assert r.mean == Fraction(30, 5)


def test_jobs_do_not_change_results(a1):
    f = MdFactory(choice_vector(a1, {"q1": 1, "q2": 3}), "q1")
    s1 = estimate_statistics(a1, f, [8, 16], 12, seed=5)
    s2 = estimate_statistics(a1, f, [8, 16], 12, seed=5, jobs=2)
    assert csv_text(s1) == csv_text(s2)


def test_quantiles_and_wilson():
    vals = list(range(1, 101))
    assert quantile(vals, 0.5) == 50 and quantile(vals, 0.9) == 90 and quantile(vals, 0.99) == 99
    lo, hi = wilson(50, 100)
    assert lo < 0.5 < hi and math.isclose(lo + hi, 1.0)
    assert wilson(10, 10)[1] == 1.0


def test_fit_exponent():
    assert fit_exponent([(n, 7 * n * n) for n in (10, 20, 40, 80)]) == pytest.approx(2, abs=1e-12)
    assert fit_exponent([(n, 3 * n) for n in (5, 6, 7)]) == pytest.approx(1, abs=1e-12)
    with pytest.raises(ValueError):
        fit_exponent([(1, 1), (2, 2)])
    with pytest.raises(ValueError):
        fit_exponent([(1, 1), (2, 0), (3, 4)])
    pts = [(n, n) for n in (32, 64, 128, 256)]
    assert [n for n, _ in tail_points(pts)] == [64, 128, 256]
    assert [n for n, _ in tail_points(pts, 128)] == [128, 256]


def test_trend_check():
    up = [(1, 0.5, (0.4, 0.6)), (2, 0.7, (0.6, 0.8))]
    assert nondecreasing_within_ci(up)
    assert nondecreasing_within_ci([(1, 0.7, (0.6, 0.8)), (2, 0.65, (0.55, 0.75))])
    assert not nondecreasing_within_ci([(1, 0.9, (0.85, 0.95)), (2, 0.3, (0.2, 0.4))])


def test_expressions():
    assert evaluate("64*n**2", {"n": 3}) == 576
    assert evaluate("ceil(n**1.2)", {"n": 16}) == 28
    assert evaluate("L**2 - -1", {"L": 4}) == 17
    for bad in ("__import__('os')", "n.real", "x", "1 +"):
        with pytest.raises(ValueError):
            evaluate(bad, {"n": 1})
    assert SafetyEvent.parse("term: L**2") == SafetyEvent("term", "L**2")
    with pytest.raises(ValueError):
        SafetyEvent.parse("size:3")


def test_msafe_needs_scheme(countdown):
    with pytest.raises(EventError):
        estimate_event(countdown, MdFactory((-1,), "s"), [3], SafetyEvent("msafe", "n"), 2, 1)


def test_msafe_on_scheme(a1):
    combo = decide_demonic(a1).evidence
    f = SchemeFactory(combo, scheme_constants(a1, combo), "8*n")
    rows = estimate_event(a1, f, [16], SafetyEvent("msafe", "8*n"), 20, 7)
    assert rows[0][1] >= Fraction(9, 10)
    # a 0-safe prefix is impossible: the first segment already dips below the start
    rows = estimate_event(a1, f, [16], SafetyEvent("msafe", "0"), 20, 7)
    assert rows[0][1] == 0


def test_scheme_runs_are_long(a1):
    combo = decide_demonic(a1).evidence
    k = scheme_constants(a1, combo)
    stats = estimate_statistics(a1, SchemeFactory(combo, k, "8*n"), [16], 10, 2,
                                event=SafetyEvent("term", "L**2"))
    assert stats.records[0].event_freq == 1
    assert stats.records[0].variables == {"n": 16, "L": 8, "N": 128}


def test_start_size_schedule():
    assert size_for_epsilon(0.5) == "ceil(n**1.2)"


def test_opt_strategies(a1, a2):
    choice, start = demonic_opt(a2)
    assert a2.state_ids[start] == "q1"
    assert choice[a2.index("q1")] == 1 and choice[a2.index("q2")] == 3
    choice, start = angelic_opt(a1)
    assert choice[a1.index("q1")] == 0 and choice[a1.index("q2")] == 2


def test_fig4_script_phases(fig4):
    prog = compile_script(fig4, bundled_script())
    trace = run_once(fig4, ScriptedStrategy(prog), Config("p1", (0, 1)), 50, seed=0, record=True)
    ids = [fig4.transitions[k] for k, _ in trace.steps]
    assert [(t.source, t.target) for t in ids[:5]] == [
        ("p1", "p1"), ("p1", "p2"), ("p2", "p2"), ("p2", "p2"), ("p2", "r")]
    assert trace.steps[4][1] == (0, 4)


def test_script_equivalent_to_md(a1):
    prog = compile_script(a1, {"rules": [{"state": "q1", "take": 1}, {"state": "q2", "take": 1}]})
    md = MdPolicy(choice_vector(a1, {"q1": 1, "q2": 3}))
    t1 = run_once(a1, ScriptedStrategy(prog), Config("q1", (30, 30)), 10 ** 4, seed=8)
    t2 = run_once(a1, md, Config("q1", (30, 30)), 10 ** 4, seed=8)
    assert t1 == t2


def test_script_variables_and_errors(fig4):
    prog = compile_script(fig4, {
        "vars": {"mark": 0},
        "rules": [{"state": "p1", "when": "c1 < mark", "take": 0},
                  {"state": "p1", "when": "mark == 0", "take": 0, "set": {"mark": "c2"}},
                  {"state": "p1", "take": 1},
                  {"state": "p2", "take": 1},
                  {"state": "f", "take": 0}]})
    t = run_once(fig4, ScriptedStrategy(prog), Config("p1", (0, 3)), 100, seed=1, record=True)
    assert t.steps[0][1] == (2, 2) and t.steps[1][1] == (4, 1)
    bad = compile_script(fig4, {"rules": [{"state": "p1", "when": "c2 > 5", "take": 0}]})
    with pytest.raises(ScriptError):
        run_once(fig4, ScriptedStrategy(bad), Config("p1", (0, 1)), 10, seed=0)
    for rules in ([{"state": "r", "take": 0}], [{"state": "p1", "take": 7}],
                  [{"state": "p1", "when": "c9 > 0", "take": 0}],
                  [{"state": "p1", "when": "c1 >> 0", "take": 0}],
                  [{"state": "zz", "take": 0}]):
        with pytest.raises(ScriptError):
            compile_script(fig4, {"rules": rules})


def test_truncated_mean_grows_with_horizon(fig4):
    prog = compile_script(fig4, bundled_script())
    f = ScriptFactory(prog, "p1", counters=(0, 8))
    stats = estimate_statistics(fig4, f, [500, 2000, 8000], 300, 4, horizon="n")
    means = [r.mean for r in stats.records]
    assert means[0] < means[1] < means[2]


def bundled_script():
    from importlib import resources
    return json.loads(resources.files("vassterm.models").joinpath("fig4_doubling.script.json")
                      .read_text("utf-8"))


def test_csv_format(countdown):
    stats = estimate_statistics(countdown, MdFactory((-1,), "s"), [2], 3, 0,
                                event=SafetyEvent("term", "n"))
    lines = csv_text(stats).splitlines()
    assert lines[0] == "n,trials,mean_term,stderr,q50,q90,q99,censored,event_freq,event_ci_low,event_ci_high"
    assert lines[1].startswith("2,3,3.000000,0.000000,3,3,3,0,1.000000,")
