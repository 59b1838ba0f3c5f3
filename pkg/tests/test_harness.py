import math
from itertools import combinations

import networkx as nx
import pytest
from hypothesis import given
from hypothesis import strategies as st

from helpers import network, outside, route, state, train
from test_consensus import h_of
from sorail.consensus import ConsensusOutcome
from sorail.harness import (
    FIELDS,
    BatchConfig,
    SOConfig,
    SoTms,
    batch_run,
    compute_regret,
    count_quasi_conflicts,
    improvement,
    metrics_csv,
    planned_delays,
    read_metrics_csv,
    run_one,
)
from sorail.infra import Occupation, Rttp, TimedPath, rttp_from_dict
from sorail.scenario import Scenario, build_scenario
from sorail.simulator import Simulator
from sorail.solver import Budget, project
from sorail.toy import toy_network


def tp(tid, *occ):
    occ = tuple(Occupation(*o) for o in occ)
    return TimedPath(tid, "r", occ, occ[-1].end)


def brute_quasi_pairs(rttp, delays):
    pairs = set()
    for a, b in combinations(sorted(rttp.paths), 2):
        if not (delays.get(a, 0) > 0 or delays.get(b, 0) > 0):
            continue
        for x in {o.tds for o in rttp.paths[a].occupations} & {o.tds for o in rttp.paths[b].occupations}:
            seq = sorted((o.start, t) for t, p in rttp.paths.items() for o in p.occupations if o.tds == x)
            names = [t for _, t in seq]
            if any({names[i], names[i + 1]} == {a, b} for i in range(len(names) - 1)):
                pairs.add((a, b))
    return pairs


def test_quasi_conflict_examples():
    r = Rttp({"A": tp("A", ("x", 0, 60), ("y", 60, 120)), "B": tp("B", ("x", 60, 120), ("z", 120, 180))})
    assert count_quasi_conflicts(r, {"A": 0, "B": 0}) == (0, set())
    assert count_quasi_conflicts(r, {"A": 30, "B": 10}) == (1, {("A", "B")})
    # a third train in between breaks the succession
    r3 = Rttp({**r.paths, "B": tp("B", ("x", 200, 260)), "C": tp("C", ("x", 60, 120))})
    assert count_quasi_conflicts(r3, {"A": 5, "B": 5, "C": 0}) == (2, {("A", "C"), ("B", "C")})


@pytest.mark.parametrize("seed", range(3))
def test_quasi_conflicts_match_brute_force(seed):
    sc = build_scenario(toy_network(seed, 10), seed)
    lg, _, _ = run_one(sc, "fcfs", BatchConfig(period=300))
    for it in lg.iterations:
        rttp = rttp_from_dict(it["rttp"])
        delays = planned_delays(sc.network, rttp)
        n, pairs = count_quasi_conflicts(rttp, delays)
        assert pairs == brute_quasi_pairs(rttp, delays) and n == len(pairs)


def regret_case(pick):
    g_i = nx.Graph([("A", "B")])
    all_h = {"A": [h_of("A", "0", 1.0), h_of("A", "1", 3.0)], "B": [h_of("B", "0", 1.0), h_of("B", "1", 2.0)]}
    g_h = nx.Graph([("A/0", "B/1"), ("A/1", "B/0")])
    sel = {t: next(h for h in all_h[t] if h.id == i) for t, i in zip("AB", pick)}
    comp = frozenset("AB")
    return compute_regret(g_h, g_i, ConsensusOutcome(sel, [comp], [comp]), all_h)


def test_regret_hand_example():
    # fully compatible assignments cost 1+2 and 3+1
    worse = regret_case(("A/1", "B/0"))[0]
    assert worse["optimum"] == 3.0 and worse["selected"] == 4.0
    assert worse["regret"] == pytest.approx(100.0 / 3.0) and not worse["optimal"]
    best = regret_case(("A/0", "B/1"))[0]
    assert best["regret"] == 0.0 and best["optimal"]


def test_regret_unavailable_and_infinite():
    g_i = nx.Graph([("A", "B")])
    all_h = {"A": [h_of("A", "0", 0.0)], "B": [h_of("B", "0", 0.0)]}
    comp = frozenset("AB")
    out = ConsensusOutcome({"A": all_h["A"][0], "B": all_h["B"][0]}, [comp], [comp])
    assert compute_regret(nx.Graph(), g_i, out, all_h)[0]["available"] is False
    all_h = {"A": [h_of("A", "0", 0.0), h_of("A", "1", 1.0)], "B": [h_of("B", "0", 0.0)]}
    g_h = nx.Graph([("A/0", "B/0"), ("A/1", "B/0")])
    out = ConsensusOutcome({"A": all_h["A"][1], "B": all_h["B"][0]}, [comp], [comp])
    assert math.isinf(compute_regret(g_h, g_i, out, all_h)[0]["regret"])
    assert compute_regret(g_h, g_i, out, all_h, limit=1)[0]["available"] is False


@given(st.integers(1, 10**6), st.integers(0, 10**6))
def test_improvement_sign(base, value):
    imp = improvement(float(base), float(value))
    assert (imp > 0) == (value < base) and (imp == 0) == (value == base)
    assert improvement(0.0, 5.0) is None and improvement(None, 1.0) is None


def test_empty_batch_header_only():
    text = metrics_csv(batch_run([], ["so", "fcfs"]))
    lines = text.splitlines()
    assert lines[0].startswith("# sorail-metrics v") and lines[1].split(",") == FIELDS and len(lines) == 2


def test_one_scenario_three_tms():
    sc = build_scenario(toy_network(1, 6), 1)
    rows = batch_run([("s1", sc)], ["so", "cen", "fcfs"], BatchConfig(so=SOConfig(generation_budget=Budget(nodes=200))))
    assert [r.tms for r in rows] == ["so", "cen", "fcfs"] and all(r.status == "ok" for r in rows)
    text = metrics_csv(rows)
    parsed = read_metrics_csv(text)
    assert len(parsed) == 3 and parsed[0]["scenario"] == "s1"
    so, cen, fcfs = rows
    if fcfs.total_weighted_delay:
        assert (so.improvement_vs_fcfs_weighted > 0) == (so.total_weighted_delay < fcfs.total_weighted_delay)
    assert fcfs.improvement_vs_cen is None and all(r.safe for r in rows)


def test_failing_run_becomes_error_row():
    sc = build_scenario(toy_network(1, 6), 1)
    rows = batch_run([("s", sc)], ["nope", "fcfs"])
    assert rows[0].status == "error" and "nope" in rows[0].error and rows[1].status == "ok"


@pytest.mark.parametrize("seed", [0, 3, 5])
def test_so_not_worse_than_fcfs_on_six_trains(seed):
    sc = build_scenario(toy_network(seed, 6), seed)
    _, so, _ = run_one(sc, "so")
    _, fcfs, _ = run_one(sc, "fcfs")
    assert so.total_weighted_delay <= fcfs.total_weighted_delay
    assert so.safe and fcfs.safe


def test_so_on_unperturbed_scenario_keeps_plan():
    sc = build_scenario(toy_network(0, 8), 0)
    calm = Scenario(sc.timetable, {t: 0 for t in sc.network.trains}, 0)
    sim = Simulator(calm.network, calm.timetable.scheduled_paths, calm.entrance_delays)
    ts = sim.traffic_state()
    plan = Rttp(calm.timetable.scheduled_paths)
    out = SoTms(calm.network)(ts, plan)
    assert out.paths == project(calm.network, ts, plan).paths
    _, m, _ = run_one(calm, "so")
    assert m.total_delay == 0


def test_singleton_traffic_gets_best_route():
    t = train("A", [route("r", ["x", "y"], 60), route("q", ["x", "z", "y"], 20)], entry=0, exit_=120)
    net = network({"x": ["y", "z"], "z": ["y"]}, trains=[t])
    ts = state(0, outside("A", 40, ["r", "q"]))
    so = SoTms(net)
    out = so(ts, project(net, ts, Rttp({})))
    assert out.paths["A"].route_id == "q" and out.paths["A"].exit_time == 100
    assert so.last_diagnostics["gaps"] == [0.0]
