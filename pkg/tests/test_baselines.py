import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import network, outside, random_instance, route, state, toy_state, train
from oracles import enumerate_optimum, enumeration_size, tick_simulate
from test_simulator import fixture
from sorail.baselines import CenTms, FcfsTms, cen_tms, fcfs_tms
from sorail.infra import Rttp, validate_rttp
from sorail.scenario import build_scenario
from sorail.simulator import Simulator
from sorail.solver import OPTIMAL, UNWEIGHTED, Budget, SubInstance, project
from sorail.toy import toy_network

BIG = Budget(nodes=10**6)


def unweighted_delay(net, rttp):
    return sum(max(0, p.exit_time - net.trains[t].scheduled_exit) for t, p in rttp.paths.items())


def test_single_train():
    t = train("A", [route("r", ["x", "y"], 60), route("q", ["x", "z", "y"], 20)], entry=0, exit_=120)
    net = network({"x": ["y", "z"], "z": ["y"]}, trains=[t])
    ts = state(0, outside("A", 40, ["r", "q"]))
    out = cen_tms(net, ts, Rttp({}), time_limit=BIG)
    # the faster alternative absorbs the entry delay
    assert out.paths["A"].route_id == "q" and out.paths["A"].exit_time == 100


def test_zero_budget_returns_input():
    sc = fixture({"A": 20, "B": 0, "C": 0})
    ts = Simulator(sc.network, sc.timetable.scheduled_paths, sc.entrance_delays).traffic_state()
    plan = Rttp(sc.timetable.scheduled_paths)
    assert CenTms(sc.network, Budget(nodes=0))(ts, plan) is plan


def cen_cases():
    out = []
    for seed in range(300):
        inst = random_instance(seed, max_free=3, constrained=False)
        if len(inst.state.trains) == 3 and inst.input_rttp.paths and enumeration_size(inst) <= 4096:
            out.append(seed)
        if len(out) == 10:
            break
    return out


@pytest.mark.parametrize("seed", cen_cases())
def test_cen_equals_enumeration(seed):
    inst = random_instance(seed, max_free=3, constrained=False)
    net, ts = inst.network, inst.state
    out = CenTms(net, BIG)(ts, inst.input_rttp)
    oracle = SubInstance(net, ts, frozenset(ts.trains), frozenset(), inst.input_rttp, {}, UNWEIGHTED)
    assert unweighted_delay(net, out) == enumerate_optimum(oracle)[0]
    assert validate_rttp(out, net) == []


def test_fcfs_delayed_train_second():
    a = train("A", [route("r", ["x"], 60)], entry=0, exit_=60)
    b = train("B", [route("r", ["x"], 60)], entry=30, exit_=90)
    net = network({"x": []}, trains=[a, b])
    ts = state(0, outside("A", 50, ["r"]), outside("B", 30, ["r"]))
    out = fcfs_tms(net, ts, Rttp({}))
    assert out.paths["B"].entry_time == 30 and out.paths["A"].entry_time == 90


def test_fcfs_unperturbed_keeps_timetable():
    sc = build_scenario(toy_network(2, 10), 2)
    sim = Simulator(sc.network, sc.timetable.scheduled_paths, {t: 0 for t in sc.network.trains})
    ts = sim.traffic_state()
    out = FcfsTms(sc.network)(ts, Rttp(sc.timetable.scheduled_paths))
    assert out.paths == {t: sc.timetable.scheduled_paths[t] for t in ts.trains}


@pytest.mark.parametrize("delays", [{"A": 0, "B": 0, "C": 0}, {"A": 25, "B": 0, "C": 0}, {"A": 0, "B": 60, "C": 30}])
def test_fcfs_fixture_matches_event_oracle(delays):
    sc = fixture(delays)
    net = sc.network
    sim = Simulator(net, sc.timetable.scheduled_paths, sc.entrance_delays)
    ts = sim.traffic_state(lookahead=10_000)
    out = FcfsTms(net)(ts, Rttp(sc.timetable.scheduled_paths))
    release = {t: net.trains[t].scheduled_entry + d for t, d in delays.items()}
    exits = tick_simulate(net, {t: "r" for t in net.trains}, {}, release)
    assert {t: p.exit_time for t, p in out.paths.items()} == exits


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 5), st.sampled_from([0, 600, 1500, 2400]))
def test_fcfs_never_reroutes(seed, at):
    net, ts, plan = toy_state(seed, at)
    current = project(net, ts, plan)
    out = FcfsTms(net)(ts, current)
    assert {t: p.route_id for t, p in out.paths.items()} == {t: p.route_id for t, p in current.paths.items()}
    assert validate_rttp(out, net) == []


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_cen_not_worse_than_fcfs(seed):
    inst = random_instance(seed, constrained=False)
    if not inst.input_rttp.paths:
        return
    net, ts = inst.network, inst.state
    cen = CenTms(net, BIG)
    a = cen(ts, inst.input_rttp)
    if cen.last_diagnostics.get("status") != OPTIMAL:
        return
    b = FcfsTms(net)(ts, inst.input_rttp)
    assert unweighted_delay(net, a) <= unweighted_delay(net, b)
