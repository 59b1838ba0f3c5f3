import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import network, route, train
from oracles import min_shift, prefix_entries
from sorail.errors import CompressionInfeasible, ModelIncomplete
from sorail.infra import Occupation, Rttp, TimedPath, accumulate, validate_rttp
from sorail.scenario import (
    DELAY_BUCKETS,
    ENTRANCE_DELAY_TABLE,
    PerturbationModel,
    Timetable,
    build_scenario,
    compress_timetable,
    load_scenario,
    partition_trains,
    sample_perturbation,
    save_scenario,
    timetable_from_network,
)
from sorail.toy import toy_network

LINKS = {"s1": ["P1"], "P1": ["s2"], "s2": ["P2"], "P2": ["s3"], "y": ["s2"]}


def test_single_train_shifted_to_zero():
    t = train("a", [route("r", ["s1", "P1"], 60)], entry=3600, exit_=3720)
    net = network(LINKS, stops=("P1", "P2"), trains=[t])
    out = compress_timetable(timetable_from_network(net))
    p = out.scheduled_paths["a"]
    assert p.entry_time == 0
    assert p == accumulate(net, t, t.routes[0], 0, 3600).shifted(-3600)
    assert out.network.trains["a"].scheduled_exit == p.exit_time


def test_disjoint_trains_both_at_zero():
    a = train("a", [route("r", ["s1", "P1"], 60)], entry=500)
    b = train("b", [route("r", ["P2", "s3"], 60)], entry=900)
    net = network(LINKS, stops=("P1", "P2"), trains=[a, b])
    out = compress_timetable(timetable_from_network(net))
    assert {t: p.entry_time for t, p in out.scheduled_paths.items()} == {"a": 0, "b": 0}


def test_shared_section_shift_matches_search():
    a = train("a", [route("r", ["s1", "P1", "s2"], 60)], entry=100)
    b = train("b", [route("r", ["y", "s2", "P2"], 60)], entry=400)
    net = network(LINKS, stops=("P1", "P2"), trains=[a, b])
    tt = timetable_from_network(net)
    out = compress_timetable(tt)
    pa, pb = out.scheduled_paths["a"], out.scheduled_paths["b"]
    assert pa.entry_time == 0
    # a holds s2 on [120, 180); b reaches s2 60 s after entering
    assert pb.entry_time == 120
    starts = {t: {o.tds: o.start for o in p.occupations} for t, p in tt.scheduled_paths.items()}
    shape = accumulate(net, b, b.routes[0], 0, 0)
    assert min_shift(shape, {"a": pa}, starts, "b") == 120


def test_contradicting_orders_are_infeasible():
    # a waited long on P1 and passed s2 after c; c passed s1 after a.  Without the
    # wait a reaches s2 too early for c to stay first there.
    a = train("a", [route("r", ["s1", "P1", "s2"], 60)], entry=0)
    c = train("c", [route("r", ["s2", "s1"], [150, 60])], entry=200)
    net = network({**LINKS, "s2": ["P2", "s1"]}, stops=("P1", "P2"), trains=[a, c])
    pa = TimedPath("a", "r", (Occupation("s1", 0, 60), Occupation("P1", 60, 400), Occupation("s2", 400, 460)), 460)
    pc = accumulate(net, c, c.routes[0], 0, 200)
    tt = Timetable(net, {"a": pa, "c": pc})
    assert validate_rttp(Rttp(tt.scheduled_paths), net) == []
    with pytest.raises(CompressionInfeasible):
        compress_timetable(tt)


def _orders(paths):
    out = set()
    ids = sorted(paths)
    for i, t in enumerate(ids):
        for u in ids[i + 1:]:
            for o in paths[t].occupations:
                for q in paths[u].occupations:
                    if o.tds == q.tds:
                        out.add((o.tds, t, u, o.start < q.start))
    return out


def check_compression(tt, out):
    net = out.network
    paths = out.scheduled_paths
    # conflict-free
    assert validate_rttp(Rttp(paths), net) == []
    # same passing order on every shared section
    assert _orders(paths) == _orders(tt.scheduled_paths)
    starts = {t: {o.tds: o.start for o in p.occupations} for t, p in tt.scheduled_paths.items()}
    for tid, p in paths.items():
        train_ = net.trains[tid]
        r = train_.route(p.route_id)
        dwells = [train_.min_dwell if x in r.stop_points else 0 for x in r.tds_sequence]
        # free run with the minimum dwell: no waiting anywhere
        assert [o.start for o in p.occupations] + [p.exit_time] == prefix_entries(r.run_time, dwells, p.entry_time)
        assert all(train_.min_dwell >= 30 for _ in r.stop_points)
        assert p.entry_time >= 0
    # each start is minimal given the trains placed before it
    order = sorted(tt.scheduled_paths, key=lambda t: (tt.scheduled_paths[t].entry_time, t))
    for k, tid in enumerate(order):
        shape = paths[tid].shifted(-paths[tid].entry_time)
        placed = {t: paths[t] for t in order[:k]}
        assert min_shift(shape, placed, starts, tid) == paths[tid].entry_time


def random_timetable(seed):
    """A conflict-free timetable of one to three trains."""
    rng = random.Random(seed)
    links = {"a": ["b", "c"], "b": ["d"], "c": ["d"], "d": ["e"], "f": ["d"]}
    while True:
        trains = []
        for i in range(rng.randint(1, 3)):
            seq = rng.choice([["a", "b", "d", "e"], ["a", "c", "d"], ["f", "d", "e"], ["c", "d", "e"]])
            runs = [rng.randint(10, 60) for _ in seq]
            stops = ["d"] if rng.random() < 0.5 else []
            trains.append(train(f"t{i}", [route("r", seq, runs, stops)], entry=rng.randint(0, 400)))
        net = network(links, stops=("d",), margins={"d": rng.choice((0, 4))}, trains=trains)
        tt = timetable_from_network(net)
        if validate_rttp(Rttp(tt.scheduled_paths), net) == []:
            return tt


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 100_000))
def test_compression_rules_on_small_instances(seed):
    tt = random_timetable(seed)
    try:
        out = compress_timetable(tt)
    except CompressionInfeasible:
        return
    check_compression(tt, out)


def test_compression_rules_on_toy():
    tt = timetable_from_network(toy_network(3, 10))
    check_compression(tt, compress_timetable(tt))


# -- partitioning ------------------------------------------------------------------


def stopping_network():
    r1 = route("r0", ["s1", "P1", "s2", "P2", "s3"], [40, 50, 40, 61, 40], stops=["P1", "P2"])
    r2 = route("r1", ["s1", "Q1", "s2", "P2", "s3"], [40, 70, 40, 61, 40], stops=["P2"])
    t = train("t", [r1, r2], entry=0)
    plain = train("u", [route("r", ["y", "s2"], 30)], entry=800)
    links = {"s1": ["P1", "Q1"], "P1": ["s2"], "Q1": ["s2"], "s2": ["P2"], "P2": ["s3"], "y": ["s2"]}
    return network(links, stops=("P1", "P2", "Q1"), trains=[t, plain])


def test_partition_two_stops_three_pieces():
    tt = timetable_from_network(stopping_network())
    out = partition_trains(tt)
    assert sorted(out.network.trains) == ["t.0", "t.1", "t.2", "u"]
    assert out.scheduled_paths["u"] == tt.scheduled_paths["u"]
    pieces = [out.network.trains[f"t.{k}"] for k in range(3)]
    assert [p.stock_predecessor for p in pieces] == [None, "t.0", "t.1"]
    assert [p.stock_successor for p in pieces] == ["t.1", "t.2", None]
    # route counts never grow: only r0 passes both cut sections
    assert all(len(p.routes) <= 2 for p in pieces) and all(len(p.routes) == 1 for p in pieces)
    # concatenation reproduces the original occupations
    merged = []
    for k in range(3):
        for o in out.scheduled_paths[f"t.{k}"].occupations:
            if merged and merged[-1][0] == o.tds and merged[-1][2] == o.start:
                merged[-1] = (o.tds, merged[-1][1], o.end)
            else:
                merged.append(tuple(o))
    assert merged == [tuple(o) for o in tt.scheduled_paths["t"].occupations]
    assert out.scheduled_paths["t.2"].exit_time == tt.scheduled_paths["t"].exit_time
    # the handoff instant: successor enters when predecessor leaves
    for k in range(2):
        assert out.scheduled_paths[f"t.{k}"].exit_time == out.scheduled_paths[f"t.{k + 1}"].entry_time
    # each piece's free run reproduces its planned path
    net = out.network
    for k in range(3):
        pc = net.trains[f"t.{k}"]
        assert accumulate(net, pc, pc.routes[0], 0, pc.scheduled_entry) == out.scheduled_paths[f"t.{k}"]


def test_partition_without_stops_is_identity():
    t = train("a", [route("r", ["s1", "P1", "s2"], 60)])
    net = network(LINKS, stops=("P1", "P2"), trains=[t])
    tt = timetable_from_network(net)
    out = partition_trains(tt)
    assert out.network.trains == net.trains and out.scheduled_paths == tt.scheduled_paths


def test_partition_increases_train_count_on_toy():
    tt = compress_timetable(timetable_from_network(toy_network(1, 10)))
    out = partition_trains(tt)
    assert len(out.network.trains) > len(tt.network.trains)
    for tid, t in out.network.trains.items():
        parent = tt.network.trains[tid.split(".")[0]]
        assert len(t.routes) <= len(parent.routes)


# -- perturbation ----------------------------------------------------------------------


def test_delay_table_values():
    assert ENTRANCE_DELAY_TABLE[("passenger", "ospitaletto")][:2] == (0.07, 0.65)
    assert ENTRANCE_DELAY_TABLE[("freight", "segrate")][5] == 0.27
    assert DELAY_BUCKETS[5] == (60, 180)
    for probs in ENTRANCE_DELAY_TABLE.values():
        assert sum(probs) == pytest.approx(1.0)


def test_degenerate_model_gives_zero():
    model = PerturbationModel({k: (1, 0, 0, 0, 0, 0) for k in ENTRANCE_DELAY_TABLE})
    sc = build_scenario(toy_network(0, 6), 4, model)
    assert set(sc.entrance_delays.values()) == {0}


def test_draws_fall_inside_buckets():
    model = PerturbationModel.default()
    rng = np.random.default_rng(0)
    d = model.draw(rng, "freight", "segrate", size=20_000)
    assert d.min() >= 0 and d.max() <= 180 * 60
    for k, (lo, hi) in enumerate(DELAY_BUCKETS[1:], start=1):
        inside = d[(d > lo * 60) & (d <= hi * 60)]
        assert len(inside) > 0
        assert inside.min() >= lo * 60 + 1
    assert model.bucket_of(0) == 0 and model.bucket_of(300) == 1 and model.bucket_of(301) == 2


def test_missing_bucket_raises():
    with pytest.raises(ModelIncomplete):
        PerturbationModel.default().probabilities("freight", "nowhere")
    with pytest.raises(ValueError):
        PerturbationModel({("freight", "x"): (0.5, 0.5, 0, 0, 0, 0.1)})


def test_successors_have_no_delay_and_seed_reproducible(tmp_path):
    net = toy_network(2, 10)
    a, b = build_scenario(net, 7), build_scenario(net, 7)
    assert a.entrance_delays == b.entrance_delays
    for tid, t in a.network.trains.items():
        if t.stock_predecessor is not None:
            assert a.entrance_delays[tid] == 0
    assert set(a.entrance_delays) == set(a.network.trains)
    assert build_scenario(net, 8).entrance_delays != a.entrance_delays
    save_scenario(a, tmp_path / "s.json")
    again = load_scenario(tmp_path / "s.json")
    assert again.entrance_delays == a.entrance_delays
    assert again.timetable.scheduled_paths == a.timetable.scheduled_paths
