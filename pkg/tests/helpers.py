"""Small builders for hand-made networks, traffic states and instances."""

from __future__ import annotations

import random
from functools import lru_cache
from itertools import product
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import networkx as nx

from sorail.infra import WEIGHT_INTERVALS, Network, Route, Rttp, Tds, Train
from sorail.simulator import TrafficState, TrainStatus
from sorail.solver import UNWEIGHTED, WEIGHTED, SolverError, SubInstance, greedy_plan


def network(links: Mapping[str, Sequence[str]], stops: Iterable[str] = (), margins: Mapping[str, int] = None,
            trains: Iterable[Train] = ()) -> Network:
    margins = margins or {}
    ids = set(links) | {s for v in links.values() for s in v}
    tds = {x: Tds(x, tuple(links.get(x, ())), x in set(stops), margins.get(x, 0)) for x in sorted(ids)}
    net = Network(tds, {t.id: t for t in trains})
    net.validate()
    return net


def route(rid: str, seq: Sequence[str], runs, stops: Iterable[str] = ()) -> Route:
    if isinstance(runs, int):
        runs = [runs] * len(seq)
    return Route(rid, tuple(seq), tuple(runs), frozenset(stops))


def train(tid: str, routes: Sequence[Route], entry: int = 0, exit_: int = 0, weight: float = 20.0,
          category: str = "freight", **kw) -> Train:
    return Train(tid, category, weight, entry, exit_, tuple(routes), **kw)


def outside(tid: str, entry: int, options: Sequence[str], route_id: Optional[str] = None) -> TrainStatus:
    return TrainStatus(tid, False, route_id or options[0], None, entry, 0, tuple(options))


def inside(tid: str, route_id: str, index: int, entered_at: int, options: Sequence[str] = None) -> TrainStatus:
    return TrainStatus(tid, True, route_id, index, entered_at, 0, tuple(options or (route_id,)))


def state(now: int, *statuses: TrainStatus) -> TrafficState:
    return TrafficState(now, {s.train_id: s for s in statuses})


# -- random small instances ------------------------------------------------------

LADDER = {
    "A": ["B1", "B2"],
    "B1": ["C"],
    "B2": ["C"],
    "F": ["C"],
    "C": ["D1", "D2", "G"],
    "D1": ["E"],
    "D2": ["E"],
    "E": ["H"],
    "G": ["H"],
}
LADDER_STOPS = ("C", "E")


def random_instance(seed: int, max_free: int = 4, max_routes: int = 3, constrained: bool = True,
                    stock: bool = True) -> SubInstance:
    """A seeded sub-instance on a small ladder network with alternative routes."""
    rng = random.Random(seed)
    g = nx.DiGraph([(a, b) for a, bs in LADDER.items() for b in bs])
    margins = {x: rng.choice((0, 0, 5)) for x in g.nodes}
    n_free = rng.randint(1, max_free)
    n_con = rng.randint(0, 1) if constrained else 0
    two_way = rng.random() < 0.4
    trains: List[Train] = []
    statuses: List[TrainStatus] = []
    now = 1000
    occupied = set()
    names = [f"t{i}" for i in range(n_free + n_con)]
    i = 0
    while i < len(names):
        tid = names[i]
        cat = rng.choice(sorted(WEIGHT_INTERVALS))
        lo, hi = WEIGHT_INTERVALS[cat]
        o = rng.choice(["A", "F"])
        d = rng.choice([x for x in ("E", "G", "H") if nx.has_path(g, o, x)])
        paths = sorted(nx.all_simple_paths(g, o, d))
        if two_way and rng.random() < 0.5:
            # opposite direction over the same sections
            paths = [p[::-1] for p in paths]
        rng.shuffle(paths)
        paths = paths[: rng.randint(1, max_routes)]
        routes = []
        for k, p in enumerate(paths):
            runs = [rng.randint(20, 90) for _ in p]
            stops = [x for x in p if x in LADDER_STOPS and x != p[0] and rng.random() < 0.5]
            routes.append(Route(f"r{k}", tuple(p), tuple(runs), frozenset(stops)))
        succ = None
        if stock and i + 1 < n_free and rng.random() < 0.2:
            succ = names[i + 1]
        entry = now + rng.randint(-200, 300)
        free_run = sum(routes[0].run_time) + 30 * len(routes[0].stop_points)
        sched_exit = entry + free_run + rng.randint(-60, 60)
        t = Train(tid, cat, round(rng.uniform(lo, hi), 1), min(entry, now + 300), sched_exit, tuple(routes),
                  stock_successor=succ)
        trains.append(t)
        # position: inside on a free section, or about to enter
        r0 = routes[0]
        if entry < now and r0.tds_sequence[0] not in occupied:
            idx = rng.randrange(min(2, len(r0.tds_sequence)))
            x = r0.tds_sequence[idx]
            if x not in occupied:
                occupied.add(x)
                opts = [r.id for r in routes if r.tds_sequence[: idx + 1] == r0.tds_sequence[: idx + 1]]
                statuses.append(TrainStatus(tid, True, r0.id, idx, now - rng.randint(0, 40), 0, tuple(opts)))
            else:
                statuses.append(TrainStatus(tid, False, r0.id, None, now + rng.randint(0, 200), 0,
                                            tuple(r.id for r in routes)))
        else:
            statuses.append(TrainStatus(tid, False, r0.id, None, max(now, entry), 0, tuple(r.id for r in routes)))
        if succ is not None:
            # successor starts where the predecessor ends
            dest = routes[0].destination
            j = i + 1
            starts = [p for p in ([dest] + sorted(nx.descendants(g, dest))) if p != dest]
            if not starts:
                trains[-1] = Train(tid, cat, t.weight, t.scheduled_entry, t.scheduled_exit, t.routes)
                i += 1
                continue
            end = rng.choice(starts)
            spaths = sorted(nx.all_simple_paths(g, dest, end))[:max_routes]
            sroutes = tuple(Route(f"r{k}", tuple(p), tuple(rng.randint(20, 90) for _ in p), frozenset())
                            for k, p in enumerate(spaths))
            # predecessor's routes must all end at dest (they do: same destination)
            st = Train(names[j], cat, t.weight, sched_exit, sched_exit + 200, sroutes, stock_predecessor=tid)
            trains.append(st)
            statuses.append(TrainStatus(names[j], False, sroutes[0].id, None, max(now, sched_exit), 0,
                                        tuple(r.id for r in sroutes)))
            i += 2
            continue
        i += 1
    all_links = {a: list(bs) for a, bs in LADDER.items()}
    for a, bs in LADDER.items():
        for b in bs:
            all_links.setdefault(b, []).append(a)
    net = network(all_links, stops=LADDER_STOPS, margins=margins, trains=trains)
    ts = TrafficState(now, {s.train_id: s for s in statuses})
    try:
        base = greedy_plan(net, ts, None, keep_orders=False)
    except SolverError:
        # possibly a deadlocked state; nothing can be constrained then
        base, n_con = Rttp({}, now), 0
    ids = sorted(ts.trains)
    con = set()
    if n_con:
        cands = [t for t in ids if net.trains[t].stock_predecessor is None and net.trains[t].stock_successor is None]
        if cands:
            con = {cands[-1]}
    free = set(ids) - con
    objective = rng.choice((WEIGHTED, UNWEIGHTED))
    weights = {t: net.trains[t].weight for t in ids} if objective == WEIGHTED else {}
    return SubInstance(net, ts, frozenset(free), frozenset(con), base, weights, objective)


# -- toy traffic states ------------------------------------------------------------

@lru_cache(maxsize=None)
def toy_state(seed: int, at: int, n_trains: int = 10):
    """Network and traffic state of a toy scenario run on its timetable until ``at``."""
    from sorail.scenario import build_scenario
    from sorail.simulator import Simulator
    from sorail.toy import toy_network

    sc = build_scenario(toy_network(seed, n_trains), seed)
    sim = Simulator(sc.network, sc.timetable.scheduled_paths, sc.entrance_delays)
    sim.install(Rttp(sc.timetable.scheduled_paths))
    sim.advance(at)
    return sc.network, sim.traffic_state(), Rttp(sc.timetable.scheduled_paths)
