"""Synthetic double-track corridor with two stations, a branch and a flat crossing.

Eastbound trains enter at ``EB0`` (Segrate side) and leave on the main line
(``EB4``) or the branch (``EBR2``).  Westbound trains enter from the main line
(``WB4``) or the branch (``WBR2``), both on the Ospitaletto side.  The
westbound branch crosses the eastbound main line at ``XJ``.  Each station
has a straight platform (``a``) and a slower diverging one (``b``).
"""

from __future__ import annotations

import itertools
import math
import random
from typing import Dict, List, Optional, Sequence, Tuple

from .infra import WEIGHT_INTERVALS, Network, Route, Tds, Train, accumulate, paths_conflict

# metres
BLOCK, SWITCH, PLATFORM = 1500, 200, 400
SPEED = {"freight": 20.0, "regional": 28.0, "intercity": 34.0, "highspeed": 44.0, "empty_ride": 30.0}
DIVERGING_FACTOR = 1.6

CATEGORY_MIX = (("regional", 0.35), ("intercity", 0.2), ("highspeed", 0.1), ("freight", 0.3), ("empty_ride", 0.05))


def _lengths() -> Dict[str, int]:
    out = {}
    for d in "EW":
        for i in range(5):
            out[f"{d}B{i}"] = BLOCK
        for s in "12":
            out[f"{d}A{s}"] = SWITCH
            out[f"{d}Z{s}"] = SWITCH
            out[f"{d}P{s}a"] = PLATFORM
            out[f"{d}P{s}b"] = PLATFORM
        out[f"{d}BR1"] = BLOCK
        out[f"{d}BR2"] = BLOCK
    out["XJ"] = SWITCH
    out["WJ"] = SWITCH
    return out


def _station(prefix: str, s: str) -> List[Tuple[str, ...]]:
    return [(f"{prefix}A{s}", f"{prefix}P{s}{p}", f"{prefix}Z{s}") for p in "ab"]


# (line name, list of segments), where a segment is a tuple of alternatives
LINES = {
    "east_main": ["EB0", "EB1", _station("E", "1"), "EB2", _station("E", "2"), "XJ", "EB3", "EB4"],
    "east_branch": ["EB0", "EB1", _station("E", "1"), "EB2", _station("E", "2"), "EBR1", "EBR2"],
    "west_main": ["WB4", "WB3", "WJ", _station("W", "2"), "WB2", _station("W", "1"), "WB1", "WB0"],
    "west_branch": ["WBR2", "WBR1", "XJ", "WJ", _station("W", "2"), "WB2", _station("W", "1"), "WB1", "WB0"],
}
ENTRY = {"east_main": "segrate", "east_branch": "segrate", "west_main": "ospitaletto", "west_branch": "ospitaletto"}


def _expand(line) -> List[Tuple[str, ...]]:
    """All TDS sequences of a line, straight platforms first."""
    parts = [[(x,)] if isinstance(x, str) else x for x in line]
    return [tuple(itertools.chain.from_iterable(c)) for c in itertools.product(*parts)]


def corridor() -> Network:
    """The bare infrastructure (no trains)."""
    succ: Dict[str, set] = {x: set() for x in _lengths()}
    for line in LINES.values():
        for seq in _expand(line):
            for a, b in zip(seq, seq[1:]):
                succ[a].add(b)
    tds = {}
    for x in sorted(succ):
        stop = x[1] == "P"
        tds[x] = Tds(x, tuple(sorted(succ[x])), station_stop=stop)
    return Network(tds, {}, {"EB0": "segrate", "WB4": "ospitaletto", "WBR2": "ospitaletto"})


def _run_time(tds: str, category: str) -> int:
    length = _lengths()[tds]
    t = length / SPEED[category]
    if tds.endswith("b") and "P" in tds:
        t *= DIVERGING_FACTOR
    return max(2, math.ceil(t))


def make_routes(line: str, category: str, stop_station: Optional[str]) -> Tuple[Route, ...]:
    routes = []
    for k, seq in enumerate(_expand(LINES[line])):
        stops = frozenset(x for x in seq if stop_station is not None and x[1:3] == f"P{stop_station}")
        routes.append(Route(f"r{k}", seq, tuple(_run_time(x, category) for x in seq), stops))
    return tuple(routes)


def _pick(rng: random.Random, mix: Sequence[Tuple[str, float]]) -> str:
    r = rng.random()
    acc = 0.0
    for name, p in mix:
        acc += p
        if r < acc:
            return name
    return mix[-1][0]


def toy_network(seed: int = 0, n_trains: int = 10, window: int = 3600) -> Network:
    """Corridor with ``n_trains`` trains whose timetable is conflict-free.

    Regionals stop at station 1.  Entry times are drawn in ``[0, window)``
    and pushed later in 30 s steps until the first-route free run clashes
    with no earlier train.  Draws whose passing orders cannot survive
    compression are discarded and redrawn.
    """
    from .scenario import compress_timetable, timetable_from_network
    from .errors import CompressionInfeasible

    rng = random.Random(seed)
    while True:
        net = _draw(rng, n_trains, window)
        try:
            compress_timetable(timetable_from_network(net))
        except CompressionInfeasible:
            continue
        return net


def _draw(rng: random.Random, n_trains: int, window: int) -> Network:
    net = corridor()
    lines = sorted(LINES)
    draws = []
    for i in range(n_trains):
        line = lines[rng.randrange(len(lines))]
        cat = _pick(rng, CATEGORY_MIX)
        entry = rng.randrange(0, window, 30)
        lo, hi = WEIGHT_INTERVALS[cat]
        weight = round(rng.uniform(lo, hi), 2)
        draws.append((entry, f"T{i:02d}", line, cat, weight))
    draws.sort()
    trains: Dict[str, Train] = {}
    placed = []
    for entry, tid, line, cat, weight in draws:
        routes = make_routes(line, cat, "1" if cat == "regional" else None)
        probe = Train(tid, cat, weight, entry, entry + 1, routes, entry_point=ENTRY[line])
        while True:
            path = accumulate(net, probe, routes[0], 0, entry)
            if all(paths_conflict(path, p) is None for p in placed):
                break
            entry += 30
        trains[tid] = Train(tid, cat, weight, entry, path.exit_time, routes, entry_point=ENTRY[line])
        placed.append(path)
    net.trains = trains
    net.validate()
    return net
