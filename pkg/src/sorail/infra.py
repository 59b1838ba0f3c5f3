"""Infrastructure, trains and the timed-occupation calculus.

A train occupies exactly one track detection section (TDS) at a time.  Its
occupation of section ``i`` starts when it enters and ends when it enters
section ``i + 1`` plus the release margin of section ``i``.  Intervals are
half-open, so touching occupations never conflict.
"""

from __future__ import annotations

import json
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, NamedTuple, Optional, Sequence, Tuple

from .errors import DanglingReference, InvalidDwell, InvalidNetwork, InvalidRoute

CATEGORIES = ("freight", "regional", "intercity", "highspeed", "empty_ride")

# delay-cost weight intervals per train category
WEIGHT_INTERVALS: Dict[str, Tuple[float, float]] = {
    "freight": (15.0, 24.0),
    "regional": (21.0, 36.0),
    "intercity": (19.0, 27.0),
    "highspeed": (24.0, 40.0),
    "empty_ride": (15.0, 18.0),
}

MIN_DWELL = 30


def category_group(category: str) -> str:
    """Perturbation bucket group of a category."""
    return "freight" if category == "freight" else "passenger"


def guess_weight(category: str) -> float:
    """Educated guess of another train's weight: its category midpoint."""
    lo, hi = WEIGHT_INTERVALS[category]
    return (lo + hi) / 2.0


@dataclass(frozen=True)
class Tds:
    id: str
    successors: Tuple[str, ...] = ()
    station_stop: bool = False
    release_margin: int = 0

    def __post_init__(self):
        if self.release_margin < 0:
            raise InvalidNetwork(f"TDS {self.id}: negative release margin")


@dataclass(frozen=True)
class Route:
    id: str
    tds_sequence: Tuple[str, ...]
    run_time: Tuple[int, ...]
    stop_points: frozenset = frozenset()

    def __post_init__(self):
        if not self.tds_sequence:
            raise InvalidNetwork(f"route {self.id}: empty TDS sequence")
        if len(self.run_time) != len(self.tds_sequence):
            raise InvalidNetwork(f"route {self.id}: run_time length mismatch")
        if any(r <= 0 for r in self.run_time):
            raise InvalidNetwork(f"route {self.id}: run times must be positive")
        if not set(self.stop_points) <= set(self.tds_sequence):
            raise InvalidNetwork(f"route {self.id}: stop point outside route")

    @property
    def origin(self) -> str:
        return self.tds_sequence[0]

    @property
    def destination(self) -> str:
        return self.tds_sequence[-1]


@dataclass(frozen=True)
class Train:
    id: str
    category: str
    weight: float
    scheduled_entry: int
    scheduled_exit: int
    routes: Tuple[Route, ...]
    stock_predecessor: Optional[str] = None
    stock_successor: Optional[str] = None
    min_dwell: int = MIN_DWELL
    entry_point: Optional[str] = None

    def __post_init__(self):
        if self.category not in WEIGHT_INTERVALS:
            raise InvalidNetwork(f"train {self.id}: unknown category {self.category!r}")
        lo, hi = WEIGHT_INTERVALS[self.category]
        if not lo <= self.weight <= hi:
            raise InvalidNetwork(f"train {self.id}: weight {self.weight} outside [{lo}, {hi}]")
        if self.min_dwell < MIN_DWELL:
            raise InvalidNetwork(f"train {self.id}: min_dwell below {MIN_DWELL} s")
        if not self.routes:
            raise InvalidNetwork(f"train {self.id}: no routes")
        ends = {(r.origin, r.destination) for r in self.routes}
        if len(ends) != 1:
            raise InvalidNetwork(f"train {self.id}: routes differ in origin/destination")
        if len({r.id for r in self.routes}) != len(self.routes):
            raise InvalidNetwork(f"train {self.id}: duplicate route ids")

    def route(self, route_id: str) -> Route:
        for r in self.routes:
            if r.id == route_id:
                return r
        raise InvalidRoute(f"train {self.id} has no route {route_id!r}")


class Occupation(NamedTuple):
    tds: str
    start: int
    end: int


@dataclass(frozen=True)
class TimedPath:
    """Remaining timed path of a train.

    ``start_index`` is the position in the route's TDS sequence of the first
    occupation; ``exit_time`` is when the train leaves the control area.
    """

    train_id: str
    route_id: str
    occupations: Tuple[Occupation, ...]
    exit_time: int
    start_index: int = 0

    @property
    def entry_time(self) -> int:
        return self.occupations[0].start

    def shifted(self, delta: int) -> "TimedPath":
        occ = tuple(Occupation(o.tds, o.start + delta, o.end + delta) for o in self.occupations)
        return TimedPath(self.train_id, self.route_id, occ, self.exit_time + delta, self.start_index)

    def tds_ids(self) -> Tuple[str, ...]:
        return tuple(o.tds for o in self.occupations)


@dataclass(frozen=True)
class Rttp:
    paths: Mapping[str, TimedPath]
    horizon_start: int = 0

    def passing_orders(self) -> Dict[str, List[str]]:
        """Train ids per TDS, sorted by occupation start (then train id)."""
        users = defaultdict(list)
        for tid, path in self.paths.items():
            for occ in path.occupations:
                users[occ.tds].append((occ.start, tid))
        return {x: [tid for _, tid in sorted(lst)] for x, lst in users.items()}

    def with_paths(self, paths: Mapping[str, TimedPath]) -> "Rttp":
        merged = dict(self.paths)
        merged.update(paths)
        return Rttp(merged, self.horizon_start)


@dataclass
class Network:
    tds: Dict[str, Tds]
    trains: Dict[str, Train] = field(default_factory=dict)
    entry_points: Dict[str, str] = field(default_factory=dict)

    def validate(self) -> None:
        for t in self.tds.values():
            for s in t.successors:
                if s not in self.tds:
                    raise InvalidNetwork(f"TDS {t.id}: unknown successor {s}")
        for train in self.trains.values():
            for r in train.routes:
                for a, b in zip(r.tds_sequence, r.tds_sequence[1:]):
                    if a not in self.tds or b not in self.tds:
                        raise InvalidNetwork(f"route {r.id}: unknown TDS")
                    if b not in self.tds[a].successors:
                        raise InvalidNetwork(f"route {r.id}: {a} -> {b} is not a link")
                if r.tds_sequence[-1] not in self.tds:
                    raise InvalidNetwork(f"route {r.id}: unknown TDS")
                for s in r.stop_points:
                    if not self.tds[s].station_stop:
                        raise InvalidNetwork(f"route {r.id}: stop {s} is not a station TDS")
            for link in (train.stock_predecessor, train.stock_successor):
                if link is not None and link not in self.trains:
                    raise InvalidNetwork(f"train {train.id}: unknown stock link {link}")

    def margin(self, tds_id: str) -> int:
        return self.tds[tds_id].release_margin

    def stock_group(self, train_id: str) -> List[str]:
        """All trains sharing rolling stock with ``train_id``, in chain order."""
        head = train_id
        seen = {head}
        while self.trains[head].stock_predecessor is not None:
            head = self.trains[head].stock_predecessor
            if head in seen:
                raise InvalidNetwork(f"cyclic stock chain through {train_id}")
            seen.add(head)
        chain = [head]
        while self.trains[chain[-1]].stock_successor is not None:
            chain.append(self.trains[chain[-1]].stock_successor)
        return chain


def default_dwells(train: Train, route: Route) -> Dict[str, int]:
    return {x: train.min_dwell for x in route.stop_points}


def accumulate(
    network: Network,
    train: Train,
    route: Route,
    start_index: int,
    entry_time: int,
    dwell_plan: Optional[Mapping[str, int]] = None,
    not_before: Optional[int] = None,
) -> TimedPath:
    """Free-run path from ``route[start_index]`` entered at ``entry_time``.

    ``not_before`` bounds every later entry from below; it models a train that
    has been standing on its current section up to the current time.
    """
    dwells = default_dwells(train, route) if dwell_plan is None else dwell_plan
    seq = route.tds_sequence
    entries = [entry_time]
    for i in range(start_index, len(seq)):
        nxt = entries[-1] + route.run_time[i] + dwells.get(seq[i], 0)
        if not_before is not None:
            nxt = max(nxt, not_before)
        entries.append(nxt)
    return path_from_entries(network, train, route, start_index, entries)


def path_from_entries(
    network: Network, train: Train, route: Route, start_index: int, entries: Sequence[int]
) -> TimedPath:
    """Build a path from entry times; ``entries[-1]`` is the exit time."""
    seq = route.tds_sequence
    occ = []
    last = len(seq) - 1
    for k, i in enumerate(range(start_index, len(seq))):
        margin = network.margin(seq[i])
        if i == last and train.stock_successor is not None:
            margin = 0
        occ.append(Occupation(seq[i], entries[k], entries[k + 1] + margin))
    return TimedPath(train.id, route.id, tuple(occ), entries[-1], start_index)


def occupation_intervals(
    network: Network,
    train: Train,
    route_id: str,
    entry_time: int,
    dwell_plan: Optional[Mapping[str, int]] = None,
) -> TimedPath:
    """Timed path of ``train`` entering ``route_id`` at ``entry_time``.

    Each section is held for its run time plus the planned dwell; the default
    dwell plan stops for ``min_dwell`` at every stop point.
    """
    route = train.route(route_id)
    if dwell_plan is not None:
        for x, d in dwell_plan.items():
            if d < 0:
                raise InvalidDwell(f"negative dwell at {x}")
            if x in route.stop_points:
                if d < train.min_dwell:
                    raise InvalidDwell(f"dwell at {x} shorter than {train.min_dwell} s")
            elif d != 0:
                raise InvalidDwell(f"dwell at {x} which is not a stop point")
    return accumulate(network, train, route, 0, entry_time, dwell_plan)


def _overlap(a: Occupation, b: Occupation) -> Optional[Tuple[int, int]]:
    lo, hi = max(a.start, b.start), min(a.end, b.end)
    return (lo, hi) if lo < hi else None


def paths_conflict(p1: TimedPath, p2: TimedPath) -> Optional[Tuple[str, Tuple[int, int]]]:
    """Earliest overlap between two paths as ``(tds, (lo, hi))``, or None."""
    by_tds = defaultdict(list)
    for o in p2.occupations:
        by_tds[o.tds].append(o)
    best = None
    for a in p1.occupations:
        for b in by_tds.get(a.tds, ()):
            ov = _overlap(a, b)
            if ov is not None and (best is None or (ov[0], a.tds) < (best[1][0], best[0])):
                best = (a.tds, ov)
    return best


def _check_references(rttp: Rttp, network: Network) -> None:
    for tid, path in rttp.paths.items():
        if tid not in network.trains or path.train_id != tid:
            raise DanglingReference(f"unknown train {tid!r}")
        try:
            network.trains[tid].route(path.route_id)
        except InvalidRoute as exc:
            raise DanglingReference(str(exc)) from None


def overlapping_pairs(paths: Iterable[TimedPath]) -> List[Tuple[Tuple[str, str], str]]:
    """All ``((t1, t2), tds)`` incidences with overlapping occupations."""
    users = defaultdict(list)
    for p in paths:
        for o in p.occupations:
            users[o.tds].append((o.start, o.end, p.train_id))
    found = set()
    for x, lst in users.items():
        lst.sort()
        active: List[Tuple[int, str]] = []
        for start, end, tid in lst:
            active = [(e, t) for e, t in active if e > start]
            for _, other in active:
                if other != tid:
                    found.add((tuple(sorted((tid, other))), x))
            active.append((end, tid))
    return sorted(found)


def validate_rttp(rttp: Rttp, network: Network) -> List[Tuple[Tuple[str, str], str]]:
    """Empty iff the plan is conflict-free; otherwise every overlap incidence."""
    _check_references(rttp, network)
    return overlapping_pairs(rttp.paths.values())


# -- JSON ---------------------------------------------------------------------

def route_from_dict(d: Mapping) -> Route:
    seq = tuple(d["tds_sequence"])
    rt = d["run_time"]
    if isinstance(rt, Mapping):
        rt = [rt[x] for x in seq]
    return Route(d["id"], seq, tuple(int(v) for v in rt), frozenset(d.get("stop_points", ())))


def route_to_dict(r: Route) -> dict:
    return {
        "id": r.id,
        "tds_sequence": list(r.tds_sequence),
        "run_time": list(r.run_time),
        "stop_points": sorted(r.stop_points),
    }


def train_from_dict(d: Mapping) -> Train:
    return Train(
        id=d["id"],
        category=d["category"],
        weight=float(d["weight"]),
        scheduled_entry=int(d["scheduled_entry"]),
        scheduled_exit=int(d["scheduled_exit"]),
        routes=tuple(route_from_dict(r) for r in d["routes"]),
        stock_predecessor=d.get("stock_predecessor"),
        stock_successor=d.get("stock_successor"),
        min_dwell=int(d.get("min_dwell", MIN_DWELL)),
        entry_point=d.get("entry_point"),
    )


def train_to_dict(t: Train) -> dict:
    return {
        "id": t.id,
        "category": t.category,
        "weight": t.weight,
        "scheduled_entry": t.scheduled_entry,
        "scheduled_exit": t.scheduled_exit,
        "routes": [route_to_dict(r) for r in t.routes],
        "stock_predecessor": t.stock_predecessor,
        "stock_successor": t.stock_successor,
        "min_dwell": t.min_dwell,
        "entry_point": t.entry_point,
    }


def network_from_dict(d: Mapping) -> Network:
    tds = {}
    for rec in d["tds"]:
        t = Tds(rec["id"], tuple(rec.get("successors", ())), bool(rec.get("station_stop", False)),
                int(rec.get("release_margin", 0)))
        if t.id in tds:
            raise InvalidNetwork(f"duplicate TDS id {t.id}")
        tds[t.id] = t
    trains = {}
    for rec in d.get("trains", ()):
        t = train_from_dict(rec)
        if t.id in trains:
            raise InvalidNetwork(f"duplicate train id {t.id}")
        trains[t.id] = t
    net = Network(tds, trains, dict(d.get("entry_points", {})))
    net.validate()
    return net


def network_to_dict(net: Network) -> dict:
    return {
        "tds": [
            {"id": t.id, "successors": list(t.successors), "station_stop": t.station_stop,
             "release_margin": t.release_margin}
            for t in net.tds.values()
        ],
        "entry_points": dict(net.entry_points),
        "trains": [train_to_dict(t) for t in net.trains.values()],
    }


def load_network(path) -> Network:
    with open(path) as fh:
        return network_from_dict(json.load(fh))


def path_to_dict(p: TimedPath) -> dict:
    return {
        "train_id": p.train_id,
        "route_id": p.route_id,
        "start_index": p.start_index,
        "exit_time": p.exit_time,
        "occupations": [list(o) for o in p.occupations],
    }


def path_from_dict(d: Mapping) -> TimedPath:
    occ = tuple(Occupation(str(x), int(s), int(e)) for x, s, e in d["occupations"])
    return TimedPath(d["train_id"], d["route_id"], occ, int(d["exit_time"]), int(d.get("start_index", 0)))


def rttp_to_dict(r: Rttp) -> dict:
    return {"horizon_start": r.horizon_start,
            "paths": {tid: path_to_dict(p) for tid, p in sorted(r.paths.items())}}


def rttp_from_dict(d: Mapping) -> Rttp:
    return Rttp({tid: path_from_dict(p) for tid, p in d["paths"].items()}, int(d.get("horizon_start", 0)))
