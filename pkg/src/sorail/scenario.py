"""Experiment inputs: timetables, compression, train partitioning, perturbations."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .errors import CompressionInfeasible, InvalidStop, ModelIncomplete
from .infra import (
    Network,
    Occupation,
    Route,
    TimedPath,
    Train,
    accumulate,
    category_group,
    network_from_dict,
    network_to_dict,
    path_from_dict,
    path_to_dict,
)

SCENARIO_VERSION = 1

# delay intervals in minutes: the point bucket 0, then half-open (lo, hi]
DELAY_BUCKETS: Tuple[Tuple[int, int], ...] = ((0, 0), (0, 5), (5, 15), (15, 30), (30, 60), (60, 180))

# entrance-delay probabilities per (category group, entry point)
ENTRANCE_DELAY_TABLE: Dict[Tuple[str, str], Tuple[float, ...]] = {
    ("passenger", "ospitaletto"): (0.07, 0.65, 0.21, 0.04, 0.01, 0.02),
    ("freight", "ospitaletto"): (0.31, 0.05, 0.11, 0.15, 0.14, 0.24),
    ("passenger", "segrate"): (0.24, 0.47, 0.24, 0.03, 0.01, 0.01),
    ("freight", "segrate"): (0.28, 0.07, 0.10, 0.11, 0.17, 0.27),
}


@dataclass(frozen=True)
class Timetable:
    """Trains (inside ``network``) and their planned paths."""

    network: Network
    scheduled_paths: Mapping[str, TimedPath]

    @property
    def trains(self) -> List[Train]:
        return [self.network.trains[t] for t in sorted(self.network.trains)]


@dataclass(frozen=True)
class PerturbationModel:
    buckets: Mapping[Tuple[str, str], Sequence[float]]
    intervals: Tuple[Tuple[int, int], ...] = DELAY_BUCKETS

    def __post_init__(self):
        for key, probs in self.buckets.items():
            if len(probs) != len(self.intervals):
                raise ValueError(f"bucket {key}: expected {len(self.intervals)} probabilities")
            if abs(sum(probs) - 1.0) > 1e-9:
                raise ValueError(f"bucket {key}: probabilities sum to {sum(probs)}")
            if min(probs) < 0:
                raise ValueError(f"bucket {key}: negative probability")

    @classmethod
    def default(cls) -> "PerturbationModel":
        return cls(ENTRANCE_DELAY_TABLE)

    def probabilities(self, group: str, entry_point: Optional[str]) -> Sequence[float]:
        try:
            return self.buckets[(group, entry_point)]
        except KeyError:
            raise ModelIncomplete(f"no delay distribution for ({group}, {entry_point})") from None

    def draw(self, rng: np.random.Generator, group: str, entry_point: Optional[str], size: Optional[int] = None):
        """Delays in integer seconds; a bucket first, then uniform inside it."""
        probs = np.asarray(self.probabilities(group, entry_point), dtype=float)
        n = 1 if size is None else size
        idx = rng.choice(len(probs), size=n, p=probs / probs.sum())
        lo = np.array([a * 60 for a, _ in self.intervals])[idx]
        hi = np.array([b * 60 for _, b in self.intervals])[idx]
        # uniform over the integers in (lo, hi]; the point bucket has lo == hi == 0
        u = rng.random(n)
        delays = np.where(hi > lo, lo + 1 + np.floor(u * (hi - lo)).astype(int), 0)
        return int(delays[0]) if size is None else delays.astype(int)

    def bucket_of(self, delay: int) -> int:
        if delay == 0:
            return 0
        for k, (lo, hi) in enumerate(self.intervals[1:], start=1):
            if lo * 60 < delay <= hi * 60:
                return k
        raise ValueError(f"delay {delay} outside every bucket")


@dataclass(frozen=True)
class Scenario:
    timetable: Timetable
    entrance_delays: Mapping[str, int]
    seed: int

    @property
    def network(self) -> Network:
        return self.timetable.network


# -- building timetables -------------------------------------------------------

def timetable_from_network(network: Network, paths: Optional[Mapping[str, TimedPath]] = None) -> Timetable:
    """Timetable with explicit paths, or free runs on each train's first route."""
    if paths is None:
        paths = {}
        for tid, train in network.trains.items():
            route = train.routes[0]
            paths[tid] = accumulate(network, train, route, 0, train.scheduled_entry)
    return Timetable(network, dict(paths))


def _with_trains(network: Network, trains: Mapping[str, Train]) -> Network:
    return Network(dict(network.tds), dict(trains), dict(network.entry_points))


def _retimed(train: Train, path: TimedPath) -> Train:
    return dataclasses.replace(train, scheduled_entry=path.entry_time, scheduled_exit=path.exit_time)


# -- compression -----------------------------------------------------------------

def compress_timetable(tt: Timetable) -> Timetable:
    """Shift every path to its earliest conflict-free, order-preserving start.

    Trains are placed greedily in order of original entry (ties by id).  Each
    path is first normalised to a free run with minimal dwells, then given
    the smallest start time >= 0 that keeps it disjoint from, and in the
    original order with, every already placed path.
    """
    net = tt.network
    orig = tt.scheduled_paths
    order = sorted(orig, key=lambda t: (orig[t].entry_time, t))
    # original start per (train, tds) defines the passing orders
    start_at = {t: {o.tds: o.start for o in orig[t].occupations} for t in orig}
    placed: Dict[str, TimedPath] = {}
    for tid in order:
        train = net.trains[tid]
        route = train.route(orig[tid].route_id)
        shape = accumulate(net, train, route, 0, 0)
        low, high = 0, None
        for o in shape.occupations:
            for pid, ppath in placed.items():
                for po in ppath.occupations:
                    if po.tds != o.tds:
                        continue
                    mine, theirs = start_at[tid][o.tds], start_at[pid][o.tds]
                    if (theirs, pid) < (mine, tid):
                        low = max(low, po.end - o.start)
                    else:
                        bound = po.start - o.end
                        high = bound if high is None else min(high, bound)
        if high is not None and low > high:
            raise CompressionInfeasible(f"train {tid}: original orders cannot be kept")
        placed[tid] = shape.shifted(low)
    trains = dict(net.trains)
    for tid, p in placed.items():
        trains[tid] = _retimed(trains[tid], p)
    return Timetable(_with_trains(net, trains), placed)


# -- partitioning -------------------------------------------------------------------

def _split(run: int) -> Tuple[int, int]:
    """Share of a stop section's run time for the arriving and departing piece."""
    first = -(-run // 2)
    return first, run - first


def partition_trains(tt: Timetable) -> Timetable:
    """Split trains at intermediate stops into stock-linked pieces.

    Piece ``i`` of train ``t`` is named ``t.i``.  The stop section is shared:
    the arriving piece holds it for the first half of its run time and hands
    it over; the departing piece runs the rest, dwells there and leaves.
    Only routes through every cut section survive.
    """
    net = tt.network
    trains: Dict[str, Train] = {}
    paths: Dict[str, TimedPath] = {}
    for tid in sorted(net.trains):
        train = net.trains[tid]
        path = tt.scheduled_paths[tid]
        route = train.route(path.route_id)
        seq = route.tds_sequence
        cuts = [i for i in range(1, len(seq) - 1) if seq[i] in route.stop_points]
        if not cuts:
            trains[tid] = train
            paths[tid] = path
            continue
        for i in cuts:
            if not net.tds[seq[i]].station_stop:
                raise InvalidStop(f"train {tid}: stop {seq[i]} is not a station TDS")
            if route.run_time[i] < 2:
                raise InvalidStop(f"train {tid}: run time at {seq[i]} too short to split")
        cut_tds = [seq[i] for i in cuts]
        bounds = [0] + cuts + [len(seq) - 1]
        names = [f"{tid}.{k}" for k in range(len(bounds) - 1)]
        for k in range(len(bounds) - 1):
            a, b = bounds[k], bounds[k + 1]
            routes = []
            for r in train.routes:
                if not all(x in r.tds_sequence for x in cut_tds):
                    continue
                pos = [r.tds_sequence.index(x) for x in cut_tds]
                if pos != sorted(pos):
                    continue
                rb = [0] + pos + [len(r.tds_sequence) - 1]
                ra, rz = rb[k], rb[k + 1]
                sub = list(r.tds_sequence[ra:rz + 1])
                rt = list(r.run_time[ra:rz + 1])
                if k > 0:
                    rt[0] = _split(r.run_time[ra])[1]
                if k < len(bounds) - 2:
                    rt[-1] = _split(r.run_time[rz])[0]
                stops = {x for x in r.stop_points if x in sub[:-1] or (k == len(bounds) - 2 and x == sub[-1])}
                routes.append(Route(r.id, tuple(sub), tuple(rt), frozenset(stops)))
            occ = list(path.occupations[a:b + 1])
            if k > 0:
                o = occ[0]
                occ[0] = Occupation(o.tds, o.start + _split(route.run_time[a])[0], o.end)
            if k < len(bounds) - 2:
                o = occ[-1]
                exit_time = o.start + _split(route.run_time[b])[0]
                occ[-1] = Occupation(o.tds, o.start, exit_time)
            else:
                exit_time = path.exit_time
            piece_path = TimedPath(names[k], path.route_id, tuple(occ), exit_time, 0)
            piece = dataclasses.replace(
                train,
                id=names[k],
                routes=tuple(routes),
                scheduled_entry=piece_path.entry_time,
                scheduled_exit=exit_time,
                stock_predecessor=names[k - 1] if k > 0 else train.stock_predecessor,
                stock_successor=names[k + 1] if k < len(names) - 1 else train.stock_successor,
                entry_point=train.entry_point if k == 0 else None,
            )
            trains[piece.id] = piece
            paths[piece.id] = piece_path
    return Timetable(_with_trains(net, trains), paths)


# -- perturbation -----------------------------------------------------------------------

def sample_perturbation(tt: Timetable, model: Optional[PerturbationModel] = None, seed: int = 0) -> Scenario:
    """Draw an entrance delay for every train; stock successors get none."""
    model = model or PerturbationModel.default()
    rng = np.random.default_rng(seed)
    delays = {}
    for train in tt.trains:
        if train.stock_predecessor is not None:
            delays[train.id] = 0
            continue
        delays[train.id] = model.draw(rng, category_group(train.category), train.entry_point)
    return Scenario(tt, delays, seed)


def build_scenario(network: Network, seed: int, model: Optional[PerturbationModel] = None,
                   paths: Optional[Mapping[str, TimedPath]] = None) -> Scenario:
    """Compress, partition and perturb the timetable of ``network``."""
    tt = partition_trains(compress_timetable(timetable_from_network(network, paths)))
    return sample_perturbation(tt, model, seed)


# -- JSON ---------------------------------------------------------------------------------

def scenario_to_dict(sc: Scenario, source: Optional[str] = None) -> dict:
    return {
        "version": SCENARIO_VERSION,
        "source_network": source,
        "seed": sc.seed,
        "network": network_to_dict(sc.network),
        "timetable": {t: path_to_dict(p) for t, p in sorted(sc.timetable.scheduled_paths.items())},
        "entrance_delays": {t: int(d) for t, d in sorted(sc.entrance_delays.items())},
    }


def scenario_from_dict(d: Mapping) -> Scenario:
    net = network_from_dict(d["network"])
    paths = {t: path_from_dict(p) for t, p in d["timetable"].items()}
    delays = {t: int(v) for t, v in d["entrance_delays"].items()}
    return Scenario(Timetable(net, paths), delays, int(d.get("seed", 0)))


def save_scenario(sc: Scenario, path, source: Optional[str] = None) -> None:
    with open(path, "w") as fh:
        json.dump(scenario_to_dict(sc, source), fh, indent=1, sort_keys=True)


def load_scenario(path) -> Scenario:
    with open(path) as fh:
        return scenario_from_dict(json.load(fh))
