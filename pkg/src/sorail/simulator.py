"""Discrete-event microscopic simulator and the closed control loop.

Trains move section by section.  A train may enter its next section when the
section is free (previous occupant gone and its release margin elapsed) and
every train that the installed plan orders before it at that section has
already entered it.  Otherwise it waits, holding its current section.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Mapping, Optional, Tuple

import networkx as nx

from .errors import DeadlockDetected, RejectedPlan
from .infra import Network, Rttp, TimedPath, Train, accumulate, rttp_to_dict, validate_rttp

log = logging.getLogger(__name__)

DEFAULT_PERIOD = 300
DEFAULT_LOOKAHEAD = 2400

PENDING, ACTIVE, EXITED = "pending", "active", "exited"


@dataclass(frozen=True)
class TrainStatus:
    """One train in a traffic state.

    Inside the area ``index`` is the position of the current section on
    ``route_id`` and ``entered_at`` the time it was entered.  Outside,
    ``index`` is None and ``entered_at`` is the expected entry time.
    """

    train_id: str
    inside: bool
    route_id: str
    index: Optional[int]
    entered_at: int
    delay: int
    route_options: Tuple[str, ...]

    @property
    def start_index(self) -> int:
        return self.index if self.inside else 0


@dataclass(frozen=True)
class TrafficState:
    now: int
    trains: Mapping[str, TrainStatus]
    lookahead: int = DEFAULT_LOOKAHEAD

    def in_area(self) -> List[str]:
        return sorted(t for t, s in self.trains.items() if s.inside)

    def to_dict(self) -> dict:
        return {
            "now": self.now,
            "lookahead": self.lookahead,
            "trains": {
                tid: {"inside": s.inside, "route": s.route_id, "index": s.index,
                      "entered_at": s.entered_at, "delay": s.delay,
                      "route_options": list(s.route_options)}
                for tid, s in sorted(self.trains.items())
            },
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "TrafficState":
        trains = {
            tid: TrainStatus(tid, bool(r["inside"]), r["route"], r["index"], int(r["entered_at"]),
                             int(r.get("delay", 0)), tuple(r["route_options"]))
            for tid, r in d["trains"].items()
        }
        return cls(int(d["now"]), trains, int(d.get("lookahead", DEFAULT_LOOKAHEAD)))


@dataclass
class _Run:
    train: Train
    status: str
    route_id: str
    index: int = 0
    entered_at: int = 0
    ready_at: int = 0
    release: Optional[int] = None
    entry_time: Optional[int] = None
    exit_time: Optional[int] = None
    visited: set = field(default_factory=set)
    record: List[list] = field(default_factory=list)


@dataclass
class SimulationLog:
    trains: Dict[str, dict] = field(default_factory=dict)
    iterations: List[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"trains": {k: self.trains[k] for k in sorted(self.trains)},
                "iterations": self.iterations}


def _dwell(train: Train, route, i: int) -> int:
    return train.min_dwell if route.tds_sequence[i] in route.stop_points else 0


class Simulator:
    """Single-threaded simulation of one scenario.

    ``scheduled_paths`` is the (compressed) timetable used as delay reference
    and to pick the default route of every train.
    """

    def __init__(self, network: Network, scheduled_paths: Mapping[str, TimedPath],
                 entrance_delays: Mapping[str, int], start: int = 0):
        self.network = network
        self.scheduled = dict(scheduled_paths)
        self.now = start
        self.runs: Dict[str, _Run] = {}
        for tid in sorted(network.trains):
            train = network.trains[tid]
            route_id = self.scheduled[tid].route_id if tid in self.scheduled else train.routes[0].id
            run = _Run(train, PENDING, route_id)
            if train.stock_predecessor is None:
                run.release = train.scheduled_entry + int(entrance_delays.get(tid, 0))
            self.runs[tid] = run
        self.occupant: Dict[str, Optional[str]] = {x: None for x in network.tds}
        self.free_at: Dict[str, int] = {x: start for x in network.tds}
        self.rttp = Rttp({}, start)
        self._orders: Dict[str, List[str]] = {}

    # -- plan installation ---------------------------------------------------

    def install(self, rttp: Rttp) -> None:
        """Adopt routes and passing orders of ``rttp``."""
        self.rttp = rttp
        self._orders = rttp.passing_orders()
        for tid, path in rttp.paths.items():
            run = self.runs.get(tid)
            if run is None or run.status == EXITED or path.route_id == run.route_id:
                continue
            new = run.train.route(path.route_id)
            if run.status == PENDING:
                run.route_id = new.id
            else:
                old = run.train.route(run.route_id)
                if new.tds_sequence[: run.index + 1] == old.tds_sequence[: run.index + 1]:
                    run.route_id = new.id
                    # ready time on the current section may change with the route's run time
                    run.ready_at = run.entered_at + new.run_time[run.index] + _dwell(run.train, new, run.index)

    # -- movement -------------------------------------------------------------

    def _order_ok(self, tid: str, tds: str) -> bool:
        order = self._orders.get(tds)
        if not order or tid not in order:
            return True
        for other in order[: order.index(tid)]:
            orun = self.runs.get(other)
            if orun is not None and tds not in orun.visited and orun.status != EXITED:
                return False
        return True

    def _is_free(self, tds: str) -> bool:
        return self.occupant[tds] is None and self.free_at[tds] <= self.now

    def _enter(self, run: _Run, idx: int) -> None:
        route = run.train.route(run.route_id)
        tds = route.tds_sequence[idx]
        self.occupant[tds] = run.train.id
        run.index = idx
        run.entered_at = self.now
        run.ready_at = self.now + route.run_time[idx] + _dwell(run.train, route, idx)
        run.visited.add(tds)
        run.record.append([tds, self.now, None])

    def _leave_current(self, run: _Run, margin: int) -> None:
        route = run.train.route(run.route_id)
        tds = route.tds_sequence[run.index]
        self.occupant[tds] = None
        self.free_at[tds] = self.now + margin
        run.record[-1][2] = self.now + margin

    def _try_move(self, run: _Run) -> bool:
        train = run.train
        route = train.route(run.route_id)
        if run.status == PENDING:
            if run.release is None or run.release > self.now:
                return False
            first = route.tds_sequence[0]
            if not (self._is_free(first) and self._order_ok(train.id, first)):
                return False
            run.status = ACTIVE
            run.entry_time = self.now
            self._enter(run, 0)
            return True
        if run.status != ACTIVE or run.ready_at > self.now:
            return False
        if run.index == len(route.tds_sequence) - 1:
            succ = train.stock_successor
            margin = 0 if succ is not None else self.network.margin(route.tds_sequence[-1])
            self._leave_current(run, margin)
            run.status = EXITED
            run.exit_time = self.now
            if succ is not None:
                srun = self.runs[succ]
                srun.status = ACTIVE
                srun.entry_time = self.now
                self._enter(srun, 0)
            return True
        nxt = route.tds_sequence[run.index + 1]
        if not (self._is_free(nxt) and self._order_ok(train.id, nxt)):
            return False
        self._leave_current(run, self.network.margin(route.tds_sequence[run.index]))
        self._enter(run, run.index + 1)
        return True

    def _settle(self) -> None:
        """Perform every move possible at the current instant."""
        moved = True
        while moved:
            moved = False
            cands = [r for r in self.runs.values() if r.status != EXITED]
            cands.sort(key=lambda r: (r.ready_at if r.status == ACTIVE else (r.release or 0), r.train.id))
            for run in cands:
                if self._try_move(run):
                    moved = True

    def _next_event(self) -> Optional[int]:
        times = []
        for run in self.runs.values():
            if run.status == ACTIVE and run.ready_at > self.now:
                times.append(run.ready_at)
            elif run.status == PENDING and run.release is not None and run.release > self.now:
                times.append(run.release)
        times.extend(t for t in self.free_at.values() if t > self.now)
        return min(times) if times else None

    def done(self) -> bool:
        return all(r.status == EXITED for r in self.runs.values())

    def advance(self, until: int) -> None:
        """Run events up to and including ``until``; clock ends at ``until``."""
        while True:
            self._settle()
            nxt = self._next_event()
            if nxt is None:
                if not self.done():
                    self._raise_deadlock()
                break
            if nxt > until:
                break
            self.now = nxt
        self.now = max(self.now, until)

    def _blockers(self, run: _Run) -> List[str]:
        route = run.train.route(run.route_id)
        if run.status == PENDING:
            tds = route.tds_sequence[0]
        elif run.index + 1 < len(route.tds_sequence):
            tds = route.tds_sequence[run.index + 1]
        else:
            return []
        out = []
        if self.occupant[tds] is not None:
            out.append(self.occupant[tds])
        order = self._orders.get(tds, [])
        if run.train.id in order:
            for other in order[: order.index(run.train.id)]:
                orun = self.runs.get(other)
                if orun is not None and tds not in orun.visited and orun.status != EXITED:
                    out.append(other)
        return out

    def _raise_deadlock(self) -> None:
        g = nx.DiGraph()
        for tid, run in self.runs.items():
            if run.status != EXITED:
                for b in self._blockers(run):
                    g.add_edge(tid, b)
        try:
            cycle = [u for u, _ in nx.find_cycle(g)]
        except nx.NetworkXNoCycle:
            cycle = sorted(g.nodes)
        raise DeadlockDetected(f"deadlock at t={self.now}: {cycle}", cycle)

    # -- observation ----------------------------------------------------------

    def _scheduled_time(self, tid: str, tds: str) -> Optional[int]:
        path = self.scheduled.get(tid)
        if path is None:
            return None
        for o in path.occupations:
            if o.tds == tds:
                return o.start
        return None

    def _projected_exit(self, run: _Run) -> int:
        train = run.train
        route = train.route(run.route_id)
        if run.status == ACTIVE:
            return accumulate(self.network, train, route, run.index, run.entered_at,
                              not_before=self.now).exit_time
        entry = self._expected_entry(run)
        return accumulate(self.network, train, route, 0, entry).exit_time

    def _expected_entry(self, run: _Run) -> int:
        if run.status == ACTIVE:
            return run.entered_at
        if run.train.stock_predecessor is None:
            return max(run.release, self.now)
        pred = self.runs[run.train.stock_predecessor]
        return max(run.train.scheduled_entry, self._projected_exit(pred), self.now)

    def route_options(self, run: _Run) -> Tuple[str, ...]:
        train = run.train
        if run.status != ACTIVE:
            return tuple(r.id for r in train.routes)
        cur = train.route(run.route_id).tds_sequence[: run.index + 1]
        return tuple(r.id for r in train.routes if r.tds_sequence[: run.index + 1] == cur)

    def traffic_state(self, lookahead: int = DEFAULT_LOOKAHEAD) -> TrafficState:
        """Trains inside the area plus those expected to enter within ``lookahead``."""
        scope = {}
        for tid in sorted(self.runs):
            run = self.runs[tid]
            if run.status == EXITED:
                continue
            if run.status == ACTIVE:
                route = run.train.route(run.route_id)
                tds = route.tds_sequence[run.index]
                sched = self._scheduled_time(tid, tds)
                if sched is not None:
                    delay = run.entered_at - sched
                else:
                    delay = self._projected_exit(run) - run.train.scheduled_exit
                scope[tid] = TrainStatus(tid, True, run.route_id, run.index, run.entered_at,
                                         max(0, delay), self.route_options(run))
                continue
            entry = self._expected_entry(run)
            if entry > self.now + lookahead:
                continue
            delay = entry - run.train.scheduled_entry
            scope[tid] = TrainStatus(tid, False, run.route_id, None, entry, max(0, delay),
                                     self.route_options(run))
        return TrafficState(self.now, scope, lookahead)

    def train_records(self) -> Dict[str, dict]:
        out = {}
        for tid, run in sorted(self.runs.items()):
            out[tid] = {
                "entry": run.entry_time,
                "exit": run.exit_time,
                "route": run.route_id,
                "delay": None if run.exit_time is None else max(0, run.exit_time - run.train.scheduled_exit),
                "occupations": [list(r) for r in run.record],
            }
        return out


def advance(sim: Simulator, rttp: Rttp, until: int) -> Simulator:
    sim.install(rttp)
    sim.advance(until)
    return sim


def emit_traffic_state(sim: Simulator, lookahead: int = DEFAULT_LOOKAHEAD) -> TrafficState:
    return sim.traffic_state(lookahead)


TMS = Callable[[TrafficState, Rttp], Rttp]


def run_closed_loop(scenario, tms: TMS, period: int = DEFAULT_PERIOD,
                    lookahead: int = DEFAULT_LOOKAHEAD, max_iterations: int = 10_000) -> SimulationLog:
    """Alternate simulation periods and TMS calls until every train has exited.

    A plan that fails ``validate_rttp`` is rejected; the previous plan stays
    installed and the rejection is recorded in the log.
    """
    if period <= 0:
        raise ValueError("period must be positive")
    network = scenario.network
    sim = Simulator(network, scenario.timetable.scheduled_paths, scenario.entrance_delays)
    installed = Rttp(dict(scenario.timetable.scheduled_paths), sim.now)
    sim.install(installed)
    out = SimulationLog()
    for it in range(max_iterations):
        if sim.done():
            break
        ts = sim.traffic_state(lookahead)
        entry = {"iteration": it, "time": sim.now, "traffic_state": ts.to_dict(), "rejected": False}
        if ts.trains:
            plan = tms(ts, installed)
            diag = getattr(tms, "last_diagnostics", None)
            if diag is not None:
                entry["diagnostics"] = diag
            problems = validate_rttp(plan, network)
            if problems:
                entry["rejected"] = True
                entry["rejection"] = RejectedPlan.code
                entry["overlaps"] = [[list(p), x] for p, x in problems]
                log.warning("rejected plan at t=%s: %d overlaps", sim.now, len(problems))
            else:
                installed = plan
                sim.install(installed)
        entry["rttp"] = rttp_to_dict(installed)
        out.iterations.append(entry)
        sim.advance(sim.now + period)
    out.trains = sim.train_records()
    return out


def log_is_safe(log_: SimulationLog) -> bool:
    """True iff no section ever hosts two trains at once."""
    users: Dict[str, list] = {}
    for tid, rec in log_.trains.items():
        for tds, start, end in rec["occupations"]:
            users.setdefault(tds, []).append((start, end if end is not None else start + 1, tid))
    for lst in users.values():
        lst.sort()
        for (s1, e1, _), (s2, e2, _) in zip(lst, lst[1:]):
            if s2 < e1:
                return False
    return True
