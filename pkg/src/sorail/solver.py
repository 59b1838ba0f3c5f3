"""Exact rerouting and rescheduling by branch and bound.

The decision space is the one of an alternative graph: every train event
(entry into a section, exit from the area) is a node, running and dwelling
are fixed arcs, and resolving the overlap of two trains on a section adds a
blocking arc from the release of the first train to the entry of the second.
Earliest event times are maintained by incremental longest-path propagation;
a positive cycle, a pushed fixed event or a missed deadline make a node
infeasible.

The search branches on the earliest remaining overlap between trains whose
route is chosen, then on the route of the next free train.  The earliest
schedule of a node is a lower bound for all its descendants because adding
arcs can only delay events; trains without a chosen route contribute their
cheapest free-run cost.
"""

from __future__ import annotations

import math
import sys
import time
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Tuple

from .errors import SorailError
from .infra import Network, Rttp, TimedPath, path_from_entries
from .simulator import TrafficState

INF = math.inf
EPS = 1e-9

OPTIMAL, TIME_LIMIT, INFEASIBLE = "optimal", "time_limit", "infeasible"
WEIGHTED, UNWEIGHTED = "weighted_delay", "unweighted_delay"


class SolverError(SorailError):
    """Greedy scheduling could not resolve an overlap in either order."""

    code = "greedy_dead_end"


@dataclass(frozen=True)
class Budget:
    """Search budget: node expansions, wall-clock seconds, or both."""

    nodes: Optional[int] = None
    seconds: Optional[float] = None

    @classmethod
    def of(cls, value) -> "Budget":
        if isinstance(value, Budget):
            return value
        if value is None:
            return cls()
        return cls(seconds=float(value))


@dataclass
class SubInstance:
    network: Network
    state: TrafficState
    free_trains: FrozenSet[str]
    constrained_trains: FrozenSet[str]
    input_rttp: Rttp
    weights: Dict[str, float] = field(default_factory=dict)
    objective: str = WEIGHTED

    def __post_init__(self):
        self.free_trains = frozenset(self.free_trains)
        self.constrained_trains = frozenset(self.constrained_trains)
        if self.free_trains & self.constrained_trains:
            raise ValueError("free and constrained trains overlap")
        missing = (self.free_trains | self.constrained_trains) - set(self.state.trains)
        if missing:
            raise ValueError(f"trains outside the traffic state: {sorted(missing)}")
        if self.objective == WEIGHTED:
            lacking = (self.free_trains | self.constrained_trains) - set(self.weights)
            if lacking:
                raise ValueError(f"weights missing for {sorted(lacking)}")

    @property
    def now(self) -> int:
        return self.state.now

    def weight(self, tid: str) -> float:
        return self.weights[tid] if self.objective == WEIGHTED else 1.0


@dataclass
class Solution:
    value: float
    paths: Dict[str, TimedPath]

    def signature(self):
        return tuple((t, p.route_id, p.occupations, p.exit_time) for t, p in sorted(self.paths.items()))


@dataclass
class SolveResult:
    solutions: List[Solution]
    lower_bound: float
    status: str
    nodes: int = 0

    @property
    def best(self) -> Optional[Solution]:
        return self.solutions[0] if self.solutions else None

    @property
    def gap(self) -> float:
        if not self.solutions:
            return 1.0
        best = self.solutions[0].value
        if best <= EPS:
            return 0.0
        return max(0.0, (best - self.lower_bound) / best)


# -- event graph --------------------------------------------------------------

@dataclass
class _Block:
    train: str
    route: str
    start_index: int
    nodes: List[int]            # entries then the exit node
    occ: List[Tuple[str, int, int, int]]  # (tds, start node, end node, margin)

    @property
    def first(self) -> int:
        return self.nodes[0]

    @property
    def exit(self) -> int:
        return self.nodes[-1]


class _Model:
    """Event nodes for every (train, route option) and the train chains."""

    def __init__(self, network: Network, state: TrafficState, routes: Mapping[str, Sequence[str]],
                 weights: Mapping[str, float], deadlines: Mapping[str, int] = (),
                 frozen: Mapping[str, Mapping[int, int]] = ()):
        self.network = network
        self.state = state
        self.now = state.now
        self.trains = sorted(routes)
        self.weights = dict(weights)
        self.blocks: Dict[Tuple[str, str], _Block] = {}
        self.chain_next: List[int] = []
        self.chain_w: List[int] = []
        self.init: List[int] = []
        self.fixed: Dict[int, int] = {}
        self.deadline: Dict[int, int] = {}
        self.consistent = True
        present = set(routes)
        deadlines = dict(deadlines)
        frozen = dict(frozen)
        for tid in self.trains:
            train = network.trains[tid]
            st = state.trains[tid]
            linked = train.stock_predecessor is not None and train.stock_predecessor in present
            for rid in routes[tid]:
                route = train.route(rid)
                k = st.start_index
                seq = route.tds_sequence
                base = len(self.init)
                n_nodes = len(seq) - k + 1
                nodes = list(range(base, base + n_nodes))
                if st.inside:
                    t0 = st.entered_at
                    self.fixed[base] = t0
                elif linked:
                    t0 = self.now
                else:
                    t0 = max(st.entered_at, self.now)
                times = [t0]
                for i in range(k, len(seq)):
                    w = route.run_time[i] + (train.min_dwell if seq[i] in route.stop_points else 0)
                    times.append(max(times[-1] + w, self.now))
                    self.chain_next.append(base + (i - k) + 1)
                    self.chain_w.append(w)
                self.chain_next.append(-1)
                self.chain_w.append(0)
                for pos, val in frozen.get(tid, {}).items():
                    node = base + pos
                    if times[pos] > val:
                        self.consistent = False
                    self.fixed[node] = val
                    times[pos] = max(times[pos], val)
                    for j in range(pos + 1, len(times)):
                        times[j] = max(times[j], times[j - 1] + self.chain_w[base + j - 1])
                self.init.extend(times)
                occ = []
                for i in range(k, len(seq)):
                    margin = network.margin(seq[i])
                    if i == len(seq) - 1 and train.stock_successor is not None:
                        margin = 0
                    occ.append((seq[i], base + (i - k), base + (i - k) + 1, margin))
                if tid in deadlines:
                    self.deadline[nodes[-1]] = deadlines[tid]
                    if times[-1] > deadlines[tid]:
                        # this route option can never meet the deadline
                        pass
                self.blocks[(tid, rid)] = _Block(tid, rid, k, nodes, occ)
        self.links: List[Tuple[str, str]] = []
        for tid in self.trains:
            succ = network.trains[tid].stock_successor
            if succ is not None and succ in present:
                self.links.append((tid, succ))
        self.sched_exit = {t: network.trains[t].scheduled_exit for t in self.trains}

    def train_cost(self, tid: str, T: Sequence[int], route: str) -> float:
        late = T[self.blocks[(tid, route)].exit] - self.sched_exit[tid]
        return self.weights[tid] * late if late > 0 else 0.0

    def path(self, tid: str, route: str, T: Sequence[int]) -> TimedPath:
        blk = self.blocks[(tid, route)]
        train = self.network.trains[tid]
        return path_from_entries(self.network, train, train.route(route), blk.start_index,
                                 [T[n] for n in blk.nodes])


class _State:
    """Mutable search state: chosen routes, dynamic arcs and section users."""

    def __init__(self, model: _Model):
        self.m = model
        self.dyn: List[List[Tuple[int, int]]] = [[] for _ in model.init]
        self.route: Dict[str, str] = {}
        self.users: Dict[str, List[Tuple[str, int, int, int]]] = {}

    def push(self, T: List[int], u: int, v: int, w: int, check_cycle: bool = True) -> bool:
        """Add arc u -> v (weight w) and propagate; False when infeasible.

        A zero-weight arc closing a cycle of zero-weight arcs is infeasible
        too: it stands for trains waiting on each other at the same instant.
        The arc stays in the adjacency; callers remove it with ``pop_arc``.
        """
        # a copy of an existing arc (e.g. an input order along a stock link) adds nothing
        dup = (v, w) in self.dyn[u]
        self.dyn[u].append((v, w))
        if w == 0 and check_cycle and not dup and self._zero_path(v, u):
            return False
        val = T[u] + w
        if val <= T[v]:
            return True
        m = self.m
        fixed, deadline, cn, cw, dyn = m.fixed, m.deadline, m.chain_next, m.chain_w, self.dyn
        stack = [(v, val)]
        while stack:
            n, val = stack.pop()
            if val <= T[n]:
                continue
            if n == u or n in fixed or val > deadline.get(n, INF):
                return False
            T[n] = val
            nx_ = cn[n]
            if nx_ >= 0:
                stack.append((nx_, val + cw[n]))
            for (tgt, ww) in dyn[n]:
                stack.append((tgt, val + ww))
        return True

    def pop_arc(self, u: int) -> None:
        self.dyn[u].pop()

    def _zero_path(self, src: int, dst: int, extra: Mapping[int, List[int]] = None) -> bool:
        """Is ``dst`` reachable from ``src`` over zero-weight arcs?"""
        seen = {src}
        stack = [src]
        while stack:
            n = stack.pop()
            if n == dst:
                return True
            nxt = [v for v, w in self.dyn[n] if w == 0]
            if extra:
                nxt.extend(extra.get(n, ()))
            for v in nxt:
                if v not in seen:
                    seen.add(v)
                    stack.append(v)
        return False

    def swap(self, T: Sequence[int]):
        """A touching pair closing a zero-length waiting cycle, as (first, second).

        Two trains can hand sections to each other at the same instant
        without overlapping intervals; such a rotation cannot be driven.
        """
        implicit = []
        for x in sorted(self.users):
            lst = self.users[x]
            for a in lst:
                if a[3] != 0:
                    continue
                release = T[a[2]]
                for b in lst:
                    if b[0] != a[0] and T[b[1]] == release and (b[1], 0) not in self.dyn[a[2]]:
                        implicit.append((a, b))
        if not implicit:
            return None
        extra: Dict[int, List[int]] = {}
        for a, b in implicit:
            extra.setdefault(a[2], []).append(b[1])
        for a, b in implicit:
            if self._zero_path(b[1], a[2], extra):
                return a, b
        return None

    def assign(self, T: List[int], tid: str, rid: str) -> Optional[List[int]]:
        """Choose a route; returns the arcs added (for undo) or None if infeasible."""
        m = self.m
        blk = m.blocks[(tid, rid)]
        if T[blk.exit] > m.deadline.get(blk.exit, INF):
            return None
        self.route[tid] = rid
        for o in blk.occ:
            self.users.setdefault(o[0], []).append((tid,) + o[1:])
        added: List[int] = []
        ok = True
        for pred, succ in m.links:
            if tid not in (pred, succ):
                continue
            other = succ if tid == pred else pred
            if other not in self.route:
                continue
            pb = m.blocks[(pred, self.route[pred])]
            sb = m.blocks[(succ, self.route[succ])]
            for (a, b) in ((pb.exit, sb.first), (sb.first, pb.exit)):
                added.append(a)
                if not self.push(T, a, b, 0, check_cycle=False):
                    ok = False
                    break
            if not ok:
                break
        if not ok:
            self.unassign(tid, added)
            return None
        return added

    def unassign(self, tid: str, added: Iterable[int]) -> None:
        for a in reversed(list(added)):
            self.pop_arc(a)
        rid = self.route.pop(tid)
        for o in self.m.blocks[(tid, rid)].occ:
            lst = self.users[o[0]]
            lst.remove((tid,) + o[1:])

    def conflict(self, T: Sequence[int]):
        """Earliest overlap among chosen routes as (first, second) user entries."""
        best = None
        bkey = None
        for x, lst in self.users.items():
            n = len(lst)
            if n < 2:
                continue
            for i in range(n):
                a = lst[i]
                sa = T[a[1]]
                ea = T[a[2]] + a[3]
                for j in range(i + 1, n):
                    b = lst[j]
                    if a[0] == b[0]:
                        continue
                    sb = T[b[1]]
                    lo = sa if sa > sb else sb
                    eb = T[b[2]] + b[3]
                    hi = ea if ea < eb else eb
                    if lo < hi:
                        ka, kb = (self._arrival(x, a, T), a[0]), (self._arrival(x, b, T), b[0])
                        first, second = (a, b) if ka <= kb else (b, a)
                        key = (lo, x, first[0], second[0])
                        if bkey is None or key < bkey:
                            bkey, best = key, (first, second)
        return best

    def _arrival(self, x: str, user, T: Sequence[int]) -> int:
        """Start of ``user`` on ``x``; a successor taking over its stock arrives with its predecessor."""
        m = self.m
        tid = user[0]
        pred = m.network.trains[tid].stock_predecessor
        if pred is None or pred not in self.route or user[1] != m.blocks[(tid, self.route[tid])].first:
            return T[user[1]]
        last = m.blocks[(pred, self.route[pred])].occ[-1]
        return T[last[1]] if last[0] == x else T[user[1]]

    def cost(self, T: Sequence[int], pending: Iterable[str], min_cost: Mapping[str, float]) -> float:
        m = self.m
        total = 0.0
        for tid, rid in self.route.items():
            total += m.train_cost(tid, T, rid)
        for tid in pending:
            total += min_cost[tid]
        return total


def _ordered_arc(first, second) -> Tuple[int, int, int]:
    # first releases the section (end node + margin) before second enters
    return first[2], second[1], first[3]


class _Search:
    def __init__(self, model: _Model, budget: Budget, keep: int = 1, tolerance: float = 0.0):
        self.m = model
        self.budget = budget
        self.keep = max(1, keep)
        self.tol = tolerance
        self.pool: List[Tuple[float, int, tuple, Solution]] = []
        self.seen = set()
        self.counter = 0
        self.nodes = 0
        self.node_cap = budget.nodes
        self.deadline = None
        self.exhausted = False
        self.open_lb = INF

    # -- pool ---------------------------------------------------------------

    @property
    def best(self) -> float:
        return self.pool[0][0] if self.pool else INF

    def _prunes(self, bound: float) -> bool:
        best = self.best
        if self.keep == 1:
            return bound >= best - EPS
        if bound > best * (1.0 + self.tol) + EPS:
            return True
        return len(self.pool) >= self.keep and bound >= self.pool[-1][0] - EPS

    def _record(self, value: float, st: _State, T: Sequence[int]) -> None:
        m = self.m
        paths = {tid: m.path(tid, rid, T) for tid, rid in st.route.items()}
        sol = Solution(value, paths)
        sig = sol.signature()
        if sig in self.seen:
            return
        if self.keep == 1 and value >= self.best - EPS:
            return
        self.seen.add(sig)
        self.counter += 1
        self.pool.append((value, self.counter, sig, sol))
        self.pool.sort(key=lambda e: (e[0], e[1]))
        if self.keep > 1:
            limit = self.best * (1.0 + self.tol) + EPS
            self.pool = [e for e in self.pool if e[0] <= limit]
        del self.pool[self.keep:]

    # -- budget -------------------------------------------------------------

    def _out_of_budget(self) -> bool:
        if self.exhausted:
            return True
        if self.node_cap is not None and self.nodes >= self.node_cap:
            self.exhausted = True
        elif self.deadline is not None and (self.nodes & 31) == 0 and time.perf_counter() > self.deadline:
            self.exhausted = True
        return self.exhausted

    # -- search -------------------------------------------------------------

    def run(self, st: _State, T: List[int], pending: List[str], options: Mapping[str, List[str]],
            min_cost: Mapping[str, float], node_cap: Optional[int], deadline: Optional[float]) -> bool:
        """Depth-first search from the given root; True if it completed."""
        self.node_cap = node_cap
        self.deadline = deadline
        self.exhausted = False
        self.open_lb = INF
        old = sys.getrecursionlimit()
        sys.setrecursionlimit(max(old, 20000))
        try:
            self._dfs(st, T, pending, 0, options, min_cost, -INF)
        finally:
            sys.setrecursionlimit(old)
        return not self.exhausted

    def _dfs(self, st, T, pending, pi, options, min_cost, parent_bound) -> None:
        if self._out_of_budget():
            self.open_lb = min(self.open_lb, parent_bound)
            return
        self.nodes += 1
        rest = pending[pi:]
        bound = st.cost(T, rest, min_cost)
        if self._prunes(bound):
            return
        pair = st.conflict(T)
        if pair is None and not rest:
            pair = st.swap(T)
        if pair is not None:
            first, second = pair
            for a, b in ((first, second), (second, first)):
                if self.exhausted:
                    self.open_lb = min(self.open_lb, bound)
                    return
                u, v, w = _ordered_arc(a, b)
                T2 = T[:]
                if st.push(T2, u, v, w):
                    self._dfs(st, T2, pending, pi, options, min_cost, bound)
                st.pop_arc(u)
            return
        if rest:
            tid = rest[0]
            for rid in options[tid]:
                if self.exhausted:
                    self.open_lb = min(self.open_lb, bound)
                    return
                T2 = T[:]
                added = st.assign(T2, tid, rid)
                if added is None:
                    continue
                self._dfs(st, T2, pending, pi + 1, options, min_cost, bound)
                st.unassign(tid, added)
            return
        self._record(bound, st, T)


# -- instance preparation -----------------------------------------------------

def _route_options(inst: SubInstance) -> Dict[str, List[str]]:
    opts = {}
    for tid in sorted(inst.free_trains | inst.constrained_trains):
        st = inst.state.trains[tid]
        inp = inst.input_rttp.paths.get(tid)
        preferred = inp.route_id if inp is not None and inp.route_id in st.route_options else st.route_id
        if preferred not in st.route_options:
            preferred = st.route_options[0]
        if tid in inst.constrained_trains:
            opts[tid] = [preferred]
        else:
            opts[tid] = [preferred] + [r for r in st.route_options if r != preferred]
    return opts


def _fixed_order_arcs(model: _Model, st: _State, rttp: Rttp, among: Iterable[str]) -> List[Tuple[int, int, int]]:
    """Consecutive passing-order arcs of ``rttp`` restricted to ``among``."""
    among = set(among)
    arcs = []
    for x, order in sorted(rttp.passing_orders().items()):
        seq = []
        for tid in order:
            if tid not in among or tid not in st.route:
                continue
            for o in model.blocks[(tid, st.route[tid])].occ:
                if o[0] == x:
                    seq.append((tid,) + o[1:])
                    break
        for a, b in zip(seq, seq[1:]):
            arcs.append(_ordered_arc(a, b))
    return arcs


def _weights(inst: SubInstance) -> Dict[str, float]:
    return {t: inst.weight(t) for t in sorted(inst.free_trains | inst.constrained_trains)}


def _deadlines(inst: SubInstance) -> Dict[str, int]:
    out = {}
    for tid in inst.constrained_trains:
        p = inst.input_rttp.paths.get(tid)
        if p is not None:
            out[tid] = p.exit_time
    return out


def solve(inst: SubInstance, time_limit=None, keep: int = 1, tolerance: float = 0.0) -> SolveResult:
    """Minimise the (weighted) exit delay of the sub-instance.

    Phase one optimises passing orders with the routes of the input plan;
    its solutions warm-start phase two, which also branches over the route
    alternatives of free trains.  ``keep`` solutions within ``tolerance``
    (relative) of the best are returned.  Constrained trains keep their
    route, their mutual input orders and never exit later than in the input.
    """
    budget = Budget.of(time_limit)
    options = _route_options(inst)
    model = _Model(inst.network, inst.state, options, _weights(inst), _deadlines(inst))
    search = _Search(model, budget, keep, tolerance)
    start = time.perf_counter()
    deadline = start + budget.seconds if budget.seconds is not None else None
    free = sorted(inst.free_trains, key=lambda t: (model.init[model.blocks[(t, options[t][0])].first], t))
    constrained = sorted(inst.constrained_trains)

    def root(route_choice: Mapping[str, str]):
        st = _State(model)
        T = model.init[:]
        if not model.consistent:
            return None, None
        for tid in constrained:
            if st.assign(T, tid, route_choice[tid]) is None:
                return None, None
        for u, v, w in _fixed_order_arcs(model, st, inst.input_rttp, constrained):
            if not st.push(T, u, v, w):
                return None, None
        return st, T

    if budget.nodes == 0:
        st, T = root({t: options[t][0] for t in constrained})
        return SolveResult([], -INF if st is None else _root_bound(model, st, T, free, options), TIME_LIMIT, 0)

    multi = any(len(options[t]) > 1 for t in free)
    if multi:
        st, T = root({t: options[t][0] for t in constrained})
        if st is not None:
            for tid in free:
                if st.assign(T, tid, options[tid][0]) is None:
                    st = None
                    break
        if st is not None:
            cap = None if budget.nodes is None else max(1, budget.nodes // 2)
            half = None if deadline is None else start + budget.seconds / 2
            search.run(st, T, [], {}, {}, cap, half)

    st, T = root({t: options[t][0] for t in constrained})
    if st is None:
        return SolveResult([], INF, INFEASIBLE, search.nodes)
    min_cost = {t: min(model.train_cost(t, model.init, r) for r in options[t]) for t in free}
    options2 = {t: _order_options(model, t, options[t]) for t in free}
    remaining = None if budget.nodes is None else budget.nodes - search.nodes
    if remaining is not None and remaining <= 0:
        lb = min(search.best, _root_bound(model, st, T, free, options))
        return _result(search, lb, TIME_LIMIT)
    complete = search.run(st, T, free, options2, min_cost, remaining if remaining is None else search.nodes + remaining,
                          deadline)
    if complete:
        if not search.pool:
            return SolveResult([], INF, INFEASIBLE, search.nodes)
        return _result(search, search.best, OPTIMAL)
    return _result(search, min(search.best, search.open_lb), TIME_LIMIT)


def _order_options(model: _Model, tid: str, opts: List[str]) -> List[str]:
    first, rest = opts[0], opts[1:]
    rest = sorted(rest, key=lambda r: (model.train_cost(tid, model.init, r), r))
    return [first] + rest


def _root_bound(model, st, T, free, options) -> float:
    return st.cost(T, [], {}) + sum(min(model.train_cost(t, model.init, r) for r in options[t]) for t in free)


def _result(search: _Search, lb: float, status: str) -> SolveResult:
    sols = [e[3] for e in search.pool]
    if sols:
        lb = min(lb, sols[0].value)
    return SolveResult(sols, lb, status, search.nodes)


# -- greedy first-come scheduling ----------------------------------------------

def _greedy_complete(st: _State, T: List[int], max_steps: int = 100_000) -> List[int]:
    for _ in range(max_steps):
        pair = st.conflict(T)
        if pair is None:
            pair = st.swap(T)
        if pair is None:
            return T
        first, second = pair
        for a, b in ((first, second), (second, first)):
            u, v, w = _ordered_arc(a, b)
            T2 = T[:]
            if st.push(T2, u, v, w):
                T = T2
                break
            st.pop_arc(u)
        else:
            raise SolverError(f"cannot order {first[0]} and {second[0]}")
    raise SolverError("greedy scheduling did not converge")


def _plan_routes(network: Network, state: TrafficState, rttp: Optional[Rttp]) -> Dict[str, str]:
    routes = {}
    for tid, st in state.trains.items():
        rid = st.route_id
        if rttp is not None and tid in rttp.paths and rttp.paths[tid].route_id in st.route_options:
            rid = rttp.paths[tid].route_id
        if rid not in st.route_options:
            rid = st.route_options[0]
        routes[tid] = rid
    return routes


def greedy_plan(network: Network, state: TrafficState, rttp: Optional[Rttp] = None,
                keep_orders: bool = True) -> Rttp:
    """Plan every train of the traffic state with fixed routes.

    Passing orders of ``rttp`` are kept where still applicable
    (``keep_orders``); every remaining overlap is resolved first-come
    first-served in event order, ties by train id.  If the kept orders
    lead to an overlap that fits neither way, planning restarts without
    them.
    """
    if keep_orders and rttp is not None:
        try:
            return _greedy_plan(network, state, rttp, True)
        except SolverError:
            pass
    return _greedy_plan(network, state, rttp, False)


def _greedy_plan(network: Network, state: TrafficState, rttp: Optional[Rttp], keep_orders: bool) -> Rttp:
    routes = _plan_routes(network, state, rttp)
    model = _Model(network, state, {t: [r] for t, r in routes.items()}, {t: 1.0 for t in routes})
    st = _State(model)
    T = model.init[:]
    for tid in model.trains:
        if st.assign(T, tid, routes[tid]) is None:
            raise SolverError(f"cannot place {tid}")
    if keep_orders and rttp is not None:
        for u, v, w in _fixed_order_arcs(model, st, rttp, model.trains):
            T2 = T[:]
            if st.push(T2, u, v, w):
                T = T2
            else:
                st.pop_arc(u)
    T = _greedy_complete(st, T)
    return Rttp({tid: model.path(tid, routes[tid], T) for tid in model.trains}, state.now)


def project(network: Network, state: TrafficState, rttp: Rttp) -> Rttp:
    """Current plan re-timed on the traffic state (routes and orders kept)."""
    return greedy_plan(network, state, rttp, keep_orders=True)


# -- repair --------------------------------------------------------------------

def _short_term_orders(model: _Model, st: _State, rttp: Rttp, consensus, until: int):
    """Orders of pairs with a consensus train whose first passage is before ``until``."""
    arcs = []
    for x, order in sorted(rttp.passing_orders().items()):
        users = []
        for tid in order:
            for o in model.blocks[(tid, st.route[tid])].occ:
                if o[0] == x:
                    users.append((tid,) + o[1:])
                    break
        for i, a in enumerate(users):
            start = next(o.start for o in rttp.paths[a[0]].occupations if o.tds == x)
            if start > until:
                break
            for b in users[i + 1:]:
                if a[0] in consensus or b[0] in consensus:
                    arcs.append(_ordered_arc(a, b))
    return arcs


def repair(network: Network, state: TrafficState, rttp: Rttp, consensus_trains: Iterable[str],
           horizon: int, time_limit=None) -> Rttp:
    """Resolve overlaps of ``rttp`` keeping routes and short-term decisions.

    Events of consensus trains planned within ``[now, now + horizon]`` keep
    their times, and so does the order of every pair involving a consensus
    train whose first passage falls in that window.  Everything else is
    re-optimised for unweighted total delay.
    Raises RepairInfeasible if no conflict-free plan respects that.
    """
    from .errors import RepairInfeasible
    from .infra import overlapping_pairs

    if not overlapping_pairs(rttp.paths.values()):
        return rttp
    now = state.now
    routes = {t: [p.route_id] for t, p in rttp.paths.items()}
    frozen = {}
    for tid in sorted(consensus_trains):
        p = rttp.paths.get(tid)
        if p is None:
            continue
        st = state.trains[tid]
        if p.start_index != st.start_index:
            continue
        entries = [o.start for o in p.occupations] + [p.exit_time]
        frozen[tid] = {i: v for i, v in enumerate(entries) if v <= now + horizon}
    model = _Model(network, state, routes, {t: 1.0 for t in routes}, frozen=frozen)
    if not model.consistent:
        raise RepairInfeasible("frozen events are inconsistent with the traffic state")
    st = _State(model)
    T = model.init[:]
    for tid in model.trains:
        if st.assign(T, tid, routes[tid][0]) is None:
            raise RepairInfeasible(f"cannot place {tid}")
    for u, v, w in _short_term_orders(model, st, rttp, set(consensus_trains), now + horizon):
        if not st.push(T, u, v, w):
            raise RepairInfeasible("short-term passing orders cannot be kept")
    budget = Budget.of(time_limit)
    search = _Search(model, budget)
    deadline = time.perf_counter() + budget.seconds if budget.seconds is not None else None
    search.run(st, T, [], {}, {}, budget.nodes, deadline)
    if not search.pool:
        raise RepairInfeasible("no conflict-free repair found")
    return Rttp(search.pool[0][3].paths, now)


# -- instance files --------------------------------------------------------------

def instance_to_dict(inst: SubInstance) -> dict:
    from .infra import network_to_dict, rttp_to_dict

    return {
        "network": network_to_dict(inst.network),
        "state": inst.state.to_dict(),
        "free": sorted(inst.free_trains),
        "constrained": sorted(inst.constrained_trains),
        "input_rttp": rttp_to_dict(inst.input_rttp),
        "weights": {t: w for t, w in sorted(inst.weights.items())},
        "objective": inst.objective,
    }


def instance_from_dict(d: Mapping) -> SubInstance:
    from .infra import network_from_dict, rttp_from_dict

    return SubInstance(
        network_from_dict(d["network"]),
        TrafficState.from_dict(d["state"]),
        frozenset(d["free"]),
        frozenset(d.get("constrained", ())),
        rttp_from_dict(d["input_rttp"]),
        {t: float(w) for t, w in d.get("weights", {}).items()},
        d.get("objective", WEIGHTED),
    )


def result_to_dict(res: SolveResult) -> dict:
    from .infra import path_to_dict

    return {
        "status": res.status,
        "lower_bound": None if math.isinf(res.lower_bound) else res.lower_bound,
        "gap": res.gap,
        "nodes": res.nodes,
        "solutions": [
            {"value": s.value, "paths": {t: path_to_dict(p) for t, p in sorted(s.paths.items())}}
            for s in res.solutions
        ],
    }
