"""Traffic prediction, neighbourhoods and the interaction graph.

Each train predicts when it could occupy every section on every route still
open to it, assuming it runs freely from where it stands.  Two trains are
neighbours when both may use a common section within the horizon.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, List, Mapping, Optional, Set, Tuple

import networkx as nx

from .errors import NoRoute
from .infra import Network, accumulate
from .simulator import TrafficState

DEFAULT_HORIZON = 900


@dataclass(frozen=True)
class NeighborhoodConfig:
    horizon: int = DEFAULT_HORIZON
    # require the other train's interval inside the horizon as well
    strict: bool = True

    def __post_init__(self):
        if self.horizon <= 0:
            raise ValueError("horizon must be positive")


@dataclass
class OccupationMap:
    """Per TDS, every predicted ``(train, route, start, end)`` occupation."""

    entries: Dict[str, List[Tuple[str, str, int, int]]] = field(default_factory=dict)

    def of_train(self, tid: str) -> Dict[str, List[Tuple[int, int]]]:
        out: Dict[str, List[Tuple[int, int]]] = defaultdict(list)
        for x, lst in self.entries.items():
            for t, _, s, e in lst:
                if t == tid:
                    out[x].append((s, e))
        return dict(out)

    def trains(self) -> Set[str]:
        return {t for lst in self.entries.values() for t, *_ in lst}


def predict_occupations(network: Network, ts: TrafficState) -> OccupationMap:
    """Free-run occupations of every scoped train over all its route options."""
    entries: Dict[str, List[Tuple[str, str, int, int]]] = defaultdict(list)
    seen = set()
    for tid in sorted(ts.trains):
        st = ts.trains[tid]
        if not st.route_options:
            raise NoRoute(f"train {tid} has no feasible route")
        train = network.trains[tid]
        for rid in st.route_options:
            route = train.route(rid)
            if st.inside:
                path = accumulate(network, train, route, st.index, st.entered_at, not_before=ts.now)
            else:
                path = accumulate(network, train, route, 0, max(st.entered_at, ts.now))
            for o in path.occupations:
                # shared prefixes of different routes give the same interval once
                key = (o.tds, tid, o.start, o.end)
                if key in seen:
                    continue
                seen.add(key)
                entries[o.tds].append((tid, rid, o.start, o.end))
    return OccupationMap({x: sorted(v, key=lambda e: (e[2], e[0], e[1])) for x, v in entries.items()})


def focal_trains(ts: TrafficState, horizon: int = DEFAULT_HORIZON) -> List[str]:
    """Trains in the area or expected to enter within ``horizon``."""
    return sorted(t for t, s in ts.trains.items() if s.inside or s.entered_at <= ts.now + horizon)


def _in_window(start: int, end: int, lo: int, hi: int) -> bool:
    return start <= hi and end > lo


def raw_neighbors(t: str, occ: OccupationMap, cfg: NeighborhoodConfig, now: int) -> Set[str]:
    lo, hi = now, now + cfg.horizon
    out = set()
    for x, lst in occ.entries.items():
        mine = [(s, e) for tid, _, s, e in lst if tid == t]
        if not any(_in_window(s, e, lo, hi) for s, e in mine):
            continue
        for tid, _, s, e in lst:
            if tid == t or tid in out:
                continue
            if not cfg.strict or _in_window(s, e, lo, hi):
                out.add(tid)
    return out


def identify_neighbors(t: str, occ: OccupationMap, cfg: NeighborhoodConfig, now: int,
                       network: Optional[Network] = None) -> Set[str]:
    """Neighbours of ``t``, merged over its rolling-stock group when a network is given."""
    group = [t]
    if network is not None:
        present = occ.trains()
        group = [g for g in network.stock_group(t) if g in present or g == t]
    out: Set[str] = set()
    for g in group:
        out |= raw_neighbors(g, occ, cfg, now)
    out |= set(group)
    out.discard(t)
    return out


def neighborhoods(network: Network, ts: TrafficState, cfg: NeighborhoodConfig,
                  occ: Optional[OccupationMap] = None) -> Dict[str, Set[str]]:
    occ = occ or predict_occupations(network, ts)
    return {t: identify_neighbors(t, occ, cfg, ts.now, network) for t in focal_trains(ts, cfg.horizon)}


def build_interaction_graph(nbhd: Mapping[str, Iterable[str]]) -> nx.Graph:
    """Undirected graph over the focal trains; an edge if either lists the other."""
    g = nx.Graph()
    g.add_nodes_from(sorted(nbhd))
    for t, ns in sorted(nbhd.items()):
        for n in sorted(ns):
            if n != t and n in nbhd:
                g.add_edge(t, n)
    return g


def components(g: nx.Graph) -> List[FrozenSet[str]]:
    return sorted((frozenset(c) for c in nx.connected_components(g)), key=min)
