"""Hypothesis compatibility and voter-model selection.

Every train repeatedly looks at the current choice of a few random
neighbours and keeps its own hypothesis if it agrees with all of them;
otherwise it switches to the hypothesis agreeing with most of them, the
cheapest on ties.  The sample size starts at the full neighbourhood and
shrinks by one per iteration down to one.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, List, Mapping, Optional, Sequence, Union

import networkx as nx

from .hypotheses import Hypothesis
from .infra import Network, paths_conflict
from .perception import components

DEFAULT_MAX_ITERATIONS = 100_000


def check_compatibility(h1: Hypothesis, h2: Hypothesis) -> bool:
    """True iff the two origin trains' own paths never overlap."""
    return paths_conflict(h1.path, h2.path) is None


def handoff_consistent(h1: Hypothesis, h2: Hypothesis, network: Network) -> bool:
    """For stock-linked origins: the successor starts exactly when the predecessor leaves."""
    a, b = network.trains[h1.origin], network.trains[h2.origin]
    if a.stock_successor == b.id:
        return h1.path.exit_time == h2.path.entry_time
    if b.stock_successor == a.id:
        return h2.path.exit_time == h1.path.entry_time
    return True


def build_hypothesis_graph(all_h: Mapping[str, Sequence[Hypothesis]], g_i: nx.Graph,
                           network: Optional[Network] = None) -> nx.Graph:
    """N-partite graph: nodes are hypothesis ids, edges join compatible ones of neighbours.

    With a network, hypotheses of stock-linked trains must also agree on
    the handoff time.
    """
    g = nx.Graph()
    for t in sorted(all_h):
        for h in all_h[t]:
            g.add_node(h.id, train=t, cost=h.cost)
    for a, b in sorted(tuple(sorted(e)) for e in g_i.edges):
        for h1 in all_h.get(a, ()):
            for h2 in all_h.get(b, ()):
                if not check_compatibility(h1, h2):
                    continue
                if network is not None and not handoff_consistent(h1, h2, network):
                    continue
                g.add_edge(h1.id, h2.id)
    return g


def chi(h: Hypothesis, sampled: Sequence[Hypothesis], g_h: nx.Graph) -> int:
    """Number of sampled selections compatible with ``h``."""
    return sum(1 for s in sampled if g_h.has_edge(h.id, s.id))


@dataclass(frozen=True)
class ConsensusConfig:
    max_iterations: int = DEFAULT_MAX_ITERATIONS
    # "adaptive" for max(1, |N| - i), or a fixed sample size
    k_schedule: Union[str, int] = "adaptive"
    seed: Union[int, str] = 0
    trace: bool = False

    def sample_size(self, n_neighbors: int, iteration: int) -> int:
        if self.k_schedule == "adaptive":
            k = max(1, n_neighbors - iteration)
        else:
            k = int(self.k_schedule)
        return min(k, n_neighbors)


@dataclass
class ConsensusOutcome:
    selection: Dict[str, Hypothesis]
    converged_components: List[FrozenSet[str]]
    components: List[FrozenSet[str]]
    iterations: int = 0
    immediate: bool = False
    switches: Dict[str, int] = field(default_factory=dict)
    decision_steps: Dict[str, int] = field(default_factory=dict)
    trace: List[dict] = field(default_factory=list)

    @property
    def converged(self) -> bool:
        return len(self.converged_components) == len(self.components)

    def stats(self) -> dict:
        return {
            "iterations": self.iterations,
            "immediate": self.immediate,
            "converged": self.converged,
            "components": len(self.components),
            "converged_components": len(self.converged_components),
            "switches": sum(self.switches.values()),
            "decision_steps": sum(self.decision_steps.values()),
        }


def _component_converged(comp, g_i: nx.Graph, g_h: nx.Graph, sel: Mapping[str, Hypothesis]) -> bool:
    for t in comp:
        for n in g_i.neighbors(t):
            if not g_h.has_edge(sel[t].id, sel[n].id):
                return False
    return True


def run_consensus(g_i: nx.Graph, g_h: nx.Graph, all_h: Mapping[str, Sequence[Hypothesis]],
                  cfg: ConsensusConfig = ConsensusConfig()) -> ConsensusOutcome:
    """Voter-model selection, run independently per interaction-graph component."""
    sel = {t: min(all_h[t], key=Hypothesis.key) for t in sorted(g_i.nodes)}
    comps = components(g_i)
    converged: List[FrozenSet[str]] = []
    switches = {t: 0 for t in sel}
    steps = {t: 0 for t in sel}
    trace: List[dict] = []
    total_iters = 0
    immediate = True
    for comp in comps:
        order = sorted(comp)
        sweep_rng = random.Random(f"{cfg.seed}:{order[0]}")
        rngs = {t: random.Random(f"{cfg.seed}:{t}") for t in order}
        nbrs = {t: sorted(g_i.neighbors(t)) for t in order}
        it = 0
        ok = _component_converged(comp, g_i, g_h, sel)
        if not ok:
            immediate = False
        while not ok and it < cfg.max_iterations:
            perm = order[:]
            sweep_rng.shuffle(perm)
            for t in perm:
                ns = nbrs[t]
                if not ns:
                    continue
                steps[t] += 1
                k = cfg.sample_size(len(ns), it)
                sample = [sel[n] for n in rngs[t].sample(ns, k)]
                cur = sel[t]
                counts = {h.id: chi(h, sample, g_h) for h in all_h[t]}
                if counts[cur.id] == len(sample):
                    continue
                best = min(all_h[t], key=lambda h: (-counts[h.id], h.cost, h.id))
                if best.id != cur.id:
                    sel[t] = best
                    switches[t] += 1
                if cfg.trace:
                    trace.append({"iteration": it, "train": t, "k": k, "chi": counts,
                                  "from": cur.id, "to": best.id})
            it += 1
            ok = _component_converged(comp, g_i, g_h, sel)
        if ok:
            converged.append(comp)
        total_iters = max(total_iters, it)
    return ConsensusOutcome(sel, converged, comps, total_iters, immediate, switches, steps, trace)
