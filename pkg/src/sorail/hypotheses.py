"""Per-train hypothesis generation and one-hop sharing.

A hypothesis is a train's proposal for itself and every other train in the
traffic state.  The proposing train knows only its own delay weight; the
others are guessed from their category.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence

import networkx as nx

from .infra import Network, Rttp, TimedPath, guess_weight
from .simulator import TrafficState
from .solver import INFEASIBLE, WEIGHTED, Budget, SolveResult, SubInstance, solve

GENERATED, SHARED, CURRENT = "generated", "shared", "current_rttp"


@dataclass(frozen=True)
class Hypothesis:
    id: str
    origin: str
    scope: FrozenSet[str]
    plan: Mapping[str, TimedPath]
    cost: float
    provenance: str
    source: Optional[str] = None

    @property
    def path(self) -> TimedPath:
        return self.plan[self.origin]

    def key(self):
        return (self.cost, self.id)


@dataclass(frozen=True)
class HypothesisConfig:
    tolerance_pct: float = 5.0
    max_hypotheses: int = 2
    budget: Budget = Budget(nodes=2000)


@dataclass
class GenerationResult:
    hypotheses: List[Hypothesis]
    solve_result: Optional[SolveResult]
    degraded: bool = False


WeightFn = Callable[[str, str], float]


def private_weights(network: Network, owner: str, trains: Iterable[str]) -> Dict[str, float]:
    """Weights as seen by ``owner``: its own exactly, others by category midpoint."""
    out = {}
    for t in trains:
        train = network.trains[t]
        out[t] = train.weight if t == owner else guess_weight(train.category)
    return out


def plan_cost(network: Network, plan: Mapping[str, TimedPath], weights: Mapping[str, float]) -> float:
    total = 0.0
    for t in sorted(plan):
        p = plan[t]
        late = p.exit_time - network.trains[t].scheduled_exit
        if late > 0:
            total += weights[t] * late
    return total


def _same_plan(a: Mapping[str, TimedPath], b: Mapping[str, TimedPath]) -> bool:
    return a.keys() == b.keys() and all(a[t] == b[t] for t in a)


def generate_hypotheses(network: Network, ts: TrafficState, current: Rttp, focal: str,
                        neighbors: Iterable[str], cfg: HypothesisConfig = HypothesisConfig()) -> GenerationResult:
    """Solve the focal train's sub-instance and keep the best few plans.

    ``current`` is the installed plan already projected on ``ts``; its
    restriction to the scope is always kept as one hypothesis.  Up to
    ``max_hypotheses - 1`` solver plans within ``tolerance_pct`` of the best
    are kept besides it.
    """
    scope = frozenset(ts.trains)
    free = (frozenset(neighbors) | {focal}) & scope
    constrained = scope - free
    weights = private_weights(network, focal, scope)
    base = {t: current.paths[t] for t in sorted(scope)}
    hyps = [Hypothesis(f"{focal}/c", focal, scope, base, plan_cost(network, base, weights), CURRENT)]
    inst = SubInstance(network, ts, free, constrained, current, weights, WEIGHTED)
    keep = max(1, cfg.max_hypotheses - 1)
    res = solve(inst, cfg.budget, keep=keep, tolerance=cfg.tolerance_pct / 100.0)
    if res.status == INFEASIBLE or not res.solutions:
        return GenerationResult(hyps, res, degraded=True)
    for k, sol in enumerate(res.solutions):
        plan = dict(base)
        plan.update(sol.paths)
        if any(_same_plan(plan, h.plan) for h in hyps):
            continue
        hyps.append(Hypothesis(f"{focal}/g{k}", focal, scope, plan, plan_cost(network, plan, weights), GENERATED))
    hyps.sort(key=Hypothesis.key)
    return GenerationResult(hyps, res, degraded=False)


def share_hypotheses(network: Network, all_h: Mapping[str, Sequence[Hypothesis]], g_i: nx.Graph,
                     current: Rttp) -> Dict[str, List[Hypothesis]]:
    """Give every train copies of its neighbours' own hypotheses.

    Copies are completed over the receiver's scope from ``current``,
    re-costed with the receiver's weights and skipped when equal to a plan
    the receiver already holds.  Received hypotheses are not passed on.
    """
    out: Dict[str, List[Hypothesis]] = {}
    for t in sorted(all_h):
        own = list(all_h[t])
        if not own:
            out[t] = own
            continue
        scope = own[0].scope
        weights = private_weights(network, t, scope)
        held = [h.plan for h in own]
        received = []
        for n in sorted(g_i.neighbors(t)) if t in g_i else ():
            for k, h in enumerate(all_h.get(n, ())):
                if h.provenance == SHARED or t not in h.plan:
                    continue
                plan = {x: h.plan[x] if x in h.plan else current.paths[x] for x in sorted(scope)}
                if any(_same_plan(plan, p) for p in held):
                    continue
                held.append(plan)
                received.append(Hypothesis(f"{t}/s:{n}:{k}", t, scope, plan,
                                           plan_cost(network, plan, weights), SHARED, source=n))
        out[t] = sorted(own + received, key=Hypothesis.key)
    return out
