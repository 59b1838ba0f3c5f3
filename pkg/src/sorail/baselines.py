"""Comparison traffic management callbacks: centralised optimisation and FCFS."""

from __future__ import annotations

import logging
from typing import Optional

from .infra import Network, Rttp
from .simulator import TrafficState
from .solver import UNWEIGHTED, Budget, SolverError, SubInstance, greedy_plan, project, solve

log = logging.getLogger(__name__)


class CenTms:
    """Optimise every scoped train at once for unweighted total delay."""

    name = "cen"

    def __init__(self, network: Network, budget: Budget = Budget(nodes=2000)):
        self.network = network
        self.budget = budget
        self.last_diagnostics: Optional[dict] = None

    def __call__(self, ts: TrafficState, rttp: Rttp) -> Rttp:
        if self.budget.nodes == 0:
            self.last_diagnostics = {"status": "skipped"}
            return rttp
        try:
            base = project(self.network, ts, rttp)
        except SolverError as exc:
            self.last_diagnostics = {"error": exc.code}
            return rttp
        inst = SubInstance(self.network, ts, frozenset(ts.trains), frozenset(), base, objective=UNWEIGHTED)
        res = solve(inst, self.budget)
        self.last_diagnostics = {"status": res.status, "nodes": res.nodes, "gaps": [res.gap]}
        if res.best is None:
            log.info("cen found no plan at t=%s (%s); keeping the input", ts.now, res.status)
            return rttp
        return Rttp(dict(res.best.paths), ts.now)


class FcfsTms:
    """Routes as installed; every section served in order of earliest arrival."""

    name = "fcfs"

    def __init__(self, network: Network):
        self.network = network
        self.last_diagnostics: Optional[dict] = None

    def __call__(self, ts: TrafficState, rttp: Rttp) -> Rttp:
        try:
            return greedy_plan(self.network, ts, rttp, keep_orders=False)
        except SolverError as exc:
            log.warning("fcfs planning failed at t=%s: %s", ts.now, exc)
            self.last_diagnostics = {"error": exc.code}
            return rttp


def cen_tms(network: Network, ts: TrafficState, rttp: Rttp, time_limit=None) -> Rttp:
    return CenTms(network, Budget.of(time_limit) if time_limit is not None else Budget(nodes=2000))(ts, rttp)


def fcfs_tms(network: Network, ts: TrafficState, rttp: Rttp) -> Rttp:
    return FcfsTms(network)(ts, rttp)
