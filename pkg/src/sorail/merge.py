"""Installing consensus choices into the plan, with a consistency check and repair."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List, Mapping, Sequence, Set, Tuple

from .consensus import ConsensusOutcome
from .errors import RepairInfeasible
from .infra import Network, Rttp, overlapping_pairs
from .simulator import TrafficState
from .solver import Budget, repair

log = logging.getLogger(__name__)


@dataclass
class MergeReport:
    output: Rttp
    replaced_trains: Set[str] = field(default_factory=set)
    overlaps_found: List[Tuple[Tuple[str, str], str]] = field(default_factory=list)
    repaired: bool = False
    fallback: bool = False

    def to_dict(self) -> dict:
        return {
            "replaced_trains": sorted(self.replaced_trains),
            "overlaps_found": [[list(p), x] for p, x in self.overlaps_found],
            "repaired": self.repaired,
            "fallback": self.fallback,
        }


def merge_selected(network: Network, ts: TrafficState, current: Rttp, outcome: ConsensusOutcome,
                   horizon: int, repair_budget: Budget = Budget(nodes=5000)) -> MergeReport:
    """Replace each converged train's path by the one in its selected hypothesis.

    ``current`` is the installed plan projected on ``ts``.  Overlaps left by
    the merge are repaired; if repair fails the current plan is kept.
    """
    paths = dict(current.paths)
    replaced = set()
    for comp in outcome.converged_components:
        for t in sorted(comp):
            new = outcome.selection[t].path
            if paths.get(t) != new:
                replaced.add(t)
            paths[t] = new
    merged = Rttp(paths, ts.now)
    overlaps = overlapping_pairs(merged.paths.values())
    if not overlaps:
        return MergeReport(merged, replaced)
    consensus = {t for comp in outcome.converged_components for t in comp}
    try:
        fixed = repair(network, ts, merged, consensus, horizon, repair_budget)
    except RepairInfeasible as exc:
        log.info("repair failed at t=%s: %s", ts.now, exc)
        return MergeReport(current, replaced, overlaps, repaired=False, fallback=True)
    return MergeReport(fixed, replaced, overlaps, repaired=True)
