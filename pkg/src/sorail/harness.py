"""Self-organising TMS pipeline, run metrics and batch experiments."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import dataclass
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import networkx as nx

from .baselines import CenTms, FcfsTms
from .consensus import ConsensusConfig, ConsensusOutcome, build_hypothesis_graph, run_consensus
from .hypotheses import Hypothesis, HypothesisConfig, generate_hypotheses, share_hypotheses
from .infra import Network, Rttp, rttp_from_dict
from .merge import merge_selected
from .perception import NeighborhoodConfig, build_interaction_graph, focal_trains, identify_neighbors, predict_occupations
from .scenario import Scenario
from .simulator import DEFAULT_LOOKAHEAD, DEFAULT_PERIOD, SimulationLog, TrafficState, log_is_safe, run_closed_loop
from .solver import Budget, SolverError, project

log = logging.getLogger(__name__)

METRICS_VERSION = 1


@dataclass(frozen=True)
class SOConfig:
    horizon: int = 900
    strict_neighbors: bool = True
    tolerance_pct: float = 5.0
    max_hypotheses: int = 2
    generation_budget: Budget = Budget(nodes=1000)
    repair_budget: Budget = Budget(nodes=5000)
    max_iterations: int = 100_000
    k_schedule: object = "adaptive"
    seed: int = 0
    regret_limit: int = 200_000


class SoTms:
    """Perception, generation, sharing, consensus and merge for one TS."""

    name = "so"

    def __init__(self, network: Network, cfg: SOConfig = SOConfig()):
        self.network = network
        self.cfg = cfg
        self.last_diagnostics: Optional[dict] = None
        # per call: (interaction graph, hypotheses, hypothesis graph, outcome)
        self.records: List[Tuple[nx.Graph, Dict[str, List[Hypothesis]], nx.Graph, ConsensusOutcome]] = []

    def __call__(self, ts: TrafficState, rttp: Rttp) -> Rttp:
        cfg = self.cfg
        net = self.network
        try:
            current = project(net, ts, rttp)
        except SolverError as exc:
            log.warning("projection failed at t=%s: %s", ts.now, exc)
            self.last_diagnostics = {"error": exc.code}
            return rttp
        focal = focal_trains(ts, cfg.horizon)
        if not focal:
            self.last_diagnostics = {"focal": 0}
            return current
        occ = predict_occupations(net, ts)
        ncfg = NeighborhoodConfig(cfg.horizon, cfg.strict_neighbors)
        nbhd = {t: identify_neighbors(t, occ, ncfg, ts.now, net) for t in focal}
        g_i = build_interaction_graph(nbhd)
        hcfg = HypothesisConfig(cfg.tolerance_pct, cfg.max_hypotheses, cfg.generation_budget)
        own: Dict[str, List[Hypothesis]] = {}
        gaps, degraded = [], []
        for t in focal:
            res = generate_hypotheses(net, ts, current, t, nbhd[t], hcfg)
            own[t] = res.hypotheses
            if res.degraded:
                degraded.append(t)
            elif res.solve_result is not None:
                gaps.append(res.solve_result.gap)
        all_h = share_hypotheses(net, own, g_i, current)
        g_h = build_hypothesis_graph(all_h, g_i, net)
        ccfg = ConsensusConfig(cfg.max_iterations, cfg.k_schedule, f"{cfg.seed}:{ts.now}")
        outcome = run_consensus(g_i, g_h, all_h, ccfg)
        report = merge_selected(net, ts, current, outcome, cfg.horizon, cfg.repair_budget)
        regrets = compute_regret(g_h, g_i, outcome, all_h, cfg.regret_limit)
        self.records.append((g_i, all_h, g_h, outcome))
        self.last_diagnostics = {
            "focal": len(focal),
            "interaction_edges": sorted([sorted(e) for e in g_i.edges]),
            "hypotheses": sum(len(v) for v in all_h.values()),
            "degraded": degraded,
            "gaps": gaps,
            "consensus": outcome.stats(),
            "regret": regrets,
            "merge": report.to_dict(),
            "selection": {t: h.id for t, h in sorted(outcome.selection.items())},
        }
        return report.output


# -- regret ----------------------------------------------------------------------

def _best_assignment(comp: Sequence[str], g_i: nx.Graph, g_h: nx.Graph,
                     all_h: Mapping[str, Sequence[Hypothesis]]) -> Optional[float]:
    order = sorted(comp, key=lambda t: (-g_i.degree(t), t))
    best = [math.inf]
    chosen: Dict[str, Hypothesis] = {}

    def rec(i: int, cost: float) -> None:
        if cost >= best[0]:
            return
        if i == len(order):
            best[0] = cost
            return
        t = order[i]
        for h in sorted(all_h[t], key=Hypothesis.key):
            if all(g_h.has_edge(h.id, chosen[n].id) for n in g_i.neighbors(t) if n in chosen):
                chosen[t] = h
                rec(i + 1, cost + h.cost)
                del chosen[t]

    rec(0, 0.0)
    return None if best[0] == math.inf else best[0]


def compute_regret(g_h: nx.Graph, g_i: nx.Graph, outcome: ConsensusOutcome,
                   all_h: Mapping[str, Sequence[Hypothesis]], limit: int = 200_000) -> List[dict]:
    """Per converged component: selected cost against the best compatible assignment.

    Components whose assignment space exceeds ``limit`` are reported as
    unavailable; regret is infinite when the optimum costs nothing but the
    selection does not.
    """
    out = []
    for comp in outcome.converged_components:
        size = 1
        for t in comp:
            size *= max(1, len(all_h[t]))
        rec = {"trains": sorted(comp), "assignments": size}
        if size > limit:
            rec.update(available=False)
            out.append(rec)
            continue
        opt = _best_assignment(sorted(comp), g_i, g_h, all_h)
        selected = sum(outcome.selection[t].cost for t in sorted(comp))
        if opt is None:
            rec.update(available=False)
        else:
            if abs(selected - opt) <= 1e-9 * max(1.0, abs(opt)):
                regret = 0.0
            elif opt == 0:
                regret = math.inf
            else:
                regret = (selected - opt) / opt * 100.0
            rec.update(available=True, selected=selected, optimum=opt, regret=regret, optimal=regret == 0.0)
        out.append(rec)
    return out


# -- metrics ---------------------------------------------------------------------

def count_quasi_conflicts(rttp: Rttp, delays: Mapping[str, float]) -> Tuple[int, set]:
    """Delayed train pairs that follow each other directly on some section.

    A pair counts when at least one of the two has a positive delay; only
    the first section (by passage time) where they are consecutive is taken.
    """
    first: Dict[Tuple[str, str], Tuple[int, str]] = {}
    users: Dict[str, List[Tuple[int, str]]] = {}
    for tid, p in rttp.paths.items():
        for o in p.occupations:
            users.setdefault(o.tds, []).append((o.start, tid))
    for x, lst in users.items():
        lst.sort()
        for (s1, a), (_, b) in zip(lst, lst[1:]):
            if a == b or not (delays.get(a, 0) > 0 or delays.get(b, 0) > 0):
                continue
            pair = tuple(sorted((a, b)))
            if pair not in first or (s1, x) < first[pair]:
                first[pair] = (s1, x)
    return len(first), set(first)


def planned_delays(network: Network, rttp: Rttp) -> Dict[str, int]:
    return {t: max(0, p.exit_time - network.trains[t].scheduled_exit) for t, p in rttp.paths.items()}


@dataclass
class RunMetrics:
    scenario: str
    seed: int
    tms: str
    status: str = "ok"
    error: str = ""
    n_trains: int = 0
    total_weighted_delay: Optional[float] = None
    total_delay: Optional[int] = None
    improvement_vs_fcfs_weighted: Optional[float] = None
    improvement_vs_fcfs: Optional[float] = None
    improvement_vs_cen_weighted: Optional[float] = None
    improvement_vs_cen: Optional[float] = None
    quasi_conflicts: Optional[int] = None
    quasi_conflict_pairs: Optional[int] = None
    mean_gap: Optional[float] = None
    max_gap: Optional[float] = None
    repair_frequency: Optional[float] = None
    tms_calls: Optional[int] = None
    rejected_plans: Optional[int] = None
    consensus_calls: Optional[int] = None
    consensus_immediate: Optional[int] = None
    consensus_optimal: Optional[int] = None
    consensus_converged: Optional[int] = None
    decision_steps: Optional[int] = None
    max_regret: Optional[float] = None
    mean_regret: Optional[float] = None
    safe: Optional[bool] = None


FIELDS = list(RunMetrics.__dataclass_fields__)


def improvement(baseline: Optional[float], value: Optional[float]) -> Optional[float]:
    if baseline is None or value is None or baseline == 0:
        return None
    return (baseline - value) / baseline * 100.0


def collect_metrics(scenario: Scenario, log_: SimulationLog, name: str, tms: str) -> RunMetrics:
    net = scenario.network
    m = RunMetrics(name, scenario.seed, tms, n_trains=len(net.trains))
    delays = {t: rec["delay"] for t, rec in log_.trains.items()}
    m.total_delay = int(sum(delays.values()))
    m.total_weighted_delay = round(sum(net.trains[t].weight * d for t, d in delays.items()), 6)
    q_count, q_pairs = 0, set()
    gaps, calls, repairs, rejected = [], 0, 0, 0
    c_calls = c_imm = c_opt = c_conv = steps = 0
    regrets: List[float] = []
    for it in log_.iterations:
        rttp = rttp_from_dict(it["rttp"])
        n, pairs = count_quasi_conflicts(rttp, planned_delays(net, rttp))
        q_count += n
        q_pairs |= pairs
        rejected += bool(it.get("rejected"))
        diag = it.get("diagnostics")
        if diag is None:
            continue
        calls += 1
        gaps.extend(diag.get("gaps", []))
        if "merge" in diag:
            repairs += diag["merge"]["repaired"] or diag["merge"]["fallback"]
        if "consensus" in diag:
            c = diag["consensus"]
            c_calls += 1
            c_imm += c["immediate"]
            c_conv += c["converged"]
            steps += c["decision_steps"]
            avail = [r for r in diag["regret"] if r.get("available")]
            if avail and len(avail) == len(diag["regret"]):
                c_opt += all(r["optimal"] for r in avail)
            regrets.extend(r["regret"] for r in avail)
    m.quasi_conflicts, m.quasi_conflict_pairs = q_count, len(q_pairs)
    m.tms_calls, m.rejected_plans = calls, rejected
    if gaps:
        m.mean_gap = round(sum(gaps) / len(gaps), 6)
        m.max_gap = round(max(gaps), 6)
    if tms == "so":
        m.repair_frequency = round(repairs / calls, 6) if calls else 0.0
        m.consensus_calls, m.consensus_immediate = c_calls, c_imm
        m.consensus_optimal, m.consensus_converged, m.decision_steps = c_opt, c_conv, steps
        if regrets:
            m.max_regret = round(max(regrets), 6)
            m.mean_regret = round(sum(regrets) / len(regrets), 6)
    m.safe = log_is_safe(log_) and rejected == 0
    return m


def make_tms(name: str, network: Network, so_cfg: SOConfig = SOConfig(), cen_budget: Budget = Budget(nodes=2000)):
    if name == "so":
        return SoTms(network, so_cfg)
    if name == "cen":
        return CenTms(network, cen_budget)
    if name == "fcfs":
        return FcfsTms(network)
    raise ValueError(f"unknown TMS {name!r}")


@dataclass(frozen=True)
class BatchConfig:
    period: int = DEFAULT_PERIOD
    lookahead: int = DEFAULT_LOOKAHEAD
    so: SOConfig = SOConfig()
    cen_budget: Budget = Budget(nodes=2000)


def run_one(scenario: Scenario, tms_name: str, cfg: BatchConfig = BatchConfig(), name: str = "") -> Tuple[SimulationLog, RunMetrics, object]:
    tms = make_tms(tms_name, scenario.network, cfg.so, cfg.cen_budget)
    lg = run_closed_loop(scenario, tms, cfg.period, cfg.lookahead)
    return lg, collect_metrics(scenario, lg, name, tms_name), tms


def batch_run(scenarios: Iterable[Tuple[str, Scenario]], tms_names: Sequence[str],
              cfg: BatchConfig = BatchConfig()) -> List[RunMetrics]:
    """One metrics row per (scenario, TMS); a failing run becomes an error row."""
    rows: List[RunMetrics] = []
    for name, sc in scenarios:
        block: Dict[str, RunMetrics] = {}
        for t in tms_names:
            try:
                _, m, _ = run_one(sc, t, cfg, name)
            except Exception as exc:  # recorded, the batch goes on
                code = getattr(exc, "code", type(exc).__name__)
                m = RunMetrics(name, sc.seed, t, status="error", error=f"{code}: {exc}")
            block[t] = m
            rows.append(m)
        add_improvements(block)
    return rows


def add_improvements(block: Mapping[str, RunMetrics]) -> None:
    for t, m in block.items():
        if t == "fcfs" or m.status != "ok":
            continue
        for base in ("fcfs", "cen"):
            b = block.get(base)
            if b is None or b is m or b.status != "ok":
                continue
            setattr(m, f"improvement_vs_{base}_weighted", improvement(b.total_weighted_delay, m.total_weighted_delay))
            setattr(m, f"improvement_vs_{base}", improvement(b.total_delay, m.total_delay))


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return "inf" if math.isinf(v) else f"{v:.6f}"
    return str(v)


def metrics_csv(rows: Iterable[RunMetrics]) -> str:
    buf = io.StringIO()
    buf.write(f"# sorail-metrics v{METRICS_VERSION}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(FIELDS)
    for r in rows:
        w.writerow([_fmt(getattr(r, f)) for f in FIELDS])
    return buf.getvalue()


def read_metrics_csv(text: str) -> List[Dict[str, str]]:
    lines = [ln for ln in text.splitlines() if not ln.startswith("#")]
    return list(csv.DictReader(lines))


def log_json(lg: SimulationLog) -> str:
    return json.dumps(lg.to_dict(), sort_keys=True, indent=None, separators=(",", ":"))
