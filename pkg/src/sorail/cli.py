"""Command line: ``sorail {gen,run,batch,solve,report,toy}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from typing import List, Optional

from .errors import SorailError
from .harness import (
    BatchConfig,
    SOConfig,
    add_improvements,
    batch_run,
    log_json,
    metrics_csv,
    read_metrics_csv,
    run_one,
)
from .infra import load_network, network_to_dict
from .scenario import build_scenario, load_scenario, save_scenario
from .solver import Budget, instance_from_dict, result_to_dict, solve


def _write(path: Optional[str], text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text if text.endswith("\n") else text + "\n")
    else:
        with open(path, "w") as fh:
            fh.write(text)


def _batch_config(args) -> BatchConfig:
    so = SOConfig(horizon=args.horizon, tolerance_pct=args.tolerance, max_hypotheses=args.max_hypotheses,
                  generation_budget=Budget(nodes=args.nodes), repair_budget=Budget(nodes=args.repair_nodes),
                  seed=args.seed, strict_neighbors=not args.loose_neighbors)
    return BatchConfig(args.period, args.lookahead, so, Budget(nodes=args.cen_nodes))


def cmd_gen(args) -> int:
    net = load_network(args.network)
    sc = build_scenario(net, args.seed)
    save_scenario(sc, args.out, source=args.network)
    return 0


def cmd_toy(args) -> int:
    from .toy import toy_network

    net = toy_network(args.seed, args.trains)
    _write(args.out, json.dumps(network_to_dict(net), indent=1, sort_keys=True))
    return 0


def cmd_run(args) -> int:
    sc = load_scenario(args.scenario)
    lg, m, _ = run_one(sc, args.tms, _batch_config(args), name=args.scenario)
    if args.out:
        _write(args.out, log_json(lg))
    if args.metrics:
        _write(args.metrics, metrics_csv([m]))
    if not args.out and not args.metrics:
        _write(None, metrics_csv([m]))
    return 0


def cmd_batch(args) -> int:
    scenarios = []
    for path in args.scenarios or ():
        scenarios.append((path, load_scenario(path)))
    if args.network:
        net = load_network(args.network)
        for s in range(args.seeds):
            scenarios.append((f"{args.network}#{s}", build_scenario(net, s)))
    if args.toy_seeds:
        from .toy import toy_network

        for s in range(args.toy_seeds):
            scenarios.append((f"toy#{s}", build_scenario(toy_network(s, args.trains), s)))
    tms = [t.strip() for t in args.tms.split(",") if t.strip()]
    rows = batch_run(scenarios, tms, _batch_config(args))
    _write(args.out, metrics_csv(rows))
    return 0


def cmd_solve(args) -> int:
    with open(args.instance) as fh:
        inst = instance_from_dict(json.load(fh))
    budget = Budget(nodes=args.time_limit_nodes, seconds=args.time_limit_seconds)
    res = solve(inst, budget, keep=args.keep, tolerance=args.tolerance / 100.0)
    _write(args.out, json.dumps(result_to_dict(res), indent=1, sort_keys=True))
    return 0


def cmd_report(args) -> int:
    with open(args.metrics) as fh:
        rows = read_metrics_csv(fh.read())
    summary = {}
    for r in rows:
        s = summary.setdefault(r["tms"], {"runs": 0, "errors": 0, "total_weighted_delay": 0.0, "total_delay": 0})
        s["runs"] += 1
        if r["status"] != "ok":
            s["errors"] += 1
            continue
        s["total_weighted_delay"] += float(r["total_weighted_delay"])
        s["total_delay"] += int(r["total_delay"])
        for col in ("improvement_vs_fcfs_weighted", "improvement_vs_cen_weighted"):
            if r.get(col):
                s.setdefault(col, []).append(float(r[col]))
    for s in summary.values():
        ok = s["runs"] - s["errors"]
        s["mean_weighted_delay"] = s["total_weighted_delay"] / ok if ok else None
        for col in ("improvement_vs_fcfs_weighted", "improvement_vs_cen_weighted"):
            if col in s:
                vals = s.pop(col)
                s[f"mean_{col}"] = sum(vals) / len(vals)
    _write(args.out, json.dumps(summary, indent=1, sort_keys=True))
    return 0


def _loop_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--period", type=int, default=300)
    p.add_argument("--lookahead", type=int, default=2400)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--horizon", type=int, default=900, help="neighbourhood horizon (s)")
    p.add_argument("--tolerance", type=float, default=5.0, help="hypothesis tolerance (%%)")
    p.add_argument("--max-hypotheses", type=int, default=2)
    p.add_argument("--nodes", type=int, default=1000, help="node budget per hypothesis generation")
    p.add_argument("--repair-nodes", type=int, default=5000)
    p.add_argument("--cen-nodes", type=int, default=2000)
    p.add_argument("--loose-neighbors", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sorail", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("gen", help="build a perturbed scenario from a network")
    p.add_argument("--network", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("toy", help="write a synthetic corridor network")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trains", type=int, default=10)
    p.add_argument("--out")
    p.set_defaults(func=cmd_toy)

    p = sub.add_parser("run", help="closed-loop simulation of one scenario")
    p.add_argument("--scenario", required=True)
    p.add_argument("--tms", choices=("so", "cen", "fcfs"), default="so")
    p.add_argument("--out")
    p.add_argument("--metrics")
    _loop_options(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("batch", help="run several scenarios and TMSs")
    p.add_argument("--scenarios", nargs="*")
    p.add_argument("--network")
    p.add_argument("--seeds", type=int, default=0, help="scenarios generated from --network")
    p.add_argument("--toy-seeds", type=int, default=0, help="synthetic corridor scenarios")
    p.add_argument("--trains", type=int, default=10)
    p.add_argument("--tms", default="so,fcfs,cen")
    p.add_argument("--out")
    _loop_options(p)
    p.set_defaults(func=cmd_batch)

    p = sub.add_parser("solve", help="solve a dumped sub-instance")
    p.add_argument("--instance", required=True)
    p.add_argument("--time-limit-nodes", type=int)
    p.add_argument("--time-limit-seconds", type=float)
    p.add_argument("--keep", type=int, default=1)
    p.add_argument("--tolerance", type=float, default=0.0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("report", help="summarise a metrics CSV")
    p.add_argument("--metrics", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_report)
    return ap


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except SorailError as exc:
        err = {"error": exc.code, "message": str(exc)}
    except (OSError, ValueError, KeyError) as exc:
        err = {"error": type(exc).__name__, "message": str(exc)}
    sys.stderr.write(json.dumps(err) + "\n")
    return 1


if __name__ == "__main__":
    sys.exit(main())
