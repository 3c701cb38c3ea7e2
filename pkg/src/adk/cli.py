"""Command-line front end.

Every command prints JSON lines: zero or more records, then one summary
with the command, an input digest, the payload and a status. Exit codes:
0 ok, 1 a violation was found, 2 bad input, 3 budget refusal.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from fractions import Fraction

from .conjecture import FAMILIES, GRAPH_KINDS, GenConfig, format_k, global_adk_check, parse_k, run_campaign
from .diffusion import (
    BudgetExceeded,
    GTInstance,
    TriggeringInstance,
    default_budget,
    exact_spread,
    monte_carlo_spread,
)
from .fileformat import ParseError, digest, parse_instance, serialize_instance
from .setfn import ADkReport, GroundSet, is_adk
from .transforms import (
    NotADAG,
    NotADInfinity,
    dag_layering,
    dag_to_layered,
    gt_to_triggering,
    lift_layered,
    triggering_to_gt,
    verify_transform,
)

EXIT_OK, EXIT_VIOLATION, EXIT_INPUT, EXIT_BUDGET = 0, 1, 2, 3
STATUS = {EXIT_OK: "ok", EXIT_VIOLATION: "violation", EXIT_INPUT: "error", EXIT_BUDGET: "budget"}


class Reporter:
    def __init__(self, argv: list[str], out=None):
        self.argv = argv
        self.out = out or sys.stdout
        self.input_digest: str | None = None

    def emit(self, record: dict) -> None:
        self.out.write(json.dumps(record, sort_keys=True, ensure_ascii=False) + "\n")

    def finish(self, code: int, payload: dict) -> int:
        self.emit({"type": "summary", "command": self.argv, "input_digest": self.input_digest,
                   "payload": payload, "status": STATUS[code], "exit": code})
        return code


def _labels(ground: GroundSet, mask: int) -> list[str]:
    return list(ground.labels_of(mask))


def adk_record(target: str, ground: GroundSet, rep: ADkReport) -> dict:
    rec = {"type": "adk", "target": target, "holds": rep.holds, "checked_k": rep.checked_k}
    if rep.witness is not None:
        S, A, val = rep.witness
        rec["witness"] = {"S": _labels(ground, S), "A": _labels(ground, A), "difference": str(val)}
    return rec


def _as_gt(inst) -> GTInstance:
    return triggering_to_gt(inst) if isinstance(inst, TriggeringInstance) else inst


def _load(rep: Reporter, path: str):
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    rep.input_digest = digest(text)
    return parse_instance(text)


def cmd_check_adk(args, rep: Reporter) -> int:
    gt = _as_gt(_load(rep, args.file))
    k = parse_k(args.k)
    g = gt.graph
    if args.node is not None:
        nodes = [g.index(args.node)]
    else:
        nodes = range(g.n)
    failed = []
    for v in nodes:
        f = gt.thresholds[v]
        r = is_adk(f, k)
        rep.emit(adk_record(g.labels[v], f.ground, r))
        if not r.holds:
            failed.append(g.labels[v])
    code = EXIT_VIOLATION if failed else EXIT_OK
    return rep.finish(code, {"k": format_k(k), "checked": len(nodes), "failed": failed})


def _seed_mask(graph, text: str) -> int:
    names = [x for x in text.split(",") if x] if text else []
    return graph.mask(names)


def cmd_spread(args, rep: Reporter) -> int:
    gt = _as_gt(_load(rep, args.file))
    g = gt.graph
    S = _seed_mask(g, args.seeds)
    if args.mc:
        res = monte_carlo_spread(gt, S, args.trials, args.seed)
        payload = {"seeds": list(g.labels_of(S)), "mode": "monte-carlo", "trials": args.trials,
                   "rng_seed": args.seed, "value": repr(res.value), "stderr": repr(res.stderr),
                   "per_node": {g.labels[v]: repr(p) for v, p in enumerate(res.per_node)}}
    else:
        res = exact_spread(gt, S, method=args.method, budget=args.budget)
        payload = {"seeds": list(g.labels_of(S)), "mode": "exact", "method": args.method,
                   "value": str(res.value),
                   "per_node": {g.labels[v]: str(p) for v, p in enumerate(res.per_node)}}
    return rep.finish(EXIT_OK, payload)


def cmd_global_adk(args, rep: Reporter) -> int:
    gt = _as_gt(_load(rep, args.file))
    k = parse_k(args.k)
    check = global_adk_check(gt, k, method=args.method, budget=args.budget)
    ground = check.sigma.ground
    rep.emit(adk_record("sigma", ground, check.sigma_report))
    for label, r in zip(ground.labels, check.node_reports):
        rep.emit(adk_record(f"P_{label}", ground, r))
    code = EXIT_OK if check.holds else EXIT_VIOLATION
    return rep.finish(code, {"k": format_k(k), "sigma_holds": check.sigma_report.holds,
                             "nodes_failing": [lab for lab, r in zip(ground.labels, check.node_reports)
                                               if not r.holds]})


def cmd_convert(args, rep: Reporter) -> int:
    inst = _load(rep, args.file)
    if args.to == "gt":
        out = _as_gt(inst)
    elif isinstance(inst, TriggeringInstance):
        out = inst
    else:
        try:
            out = gt_to_triggering(inst)
        except NotADInfinity as exc:
            rep.emit({"type": "not-ad-inf", "node": exc.label, "subset": list(exc.subset),
                      "coefficient": str(exc.value)})
            return rep.finish(EXIT_VIOLATION, {"to": args.to, "converted": False})
    text = serialize_instance(out)
    return rep.finish(EXIT_OK, {"to": args.to, "converted": True, "instance": text,
                                "output_digest": digest(text)})


def cmd_transform(args, rep: Reporter) -> int:
    gt = _as_gt(_load(rep, args.file))
    layers = dag_layering(gt.graph)
    if args.lift:
        if not layers.is_layered(gt.graph):
            raise ValueError("graph is not layered; run transform --layerize first")
        if layers.m < 2:
            raise ValueError("lift needs at least two layers")
        image, img_layers, nmap = lift_layered(gt, layers)
    else:
        image, img_layers, nmap = dag_to_layered(gt, layers)
    check = verify_transform(gt, image, nmap, k=parse_k(args.k) if args.k else None,
                             method=args.method, budget=args.budget)
    for row in check.rows:
        if row.difference:
            rep.emit({"type": "mismatch", "seeds": list(gt.graph.labels_of(row.seeds)),
                      "original": str(row.original), "image": str(row.image)})
    for x, r in check.adk:
        if not r.holds:
            rep.emit(adk_record(image.graph.labels[x], image.thresholds[x].ground, r))
    text = serialize_instance(image)
    payload = {
        "transform": "lift" if args.lift else "layerize",
        "instance": text,
        "layers": {image.graph.labels[v]: img_layers.layer[v] for v in range(image.n)},
        "node_map": nmap.to_labels(gt.graph, image.graph),
        "verification": {"seed_sets": len(check.rows),
                         "mismatches": sum(1 for r in check.rows if r.difference),
                         "adk_failures": sum(1 for _, r in check.adk if not r.holds),
                         "ok": check.ok},
    }
    return rep.finish(EXIT_OK if check.ok else EXIT_VIOLATION, payload)


def cmd_search(args, rep: Reporter) -> int:
    cfg = GenConfig(args.graph, args.n, Fraction(args.density), parse_k(args.k), args.family,
                    args.seed, strict=args.strict)
    rep.input_digest = digest(json.dumps(cfg.to_dict(), sort_keys=True))
    workers = int(os.environ.get("ADK_THREADS", "1"))
    report = run_campaign(cfg, args.instances, workers=workers, budget=args.budget)
    for rec in sorted(report.records + report.skipped, key=lambda r: r["index"]):
        rep.emit({"type": "instance", **rec})
    payload = report.summary()
    if report.counterexample is not None:
        payload["counterexample"] = report.counterexample
    code = EXIT_OK if report.verdict == "all-pass" else EXIT_VIOLATION
    return rep.finish(code, payload)


def cmd_battery(args, rep: Reporter) -> int:
    from .battery import run_battery

    results = run_battery(quick=args.quick, only=args.only)
    for r in results:
        rep.emit({"type": "criterion", **r.record()})
        print(r.line(), file=sys.stderr)
    failed = [r.number for r in results if not r.passed]
    return rep.finish(EXIT_VIOLATION if failed else EXIT_OK,
                      {"quick": args.quick, "criteria": [r.number for r in results], "failed": failed})


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="adk", description="Alternating-difference checks for threshold diffusion.")
    p.add_argument("--budget", type=int, default=None,
                   help="enumeration guard for the breakpoint and live-edge oracles (default 10^7 or $ADK_BUDGET)")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("check-adk", help="AD-k check of threshold functions")
    c.add_argument("file")
    grp = c.add_mutually_exclusive_group(required=True)
    grp.add_argument("--node")
    grp.add_argument("--all", action="store_true")
    c.add_argument("--k", required=True)
    c.set_defaults(run=cmd_check_adk)

    c = sub.add_parser("spread", help="exact or sampled spread")
    c.add_argument("file")
    c.add_argument("--seeds", default="", help="comma-separated labels")
    grp = c.add_mutually_exclusive_group()
    grp.add_argument("--exact", action="store_true", default=True)
    grp.add_argument("--mc", action="store_true")
    c.add_argument("--trials", type=int, default=100_000)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--method", choices=("breakpoint", "closure"), default="breakpoint")
    c.set_defaults(run=cmd_spread)

    c = sub.add_parser("global-adk", help="AD-k check of σ and every P_v")
    c.add_argument("file")
    c.add_argument("--k", required=True)
    c.add_argument("--method", choices=("breakpoint", "closure"), default="closure")
    c.set_defaults(run=cmd_global_adk)

    c = sub.add_parser("convert", help="switch between threshold and triggering form")
    c.add_argument("file")
    c.add_argument("--to", choices=("gt", "triggering"), required=True)
    c.set_defaults(run=cmd_convert)

    c = sub.add_parser("transform", help="lift a layered instance or layerize a DAG")
    c.add_argument("file")
    grp = c.add_mutually_exclusive_group(required=True)
    grp.add_argument("--lift", action="store_true")
    grp.add_argument("--layerize", action="store_true")
    c.add_argument("--k", default=None, help="also AD-k check the image thresholds")
    c.add_argument("--method", choices=("breakpoint", "closure"), default="breakpoint")
    c.set_defaults(run=cmd_transform)

    c = sub.add_parser("search", help="random campaign for global AD-k")
    c.add_argument("--graph", choices=GRAPH_KINDS, default="general")
    c.add_argument("--n", type=int, required=True)
    c.add_argument("--k", required=True)
    c.add_argument("--instances", type=int, required=True)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--density", default="1/2")
    c.add_argument("--family", choices=FAMILIES, default="rejection-sampled")
    c.add_argument("--strict", action="store_true", help="thresholds must also fail AD-(k+1) where possible")
    c.set_defaults(run=cmd_search)

    c = sub.add_parser("verify-paper", aliases=["battery"], help="run the acceptance battery")
    c.add_argument("--quick", action="store_true")
    c.add_argument("--only", type=int, action="append", choices=range(1, 11))
    c.set_defaults(run=cmd_battery)
    return p


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    rep = Reporter(argv)
    if args.budget is None:
        args.budget = default_budget()
    try:
        return args.run(args, rep)
    except BudgetExceeded as exc:
        rep.emit({"type": "error", "kind": "budget", "message": str(exc)})
        return rep.finish(EXIT_BUDGET, {})
    except ParseError as exc:
        rep.emit({"type": "error", "kind": "parse", "message": str(exc), "line": exc.line, "column": exc.column})
        return rep.finish(EXIT_INPUT, {})
    except (ValueError, KeyError, OSError, NotADAG) as exc:
        message = exc.args[0] if isinstance(exc, KeyError) and exc.args else str(exc)
        rep.emit({"type": "error", "kind": "input", "message": str(message)})
        return rep.finish(EXIT_INPUT, {})


if __name__ == "__main__":
    sys.exit(main())
