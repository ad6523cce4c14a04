"""Command-line front end.

Every command writes a JSON report with ``"schema": 1``, the run
configuration, the results, a ``checks`` map and an overall ``ok`` flag.
The exit code is 0 exactly when every check passed.  Apart from the
``timestamp`` field, reports are reproducible byte for byte.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from datetime import datetime, timezone
from pathlib import Path

from . import decremental, rounding
from .entropy import EntropyParams, extract_duals, solve_entropy, verify_dual_bounds
from .generators import KINDS, generate, random_fractional
from .graph import (
    FractionalAssignment,
    GraphError,
    check_epsilon,
    read_fractional,
    read_graph,
    read_updates,
    write_fractional,
    write_graph,
)
from .oracle import REF_EPS_CAP, REF_FULL_CAP, OracleFailure, monte_carlo_sparsifier, \
    reference_entropy_opt
from .polytope import check_membership, enumerate_odd_sets
from .sparsifier import build_sparsifier, default_density, size_bound, witness_checks, witness_y
from .static import max_cardinality_matching, max_weight_matching_exact

SCHEMA = 1
POLYTOPES = {"small-odd": "M_eps", "full": "M_full"}
log = logging.getLogger("dynround")


class UsageError(ValueError):
    pass


def _clean(obj):
    # JSON has no inf/nan; store them as null
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if hasattr(obj, "item"):
        return _clean(obj.item())
    return obj


def _report(command: str, config: dict, result: dict, checks: dict[str, bool]) -> dict:
    return {
        "schema": SCHEMA,
        "command": command,
        "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "config": config,
        "result": result,
        "checks": {k: bool(v) for k, v in checks.items()},
        "ok": all(checks.values()),
    }


def dump_report(report: dict) -> str:
    return json.dumps(_clean(report), indent=1, sort_keys=True) + "\n"


def strip_timestamp(text: str) -> dict:
    data = json.loads(text)
    data.pop("timestamp", None)
    return data


def _need_seed(args) -> int:
    if args.seed is None:
        raise UsageError(f"{args.command} is randomized and needs --seed")
    return args.seed


def _config(args, *keys) -> dict:
    return {k: getattr(args, k) for k in keys}


def _load_x(args, graph, eps) -> FractionalAssignment:
    if args.x:
        x = read_fractional(args.x, eps)
        x.check_support(graph)
        return x
    return random_fractional(graph, eps, _need_seed(args))


# ------------------------------------------------------------------ commands


def cmd_gen(args) -> dict:
    seed = args.seed
    if args.kind != "cycle" and seed is None:
        raise UsageError(f"generator {args.kind} needs --seed")
    graph = generate(args.kind, args.n, args.param, seed or 0, args.W)
    if args.out is None:
        raise UsageError("gen needs --out for the graph file")
    write_graph(graph, args.out)
    if args.x_out:
        write_fractional(random_fractional(graph, check_epsilon(args.epsilon), seed or 0),
                         args.x_out)
    return _report("gen", _config(args, "kind", "n", "param", "seed", "W"),
                   {"n": graph.n, "m": graph.m, "W": graph.W}, {"written": True})


def cmd_sparsify(args) -> dict:
    seed = _need_seed(args)
    graph = read_graph(args.input)
    eps = check_epsilon(args.epsilon)
    x = _load_x(args, graph, eps)
    d = args.d if args.d is not None else default_density(graph.n, eps)
    mu = max_cardinality_matching(graph).cardinality
    sp = build_sparsifier(graph, x, d=d, seed=seed)
    y = witness_y(sp, x)
    odd = enumerate_odd_sets(x.support(), eps)
    wit = witness_checks(x.values, y, eps, odd, mu)
    mu_s = max_cardinality_matching(graph.subgraph(sp.S)).cardinality
    result = {"sparsifier": sp.to_json(), "size": len(sp.S),
              "size_limit": size_bound(d, mu, graph.n, eps), "mu_G": mu, "mu_S": mu_s,
              "sum_x": x.total(), "witness": wit}
    checks = {"consistent": sp.is_consistent(), "size": len(sp.S) <= result["size_limit"]}
    if args.updates:
        state = rounding.init(graph, x, d=d, seed=seed)
        for ev in read_updates(args.updates):
            rounding.on_update(state, ev)
        result["rounding"] = {"trace": [dl.to_json() for dl in state.trace],
                              "recomputes": state.recomputes,
                              "final_matching": [list(e) for e in sorted(state.M)]}
        checks["matching_in_S"] = state.matching_ok()
    return _report("sparsify", _config(args, "input", "x", "updates", "epsilon", "seed")
                   | {"d": d}, result, checks)


def cmd_montecarlo(args) -> dict:
    seed = _need_seed(args)
    graph = read_graph(args.input)
    eps = check_epsilon(args.epsilon)
    x = _load_x(args, graph, eps)
    d = args.d if args.d is not None else default_density(graph.n, eps)
    mu = max_cardinality_matching(graph).cardinality
    odd = enumerate_odd_sets(x.support(), eps)
    rep = monte_carlo_sparsifier(graph, x, d=d, trials=args.trials, master_seed=seed,
                                 odd_sets=odd, mu=mu, witness=args.witness,
                                 workers=args.workers)
    result = rep.to_json()
    checks = _montecarlo_checks(result)
    return _report("montecarlo", _config(args, "input", "x", "epsilon", "trials", "seed")
                   | {"d": d}, result, checks)


def _montecarlo_checks(result: dict) -> dict[str, bool]:
    # recomputed from the frequency table so verify can rerun it on a stored report
    d = result["d"]
    bad = 0
    for _u, _v, x, f, s, lo, hi in result["frequencies"]:
        if x > 1.0 / d:
            bad += f != 1.0
        else:
            bad += not (lo - 3 * s <= f <= hi + 3 * s)
    checks = {"frequencies": bad == 0}
    for key in ("vertex_pairs", "matching_pairs"):
        if result.get(key):
            checks[key] = result[key]["violations"] == 0
    if result.get("size_limit") is not None:
        checks["size"] = result["size_max"] <= result["size_limit"]
    return checks


def cmd_entropy(args) -> dict:
    graph = read_graph(args.input)
    eps = check_epsilon(args.epsilon)
    polytope = POLYTOPES[args.polytope]
    params = EntropyParams.for_graph(graph, eps, args.delta, args.gamma)
    mwm = max_weight_matching_exact(graph).weight
    sol = solve_entropy(graph, params, polytope)
    result = {"solution": sol.to_json(), "mwm": mwm,
              "membership": check_membership(sol.x, polytope, eps).to_json()}
    checks = {"params": not params.violations(graph.n, mwm, graph.m),
              "member": result["membership"]["member"],
              "upper": sol.value <= (1 + eps) * mwm + 1e-9}
    if args.oracle_check:
        cap = REF_FULL_CAP if polytope == "M_full" else REF_EPS_CAP
        if graph.n > cap:
            result["reference"] = {"skipped": f"n > {cap}"}
        else:
            try:
                ref = reference_entropy_opt(graph, params, polytope)
            except OracleFailure as exc:
                result["reference"] = {"failed": str(exc)}
                checks["reference"] = False
            else:
                ref_x = FractionalAssignment(ref.x, eps)
                duals = verify_dual_bounds(ref.s, graph, ref_x, eps, graph.n)
                result["reference"] = {"g": ref.g, "gap": ref.gap, "duals": duals.to_json()}
                checks["reference"] = sol.value >= (1 - eps) * ref.g - 1e-9
                checks["dual_bounds"] = not duals.lower_violations
    if args.duals:
        result["duals"] = extract_duals(graph, sol.x, params, polytope).to_json()
    return _report("entropy", _config(args, "input", "epsilon", "delta", "gamma", "polytope",
                                      "oracle_check"), result, checks)


def cmd_decremental(args) -> dict:
    seed = _need_seed(args)
    graph = read_graph(args.input)
    eps = check_epsilon(args.epsilon)
    state = decremental.initialize(graph, eps, args.delta, args.gamma, args.d, seed,
                                   oracle_check=args.oracle_check)
    if args.updates:
        for ev in read_updates(args.updates):
            if ev.kind != "del":
                raise UsageError("decremental runs accept deletions only")
            decremental.delete_edge(state, *ev.edge)
    else:
        decremental.run_adversary(state)
    if args.trace:
        state.write_trace(args.trace)
    result = {"summary": state.summary(), "events": [ev.to_json() for ev in state.trace]}
    return _report("decremental", _config(args, "input", "updates", "epsilon", "delta", "gamma",
                                          "d", "seed", "oracle_check"),
                   result, _decremental_checks(result, eps))


def _decremental_checks(result: dict, eps: float) -> dict[str, bool]:
    events = result["events"]
    summ = result["summary"]
    counters = all(ev["mu_star"] <= 0 or (ev["counterX"] < eps * ev["mu_star"]
                                          and ev["counterM"] < eps * ev["mu_star"])
                   for ev in events)
    checks = {"counters": counters,
              "rebuilds": summ["rebuilds"] <= summ["rebuild_bound"],
              "rounds": summ["max_rounds_between_rebuilds"] <= summ["round_bound"]}
    ratios = [ev["ratio"] for ev in events if "ratio" in ev]
    if ratios:
        checks["ratio"] = min(ratios) >= 1 - 10 * eps - 1e-9
    return checks


def cmd_verify(args) -> dict:
    """Re-derive the checks of a stored report from its own contents."""
    if not args.input:
        raise UsageError("verify needs --input REPORT")
    stored = json.loads(Path(args.input).read_text())
    if stored.get("schema") != SCHEMA:
        raise UsageError(f"unsupported report schema {stored.get('schema')!r}")
    cmd = stored.get("command")
    res = stored["result"]
    if cmd == "montecarlo":
        checks = _montecarlo_checks(res)
    elif cmd == "decremental":
        checks = _decremental_checks(res, stored["config"]["epsilon"])
    elif cmd == "sparsify":
        checks = {"size": res["size"] <= res["size_limit"],
                  "consistent": _sampled_matches(res["sparsifier"])}
    elif cmd == "entropy":
        eps = stored["config"]["epsilon"]
        x = FractionalAssignment({(u, v): val for u, v, val in res["solution"]["x"]}, eps)
        poly = res["solution"]["polytope"]
        checks = {"member": check_membership(x, poly, eps).member,
                  "upper": res["solution"]["g"] <= (1 + eps) * res["mwm"] + 1e-9}
    else:
        checks = {}
    stored_checks = stored.get("checks", {})
    agree = all(stored_checks.get(k) == v for k, v in checks.items())
    checks = {f"recheck_{k}": v for k, v in checks.items()}
    checks["stored_ok"] = bool(stored.get("ok"))
    checks["agrees_with_stored"] = agree
    return _report("verify", {"input": args.input, "verified_command": cmd},
                   {"rechecked": len(checks) - 2}, checks)


def _sampled_matches(sp: dict) -> bool:
    S = set()
    for b in sp["buckets"].values():
        chosen = set(b["sampled_colors"])
        S.update((u, v) for u, v, c in b["edges"] if c in chosen)
    return S == {tuple(e) for e in sp["S"]}


COMMANDS = {"gen": cmd_gen, "sparsify": cmd_sparsify, "montecarlo": cmd_montecarlo,
            "entropy": cmd_entropy, "decremental": cmd_decremental, "verify": cmd_verify}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dynround",
                                description="Dynamic matching rounding experiments.")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--input", help="graph file (or report file for verify)")
    p.add_argument("--x", help="fractional assignment file; drawn at random if omitted")
    p.add_argument("--updates", help="update JSONL")
    p.add_argument("--out", help="report path (graph path for gen); stdout if omitted")
    p.add_argument("--trace", help="per-event JSONL trace (decremental)")
    p.add_argument("--epsilon", type=float, default=0.25)
    p.add_argument("--d", type=float, default=None)
    p.add_argument("--delta", type=float, default=None)
    p.add_argument("--gamma", type=float, default=None)
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--oracle-check", action="store_true")
    p.add_argument("--polytope", choices=sorted(POLYTOPES), default="small-odd")
    p.add_argument("--witness", action="store_true", help="montecarlo: witness statistics")
    p.add_argument("--duals", action="store_true", help="entropy: include recovered duals")
    p.add_argument("--kind", choices=KINDS, default="random-gnp")
    p.add_argument("--n", type=int, default=20)
    p.add_argument("--param", type=float, default=None)
    p.add_argument("--W", type=int, default=10)
    p.add_argument("--x-out", help="gen: also write a random fractional assignment")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.trials < 1:
        print("error: --trials must be >= 1", file=sys.stderr)
        return 2
    try:
        report = COMMANDS[args.command](args)
    except (UsageError, GraphError, ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    text = dump_report(report)
    if args.command == "gen" or args.out is None:
        sys.stdout.write(text)
    else:
        Path(args.out).write_text(text)
    return 0 if report["ok"] else 1


if __name__ == "__main__":
    sys.exit(main())
