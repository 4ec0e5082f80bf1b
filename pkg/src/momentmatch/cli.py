"""Command-line interface: build MDPs, evaluate payoffs, solve games,
train the imitation learners, and run the bound-report suites.

All outputs are deterministic given the seed: JSON is written with sorted
keys and fixed separators, CSV rows in a fixed column order, so repeated
runs are byte-identical.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys

import numpy as np

from . import algorithms, bounds, equilibrium, worlds
from .mdp import TabularMdp, TimedPolicy, policy_value
from .moments import PayoffKind, best_response_discriminator, payoff
from .equilibrium import SolverConfig, SolverMode

PAYOFFS = {
    "u1": PayoffKind.U1_REWARD,
    "u2": PayoffKind.U2_OFFQ,
    "u3": PayoffKind.U3_ONQ,
    "u4": PayoffKind.U4_MIXED,
}


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")) + "\n"


def write_json(path: str, obj):
    with open(path, "w") as fh:
        fh.write(canonical_json(obj))


def write_csv(path: str, rows, columns):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([repr(row[c]) if isinstance(row[c], float) else row[c]
                             for c in columns])


def load_instance(path: str):
    with open(path) as fh:
        doc = json.load(fh)
    mdp = TabularMdp.from_dict(doc["mdp"])
    expert = TimedPolicy.from_dict(doc["expert"])
    return mdp, expert


def _build_instance(args):
    if args.family == "loop":
        return worlds.build_loop(args.T)
    if args.family == "cliff":
        return worlds.build_cliff(args.T)
    if args.family == "unicycle":
        return worlds.build_unicycle(args.T)
    if args.family == "tree":
        return worlds.build_tree(args.branching, args.T)
    if args.family == "forest":
        trees = [tuple(map(int, p.split(","))) for p in args.trees]
        return worlds.build_forest_grid(args.width, args.length, trees)
    raise ValueError(f"unknown family: {args.family}")


def cmd_mdp(args) -> int:
    mdp, expert = _build_instance(args)
    doc = {"mdp": mdp.to_dict(), "expert": expert.to_dict()}
    if args.out:
        write_json(args.out, doc)
    else:
        sys.stdout.write(canonical_json(doc))
    return 0


def cmd_moments(args) -> int:
    mdp, expert = load_instance(args.mdp)
    game = bounds.build_game(PAYOFFS[args.game], mdp, expert)
    if args.policy:
        with open(args.policy) as fh:
            policy = TimedPolicy.from_dict(json.load(fh))
    else:
        from .mdp import uniform_policy

        policy = uniform_policy(mdp)
    f_hat, sup = best_response_discriminator(game, policy)
    out = {
        "game": args.game,
        "sup_payoff": sup,
        "payoff_scale_k": game.payoff_scale_k,
        "best_response": f_hat.to_dict(),
    }
    if args.out:
        write_json(args.out, out)
    else:
        sys.stdout.write(canonical_json(out))
    return 0


def cmd_solve(args) -> int:
    mdp, expert = load_instance(args.mdp)
    kind = PAYOFFS[args.payoff]
    if kind == PayoffKind.U4_MIXED:
        raise ValueError("the mixed payoff is evaluation-only; use moments eval")
    game = bounds.build_game(kind, mdp, expert)
    mode = SolverMode.PRIMAL if args.mode == "primal" else SolverMode.DUAL
    cfg = SolverConfig(mode=mode, target_delta=args.delta,
                       max_outer_iters=args.iters, seed=args.seed)
    res = (equilibrium.solve_primal(game, cfg) if mode == SolverMode.PRIMAL
           else equilibrium.solve_dual(game, cfg))
    doc = res.to_dict()
    doc["gap"] = policy_value(mdp, expert) - policy_value(mdp, res.policy)
    del doc["trace"]
    write_json(args.out + ".json", doc)
    write_csv(args.out + ".csv", res.trace,
              ["iter", "payoff", "sup_payoff", "entropy", "regret_avg"])
    if args.require_cert and not res.certified:
        print("result not certified at the requested delta", file=sys.stderr)
        return 2
    return 0


def _load_config(path):
    if not path:
        return {}
    with open(path) as fh:
        return json.load(fh)


def cmd_algo(args) -> int:
    mdp, expert = load_instance(args.mdp)
    cfg = _load_config(args.config)
    n_demos = int(cfg.pop("n_demos", 20))
    seed = int(cfg.pop("seed", args.seed))
    name = args.algorithm
    if name == "bc":
        data = algorithms.expert_dataset(mdp, expert, seed, n_demos)
        pi = algorithms.behavioral_cloning(data, float(cfg.pop("pseudo_count", 0.0)))
        trace = [{"round": 0, "objective": 0.0, "value": policy_value(mdp, pi)}]
    elif name == "advil":
        data = algorithms.expert_dataset(mdp, expert, seed, n_demos)
        pi, steps = algorithms.advil_train(data, algorithms.AdvilConfig(**cfg), expert)
        trace = [{"round": r["step"], "objective": r["objective"],
                  "value": ""} for r in steps]
        trace[-1]["value"] = policy_value(mdp, pi)
    elif name == "adril":
        data = algorithms.expert_dataset(mdp, expert, seed, n_demos)
        pi, trace, _ = algorithms.adril_train(
            data, algorithms.AdrilConfig(seed=seed, **cfg))
    elif name == "dagger":
        pi, trace = algorithms.dagger_train(
            mdp, algorithms.QueryableExpert(expert),
            algorithms.DaggerConfig(seed=seed, **cfg))
    elif name == "daequil":
        game = bounds.build_game(PayoffKind.U3_ONQ, mdp, expert)
        pi, trace = algorithms.daequil_train(
            mdp, algorithms.QueryableExpert(expert), game.function_class,
            algorithms.DaequilConfig(seed=seed, **cfg))
    else:
        raise ValueError(f"unknown algorithm: {name}")
    write_json(args.out + ".json", pi.to_dict())
    cols = sorted({k for row in trace for k in row})
    write_csv(args.out + ".csv", [{c: row.get(c, "") for c in cols} for row in trace],
              cols)
    return 0


def cmd_bounds(args) -> int:
    reports = bounds.run_suite(args.suite, seeds=(args.seed,))
    doc = [r.to_dict() for r in reports]
    if args.out:
        write_json(args.out, doc)
        with open(args.out.rsplit(".", 1)[0] + ".md", "w") as fh:
            fh.write(bounds.summary_markdown(reports))
    else:
        sys.stdout.write(canonical_json(doc))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="momentmatch",
                                description="tabular imitation-game toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    m = sub.add_parser("mdp", help="build benchmark MDPs")
    msub = m.add_subparsers(dest="mdp_command", required=True)
    mb = msub.add_parser("build", help="build a named instance")
    mb.add_argument("family", choices=["loop", "cliff", "unicycle", "tree", "forest"])
    mb.add_argument("--T", type=int, default=6)
    mb.add_argument("--branching", type=int, default=2)
    mb.add_argument("--width", type=int, default=5)
    mb.add_argument("--length", type=int, default=12)
    mb.add_argument("--trees", nargs="*", default=["4,2", "8,2"],
                    help="tree cells as row,col")
    mb.add_argument("--out", default=None)
    mb.set_defaults(func=cmd_mdp)

    mo = sub.add_parser("moments", help="evaluate game payoffs")
    mosub = mo.add_subparsers(dest="moments_command", required=True)
    moe = mosub.add_parser("eval", help="best-response payoff certificate")
    moe.add_argument("--game", choices=list(PAYOFFS), required=True)
    moe.add_argument("--mdp", required=True, help="instance JSON (mdp + expert)")
    moe.add_argument("--policy", default=None, help="policy JSON (default uniform)")
    moe.add_argument("--out", default=None)
    moe.set_defaults(func=cmd_moments)

    so = sub.add_parser("solve", help="run an equilibrium solver")
    so.add_argument("--mdp", required=True)
    so.add_argument("--payoff", choices=["u1", "u2", "u3"], required=True)
    so.add_argument("--mode", choices=["primal", "dual"], default="dual")
    so.add_argument("--delta", type=float, default=0.05)
    so.add_argument("--iters", type=int, default=2000)
    so.add_argument("--seed", type=int, default=0)
    so.add_argument("--out", required=True, help="output prefix (.json/.csv)")
    so.add_argument("--require-cert", action="store_true")
    so.set_defaults(func=cmd_solve)

    al = sub.add_parser("algo", help="train an imitation learner")
    al.add_argument("algorithm", choices=["advil", "adril", "daequil", "bc", "dagger"])
    al.add_argument("--mdp", required=True)
    al.add_argument("--config", default=None, help="JSON config file")
    al.add_argument("--seed", type=int, default=0)
    al.add_argument("--out", required=True, help="output prefix (.json/.csv)")
    al.set_defaults(func=cmd_algo)

    bo = sub.add_parser("bounds", help="bound-report suites")
    bosub = bo.add_subparsers(dest="bounds_command", required=True)
    bor = bosub.add_parser("run")
    bor.add_argument("--suite", choices=["all", "lb", "ub", "lemma6", "recover"],
                     default="all")
    bor.add_argument("--seed", type=int, default=0)
    bor.add_argument("--out", default=None)
    bor.set_defaults(func=cmd_bounds)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except (ValueError, FileNotFoundError, KeyError, ResourceWarning) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
