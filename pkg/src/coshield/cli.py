"""Command line entry point: ``coshield gen|shield|plan|bench``."""
from __future__ import annotations

import argparse
import json
import sys
import time

import numpy as np

from .benchmarks import build_benchmark
from .consistency import make_consistent
from .env import compile_model
from .harness import (
    ExperimentConfig,
    InfeasibleModel,
    InvariantViolation,
    default_planner,
    episode_seed,
    run_experiment,
    summarize,
)
from .model import ModelError, load_model, save_model
from .pomcp import PlannerConfig, run_episode
from .shield import (
    FingerprintMismatch,
    ShieldFormatError,
    feasibility,
    infeasibility_report,
    load_shield,
    save_shield,
    synthesize,
)


def _gen(args) -> int:
    params = json.loads(args.params) if args.params else {}
    name = {"tiger": "tiger-simple"}.get(args.benchmark, args.benchmark)
    model = build_benchmark(name, size=args.size, **params)
    save_model(model, args.out)
    print(f"wrote {args.out}: {model.n_states} states, {model.n_obs} observations")
    return 0


def _shield(args) -> int:
    cm = make_consistent(load_model(args.model), minimal=args.minimal)
    if cm.transformed:
        print(f"inserted {cm.n_inserted} states to make the model consistent", file=sys.stderr)
        if args.consistent_out:
            save_model(cm.model, args.consistent_out)
    res = synthesize(cm.model)
    save_shield(res.shield, args.out)
    feasible = feasibility(res.shield, cm.model)
    print(f"supports={len(res.token.supports)} token_states={res.token.n_states} "
          f"passes={res.pruned.passes} time={res.seconds:.3f}s feasible={feasible}")
    if not feasible:
        print(infeasibility_report(res.shield, cm.model))
        return 2
    return 0


def _plan(args) -> int:
    cm = make_consistent(load_model(args.model))
    model = cm.model
    cfg = PlannerConfig()
    if args.config:
        with open(args.config) as f:
            cfg = PlannerConfig.from_dict(json.load(f))
    if cm.transformed:
        cfg = PlannerConfig.from_dict({**cfg.to_dict(), "horizon": 2 * cfg.horizon})
    shield = None
    if args.shield:
        shield = load_shield(args.shield, model)
        if not feasibility(shield, model):
            print(infeasibility_report(shield, model), file=sys.stderr)
            return 2
    env = compile_model(model, shield)
    episodes = []
    for i in range(args.episodes):
        seed = episode_seed(args.seed, i)
        ep = run_episode(env, cfg, seed)
        episodes.append(ep)
        print(json.dumps({"episode": i, "seed": seed, **ep.record(),
                          "time_per_decision": float(np.mean(ep.decision_times or [0.0]))}))
    row = summarize(args.model, "shielded" if shield else "unshielded", model, episodes, None)
    print(json.dumps({"summary": {k: v for k, v in row.__dict__.items() if k != "shield_time"}}))
    if shield is not None and row.survival < 100:
        return 3
    return 0


def _bench(args) -> int:
    planner = default_planner(args.benchmark, args.size)
    overrides = {k: v for k, v in (("simulations", args.simulations), ("horizon", args.horizon)) if v is not None}
    if overrides:
        planner = PlannerConfig.from_dict({**planner.to_dict(), **overrides})
    config = ExperimentConfig(
        benchmark=args.benchmark,
        size=args.size,
        planner=planner,
        mode=args.mode,
        episodes=args.episodes,
        seed=args.seed,
        out_dir=args.out,
        workers=args.workers,
    )
    t0 = time.perf_counter()
    res = run_experiment(config)
    print(res.row.format())
    print(f"wall time {time.perf_counter() - t0:.1f}s", file=sys.stderr)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="coshield", description="Exact shields and shielded POMCP for consumption POMDPs")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="write a benchmark model as JSON")
    g.add_argument("--benchmark", required=True, choices=["tiger", "tiger-simple", "tiger-fuzzy", "uuv", "trap"])
    g.add_argument("--size", type=int, default=8)
    g.add_argument("--params", help="JSON object of generator parameters")
    g.add_argument("--out", required=True)
    g.set_defaults(func=_gen)

    s = sub.add_parser("shield", help="synthesise a shield for a model file")
    s.add_argument("--model", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--minimal", action="store_true", help="split only actions that are inconsistent")
    s.add_argument("--consistent-out", help="also write the transformed model here")
    s.set_defaults(func=_shield)

    pl = sub.add_parser("plan", help="run planner episodes on a model file")
    pl.add_argument("--model", required=True)
    pl.add_argument("--shield", help="shield file; omit for unshielded runs")
    pl.add_argument("--episodes", type=int, default=10)
    pl.add_argument("--seed", type=int, default=0)
    pl.add_argument("--config", help="JSON file with planner settings")
    pl.set_defaults(func=_plan)

    b = sub.add_parser("bench", help="reproduce a benchmark row")
    b.add_argument("--benchmark", required=True, choices=["tiger-simple", "tiger-fuzzy", "uuv"])
    b.add_argument("--size", type=int, default=8)
    b.add_argument("--mode", choices=["shielded", "unshielded"], default="shielded")
    b.add_argument("--episodes", type=int, default=100)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--simulations", type=int)
    b.add_argument("--horizon", type=int)
    b.add_argument("--workers", type=int, default=1)
    b.add_argument("--out")
    b.set_defaults(func=_bench)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ModelError, ShieldFormatError, FingerprintMismatch, InfeasibleModel, InvariantViolation) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
