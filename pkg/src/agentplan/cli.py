"""Operator entry point.

Subcommands: validate, optimize, run, bench, cache-stats. Every command is
deterministic given its inputs and seed; wall-clock timings appear only
under segregated "timing" keys. Exit codes: 0 success, 1 domain fault,
2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

from . import fixtures
from .cache import MMCache
from .costs import ObjectiveSet, StatisticsStore
from .errors import AgentPlanError, ConfigError
from .monitor import DeviationRule, Monitor
from .planner import (
    frontier_to_json,
    optimize,
    parse_policy,
    plan_to_dot,
    select,
)
from .pools import Pools, load_engines, load_models, load_registry
from .simulator import FaultSpec, Simulator, telemetry_to_jsonl
from .workflow import load_workflow, validate
from .workload import DEFAULT_PROFILE, WorkloadProfile, bench, generate

DEFAULT_OBJECTIVES = "latency_ms,monetary_usd,error"
DEFAULT_POLICY = "weighted:latency_ms=0.34,monetary_usd=0.33,error=0.33"


def _resolve_seed(args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("AGENTPLAN_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"AGENTPLAN_SEED is not an integer: {env!r}")
    return 0


def _load_pools(args) -> Pools:
    try:
        registry = load_registry(args.registry) if args.registry else fixtures.default_registry()
        models = load_models(args.models) if args.models else fixtures.default_models()
        engines = load_engines(args.engines) if args.engines else fixtures.default_engines()
    except OSError as exc:
        raise ConfigError(f"cannot read pool file: {exc}")
    return Pools(registry=registry, models=models, engines=engines)


def _load_workflow(args, pools: Pools):
    if not args.workflow:
        return fixtures.support_workflow()
    try:
        return load_workflow(args.workflow, pools.registry)
    except OSError as exc:
        raise ConfigError(f"cannot read workflow file: {exc}")
    except KeyError as exc:
        raise ConfigError(f"workflow references unknown agent: {exc}")


def _objectives(args) -> ObjectiveSet:
    names = tuple(x.strip() for x in args.objectives.split(",") if x.strip())
    try:
        return ObjectiveSet(names)
    except ValueError as exc:
        raise ConfigError(str(exc))


def _policy(args):
    try:
        return parse_policy(args.policy)
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"bad policy {args.policy!r}: {exc}")


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _build_cache(args) -> MMCache:
    return MMCache(
        short_capacity=args.short_capacity,
        long_capacity=args.long_capacity,
        promote_hits=args.promote_hits,
        ttl=args.ttl,
    )


def _parse_faults(specs: list[str]) -> list[FaultSpec]:
    faults = []
    for spec in specs:
        parts = spec.split(":")
        if len(parts) < 2:
            raise ConfigError(f"fault spec must be engine:factor[:from_ms], got {spec!r}")
        try:
            factor = float(parts[1])
            from_ms = float(parts[2]) if len(parts) > 2 else 0.0
            faults.append(FaultSpec(engine_id=parts[0], latency_factor=factor, effective_from=from_ms))
        except ValueError as exc:
            raise ConfigError(f"bad fault spec {spec!r}: {exc}")
    return faults


# ---------------------------------------------------------------------------
# Subcommands


def cmd_validate(args) -> int:
    pools = _load_pools(args)
    w = _load_workflow(args, pools)
    report = validate(w, pools.registry)
    if report.ok:
        print(f"{w.name}: ok ({len(w.nodes)} agents, {len(w.edges)} edges)")
        return 0
    for violation in report.violations:
        print(f"{w.name}: {violation}")
    return 1


def cmd_optimize(args) -> int:
    pools = _load_pools(args)
    w = _load_workflow(args, pools)
    objectives = _objectives(args)
    out = _out_dir(args)

    t0 = time.perf_counter()
    frontier = optimize(
        w,
        objectives,
        pools,
        max_variants=args.max_variants,
        max_frontier=args.max_frontier,
        robust_lambda=args.robust_lambda,
    )
    elapsed = time.perf_counter() - t0

    doc = {
        "workflow": w.name,
        "objectives": list(objectives.dimensions),
        "entries": frontier_to_json(frontier),
        "truncated": frontier.truncated,
        "timing": {"planning_seconds": elapsed},
    }
    (out / "frontier.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    for i, entry in enumerate(frontier.entries):
        (out / f"plan-{i}.dot").write_text(plan_to_dot(entry))

    header = ["plan"] + list(objectives.dimensions)
    print("  ".join(f"{h:>14}" for h in header))
    for i, entry in enumerate(frontier.entries):
        row = [f"plan-{i}"] + [f"{entry.cost.mean(d):.6g}" for d in objectives.dimensions]
        print("  ".join(f"{v:>14}" for v in row))
    print(f"{len(frontier)} plans on the frontier -> {out / 'frontier.json'}")
    return 0


def cmd_run(args) -> int:
    pools = _load_pools(args)
    w = _load_workflow(args, pools)
    objectives = _objectives(args)
    policy = _policy(args)
    seed = _resolve_seed(args)
    out = _out_dir(args)

    frontier = optimize(w, objectives, pools, max_variants=args.max_variants)
    entry = select(frontier, policy)

    stats = StatisticsStore()
    cache = _build_cache(args) if args.cache else None
    monitor = None
    if not args.no_monitor:
        rule = DeviationRule(
            delta=args.delta if args.delta is not None else 0.5,
            min_samples=args.min_samples,
        )
        monitor = Monitor(
            pools,
            stats,
            rule,
            objectives=objectives,
            policy=policy,
            max_variants=args.max_variants,
            reopt_enabled=not args.no_reopt,
        )

    sim = Simulator(pools, cache=cache, tau=args.tau)
    sim.inject(_parse_faults(args.fault))

    all_telemetry = []
    all_switches = []
    run_totals = []
    for run_id in range(args.runs):
        result = sim.run(entry.plan, seed=seed, run_id=run_id, monitor=monitor)
        all_telemetry.extend(result.telemetry)
        all_switches.extend(result.switches)
        run_totals.append(
            {
                "run_id": run_id,
                "latency_ms": result.total_latency_ms,
                "monetary_usd": result.total_monetary_usd,
                "tokens": result.total_tokens,
                "energy_j": result.total_energy_j,
                "switches": len(result.switches),
            }
        )

    (out / "telemetry.jsonl").write_text(telemetry_to_jsonl(all_telemetry))
    triggers = monitor.trigger_log if monitor is not None else []
    (out / "triggers.jsonl").write_text(
        "".join(json.dumps(t.as_dict(), sort_keys=True) + "\n" for t in triggers)
    )
    summary = {
        "workflow": w.name,
        "selected_plan": entry.hash,
        "policy": policy.describe(),
        "runs": run_totals,
        "switches": [
            {
                "at_time": s.at_time,
                "agent_id": s.agent_id,
                "dimension": s.dimension,
                "old_plan": s.old_plan,
                "new_plan": s.new_plan,
            }
            for s in all_switches
        ],
        "triggers": len(triggers),
        "cache_stats": cache.stats() if cache is not None else None,
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    if cache is not None and args.cache_snapshot:
        cache.export_jsonl(out / "cache.jsonl")
    print(
        f"{args.runs} run(s) of {w.name}: total latency "
        f"{sum(r['latency_ms'] for r in run_totals):.1f} ms, "
        f"{len(all_switches)} switch(es) -> {out}"
    )
    return 0


def cmd_bench(args) -> int:
    pools = _load_pools(args)
    objectives = _objectives(args)
    policy = _policy(args)
    seed = _resolve_seed(args)
    out = _out_dir(args)

    if args.profile:
        try:
            profile = WorkloadProfile.from_json(json.loads(Path(args.profile).read_text()))
        except OSError as exc:
            raise ConfigError(f"cannot read profile: {exc}")
    else:
        profile = DEFAULT_PROFILE

    workflows = generate(args.n, profile, seed=seed)
    report = bench(
        workflows,
        pools,
        objectives,
        policy=policy,
        cache_enabled=args.cache,
        seed=seed,
        passes=args.passes,
        tau=args.tau,
        max_variants=args.max_variants,
    )
    doc = report.as_dict()
    (out / "bench.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    print(
        f"benched {report.n_workflows} workflows ({report.n_excluded} excluded), "
        f"passes={args.passes}, cache={'on' if args.cache else 'off'}"
    )
    if report.passes_cached is not None:
        print(
            f"transparency: frontiers_identical={report.frontiers_identical} "
            f"selections_identical={report.selections_identical}"
        )
        last = report.passes_cached[-1]
        print(f"final-pass deterministic hit rate: {last.deterministic_hit_rate:.3f}")
    print(f"report -> {out / 'bench.json'}")
    return 0


def cmd_cache_stats(args) -> int:
    try:
        cache = MMCache.import_jsonl(args.snapshot)
    except OSError as exc:
        raise ConfigError(f"cannot read snapshot: {exc}")
    kinds: dict[str, int] = {}
    tiers: dict[str, int] = {}
    for entry in cache._entries.values():
        kinds[entry.kind] = kinds.get(entry.kind, 0) + 1
        tiers[entry.tier] = tiers.get(entry.tier, 0) + 1
    print(json.dumps({"entries": len(cache), "by_kind": kinds, "by_tier": tiers},
                     indent=2, sort_keys=True))
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="agentplan",
        description="Multi-objective optimizer for multi-agent workflows",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, workflow=True):
        p.add_argument("--registry", help="registry.json (default: shipped fixture)")
        p.add_argument("--models", help="models.json (default: shipped fixture)")
        p.add_argument("--engines", help="engines.json (default: shipped fixture)")
        if workflow:
            p.add_argument("--workflow", help="workflow JSON (default: shipped support fixture)")
        p.add_argument("--seed", type=int, default=None, help="seed (or AGENTPLAN_SEED)")
        p.add_argument("--objectives", default=DEFAULT_OBJECTIVES)
        p.add_argument("--policy", default=DEFAULT_POLICY)
        p.add_argument("--max-variants", type=int, default=8)
        p.add_argument("--out", default="out")

    p = sub.add_parser("validate", help="validate a workflow against the registry")
    common(p)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("optimize", help="compute the Pareto frontier")
    common(p)
    p.add_argument("--max-frontier", type=int, default=None)
    p.add_argument("--robust-lambda", type=float, default=0.0)
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("run", help="select a plan and simulate it")
    common(p)
    p.add_argument("--runs", type=int, default=1)
    p.add_argument("--tau", type=float, default=0.85)
    p.add_argument("--delta", type=float, default=None, help="deviation threshold (default 0.5)")
    p.add_argument("--min-samples", type=int, default=3)
    p.add_argument("--no-monitor", action="store_true")
    p.add_argument("--no-reopt", action="store_true", help="monitor records but never re-optimizes")
    p.add_argument("--cache", action="store_true", help="enable the result cache")
    p.add_argument("--cache-snapshot", action="store_true", help="export cache.jsonl")
    p.add_argument("--short-capacity", type=int, default=1024)
    p.add_argument("--long-capacity", type=int, default=8192)
    p.add_argument("--promote-hits", type=int, default=3)
    p.add_argument("--ttl", type=int, default=None)
    p.add_argument("--fault", action="append", default=[], help="engine:factor[:from_ms]")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("bench", help="generate a workload and benchmark it")
    common(p, workflow=False)
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--passes", type=int, default=1)
    p.add_argument("--cache", action="store_true")
    p.add_argument("--tau", type=float, default=0.85)
    p.add_argument("--profile", help="workload profile JSON")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("cache-stats", help="inspect a cache snapshot")
    p.add_argument("--snapshot", required=True)
    p.set_defaults(func=cmd_cache_stats)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except AgentPlanError as exc:
        print(f"fault: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
