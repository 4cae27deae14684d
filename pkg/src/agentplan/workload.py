"""Synthetic workload generation and benchmarking.

Workflows are drawn to match observed production distributions: structure
mix, task count, task inclusion rates, determinism split and engine-class
mix are all profile parameters. Generated agents are identified by their
content (task, determinism, roles, hint), so identical task chains across
workflows share agents — the redundancy that makes caching pay off.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .cache import MMCache
from .costs import ObjectiveSet
from .errors import GenerationError
from .fixtures import CATALOG_CAPABILITIES
from .planner import SelectionPolicy, WeightedPolicy, optimize, select
from .pools import Pools
from .simulator import Simulator
from .workflow import (
    AbstractWorkflow,
    AgentSpec,
    CapabilityId,
    Edge,
    NodeWorkload,
    classify_structure,
    validate,
)

#: Structures the classifier can only recognize by tag; excluded from
#: optimization benchmarks.
NON_OPTIMIZABLE = frozenset({"pub-sub", "cyclic", "mesh", "hybrid"})

_CLASS_MODALITY = {
    "relational": "structured",
    "analytics": "structured",
    "vector": "vector",
    "streaming": "stream",
}


@dataclass(frozen=True)
class WorkloadProfile:
    structure_mix: Mapping[str, float] = field(
        default_factory=lambda: {
            "chain": 0.34,
            "dag": 0.25,
            "tree": 0.24,
            "branching-chain": 0.06,
            "hybrid": 0.04,
            "pub-sub": 0.03,
            "cyclic": 0.02,
            "mesh": 0.01,
        }
    )
    task_count_range: tuple[int, int] = (3, 15)
    task_count_mode: int = 6
    task_inclusion: Mapping[str, float] = field(
        default_factory=lambda: {
            "data-ingestion": 1.00,
            "connect-sources": 1.00,
            "entity-extraction": 0.77,
            "generate-report": 0.70,
            "send-report": 0.61,
            "unstructured-analysis": 0.55,
            "entity-linkage": 0.44,
        }
    )
    deterministic_fraction: float = 0.43
    engine_class_mix: Mapping[str, float] = field(
        default_factory=lambda: {
            "relational": 0.60,
            "analytics": 0.23,
            "vector": 0.09,
            "streaming": 0.08,
        }
    )

    def validated(self) -> "WorkloadProfile":
        """Check consistency. The published structure percentages round to
        0.99 (mesh is quoted as <1%), so mixes are accepted within 5% of
        unity and renormalized at sampling time."""
        for name, mix in (("structure_mix", self.structure_mix), ("engine_class_mix", self.engine_class_mix)):
            total = sum(mix.values())
            if abs(total - 1.0) > 0.05:
                raise GenerationError(f"{name} sums to {total}, expected 1")
            if any(p < 0 or p > 1 for p in mix.values()):
                raise GenerationError(f"{name} has probabilities outside [0, 1]")
        if not 0.0 <= self.deterministic_fraction <= 1.0:
            raise GenerationError("deterministic_fraction outside [0, 1]")
        for task, p in self.task_inclusion.items():
            if not 0.0 <= p <= 1.0:
                raise GenerationError(f"inclusion probability for {task} outside [0, 1]")
        lo, hi = self.task_count_range
        if lo < 3 or hi < lo:
            raise GenerationError("task count range must satisfy 3 <= lo <= hi")
        return self

    def to_json(self) -> dict:
        return {
            "structure_mix": dict(self.structure_mix),
            "task_count_range": list(self.task_count_range),
            "task_count_mode": self.task_count_mode,
            "task_inclusion": dict(self.task_inclusion),
            "deterministic_fraction": self.deterministic_fraction,
            "engine_class_mix": dict(self.engine_class_mix),
        }

    @staticmethod
    def from_json(doc: Mapping) -> "WorkloadProfile":
        return WorkloadProfile(
            structure_mix=dict(doc["structure_mix"]),
            task_count_range=tuple(doc["task_count_range"]),
            task_count_mode=int(doc["task_count_mode"]),
            task_inclusion=dict(doc["task_inclusion"]),
            deterministic_fraction=float(doc["deterministic_fraction"]),
            engine_class_mix=dict(doc["engine_class_mix"]),
        )


DEFAULT_PROFILE = WorkloadProfile()


def _task_count_pmf(profile: WorkloadProfile) -> tuple[np.ndarray, np.ndarray]:
    # Discrete triangular: linear ramp up to the mode, linear decay after.
    lo, hi = profile.task_count_range
    mode = profile.task_count_mode
    counts = np.arange(lo, hi + 1)
    weights = np.where(
        counts <= mode,
        counts - lo + 1.0,
        (mode - lo + 1.0) * (hi + 1.0 - counts) / (hi + 1.0 - mode),
    )
    return counts, weights / weights.sum()


def _draw_categorical(rng: np.random.Generator, mix: Mapping[str, float]) -> str:
    names = sorted(mix)
    probs = np.array([mix[n] for n in names], dtype=float)
    probs = probs / probs.sum()
    return names[int(rng.choice(len(names), p=probs))]


@dataclass
class _TaskDraw:
    task: str
    deterministic: bool
    hint: Optional[str]


def _draw_tasks(rng: np.random.Generator, profile: WorkloadProfile, count: int) -> list[_TaskDraw]:
    included = [
        task
        for task, p in sorted(profile.task_inclusion.items(), key=lambda kv: (-kv[1], kv[0]))
        if rng.random() < p
    ]
    tasks = included[:count]
    catalog = list(CATALOG_CAPABILITIES)
    while len(tasks) < count:
        tasks.append(catalog[int(rng.integers(len(catalog)))])
    draws = []
    for task in tasks:
        deterministic = rng.random() < profile.deterministic_fraction
        hint = _draw_categorical(rng, profile.engine_class_mix) if deterministic else None
        draws.append(_TaskDraw(task=task, deterministic=deterministic, hint=hint))
    return draws


def _skeleton(rng: np.random.Generator, structure: str, count: int) -> tuple[list[tuple[int, int, str]], int]:
    """Edge skeleton over node indices: (src, dst, kind); returns the edges
    and the possibly adjusted node count (trees need two splitters)."""
    edges: list[tuple[int, int, str]] = []
    if structure == "chain":
        edges = [(i, i + 1, "data") for i in range(count - 1)]
    elif structure == "branching-chain":
        split = int(rng.integers(0, max(1, count - 2)))  # at most count-3
        edges = [(i, i + 1, "data") for i in range(split)]
        rest = list(range(split + 1, count))
        cut = 1 + int(rng.integers(0, len(rest) - 1)) if len(rest) > 2 else 1
        first, second = rest[:cut], rest[cut:]
        for branch in (first, second):
            prev = split
            for idx in branch:
                edges.append((prev, idx, "data"))
                prev = idx
    elif structure == "tree":
        count = max(count, 5)
        edges = [(0, 1, "data"), (0, 2, "data"), (1, 3, "data"), (1, 4, "data")]
        for idx in range(5, count):
            parent = int(rng.integers(0, idx))
            edges.append((parent, idx, "data"))
    elif structure == "dag":
        edges = [(i, i + 1, "data") for i in range(count - 1)]
        if count >= 3:
            j = int(rng.integers(2, count))
            i = int(rng.integers(0, j - 1))
            edges.append((i, j, "data"))
    elif structure == "hybrid":
        edges = [(i, i + 1, "data") for i in range(count - 1)]
        if count >= 3:
            edges.append((0, count - 1, "data"))
        edges.append((count - 1, 0, "feedback"))
    elif structure == "pub-sub":
        edges = [(0, i, "data") for i in range(1, count)]
        edges.extend((i, 0, "feedback") for i in range(1, count))
    elif structure == "cyclic":
        edges = [(i, i + 1, "data") for i in range(count - 1)]
        edges.append((count - 1, 0, "feedback"))
    elif structure == "mesh":
        for i in range(count):
            for j in (i + 1, i + 2):
                if j < count:
                    edges.append((i, j, "data"))
        edges.append((count - 1, 0, "feedback"))
    else:
        raise GenerationError(f"unknown structure {structure!r}")
    return edges, count


def _agent_id(task: str, deterministic: bool, input_role: str, output_role: str, hint: Optional[str]) -> str:
    # Content-derived identity: identical task instances across workflows
    # collapse onto one registry agent, creating workload redundancy.
    fingerprint = hashlib.sha256(
        f"{task}|{deterministic}|{input_role}|{output_role}|{hint or ''}".encode()
    ).hexdigest()[:8]
    kind = "det" if deterministic else "sto"
    return f"{task}-{kind}-{fingerprint}"


def generate(n: int, profile: WorkloadProfile = DEFAULT_PROFILE, seed: int = 0) -> list[AbstractWorkflow]:
    """Draw n abstract workflows matching the profile. Deterministic for a
    fixed (n, profile, seed); every output validates."""
    if n < 1:
        raise GenerationError("n must be >= 1")
    profile = profile.validated()
    rng = np.random.default_rng(seed)
    counts, pmf = _task_count_pmf(profile)

    workflows = []
    for i in range(n):
        structure = _draw_categorical(rng, profile.structure_mix)
        count = int(rng.choice(counts, p=pmf))
        skeleton, count = _skeleton(rng, structure, count)
        draws = _draw_tasks(rng, profile, count)

        preds: dict[int, list[int]] = {k: [] for k in range(count)}
        for src, dst, kind in skeleton:
            if kind == "data":
                preds[dst].append(src)

        specs: list[AgentSpec] = []
        output_roles: dict[int, str] = {}
        used_ids: set[str] = set()
        workloads: dict[str, NodeWorkload] = {}
        for idx in range(count):
            draw = draws[idx]
            output_role = f"{draw.task}.out"
            parents = sorted(preds[idx])
            input_role = output_roles[parents[0]] if parents else f"src-{draw.task}"
            agent_id = _agent_id(draw.task, draw.deterministic, input_role, output_role, draw.hint)
            while agent_id in used_ids:
                agent_id += "x"
            used_ids.add(agent_id)
            output_roles[idx] = output_role
            modality = _CLASS_MODALITY.get(draw.hint or "", "unstructured-text")
            specs.append(
                AgentSpec(
                    agent_id=agent_id,
                    capability=CapabilityId(id=draw.task, modality=modality),
                    description=f"{draw.task} ({'deterministic' if draw.deterministic else 'stochastic'})",
                    input_role=input_role,
                    output_role=output_role,
                    determinism="deterministic" if draw.deterministic else "stochastic",
                    engine_class_hint=draw.hint,
                )
            )
            if draw.deterministic:
                cardinality = int(np.clip(rng.lognormal(mean=7.6, sigma=1.2), 10, 100_000))
                workloads[agent_id] = NodeWorkload(cardinality, 0, 0)
            else:
                workloads[agent_id] = NodeWorkload(
                    int(np.clip(rng.lognormal(mean=5.5, sigma=1.0), 1, 20_000)),
                    int(rng.integers(150, 2_500)),
                    int(rng.integers(50, 900)),
                )

        edges = []
        for src, dst, kind in skeleton:
            if kind == "feedback":
                edges.append(Edge(specs[src].agent_id, specs[dst].agent_id, kind="feedback"))
                continue
            primary = sorted(preds[dst])[0] == src
            role_match = specs[src].output_role == specs[dst].input_role
            edges.append(
                Edge(
                    specs[src].agent_id,
                    specs[dst].agent_id,
                    kind="data",
                    adapter=not (primary or role_match),
                )
            )

        tag = structure if structure in NON_OPTIMIZABLE else None
        w = AbstractWorkflow(
            name=f"wf-{seed}-{i:05d}",
            nodes=tuple(specs),
            edges=tuple(edges),
            structure_tag=tag,
            workloads=workloads,
        )
        report = validate(w)
        if not report.ok:
            raise GenerationError(f"generated workflow invalid: {report.violations}")
        workflows.append(w)
    return workflows


def synthetic_registry(workflows: Iterable[AbstractWorkflow]) -> dict[str, AgentSpec]:
    registry: dict[str, AgentSpec] = {}
    for w in workflows:
        for spec in w.nodes:
            registry[spec.agent_id] = spec
    return registry


def extend_pools(pools: Pools, workflows: Iterable[AbstractWorkflow]) -> Pools:
    """Pools with the registry widened to cover generated agents."""
    registry = dict(pools.registry)
    registry.update(synthetic_registry(workflows))
    return Pools(registry=registry, models=pools.models, engines=pools.engines)


# ---------------------------------------------------------------------------
# Benchmarking


@dataclass
class PassReport:
    frontier_hashes: list[frozenset]
    selected_hashes: list[str]
    frontier_sizes: list[int]
    planning_seconds: float
    run_seconds: float
    total_latency_ms: float
    total_monetary_usd: float
    total_tokens: int
    total_energy_j: float
    deterministic_hit_rate: float
    cache_stats: Optional[dict] = None

    def as_dict(self) -> dict:
        return {
            "frontier_sizes": self.frontier_sizes,
            "selected": self.selected_hashes,
            "timing": {"planning_seconds": self.planning_seconds, "run_seconds": self.run_seconds},
            "totals": {
                "latency_ms": self.total_latency_ms,
                "monetary_usd": self.total_monetary_usd,
                "tokens": self.total_tokens,
                "energy_j": self.total_energy_j,
            },
            "deterministic_hit_rate": self.deterministic_hit_rate,
            "cache_stats": self.cache_stats,
        }


@dataclass
class BenchReport:
    n_workflows: int
    n_excluded: int
    passes_baseline: list[PassReport]
    passes_cached: Optional[list[PassReport]]
    frontiers_identical: Optional[bool]
    selections_identical: Optional[bool]

    def as_dict(self) -> dict:
        deltas = None
        if self.passes_cached is not None:
            base = self.passes_baseline
            cached = self.passes_cached
            deltas = {
                "planning_seconds": sum(p.planning_seconds for p in base)
                - sum(p.planning_seconds for p in cached),
                "run_seconds": sum(p.run_seconds for p in base) - sum(p.run_seconds for p in cached),
                "latency_ms": sum(p.total_latency_ms for p in base)
                - sum(p.total_latency_ms for p in cached),
                "monetary_usd": sum(p.total_monetary_usd for p in base)
                - sum(p.total_monetary_usd for p in cached),
            }
        return {
            "n_workflows": self.n_workflows,
            "n_excluded": self.n_excluded,
            "baseline": [p.as_dict() for p in self.passes_baseline],
            "cached": [p.as_dict() for p in self.passes_cached] if self.passes_cached else None,
            "frontiers_identical": self.frontiers_identical,
            "selections_identical": self.selections_identical,
            "cache_deltas": deltas,
        }


def _run_pass_set(
    workflows: Sequence[AbstractWorkflow],
    pools: Pools,
    objectives: ObjectiveSet,
    policy: SelectionPolicy,
    seed: int,
    passes: int,
    cache: Optional[MMCache],
    tau: float,
    max_variants: int,
) -> list[PassReport]:
    reports = []
    for pass_idx in range(passes):
        plan_clock = 0.0
        run_clock = 0.0
        frontier_hashes = []
        selected = []
        sizes = []
        totals = [0.0, 0.0, 0, 0.0]
        det_records = 0
        det_hits = 0
        before = json.dumps(cache.stats(), sort_keys=True) if cache is not None else None
        for i, w in enumerate(workflows):
            t0 = time.perf_counter()
            frontier = optimize(
                w, objectives, pools, max_variants=max_variants, plan_cache=cache
            )
            context = MMCache.policy_context(
                classify_structure(w), objectives.dimensions, policy.describe()
            )
            entry = select(
                frontier,
                policy,
                policy_cache=cache,
                context_key=context if cache is not None else None,
            )
            plan_clock += time.perf_counter() - t0

            t1 = time.perf_counter()
            sim = Simulator(pools, cache=cache, tau=tau)
            result = sim.run(entry.plan, seed=seed + i, run_id=pass_idx)
            run_clock += time.perf_counter() - t1

            frontier_hashes.append(frontier.hashes())
            selected.append(entry.hash)
            sizes.append(len(frontier))
            totals[0] += result.total_latency_ms
            totals[1] += result.total_monetary_usd
            totals[2] += result.total_tokens
            totals[3] += result.total_energy_j
            for record in result.telemetry:
                if not w.agent(record.agent_id).is_stochastic:
                    det_records += 1
                    det_hits += int(record.cache_hit)
        stats_snapshot = None
        if cache is not None:
            stats_snapshot = {"before": json.loads(before), "after": cache.stats()}
        reports.append(
            PassReport(
                frontier_hashes=frontier_hashes,
                selected_hashes=selected,
                frontier_sizes=sizes,
                planning_seconds=plan_clock,
                run_seconds=run_clock,
                total_latency_ms=totals[0],
                total_monetary_usd=totals[1],
                total_tokens=totals[2],
                total_energy_j=totals[3],
                deterministic_hit_rate=(det_hits / det_records) if det_records else 0.0,
                cache_stats=stats_snapshot,
            )
        )
    return reports


def bench(
    workflows: Sequence[AbstractWorkflow],
    pools: Pools,
    objectives: ObjectiveSet | Sequence[str],
    *,
    policy: Optional[SelectionPolicy] = None,
    cache_enabled: bool = False,
    cache: Optional[MMCache] = None,
    seed: int = 0,
    passes: int = 1,
    tau: float = 0.85,
    max_variants: int = 4,
) -> BenchReport:
    """Optimize and simulate each workflow in sequence through a shared cache.

    With caching enabled the same pass set first runs uncached as a baseline,
    so the report carries cache-on vs cache-off deltas and the transparency
    comparison (identical frontiers and selections). Structures without an
    optimization semantics (tagged pub-sub/cyclic/mesh/hybrid) are skipped
    and counted.
    """
    objectives = objectives if isinstance(objectives, ObjectiveSet) else ObjectiveSet(tuple(objectives))
    if policy is None:
        weight = 1.0 / len(objectives)
        policy = WeightedPolicy(weights={d: weight for d in objectives.dimensions})
    runnable = [w for w in workflows if (w.structure_tag or "") not in NON_OPTIMIZABLE]
    pools = extend_pools(pools, runnable)

    baseline = _run_pass_set(
        runnable, pools, objectives, policy, seed, passes, cache=None, tau=tau, max_variants=max_variants
    )
    cached = None
    frontiers_identical = None
    selections_identical = None
    if cache_enabled:
        shared = cache if cache is not None else MMCache()
        cached = _run_pass_set(
            runnable, pools, objectives, policy, seed, passes, cache=shared, tau=tau, max_variants=max_variants
        )
        frontiers_identical = all(
            b.frontier_hashes == c.frontier_hashes for b, c in zip(baseline, cached)
        )
        selections_identical = all(
            b.selected_hashes == c.selected_hashes for b, c in zip(baseline, cached)
        )
    return BenchReport(
        n_workflows=len(runnable),
        n_excluded=len(workflows) - len(runnable),
        passes_baseline=baseline,
        passes_cached=cached,
        frontiers_identical=frontiers_identical,
        selections_identical=selections_identical,
    )
