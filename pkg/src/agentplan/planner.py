"""Multi-objective plan enumeration and Pareto frontier maintenance.

The planner walks every structure variant, binds nodes in topological order
and keeps, per prefix, only partial plans that cannot be beaten. Pruning is
deliberately conservative: a partial plan is discarded only when a sibling
is at least as good everywhere *and* strictly better in a way no shared
extension can erase. Strict advantages in additive dimensions (money,
tokens, energy) are durable; a latency advantage is durable only once the
layer holding it has closed, because parallel max-composition can swallow
in-layer leads. This keeps the untruncated frontier set-equal to exhaustive
enumeration.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Optional, Sequence

from .cache import MMCache, plan_signature
from .costs import (
    DIMENSIONS,
    ERROR,
    LATENCY,
    ZERO_COST,
    CostDistribution,
    ObjectiveSet,
    StatisticsStore,
    compose_parallel,
    compose_sequential,
    estimate_node,
)
from .errors import InfeasiblePolicyError, PlanningError, SpaceTooLargeError
from .pools import Pools, candidate_bindings
from .workflow import (
    AbstractWorkflow,
    Binding,
    ExecutableWorkflow,
    ancestors,
    canonical_hash,
    classify_structure,
    plan_hash,
    rewrite_variants,
    to_dot,
    topo_order,
    validate,
)

EPS = 1e-9
DEFAULT_MAX_VARIANTS = 8
BRUTE_FORCE_BOUND = 100_000


# ---------------------------------------------------------------------------
# Dominance


def dominates(u: CostDistribution, v: CostDistribution, objectives: ObjectiveSet) -> bool:
    """u dominates v iff u's mean is <= v's on every objective and strictly
    below on at least one (tolerance EPS)."""
    strictly_better = False
    for i in objectives.indices:
        if u.means[i] > v.means[i] + EPS:
            return False
        if u.means[i] < v.means[i] - EPS:
            strictly_better = True
    return strictly_better


def _score_vector(cost: CostDistribution, objectives: ObjectiveSet, robust_lambda: float) -> tuple:
    if robust_lambda == 0.0:
        return tuple(cost.means[i] for i in objectives.indices)
    return tuple(
        cost.means[i] + robust_lambda * math.sqrt(cost.variances[i]) for i in objectives.indices
    )


@dataclass(frozen=True)
class FrontierEntry:
    plan: ExecutableWorkflow
    cost: CostDistribution
    hash: str


@dataclass(frozen=True)
class ParetoFrontier:
    entries: tuple[FrontierEntry, ...]
    objectives: ObjectiveSet
    truncated: int = 0

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def hashes(self) -> frozenset[str]:
        return frozenset(e.hash for e in self.entries)


def pareto_filter(
    entries: Iterable[tuple],
    objectives: ObjectiveSet,
    robust_lambda: float = 0.0,
) -> ParetoFrontier:
    """Exactly the non-dominated subset. Distinct plans with tied costs are
    all kept. Sorted candidates can only be dominated by earlier frontier
    members, so one pass against the running frontier suffices.

    Entries are (plan, cost) or (plan, cost, precomputed_hash) tuples."""
    keyed = []
    for entry in entries:
        plan, cost = entry[0], entry[1]
        h = entry[2] if len(entry) > 2 else plan_hash(plan)
        keyed.append((_score_vector(cost, objectives, robust_lambda), h, plan, cost))
    keyed.sort(key=lambda t: (t[0], t[1]))
    frontier: list[tuple[tuple, str, ExecutableWorkflow, CostDistribution]] = []
    for key, h, plan, cost in keyed:
        dominated = False
        for fkey, _, _, _ in frontier:
            if _key_dominates(fkey, key):
                dominated = True
                break
        if not dominated:
            frontier.append((key, h, plan, cost))
    result = [FrontierEntry(plan=p, cost=c, hash=h) for _, h, p, c in frontier]
    result.sort(key=lambda e: (e.cost.means, e.hash))
    return ParetoFrontier(entries=tuple(result), objectives=objectives)


def _key_dominates(u: tuple, v: tuple) -> bool:
    strictly = False
    for a, b in zip(u, v):
        if a > b + EPS:
            return False
        if a < b - EPS:
            strictly = True
    return strictly


# ---------------------------------------------------------------------------
# Enumeration machinery


@dataclass(frozen=True)
class _Partial:
    bindings: tuple[Binding, ...]
    completed: CostDistribution
    layer_fold: Optional[CostDistribution]  # parallel fold of the open layer

    def extend(self, binding: Binding, cost: CostDistribution) -> "_Partial":
        fold = cost if self.layer_fold is None else compose_parallel(self.layer_fold, cost)
        return _Partial(self.bindings + (binding,), self.completed, fold)

    def close_layer(self) -> "_Partial":
        if self.layer_fold is None:
            return self
        return _Partial(self.bindings, compose_sequential(self.completed, self.layer_fold), None)

    def prefix(self) -> CostDistribution:
        if self.layer_fold is None:
            return self.completed
        return compose_sequential(self.completed, self.layer_fold)

    @property
    def completed_latency(self) -> float:
        return self.completed.means[LATENCY]

    @property
    def inlayer_latency(self) -> float:
        return self.layer_fold.means[LATENCY] if self.layer_fold is not None else 0.0


def _durably_dominates(
    a: _Partial,
    pa: CostDistribution,
    b: _Partial,
    pb: CostDistribution,
    objectives: ObjectiveSet,
    error_durable: bool,
) -> bool:
    """Whether a beats b in a way that survives any common extension."""
    strict = False
    for i in objectives.indices:
        if i == LATENCY:
            # Compare components: in-layer leads are not durable because a
            # later sibling in the same layer can max them away.
            if a.completed_latency > b.completed_latency + EPS:
                return False
            if a.inlayer_latency > b.inlayer_latency + EPS:
                return False
            if a.completed_latency < b.completed_latency - EPS:
                strict = True
        else:
            if pa.means[i] > pb.means[i] + EPS:
                return False
            if pa.means[i] < pb.means[i] - EPS:
                if i == ERROR and not error_durable:
                    continue  # a unit-error node downstream would tie them
                strict = True
    return strict


def _prune_partials(
    partials: list[_Partial], objectives: ObjectiveSet, error_durable: bool
) -> list[_Partial]:
    if len(partials) <= 1:
        return partials
    prefixes = [p.prefix() for p in partials]

    def sort_key(i: int):
        return (
            prefixes[i].means,
            tuple((b.agent_id, b.engine, b.model or "") for b in partials[i].bindings),
        )

    order = sorted(range(len(partials)), key=sort_key)
    kept: list[int] = []
    for i in order:
        dominated = False
        for j in kept:
            if _durably_dominates(partials[j], prefixes[j], partials[i], prefixes[i], objectives, error_durable):
                dominated = True
                break
        if not dominated:
            kept.append(i)
    kept.sort()
    return [partials[i] for i in kept]


def _latency_surcharge(variant: AbstractWorkflow, hub_edge_latency_ms: float) -> Optional[CostDistribution]:
    """Optional per-hub-edge latency penalty for orchestrated structures."""
    if hub_edge_latency_ms <= 0.0:
        return None
    hubs = {s.agent_id for s in variant.nodes if s.capability.id == "orchestration"}
    count = sum(1 for e in variant.data_edges() if e.src in hubs)
    if count == 0:
        return None
    return CostDistribution(means=(hub_edge_latency_ms * count, 0.0, 0.0, 0.0, 0.0))


class _NodeCosts:
    """Memoized estimate_node over (agent, binding) pairs."""

    def __init__(self, pools: Pools, stats: Optional[StatisticsStore], frozen: Mapping[str, CostDistribution]):
        self.pools = pools
        self.stats = stats
        self.frozen = frozen
        self._memo: dict[tuple, CostDistribution] = {}

    def cost(self, variant: AbstractWorkflow, agent_id: str, binding: Binding) -> CostDistribution:
        if agent_id in self.frozen:
            return self.frozen[agent_id]
        key = (agent_id, binding.engine, binding.model or "")
        hit = self._memo.get(key)
        if hit is None:
            agent = variant.agent(agent_id)
            hit = estimate_node(agent, binding, variant.workload_of(agent_id), self.pools, self.stats)
            self._memo[key] = hit
        return hit


def _candidate_map(
    variant: AbstractWorkflow,
    pools: Pools,
    fixed: Mapping[str, Binding],
) -> dict[str, list[Binding]]:
    out: dict[str, list[Binding]] = {}
    for spec in variant.nodes:
        if spec.agent_id in fixed:
            out[spec.agent_id] = [fixed[spec.agent_id]]
            continue
        cands = candidate_bindings(spec, pools)
        if not cands:
            raise PlanningError(
                f"agent {spec.agent_id!r} (capability {spec.capability.id!r}) has no "
                f"candidate bindings in the current pools",
                agent_id=spec.agent_id,
            )
        out[spec.agent_id] = cands
    return out


def _plan_variant(
    variant: AbstractWorkflow,
    objectives: ObjectiveSet,
    candidates: Mapping[str, list[Binding]],
    node_costs: _NodeCosts,
    error_durable: bool,
    hub_edge_latency_ms: float,
    prune: bool,
) -> list[tuple[dict[str, Binding], CostDistribution]]:
    layers = topo_order(variant)
    partials = [_Partial(bindings=(), completed=ZERO_COST, layer_fold=None)]
    for layer in layers:
        for agent_id in layer:
            extended: list[_Partial] = []
            for partial in partials:
                for binding in candidates[agent_id]:
                    cost = node_costs.cost(variant, agent_id, binding)
                    extended.append(partial.extend(binding, cost))
            partials = _prune_partials(extended, objectives, error_durable) if prune else extended
        partials = [p.close_layer() for p in partials]
        if prune:
            partials = _prune_partials(partials, objectives, error_durable)
    surcharge = _latency_surcharge(variant, hub_edge_latency_ms)
    out = []
    for partial in partials:
        total = partial.completed
        if surcharge is not None:
            total = compose_sequential(total, surcharge)
        out.append(({b.agent_id: b for b in partial.bindings}, total))
    return out


def _error_one_possible(candidates_by_variant: Iterable[Mapping[str, list[Binding]]], pools: Pools) -> bool:
    for cand_map in candidates_by_variant:
        for cands in cand_map.values():
            for b in cands:
                if b.model is None:
                    continue
                model = pools.models[b.model]
                for q in model.capabilities.values():
                    if q <= EPS:
                        return True
    return False


def _enumerate(
    w: AbstractWorkflow,
    objectives: ObjectiveSet,
    pools: Pools,
    stats: Optional[StatisticsStore],
    *,
    fixed: Mapping[str, Binding],
    frozen_costs: Mapping[str, CostDistribution],
    max_variants: int,
    hub_edge_latency_ms: float,
    prune: bool,
    variant_filter: Optional[Callable[[AbstractWorkflow], bool]] = None,
    extra_variants: tuple[AbstractWorkflow, ...] = (),
    plan_cache: Optional[MMCache] = None,
) -> list[tuple[ExecutableWorkflow, CostDistribution, str]]:
    report = validate(w, pools.registry)
    if not report.ok:
        raise PlanningError("invalid workflow: " + "; ".join(report.violations))

    candidates_pool = list(rewrite_variants(w, max_variants, pools.registry))
    known = {canonical_hash(v) for v in candidates_pool}
    for extra in extra_variants:
        if canonical_hash(extra) not in known:
            candidates_pool.append(extra)
    variants = [v for v in candidates_pool if variant_filter is None or variant_filter(v)]
    candidate_maps = {id(v): _candidate_map(v, pools, fixed) for v in variants}
    error_durable = not _error_one_possible(candidate_maps.values(), pools)
    node_costs = _NodeCosts(pools, stats, frozen_costs)

    plans: list[tuple[ExecutableWorkflow, CostDistribution, str]] = []
    seen: set[str] = set()
    for variant in variants:
        cand_map = candidate_maps[id(variant)]
        if plan_cache is not None:
            _seed_from_plan_cache(variant, cand_map, plan_cache)
        variant_plans = _plan_variant(
            variant, objectives, cand_map, node_costs, error_durable, hub_edge_latency_ms, prune
        )
        # Topo order and base hash are shared by every plan of a variant.
        order = topo_order(variant)
        base_hash = canonical_hash(variant)
        best: Optional[tuple[tuple, ExecutableWorkflow, CostDistribution]] = None
        for bindings, cost in variant_plans:
            ordered = tuple(sorted(bindings.values(), key=lambda b: b.agent_id))
            ew = ExecutableWorkflow(base=variant, bindings=ordered, order=order, origin=w)
            h = _plan_hash_fast(base_hash, ordered)
            if h not in seen:
                seen.add(h)
                plans.append((ew, cost, h))
            key = (cost.means, h)
            if best is None or key < best[0]:
                best = (key, ew, cost)
        if plan_cache is not None and best is not None:
            plan_cache.put_plan(plan_signature(variant), best[1].bindings, best[2])
    return plans


def _plan_hash_fast(base_hash: str, bindings: tuple[Binding, ...]) -> str:
    # Same payload layout as workflow.plan_hash, with the base hash reused.
    payload = {
        "workflow": base_hash,
        "bindings": sorted((b.agent_id, b.engine, b.model or "") for b in bindings),
    }
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def _seed_from_plan_cache(variant, cand_map, plan_cache: MMCache) -> None:
    # A hit can only warm the search: cached bindings are validated against
    # the live candidate sets and their costs are re-estimated, so results
    # never depend on cache contents.
    hit = plan_cache.get_plan(plan_signature(variant))
    if hit is None:
        return
    bindings, _stale_cost = hit
    valid = all(
        b.agent_id in cand_map and b in cand_map[b.agent_id] for b in bindings
    ) and len(bindings) == len(cand_map)
    if not valid:
        return
    # Move cached bindings to the front of each candidate list so the warm
    # plan is materialized first (pure ordering change).
    for b in bindings:
        cands = cand_map[b.agent_id]
        if cands and cands[0] != b:
            cands.remove(b)
            cands.insert(0, b)


# ---------------------------------------------------------------------------
# Public planning operations


def optimize(
    w: AbstractWorkflow,
    objectives: ObjectiveSet | Sequence[str],
    pools: Pools,
    stats: Optional[StatisticsStore] = None,
    *,
    max_variants: int = DEFAULT_MAX_VARIANTS,
    max_frontier: Optional[int] = None,
    robust_lambda: float = 0.0,
    hub_edge_latency_ms: float = 0.0,
    plan_cache: Optional[MMCache] = None,
) -> ParetoFrontier:
    """Enumerate structure variants x bindings and return the Pareto frontier.

    With robust_lambda > 0 dominance runs on mean + lambda*sqrt(variance)
    scores; score-based pruning is not extension-safe under parallel
    max-composition, so that mode enumerates exhaustively before filtering.
    """
    objectives = objectives if isinstance(objectives, ObjectiveSet) else ObjectiveSet(tuple(objectives))
    prune = robust_lambda == 0.0
    plans = _enumerate(
        w,
        objectives,
        pools,
        stats,
        fixed={},
        frozen_costs={},
        max_variants=max_variants,
        hub_edge_latency_ms=hub_edge_latency_ms,
        prune=prune,
        plan_cache=plan_cache,
    )
    frontier = pareto_filter(plans, objectives, robust_lambda)
    return _truncate(frontier, max_frontier)


def brute_force(
    w: AbstractWorkflow,
    objectives: ObjectiveSet | Sequence[str],
    pools: Pools,
    stats: Optional[StatisticsStore] = None,
    *,
    max_variants: int = DEFAULT_MAX_VARIANTS,
    bound: int = BRUTE_FORCE_BOUND,
    robust_lambda: float = 0.0,
    hub_edge_latency_ms: float = 0.0,
) -> ParetoFrontier:
    """Exhaustive oracle: every plan in the space, estimated and filtered."""
    objectives = objectives if isinstance(objectives, ObjectiveSet) else ObjectiveSet(tuple(objectives))
    from .pools import space_size

    size = space_size(w, pools, max_variants)
    if size.unsatisfiable:
        raise PlanningError(
            f"unsatisfiable agents: {', '.join(size.unsatisfiable)}", agent_id=size.unsatisfiable[0]
        )
    if size.total > bound:
        raise SpaceTooLargeError(size.total, bound)
    plans = _enumerate(
        w,
        objectives,
        pools,
        stats,
        fixed={},
        frozen_costs={},
        max_variants=max_variants,
        hub_edge_latency_ms=hub_edge_latency_ms,
        prune=False,
    )
    return pareto_filter(plans, objectives, robust_lambda)


def reoptimize(
    ew: ExecutableWorkflow,
    done: Iterable[str],
    objectives: ObjectiveSet | Sequence[str],
    pools: Pools,
    stats: Optional[StatisticsStore] = None,
    *,
    realized: Optional[Mapping[str, CostDistribution]] = None,
    max_variants: int = DEFAULT_MAX_VARIANTS,
    max_frontier: Optional[int] = None,
    robust_lambda: float = 0.0,
    hub_edge_latency_ms: float = 0.0,
) -> ParetoFrontier:
    """Re-plan the unexecuted suffix of a running plan.

    Bindings of completed nodes are frozen, their costs taken from realized
    telemetry where available (estimates otherwise). Rewrites restart from
    the plan's origin workflow, filtered to variants that reproduce the
    executed prefix exactly, so an empty done set reproduces optimize.
    """
    objectives = objectives if isinstance(objectives, ObjectiveSet) else ObjectiveSet(tuple(objectives))
    done_set = set(done)
    base = ew.base
    origin = ew.rewrite_origin
    for agent_id in done_set:
        if agent_id not in base.agent_ids:
            raise PlanningError(f"done node {agent_id!r} not in workflow")
        missing = ancestors(base, agent_id) - done_set
        if missing:
            raise PlanningError(
                f"done set is not downward-closed: {agent_id} ran before {sorted(missing)}"
            )

    binding_map = ew.binding_map()
    fixed = {a: binding_map[a] for a in done_set}
    frozen_costs: dict[str, CostDistribution] = {}
    for agent_id in done_set:
        if realized is not None and agent_id in realized:
            frozen_costs[agent_id] = realized[agent_id]
        else:
            frozen_costs[agent_id] = estimate_node(
                base.agent(agent_id), binding_map[agent_id], base.workload_of(agent_id), pools, stats
            )

    base_done_edges = {
        (e.src, e.dst) for e in base.data_edges() if e.src in done_set and e.dst in done_set
    }

    def keeps_prefix(variant: AbstractWorkflow) -> bool:
        if not done_set <= set(variant.agent_ids):
            return False
        variant_done_edges = {
            (e.src, e.dst) for e in variant.data_edges() if e.src in done_set and e.dst in done_set
        }
        if variant_done_edges != base_done_edges:
            return False
        for agent_id in done_set:
            if ancestors(variant, agent_id) - done_set:
                return False
        return True

    plans = _enumerate(
        origin,
        objectives,
        pools,
        stats,
        fixed=fixed,
        frozen_costs=frozen_costs,
        max_variants=max_variants,
        hub_edge_latency_ms=hub_edge_latency_ms,
        prune=robust_lambda == 0.0,
        variant_filter=keeps_prefix,
        extra_variants=(base,),
    )
    frontier = pareto_filter(plans, objectives, robust_lambda)
    return _truncate(frontier, max_frontier)


# ---------------------------------------------------------------------------
# Frontier truncation


def _truncate(frontier: ParetoFrontier, max_frontier: Optional[int]) -> ParetoFrontier:
    if max_frontier is None or len(frontier) <= max_frontier:
        return frontier
    entries = list(frontier.entries)
    objectives = frontier.objectives
    idx = objectives.indices

    lo = [min(e.cost.means[i] for e in entries) for i in idx]
    hi = [max(e.cost.means[i] for e in entries) for i in idx]

    def normalized(e: FrontierEntry) -> tuple[float, ...]:
        out = []
        for k, i in enumerate(idx):
            span = hi[k] - lo[k]
            out.append((e.cost.means[i] - lo[k]) / span if span > EPS else 0.0)
        return tuple(out)

    points = {e.hash: normalized(e) for e in entries}
    kept: list[FrontierEntry] = []
    kept_hashes: set[str] = set()
    # Extreme point per objective first.
    for k, i in enumerate(idx):
        if len(kept) >= max_frontier:
            break
        extreme = min(entries, key=lambda e: (e.cost.means[i], e.hash))
        if extreme.hash not in kept_hashes:
            kept.append(extreme)
            kept_hashes.add(extreme.hash)
    # Then greedily maximize spread.
    while len(kept) < max_frontier:
        best = None
        for e in entries:
            if e.hash in kept_hashes:
                continue
            dist = min(
                math.dist(points[e.hash], points[other.hash]) for other in kept
            ) if kept else math.inf
            key = (-dist, e.hash)
            if best is None or key < best[0]:
                best = (key, e)
        if best is None:
            break
        kept.append(best[1])
        kept_hashes.add(best[1].hash)
    kept.sort(key=lambda e: (e.cost.means, e.hash))
    return ParetoFrontier(
        entries=tuple(kept), objectives=objectives, truncated=len(entries) - len(kept)
    )


# ---------------------------------------------------------------------------
# Selection policies


@dataclass(frozen=True)
class WeightedPolicy:
    weights: Mapping[str, float]

    def __post_init__(self):
        total = sum(self.weights.values())
        if any(v < 0 for v in self.weights.values()):
            raise ValueError("weights must be >= 0")
        if abs(total - 1.0) > 1e-6:
            raise ValueError(f"weights must sum to 1, got {total}")

    def describe(self) -> str:
        return "weighted:" + ",".join(f"{k}={v}" for k, v in sorted(self.weights.items()))


@dataclass(frozen=True)
class LexicographicPolicy:
    priority: tuple[str, ...]

    def describe(self) -> str:
        return "lex:" + ",".join(self.priority)


@dataclass(frozen=True)
class ConstrainedPolicy:
    budgets: Mapping[str, float]
    minimize: str

    def describe(self) -> str:
        parts = ",".join(f"{k}<={v}" for k, v in sorted(self.budgets.items()))
        return f"constrained:{parts},min={self.minimize}"


SelectionPolicy = WeightedPolicy | LexicographicPolicy | ConstrainedPolicy


def _check_policy_refs(policy: SelectionPolicy, objectives: ObjectiveSet) -> None:
    if isinstance(policy, WeightedPolicy):
        refs = set(policy.weights)
    elif isinstance(policy, LexicographicPolicy):
        refs = set(policy.priority)
    else:
        refs = set(policy.budgets) | {policy.minimize}
    unknown = refs - set(objectives.dimensions)
    if unknown:
        raise ValueError(f"policy references objectives outside the set: {sorted(unknown)}")


def _weighted_scores(
    policy: WeightedPolicy, objectives: ObjectiveSet, costs: Sequence[CostDistribution]
) -> list[float]:
    idx = objectives.indices
    lo = [min(c.means[i] for c in costs) for i in idx]
    hi = [max(c.means[i] for c in costs) for i in idx]
    scores = []
    for c in costs:
        score = 0.0
        for k, dim in enumerate(objectives.dimensions):
            w = policy.weights.get(dim, 0.0)
            span = hi[k] - lo[k]
            norm = (c.means[idx[k]] - lo[k]) / span if span > EPS else 0.0
            score += w * norm
        scores.append(score)
    return scores


def select(
    frontier: ParetoFrontier,
    policy: SelectionPolicy,
    *,
    policy_cache: Optional[MMCache] = None,
    context_key: Optional[str] = None,
) -> FrontierEntry:
    """Pick one plan off the frontier under the active policy.

    The policy cache is consulted as a confirmation fast path: a cached
    decision that is no longer on the frontier is recorded stale and
    ignored, so cache state never changes the selection.
    """
    if not frontier.entries:
        raise InfeasiblePolicyError("cannot select from an empty frontier")
    _check_policy_refs(policy, frontier.objectives)

    cached_hash: Optional[str] = None
    if policy_cache is not None and context_key is not None:
        cached_hash = policy_cache.get_policy(context_key)
        if cached_hash is not None and cached_hash not in frontier.hashes():
            policy_cache.mark_policy_stale(context_key)
            cached_hash = None

    winner = _apply_policy(frontier, policy)

    if policy_cache is not None and context_key is not None:
        if cached_hash != winner.hash:
            policy_cache.put_policy(context_key, winner.hash)
    return winner


def _apply_policy(frontier: ParetoFrontier, policy: SelectionPolicy) -> FrontierEntry:
    entries = list(frontier.entries)
    if isinstance(policy, WeightedPolicy):
        scores = _weighted_scores(policy, frontier.objectives, [e.cost for e in entries])
        return min(zip(scores, entries), key=lambda t: (t[0], t[1].hash))[1]

    if isinstance(policy, LexicographicPolicy):
        pool = entries
        for dim in policy.priority:
            best = min(e.cost.mean(dim) for e in pool)
            pool = [e for e in pool if e.cost.mean(dim) <= best + EPS]
            if len(pool) == 1:
                return pool[0]
        return min(pool, key=lambda e: e.hash)

    feasible = [
        e
        for e in entries
        if all(e.cost.mean(dim) <= budget + EPS for dim, budget in policy.budgets.items())
    ]
    if not feasible:
        misses = []
        for e in sorted(entries, key=lambda e: (e.cost.means, e.hash))[:3]:
            over = {
                dim: e.cost.mean(dim) - budget
                for dim, budget in policy.budgets.items()
                if e.cost.mean(dim) > budget + EPS
            }
            misses.append({"plan": e.hash, "over_budget": over})
        raise InfeasiblePolicyError(
            f"no plan satisfies budgets {dict(policy.budgets)}", nearest_misses=misses
        )
    return min(feasible, key=lambda e: (e.cost.mean(policy.minimize), e.hash))


def policy_prefers(
    policy: SelectionPolicy,
    objectives: ObjectiveSet,
    frontier: ParetoFrontier,
    candidate: CostDistribution,
    incumbent: CostDistribution,
) -> bool:
    """True iff the policy scores the candidate strictly better than the
    incumbent (shared normalization context for the weighted policy)."""
    _check_policy_refs(policy, objectives)
    if isinstance(policy, WeightedPolicy):
        costs = [e.cost for e in frontier.entries] + [candidate, incumbent]
        scores = _weighted_scores(policy, objectives, costs)
        return scores[-2] < scores[-1] - EPS
    if isinstance(policy, LexicographicPolicy):
        for dim in policy.priority:
            c, i = candidate.mean(dim), incumbent.mean(dim)
            if c < i - EPS:
                return True
            if c > i + EPS:
                return False
        return False
    cand_ok = all(candidate.mean(d) <= b + EPS for d, b in policy.budgets.items())
    inc_ok = all(incumbent.mean(d) <= b + EPS for d, b in policy.budgets.items())
    if cand_ok and not inc_ok:
        return True
    if not cand_ok:
        return False
    return candidate.mean(policy.minimize) < incumbent.mean(policy.minimize) - EPS


def parse_policy(text: str) -> SelectionPolicy:
    """Parse 'weighted:latency_ms=0.5,error=0.5', 'lex:error,latency_ms' or
    'constrained:monetary_usd<=2.0,min=latency_ms'."""
    kind, _, body = text.partition(":")
    if kind == "weighted":
        weights = {}
        for part in body.split(","):
            name, _, value = part.partition("=")
            weights[name.strip()] = float(value)
        return WeightedPolicy(weights=weights)
    if kind == "lex":
        return LexicographicPolicy(priority=tuple(p.strip() for p in body.split(",") if p.strip()))
    if kind == "constrained":
        budgets = {}
        minimize = None
        for part in body.split(","):
            part = part.strip()
            if part.startswith("min="):
                minimize = part[4:]
            elif "<=" in part:
                name, _, value = part.partition("<=")
                budgets[name.strip()] = float(value)
        if minimize is None:
            raise ValueError("constrained policy needs min=<objective>")
        return ConstrainedPolicy(budgets=budgets, minimize=minimize)
    raise ValueError(f"unknown policy kind {kind!r}")


# ---------------------------------------------------------------------------
# Export


def frontier_to_json(frontier: ParetoFrontier) -> list[dict]:
    out = []
    for e in frontier.entries:
        out.append(
            {
                "plan": {
                    "name": e.plan.base.name,
                    "hash": e.hash,
                    "bindings": [
                        {"agent_id": b.agent_id, "engine": b.engine, "model": b.model}
                        for b in e.plan.bindings
                    ],
                    "order": [list(layer) for layer in e.plan.order],
                },
                "cost_means": dict(zip(DIMENSIONS, e.cost.means)),
                "cost_variances": dict(zip(DIMENSIONS, e.cost.variances)),
                "structure_label": classify_structure(e.plan.base),
            }
        )
    return out


def plan_to_dot(entry: FrontierEntry) -> str:
    return to_dot(entry.plan.base, entry.plan.binding_map())
