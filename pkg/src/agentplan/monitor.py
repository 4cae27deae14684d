"""Telemetry consumer: statistics updates and re-optimization triggers.

The monitor folds observations into the statistics store and compares the
resulting EWMA against the pure-profile estimate; a relative deviation past
the threshold on any monitored dimension opens a trigger for that
(agent, binding). Handling a trigger re-plans the unexecuted suffix and
switches only when the active policy strictly prefers the new plan.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

from .costs import (
    CostDistribution,
    ObjectiveSet,
    StatisticsStore,
    estimate_node,
    estimate_workflow,
    update_statistics,
)
from .errors import PlanningError
from .planner import (
    ParetoFrontier,
    SelectionPolicy,
    policy_prefers,
    reoptimize,
    select,
)
from .pools import Pools
from .simulator import SwitchEvent, TelemetryRecord
from .workflow import ExecutableWorkflow, plan_hash


@dataclass(frozen=True)
class DeviationRule:
    delta: float = 0.5
    min_samples: int = 3
    dimensions: tuple[str, ...] = ("latency_ms", "monetary_usd")

    def __post_init__(self):
        if self.delta <= 0:
            raise ValueError("delta must be > 0")
        if self.min_samples < 1:
            raise ValueError("min_samples must be >= 1")


@dataclass(frozen=True)
class ReoptTrigger:
    agent_id: str
    engine: str
    model: Optional[str]
    dimension: str
    observed: float
    estimated: float

    def key(self) -> tuple[str, str, str]:
        return (self.agent_id, self.engine, self.model or "")

    def as_dict(self) -> dict:
        return {
            "agent_id": self.agent_id,
            "engine": self.engine,
            "model": self.model,
            "dimension": self.dimension,
            "observed": self.observed,
            "estimated": self.estimated,
        }


@dataclass
class HandleResult:
    switched: bool
    plan: Optional[ExecutableWorkflow]
    frontier: Optional[ParetoFrontier] = None


class Monitor:
    def __init__(
        self,
        pools: Pools,
        stats: StatisticsStore,
        rule: DeviationRule = DeviationRule(),
        objectives: Optional[ObjectiveSet | Sequence[str]] = None,
        policy: Optional[SelectionPolicy] = None,
        max_variants: int = 8,
        reopt_enabled: bool = True,
    ):
        self.pools = pools
        self.stats = stats
        self.rule = rule
        if objectives is not None and not isinstance(objectives, ObjectiveSet):
            objectives = ObjectiveSet(tuple(objectives))
        self.objectives = objectives
        self.policy = policy
        self.max_variants = max_variants
        self.reopt_enabled = reopt_enabled

        self._workflow: Optional[ExecutableWorkflow] = None
        self._open_triggers: dict[tuple[str, str, str], ReoptTrigger] = {}
        self._realized: dict[str, CostDistribution] = {}
        self.rejected = 0
        self.trigger_log: list[ReoptTrigger] = []

    def attach(self, ew: ExecutableWorkflow) -> None:
        self._workflow = ew

    # -- telemetry ingestion -------------------------------------------------

    def record(self, t: TelemetryRecord) -> Optional[ReoptTrigger]:
        """Fold one record into statistics; emit at most one open trigger per
        (agent, binding) once enough samples deviate from the estimate."""
        if self._workflow is None:
            raise PlanningError("monitor has no attached workflow")
        if not self._well_formed(t):
            self.rejected += 1
            self.stats.reject()
            return None

        update_statistics(self.stats, t)
        self._remember_realized(t)

        key = (t.agent_id, t.binding.engine, t.binding.model or "")
        if key in self._open_triggers:
            return None
        if self.stats.observation_count(t.agent_id, t.binding) < self.rule.min_samples:
            return None

        agent = self._workflow.base.agent(t.agent_id)
        workload = self._workflow.base.workload_of(t.agent_id)
        profile = estimate_node(agent, t.binding, workload, self.pools, stats=None)
        for dim in self.rule.dimensions:
            estimated = profile.mean(dim)
            if estimated <= 0:
                continue
            observed = self.stats.ewma(t.agent_id, t.binding, dim)
            if observed is None:
                continue
            if abs(observed - estimated) / estimated > self.rule.delta:
                trigger = ReoptTrigger(
                    agent_id=t.agent_id,
                    engine=t.binding.engine,
                    model=t.binding.model,
                    dimension=dim,
                    observed=observed,
                    estimated=estimated,
                )
                self._open_triggers[key] = trigger
                self.trigger_log.append(trigger)
                return trigger
        return None

    def _well_formed(self, t: TelemetryRecord) -> bool:
        if min(t.latency_ms, t.monetary_usd, t.energy_j) < 0 or t.tokens < 0:
            return False
        if t.binding.engine not in self.pools.engines:
            return False
        if t.binding.model is not None and t.binding.model not in self.pools.models:
            return False
        try:
            self._workflow.base.agent(t.agent_id)
        except KeyError:
            return False
        return True

    def _remember_realized(self, t: TelemetryRecord) -> None:
        agent = self._workflow.base.agent(t.agent_id)
        workload = self._workflow.base.workload_of(t.agent_id)
        binding = self._workflow.binding_map().get(t.agent_id)
        error_mean = 0.0
        if binding is not None and agent.is_stochastic and not t.cache_hit:
            est = estimate_node(agent, binding, workload, self.pools, stats=None)
            error_mean = est.mean("error")
        self._realized[t.agent_id] = CostDistribution(
            means=(t.latency_ms, t.monetary_usd, error_mean, float(t.tokens), t.energy_j)
        )

    # -- trigger handling ------------------------------------------------------

    def handle_trigger(
        self,
        trigger: ReoptTrigger,
        ew: ExecutableWorkflow,
        done: Iterable[str],
    ) -> HandleResult:
        """Re-plan the suffix and switch iff the policy strictly prefers the
        re-optimized plan; the trigger closes either way."""
        if self.objectives is None or self.policy is None:
            raise PlanningError("monitor needs objectives and a policy to handle triggers")
        key = trigger.key()
        try:
            done_set = frozenset(done)
            frontier = reoptimize(
                ew,
                done_set,
                self.objectives,
                self.pools,
                self.stats,
                realized=self._realized,
                max_variants=self.max_variants,
            )
            chosen = select(frontier, self.policy)
            frozen = {a: self._realized[a] for a in done_set if a in self._realized}
            incumbent_cost = estimate_workflow(ew, self.pools, self.stats, node_costs=frozen)
            same_plan = chosen.hash == plan_hash(ew)
            if not same_plan and policy_prefers(
                self.policy, self.objectives, frontier, chosen.cost, incumbent_cost
            ):
                return HandleResult(switched=True, plan=chosen.plan, frontier=frontier)
            return HandleResult(switched=False, plan=None, frontier=frontier)
        finally:
            self._open_triggers.pop(key, None)

    # -- simulator hook --------------------------------------------------------

    def observe_layer(
        self,
        records: Sequence[TelemetryRecord],
        current: ExecutableWorkflow,
        done: frozenset[str],
        clock: float,
        can_reoptimize: bool = True,
    ) -> Optional[tuple[ExecutableWorkflow, SwitchEvent]]:
        """Feed one executed layer; re-optimization happens between layers,
        so triggers raised by the final layer are recorded but not acted on
        until a later run."""
        self.attach(current)
        for record in records:
            self.record(record)
        if not self.reopt_enabled or not can_reoptimize:
            return None
        # Open triggers may also date from a previous run's final layer.
        for key in sorted(self._open_triggers):
            trigger = self._open_triggers[key]
            result = self.handle_trigger(trigger, current, done)
            if result.switched and result.plan is not None:
                event = SwitchEvent(
                    at_time=clock,
                    agent_id=trigger.agent_id,
                    dimension=trigger.dimension,
                    old_plan=plan_hash(current),
                    new_plan=plan_hash(result.plan),
                )
                return result.plan, event
        return None
