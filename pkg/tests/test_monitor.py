import math

import pytest

from agentplan.costs import ObjectiveSet, StatisticsStore, estimate_node
from agentplan.monitor import DeviationRule, Monitor
from agentplan.planner import LexicographicPolicy, optimize, select
from agentplan.pools import Pools
from agentplan.simulator import FaultSpec, Simulator, TelemetryRecord
from agentplan.workflow import (
    AbstractWorkflow,
    AgentSpec,
    Binding,
    CapabilityId,
    Edge,
    NodeWorkload,
    make_executable,
)

OBJ = ObjectiveSet(("latency_ms", "monetary_usd", "error"))
POLICY = LexicographicPolicy(("latency_ms", "monetary_usd"))


def det(aid, cap, i, o):
    return AgentSpec(aid, CapabilityId(cap, "structured"), "", i, o, "deterministic")


def fault_workflow(pools, cardinality=20_000):
    nodes = (
        det("X", "relational-extract", "src", "a"),
        det("Y", "kpi-computation", "a", "b"),
        det("Z", "relational-extract", "b", "c"),
    )
    w = AbstractWorkflow(
        "fault-demo",
        nodes,
        (Edge("X", "Y"), Edge("Y", "Z")),
        workloads={a: NodeWorkload(cardinality, 0, 0) for a in "XYZ"},
    )
    registry = dict(pools.registry)
    registry.update({s.agent_id: s for s in nodes})
    return w, Pools(registry=registry, models=pools.models, engines=pools.engines)


def record(agent_id, binding, latency, t=0.0):
    return TelemetryRecord(
        run_id=0, agent_id=agent_id, binding=binding, latency_ms=latency,
        tokens=0, monetary_usd=0.0, energy_j=0.0, cache_hit=False, logical_time=t,
    )


def make_monitor(pools, ew, delta=0.5, min_samples=3):
    stats = StatisticsStore()
    monitor = Monitor(
        pools, stats, DeviationRule(delta=delta, min_samples=min_samples),
        objectives=OBJ, policy=POLICY, max_variants=4,
    )
    monitor.attach(ew)
    return monitor


class TestRecord:
    def _setup(self, pools):
        w, pools = fault_workflow(pools, cardinality=800)
        ew = make_executable(w, {a: Binding(a, engine="duckhouse") for a in "XYZ"})
        return w, pools, ew

    def test_deviation_below_threshold_no_trigger(self, pools):
        # profile estimate 21 ms; observations at 1.4x stay inside delta=0.5
        w, pools, ew = self._setup(pools)
        monitor = make_monitor(pools, ew)
        estimate = estimate_node(w.agent("X"), ew.binding_of("X"), w.workload_of("X"), pools).mean("latency_ms")
        for _ in range(5):
            trigger = monitor.record(record("X", ew.binding_of("X"), 1.4 * estimate))
        assert trigger is None

    def test_deviation_above_threshold_triggers(self, pools):
        w, pools, ew = self._setup(pools)
        monitor = make_monitor(pools, ew)
        estimate = estimate_node(w.agent("X"), ew.binding_of("X"), w.workload_of("X"), pools).mean("latency_ms")
        trigger = None
        for _ in range(3):
            trigger = monitor.record(record("X", ew.binding_of("X"), 1.6 * estimate))
        assert trigger is not None
        assert trigger.agent_id == "X" and trigger.dimension == "latency_ms"
        assert trigger.observed == pytest.approx(1.6 * estimate)
        assert trigger.estimated == pytest.approx(estimate)

    def test_min_samples_gates(self, pools):
        w, pools, ew = self._setup(pools)
        monitor = make_monitor(pools, ew, min_samples=3)
        assert monitor.record(record("X", ew.binding_of("X"), 10_000.0)) is None
        assert monitor.record(record("X", ew.binding_of("X"), 10_000.0)) is None
        assert monitor.record(record("X", ew.binding_of("X"), 10_000.0)) is not None

    def test_one_open_trigger_per_binding(self, pools):
        w, pools, ew = self._setup(pools)
        monitor = make_monitor(pools, ew, min_samples=1)
        first = monitor.record(record("X", ew.binding_of("X"), 10_000.0))
        second = monitor.record(record("X", ew.binding_of("X"), 10_000.0))
        assert first is not None and second is None

    def test_malformed_rejected_and_counted(self, pools):
        w, pools, ew = self._setup(pools)
        monitor = make_monitor(pools, ew)
        bad = record("X", Binding("X", engine="warp-drive"), 10.0)
        assert monitor.record(bad) is None
        negative = record("X", ew.binding_of("X"), -5.0)
        assert monitor.record(negative) is None
        assert monitor.rejected == 2


class TestHandleTrigger:
    def test_switch_scenario_matches_suffix_oracle(self, pools):
        # 3x fault on the bound engine with a cheaper alternative: the run
        # that reaches min_samples re-optimizes mid-flight and the switched
        # remainder beats continuing the original plan on the same seed.
        w, pools = fault_workflow(pools)
        entry = select(optimize(w, OBJ, pools, max_variants=4), POLICY)
        assert all(b.engine == "duckhouse" for b in entry.plan.bindings)

        stats = StatisticsStore()
        monitor = Monitor(pools, stats, DeviationRule(delta=0.5, min_samples=3),
                          objectives=OBJ, policy=POLICY, max_variants=4)
        sim = Simulator(pools)
        sim.inject([FaultSpec("duckhouse", 3.0, 0.0)])
        results = [sim.run(entry.plan, seed=99, run_id=r, monitor=monitor) for r in range(3)]
        switched = results[2]
        assert len(switched.switches) == 1
        final = switched.final_plan
        assert final.binding_of("Y").engine == "sparkgrid"
        assert final.binding_of("Z").engine == "sparkgrid"

        continue_sim = Simulator(pools)
        continue_sim.inject([FaultSpec("duckhouse", 3.0, 0.0)])
        unswitched = continue_sim.run(entry.plan, seed=99, run_id=2)
        assert switched.total_latency_ms < unswitched.total_latency_ms

    def test_slowdown_on_unused_engine_keeps(self, pools):
        w, pools = fault_workflow(pools)
        entry = select(optimize(w, OBJ, pools, max_variants=4), POLICY)
        stats = StatisticsStore()
        monitor = Monitor(pools, stats, DeviationRule(delta=0.5, min_samples=1),
                          objectives=OBJ, policy=POLICY, max_variants=4)
        monitor.attach(entry.plan)
        # deviation on X, but pretend only X is affected: after X is done the
        # remaining duckhouse estimates are profile-clean, so keep.
        trigger = monitor.record(record("X", entry.plan.binding_of("X"), 10_000.0))
        assert trigger is not None
        result = monitor.handle_trigger(trigger, entry.plan, {"X"})
        assert not result.switched

    def test_no_alternative_keeps(self, pools):
        # Strip the pool to a single engine: trigger closes without a switch.
        w, pools = fault_workflow(pools)
        solo = Pools(
            registry=pools.registry,
            models=pools.models,
            engines={"duckhouse": pools.engines["duckhouse"]},
        )
        ew = make_executable(w, {a: Binding(a, engine="duckhouse") for a in "XYZ"})
        stats = StatisticsStore()
        monitor = Monitor(solo, stats, DeviationRule(delta=0.5, min_samples=1),
                          objectives=OBJ, policy=POLICY, max_variants=4)
        monitor.attach(ew)
        for a in "XYZ":
            monitor.record(record(a, ew.binding_of(a), 5_000.0))
        trigger = monitor.trigger_log[0]
        result = monitor.handle_trigger(trigger, ew, {"X"})
        assert not result.switched

    def test_never_alters_done_bindings(self, pools):
        w, pools = fault_workflow(pools)
        entry = select(optimize(w, OBJ, pools, max_variants=4), POLICY)
        stats = StatisticsStore()
        monitor = Monitor(pools, stats, DeviationRule(delta=0.5, min_samples=1),
                          objectives=OBJ, policy=POLICY, max_variants=4)
        monitor.attach(entry.plan)
        for a in ("X", "Y", "Z"):
            binding = entry.plan.binding_of(a)
            monitor.record(record(a, binding, 4_000.0))
        trigger = monitor.trigger_log[0]
        result = monitor.handle_trigger(trigger, entry.plan, {"X"})
        if result.switched:
            assert result.plan.binding_of("X") == entry.plan.binding_of("X")


class TestDisabledMonitor:
    def test_delta_inf_identical_to_monitor_free(self, pools):
        w, pools = fault_workflow(pools)
        entry = select(optimize(w, OBJ, pools, max_variants=4), POLICY)
        stats = StatisticsStore()
        monitor = Monitor(pools, stats, DeviationRule(delta=math.inf, min_samples=1),
                          objectives=OBJ, policy=POLICY, max_variants=4)
        with_mon = Simulator(pools)
        with_mon.inject([FaultSpec("duckhouse", 3.0, 0.0)])
        without = Simulator(pools)
        without.inject([FaultSpec("duckhouse", 3.0, 0.0)])
        ra = with_mon.run(entry.plan, seed=5, run_id=0, monitor=monitor)
        rb = without.run(entry.plan, seed=5, run_id=0)
        assert ra.telemetry == rb.telemetry
        assert not ra.switches and not monitor.trigger_log

    def test_reopt_disabled_records_but_never_switches(self, pools):
        w, pools = fault_workflow(pools)
        entry = select(optimize(w, OBJ, pools, max_variants=4), POLICY)
        stats = StatisticsStore()
        monitor = Monitor(pools, stats, DeviationRule(delta=0.5, min_samples=1),
                          objectives=OBJ, policy=POLICY, max_variants=4, reopt_enabled=False)
        sim = Simulator(pools)
        sim.inject([FaultSpec("duckhouse", 3.0, 0.0)])
        result = sim.run(entry.plan, seed=5, run_id=0, monitor=monitor)
        assert not result.switches
        assert monitor.trigger_log  # deviations were still observed
