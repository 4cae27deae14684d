"""Configurable-knob behavior: hub-edge surcharge, robust dominance mode,
cache TTL, policy-cache fast path, per-edge communication cost."""

import math

import pytest

from agentplan.cache import MMCache, TaskSignature
from agentplan.costs import CostDistribution, ObjectiveSet
from agentplan.planner import (
    LexicographicPolicy,
    brute_force,
    optimize,
    pareto_filter,
    select,
)
from agentplan.simulator import Simulator
from agentplan.workflow import (
    AbstractWorkflow,
    AgentSpec,
    Binding,
    CapabilityId,
    Edge,
    NodeWorkload,
    make_executable,
)

OBJ3 = ObjectiveSet(("latency_ms", "monetary_usd", "error"))


class TestHubSurcharge:
    def test_default_zero_no_effect(self, pools, support):
        a = optimize(support, OBJ3, pools)
        b = optimize(support, OBJ3, pools, hub_edge_latency_ms=0.0)
        assert a.hashes() == b.hashes()

    def test_surcharge_penalizes_hub_variants(self, pools, support):
        # With a large per-hub-edge latency penalty, orchestrated variants
        # (extra dispatch edges from A1) drop off the frontier entirely.
        taxed = optimize(support, OBJ3, pools, hub_edge_latency_ms=10_000.0)
        for e in taxed.entries:
            hub_edges = [
                edge for edge in e.plan.base.data_edges()
                if e.plan.base.agent(edge.src).capability.id == "orchestration"
            ]
            assert len(hub_edges) <= 1  # only the original A1 -> A2 dispatch

    def test_brute_force_agrees_under_surcharge(self, pools, support):
        fast = optimize(support, OBJ3, pools, hub_edge_latency_ms=123.0)
        slow = brute_force(support, OBJ3, pools, hub_edge_latency_ms=123.0)
        assert fast.hashes() == slow.hashes()


class TestRobustMode:
    def test_matches_robust_score_oracle(self, pools, support):
        lam = 2.0
        frontier = optimize(support, OBJ3, pools, robust_lambda=lam)
        exhaustive = brute_force(support, OBJ3, pools, robust_lambda=lam)
        assert frontier.hashes() == exhaustive.hashes()

    def test_lambda_zero_is_mean_dominance(self, pools, support):
        assert optimize(support, OBJ3, pools, robust_lambda=0.0).hashes() == optimize(
            support, OBJ3, pools
        ).hashes()


class TestCacheTTL:
    def test_entries_expire_after_ttl(self):
        cache = MMCache(ttl=3)
        sig = TaskSignature.for_payload("cap", "payload")
        cache.put_result(sig, b"x", deterministic_source=True)
        assert cache.get_exact(sig) == b"x"
        for i in range(5):  # advance the logical clock past the ttl
            cache.get_exact(TaskSignature.for_payload("cap", f"other-{i}"))
        assert cache.get_exact(sig) is None

    def test_default_ttl_infinite(self):
        cache = MMCache()
        sig = TaskSignature.for_payload("cap", "payload")
        cache.put_result(sig, b"x", deterministic_source=True)
        for i in range(200):
            cache.get_exact(TaskSignature.for_payload("cap", f"other-{i}"))
        assert cache.get_exact(sig) == b"x"


class TestPolicyCacheFastPath:
    def test_select_confirms_and_repairs_cache(self, pools, support):
        frontier = optimize(support, OBJ3, pools)
        policy = LexicographicPolicy(("latency_ms", "monetary_usd"))
        cache = MMCache()
        ctx = MMCache.policy_context("feedback-graph", OBJ3.dimensions, policy.describe())

        first = select(frontier, policy, policy_cache=cache, context_key=ctx)
        assert cache.get_policy(ctx) == first.hash
        again = select(frontier, policy, policy_cache=cache, context_key=ctx)
        assert again.hash == first.hash

        # A stale decision (plan no longer on the frontier) is ignored and
        # recorded; the computed winner is re-cached.
        cache.put_policy(ctx, "gone-plan-hash")
        repaired = select(frontier, policy, policy_cache=cache, context_key=ctx)
        assert repaired.hash == first.hash
        assert cache.stats()["policy"]["stale"] == 1
        assert cache.get_policy(ctx) == first.hash

    def test_cache_never_changes_selection(self, pools, support):
        frontier = optimize(support, OBJ3, pools)
        policy = LexicographicPolicy(("error", "latency_ms"))
        plain = select(frontier, policy)
        cache = MMCache()
        ctx = MMCache.policy_context("feedback-graph", OBJ3.dimensions, policy.describe())
        cache.put_policy(ctx, frontier.entries[-1].hash)  # on-frontier but wrong
        cached = select(frontier, policy, policy_cache=cache, context_key=ctx)
        assert cached.hash == plain.hash


class TestPluggableEmbedder:
    def test_custom_embedder_drives_semantic_tier(self):
        import numpy as np

        class FirstTokenEmbedder:
            dim = 4

            def embed(self, text):
                v = np.zeros(4)
                if text:
                    v[len(text.split()[0]) % 4] = 1.0
                return v

        cache = MMCache(embedder=FirstTokenEmbedder())
        s1 = TaskSignature.for_payload("c", "p1", (("k", "v"),), "abc request")
        s2 = TaskSignature.for_payload("c", "p2", (("k", "v"),), "xyz request")
        cache.put_result(s1, b"one", deterministic_source=False)
        hit = cache.get_semantic(s2, tau=0.99)
        assert hit is not None and hit[0] == b"one"  # same first-token length


class TestCommunicationCost:
    def test_per_edge_cost_adds_to_node_latency(self, pools):
        a3, a5 = pools.registry["A3"], pools.registry["A5"]
        w = AbstractWorkflow(
            "w", (a3, a5), (Edge("A3", "A5", adapter=True),),
            workloads={"A3": NodeWorkload(100, 0, 0), "A5": NodeWorkload(100, 0, 0)},
        )
        ew = make_executable(
            w, {"A3": Binding("A3", engine="duckhouse"), "A5": Binding("A5", engine="duckhouse")}
        )
        base = Simulator(pools).run(ew, seed=4)
        comm = Simulator(pools, comm_cost_ms=50.0).run(ew, seed=4)
        # one in-edge on A5, none on A3
        assert comm.total_latency_ms == pytest.approx(base.total_latency_ms + 50.0)
        by_agent = {t.agent_id: t for t in comm.telemetry}
        assert by_agent["A3"].latency_ms == pytest.approx(
            next(t for t in base.telemetry if t.agent_id == "A3").latency_ms
        )
