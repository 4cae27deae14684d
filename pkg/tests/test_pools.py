import itertools

import pytest

from agentplan.pools import candidate_bindings, load_engines, load_models, load_registry, space_size
from agentplan.workflow import rewrite_variants

from agentplan.fixtures import DATA_DIR


class TestCandidateBindings:
    def test_deterministic_agent_two_engines(self, pools):
        # A5 extracts customer data; both the relational and the analytics
        # engine support it.
        bindings = candidate_bindings(pools.registry["A5"], pools)
        assert [(b.engine, b.model) for b in bindings] == [
            ("duckhouse", None),
            ("sparkgrid", None),
        ]

    def test_stochastic_cross_product(self, pools):
        bindings = candidate_bindings(pools.registry["A4"], pools)
        assert all(b.model is not None for b in bindings)
        # local models pair with the local server, api models with the api
        for b in bindings:
            hosting = pools.models[b.model].hosting
            expected = "ollama-local" if hosting == "local" else "cloudinfer-api"
            assert b.engine == expected

    def test_unsupported_capability_empty(self, pools):
        from agentplan.workflow import AgentSpec, CapabilityId

        orphan = AgentSpec("x", CapabilityId("quantum-welding"), "", "a", "b", "deterministic")
        assert candidate_bindings(orphan, pools) == []

    def test_order_deterministic_and_constraint_clean(self, pools):
        for agent in pools.registry.values():
            bindings = candidate_bindings(agent, pools)
            assert bindings == sorted(bindings, key=lambda b: (b.engine, b.model or ""))
            for b in bindings:
                engine = pools.engines[b.engine]
                if agent.is_stochastic:
                    assert engine.is_inference
                    assert pools.models[b.model].quality(agent.capability.id) is not None
                else:
                    assert not engine.is_inference
                    assert agent.capability.id in engine.supported_capabilities


class TestSpaceSize:
    def test_product_rule(self, pools, support):
        size = space_size(support, pools, variants=1)
        expected = 1
        for spec in support.nodes:
            expected *= len(candidate_bindings(spec, pools))
        assert size.per_variant == (expected,)

    def test_sum_over_variants(self, pools, support):
        one = space_size(support, pools, variants=1).total
        four = space_size(support, pools, variants=8)
        assert len(four.per_variant) == 4
        assert four.total == sum(four.per_variant)
        assert four.per_variant[0] == one

    def test_fixture_matches_exhaustive_enumeration(self, pools, support):
        # Independent oracle: literally count the tuples a brute-force
        # enumerator would emit.
        counted = 0
        for variant in rewrite_variants(support, 8, pools.registry):
            lists = [candidate_bindings(s, pools) for s in variant.nodes]
            counted += sum(1 for _ in itertools.product(*lists))
        assert space_size(support, pools, 8).total == counted

    def test_unsatisfiable_agent_reported(self, pools):
        from agentplan.workflow import AbstractWorkflow, AgentSpec, CapabilityId

        orphan = AgentSpec("x", CapabilityId("quantum-welding"), "", "a", "b", "deterministic")
        w = AbstractWorkflow("w", (orphan,))
        size = space_size(w, pools, 1)
        assert size.total == 0
        assert size.unsatisfiable == ("x",)


class TestPoolFiles:
    def test_shipped_files_match_defaults(self, pools):
        assert load_registry(DATA_DIR / "registry.json") == pools.registry
        assert load_models(DATA_DIR / "models.json") == pools.models
        assert load_engines(DATA_DIR / "engines.json") == pools.engines

    def test_profile_invariants(self, pools):
        for m in pools.models.values():
            assert all(0.0 < q <= 1.0 for q in m.capabilities.values())
            assert m.price_per_million_tokens >= 0
        for e in pools.engines.values():
            assert e.unit_rate[0] > 0 and e.monetary_rate > 0 and e.energy_rate > 0
            assert e.supported_capabilities
