import json

import pytest

from agentplan.workflow import (
    AbstractWorkflow,
    AgentSpec,
    CapabilityId,
    Edge,
    NodeWorkload,
    ancestors,
    canonical_hash,
    classify_structure,
    dependency_closure,
    rewrite_variants,
    to_dot,
    topo_order,
    validate,
    workflow_from_dict,
    workflow_to_dict,
)


def agent(aid, cap="summarization", i="in", o="out", det="deterministic", modality="structured"):
    return AgentSpec(aid, CapabilityId(cap, modality), f"{aid} desc", i, o, det)


def chain(*specs):
    edges = tuple(
        Edge(a.agent_id, b.agent_id, adapter=a.output_role != b.input_role)
        for a, b in zip(specs, specs[1:])
    )
    return AbstractWorkflow("w", tuple(specs), edges)


class TestValidate:
    def test_support_fixture_ok(self, support, pools):
        assert validate(support, pools.registry).ok

    def test_single_node_no_edges_ok(self):
        assert validate(AbstractWorkflow("w", (agent("a"),))).ok

    def test_two_node_data_cycle(self):
        a, b = agent("a", o="r", i="s"), agent("b", i="r", o="s")
        w = AbstractWorkflow("w", (a, b), (Edge("a", "b"), Edge("b", "a")))
        report = validate(w)
        assert not report.ok
        assert any("cycle in data edges" in v for v in report.violations)

    def test_dangling_edge(self):
        w = AbstractWorkflow("w", (agent("a"),), (Edge("a", "ghost"),))
        report = validate(w)
        assert any("dangling edge" in v for v in report.violations)

    def test_role_mismatch_needs_adapter(self):
        a, b = agent("a", o="x"), agent("b", i="y")
        bad = AbstractWorkflow("w", (a, b), (Edge("a", "b"),))
        assert any("role mismatch" in v for v in validate(bad).violations)
        ok = AbstractWorkflow("w", (a, b), (Edge("a", "b", adapter=True),))
        assert validate(ok).ok

    def test_unknown_agent(self, pools):
        w = AbstractWorkflow("w", (agent("nobody"),))
        report = validate(w, pools.registry)
        assert any("unknown agent" in v for v in report.violations)

    def test_empty_workflow(self):
        report = validate(AbstractWorkflow("w", ()))
        assert not report.ok

    def test_feedback_cycle_is_fine(self):
        a, b = agent("a", o="r"), agent("b", i="r")
        w = AbstractWorkflow("w", (a, b), (Edge("a", "b"), Edge("b", "a", kind="feedback")))
        assert validate(w).ok


class TestTopoOrder:
    def test_chain(self):
        w = chain(agent("a", o="r"), agent("b", i="r", o="s"), agent("c", i="s"))
        assert topo_order(w) == (("a",), ("b",), ("c",))

    def test_fan_out(self):
        a = agent("a", o="r")
        w = AbstractWorkflow(
            "w", (a, agent("b", i="r"), agent("c", i="r")), (Edge("a", "b"), Edge("a", "c"))
        )
        assert topo_order(w) == (("a",), ("b", "c"))

    def test_fig3_right_layers(self, support, pools):
        # Hand-derived Kahn layering of the parallelized fixture: the
        # urgency classifier (A4) and customer lookup (A5) share a layer.
        variants = rewrite_variants(support, 8, pools.registry)
        parallel = [v for v in variants if ("A4", "A5") in topo_order(v)]
        assert parallel
        expected = (
            ("A1",), ("A2",), ("A3",), ("A4", "A5"),
            ("A6",), ("A7",), ("A8",), ("A9",), ("A10",),
        )
        assert topo_order(parallel[0]) == expected

    def test_covers_every_node_once(self, support):
        layers = topo_order(support)
        flat = [a for layer in layers for a in layer]
        assert sorted(flat) == sorted(support.agent_ids)

    def test_invalid_workflow_raises(self):
        a, b = agent("a", o="r", i="s"), agent("b", i="r", o="s")
        w = AbstractWorkflow("w", (a, b), (Edge("a", "b"), Edge("b", "a")))
        with pytest.raises(ValueError):
            topo_order(w)


class TestClassify:
    def test_chain_shape(self):
        w = chain(agent("a", o="r"), agent("b", i="r", o="s"), agent("c", i="s"), agent("d", i="t"))
        assert classify_structure(w) == "chain"

    def test_single_node_is_chain(self):
        assert classify_structure(AbstractWorkflow("w", (agent("a"),))) == "chain"

    def test_orchestrated_hub(self):
        hub = agent("hub", cap="orchestration", o="r")
        spokes = tuple(agent(f"s{i}", i=f"x{i}") for i in range(3))
        edges = tuple(Edge("hub", s.agent_id, adapter=True) for s in spokes)
        w = AbstractWorkflow("w", (hub,) + spokes, edges)
        assert classify_structure(w) == "orchestrated-dag"

    def test_plain_fan_out_without_orchestrator_capability(self):
        # A star of ordinary agents is not an orchestrated DAG; with a single
        # splitter it lands on branching-chain by precedence.
        root = agent("r", o="x")
        kids = tuple(agent(f"k{i}", i="x") for i in range(3))
        w = AbstractWorkflow("w", (root,) + kids, tuple(Edge("r", k.agent_id) for k in kids))
        assert classify_structure(w) == "branching-chain"

    def test_two_splitters_is_tree(self):
        root = agent("r", o="x")
        a = agent("a", i="x", o="y")
        b = agent("b", i="x")
        c = agent("c", i="y")
        d = agent("d", i="y")
        w = AbstractWorkflow(
            "w", (root, a, b, c, d),
            (Edge("r", "a"), Edge("r", "b"), Edge("a", "c"), Edge("a", "d")),
        )
        assert classify_structure(w) == "tree"

    def test_feedback_wins(self, support):
        assert classify_structure(support) == "feedback-graph"

    def test_branching_chain(self):
        a = agent("a", o="r")
        b, c = agent("b", i="r", o="s"), agent("c", i="r", o="t")
        d = agent("d", i="s")
        w = AbstractWorkflow("w", (a, b, c, d), (Edge("a", "b"), Edge("a", "c"), Edge("b", "d")))
        assert classify_structure(w) == "branching-chain"

    def test_merge_is_dag(self):
        a, b, c, d = agent("a", o="r"), agent("b", i="r", o="s"), agent("c", i="r", o="t"), agent("d", i="s")
        w = AbstractWorkflow(
            "w", (a, b, c, d),
            (Edge("a", "b"), Edge("a", "c"), Edge("b", "d"), Edge("c", "d", adapter=True)),
        )
        assert classify_structure(w) == "dag"

    def test_tag_wins(self):
        a, b = agent("a", o="r"), agent("b", i="r")
        w = AbstractWorkflow("w", (a, b), (Edge("a", "b"),), structure_tag="pub-sub")
        assert classify_structure(w) == "pub-sub"

    def test_stable_under_relabeling(self):
        # Isomorphic graphs with permuted agent ids get the same label.
        specs = [agent("a", o="r"), agent("b", i="r", o="s"), agent("c", i="r", o="t")]
        w1 = AbstractWorkflow("w", tuple(specs), (Edge("a", "b"), Edge("a", "c")))
        relabeled = [agent("z9", o="r"), agent("m5", i="r", o="s"), agent("q2", i="r", o="t")]
        w2 = AbstractWorkflow("w", tuple(relabeled), (Edge("z9", "m5"), Edge("z9", "q2")))
        assert classify_structure(w1) == classify_structure(w2)


class TestRewrites:
    def test_strict_role_chain_only_identity(self):
        w = chain(agent("a", o="r"), agent("b", i="r", o="s"), agent("c", i="s", o="t"))
        assert rewrite_variants(w, 8) == (w,)

    def test_parallelization_of_ordering_edge(self):
        # b and c both consume a's output role; the chain a->b->c carries the
        # b->c edge for ordering only.
        a = agent("a", o="shared")
        b = agent("b", i="shared", o="b-out")
        c = agent("c", i="shared", o="c-out")
        w = AbstractWorkflow("w", (a, b, c), (Edge("a", "b"), Edge("b", "c", adapter=True)))
        variants = rewrite_variants(w, 8)
        assert len(variants) == 2
        parallel = variants[1]
        assert topo_order(parallel) == (("a",), ("b", "c"))

    def test_fixture_contains_parallel_variant(self, support, pools):
        variants = rewrite_variants(support, 8, pools.registry)
        assert any(("A4", "A5") in topo_order(v) for v in variants)

    def test_all_variants_validate(self, support, pools):
        for v in rewrite_variants(support, 8, pools.registry):
            assert validate(v, pools.registry).ok

    def test_no_new_dependencies(self, support, pools):
        base_closure = dependency_closure(support)
        original = set(support.agent_ids)
        for v in rewrite_variants(support, 8, pools.registry):
            for pair in dependency_closure(v):
                if pair[0] in original and pair[1] in original:
                    hub = v.agent(pair[0]).capability.id == "orchestration"
                    assert hub or pair in base_closure, pair

    def test_deterministic_across_runs(self, support, pools):
        a = [canonical_hash(v) for v in rewrite_variants(support, 8, pools.registry)]
        b = [canonical_hash(v) for v in rewrite_variants(support, 8, pools.registry)]
        assert a == b

    def test_truncation(self, support, pools):
        variants = rewrite_variants(support, 2, pools.registry)
        assert len(variants) == 2
        assert variants[0] == support


class TestSerialization:
    def test_round_trip(self, support):
        doc = workflow_to_dict(support)
        back = workflow_from_dict(doc)
        assert back.agent_ids == support.agent_ids
        assert back.edges == support.edges
        assert back.workload_of("A4") == support.workload_of("A4")
        assert canonical_hash(back) == canonical_hash(support)

    def test_registry_resolution(self, support, pools):
        doc = workflow_to_dict(support, inline_agents=False)
        back = workflow_from_dict(doc, pools.registry)
        assert back.nodes == support.nodes

    def test_unknown_agent_raises(self):
        with pytest.raises(KeyError):
            workflow_from_dict({"name": "w", "nodes": ["ghost"], "edges": []})

    def test_dot_export(self, support):
        dot = to_dot(support)
        assert '"A4"' in dot and "urgency-classification" in dot
        assert "style=dashed" in dot  # feedback edge

    def test_json_is_valid(self, support):
        json.dumps(workflow_to_dict(support))
