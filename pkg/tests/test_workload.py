import collections
import json

import pytest

from agentplan.errors import GenerationError
from agentplan.workflow import classify_structure, validate, workflow_from_dict, workflow_to_dict
from agentplan.workload import (
    DEFAULT_PROFILE,
    NON_OPTIMIZABLE,
    WorkloadProfile,
    bench,
    extend_pools,
    generate,
    synthetic_registry,
)


class TestProfile:
    def test_default_profile_validates(self):
        DEFAULT_PROFILE.validated()

    def test_bad_mix_faults(self):
        broken = WorkloadProfile(structure_mix={"chain": 0.5, "dag": 0.2})
        with pytest.raises(GenerationError):
            broken.validated()

    def test_json_round_trip(self):
        doc = DEFAULT_PROFILE.to_json()
        back = WorkloadProfile.from_json(json.loads(json.dumps(doc)))
        assert back == DEFAULT_PROFILE


class TestGenerate:
    def test_single_workflow_floor(self):
        ws = generate(1, DEFAULT_PROFILE, seed=0)
        assert len(ws) == 1
        assert len(ws[0].nodes) >= 3
        assert validate(ws[0]).ok

    def test_deterministic_per_seed(self):
        a = generate(25, DEFAULT_PROFILE, seed=42)
        b = generate(25, DEFAULT_PROFILE, seed=42)
        assert [workflow_to_dict(w) for w in a] == [workflow_to_dict(w) for w in b]
        c = generate(25, DEFAULT_PROFILE, seed=43)
        assert [workflow_to_dict(w) for w in a] != [workflow_to_dict(w) for w in c]

    def test_all_valid_and_resolvable(self, pools):
        ws = generate(150, DEFAULT_PROFILE, seed=9)
        registry = synthetic_registry(ws)
        for w in ws:
            assert validate(w, registry).ok

    def test_category_frequencies_near_profile(self):
        ws = generate(3_000, DEFAULT_PROFILE, seed=1)
        labels = collections.Counter(classify_structure(w) for w in ws)
        total = sum(DEFAULT_PROFILE.structure_mix.values())
        for name, weight in DEFAULT_PROFILE.structure_mix.items():
            expected = weight / total
            observed = labels[name] / len(ws)
            assert abs(observed - expected) < 0.03, (name, observed, expected)

    def test_tagged_structures_round_trip(self):
        ws = generate(400, DEFAULT_PROFILE, seed=2)
        tagged = [w for w in ws if w.structure_tag]
        assert tagged
        for w in tagged:
            assert w.structure_tag in NON_OPTIMIZABLE
            assert classify_structure(w) == w.structure_tag
            doc = workflow_to_dict(w)
            assert workflow_from_dict(doc).structure_tag == w.structure_tag

    def test_satisfiable_with_default_pools(self, pools):
        from agentplan.pools import candidate_bindings

        ws = generate(60, DEFAULT_PROFILE, seed=5)
        wide = extend_pools(pools, ws)
        for w in ws:
            for spec in w.nodes:
                assert candidate_bindings(spec, wide), spec.agent_id

    def test_shared_agents_across_workflows(self):
        # Inclusion probabilities make task chains repeat across workflows.
        ws = generate(200, DEFAULT_PROFILE, seed=3)
        owners = collections.Counter()
        for w in ws:
            for spec in w.nodes:
                owners[spec.agent_id] += 1
        assert owners.most_common(1)[0][1] > 10


class TestBench:
    def test_cache_off_zero_hit_rates(self, pools):
        ws = generate(6, DEFAULT_PROFILE, seed=12)
        report = bench(ws, pools, ("latency_ms", "monetary_usd"), seed=1)
        assert report.passes_cached is None
        assert all(p.deterministic_hit_rate == 0.0 for p in report.passes_baseline)

    def test_transparency_and_replay(self, pools):
        ws = generate(10, DEFAULT_PROFILE, seed=12)
        report = bench(
            ws, pools, ("latency_ms", "monetary_usd", "error"),
            cache_enabled=True, seed=1, passes=2,
        )
        assert report.frontiers_identical is True
        assert report.selections_identical is True
        assert report.passes_cached[1].deterministic_hit_rate == 1.0

    def test_report_serializes(self, pools):
        ws = generate(4, DEFAULT_PROFILE, seed=8)
        report = bench(ws, pools, ("latency_ms", "error"), cache_enabled=True, seed=2)
        json.dumps(report.as_dict())

    def test_single_workflow_row(self, pools):
        ws = generate(1, DEFAULT_PROFILE, seed=20)
        report = bench(ws, pools, ("latency_ms",), seed=0)
        assert report.n_workflows + report.n_excluded == 1
