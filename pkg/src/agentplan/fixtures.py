"""Shipped defaults: the customer-support reporting workflow and the default
registry / model / engine pools.

All rate, price and quality numbers are made up for simulation purposes and
documented in the README; they are chosen so that no single engine or model
dominates every objective.
"""

from __future__ import annotations

import json
from pathlib import Path

from .pools import EngineProfile, ModelProfile, Pools
from .workflow import AbstractWorkflow, AgentSpec, CapabilityId, Edge, NodeWorkload

# Capabilities used by the workload generator's task catalog; deterministic
# instances bind to engines, stochastic instances to models.
CATALOG_CAPABILITIES = (
    "data-ingestion",
    "connect-sources",
    "entity-extraction",
    "generate-report",
    "send-report",
    "unstructured-analysis",
    "entity-linkage",
    "summarization",
    "sentiment-analysis",
    "anomaly-detection",
    "schema-mapping",
    "feature-engineering",
    "kpi-computation",
    "visualization",
)


def default_registry() -> dict[str, AgentSpec]:
    def agent(agent_id, cap, modality, desc, in_role, out_role, determinism):
        return AgentSpec(
            agent_id=agent_id,
            capability=CapabilityId(id=cap, modality=modality),
            description=desc,
            input_role=in_role,
            output_role=out_role,
            determinism=determinism,
        )

    agents = [
        agent("A1", "orchestration", "mixed",
              "Interprets the request, dispatches tasks and assembles the final report",
              "user-request", "final-report", "stochastic"),
        agent("A2", "stream-retrieval", "stream",
              "Pulls chat transcripts from the last 24 hours",
              "time-window", "raw-transcripts", "deterministic"),
        agent("A3", "case-filtering", "unstructured-text",
              "Keeps only case-related chats",
              "raw-transcripts", "case-transcripts", "deterministic"),
        agent("A4", "urgency-classification", "unstructured-text",
              "Classifies urgency as critical/high/normal",
              "case-transcripts", "annotated-cases", "stochastic"),
        agent("A5", "relational-extract", "structured",
              "Extracts customer data from the data lake",
              "case-transcripts", "enriched-records", "deterministic"),
        agent("A6", "policy-retrieval", "vector",
              "Retrieves contract policies and SLA terms per customer",
              "enriched-records", "policy-matched-records", "stochastic"),
        agent("A7", "priority-analysis", "mixed",
              "Combines urgency, customer tier and policy to flag priority",
              "policy-matched-records", "priority-labels", "stochastic"),
        agent("A8", "kpi-computation", "structured",
              "Computes per-case metrics",
              "priority-labels", "labeled-cases", "deterministic"),
        agent("A9", "report-generation", "unstructured-text",
              "Produces the final summary report",
              "labeled-cases", "final-report", "stochastic"),
        agent("A10", "feedback-refinement", "mixed",
              "Reviews outcomes and refines thresholds and decision rules",
              "feedback-logs", "model-updates", "stochastic"),
    ]
    return {a.agent_id: a for a in agents}


def support_workflow() -> AbstractWorkflow:
    """The canonical ten-agent customer-support reporting workflow.

    The edge A4 -> A5 is ordering-only (A5 consumes case transcripts, which
    A3 produces), so the parallelization rewrite yields a variant running
    the urgency classifier and the customer lookup concurrently. The
    feedback agent hangs off the reporter and loops back via a feedback
    edge.
    """
    registry = default_registry()
    nodes = tuple(registry[f"A{i}"] for i in range(1, 11))
    edges = (
        Edge("A1", "A2", adapter=True),   # dispatch, no role flow
        Edge("A2", "A3"),
        Edge("A3", "A4"),
        Edge("A4", "A5", adapter=True),   # ordering-only; A5 reads A3's output
        Edge("A5", "A6"),
        Edge("A6", "A7"),
        Edge("A7", "A8"),
        Edge("A8", "A9"),
        Edge("A9", "A10", adapter=True),  # report handed to the feedback agent
        Edge("A10", "A1", kind="feedback"),
    )
    workloads = {
        "A1": NodeWorkload(1, 300, 150),
        "A2": NodeWorkload(20_000, 0, 0),
        "A3": NodeWorkload(20_000, 0, 0),
        "A4": NodeWorkload(800, 1_600, 200),
        "A5": NodeWorkload(800, 0, 0),
        "A6": NodeWorkload(800, 1_200, 300),
        "A7": NodeWorkload(800, 900, 120),
        "A8": NodeWorkload(800, 0, 0),
        "A9": NodeWorkload(1, 2_000, 1_000),
        "A10": NodeWorkload(1, 500, 200),
    }
    return AbstractWorkflow(
        name="customer-support-reporting", nodes=nodes, edges=edges, workloads=workloads
    )


def default_models() -> dict[str, ModelProfile]:
    models = [
        ModelProfile(
            model_id="llama3-8b", family="llama3", param_count_b=8.0, hosting="local",
            price_per_million_tokens=0.0, latency_per_token_ms=(12.0, 9.0),
            capabilities={
                "urgency-classification": 0.86, "report-generation": 0.80,
                "summarization": 0.84, "sentiment-analysis": 0.85,
                "unstructured-analysis": 0.81, "entity-extraction": 0.78,
                "anomaly-detection": 0.72, "send-report": 0.88,
            },
        ),
        ModelProfile(
            model_id="llama3-70b", family="llama3", param_count_b=70.0, hosting="local",
            price_per_million_tokens=0.0, latency_per_token_ms=(38.0, 100.0),
            capabilities={
                "orchestration": 0.90, "policy-retrieval": 0.88, "priority-analysis": 0.89,
                "feedback-refinement": 0.87, "summarization": 0.91,
                "unstructured-analysis": 0.90, "entity-linkage": 0.86,
                "anomaly-detection": 0.85, "generate-report": 0.89,
            },
        ),
        ModelProfile(
            model_id="qwen2-7b", family="qwen2", param_count_b=7.0, hosting="api",
            price_per_million_tokens=0.13, latency_per_token_ms=(3.0, 1.0),
            capabilities={
                "orchestration": 0.82, "urgency-classification": 0.84, "policy-retrieval": 0.81,
                "report-generation": 0.83, "feedback-refinement": 0.78, "summarization": 0.85,
                "sentiment-analysis": 0.86, "entity-extraction": 0.80,
                "schema-mapping": 0.77, "visualization": 0.75,
            },
        ),
        ModelProfile(
            model_id="qwen2.5-coder-32b", family="qwen2.5-coder", param_count_b=32.0, hosting="api",
            price_per_million_tokens=0.80, latency_per_token_ms=(5.0, 4.0),
            capabilities={
                "feedback-refinement": 0.84, "schema-mapping": 0.88, "feature-engineering": 0.90,
                "kpi-computation": 0.86, "data-ingestion": 0.82, "connect-sources": 0.83,
                "visualization": 0.85,
            },
        ),
        ModelProfile(
            model_id="claude-3.5-sonnet", family="claude-3.5-sonnet", param_count_b=175.0, hosting="api",
            price_per_million_tokens=15.0, latency_per_token_ms=(8.0, 6.0),
            capabilities={
                "orchestration": 0.97, "policy-retrieval": 0.95, "priority-analysis": 0.96,
                "report-generation": 0.96, "summarization": 0.97, "unstructured-analysis": 0.95,
                "entity-linkage": 0.94, "generate-report": 0.97, "anomaly-detection": 0.93,
                "feature-engineering": 0.92,
            },
        ),
        ModelProfile(
            model_id="granite-vision-3b", family="granite-vision", param_count_b=3.0, hosting="local",
            price_per_million_tokens=0.0, latency_per_token_ms=(6.0, 4.0),
            capabilities={
                "visualization": 0.80, "entity-extraction": 0.74, "data-ingestion": 0.70,
                "sentiment-analysis": 0.72, "send-report": 0.76,
            },
        ),
        ModelProfile(
            model_id="mistral-7b", family="mistral", param_count_b=7.0, hosting="local",
            price_per_million_tokens=0.0, latency_per_token_ms=(10.0, 9.0),
            capabilities={
                "urgency-classification": 0.83, "priority-analysis": 0.80,
                "feedback-refinement": 0.79, "sentiment-analysis": 0.82, "summarization": 0.83,
                "entity-linkage": 0.77, "send-report": 0.81, "generate-report": 0.79,
                "connect-sources": 0.75,
            },
        ),
    ]
    return {m.model_id: m for m in models}


def default_engines() -> dict[str, EngineProfile]:
    engines = [
        EngineProfile(
            engine_id="streamflow", engine_class="streaming",
            supported_capabilities=frozenset({
                "stream-retrieval", "data-ingestion", "connect-sources",
                "anomaly-detection", "send-report",
            }),
            startup_latency_ms=(20.0, 16.0), unit_rate=(8.0, 1.0),
            monetary_rate=0.0004, energy_rate=180.0,
        ),
        EngineProfile(
            engine_id="duckhouse", engine_class="relational",
            supported_capabilities=frozenset({
                "case-filtering", "relational-extract", "kpi-computation",
                "data-ingestion", "connect-sources", "entity-extraction",
                "schema-mapping", "feature-engineering", "generate-report", "visualization",
            }),
            startup_latency_ms=(5.0, 1.0), unit_rate=(50.0, 25.0),
            monetary_rate=0.00012, energy_rate=95.0,
        ),
        EngineProfile(
            engine_id="sparkgrid", engine_class="analytics",
            supported_capabilities=frozenset({
                "stream-retrieval", "case-filtering", "relational-extract", "kpi-computation",
                "data-ingestion", "connect-sources", "entity-extraction", "entity-linkage",
                "feature-engineering", "anomaly-detection", "unstructured-analysis",
                "generate-report", "schema-mapping", "summarization", "sentiment-analysis",
                "send-report", "visualization",
            }),
            startup_latency_ms=(400.0, 2500.0), unit_rate=(220.0, 900.0),
            monetary_rate=0.0021, energy_rate=850.0,
        ),
        EngineProfile(
            engine_id="pinevault", engine_class="vector",
            supported_capabilities=frozenset({
                "entity-linkage", "vector-search", "unstructured-analysis",
                "entity-extraction", "sentiment-analysis", "summarization",
            }),
            startup_latency_ms=(15.0, 4.0), unit_rate=(12.0, 4.0),
            monetary_rate=0.0008, energy_rate=120.0,
        ),
        EngineProfile(
            engine_id="ollama-local", engine_class="inference-local",
            supported_capabilities=frozenset({"model-inference"}),
            startup_latency_ms=(30.0, 25.0), unit_rate=(5.0, 1.0),
            monetary_rate=0.0003, energy_rate=350.0,
        ),
        EngineProfile(
            engine_id="cloudinfer-api", engine_class="inference-api",
            supported_capabilities=frozenset({"model-inference"}),
            startup_latency_ms=(120.0, 900.0), unit_rate=(10.0, 4.0),
            monetary_rate=0.0002, energy_rate=45.0,
        ),
    ]
    return {e.engine_id: e for e in engines}


def default_pools() -> Pools:
    return Pools(registry=default_registry(), models=default_models(), engines=default_engines())


DATA_DIR = Path(__file__).parent / "data"


def write_data_files(directory: Path = DATA_DIR) -> None:
    """Materialize the shipped defaults as loadable JSON files."""
    from .pools import save_registry
    from .workflow import save_workflow

    directory.mkdir(parents=True, exist_ok=True)
    save_registry(default_registry(), directory / "registry.json")

    models_doc = {
        "models": [
            {
                "model_id": m.model_id,
                "family": m.family,
                "param_count_b": m.param_count_b,
                "capabilities": dict(sorted(m.capabilities.items())),
                "price_per_million_tokens": m.price_per_million_tokens,
                "latency_per_token_ms": list(m.latency_per_token_ms),
                "hosting": m.hosting,
            }
            for _, m in sorted(default_models().items())
        ]
    }
    with open(directory / "models.json", "w", encoding="utf-8") as fh:
        json.dump(models_doc, fh, indent=2, sort_keys=True)
        fh.write("\n")

    engines_doc = {
        "engines": [
            {
                "engine_id": e.engine_id,
                "engine_class": e.engine_class,
                "supported_capabilities": sorted(e.supported_capabilities),
                "startup_latency_ms": list(e.startup_latency_ms),
                "unit_rate": list(e.unit_rate),
                "monetary_rate": e.monetary_rate,
                "energy_rate": e.energy_rate,
            }
            for _, e in sorted(default_engines().items())
        ]
    }
    with open(directory / "engines.json", "w", encoding="utf-8") as fh:
        json.dump(engines_doc, fh, indent=2, sort_keys=True)
        fh.write("\n")

    save_workflow(support_workflow(), directory / "workflow_support.json")


if __name__ == "__main__":
    write_data_files()
