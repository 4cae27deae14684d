"""Agent registry, model pool and engine pool: the planner's search space."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Mapping, Optional

from .workflow import (
    AbstractWorkflow,
    AgentSpec,
    Binding,
    agent_from_dict,
    agent_to_dict,
    rewrite_variants,
)

ENGINE_CLASSES = frozenset(
    {"relational", "streaming", "vector", "analytics", "inference-local", "inference-api"}
)
INFERENCE_CLASSES = frozenset({"inference-local", "inference-api"})
HOSTINGS = frozenset({"local", "api"})


@dataclass(frozen=True)
class ModelProfile:
    model_id: str
    family: str
    param_count_b: float
    # capability id -> quality score in [0, 1]
    capabilities: Mapping[str, float]
    price_per_million_tokens: float
    latency_per_token_ms: tuple[float, float]  # (mean, variance)
    hosting: str

    def __post_init__(self):
        if self.hosting not in HOSTINGS:
            raise ValueError(f"hosting must be local|api, got {self.hosting!r}")
        if self.price_per_million_tokens < 0:
            raise ValueError("price must be >= 0")
        mean, var = self.latency_per_token_ms
        if mean <= 0 or var < 0:
            raise ValueError("latency per token: mean > 0, variance >= 0")
        for cap, q in self.capabilities.items():
            if not 0.0 <= q <= 1.0:
                raise ValueError(f"quality for {cap!r} outside [0,1]")

    def quality(self, capability: str) -> Optional[float]:
        return self.capabilities.get(capability)


@dataclass(frozen=True)
class EngineProfile:
    engine_id: str
    engine_class: str
    supported_capabilities: frozenset[str]
    startup_latency_ms: tuple[float, float]  # (mean, variance)
    unit_rate: tuple[float, float]  # records per ms (mean, variance)
    monetary_rate: float  # USD per second of use
    energy_rate: float  # joules per second

    def __post_init__(self):
        if self.engine_class not in ENGINE_CLASSES:
            raise ValueError(f"unknown engine class {self.engine_class!r}")
        if not self.supported_capabilities:
            raise ValueError("supported_capabilities must be non-empty")
        if self.unit_rate[0] <= 0 or self.monetary_rate <= 0 or self.energy_rate <= 0:
            raise ValueError("rates must be > 0")
        if self.startup_latency_ms[1] < 0 or self.unit_rate[1] < 0:
            raise ValueError("variances must be >= 0")

    @property
    def is_inference(self) -> bool:
        return self.engine_class in INFERENCE_CLASSES


@dataclass
class Pools:
    """Immutable-after-load knowledge base: registry + model/engine pools."""

    registry: dict[str, AgentSpec] = field(default_factory=dict)
    models: dict[str, ModelProfile] = field(default_factory=dict)
    engines: dict[str, EngineProfile] = field(default_factory=dict)

    def model(self, model_id: str) -> ModelProfile:
        return self.models[model_id]

    def engine(self, engine_id: str) -> EngineProfile:
        return self.engines[engine_id]


@dataclass(frozen=True)
class SpaceSize:
    """Exact plan count; zero identifies the unsatisfiable agents."""

    total: int
    per_variant: tuple[int, ...]
    unsatisfiable: tuple[str, ...]


def candidate_bindings(agent: AgentSpec, pools: Pools) -> list[Binding]:
    """All concrete bindings for one agent, sorted by (engine_id, model_id).

    Deterministic agents take any non-inference engine supporting their
    capability. Stochastic agents take the cross product of capable models
    with the inference engine class matching the model's hosting. An empty
    result marks the agent unsatisfiable; the planner must surface that.
    """
    cap = agent.capability.id
    out: list[Binding] = []
    if not agent.is_stochastic:
        for engine in pools.engines.values():
            if engine.is_inference:
                continue
            if cap in engine.supported_capabilities:
                out.append(Binding(agent_id=agent.agent_id, engine=engine.engine_id))
    else:
        wanted = {"local": "inference-local", "api": "inference-api"}
        for model in pools.models.values():
            if model.quality(cap) is None:
                continue
            klass = wanted[model.hosting]
            for engine in pools.engines.values():
                if engine.engine_class == klass:
                    out.append(
                        Binding(agent_id=agent.agent_id, engine=engine.engine_id, model=model.model_id)
                    )
    out.sort(key=lambda b: (b.engine, b.model or ""))
    return out


def space_size(w: AbstractWorkflow, pools: Pools, variants: int) -> SpaceSize:
    """Sum over structure variants of the product of per-node candidate counts."""
    candidate_counts: dict[str, int] = {}
    unsat: list[str] = []

    def count_for(spec: AgentSpec) -> int:
        if spec.agent_id not in candidate_counts:
            n = len(candidate_bindings(spec, pools))
            candidate_counts[spec.agent_id] = n
            if n == 0 and spec.agent_id not in unsat:
                unsat.append(spec.agent_id)
        return candidate_counts[spec.agent_id]

    per_variant: list[int] = []
    for variant in rewrite_variants(w, variants, pools.registry):
        size = 1
        for spec in variant.nodes:
            size *= count_for(spec)
        per_variant.append(size)
    return SpaceSize(total=sum(per_variant), per_variant=tuple(per_variant), unsatisfiable=tuple(unsat))


# ---------------------------------------------------------------------------
# File formats: registry.json, models.json, engines.json


def load_registry(path) -> dict[str, AgentSpec]:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    agents = [agent_from_dict(a) for a in doc["agents"]]
    registry: dict[str, AgentSpec] = {}
    for spec in agents:
        if spec.agent_id in registry:
            raise ValueError(f"duplicate agent_id {spec.agent_id!r} in registry")
        registry[spec.agent_id] = spec
    return registry


def save_registry(registry: Mapping[str, AgentSpec], path) -> None:
    doc = {"agents": [agent_to_dict(s) for _, s in sorted(registry.items())]}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_models(path) -> dict[str, ModelProfile]:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    models = {}
    for m in doc["models"]:
        profile = ModelProfile(
            model_id=m["model_id"],
            family=m["family"],
            param_count_b=float(m["param_count_b"]),
            capabilities=dict(m["capabilities"]),
            price_per_million_tokens=float(m["price_per_million_tokens"]),
            latency_per_token_ms=(float(m["latency_per_token_ms"][0]), float(m["latency_per_token_ms"][1])),
            hosting=m["hosting"],
        )
        models[profile.model_id] = profile
    return models


def load_engines(path) -> dict[str, EngineProfile]:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    engines = {}
    for e in doc["engines"]:
        profile = EngineProfile(
            engine_id=e["engine_id"],
            engine_class=e["engine_class"],
            supported_capabilities=frozenset(e["supported_capabilities"]),
            startup_latency_ms=(float(e["startup_latency_ms"][0]), float(e["startup_latency_ms"][1])),
            unit_rate=(float(e["unit_rate"][0]), float(e["unit_rate"][1])),
            monetary_rate=float(e["monetary_rate"]),
            energy_rate=float(e["energy_rate"]),
        )
        engines[profile.engine_id] = profile
    return engines


def load_pools(registry_path, models_path, engines_path) -> Pools:
    return Pools(
        registry=load_registry(registry_path),
        models=load_models(models_path),
        engines=load_engines(engines_path),
    )
