"""Seeded simulator of heterogeneous engines.

Runs an executable workflow layer by layer with a logical clock: nodes in
one layer share a start time, node latency is drawn from a log-normal
distribution moment-matched to the cost model's mean and variance, and
fault injections scale affected samples. Identical (plan, seed, cache
state, faults) inputs reproduce bit-identical telemetry.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional

import numpy as np

from .cache import MMCache, TaskSignature
from .costs import LATENCY, estimate_node
from .errors import SimulationError
from .pools import Pools
from .workflow import Binding, ExecutableWorkflow


@dataclass(frozen=True)
class TelemetryRecord:
    run_id: int
    agent_id: str
    binding: Binding
    latency_ms: float
    tokens: int
    monetary_usd: float
    energy_j: float
    cache_hit: bool
    logical_time: float  # simulated start time of the node, ms

    def as_dict(self) -> dict:
        return {
            "run_id": self.run_id,
            "agent_id": self.agent_id,
            "binding": {"engine": self.binding.engine, "model": self.binding.model},
            "latency_ms": self.latency_ms,
            "tokens": self.tokens,
            "monetary_usd": self.monetary_usd,
            "energy_j": self.energy_j,
            "cache_hit": self.cache_hit,
            "logical_time": self.logical_time,
        }


@dataclass(frozen=True)
class FaultSpec:
    engine_id: str
    latency_factor: float
    effective_from: float = 0.0

    def __post_init__(self):
        if not math.isfinite(self.latency_factor) or self.latency_factor < 1.0:
            raise ValueError("latency_factor must be finite and >= 1")


@dataclass
class SwitchEvent:
    at_time: float
    agent_id: str
    dimension: str
    old_plan: str
    new_plan: str


@dataclass
class RunResult:
    telemetry: list[TelemetryRecord]
    outputs: dict[str, str]
    total_latency_ms: float
    total_monetary_usd: float
    total_tokens: int
    total_energy_j: float
    switches: list[SwitchEvent] = field(default_factory=list)
    final_plan: Optional[ExecutableWorkflow] = None


def sample_latency(rng: np.random.Generator, mean: float, variance: float) -> float:
    """Log-normal draw moment-matched to (mean, variance); degenerate when
    the variance is zero. Strictly positive by construction."""
    if mean <= 0.0:
        return 0.0
    if variance <= 0.0:
        return mean
    sigma2 = math.log(1.0 + variance / (mean * mean))
    mu = math.log(mean) - sigma2 / 2.0
    return float(rng.lognormal(mean=mu, sigma=math.sqrt(sigma2)))


class Simulator:
    def __init__(
        self,
        pools: Pools,
        cache: Optional[MMCache] = None,
        tau: float = 0.85,
        lookup_cost_ms: float = 1.0,
        comm_cost_ms: float = 0.0,
    ):
        self.pools = pools
        self.cache = cache
        self.tau = tau
        self.lookup_cost_ms = lookup_cost_ms
        self.comm_cost_ms = comm_cost_ms
        self.faults: list[FaultSpec] = []

    def inject(self, faults: Iterable[FaultSpec]) -> None:
        for fault in faults:
            if fault.engine_id not in self.pools.engines:
                raise SimulationError(f"unknown engine {fault.engine_id!r} in fault spec")
            self.faults.append(fault)

    def _fault_factor(self, engine_id: str, at_time: float) -> float:
        # The most recently effective fault for an engine replaces earlier ones.
        active = [f for f in self.faults if f.engine_id == engine_id and at_time >= f.effective_from]
        if not active:
            return 1.0
        return max(active, key=lambda f: f.effective_from).latency_factor

    def run(
        self,
        ew: ExecutableWorkflow,
        seed: int,
        run_id: int = 0,
        monitor=None,
    ) -> RunResult:
        """Execute the plan. When a monitor is attached, its telemetry hook
        runs after every layer and may swap the bindings of not-yet-run
        nodes (re-optimization happens between layers, never mid-node)."""
        self._check_bindings(ew)
        rng = np.random.default_rng([seed, run_id])
        telemetry: list[TelemetryRecord] = []
        outputs: dict[str, str] = {}
        switches: list[SwitchEvent] = []
        done: set[str] = set()
        clock = 0.0
        current = ew

        layer_index = 0
        while layer_index < len(current.order):
            layer = current.order[layer_index]
            pending = [a for a in layer if a not in done]
            layer_latency = 0.0
            layer_records: list[TelemetryRecord] = []
            for agent_id in pending:
                record, output = self._run_node(current, agent_id, outputs, clock, rng, seed, run_id)
                outputs[agent_id] = output
                layer_records.append(record)
                layer_latency = max(layer_latency, record.latency_ms)
                done.add(agent_id)
            telemetry.extend(layer_records)
            clock += layer_latency

            if monitor is not None:
                switched = monitor.observe_layer(
                    layer_records,
                    current,
                    frozenset(done),
                    clock,
                    can_reoptimize=layer_index + 1 < len(current.order),
                )
                if switched is not None:
                    new_plan, event = switched
                    switches.append(event)
                    current = new_plan
                    layer_index = self._resume_index(current, done)
                    continue
            layer_index += 1

        totals = RunResult(
            telemetry=telemetry,
            outputs=outputs,
            total_latency_ms=clock,
            total_monetary_usd=sum(t.monetary_usd for t in telemetry),
            total_tokens=sum(t.tokens for t in telemetry),
            total_energy_j=sum(t.energy_j for t in telemetry),
            switches=switches,
            final_plan=current,
        )
        return totals

    def _resume_index(self, plan: ExecutableWorkflow, done: set[str]) -> int:
        for i, layer in enumerate(plan.order):
            if any(a not in done for a in layer):
                return i
        return len(plan.order)

    def _check_bindings(self, ew: ExecutableWorkflow) -> None:
        for b in ew.bindings:
            if b.engine not in self.pools.engines:
                raise SimulationError(f"binding of {b.agent_id} references unknown engine {b.engine!r}")
            if b.model is not None and b.model not in self.pools.models:
                raise SimulationError(f"binding of {b.agent_id} references unknown model {b.model!r}")

    def _input_digest(self, ew: ExecutableWorkflow, agent_id: str, outputs: Mapping[str, str]) -> str:
        preds = sorted(e.src for e in ew.base.data_edges() if e.dst == agent_id)
        agent = ew.base.agent(agent_id)
        if not preds:
            # Source nodes pull from an external input identified by capability,
            # so identical source tasks across workflows collide on purpose.
            blob = f"source:{agent.capability.id}"
        else:
            blob = ",".join(outputs[p] for p in preds)
        return hashlib.sha256(blob.encode()).hexdigest()

    def _run_node(
        self,
        ew: ExecutableWorkflow,
        agent_id: str,
        outputs: Mapping[str, str],
        clock: float,
        rng: np.random.Generator,
        seed: int,
        run_id: int,
    ) -> tuple[TelemetryRecord, str]:
        agent = ew.base.agent(agent_id)
        binding = ew.binding_of(agent_id)
        workload = ew.base.workload_of(agent_id)
        engine = self.pools.engines[binding.engine]
        input_digest = self._input_digest(ew, agent_id, outputs)

        # The request mode is part of the structural identity: a deterministic
        # extract and a stochastic one over the same input are distinct tasks.
        mode = "sto" if agent.is_stochastic else "det"
        sig = TaskSignature(
            capability=agent.capability.id,
            input_digest=input_digest,
            param_slots=(("input", input_digest), ("mode", mode)),
            free_text=f"{agent.capability.id} over {input_digest[:16]}",
        )

        if self.cache is not None:
            if not agent.is_stochastic:
                payload = self.cache.get_exact(sig)
                if payload is not None:
                    return self._hit_record(agent_id, binding, clock, run_id), payload.decode()
            else:
                hit = self.cache.get_semantic(sig, self.tau)
                if hit is not None:
                    payload, _sim = hit
                    return self._hit_record(agent_id, binding, clock, run_id), payload.decode()

        # The simulated world is parameterized from profiles; the EWMA store
        # is the optimizer's belief and only informs planning estimates.
        # Sampling from beliefs would compound injected fault factors.
        est = estimate_node(agent, binding, workload, self.pools, stats=None)
        mean = est.means[LATENCY]
        variance = est.variances[LATENCY]
        latency = sample_latency(rng, mean, variance)
        latency *= self._fault_factor(binding.engine, clock)
        n_inputs = sum(1 for e in ew.base.data_edges() if e.dst == agent_id)
        latency += self.comm_cost_ms * n_inputs

        tokens = workload.total_tokens if agent.is_stochastic else 0
        monetary = engine.monetary_rate / 1000.0 * latency
        if agent.is_stochastic:
            model = self.pools.models[binding.model]
            monetary += tokens / 1e6 * model.price_per_million_tokens
        energy = engine.energy_rate / 1000.0 * latency

        if agent.is_stochastic:
            output = hashlib.sha256(f"{agent_id}|{input_digest}|{seed}".encode()).hexdigest()
        else:
            output = hashlib.sha256(f"{agent_id}|{input_digest}".encode()).hexdigest()

        if self.cache is not None:
            self.cache.put_result(sig, output.encode(), deterministic_source=not agent.is_stochastic)

        record = TelemetryRecord(
            run_id=run_id,
            agent_id=agent_id,
            binding=binding,
            latency_ms=latency,
            tokens=tokens,
            monetary_usd=monetary,
            energy_j=energy,
            cache_hit=False,
            logical_time=clock,
        )
        return record, output

    def _hit_record(self, agent_id: str, binding: Binding, clock: float, run_id: int) -> TelemetryRecord:
        return TelemetryRecord(
            run_id=run_id,
            agent_id=agent_id,
            binding=binding,
            latency_ms=self.lookup_cost_ms,
            tokens=0,
            monetary_usd=0.0,
            energy_j=0.0,
            cache_hit=True,
            logical_time=clock,
        )


def telemetry_to_jsonl(records: Iterable[TelemetryRecord]) -> str:
    return "".join(json.dumps(r.as_dict(), sort_keys=True) + "\n" for r in records)
