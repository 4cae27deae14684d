"""Unified multi-dimensional cost model.

Every cost is a distribution: a mean and a variance per dimension of the
fixed five-dimension set (latency_ms, monetary_usd, error, tokens, energy_j).
All dimensions are minimized; accuracy appears as error = 1 - quality.
Dimensions are treated as independent; cross-dimension correlations are not
modeled.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Mapping, Optional

from .errors import EstimationError
from .pools import Pools
from .workflow import AgentSpec, Binding, ExecutableWorkflow, NodeWorkload

DIMENSIONS = ("latency_ms", "monetary_usd", "error", "tokens", "energy_j")
_DIM_INDEX = {name: i for i, name in enumerate(DIMENSIONS)}
LATENCY, MONEY, ERROR, TOKENS, ENERGY = range(5)

EWMA_ALPHA = 0.3


def dim_index(name: str) -> int:
    try:
        return _DIM_INDEX[name]
    except KeyError:
        raise ValueError(f"unknown cost dimension {name!r}") from None


@dataclass(frozen=True)
class ObjectiveSet:
    """Ordered subset of the cost dimensions, in canonical dimension order."""

    dimensions: tuple[str, ...]

    def __post_init__(self):
        if not self.dimensions:
            raise ValueError("objective set must be non-empty")
        if len(set(self.dimensions)) != len(self.dimensions):
            raise ValueError("duplicate objectives")
        for d in self.dimensions:
            dim_index(d)
        ordered = tuple(d for d in DIMENSIONS if d in self.dimensions)
        if ordered != self.dimensions:
            object.__setattr__(self, "dimensions", ordered)

    @property
    def indices(self) -> tuple[int, ...]:
        return tuple(_DIM_INDEX[d] for d in self.dimensions)

    def __iter__(self):
        return iter(self.dimensions)

    def __len__(self):
        return len(self.dimensions)


@dataclass(frozen=True)
class CostDistribution:
    """Per-dimension mean and variance over the full five-dimension set."""

    means: tuple[float, float, float, float, float]
    variances: tuple[float, float, float, float, float] = (0.0, 0.0, 0.0, 0.0, 0.0)

    def mean(self, name: str) -> float:
        return self.means[dim_index(name)]

    def variance(self, name: str) -> float:
        return self.variances[dim_index(name)]

    def as_dict(self) -> dict:
        return {
            "means": dict(zip(DIMENSIONS, self.means)),
            "variances": dict(zip(DIMENSIONS, self.variances)),
        }

    @staticmethod
    def zero() -> "CostDistribution":
        return ZERO_COST


ZERO_COST = CostDistribution(means=(0.0,) * 5, variances=(0.0,) * 5)


def _clamp_error_var(mean_e: float, var_e: float) -> float:
    # Keep mean +/- sqrt(var) inside [0, 1].
    bound = min(mean_e, 1.0 - mean_e)
    return min(var_e, bound * bound)


def compose_sequential(x: CostDistribution, y: CostDistribution) -> CostDistribution:
    """Serial composition: additive dimensions add; error follows the
    independent noisy-chain rule 1 - (1-ex)(1-ey)."""
    xm, ym = x.means, y.means
    xv, yv = x.variances, y.variances
    # Error-free operands pass through exactly, keeping the all-zero
    # distribution a true identity at float precision.
    if xm[ERROR] == 0.0:
        err = ym[ERROR]
    elif ym[ERROR] == 0.0:
        err = xm[ERROR]
    else:
        err = 1.0 - (1.0 - xm[ERROR]) * (1.0 - ym[ERROR])
    return CostDistribution(
        means=(xm[LATENCY] + ym[LATENCY], xm[MONEY] + ym[MONEY], err,
               xm[TOKENS] + ym[TOKENS], xm[ENERGY] + ym[ENERGY]),
        variances=(xv[LATENCY] + yv[LATENCY], xv[MONEY] + yv[MONEY],
                   _clamp_error_var(err, xv[ERROR] + yv[ERROR]),
                   xv[TOKENS] + yv[TOKENS], xv[ENERGY] + yv[ENERGY]),
    )


def compose_parallel(x: CostDistribution, y: CostDistribution) -> CostDistribution:
    """Concurrent composition: latency is the max of means, carrying the
    argmax branch's variance (ties take the larger variance); everything
    else composes as in sequence."""
    seq = compose_sequential(x, y)
    xm, ym = x.means[LATENCY], y.means[LATENCY]
    xv, yv = x.variances[LATENCY], y.variances[LATENCY]
    if xm > ym:
        lat_mean, lat_var = xm, xv
    elif ym > xm:
        lat_mean, lat_var = ym, yv
    else:
        lat_mean, lat_var = xm, max(xv, yv)
    means = list(seq.means)
    variances = list(seq.variances)
    means[LATENCY] = lat_mean
    variances[LATENCY] = lat_var
    return CostDistribution(means=tuple(means), variances=tuple(variances))


# ---------------------------------------------------------------------------
# Telemetry statistics (EWMA)

#: Dimensions that telemetry can observe; error is not observable per run.
OBSERVED_DIMENSIONS = ("latency_ms", "monetary_usd", "tokens", "energy_j")


class StatisticsStore:
    """EWMA of observed costs per (agent, binding, dimension).

    Reads are lock-free on immutable snapshots of primitive values; updates
    are serialized.
    """

    def __init__(self, alpha: float = EWMA_ALPHA):
        self.alpha = alpha
        self._ewma: dict[tuple[str, str, str, str], float] = {}
        self._counts: dict[tuple[str, str, str], int] = {}
        self.rejected = 0
        self._lock = threading.Lock()

    def _binding_key(self, agent_id: str, binding: Binding) -> tuple[str, str, str]:
        return (agent_id, binding.engine, binding.model or "")

    def update(self, agent_id: str, binding: Binding, observed: Mapping[str, float]) -> None:
        key = self._binding_key(agent_id, binding)
        with self._lock:
            for dim, value in observed.items():
                if dim not in OBSERVED_DIMENSIONS:
                    continue
                full = key + (dim,)
                old = self._ewma.get(full)
                if old is None:
                    self._ewma[full] = float(value)
                else:
                    self._ewma[full] = self.alpha * float(value) + (1.0 - self.alpha) * old
            self._counts[key] = self._counts.get(key, 0) + 1

    def reject(self) -> None:
        with self._lock:
            self.rejected += 1

    def observation_count(self, agent_id: str, binding: Binding) -> int:
        return self._counts.get(self._binding_key(agent_id, binding), 0)

    def ewma(self, agent_id: str, binding: Binding, dim: str) -> Optional[float]:
        return self._ewma.get(self._binding_key(agent_id, binding) + (dim,))

    def observed_means(self, agent_id: str, binding: Binding) -> dict[str, float]:
        key = self._binding_key(agent_id, binding)
        out = {}
        for dim in OBSERVED_DIMENSIONS:
            v = self._ewma.get(key + (dim,))
            if v is not None:
                out[dim] = v
        return out

    def copy(self) -> "StatisticsStore":
        dup = StatisticsStore(alpha=self.alpha)
        dup._ewma = dict(self._ewma)
        dup._counts = dict(self._counts)
        dup.rejected = self.rejected
        return dup


def update_statistics(stats: StatisticsStore, record) -> StatisticsStore:
    """Fold one telemetry record into the store (unknown bindings rejected)."""
    observed = {
        "latency_ms": record.latency_ms,
        "monetary_usd": record.monetary_usd,
        "tokens": float(record.tokens),
        "energy_j": record.energy_j,
    }
    stats.update(record.agent_id, record.binding, observed)
    return stats


# ---------------------------------------------------------------------------
# Node and workflow estimation


def estimate_node(
    agent: AgentSpec,
    binding: Binding,
    workload: NodeWorkload,
    pools: Pools,
    stats: Optional[StatisticsStore] = None,
) -> CostDistribution:
    """Cost distribution of one bound agent under a workload.

    Deterministic agents: engine startup plus cardinality / throughput;
    money and energy accrue at engine rates over that busy time. Stochastic
    agents add per-token model latency and per-token pricing, and their
    error is 1 - quality(model, capability). Observed EWMA means, when
    present, replace the profile-derived means.
    """
    engine = pools.engines.get(binding.engine)
    if engine is None:
        raise EstimationError(f"unknown engine {binding.engine!r}")

    startup_mean, startup_var = engine.startup_latency_ms
    rate_mean, rate_var = engine.unit_rate
    card = float(workload.input_cardinality)

    lat_mean = startup_mean + card / rate_mean
    # First-order propagation of throughput noise through cardinality/rate.
    lat_var = startup_var + (card / (rate_mean * rate_mean)) ** 2 * rate_var

    tokens_mean = 0.0
    error_mean = 0.0
    money_extra = 0.0

    if agent.is_stochastic:
        if binding.model is None:
            raise EstimationError(f"stochastic agent {agent.agent_id} bound without a model")
        model = pools.models.get(binding.model)
        if model is None:
            raise EstimationError(f"unknown model {binding.model!r}")
        quality = model.quality(agent.capability.id)
        if quality is None:
            raise EstimationError(
                f"no quality entry for ({binding.model}, {agent.capability.id}); refusing to default"
            )
        total_tokens = float(workload.total_tokens)
        tok_mean, tok_var = model.latency_per_token_ms
        lat_mean += tok_mean * total_tokens
        # Per-token jitter treated as independent across tokens.
        lat_var += tok_var * total_tokens
        tokens_mean = total_tokens
        error_mean = 1.0 - quality
        money_extra = total_tokens / 1e6 * model.price_per_million_tokens

    money_per_ms = engine.monetary_rate / 1000.0
    energy_per_ms = engine.energy_rate / 1000.0
    money_mean = money_per_ms * lat_mean + money_extra
    energy_mean = energy_per_ms * lat_mean
    money_var = money_per_ms * money_per_ms * lat_var
    energy_var = energy_per_ms * energy_per_ms * lat_var

    if stats is not None:
        observed = stats.observed_means(agent.agent_id, binding)
        if "latency_ms" in observed:
            lat_mean = observed["latency_ms"]
        if "monetary_usd" in observed:
            money_mean = observed["monetary_usd"]
        if "tokens" in observed:
            tokens_mean = observed["tokens"]
        if "energy_j" in observed:
            energy_mean = observed["energy_j"]

    return CostDistribution(
        means=(lat_mean, money_mean, error_mean, tokens_mean, energy_mean),
        variances=(lat_var, money_var, 0.0, 0.0, energy_var),
    )


def estimate_workflow(
    ew: ExecutableWorkflow,
    pools: Pools,
    stats: Optional[StatisticsStore] = None,
    node_costs: Optional[Mapping[str, CostDistribution]] = None,
) -> CostDistribution:
    """Compose node estimates over the topo layers: parallel within a layer,
    sequential across layers. node_costs overrides estimation per node
    (used to freeze realized costs during re-optimization)."""
    bindings = ew.binding_map()
    total = ZERO_COST
    for layer in ew.order:
        layer_cost: Optional[CostDistribution] = None
        for agent_id in layer:
            if node_costs is not None and agent_id in node_costs:
                c = node_costs[agent_id]
            else:
                agent = ew.base.agent(agent_id)
                c = estimate_node(agent, bindings[agent_id], ew.base.workload_of(agent_id), pools, stats)
            layer_cost = c if layer_cost is None else compose_parallel(layer_cost, c)
        if layer_cost is not None:
            total = compose_sequential(total, layer_cost)
    return total
