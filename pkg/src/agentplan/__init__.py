"""Multi-objective query optimizer for multi-agent workflows.

Maps an abstract workflow (agents + dataflow) to a Pareto frontier of
executable workflows (model/engine bindings + structure rewrites), backed
by a unified cost model, a multi-layer cache, a seeded execution simulator
and runtime re-optimization.
"""

from .cache import MMCache, TaskSignature, plan_signature
from .costs import (
    CostDistribution,
    ObjectiveSet,
    StatisticsStore,
    compose_parallel,
    compose_sequential,
    estimate_node,
    estimate_workflow,
    update_statistics,
)
from .errors import (
    AgentPlanError,
    ConfigError,
    EstimationError,
    GenerationError,
    InfeasiblePolicyError,
    PlanningError,
    SimulationError,
    SpaceTooLargeError,
)
from .monitor import DeviationRule, Monitor, ReoptTrigger
from .planner import (
    ConstrainedPolicy,
    LexicographicPolicy,
    ParetoFrontier,
    WeightedPolicy,
    brute_force,
    dominates,
    optimize,
    pareto_filter,
    reoptimize,
    select,
)
from .pools import Binding, EngineProfile, ModelProfile, Pools, candidate_bindings, space_size
from .simulator import FaultSpec, Simulator, TelemetryRecord
from .workflow import (
    AbstractWorkflow,
    AgentSpec,
    CapabilityId,
    Edge,
    ExecutableWorkflow,
    NodeWorkload,
    classify_structure,
    rewrite_variants,
    topo_order,
    validate,
)
from .workload import WorkloadProfile, bench, generate

__version__ = "0.1.0"
