"""Exception hierarchy. Validation findings are data, not exceptions; these
cover genuine faults (unsatisfiable agents, bad configs, oversized spaces)."""


class AgentPlanError(Exception):
    """Base class for all faults raised by this package."""


class EstimationError(AgentPlanError):
    """Cost estimation impossible, e.g. missing quality for (model, capability)."""


class PlanningError(AgentPlanError):
    """Planner fault: invalid workflow, unsatisfiable agent, empty objectives."""

    def __init__(self, message: str, agent_id: str | None = None):
        super().__init__(message)
        self.agent_id = agent_id


class SpaceTooLargeError(PlanningError):
    """Brute-force enumeration refused; carries the offending size."""

    def __init__(self, size: int, bound: int):
        super().__init__(f"search space of {size} plans exceeds brute-force bound {bound}")
        self.size = size
        self.bound = bound


class InfeasiblePolicyError(AgentPlanError):
    """No frontier plan meets the constrained policy's budgets."""

    def __init__(self, message: str, nearest_misses=None):
        super().__init__(message)
        self.nearest_misses = nearest_misses or []


class SimulationError(AgentPlanError):
    """Executor fault: unknown engine/model profile referenced by a binding."""


class GenerationError(AgentPlanError):
    """Workload generator fault: inconsistent profile."""


class ConfigError(AgentPlanError):
    """CLI / config usage error (maps to exit status 2)."""
