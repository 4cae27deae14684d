import pytest

from agentplan.fixtures import default_pools, support_workflow
from agentplan.pools import Pools


@pytest.fixture(scope="session")
def pools() -> Pools:
    return default_pools()


@pytest.fixture()
def support(pools):
    return support_workflow()


def extend(pools: Pools, specs) -> Pools:
    registry = dict(pools.registry)
    registry.update({s.agent_id: s for s in specs})
    return Pools(registry=registry, models=pools.models, engines=pools.engines)
