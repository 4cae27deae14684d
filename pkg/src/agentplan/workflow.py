"""Abstract and executable workflow graphs.

A workflow is a directed graph of registry agents with typed dataflow edges.
Feedback edges are carried as annotations only: they are ignored by ordering,
costing and acyclicity checks. All operations here are pure functions over
immutable inputs.
"""

from __future__ import annotations

import hashlib
import json
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Mapping, Optional

MODALITIES = frozenset({"structured", "unstructured-text", "stream", "vector", "image", "mixed"})
DETERMINISM = frozenset({"deterministic", "stochastic"})

STRUCTURE_LABELS = (
    "chain",
    "branching-chain",
    "tree",
    "dag",
    "orchestrated-dag",
    "feedback-graph",
    "pub-sub",
    "cyclic",
    "mesh",
    "hybrid",
)

# Labels that are only assigned when the producing tool tagged the workflow;
# no topological rule is defined for them.
TAGGED_LABELS = frozenset({"pub-sub", "cyclic", "mesh", "hybrid"})

ORCHESTRATION_CAPABILITY = "orchestration"


@dataclass(frozen=True)
class CapabilityId:
    id: str
    modality: str = "structured"

    def __post_init__(self):
        if not self.id:
            raise ValueError("capability id must be non-empty")
        if self.modality not in MODALITIES:
            raise ValueError(f"unknown modality {self.modality!r}")


@dataclass(frozen=True)
class AgentSpec:
    agent_id: str
    capability: CapabilityId
    description: str
    input_role: str
    output_role: str
    determinism: str
    # Workload-generator metadata: preferred engine class for deterministic
    # tasks. Advisory; candidate bindings ignore it.
    engine_class_hint: Optional[str] = None

    def __post_init__(self):
        if self.determinism not in DETERMINISM:
            raise ValueError(f"determinism must be one of {sorted(DETERMINISM)}")

    @property
    def is_stochastic(self) -> bool:
        return self.determinism == "stochastic"


@dataclass(frozen=True)
class Edge:
    src: str
    dst: str
    kind: str = "data"
    # An adapter annotation permits a role mismatch on a data edge (the edge
    # carries ordering/control, or an adaptor bridges the roles).
    adapter: bool = False

    def __post_init__(self):
        if self.kind not in ("data", "feedback"):
            raise ValueError(f"edge kind must be data|feedback, got {self.kind!r}")


@dataclass(frozen=True)
class NodeWorkload:
    """Per-node workload annotation: record cardinality and token counts."""

    input_cardinality: int = 0
    tokens_in: int = 0
    tokens_out: int = 0

    def __post_init__(self):
        if min(self.input_cardinality, self.tokens_in, self.tokens_out) < 0:
            raise ValueError("workload magnitudes must be >= 0")

    @property
    def total_tokens(self) -> int:
        return self.tokens_in + self.tokens_out


@dataclass(frozen=True)
class AbstractWorkflow:
    name: str
    nodes: tuple[AgentSpec, ...]
    edges: tuple[Edge, ...] = ()
    # Optional generator tag for structures with no topological rule.
    structure_tag: Optional[str] = None
    # agent_id -> NodeWorkload; treated as immutable.
    workloads: Mapping[str, NodeWorkload] = field(default_factory=dict)

    def agent(self, agent_id: str) -> AgentSpec:
        for spec in self.nodes:
            if spec.agent_id == agent_id:
                return spec
        raise KeyError(agent_id)

    @property
    def agent_ids(self) -> tuple[str, ...]:
        return tuple(spec.agent_id for spec in self.nodes)

    def data_edges(self) -> tuple[Edge, ...]:
        return tuple(e for e in self.edges if e.kind == "data")

    def feedback_edges(self) -> tuple[Edge, ...]:
        return tuple(e for e in self.edges if e.kind == "feedback")

    def workload_of(self, agent_id: str) -> NodeWorkload:
        return self.workloads.get(agent_id, NodeWorkload())


@dataclass(frozen=True)
class Binding:
    """Concrete (model, engine) choice for one agent; model unset when deterministic."""

    agent_id: str
    engine: str
    model: Optional[str] = None

    def key(self) -> tuple[str, str]:
        return (self.engine, self.model or "")


@dataclass(frozen=True)
class ExecutableWorkflow:
    base: AbstractWorkflow
    bindings: tuple[Binding, ...]
    order: tuple[tuple[str, ...], ...]
    # The workflow the planner rewrote `base` from; provenance only, so
    # re-optimization can search the full variant space again. Not part of
    # the plan identity.
    origin: Optional[AbstractWorkflow] = None

    def binding_of(self, agent_id: str) -> Binding:
        for b in self.bindings:
            if b.agent_id == agent_id:
                return b
        raise KeyError(agent_id)

    def binding_map(self) -> dict[str, Binding]:
        return {b.agent_id: b for b in self.bindings}

    @property
    def rewrite_origin(self) -> AbstractWorkflow:
        return self.origin if self.origin is not None else self.base


@dataclass(frozen=True)
class ValidationReport:
    ok: bool
    violations: tuple[str, ...] = ()


def make_executable(
    base: AbstractWorkflow,
    bindings: Mapping[str, Binding],
    origin: Optional[AbstractWorkflow] = None,
) -> ExecutableWorkflow:
    ordered = tuple(sorted(bindings.values(), key=lambda b: b.agent_id))
    return ExecutableWorkflow(base=base, bindings=ordered, order=topo_order(base), origin=origin)


# ---------------------------------------------------------------------------
# Validation


def validate(w: AbstractWorkflow, registry: Optional[Mapping[str, AgentSpec]] = None) -> ValidationReport:
    """Collect every violation; ok iff none. Violations are data, not faults."""
    violations: list[str] = []
    if not w.nodes:
        violations.append("empty workflow: at least one node required")

    ids = [spec.agent_id for spec in w.nodes]
    seen = set()
    for agent_id in ids:
        if agent_id in seen:
            violations.append(f"duplicate node: {agent_id}")
        seen.add(agent_id)

    if registry is not None:
        for spec in w.nodes:
            if spec.agent_id not in registry:
                violations.append(f"unknown agent: {spec.agent_id} not in registry")

    node_set = set(ids)
    specs = {spec.agent_id: spec for spec in w.nodes}
    for e in w.edges:
        if e.src not in node_set or e.dst not in node_set:
            violations.append(f"dangling edge: {e.src}->{e.dst}")
            continue
        if e.kind == "data" and not e.adapter:
            src, dst = specs[e.src], specs[e.dst]
            if src.output_role != dst.input_role:
                violations.append(
                    f"role mismatch on {e.src}->{e.dst}: "
                    f"{src.output_role!r} vs {dst.input_role!r} (no adapter)"
                )

    if node_set and _has_data_cycle(w, node_set):
        violations.append("cycle in data edges")

    return ValidationReport(ok=not violations, violations=tuple(violations))


def _has_data_cycle(w: AbstractWorkflow, node_set: set[str]) -> bool:
    indeg = {n: 0 for n in node_set}
    succ: dict[str, list[str]] = {n: [] for n in node_set}
    for e in w.data_edges():
        if e.src in node_set and e.dst in node_set:
            succ[e.src].append(e.dst)
            indeg[e.dst] += 1
    queue = deque(n for n, d in indeg.items() if d == 0)
    removed = 0
    while queue:
        n = queue.popleft()
        removed += 1
        for m in succ[n]:
            indeg[m] -= 1
            if indeg[m] == 0:
                queue.append(m)
    return removed != len(node_set)


# ---------------------------------------------------------------------------
# Ordering


def topo_order(w: AbstractWorkflow) -> tuple[tuple[str, ...], ...]:
    """Kahn layering over data edges; each layer is one parallel group.

    Feedback edges are ignored. Ties broken by agent_id ascending so the
    result is deterministic across runs.
    """
    report = validate(w)
    if not report.ok:
        raise ValueError(f"invalid workflow: {'; '.join(report.violations)}")
    indeg = {n: 0 for n in w.agent_ids}
    succ: dict[str, list[str]] = {n: [] for n in w.agent_ids}
    for e in w.data_edges():
        succ[e.src].append(e.dst)
        indeg[e.dst] += 1
    frontier = sorted(n for n, d in indeg.items() if d == 0)
    layers: list[tuple[str, ...]] = []
    while frontier:
        layers.append(tuple(frontier))
        nxt: set[str] = set()
        for n in frontier:
            for m in succ[n]:
                indeg[m] -= 1
                if indeg[m] == 0:
                    nxt.add(m)
        frontier = sorted(nxt)
    return tuple(layers)


def ancestors(w: AbstractWorkflow, agent_id: str) -> set[str]:
    """Transitive predecessors of a node via data edges."""
    pred: dict[str, list[str]] = {n: [] for n in w.agent_ids}
    for e in w.data_edges():
        pred[e.dst].append(e.src)
    out: set[str] = set()
    stack = list(pred[agent_id])
    while stack:
        n = stack.pop()
        if n not in out:
            out.add(n)
            stack.extend(pred[n])
    return out


def dependency_closure(w: AbstractWorkflow) -> set[tuple[str, str]]:
    """All (ancestor, descendant) pairs over data edges."""
    closure: set[tuple[str, str]] = set()
    for n in w.agent_ids:
        for a in ancestors(w, n):
            closure.add((a, n))
    return closure


# ---------------------------------------------------------------------------
# Classification


def classify_structure(w: AbstractWorkflow) -> str:
    """Label the workflow shape.

    Precedence for overlapping shapes: feedback-graph > orchestrated-dag >
    chain > branching-chain > tree > dag. Tags from the workload generator
    win for the four label kinds that have no topological rule.
    """
    report = validate(w)
    if not report.ok:
        raise ValueError(f"invalid workflow: {'; '.join(report.violations)}")

    if w.structure_tag in TAGGED_LABELS:
        return w.structure_tag

    if w.feedback_edges():
        return "feedback-graph"

    n = len(w.nodes)
    indeg = {a: 0 for a in w.agent_ids}
    outdeg = {a: 0 for a in w.agent_ids}
    for e in w.data_edges():
        outdeg[e.src] += 1
        indeg[e.dst] += 1

    if _is_orchestrated(w, outdeg):
        return "orchestrated-dag"

    if _is_single_path(w, indeg, outdeg):
        return "chain"

    connected = _weakly_connected(w)
    all_single_parent = all(d <= 1 for d in indeg.values())
    splitters = sum(1 for d in outdeg.values() if d >= 2)
    roots = sum(1 for d in indeg.values() if d == 0)

    if connected and all_single_parent and splitters == 1:
        return "branching-chain"
    if connected and all_single_parent and roots == 1 and splitters >= 2:
        return "tree"
    return "dag"


def _is_orchestrated(w: AbstractWorkflow, outdeg: Mapping[str, int]) -> bool:
    # A hub is an orchestration-capable agent with a data edge to or from
    # every other node, dispatching to at least two of them. Capability-based
    # detection keeps plain pipelines and fan-out trees out of this label.
    if len(w.nodes) < 3:
        return False
    neighbors: dict[str, set[str]] = {a: set() for a in w.agent_ids}
    for e in w.data_edges():
        neighbors[e.src].add(e.dst)
        neighbors[e.dst].add(e.src)
    for spec in w.nodes:
        if spec.capability.id != ORCHESTRATION_CAPABILITY:
            continue
        others = set(w.agent_ids) - {spec.agent_id}
        if others <= neighbors[spec.agent_id] and outdeg[spec.agent_id] >= 2:
            return True
    return False


def _is_single_path(w: AbstractWorkflow, indeg: Mapping[str, int], outdeg: Mapping[str, int]) -> bool:
    if any(d > 1 for d in indeg.values()) or any(d > 1 for d in outdeg.values()):
        return False
    if len(w.data_edges()) != len(w.nodes) - 1:
        return False
    return _weakly_connected(w)


def _weakly_connected(w: AbstractWorkflow) -> bool:
    if not w.nodes:
        return False
    adj: dict[str, set[str]] = {a: set() for a in w.agent_ids}
    for e in w.data_edges():
        adj[e.src].add(e.dst)
        adj[e.dst].add(e.src)
    seen = {w.agent_ids[0]}
    stack = [w.agent_ids[0]]
    while stack:
        for m in adj[stack.pop()]:
            if m not in seen:
                seen.add(m)
                stack.append(m)
    return len(seen) == len(w.nodes)


# ---------------------------------------------------------------------------
# Rewrites


def rewrite_variants(
    w: AbstractWorkflow,
    max_variants: int,
    registry: Optional[Mapping[str, AgentSpec]] = None,
) -> tuple[AbstractWorkflow, ...]:
    """The workflow itself plus dependency-preserving structure rewrites.

    R1 (parallelization): an ordering-only data edge (u, v) — one whose
    source output role is not v's input role — is dropped when some ancestor
    of v already produces v's input role; v is rewired to that producer if
    needed, freeing u and v to run concurrently.

    R2 (orchestrator insertion): when an orchestration-capable agent is
    available (in the workflow or the registry), a variant adds hub dispatch
    edges from it to every other node.

    The original workflow comes first; rewrites follow in canonical-hash
    order, truncated to max_variants.
    """
    report = validate(w)
    if not report.ok:
        raise ValueError(f"invalid workflow: {'; '.join(report.violations)}")
    if max_variants < 1:
        return ()

    found: dict[str, AbstractWorkflow] = {canonical_hash(w): w}
    queue = deque([w])
    # Closure over single-edge R1 applications and one R2 application; the
    # work cap bounds pathological role-collision blowups.
    work_cap = max(64, max_variants * 4)
    while queue and len(found) < work_cap:
        cur = queue.popleft()
        for variant in _r1_rewrites(cur):
            h = canonical_hash(variant)
            if h not in found:
                found[h] = variant
                queue.append(variant)
        r2 = _r2_orchestrator(cur, registry)
        if r2 is not None:
            h = canonical_hash(r2)
            if h not in found:
                found[h] = r2
                queue.append(r2)

    base_hash = canonical_hash(w)
    rewrites = sorted((h, v) for h, v in found.items() if h != base_hash)
    result = [w] + [v for _, v in rewrites]
    return tuple(result[:max_variants])


def _r1_rewrites(w: AbstractWorkflow) -> list[AbstractWorkflow]:
    specs = {s.agent_id: s for s in w.nodes}
    out: list[AbstractWorkflow] = []
    for e in w.data_edges():
        if specs[e.src].output_role == specs[e.dst].input_role:
            continue  # role-consuming edge, not ordering-only
        if specs[e.src].capability.id == ORCHESTRATION_CAPABILITY:
            continue  # hub dispatch edges are control, not ordering
        dst_spec = specs[e.dst]
        anc = ancestors(w, e.dst)
        producers = sorted(
            p for p in anc
            if p != e.src and specs[p].output_role == dst_spec.input_role
        )
        if not producers:
            continue
        remaining = [x for x in w.edges if x != e]
        has_producer_edge = any(
            x.kind == "data" and x.dst == e.dst and specs[x.src].output_role == dst_spec.input_role
            for x in remaining
        )
        if not has_producer_edge:
            remaining.append(Edge(src=producers[0], dst=e.dst, kind="data"))
        variant = replace(w, edges=tuple(remaining))
        if validate(variant).ok:
            out.append(variant)
    return out


def _r2_orchestrator(
    w: AbstractWorkflow, registry: Optional[Mapping[str, AgentSpec]]
) -> Optional[AbstractWorkflow]:
    hub = None
    for spec in w.nodes:
        if spec.capability.id == ORCHESTRATION_CAPABILITY:
            hub = spec
            break
    nodes = w.nodes
    if hub is None and registry is not None:
        for agent_id in sorted(registry):
            if registry[agent_id].capability.id == ORCHESTRATION_CAPABILITY and agent_id not in w.agent_ids:
                hub = registry[agent_id]
                nodes = w.nodes + (hub,)
                break
    if hub is None or len(nodes) < 3:
        return None

    existing = {(e.src, e.dst) for e in w.edges}
    hub_anc = ancestors(w, hub.agent_id) if hub.agent_id in w.agent_ids else set()
    new_edges = list(w.edges)
    added = False
    for spec in nodes:
        v = spec.agent_id
        if v == hub.agent_id or (hub.agent_id, v) in existing or (v, hub.agent_id) in existing:
            continue
        if v in hub_anc:
            continue  # dispatch edge would close a data cycle
        new_edges.append(Edge(src=hub.agent_id, dst=v, kind="data", adapter=True))
        added = True
    if not added:
        return None
    variant = replace(w, nodes=nodes, edges=tuple(new_edges))
    return variant if validate(variant).ok else None


# ---------------------------------------------------------------------------
# Canonical hashing


def canonical_hash(w: AbstractWorkflow) -> str:
    """Stable content hash over nodes, edges and tags (name excluded)."""
    payload = {
        "nodes": sorted(
            (s.agent_id, s.capability.id, s.capability.modality, s.input_role, s.output_role, s.determinism)
            for s in w.nodes
        ),
        "edges": sorted((e.src, e.dst, e.kind, e.adapter) for e in w.edges),
        "tag": w.structure_tag,
    }
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def plan_hash(ew: ExecutableWorkflow) -> str:
    """Stable content hash of a concrete plan (graph + bindings)."""
    payload = {
        "workflow": canonical_hash(ew.base),
        "bindings": sorted((b.agent_id, b.engine, b.model or "") for b in ew.bindings),
    }
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


# ---------------------------------------------------------------------------
# File format and DOT export


def workflow_to_dict(w: AbstractWorkflow, inline_agents: bool = True) -> dict:
    doc: dict = {
        "name": w.name,
        "nodes": list(w.agent_ids),
        "edges": [
            {"from": e.src, "to": e.dst, "kind": e.kind, **({"adapter": True} if e.adapter else {})}
            for e in w.edges
        ],
    }
    if w.structure_tag:
        doc["structure"] = w.structure_tag
    if w.workloads:
        doc["workloads"] = {
            a: {"cardinality": wl.input_cardinality, "tokens_in": wl.tokens_in, "tokens_out": wl.tokens_out}
            for a, wl in sorted(w.workloads.items())
        }
    if inline_agents:
        doc["agents"] = [agent_to_dict(s) for s in w.nodes]
    return doc


def workflow_from_dict(doc: Mapping, registry: Optional[Mapping[str, AgentSpec]] = None) -> AbstractWorkflow:
    inline = {a["agent_id"]: agent_from_dict(a) for a in doc.get("agents", [])}
    specs: list[AgentSpec] = []
    for agent_id in doc["nodes"]:
        if agent_id in inline:
            specs.append(inline[agent_id])
        elif registry is not None and agent_id in registry:
            specs.append(registry[agent_id])
        else:
            raise KeyError(f"agent {agent_id!r} not found inline or in registry")
    edges = tuple(
        Edge(src=e["from"], dst=e["to"], kind=e.get("kind", "data"), adapter=bool(e.get("adapter", False)))
        for e in doc.get("edges", [])
    )
    workloads = {
        a: NodeWorkload(
            input_cardinality=int(v.get("cardinality", 0)),
            tokens_in=int(v.get("tokens_in", 0)),
            tokens_out=int(v.get("tokens_out", 0)),
        )
        for a, v in doc.get("workloads", {}).items()
    }
    return AbstractWorkflow(
        name=doc.get("name", "workflow"),
        nodes=tuple(specs),
        edges=edges,
        structure_tag=doc.get("structure"),
        workloads=workloads,
    )


def agent_to_dict(s: AgentSpec) -> dict:
    doc = {
        "agent_id": s.agent_id,
        "capability": {"id": s.capability.id, "modality": s.capability.modality},
        "description": s.description,
        "input_role": s.input_role,
        "output_role": s.output_role,
        "determinism": s.determinism,
    }
    if s.engine_class_hint:
        doc["engine_class_hint"] = s.engine_class_hint
    return doc


def agent_from_dict(doc: Mapping) -> AgentSpec:
    cap = doc["capability"]
    return AgentSpec(
        agent_id=doc["agent_id"],
        capability=CapabilityId(id=cap["id"], modality=cap.get("modality", "structured")),
        description=doc.get("description", ""),
        input_role=doc["input_role"],
        output_role=doc["output_role"],
        determinism=doc["determinism"],
        engine_class_hint=doc.get("engine_class_hint"),
    )


def to_dot(w: AbstractWorkflow, bindings: Optional[Mapping[str, Binding]] = None) -> str:
    """Graphviz DOT text; feedback edges dashed, bindings in labels if given."""
    lines = ["digraph workflow {", "  rankdir=LR;"]
    for spec in w.nodes:
        label = f"{spec.agent_id}\\n{spec.capability.id}"
        if bindings and spec.agent_id in bindings:
            b = bindings[spec.agent_id]
            label += f"\\n{b.engine}" + (f" / {b.model}" if b.model else "")
        lines.append(f'  "{spec.agent_id}" [label="{label}"];')
    for e in w.edges:
        style = ' [style=dashed]' if e.kind == "feedback" else ""
        lines.append(f'  "{e.src}" -> "{e.dst}"{style};')
    lines.append("}")
    return "\n".join(lines) + "\n"


def load_workflow(path, registry: Optional[Mapping[str, AgentSpec]] = None) -> AbstractWorkflow:
    with open(path, "r", encoding="utf-8") as fh:
        return workflow_from_dict(json.load(fh), registry)


def save_workflow(w: AbstractWorkflow, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(workflow_to_dict(w), fh, indent=2, sort_keys=True)
        fh.write("\n")
