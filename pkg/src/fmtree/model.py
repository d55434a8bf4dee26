"""Fault maintenance tree domain types and structural validation."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field, replace
from types import MappingProxyType
from typing import Mapping, Union

OR = "OR"
RDEP = "RDEP"


@dataclass(frozen=True)
class EbeSpec:
    """Extended basic event: a component with ``levels`` degradation phases.

    ``t_deg`` is the expected time from new to failed (days); each phase is
    exponential with rate ``levels / t_deg``.
    """

    id: str
    levels: int
    t_deg: float
    t_clean: float
    t_replace: float
    line: int | None = field(default=None, compare=False)

    @property
    def phase_rate(self) -> float:
        return self.levels / self.t_deg


@dataclass(frozen=True)
class GateSpec:
    """OR gate, or RDEP gate (``inputs`` holds the single trigger)."""

    id: str
    kind: str
    inputs: tuple[str, ...]
    gamma: float = 1.0
    dependents: tuple[str, ...] = ()
    line: int | None = field(default=None, compare=False)

    @property
    def trigger(self) -> str:
        return self.inputs[0]


Node = Union[EbeSpec, GateSpec]


@dataclass(frozen=True)
class MaintenancePolicy:
    """Global repair/inspection timing. ``math.inf`` disables a timer."""

    t_rep: float = math.inf
    t_oh: float = math.inf
    t_insp: float = math.inf
    timer_stages: int = 3

    @property
    def enabled(self) -> bool:
        return any(math.isfinite(t) for t in (self.t_rep, self.t_oh, self.t_insp))


NO_MAINTENANCE = MaintenancePolicy()


@dataclass(frozen=True)
class CostModel:
    cost_repair: float = 100.0
    cost_replace: float = 5000.0
    cost_operational_per_day: float = 0.0
    cost_failure_per_day: float = 0.0

    def __post_init__(self):
        for name in ("cost_repair", "cost_replace", "cost_operational_per_day",
                     "cost_failure_per_day"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")


@dataclass(frozen=True)
class Violation:
    rule: str
    node: str | None
    message: str

    def __str__(self):
        where = f" [{self.node}]" if self.node else ""
        return f"{self.rule}{where}: {self.message}"


class InvalidModelError(ValueError):
    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(str(v) for v in self.violations))


@dataclass(frozen=True)
class FmtModel:
    """A fault maintenance tree.

    ``aliases`` maps duplicated trigger nodes (created by :func:`to_dag`) to
    the EBE they stand for; both refer to the same physical component.
    """

    nodes: Mapping[str, Node]
    top_event: str
    policy: MaintenancePolicy = NO_MAINTENANCE
    costs: CostModel = CostModel()
    aliases: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "nodes", MappingProxyType(dict(self.nodes)))
        object.__setattr__(self, "aliases", MappingProxyType(dict(self.aliases)))

    def __eq__(self, other):
        if not isinstance(other, FmtModel):
            return NotImplemented
        return (dict(self.nodes) == dict(other.nodes)
                and self.top_event == other.top_event
                and self.policy == other.policy
                and self.costs == other.costs
                and dict(self.aliases) == dict(other.aliases))

    def __hash__(self):
        return hash((self.top_event, tuple(sorted(self.nodes))))

    @property
    def edges(self) -> dict[str, tuple[str, ...]]:
        """Parent -> children adjacency (RDEP gates point at their trigger)."""
        return {k: n.inputs for k, n in self.nodes.items() if isinstance(n, GateSpec)}

    def ebes(self) -> list[EbeSpec]:
        """Physical EBEs in declaration order (aliases excluded)."""
        return [n for k, n in self.nodes.items()
                if isinstance(n, EbeSpec) and k not in self.aliases]

    def gates(self, kind: str | None = None) -> list[GateSpec]:
        return [n for n in self.nodes.values()
                if isinstance(n, GateSpec) and (kind is None or n.kind == kind)]

    def rdeps(self) -> list[GateSpec]:
        return self.gates(RDEP)

    def parents(self) -> dict[str, list[str]]:
        out: dict[str, list[str]] = {k: [] for k in self.nodes}
        for g, children in self.edges.items():
            for c in children:
                out.setdefault(c, []).append(g)
        return out

    def physical(self, node_id: str) -> str:
        return self.aliases.get(node_id, node_id)

    def with_policy(self, policy: MaintenancePolicy) -> "FmtModel":
        return replace(self, policy=policy)

    def with_costs(self, costs: CostModel) -> "FmtModel":
        return replace(self, costs=costs)


def validate(model: FmtModel) -> list[Violation]:
    """Return every structural rule ``model`` breaks; empty means well-formed."""
    out: list[Violation] = []
    nodes = model.nodes
    if model.top_event not in nodes:
        out.append(Violation("top-event", model.top_event,
                             "top event is not a declared node"))

    for key, node in nodes.items():
        if key != node.id:
            out.append(Violation("node-id", key, f"key does not match id {node.id!r}"))
        if isinstance(node, EbeSpec):
            out.extend(_check_ebe(node))
        elif isinstance(node, GateSpec):
            out.extend(_check_gate(node, nodes))
        else:
            out.append(Violation("node-kind", key, "unknown node type"))

    for dup, orig in model.aliases.items():
        if not isinstance(nodes.get(orig), EbeSpec):
            out.append(Violation("alias", dup, f"alias target {orig!r} is not an EBE"))

    parents = model.parents()
    roots = [k for k, n in nodes.items()
             if not any(nodes[p].kind != RDEP for p in parents.get(k, ()) if p in nodes)
             and not (isinstance(n, GateSpec) and n.kind == RDEP)
             and k not in model.aliases]
    if len(roots) > 1:
        out.append(Violation("single-top", None,
                             "multiple top events: " + ", ".join(sorted(roots))))
    elif roots and model.top_event in nodes and roots[0] != model.top_event:
        out.append(Violation("single-top", roots[0],
                             f"root {roots[0]!r} is not the declared top event"))
    for k, ps in parents.items():
        if k not in nodes:
            continue
        logic_parents = [p for p in ps if nodes[p].kind != RDEP]
        if len(logic_parents) > 1:
            out.append(Violation("tree", k,
                                 "node has several parents: " + ", ".join(logic_parents)))
        if ps and isinstance(nodes[k], GateSpec) and nodes[k].kind == RDEP:
            out.append(Violation("rdep-parent", k, "RDEP gate cannot be a gate input"))

    cycle = _find_cycle(model.edges)
    if cycle:
        out.append(Violation("acyclic", cycle[0], "cycle: " + " -> ".join(cycle)))

    seen_dep: dict[str, str] = {}
    for g in model.rdeps():
        for d in g.dependents:
            phys = model.physical(d)
            if phys in seen_dep:
                out.append(Violation("rdep-dependent", d,
                                     f"already accelerated by {seen_dep[phys]!r}"))
            seen_dep[phys] = g.id
    return out


def _check_ebe(e: EbeSpec) -> list[Violation]:
    out = []
    if not isinstance(e.levels, int) or e.levels < 1:
        out.append(Violation("ebe-levels", e.id, "levels must be a positive integer"))
    for name in ("t_deg", "t_clean", "t_replace"):
        v = getattr(e, name)
        if not (v > 0):
            out.append(Violation("ebe-delay", e.id, f"{name} must be > 0"))
    if e.t_clean == e.t_replace:
        out.append(Violation("ebe-maintenance", e.id, "t_clean must differ from t_replace"))
    return out


def _check_gate(g: GateSpec, nodes) -> list[Violation]:
    out = []
    if g.kind not in (OR, RDEP):
        return [Violation("gate-kind", g.id, f"unsupported gate kind {g.kind!r}")]
    if not g.inputs:
        out.append(Violation("gate-inputs", g.id, "gate needs at least one input"))
    for i in g.inputs:
        if i not in nodes:
            out.append(Violation("unknown-ref", g.id, f"input {i!r} is not declared"))
    if g.kind == RDEP:
        if len(g.inputs) != 1:
            out.append(Violation("rdep-trigger", g.id, "RDEP needs exactly one trigger input"))
        elif g.inputs[0] in nodes and not isinstance(nodes[g.inputs[0]], EbeSpec):
            out.append(Violation("rdep-trigger", g.id, "RDEP trigger must be EBE"))
        if not g.dependents:
            out.append(Violation("rdep-dependents", g.id, "RDEP needs dependents"))
        for d in g.dependents:
            if d not in nodes:
                out.append(Violation("unknown-ref", g.id, f"dependent {d!r} is not declared"))
            elif not isinstance(nodes[d], EbeSpec):
                out.append(Violation("rdep-dependents", g.id, f"dependent {d!r} must be EBE"))
        if not (g.gamma >= 1):
            out.append(Violation("rdep-gamma", g.id, "gamma must be >= 1"))
    return out


def _find_cycle(edges: Mapping[str, tuple[str, ...]]) -> list[str] | None:
    white, grey, black = 0, 1, 2
    color: dict[str, int] = {}
    for start in edges:
        if color.get(start, white) != white:
            continue
        stack = [(start, iter(edges.get(start, ())))]
        path = [start]
        color[start] = grey
        while stack:
            node, it = stack[-1]
            nxt = next(it, None)
            if nxt is None:
                color[node] = black
                stack.pop()
                path.pop()
                continue
            c = color.get(nxt, white)
            if c == grey:
                return path[path.index(nxt):] + [nxt]
            if c == white:
                color[nxt] = grey
                stack.append((nxt, iter(edges.get(nxt, ()))))
                path.append(nxt)
    return None


def policy_warnings(policy: MaintenancePolicy) -> list[str]:
    """Soft checks: inspection at least as frequent as repair, repair as overhaul."""
    out = []
    if policy.t_insp > policy.t_rep and math.isfinite(policy.t_rep):
        out.append(f"inspection interval {policy.t_insp:g}d exceeds repair interval "
                   f"{policy.t_rep:g}d")
    if policy.t_rep > policy.t_oh and math.isfinite(policy.t_oh):
        out.append(f"repair interval {policy.t_rep:g}d exceeds overhaul interval "
                   f"{policy.t_oh:g}d")
    if policy.timer_stages < 1:
        out.append("timer_stages must be >= 1")
    return out


def require_valid(model: FmtModel) -> FmtModel:
    violations = validate(model)
    if violations:
        raise InvalidModelError(violations)
    return model


def to_dag(model: FmtModel) -> FmtModel:
    """Give every RDEP its own copy of the trigger EBE.

    The copy ``<trigger>@<rdep>`` becomes the RDEP's only input; the original
    trigger keeps its place in the failure logic.
    """
    require_valid(model)
    nodes = dict(model.nodes)
    aliases = dict(model.aliases)
    for g in model.rdeps():
        trig = g.trigger
        if trig in aliases:
            continue
        dup = f"{trig}@{g.id}"
        nodes[dup] = replace(nodes[trig], id=dup)
        nodes[g.id] = replace(g, inputs=(dup,))
        aliases[dup] = trig
    return replace(model, nodes=nodes, aliases=aliases)


def topological_order(model: FmtModel) -> list[str]:
    """Children before parents (Kahn's algorithm over the failure logic)."""
    edges = model.edges
    indeg = {k: 0 for k in model.nodes}
    for children in edges.values():
        for c in children:
            indeg[c] += 1
    queue = deque(k for k, d in indeg.items() if d == 0)
    order = []
    while queue:
        k = queue.popleft()
        order.append(k)
        for c in edges.get(k, ()):
            indeg[c] -= 1
            if indeg[c] == 0:
                queue.append(c)
    if len(order) != len(indeg):
        raise InvalidModelError([Violation("acyclic", None, "graph has a cycle")])
    return order[::-1]


def or_subtree_ebes(model: FmtModel, node_id: str) -> list[str]:
    """Physical EBE ids under ``node_id`` following OR inputs only."""
    out: list[str] = []
    stack = [node_id]
    while stack:
        k = stack.pop()
        n = model.nodes[k]
        if isinstance(n, EbeSpec):
            phys = model.physical(k)
            if phys not in out:
                out.append(phys)
        elif n.kind == OR:
            stack.extend(reversed(n.inputs))
    return out
