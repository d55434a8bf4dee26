"""Module-based decomposition of fault maintenance trees.

A gate roots a *module* when nothing below it is reachable from outside
except through the gate itself, and it covers at least two events. Each such
module is analysed on its own; its failure probability at the horizon is
turned into an equivalent exponential rate and the module is replaced, in
its parent, by a single abstract event (a ``V_g`` node) with that rate.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Sequence

from .analysis import (AnalysisResult, TransientOptions, bounded_reach,
                       cumulative_reward, equivalent_failure_rate, metrics_from_ctmc)
from .model import (OR, RDEP, EbeSpec, FmtModel, GateSpec, require_valid,
                    to_dag)
from .semantics import DEFAULT_STATE_BUDGET, TOP_FAILED, explore


class CertainFailureError(RuntimeError):
    pass


@dataclass(frozen=True)
class SubGraph:
    """One piece of the decomposed tree.

    ``nodes`` are the original node ids kept in this piece; ``boundary`` maps
    each inserted ``V_g`` id to the top of the child piece it stands for.
    """

    top: str
    nodes: frozenset[str]
    boundary: dict = field(default_factory=dict, hash=False, compare=False)
    level: int = 0
    is_root: bool = False

    def vg_nodes(self) -> list[str]:
        return list(self.boundary)


def vg_id(child_top: str) -> str:
    return f"Vg_{child_top}"


def _descendants(model: FmtModel, node: str) -> set[str]:
    out, stack = set(), [node]
    while stack:
        k = stack.pop()
        if k in out:
            continue
        out.add(k)
        n = model.nodes[k]
        if isinstance(n, GateSpec) and n.kind == OR:
            stack.extend(n.inputs)
    return out


def is_module(model: FmtModel, gate: str) -> bool:
    """True when ``gate``'s subtree meets the rest of the tree only at ``gate``.

    RDEP gates count as links between their trigger and dependents, so a
    subtree holding only part of an RDEP's events is not a module.
    """
    inside = _descendants(model, gate)
    parents = model.parents()
    for k in inside - {gate}:
        for p in parents.get(k, ()):
            n = model.nodes[p]
            if isinstance(n, GateSpec) and n.kind == RDEP:
                continue
            if p not in inside:
                return False
    for g in model.rdeps():
        events = {model.physical(g.trigger)} | {model.physical(d) for d in g.dependents}
        touched = events & inside
        if touched and touched != events:
            return False
    return True


def event_count(model: FmtModel, gate: str) -> int:
    return sum(1 for k in _descendants(model, gate) if isinstance(model.nodes[k], EbeSpec))


def decompose(dag: FmtModel, min_events: int = 2) -> list[SubGraph]:
    """Split the tree at every module boundary, bottom-up (root piece last)."""
    require_valid(dag)
    out: list[SubGraph] = []

    def build(top: str, level: int) -> None:
        kept, boundary = {top}, {}
        stack = list(_inputs(dag, top))
        while stack:
            k = stack.pop()
            n = dag.nodes[k]
            if (isinstance(n, GateSpec) and n.kind == OR
                    and event_count(dag, k) >= min_events and is_module(dag, k)):
                boundary[vg_id(k)] = k
                build(k, level + 1)
                continue
            kept.add(k)
            stack.extend(_inputs(dag, k))
        for g in dag.rdeps():
            if dag.physical(g.trigger) in kept:
                kept.add(g.id)
                kept.update(i for i in g.inputs if i in dag.aliases)
        out.append(SubGraph(top, frozenset(kept), boundary, level, level == 0))

    build(dag.top_event, 0)
    return out


def _inputs(model, k):
    n = model.nodes[k]
    return n.inputs if isinstance(n, GateSpec) and n.kind == OR else ()


def submodel(model: FmtModel, sg: SubGraph, rates: dict[str, float],
             stages: int = 1) -> FmtModel:
    """The FMT of one piece, with each ``V_g`` as an exponential-ish abstract EBE."""
    nodes = {}
    for k, n in model.nodes.items():
        if k not in sg.nodes or k in model.aliases:
            continue
        if isinstance(n, GateSpec) and n.kind == RDEP:
            n = GateSpec(n.id, RDEP, (model.physical(n.trigger),), n.gamma, n.dependents, n.line)
        elif isinstance(n, GateSpec):
            n = GateSpec(n.id, OR, tuple(vg_id(i) if vg_id(i) in sg.boundary else i
                                         for i in n.inputs), line=n.line)
        nodes[k] = n
    for vg in sg.boundary:
        lam = rates[vg]
        t_deg = math.inf if lam == 0 else 1.0 / lam
        nodes[vg] = EbeSpec(vg, stages, t_deg, 1.0, 2.0)
    return FmtModel(nodes, sg.top, model.policy, model.costs)


@dataclass
class LevelStats:
    top: str
    level: int
    states: int
    failure_probability: float | None = None
    rate: float | None = None
    time_ms: float = 0.0


def _own_share(model, compiled, kind, horizon, opts) -> float:
    """What a piece adds on its own: its events' failures, downtime or cost."""
    if horizon <= 0 or kind == "reliability":
        return 0.0
    names = {"expected_failures": ["own_failures"], "availability": ["own_down"],
             "expected_cost": ["maintenance_cost", "own_down"]}[kind]
    vals = cumulative_reward(compiled.ctmc, names, horizon, opts)
    if kind == "expected_cost":
        return float(vals[0] + model.costs.cost_failure_per_day * vals[1])
    return float(vals[0])


def _abstract_one(model, pieces, kind, horizon, stages, budget, opts):
    rates: dict[str, float] = {}
    stats: list[LevelStats] = []
    share = 0.0
    t_mttf = 0.0
    for sg in pieces[:-1]:
        t0 = time.perf_counter()
        sub = submodel(model, sg, rates, stages)
        compiled = explore(sub, budget=budget, unmaintained=sg.vg_nodes())
        De = bounded_reach(compiled.ctmc, TOP_FAILED, horizon, opts) if horizon > 0 else 0.0
        if De >= 1.0 - 1e-15:
            raise CertainFailureError(
                f"sub-tree {sg.top!r} fails with certainty by t={horizon:g}d; "
                "no finite equivalent rate")
        lam = equivalent_failure_rate(De, horizon) if horizon > 0 else 0.0
        rates[vg_id(sg.top)] = lam
        share += _own_share(model, compiled, kind, horizon, opts)
        ms = (time.perf_counter() - t0) * 1e3
        t_mttf += ms
        stats.append(LevelStats(sg.top, sg.level, compiled.ctmc.n_states, De, lam, ms))

    root = pieces[-1]
    t0 = time.perf_counter()
    sub = submodel(model, root, rates, stages)
    compiled = explore(sub, budget=budget, unmaintained=root.vg_nodes())
    share += _own_share(model, compiled, kind, horizon, opts)
    if kind == "reliability":
        value = float(metrics_from_ctmc(compiled.ctmc, kind, [horizon], opts)[0])
    elif kind == "availability":
        value = 1.0 if horizon <= 0 else min(1.0, max(0.0, 1.0 - share / horizon))
    elif kind == "expected_cost":
        value = model.costs.cost_operational_per_day * horizon + share
    else:
        value = share
    ms = (time.perf_counter() - t0) * 1e3
    stats.append(LevelStats(root.top, root.level, compiled.ctmc.n_states, time_ms=ms))
    return value, stats, t_mttf, ms


def abstract_analyze(model: FmtModel, kind: str, horizons: Sequence[float], *,
                     name: str = "model", stages: int = 1,
                     budget: int = DEFAULT_STATE_BUDGET,
                     opts: TransientOptions = TransientOptions()) -> list[AnalysisResult]:
    """Analyse ``model`` piece by piece; lower pieces are redone per horizon.

    Reliability is read from the root piece. The other metrics are sums over
    all pieces of what each piece's own events cause (failures, downtime,
    maintenance and downtime cost): a ``V_g`` node never recovers, so reading
    them from the root would miss repaired and repeated module failures.
    """
    require_valid(model)
    pieces = decompose(to_dag(model))
    if len(pieces) == 1:
        from .analysis import compute_metrics
        return compute_metrics(model, kind, horizons, name=name, budget=budget, opts=opts)
    out = []
    for h in horizons:
        value, stats, t_mttf, t_metric = _abstract_one(model, pieces, kind, float(h),
                                                        stages, budget, opts)
        out.append(AnalysisResult(
            name, kind, float(h), value, sum(s.states for s in stats), t_mttf + t_metric,
            extra={"levels": [vars(s) for s in stats], "mttf_time_ms": t_mttf,
                   "metric_time_ms": t_metric,
                   "note": "lower pieces are recomputed for every horizon"}))
    return out


@dataclass
class ComparisonRow:
    horizon: float
    original_time: float
    original_value: float
    mttf_time: float
    abstract_time: float
    abstract_value: float
    original_states: int
    abstract_states: int

    COLUMNS = ("horizon", "original_time", "original_value", "mttf_time",
               "abstract_time", "abstract_value", "original_states", "abstract_states",
               "deviation", "state_reduction")

    @property
    def deviation(self) -> float:
        if self.original_value == 0:
            return abs(self.abstract_value)
        return abs(self.abstract_value - self.original_value) / abs(self.original_value)

    @property
    def state_reduction(self) -> float:
        return 1.0 - self.abstract_states / self.original_states

    def to_row(self) -> dict:
        return {c: getattr(self, c) for c in self.COLUMNS}


def compare(model: FmtModel, kind: str, horizons: Sequence[float], *,
            budget: int = DEFAULT_STATE_BUDGET, stages: int = 1,
            opts: TransientOptions = TransientOptions()) -> list[ComparisonRow]:
    """Monolithic versus decomposed analysis, one row per horizon (times in ms)."""
    rows = []
    for h in horizons:
        t0 = time.perf_counter()
        compiled = explore(model, budget=budget)
        orig = float(metrics_from_ctmc(compiled.ctmc, kind, [h], opts)[0])
        t_orig = (time.perf_counter() - t0) * 1e3
        res = abstract_analyze(model, kind, [h], stages=stages, budget=budget, opts=opts)[0]
        mttf = res.extra.get("mttf_time_ms", 0.0)
        rows.append(ComparisonRow(float(h), t_orig, orig, mttf, res.time_ms - mttf,
                                  res.value, compiled.ctmc.n_states, res.states))
    return rows
