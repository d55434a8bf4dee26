"""CTMC semantics of fault maintenance trees.

Every tree element becomes a small action-labelled CTMC (:class:`ElementCtmc`)
and the whole tree is their parallel composition. Synchronisation follows
*sync vectors*: a global action fires when every member component can take
its local transition and the vector's guard holds on the current global
state; the rate is the product of the local rates. Passive members (the EBEs
and their degradation delays when a maintenance action completes) join if
they have a matching transition and otherwise stay put.

The ``trigger`` transitions of the delay chains have a very large rate
(``mu``). By default they are collapsed: all timers start already triggered,
and a repair delay starts in the same step as the RM decision that triggers
it. Passing ``mu`` to :func:`compile` keeps the initial trigger exact.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .ctmc import Ctmc, Reward
from .model import (OR, CostModel, EbeSpec, FmtModel, GateSpec, or_subtree_ebes,
                    MaintenancePolicy, require_valid)

NEW, THRESH, FAILED = "new", "thresh", "failed"
TOP_FAILED = "top_failed"
MAINTENANCE = "maintenance"

TRIGGER = "trigger"
MOVE = "move"
PERFORM_CLEAN = "perform_clean"
PERFORM_REPLACE = "perform_replace"
INSPECT = "inspect"
CHECK_CLEAN = "check_clean"
CHECK_REPLACE = "check_replace"
TRIGGER_CLEAN = "trigger_clean"
TRIGGER_REPLACE = "trigger_replace"

ALPHABET = frozenset({TRIGGER, MOVE, PERFORM_CLEAN, PERFORM_REPLACE, INSPECT,
                      CHECK_CLEAN, CHECK_REPLACE, TRIGGER_CLEAN, TRIGGER_REPLACE})

DEFAULT_STATE_BUDGET = 2_000_000


def degrade(i: int) -> str:
    return f"degrade_{i}"


def in_alphabet(action: str) -> bool:
    return action in ALPHABET or (action.startswith("degrade_") and action[8:].isdigit())


class StateBudgetExceeded(RuntimeError):
    pass


@dataclass(frozen=True)
class ElementCtmc:
    """An element chain with optional guards.

    ``moves`` lists ``(src, action, dst, rate, guard)``; guards are strings
    evaluated against a :class:`GuardContext` (``trig``, ``thresh``,
    ``accel:<ebe>`` and their negations ``!...``). Alternatives with opposite
    guards may share ``(src, action, dst)``, so ``ctmc`` (which merges them)
    is only the structural view; composition works from ``moves``.
    """

    ctmc: Ctmc
    role: str
    owner: str
    moves: tuple[tuple[int, str, int, float, str | None], ...] = ()
    start: int | None = None

    def __post_init__(self):
        if not self.moves:
            object.__setattr__(self, "moves", tuple(
                (s, a, d, r, None) for s, a, d, r in self.ctmc.transitions()))

    @property
    def initial(self) -> int:
        return self.ctmc.initial if self.start is None else self.start


def _element(n, initial, trans, labels, names, role, owner, start=None, actions=()):
    keyed: dict = {}
    for s, a, d, r, g in trans:
        if r > 0:
            keyed[(s, a, d, g)] = keyed.get((s, a, d, g), 0.0) + r
    c = Ctmc.from_transitions(n, initial, [(s, a, d, r) for (s, a, d, _), r in keyed.items()],
                              labels, names, actions)
    moves = tuple((s, a, d, r, g) for (s, a, d, g), r in keyed.items())
    return ElementCtmc(c, role, owner, moves, start)


# -- element chains ---------------------------------------------------------

def ebe_ctmc(spec: EbeSpec) -> ElementCtmc:
    """Degradation levels ``s0 .. sN``; every rate is 1 (the delay sets it)."""
    N = spec.levels
    trans = [(i - 1, degrade(i), i, 1.0, None) for i in range(1, N + 1)]
    for j in range(1, N + 1):
        trans.append((j, PERFORM_CLEAN, j - 1, 1.0, None))
        trans.append((j, PERFORM_REPLACE, 0, 1.0, None))
    labels = {NEW: [0], THRESH: list(range(1, N)), FAILED: [N]}
    acts = [degrade(i) for i in range(1, N + 1)] + [PERFORM_CLEAN, PERFORM_REPLACE]
    return _element(N + 1, 0, trans, labels, [f"s{i}" for i in range(N + 1)],
                    "EBE", spec.id, actions=acts)


def degradation_delay(spec: EbeSpec, gamma: float | None = None, mu: float = 1.0,
                      collapsed: bool = True) -> ElementCtmc:
    """Extended delay driving an EBE: stage ``d_i -> d_{i+1}`` is ``degrade_i``.

    With ``gamma`` every stage also has an accelerated copy (rate times gamma)
    guarded by ``accel:<id>``. Cleaning steps back one stage so the delay stays
    aligned with the EBE level; replacement resets to ``d1``.
    """
    N, lam, eid = spec.levels, spec.phase_rate, spec.id
    trans = [(0, TRIGGER, 1, mu, None)]
    for i in range(1, N + 1):
        if gamma is None:
            trans.append((i, degrade(i), i + 1, lam, None))
        else:
            trans.append((i, degrade(i), i + 1, lam, f"!accel:{eid}"))
            trans.append((i, degrade(i), i + 1, lam * gamma, f"accel:{eid}"))
    # wrap-around of the plain delay; the EBE has no partner, so it never fires
    trans.append((N + 1, degrade(N + 1), 1, lam, None))
    for i in range(2, N + 2):
        trans.append((i, PERFORM_CLEAN, i - 1, 1.0, None))
        trans.append((i, PERFORM_REPLACE, 1, 1.0, None))
    return _element(N + 2, 0, trans, {"elapsed": [N + 1]},
                    [f"d{i}" for i in range(N + 2)], "DELAY-Tdeg", eid,
                    start=1 if collapsed else None)


def periodic_timer(T: float, N: int, signal: str, role: str, mu: float = 1.0,
                   collapsed: bool = True) -> ElementCtmc:
    """Cyclic Erlang(N, N/T) timer emitting ``signal`` each time T elapses.

    The elapsed state ``d_{N+1}`` is folded into the wrap-around, so the
    signal transition ``d_N -> d1`` restarts the next period.
    """
    lam = N / T
    trans = [(0, TRIGGER, 1, mu, None)]
    trans += [(i, MOVE, i + 1, lam, None) for i in range(1, N)]
    trans.append((N, signal, 1, lam, None))
    return _element(N + 1, 0, trans, {}, [f"d{i}" for i in range(N + 1)], role, "policy",
                    start=1 if collapsed else None)


def oneshot_delay(T: float, N: int, start_label: str, done_label: str,
                  role: str) -> ElementCtmc:
    """Idle in ``d0`` until started, then Erlang(N, N/T) until ``done_label``."""
    lam = N / T
    trans = [(0, start_label, 1, 1.0, None)]
    trans += [(i, MOVE, i + 1, lam, None) for i in range(1, N)]
    trans.append((N, done_label, 0, lam, None))
    return _element(N + 1, 0, trans, {"idle": [0]}, [f"d{i}" for i in range(N + 1)],
                    role, "policy")


def rm_ctmc(policy: MaintenancePolicy | None = None) -> ElementCtmc:
    """Repair module: ``rm0`` idle, ``rm1`` maintenance under way."""
    trans = [
        (0, CHECK_CLEAN, 1, 1.0, "trig"), (0, CHECK_CLEAN, 0, 1.0, "!trig"),
        (0, CHECK_REPLACE, 1, 1.0, "trig"), (0, CHECK_REPLACE, 0, 1.0, "!trig"),
        (0, INSPECT, 1, 1.0, "thresh"), (0, INSPECT, 0, 1.0, "!thresh"),
        (1, PERFORM_CLEAN, 0, 1.0, None), (1, PERFORM_REPLACE, 0, 1.0, None),
    ]
    return _element(2, 0, trans, {MAINTENANCE: [1]}, ["rm0", "rm1"], "RM", "policy")


def im_ctmc(policy: MaintenancePolicy | None = None) -> ElementCtmc:
    """Inspection module: ``im1`` while an inspection-initiated repair runs."""
    trans = [
        (0, INSPECT, 1, 1.0, "thresh"), (0, INSPECT, 0, 1.0, "!thresh"),
        (1, PERFORM_CLEAN, 0, 1.0, None), (1, PERFORM_REPLACE, 0, 1.0, None),
        (0, PERFORM_CLEAN, 0, 1.0, None), (0, PERFORM_REPLACE, 0, 1.0, None),
    ]
    return _element(2, 0, trans, {}, ["im0", "im1"], "IM", "policy")


# -- guards -----------------------------------------------------------------

@dataclass(frozen=True)
class GuardContext:
    """Current label (new/thresh/failed) of every EBE in a composite state.

    ``maintained`` restricts which EBEs the thresh/trig signals look at;
    ``None`` means all of them.
    """

    labels: Mapping[str, str]
    maintained: frozenset[str] | None = None

    def _watched(self):
        if self.maintained is None:
            return self.labels.items()
        return ((k, v) for k, v in self.labels.items() if k in self.maintained)


def level_label(level: int, levels: int) -> str:
    if level == 0:
        return NEW
    return FAILED if level == levels else THRESH


def guard_in(ctx: GuardContext, rdep: GateSpec, model: FmtModel | None = None) -> int:
    trig = model.physical(rdep.trigger) if model else rdep.trigger
    return int(ctx.labels[trig] == FAILED)


def guard_accel(ctx: GuardContext, rdep: GateSpec, model: FmtModel) -> tuple[float, ...]:
    """Effective degradation delays of the dependents (``T_deg / gamma`` when active)."""
    active = guard_in(ctx, rdep, model)
    out = []
    for d in rdep.dependents:
        t = model.nodes[model.physical(d)].t_deg
        out.append(t / rdep.gamma if active else t)
    return tuple(out)


def guard_fail(ctx: GuardContext, gate: GateSpec | EbeSpec | str, model: FmtModel) -> int:
    """1 iff the event has failed; OR gates fail when any input has."""
    node = model.nodes[gate] if isinstance(gate, str) else gate
    if isinstance(node, EbeSpec):
        return int(ctx.labels[model.physical(node.id)] == FAILED)
    if node.kind != OR:
        raise ValueError(f"{node.id} is not an OR gate or event")
    return int(any(guard_fail(ctx, i, model) for i in node.inputs))


def guard_thresh(ctx: GuardContext) -> int:
    return int(any(v == THRESH for _, v in ctx._watched()))


def guard_trig(ctx: GuardContext) -> int:
    return int(any(v != NEW for _, v in ctx._watched()))


# -- composition ------------------------------------------------------------

@dataclass(frozen=True)
class SyncVector:
    action: str
    members: tuple[tuple[int, str], ...]
    guard: str | None = None
    passive: tuple[tuple[int, str], ...] = ()


@dataclass
class Compiled:
    """A composed model together with the pieces it was built from."""

    ctmc: Ctmc
    elements: list[ElementCtmc]
    vectors: list[SyncVector]
    local_states: np.ndarray
    ebe_ids: list[str]
    product_size: int = 0
    notes: dict = field(default_factory=dict)

    def element_state(self, state: int) -> dict[str, str]:
        """Readable local states of composite ``state`` keyed by role/owner."""
        out = {}
        for k, el in enumerate(self.elements):
            out[f"{el.role}:{el.owner}"] = el.ctmc.name(int(self.local_states[state, k]))
        return out


def build_elements(model: FmtModel, *, mu: float | None = None,
                   unmaintained: frozenset[str] = frozenset()):
    """Element chains and sync vectors for ``model`` (see module docstring)."""
    ebes = model.ebes()
    policy = model.policy
    collapsed = mu is None
    accel: dict[str, float] = {}
    for g in model.rdeps():
        for d in g.dependents:
            accel[model.physical(d)] = g.gamma
    elements: list[ElementCtmc] = []
    vectors: list[SyncVector] = []
    ebe_idx, delay_idx = {}, {}
    triggerables = []
    for e in ebes:
        ebe_idx[e.id] = len(elements)
        elements.append(ebe_ctmc(e))
        delay_idx[e.id] = len(elements)
        rate = 1.0 if collapsed or triggerables else mu
        elements.append(degradation_delay(e, accel.get(e.id), rate, collapsed))
        triggerables.append(delay_idx[e.id])
        for i in range(1, e.levels + 1):
            vectors.append(SyncVector(degrade(i), ((ebe_idx[e.id], degrade(i)),
                                                   (delay_idx[e.id], degrade(i)))))

    maintained = [e for e in ebes if e.id not in unmaintained]
    timers = {}
    if maintained and policy.enabled:
        Nt = policy.timer_stages
        for T, signal, role in ((policy.t_rep, CHECK_CLEAN, "DELAY-Trp"),
                                (policy.t_oh, CHECK_REPLACE, "DELAY-Toh"),
                                (policy.t_insp, INSPECT, "DELAY-Tin")):
            if math.isfinite(T):
                timers[signal] = len(elements)
                elements.append(periodic_timer(T, Nt, signal, role, 1.0, collapsed))
                triggerables.append(timers[signal])
                vectors.append(SyncVector(MOVE, ((timers[signal], MOVE),)))
        rm = len(elements)
        elements.append(rm_ctmc(policy))
        im = len(elements)
        elements.append(im_ctmc(policy))
        oneshot = {}
        if CHECK_CLEAN in timers or INSPECT in timers:
            t_cln = max(e.t_clean for e in maintained)
            oneshot[PERFORM_CLEAN] = len(elements)
            elements.append(oneshot_delay(t_cln, Nt, TRIGGER_CLEAN, PERFORM_CLEAN, "DELAY-Tcln"))
        if CHECK_REPLACE in timers:
            t_rpl = max(e.t_replace for e in maintained)
            oneshot[PERFORM_REPLACE] = len(elements)
            elements.append(oneshot_delay(t_rpl, Nt, TRIGGER_REPLACE, PERFORM_REPLACE,
                                          "DELAY-Trpl"))
        for k in oneshot.values():
            vectors.append(SyncVector(MOVE, ((k, MOVE),)))

        if CHECK_CLEAN in timers:
            t = timers[CHECK_CLEAN]
            vectors.append(SyncVector(CHECK_CLEAN, ((t, CHECK_CLEAN), (rm, CHECK_CLEAN),
                                                    (oneshot[PERFORM_CLEAN], TRIGGER_CLEAN)),
                                      "trig"))
            vectors.append(SyncVector(CHECK_CLEAN, ((t, CHECK_CLEAN), (rm, CHECK_CLEAN)), "!trig"))
        if CHECK_REPLACE in timers:
            t = timers[CHECK_REPLACE]
            vectors.append(SyncVector(CHECK_REPLACE,
                                      ((t, CHECK_REPLACE), (rm, CHECK_REPLACE),
                                       (oneshot[PERFORM_REPLACE], TRIGGER_REPLACE)), "trig"))
            vectors.append(SyncVector(CHECK_REPLACE, ((t, CHECK_REPLACE), (rm, CHECK_REPLACE)),
                                      "!trig"))
        if INSPECT in timers:
            t = timers[INSPECT]
            vectors.append(SyncVector(INSPECT, ((t, INSPECT), (rm, INSPECT), (im, INSPECT),
                                                (oneshot[PERFORM_CLEAN], TRIGGER_CLEAN)),
                                      "thresh"))
            vectors.append(SyncVector(INSPECT, ((t, INSPECT), (rm, INSPECT), (im, INSPECT)),
                                      "!thresh"))
        for done, k in oneshot.items():
            passive = []
            for e in maintained:
                passive.append((ebe_idx[e.id], done))
                passive.append((delay_idx[e.id], done))
            vectors.append(SyncVector(done, ((k, done), (rm, done), (im, done)),
                                      passive=tuple(passive)))

    if not collapsed:
        vectors.append(SyncVector(TRIGGER, tuple((k, TRIGGER) for k in triggerables)))
    return elements, vectors, ebe_idx


class _Explorer:
    """Breadth-first generation of the reachable product under sync vectors."""

    def __init__(self, model: FmtModel, elements, vectors, ebe_idx, maintained):
        self.model = model
        self.elements = elements
        self.vectors = vectors
        # per element, per local state: action -> [(dst, rate, guard)]
        self.moves = []
        for el in elements:
            table = [dict() for _ in range(el.ctmc.n_states)]
            for s, a, d, r, g in el.moves:
                table[s].setdefault(a, []).append((d, r, g))
            self.moves.append(table)
        self.ebe_slots = [(eid, k, model.nodes[eid].levels) for eid, k in ebe_idx.items()]
        self.maintained = maintained
        self.top = model.top_event

    def context(self, state) -> GuardContext:
        labels = {eid: level_label(state[k], n) for eid, k, n in self.ebe_slots}
        return GuardContext(labels, self.maintained)

    def guard_values(self, ctx: GuardContext) -> dict[str, bool]:
        vals = {"trig": bool(guard_trig(ctx)), "thresh": bool(guard_thresh(ctx))}
        for g in self.model.rdeps():
            on = bool(guard_in(ctx, g, self.model))
            for d in g.dependents:
                vals[f"accel:{self.model.physical(d)}"] = on
        return vals

    @staticmethod
    def holds(guard, vals) -> bool:
        if guard is None:
            return True
        if guard[0] == "!":
            return not vals.get(guard[1:], False)
        return vals.get(guard, False)

    def successors(self, state, vals):
        out = []
        for vi, vec in enumerate(self.vectors):
            if vec.guard is not None and not self.holds(vec.guard, vals):
                continue
            partial = [(state, 1.0)]
            for k, label in vec.members:
                opts = [(d, r) for d, r, g in self.moves[k][state[k]].get(label, ())
                        if self.holds(g, vals)]
                if not opts:
                    partial = []
                    break
                nxt = []
                for st, rate in partial:
                    for d, r in opts:
                        s2 = list(st)
                        s2[k] = d
                        nxt.append((tuple(s2), rate * r))
                partial = nxt
            if not partial:
                continue
            for k, label in vec.passive:
                opts = [(d, r) for d, r, g in self.moves[k][state[k]].get(label, ())
                        if self.holds(g, vals)]
                if not opts:
                    continue
                nxt = []
                for st, rate in partial:
                    for d, r in opts:
                        s2 = list(st)
                        s2[k] = d
                        nxt.append((tuple(s2), rate * r))
                partial = nxt
            for st, rate in partial:
                if st != state:
                    out.append((vi, st, rate))
        return out

    def run(self, budget: int):
        start = tuple(el.initial for el in self.elements)
        index = {start: 0}
        order = [start]
        src, dst, vec, rate = [], [], [], []
        failed = []
        queue = deque([start])
        while queue:
            state = queue.popleft()
            i = index[state]
            ctx = self.context(state)
            failed.append(bool(guard_fail(ctx, self.top, self.model)))
            vals = self.guard_values(ctx)
            for vi, nxt, r in self.successors(state, vals):
                j = index.get(nxt)
                if j is None:
                    j = len(order)
                    if j >= budget:
                        raise StateBudgetExceeded(
                            f"state space exceeds budget of {budget} states; "
                            "try decomposition (--decompose) or a larger --budget")
                    index[nxt] = j
                    order.append(nxt)
                    queue.append(nxt)
                src.append(i)
                dst.append(j)
                vec.append(vi)
                rate.append(r)
        return order, np.array(src, dtype=np.int64), np.array(dst, dtype=np.int64), \
            np.array(vec, dtype=np.int64), np.array(rate, dtype=float), np.array(failed)


def explore(model: FmtModel, costs: CostModel | None = None, *, mu: float | None = None,
            budget: int = DEFAULT_STATE_BUDGET,
            unmaintained: Sequence[str] = ()) -> Compiled:
    """Compose the element chains of ``model`` into its reachable CTMC.

    ``unmaintained`` lists EBEs that RM/IM neither watch nor repair (used for
    abstracted sub-trees).
    """
    require_valid(model)
    costs = costs or model.costs
    unmaintained = frozenset(unmaintained)
    elements, vectors, ebe_idx = build_elements(model, mu=mu, unmaintained=unmaintained)
    maintained = frozenset(e for e in ebe_idx if e not in unmaintained)
    ex = _Explorer(model, elements, vectors, ebe_idx, maintained)
    order, src, dst, vec, rate, failed = ex.run(budget)
    n = len(order)

    actions = tuple(dict.fromkeys(v.action for v in vectors))
    act_index = {a: i for i, a in enumerate(actions)}
    vec_act = np.array([act_index[v.action] for v in vectors], dtype=np.int32)
    act = vec_act[vec] if len(vec) else np.zeros(0, dtype=np.int32)

    labels = {TOP_FAILED: failed}
    local = np.array(order, dtype=np.int32).reshape(n, len(elements))
    for k, el in enumerate(elements):
        if el.role == "RM":
            labels[MAINTENANCE] = local[:, k] == 1
    for eid, k in ebe_idx.items():
        lv = model.nodes[eid].levels
        labels[f"{eid}.{FAILED}"] = local[:, k] == lv

    clean_t = act == act_index.get(PERFORM_CLEAN, -1)
    replace_t = act == act_index.get(PERFORM_REPLACE, -1)
    entering = (~failed[src]) & failed[dst] if len(src) else np.zeros(0, dtype=bool)
    # failures not caused by an unmaintained (abstract) event
    abstract_el = [ebe_idx[e] for e in unmaintained if e in ebe_idx]
    vec_abstract = np.array([v.members[0][0] in abstract_el for v in vectors], dtype=bool)
    own = entering & ~vec_abstract[vec] if len(vec) else entering
    own_down = np.zeros(n, dtype=bool)
    for eid in or_subtree_ebes(model, model.top_event):
        if eid not in unmaintained:
            own_down |= local[:, ebe_idx[eid]] == model.nodes[eid].levels
    rewards = {
        "available": Reward(state=(~failed).astype(float)),
        "cost": Reward(
            state=costs.cost_operational_per_day + costs.cost_failure_per_day * failed,
            transition=costs.cost_repair * clean_t + costs.cost_replace * replace_t),
        "maintenance_cost": Reward(
            transition=costs.cost_repair * clean_t + costs.cost_replace * replace_t),
        "failures": Reward(transition=entering.astype(float)),
        "own_failures": Reward(transition=own.astype(float)),
        "own_down": Reward(state=own_down.astype(float)),
        "cleanings": Reward(transition=clean_t.astype(float)),
        "replacements": Reward(transition=replace_t.astype(float)),
    }
    names = tuple(order) if n <= 50_000 else None
    ctmc = Ctmc(n, 0, actions, src, act, dst, rate, labels, names, rewards)
    size = math.prod(el.ctmc.n_states for el in elements)
    return Compiled(ctmc, elements, vectors, local, list(ebe_idx), size)


def compile(model: FmtModel, costs: CostModel | None = None, **kwargs) -> Ctmc:
    """The composed CTMC with ``top_failed`` label and metric reward structures."""
    return explore(model, costs, **kwargs).ctmc
