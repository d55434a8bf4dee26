"""Labelled CTMCs, Erlang delay chains and synchronous products."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Iterable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp

DEFAULT_MU = 1e6
ELAPSED = "elapsed"


@dataclass(frozen=True)
class Reward:
    """A reward structure: per-state rate and/or per-transition impulse."""

    state: np.ndarray | None = None
    transition: np.ndarray | None = None


@dataclass(frozen=True, eq=False)
class Ctmc:
    """Action-labelled CTMC with atomic-proposition state labels.

    Transitions are stored as parallel arrays ``src, act, dst, rate``; ``act``
    indexes into ``actions``. Self-loops are allowed (they matter for
    synchronisation) but carry no probability flow.
    """

    n_states: int
    initial: int
    actions: tuple[str, ...]
    src: np.ndarray
    act: np.ndarray
    dst: np.ndarray
    rate: np.ndarray
    labels: Mapping[str, np.ndarray]
    state_names: tuple | None = None
    rewards: Mapping[str, Reward] = field(default_factory=dict)

    def __post_init__(self):
        if not 0 <= self.initial < self.n_states:
            raise ValueError(f"initial state {self.initial} out of range")
        if np.any(self.rate <= 0):
            raise ValueError("transition rates must be positive")
        for ap, mask in self.labels.items():
            if mask.shape != (self.n_states,):
                raise ValueError(f"label {ap!r} has wrong shape")
        object.__setattr__(self, "labels", MappingProxyType(dict(self.labels)))
        object.__setattr__(self, "rewards", MappingProxyType(dict(self.rewards)))

    @classmethod
    def from_transitions(cls, n_states: int, initial: int,
                         transitions: Iterable[tuple[int, str, int, float]],
                         labels: Mapping[str, Iterable[int]] | None = None,
                         state_names: Sequence | None = None,
                         actions: Iterable[str] = ()) -> "Ctmc":
        """Build from ``(src, action, dst, rate)`` triples; duplicates are summed."""
        merged: dict[tuple[int, str, int], float] = {}
        for s, a, d, r in transitions:
            if not (0 <= s < n_states and 0 <= d < n_states):
                raise ValueError(f"transition {s}->{d} out of range")
            merged[(s, a, d)] = merged.get((s, a, d), 0.0) + float(r)
        acts = list(dict.fromkeys(list(actions) + [a for _, a, _ in merged]))
        index = {a: i for i, a in enumerate(acts)}
        keys = list(merged)
        masks = {}
        for ap, states in (labels or {}).items():
            m = np.zeros(n_states, dtype=bool)
            m[list(states)] = True
            masks[ap] = m
        return cls(
            n_states=n_states,
            initial=initial,
            actions=tuple(acts),
            src=np.array([k[0] for k in keys], dtype=np.int64),
            act=np.array([index[k[1]] for k in keys], dtype=np.int32),
            dst=np.array([k[2] for k in keys], dtype=np.int64),
            rate=np.array([merged[k] for k in keys], dtype=float),
            labels=masks,
            state_names=tuple(state_names) if state_names is not None else None,
        )

    @property
    def aps(self) -> frozenset[str]:
        return frozenset(self.labels)

    @property
    def n_transitions(self) -> int:
        return len(self.src)

    def labeling(self, state: int) -> frozenset[str]:
        return frozenset(ap for ap, m in self.labels.items() if m[state])

    def name(self, state: int):
        return self.state_names[state] if self.state_names is not None else state

    def transitions(self):
        """Iterate ``(src, action, dst, rate)``."""
        for s, a, d, r in zip(self.src, self.act, self.dst, self.rate):
            yield int(s), self.actions[a], int(d), float(r)

    def outgoing(self) -> list[list[tuple[str, int, float]]]:
        out: list[list[tuple[str, int, float]]] = [[] for _ in range(self.n_states)]
        for s, a, d, r in self.transitions():
            out[s].append((a, d, r))
        return out

    def rate_matrix(self) -> np.ndarray:
        """Dense ``R(s, s')`` summed over actions, self-loops excluded."""
        R = np.zeros((self.n_states, self.n_states))
        keep = self.src != self.dst
        np.add.at(R, (self.src[keep], self.dst[keep]), self.rate[keep])
        return R

    def generator(self) -> sp.csr_matrix:
        """Sparse infinitesimal generator ``Q``."""
        keep = self.src != self.dst
        n = self.n_states
        R = sp.csr_matrix((self.rate[keep], (self.src[keep], self.dst[keep])), shape=(n, n))
        exit_rates = np.asarray(R.sum(axis=1)).ravel()
        return (R - sp.diags(exit_rates)).tocsr()

    def exit_rates(self) -> np.ndarray:
        keep = self.src != self.dst
        return np.bincount(self.src[keep], weights=self.rate[keep], minlength=self.n_states)

    def label_mask(self, ap: str) -> np.ndarray:
        try:
            return self.labels[ap]
        except KeyError:
            raise KeyError(f"unknown proposition {ap!r}") from None

    def with_rewards(self, rewards: Mapping[str, Reward]) -> "Ctmc":
        return Ctmc(self.n_states, self.initial, self.actions, self.src, self.act,
                    self.dst, self.rate, self.labels, self.state_names,
                    {**self.rewards, **rewards})

    def make_absorbing(self, mask: np.ndarray) -> "Ctmc":
        """Drop every transition leaving a state in ``mask``."""
        keep = ~mask[self.src]
        return Ctmc(self.n_states, self.initial, self.actions, self.src[keep],
                    self.act[keep], self.dst[keep], self.rate[keep], self.labels,
                    self.state_names)

    def relabel_actions(self, mapping: Mapping[str, str]) -> "Ctmc":
        return Ctmc.from_transitions(
            self.n_states, self.initial,
            ((s, mapping.get(a, a), d, r) for s, a, d, r in self.transitions()),
            {ap: np.flatnonzero(m) for ap, m in self.labels.items()},
            self.state_names,
            actions=[mapping.get(a, a) for a in self.actions])

    def dump(self) -> str:
        """Plain-text edge list ``src action rate dst`` plus a label table."""
        lines = [f"# states {self.n_states} initial {self.name(self.initial)}"]
        order = sorted(self.transitions(), key=lambda t: (t[0], t[1], t[2]))
        for s, a, d, r in order:
            lines.append(f"{self.name(s)} {a} {r:.12g} {self.name(d)}")
        lines.append("# labels")
        for s in range(self.n_states):
            labs = sorted(self.labeling(s))
            if labs:
                lines.append(f"{self.name(s)} {' '.join(labs)}")
        return "\n".join(lines) + "\n"


def erlang_cdf(t: float, k: int, lam: float) -> float:
    """``P(Z <= t)`` for ``Z ~ Erlang(k, lam)``, summed in log space."""
    if t < 0:
        raise ValueError("t must be >= 0")
    if k < 1:
        raise ValueError("k must be >= 1")
    x = lam * t
    if x == 0:
        return 0.0
    logs = [n * math.log(x) - x - math.lgamma(n + 1) for n in range(k)]
    top = max(logs)
    head = top + math.log(math.fsum(math.exp(v - top) for v in logs))
    return min(1.0, max(0.0, -math.expm1(head)))


@dataclass(frozen=True)
class DelaySpec:
    T: float
    N: int
    extended: bool = False
    mu: float = DEFAULT_MU

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError("delay T must be > 0")
        if self.N < 1:
            raise ValueError("stage count N must be >= 1")
        if not self.mu > 0:
            raise ValueError("mu must be > 0")

    @property
    def stage_rate(self) -> float:
        return self.N / self.T


def delay_module(spec: DelaySpec, trigger: str = "trigger", move: str = "move") -> Ctmc:
    """Erlang(N, N/T) delay chain ``d0 .. d_{N+1}``.

    ``d0 -trigger(mu)-> d1``, ``d_i -move(N/T)-> d_{i+1}`` for ``1 <= i <= N``
    and the wrap-around ``d_{N+1} -move(N/T)-> d1``. Only ``d_{N+1}`` is
    labelled ``elapsed``.
    """
    N, lam = spec.N, spec.stage_rate
    trans = [(0, trigger, 1, spec.mu)]
    trans += [(i, move, i + 1, lam) for i in range(1, N + 1)]
    trans.append((N + 1, move, 1, lam))
    names = [f"d{i}" for i in range(N + 2)]
    return Ctmc.from_transitions(N + 2, 0, trans, {ELAPSED: [N + 1]}, names,
                                 actions=[trigger, move])


def delay_module_ext(spec: DelaySpec, reset_actions: Iterable[str],
                     trigger: str = "trigger", move: str = "move") -> Ctmc:
    """Delay chain with reset: ``d_i -r(1)-> d1`` for ``2 <= i <= N+1``, each ``r``."""
    resets = list(dict.fromkeys(reset_actions))
    if not resets:
        raise ValueError("reset_actions must be nonempty")
    base = delay_module(spec, trigger, move)
    trans = list(base.transitions())
    for i in range(2, spec.N + 2):
        for r in resets:
            trans.append((i, r, 1, 1.0))
    return Ctmc.from_transitions(base.n_states, 0, trans, {ELAPSED: [spec.N + 1]},
                                 base.state_names, actions=[trigger, move, *resets])


def compose(c1: Ctmc, c2: Ctmc, sync: Iterable[str] = ()) -> Ctmc:
    """Parallel composition restricted to states reachable from the initial pair.

    Actions in ``sync`` fire jointly at the product of the two rates; all other
    actions interleave. Labels are the union of both components' labels.
    """
    sync = frozenset(sync)
    missing = sync - (set(c1.actions) & set(c2.actions))
    if missing:
        raise ValueError(f"sync actions not shared by both chains: {sorted(missing)}")
    out1, out2 = c1.outgoing(), c2.outgoing()
    by_act2: list[dict[str, list[tuple[int, float]]]] = []
    for moves in out2:
        d: dict[str, list[tuple[int, float]]] = {}
        for a, t, r in moves:
            if a in sync:
                d.setdefault(a, []).append((t, r))
        by_act2.append(d)

    start = (c1.initial, c2.initial)
    index = {start: 0}
    order = [start]
    trans = []
    queue = deque([start])
    while queue:
        pair = queue.popleft()
        s1, s2 = pair
        here = index[pair]
        succ = []
        for a, t1, r1 in out1[s1]:
            if a in sync:
                for t2, r2 in by_act2[s2].get(a, ()):
                    succ.append((a, (t1, t2), r1 * r2))
            else:
                succ.append((a, (t1, s2), r1))
        for a, t2, r2 in out2[s2]:
            if a not in sync:
                succ.append((a, (s1, t2), r2))
        for a, nxt, r in succ:
            j = index.get(nxt)
            if j is None:
                j = index[nxt] = len(order)
                order.append(nxt)
                queue.append(nxt)
            trans.append((here, a, j, r))

    idx1 = np.array([p[0] for p in order], dtype=np.int64)
    idx2 = np.array([p[1] for p in order], dtype=np.int64)
    labels = {}
    for ap in c1.aps | c2.aps:
        m = np.zeros(len(order), dtype=bool)
        if ap in c1.labels:
            m |= c1.labels[ap][idx1]
        if ap in c2.labels:
            m |= c2.labels[ap][idx2]
        labels[ap] = np.flatnonzero(m)
    names = [(c1.name(a), c2.name(b)) for a, b in order]
    acts = list(dict.fromkeys(c1.actions + c2.actions))
    return Ctmc.from_transitions(len(order), 0, trans, labels, names, actions=acts)


def reachable(c: Ctmc, sources: np.ndarray | None = None) -> np.ndarray:
    """Boolean mask of states reachable from ``sources`` (default: the initial state)."""
    adj = sp.csr_matrix((np.ones(len(c.src)), (c.src, c.dst)), shape=(c.n_states,) * 2)
    if sources is None:
        seen = np.zeros(c.n_states, dtype=bool)
        seen[c.initial] = True
    else:
        seen = np.asarray(sources, dtype=bool).copy()
    frontier = np.flatnonzero(seen)
    while frontier.size:
        nxt = np.unique(adj[frontier].indices)
        nxt = nxt[~seen[nxt]]
        seen[nxt] = True
        frontier = nxt
    return seen


def restrict_reachable(c: Ctmc) -> Ctmc:
    """Drop states not reachable from the initial state, renumbering survivors."""
    keep = reachable(c)
    if keep.all():
        return c
    new_index = np.cumsum(keep) - 1
    tkeep = keep[c.src]
    labels = {ap: m[keep] for ap, m in c.labels.items()}
    names = None
    if c.state_names is not None:
        names = tuple(n for n, k in zip(c.state_names, keep) if k)
    rewards = {}
    for key, rw in c.rewards.items():
        rewards[key] = Reward(None if rw.state is None else rw.state[keep],
                              None if rw.transition is None else rw.transition[tkeep])
    return Ctmc(int(keep.sum()), int(new_index[c.initial]), c.actions,
                new_index[c.src[tkeep]], c.act[tkeep], new_index[c.dst[tkeep]],
                c.rate[tkeep], labels, names, rewards)
