"""Transient analysis of CTMCs and the four dependability metrics."""

from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.special import gammaln

from .ctmc import Ctmc, Reward, reachable
from .model import CostModel, FmtModel
from .semantics import DEFAULT_STATE_BUDGET, TOP_FAILED, explore

METRICS = ("reliability", "availability", "expected_cost", "expected_failures")

# largest q*dt handled in one uniformization chunk
_CHUNK = 4000.0


class UniformizationError(RuntimeError):
    pass


@dataclass(frozen=True)
class TransientOptions:
    tolerance: float = 1e-10
    max_uniformization_steps: int = 50_000_000

    def __post_init__(self):
        if not 0 < self.tolerance < 1:
            raise ValueError("tolerance must be in (0, 1)")


@dataclass(frozen=True)
class MetricQuery:
    kind: str
    horizon: float
    cost: CostModel | None = None

    def __post_init__(self):
        if self.kind not in METRICS:
            raise ValueError(f"unknown metric {self.kind!r}; choose from {METRICS}")
        if self.horizon < 0:
            raise ValueError("horizon must be >= 0")


@dataclass
class AnalysisResult:
    model: str
    metric: str
    horizon_days: float
    value: float
    states: int
    time_ms: float
    extra: dict = field(default_factory=dict)

    CSV_COLUMNS = ("model", "metric", "horizon_days", "value", "states", "time_ms")

    def to_row(self) -> dict:
        return {k: getattr(self, k) for k in self.CSV_COLUMNS}

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, default=float)


def poisson_weights(x: float, tol: float) -> np.ndarray:
    """Poisson(x) probabilities for ``k = 0 .. R`` with tail mass below ``tol``.

    Evaluated from log-probabilities, so large ``x`` neither under- nor
    overflows; weights below ``tol * 1e-3`` at the left end are zeroed.
    """
    if x == 0:
        return np.ones(1)
    R = int(math.ceil(x + 10.0 * math.sqrt(x) + 30))
    while True:
        k = np.arange(R + 1)
        logw = k * math.log(x) - x - gammaln(k + 1)
        w = np.exp(logw)
        # expected overshoot beyond R bounds both probability and integral error
        tail = max(0.0, 1.0 - math.fsum(w))
        if tail <= tol or R > x + 50 * math.sqrt(x) + 1000:
            break
        R = int(R * 1.5) + 10
    w[w < tol * 1e-3] = 0.0
    return w


def _uniformized(c: Ctmc, p0: np.ndarray, times: Sequence[float],
                 reward_rates: np.ndarray | None, opts: TransientOptions):
    """March ``p0`` through sorted ``times``; also integrate ``p(t) @ reward_rates``."""
    Q = c.generator()
    exits = -Q.diagonal()
    live = reachable(c, p0 > 0)
    q = float(exits[live].max()) * 1.02 if live.any() else 0.0
    m = 0 if reward_rates is None else reward_rates.shape[1]
    dists, cums = [], []
    p = p0.astype(float).copy()
    cum = np.zeros(m)
    now = 0.0
    if q == 0:
        for t in times:
            dists.append(p.copy())
            cums.append(cum + (0 if m == 0 else (t - now) * (p @ reward_rates)))
        return dists, cums
    PT = (Q.T / q).tocsr()
    PT.setdiag(PT.diagonal() + 1.0)
    n_chunks = max(1, sum(math.ceil(q * (t2 - t1) / _CHUNK) for t1, t2 in
                          zip([0.0, *times[:-1]], times) if t2 > t1))
    tol = opts.tolerance / n_chunks
    steps = 0
    for t in times:
        while now < t:
            dt = min(t - now, _CHUNK / q)
            x = q * dt
            w = poisson_weights(x, tol)
            steps += len(w)
            if steps > opts.max_uniformization_steps:
                raise UniformizationError(
                    f"uniformization needs more than {opts.max_uniformization_steps} steps")
            surv = np.clip(1.0 - np.cumsum(w), 0.0, None)
            acc = w[0] * p
            if m:
                cum = cum + surv[0] / q * (p @ reward_rates)
            v = p
            for k in range(1, len(w)):
                v = PT @ v
                if w[k]:
                    acc += w[k] * v
                if m and surv[k] > 0:
                    cum = cum + surv[k] / q * (v @ reward_rates)
            p = acc
            now += dt
        dists.append(p.copy())
        cums.append(cum.copy())
    return dists, cums


def _point_mass(c: Ctmc) -> np.ndarray:
    p = np.zeros(c.n_states)
    p[c.initial] = 1.0
    return p


def transient(c: Ctmc, t: float, opts: TransientOptions = TransientOptions()) -> np.ndarray:
    """State distribution at time ``t`` by uniformization."""
    if t < 0:
        raise ValueError("t must be >= 0")
    dists, _ = _uniformized(c, _point_mass(c), [float(t)], None, opts)
    return dists[0]


def transient_many(c: Ctmc, times: Iterable[float],
                   opts: TransientOptions = TransientOptions()) -> list[np.ndarray]:
    times = sorted(float(t) for t in times)
    return _uniformized(c, _point_mass(c), times, None, opts)[0]


def bounded_reach(c: Ctmc, target: str, T: float | Sequence[float],
                  opts: TransientOptions = TransientOptions()):
    """Probability of reaching ``target`` within ``T`` (target made absorbing)."""
    mask = c.label_mask(target)
    absorbing = c.make_absorbing(mask)
    scalar = np.isscalar(T)
    times = [float(T)] if scalar else [float(t) for t in T]
    order = np.argsort(times)
    dists, _ = _uniformized(absorbing, _point_mass(c), [times[i] for i in order], None, opts)
    vals = np.empty(len(times))
    for pos, i in enumerate(order):
        vals[i] = min(1.0, max(0.0, float(dists[pos][mask].sum())))
    return float(vals[0]) if scalar else vals


def reward_rate(c: Ctmc, reward: Reward | str) -> np.ndarray:
    """State rate of a reward structure; transition impulses become rate * impulse."""
    if isinstance(reward, str):
        try:
            reward = c.rewards[reward]
        except KeyError:
            raise KeyError(f"missing reward structure {reward!r}") from None
    r = np.zeros(c.n_states)
    if reward.state is not None:
        r += reward.state
    if reward.transition is not None:
        r += np.bincount(c.src, weights=c.rate * reward.transition, minlength=c.n_states)
    return r


def cumulative_reward(c: Ctmc, rewards, T: float | Sequence[float],
                      opts: TransientOptions = TransientOptions()):
    """Expected reward accumulated over ``[0, T]``.

    ``rewards`` is a :class:`Reward`, a reward name, or a list of those; the
    result has matching shape (``horizons x rewards`` for sequences).
    """
    many = isinstance(rewards, (list, tuple))
    rw = list(rewards) if many else [rewards]
    rates = np.column_stack([reward_rate(c, r) for r in rw])
    scalar = np.isscalar(T)
    times = [float(T)] if scalar else [float(t) for t in T]
    order = np.argsort(times)
    _, cums = _uniformized(c, _point_mass(c), [times[i] for i in order], rates, opts)
    out = np.empty((len(times), len(rw)))
    for pos, i in enumerate(order):
        out[i] = cums[pos]
    if not many:
        out = out[:, 0]
    return float(out[0]) if scalar and not many else (out[0] if scalar else out)


def equivalent_failure_rate(De: float, T: float) -> float:
    """Exponential rate that fails with probability ``De`` by time ``T``."""
    if not 0 <= De <= 1:
        raise ValueError("De must be a probability")
    if De >= 1:
        raise ValueError("certain failure (De = 1) gives an infinite equivalent rate")
    if T <= 0:
        raise ValueError("T must be > 0")
    return -math.log1p(-De) / T


def metrics_from_ctmc(c: Ctmc, kind: str, horizons: Sequence[float],
                      opts: TransientOptions = TransientOptions()) -> np.ndarray:
    horizons = [float(h) for h in horizons]
    if kind == "reliability":
        return 1.0 - bounded_reach(c, TOP_FAILED, horizons, opts)
    if kind == "availability":
        cum = cumulative_reward(c, "available", horizons, opts)
        out = np.ones(len(horizons))
        for i, h in enumerate(horizons):
            if h > 0:
                out[i] = min(1.0, max(0.0, cum[i] / h))
        return out
    name = {"expected_cost": "cost", "expected_failures": "failures"}[kind]
    return np.asarray(cumulative_reward(c, name, horizons, opts), dtype=float)


def compute_metrics(model: FmtModel, kind: str, horizons: Sequence[float], *,
                    cost: CostModel | None = None, name: str = "model",
                    budget: int = DEFAULT_STATE_BUDGET,
                    opts: TransientOptions = TransientOptions(),
                    mu: float | None = None) -> list[AnalysisResult]:
    """One compile, one uniformization sweep, one result per horizon."""
    MetricQuery(kind, min(horizons) if horizons else 0.0)
    t0 = time.perf_counter()
    compiled = explore(model, cost, budget=budget, mu=mu)
    values = metrics_from_ctmc(compiled.ctmc, kind, horizons, opts)
    ms = (time.perf_counter() - t0) * 1e3
    n = compiled.ctmc.n_states
    return [AnalysisResult(name, kind, float(h), float(v), n, ms) for h, v in zip(horizons, values)]


def compute_metric(model: FmtModel, q: MetricQuery, **kwargs) -> AnalysisResult:
    return compute_metrics(model, q.kind, [q.horizon], cost=q.cost, **kwargs)[0]
