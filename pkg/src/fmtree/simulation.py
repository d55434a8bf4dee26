"""Discrete-event Monte Carlo simulation of fault maintenance trees.

Runs are simulated side by side in numpy arrays, one event per run per
step. By default the maintenance timers are truly deterministic; with
``erlang_mode`` every timer is the same Erlang stage chain the numeric engine
uses, so estimates converge to its values. Degradation phases are always
exponential.

Each run draws from its own counter-based stream: uniform number ``k`` of run
``r`` is a SplitMix64 hash of ``(seed, r, k)``. Estimates therefore do not
depend on batch size or on how many other runs are simulated.
"""

from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.stats import norm

from .model import FmtModel, or_subtree_ebes, require_valid

COMPLETION, INSPECT, CHECK_CLEAN, CHECK_REPLACE = (
    "completion", "inspect", "check_clean", "check_replace")
DEFAULT_PRIORITY = (COMPLETION, INSPECT, CHECK_CLEAN, CHECK_REPLACE)
CLEAN, REPLACE = 0, 1

_G = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


def _mix(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def run_keys(seed: int, runs: np.ndarray) -> np.ndarray:
    base = _mix(np.array([seed & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64))
    return _mix(base + (runs.astype(np.uint64) + np.uint64(1)) * _G)


def uniforms(keys: np.ndarray, counters: np.ndarray) -> np.ndarray:
    """Open-interval uniforms for the given per-run keys and draw counters."""
    x = _mix(keys + counters.astype(np.uint64) * _G)
    return ((x >> np.uint64(11)).astype(float) + 0.5) * 2.0 ** -53


@dataclass(frozen=True)
class SimConfig:
    runs: int = 10_000
    horizon: float = 3650.0
    seed: int = 0
    confidence: float = 0.99
    erlang_mode: bool = False
    priority: tuple[str, ...] = DEFAULT_PRIORITY
    batch_size: int = 100_000

    def __post_init__(self):
        if self.runs < 1:
            raise ValueError("runs must be >= 1")
        if not self.horizon > 0:
            raise ValueError("horizon must be > 0")
        if not 0 < self.confidence < 1:
            raise ValueError("confidence must be in (0, 1)")
        if sorted(self.priority) != sorted(DEFAULT_PRIORITY):
            raise ValueError(f"priority must order exactly {DEFAULT_PRIORITY}")


@dataclass(frozen=True)
class Estimate:
    mean: float
    std_err: float
    low: float
    high: float

    @property
    def half_width(self) -> float:
        return (self.high - self.low) / 2

    def contains(self, x: float) -> bool:
        return self.low <= x <= self.high


@dataclass
class SimResult:
    config: SimConfig
    estimates: dict[str, Estimate]
    time_ms: float
    per_run: dict[str, np.ndarray] = field(repr=False, default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "config": {k: (list(v) if isinstance(v, tuple) else v)
                       for k, v in asdict(self.config).items()},
            "estimates": {k: {f: (v if math.isfinite(v) else None)
                              for f, v in {**asdict(e), "half_width": e.half_width}.items()}
                          for k, e in self.estimates.items()},
            "time_ms": self.time_ms,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def write_runs_csv(self, path) -> None:
        cols = list(self.per_run)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["run", *cols])
            for i in range(self.config.runs):
                w.writerow([i, *(self.per_run[c][i].item() for c in cols)])


class _Plan:
    """Flat arrays describing ``model`` for the vectorised simulator."""

    def __init__(self, model: FmtModel, erlang: bool):
        ebes = model.ebes()
        ids = [e.id for e in ebes]
        pos = {k: i for i, k in enumerate(ids)}
        self.E = len(ebes)
        self.levels = np.array([e.levels for e in ebes])
        self.phase = np.array([e.phase_rate for e in ebes], dtype=float)
        self.gamma = np.ones(self.E)
        self.trigger = np.full(self.E, -1)
        for g in model.rdeps():
            for d in g.dependents:
                k = pos[model.physical(d)]
                self.gamma[k] = g.gamma
                self.trigger[k] = pos[model.physical(g.trigger)]
        self.top = np.zeros(self.E, dtype=bool)
        self.top[[pos[k] for k in or_subtree_ebes(model, model.top_event)]] = True

        p = model.policy
        self.stages = p.timer_stages
        self.timers = [(s, T) for s, T in ((INSPECT, p.t_insp), (CHECK_CLEAN, p.t_rep),
                                           (CHECK_REPLACE, p.t_oh))
                       if ebes and math.isfinite(T)]
        self.J = len(self.timers)
        self.t_clean = max((e.t_clean for e in ebes), default=1.0)
        self.t_replace = max((e.t_replace for e in ebes), default=1.0)
        self.erlang = erlang

    def top_failed(self, level: np.ndarray) -> np.ndarray:
        return ((level == self.levels) & self.top).any(axis=1)


class _Batch:
    def __init__(self, plan: _Plan, run_ids: np.ndarray, cfg: SimConfig):
        n, E, J = len(run_ids), plan.E, plan.J
        self.plan, self.cfg = plan, cfg
        self.keys = run_keys(cfg.seed, run_ids)
        self.draws = np.zeros(n, dtype=np.uint64)
        self.now = np.zeros(n)
        self.level = np.zeros((n, E), dtype=np.int64)
        self.failed = np.zeros(n, dtype=bool)
        self.busy = np.zeros(n, dtype=bool)
        self.kind = np.zeros(n, dtype=np.int8)
        self.os_stage = np.zeros(n, dtype=np.int64)
        self.os_deadline = np.full(n, np.inf)
        self.t_stage = np.ones((n, J), dtype=np.int64)
        periods = np.array([T for _, T in plan.timers], dtype=float)
        self.periods = periods
        self.t_deadline = np.tile(periods, (n, 1)) if not plan.erlang else np.full((n, J), np.inf)
        self.pending = np.zeros((n, J), dtype=bool)
        self.first_fail = np.full(n, np.inf)
        self.downtime = np.zeros(n)
        self.failures = np.zeros(n, dtype=np.int64)
        self.cleanings = np.zeros(n, dtype=np.int64)
        self.replacements = np.zeros(n, dtype=np.int64)
        order = [s for s in cfg.priority if s != COMPLETION]
        self.fire_order = [j for s in order for j, (sig, _) in enumerate(plan.timers) if sig == s]
        # deterministic event columns: one-shot completion plus timers, by priority
        self.det_cols = []
        for s in cfg.priority:
            if s == COMPLETION:
                self.det_cols.append(-1)
            else:
                self.det_cols += [j for j, (sig, _) in enumerate(plan.timers) if sig == s]

    # -- state changes ------------------------------------------------------

    def start_maintenance(self, rows, kind):
        self.busy[rows] = True
        self.kind[rows] = kind
        if self.plan.erlang:
            self.os_stage[rows] = 1
        else:
            T = self.plan.t_clean if kind == CLEAN else self.plan.t_replace
            self.os_deadline[rows] = self.now[rows] + T

    def fire(self, rows, j):
        signal = self.plan.timers[j][0]
        if rows.size == 0:
            return
        lv = self.level[rows]
        if signal == INSPECT:
            hit = ((lv > 0) & (lv < self.plan.levels)).any(axis=1)
        else:
            hit = (lv > 0).any(axis=1)
        self.start_maintenance(rows[hit], REPLACE if signal == CHECK_REPLACE else CLEAN)

    def complete(self, rows):
        if rows.size == 0:
            return
        clean = rows[self.kind[rows] == CLEAN]
        repl = rows[self.kind[rows] == REPLACE]
        self.level[clean] = np.maximum(self.level[clean] - 1, 0)
        self.level[repl] = 0
        self.cleanings[clean] += 1
        self.replacements[repl] += 1
        self.busy[rows] = False
        self.os_stage[rows] = 0
        self.os_deadline[rows] = np.inf
        if not self.plan.erlang:
            for j in self.fire_order:
                due = rows[self.pending[rows, j] & ~self.busy[rows]]
                self.pending[due, j] = False
                self.t_deadline[due, j] = self.now[due] + self.periods[j]
                self.fire(due, j)

    def timer_deadline(self, rows, j):
        blocked = self.busy[rows]
        self.pending[rows[blocked], j] = True
        self.t_deadline[rows[blocked], j] = np.inf
        go = rows[~blocked]
        self.t_deadline[go, j] = self.now[go] + self.periods[j]
        self.fire(go, j)

    # -- main loop ----------------------------------------------------------

    def exp_rates(self, a):
        p = self.plan
        lv = self.level[a]
        accel = np.ones((len(a), p.E))
        has = p.trigger >= 0
        if has.any():
            trig_failed = lv[:, p.trigger[has]] == p.levels[p.trigger[has]]
            accel[:, has] = np.where(trig_failed, p.gamma[has], 1.0)
        cols = [p.phase * accel * (lv < p.levels)]
        if p.erlang and p.J:
            stage_rate = np.array([p.stages / T for _, T in p.timers])
            blocked = (self.t_stage[a] == p.stages) & self.busy[a, None]
            cols.append(np.where(blocked, 0.0, stage_rate))
        if p.erlang:
            T = np.where(self.kind[a] == CLEAN, p.t_clean, p.t_replace)
            cols.append((self.busy[a] * (p.stages / T))[:, None])
        return np.hstack(cols)

    def det_times(self, a):
        cols = []
        for c in self.det_cols:
            cols.append(self.os_deadline[a] if c < 0 else self.t_deadline[a, c])
        return np.column_stack(cols) if cols else np.full((len(a), 1), np.inf)

    def run(self):
        p, H = self.plan, self.cfg.horizon
        active = np.ones(len(self.now), dtype=bool)
        while True:
            a = np.flatnonzero(active)
            if a.size == 0:
                break
            rates = self.exp_rates(a)
            total = rates.sum(axis=1)
            u1 = uniforms(self.keys[a], self.draws[a])
            u2 = uniforms(self.keys[a], self.draws[a] + np.uint64(1))
            self.draws[a] += np.uint64(2)
            with np.errstate(divide="ignore"):
                t_exp = self.now[a] - np.log(u1) / total
            det = self.det_times(a)
            which_det = det.argmin(axis=1)
            t_det = det[np.arange(len(a)), which_det]
            take_det = t_det <= t_exp
            t_ev = np.where(take_det, t_det, t_exp)
            t_end = np.minimum(t_ev, H)
            self.downtime[a] += (t_end - self.now[a]) * self.failed[a]
            self.now[a] = t_end
            done = t_ev >= H
            active[a[done]] = False
            go = ~done
            a, rates, total, u2 = a[go], rates[go], total[go], u2[go]
            take_det, which_det = take_det[go], which_det[go]
            if a.size == 0:
                break

            ex = ~take_det
            if ex.any():
                r = a[ex]
                cum = np.cumsum(rates[ex], axis=1)
                col = (cum < (u2[ex] * total[ex])[:, None]).sum(axis=1)
                col = np.minimum(col, rates.shape[1] - 1)
                # guard against landing on a zero-rate column through rounding
                col = np.where(rates[ex][np.arange(len(r)), col] > 0, col,
                               rates[ex].argmax(axis=1))
                self.apply_exp(r, col)
            if take_det.any():
                r, w = a[take_det], which_det[take_det]
                for k, c in enumerate(self.det_cols):
                    rows = r[w == k]
                    if rows.size == 0:
                        continue
                    if c < 0:
                        self.complete(rows)
                    else:
                        self.timer_deadline(rows, c)

            new_failed = p.top_failed(self.level[a])
            entering = new_failed & ~self.failed[a]
            self.failures[a] += entering
            first = a[entering & np.isinf(self.first_fail[a])]
            self.first_fail[first] = self.now[first]
            self.failed[a] = new_failed

    def apply_exp(self, rows, col):
        p = self.plan
        deg = col < p.E
        r = rows[deg]
        self.level[r, col[deg]] += 1
        if p.erlang:
            for j in range(p.J):
                sel = rows[col == p.E + j]
                if sel.size == 0:
                    continue
                last = self.t_stage[sel, j] == p.stages
                self.t_stage[sel[~last], j] += 1
                self.t_stage[sel[last], j] = 1
                self.fire(sel[last], j)
            sel = rows[col == p.E + p.J]
            if sel.size:
                last = self.os_stage[sel] == p.stages
                self.os_stage[sel[~last]] += 1
                self.complete(sel[last])


def _estimate(x: np.ndarray, confidence: float) -> Estimate:
    n = len(x)
    mean = float(math.fsum(x) / n)
    var = float(math.fsum((x - mean) ** 2) / (n - 1)) if n > 1 else math.inf
    se = math.sqrt(var / n)
    z = float(norm.ppf(0.5 + confidence / 2))
    return Estimate(mean, se, mean - z * se, mean + z * se)


def simulate(model: FmtModel, cfg: SimConfig = SimConfig()) -> SimResult:
    """Estimate the four metrics at ``cfg.horizon`` with normal-theory CIs."""
    require_valid(model)
    t0 = time.perf_counter()
    plan = _Plan(model, cfg.erlang_mode)
    parts = []
    for lo in range(0, cfg.runs, cfg.batch_size):
        ids = np.arange(lo, min(cfg.runs, lo + cfg.batch_size))
        b = _Batch(plan, ids, cfg)
        b.run()
        parts.append(b)
    cat = lambda name: np.concatenate([getattr(b, name) for b in parts])
    H = cfg.horizon
    costs = model.costs
    per_run = {
        "first_failure": cat("first_fail"),
        "downtime": cat("downtime"),
        "failures": cat("failures"),
        "cleanings": cat("cleanings"),
        "replacements": cat("replacements"),
    }
    cost = (costs.cost_repair * per_run["cleanings"] + costs.cost_replace * per_run["replacements"]
            + costs.cost_operational_per_day * H
            + costs.cost_failure_per_day * per_run["downtime"])
    per_run["cost"] = cost
    est = {
        "reliability": _estimate((per_run["first_failure"] > H).astype(float), cfg.confidence),
        "availability": _estimate(1.0 - per_run["downtime"] / H, cfg.confidence),
        "expected_cost": _estimate(cost, cfg.confidence),
        "expected_failures": _estimate(per_run["failures"].astype(float), cfg.confidence),
    }
    return SimResult(cfg, est, (time.perf_counter() - t0) * 1e3, per_run)
