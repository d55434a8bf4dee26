"""Maintenance strategy files and strategy-by-horizon sweeps."""

from __future__ import annotations

import sys
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Mapping, Sequence

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .analysis import compute_metrics
from .decomposition import abstract_analyze
from .model import FmtModel, MaintenancePolicy
from .parser import FmtSyntaxError, parse_duration

_KEYS = {"trep": "t_rep", "toh": "t_oh", "tinsp": "t_insp"}


class StrategyError(ValueError):
    pass


@dataclass(frozen=True)
class Strategy:
    name: str
    policy: MaintenancePolicy
    note: str = ""


def _duration(name, key, value) -> float:
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    if isinstance(value, str):
        try:
            return parse_duration(value.strip())
        except FmtSyntaxError as exc:
            raise StrategyError(f"strategy {name}: {key}: {exc}") from None
    raise StrategyError(f"strategy {name}: {key} must be a duration")


def parse_strategies(text: str, base: MaintenancePolicy = MaintenancePolicy()) -> list[Strategy]:
    """One strategy per TOML table; keys missing from a table keep ``base``."""
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise StrategyError(f"malformed strategy file: {exc}") from None
    if not data:
        raise StrategyError("strategy file defines no strategies")
    out = []
    for name, table in data.items():
        if not isinstance(table, dict):
            raise StrategyError(f"strategy {name}: expected a table")
        unknown = set(table) - set(_KEYS) - {"stages", "note"}
        if unknown:
            raise StrategyError(f"strategy {name}: unknown keys {sorted(unknown)}")
        kw = {f: _duration(name, k, table[k]) for k, f in _KEYS.items() if k in table}
        if "stages" in table:
            if not isinstance(table["stages"], int) or table["stages"] < 1:
                raise StrategyError(f"strategy {name}: stages must be a positive integer")
            kw["timer_stages"] = table["stages"]
        for f, v in kw.items():
            if f != "timer_stages" and not v > 0:
                raise StrategyError(f"strategy {name}: intervals must be > 0")
        policy = MaintenancePolicy(**{**vars(base), **kw})
        out.append(Strategy(name, policy, str(table.get("note", ""))))
    return out


def load_strategies(path=None, base: MaintenancePolicy = MaintenancePolicy()) -> list[Strategy]:
    """Read a strategy file; ``None`` loads the bundled M0-M5 set."""
    if path is None:
        text = resources.files("fmtree").joinpath("data/strategies.toml").read_text("utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    return parse_strategies(text, base)


def sweep(model: FmtModel, strategies: Sequence[Strategy], horizons: Sequence[float],
          metrics: Sequence[str] = ("expected_cost", "expected_failures"), *,
          decompose: bool = True, **kwargs) -> dict[str, dict[str, list[float]]]:
    """``{metric: {strategy: [value per horizon]}}`` for each policy override."""
    run = abstract_analyze if decompose else compute_metrics
    out: dict[str, dict[str, list[float]]] = {m: {} for m in metrics}
    for s in strategies:
        m = model.with_policy(s.policy)
        for metric in metrics:
            out[metric][s.name] = [r.value for r in run(m, metric, horizons, **kwargs)]
    return out


def annotations(strategies: Sequence[Strategy]) -> Mapping[str, str]:
    return {s.name: s.note for s in strategies if s.note}
