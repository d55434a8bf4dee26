"""Fault maintenance tree analysis: CTMC semantics, transient metrics,
modular decomposition and a Monte Carlo cross-check."""

from .analysis import (METRICS, AnalysisResult, MetricQuery, TransientOptions,
                       bounded_reach, compute_metric, compute_metrics, cumulative_reward,
                       equivalent_failure_rate, transient)
from .ctmc import Ctmc, DelaySpec, compose, delay_module, erlang_cdf, restrict_reachable
from .decomposition import abstract_analyze, compare, decompose
from .estimators import FmtAnalyzer, FmtSimulator
from .model import (CostModel, EbeSpec, FmtModel, GateSpec, InvalidModelError,
                    MaintenancePolicy, to_dag, validate)
from .parser import FmtSyntaxError, load, parse, serialize
from .semantics import StateBudgetExceeded, compile, explore
from .simulation import SimConfig, simulate

__all__ = [
    "METRICS", "AnalysisResult", "MetricQuery", "TransientOptions", "bounded_reach",
    "compute_metric", "compute_metrics", "cumulative_reward", "equivalent_failure_rate",
    "transient", "Ctmc", "DelaySpec", "compose", "delay_module", "erlang_cdf",
    "restrict_reachable", "abstract_analyze", "compare", "decompose", "FmtAnalyzer",
    "FmtSimulator", "CostModel", "EbeSpec", "FmtModel", "GateSpec", "InvalidModelError",
    "MaintenancePolicy", "to_dag", "validate", "FmtSyntaxError", "load", "parse",
    "serialize", "StateBudgetExceeded", "compile", "explore", "SimConfig", "simulate",
]
