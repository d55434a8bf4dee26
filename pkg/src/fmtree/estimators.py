"""scikit-learn style front ends.

``fit`` takes a model (an :class:`FmtModel`, a ``.fmt`` path or ``.fmt``
text) and ``predict`` takes horizons in days, returning one metric value
per horizon::

    >>> est = FmtAnalyzer(metric="reliability").fit("hvac.fmt")  # doctest: +SKIP
    >>> est.predict([0, 3650])                                   # doctest: +SKIP
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .analysis import METRICS, TransientOptions, metrics_from_ctmc
from .decomposition import abstract_analyze
from .model import CostModel, FmtModel, require_valid
from .parser import load, parse
from .semantics import DEFAULT_STATE_BUDGET, explore
from .simulation import SimConfig, simulate


def as_model(model) -> FmtModel:
    if isinstance(model, FmtModel):
        return model
    if isinstance(model, Path) or (isinstance(model, str) and ";" not in model):
        return load(model)
    if isinstance(model, str):
        return parse(model)
    raise TypeError(f"cannot build a model from {type(model).__name__}")


def _horizons(X) -> np.ndarray:
    h = np.asarray(X, dtype=float).reshape(-1)
    if (h < 0).any() or not np.isfinite(h).all():
        raise ValueError("horizons must be finite and >= 0")
    return h


class FmtAnalyzer(BaseEstimator):
    """Numeric metric of a fault maintenance tree as a function of the horizon.

    Without ``decompose`` the composed CTMC is built once in :meth:`fit` and
    reused by every :meth:`predict`. With ``decompose`` the model is analysed
    piece by piece at each requested horizon.
    """

    def __init__(self, metric="reliability", decompose=False, budget=DEFAULT_STATE_BUDGET,
                 tolerance=1e-10, costs=None, abstract_stages=1):
        self.metric = metric
        self.decompose = decompose
        self.budget = budget
        self.tolerance = tolerance
        self.costs = costs
        self.abstract_stages = abstract_stages

    def _opts(self):
        return TransientOptions(tolerance=self.tolerance)

    def fit(self, model, y=None):
        if self.metric not in METRICS:
            raise ValueError(f"unknown metric {self.metric!r}; choose from {METRICS}")
        m = require_valid(as_model(model))
        if self.costs is not None:
            m = m.with_costs(self.costs if isinstance(self.costs, CostModel)
                             else CostModel(**self.costs))
        self.model_ = m
        if self.decompose:
            self.ctmc_ = None
            self.n_states_ = None
        else:
            self.ctmc_ = explore(m, budget=self.budget).ctmc
            self.n_states_ = self.ctmc_.n_states
        return self

    def predict(self, X) -> np.ndarray:
        check_is_fitted(self, "model_")
        h = _horizons(X)
        if self.decompose:
            res = abstract_analyze(self.model_, self.metric, list(h), stages=self.abstract_stages,
                                   budget=self.budget, opts=self._opts())
            return np.array([r.value for r in res])
        return np.asarray(metrics_from_ctmc(self.ctmc_, self.metric, list(h), self._opts()))


class FmtSimulator(BaseEstimator):
    """Monte Carlo counterpart of :class:`FmtAnalyzer`.

    ``predict`` returns the point estimates; the matching confidence
    intervals are in ``intervals_`` after each call.
    """

    def __init__(self, metric="reliability", runs=10_000, seed=0, confidence=0.99,
                 erlang_mode=False):
        self.metric = metric
        self.runs = runs
        self.seed = seed
        self.confidence = confidence
        self.erlang_mode = erlang_mode

    def fit(self, model, y=None):
        if self.metric not in METRICS:
            raise ValueError(f"unknown metric {self.metric!r}; choose from {METRICS}")
        self.model_ = require_valid(as_model(model))
        return self

    def predict(self, X) -> np.ndarray:
        check_is_fitted(self, "model_")
        h = _horizons(X)
        rows = []
        for t in h:
            if t == 0:
                v = 0.0 if self.metric in ("expected_cost", "expected_failures") else 1.0
                rows.append((v, v, v))
                continue
            cfg = SimConfig(runs=self.runs, horizon=float(t), seed=self.seed,
                            confidence=self.confidence, erlang_mode=self.erlang_mode)
            e = simulate(self.model_, cfg).estimates[self.metric]
            rows.append((e.mean, e.low, e.high))
        out = np.array(rows).reshape(-1, 3)
        self.intervals_ = out[:, 1:]
        return out[:, 0]
