"""scikit-learn style wrappers.

The input ``X`` is always a realized mark sequence ``a_L, ..., a_R``, given
as a 1-D integer array or a single column.  ``start`` fixes the index of
its first entry.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .marks import make_distribution
from .population import (
    InsufficientRegenerations,
    MarkWindow,
    original_ancestors,
    population_process,
    regeneration_cycles,
)
from .stats import batch_means, empirical_intensity, estimate_mean
from .tree import EPHEMERAL, LABEL_NAMES, SUCCESSFUL, UNKNOWN, build_forest

__all__ = ["check_marks", "PopulationProcess", "FamilyTreeLabeler", "IntensityEstimator"]


def check_marks(X) -> np.ndarray:
    """Validate a mark sequence and return it as a 1-D int64 array."""
    arr = check_array(X, ensure_2d=False, dtype=None, input_name="X")
    if arr.ndim == 2:
        if arr.shape[1] != 1:
            raise ValueError(f"expected a single column of marks, got shape {arr.shape}")
        arr = arr[:, 0]
    if not np.all(np.equal(np.mod(arr, 1), 0)):
        raise ValueError("marks must be integers")
    arr = arr.astype(np.int64)
    if arr.min() < 1:
        raise ValueError("marks must be positive")
    return arr


def _window(est, X) -> MarkWindow:
    dist = make_distribution(est.dist) if est.dist is not None else None
    return MarkWindow.from_marks(check_marks(X), L=est.start, dist=dist)


class PopulationProcess(TransformerMixin, BaseEstimator):
    """Empty-start population counts of a mark sequence.

    Parameters
    ----------
    eps : float
        Burn-in budget; used when ``dist`` is known and ``burn_in`` is None.
    burn_in : int or None
        Explicit burn-in, overriding ``eps``.
    dist : str, dict or None
        Law of the marks, needed for an ``eps``-derived burn-in and for the
        level of the regeneration points when ``P[a = 1] = 0``.
    start : int
        Index of the first mark.

    Attributes
    ----------
    trace_ : PopulationTrace
    ancestors_ : PointSample
    cycles_ : CycleSet or None
    mean_population_ : Estimate
    """

    def __init__(self, eps=1e-9, burn_in=None, dist=None, start=0):
        self.eps = eps
        self.burn_in = burn_in
        self.dist = dist
        self.start = start

    def fit(self, X, y=None):
        window = _window(self, X)
        self.trace_ = population_process(window, self.eps, self.burn_in)
        self.ancestors_ = original_ancestors(self.trace_)
        try:
            self.cycles_ = regeneration_cycles(self.trace_, self.ancestors_)
        except InsufficientRegenerations:
            self.cycles_ = None
        if self.cycles_ is not None:
            self.mean_population_ = estimate_mean(self.trace_.nhat, self.cycles_, self.trace_.epsilon)
        else:
            self.mean_population_ = batch_means(self.trace_.core, n_batches=min(20, len(self.trace_.core)))
        self.n_features_in_ = 1
        return self

    def transform(self, X):
        check_is_fitted(self, "trace_")
        window = _window(self, X)
        return population_process(window, B=self.trace_.B).nhat


class FamilyTreeLabeler(BaseEstimator):
    """Successful/ephemeral classification of the nodes of a mark sequence.

    ``fit`` builds the windowed family forest; ``predict`` maps node
    indices to ``"successful"``, ``"ephemeral"`` or ``"unknown"``.
    """

    def __init__(self, eps=1e-9, burn_in=None, dist=None, start=0):
        self.eps = eps
        self.burn_in = burn_in
        self.dist = dist
        self.start = start

    def fit(self, X, y=None):
        window = _window(self, X)
        trace = population_process(window, self.eps, self.burn_in)
        self.ancestors_ = original_ancestors(trace)
        self.forest_ = build_forest(window, self.ancestors_, B=trace.B, epsilon=trace.epsilon)
        self.anchor_ = self.forest_.anchor
        self.n_features_in_ = 1
        return self

    def predict(self, nodes):
        check_is_fitted(self, "forest_")
        F = self.forest_
        idx = np.asarray(nodes, dtype=np.int64).ravel()
        if idx.size and (idx.min() < F.L or idx.max() > F.R):
            raise ValueError(f"nodes must lie in [{F.L}, {F.R}]")
        return np.array([LABEL_NAMES[int(c)] for c in F.labels[idx - F.L]])

    def fit_predict(self, X, y=None):
        self.fit(X)
        return self.predict(self.forest_.window.indices)


class IntensityEstimator(BaseEstimator):
    """Empirical intensities of the ancestor, successful and ephemeral points.

    Attributes
    ----------
    lambda_o_, lambda_s_ : Estimate
    lambda_e_ : float
        ``1 - lambda_s_.value``.
    """

    def __init__(self, eps=1e-9, burn_in=None, dist=None, start=0):
        self.eps = eps
        self.burn_in = burn_in
        self.dist = dist
        self.start = start

    def fit(self, X, y=None):
        window = _window(self, X)
        trace = population_process(window, self.eps, self.burn_in)
        anc = original_ancestors(trace)
        try:
            cycles = regeneration_cycles(trace, anc)
        except InsufficientRegenerations:
            cycles = None
        forest = build_forest(window, anc, B=trace.B, epsilon=trace.epsilon)
        labeled = forest.labels[forest.labels != UNKNOWN]
        if labeled.size < 40:
            raise ValueError("too few classified nodes; supply a longer mark sequence")
        self.lambda_o_ = empirical_intensity(anc, cycles, trace.epsilon)
        self.lambda_s_ = batch_means((labeled == SUCCESSFUL).astype(float), epsilon=trace.epsilon)
        self.lambda_e_ = float((labeled == EPHEMERAL).mean())
        self.n_features_in_ = 1
        return self

    def score(self, X, y=None):
        """Negative absolute gap between the successful intensity and ``1 / mean(X)``."""
        check_is_fitted(self, "lambda_s_")
        return -abs(self.lambda_s_.value - 1.0 / check_marks(X).mean())
