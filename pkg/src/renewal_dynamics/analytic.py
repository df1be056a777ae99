"""Closed-form quantities with truncation bounds.

Every infinite product over ``i >= 1`` is cut at an index ``M`` chosen from
``tail_mass``; the neglected factors all lie within the reported bound of
one.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import stats

from .marks import MarkDistribution, make_distribution, tail_mass

__all__ = [
    "IntensityReport",
    "AnalyticValue",
    "truncation_index",
    "intensities",
    "population_mgf",
    "geometric_pgf",
    "geometric_moments",
    "markov_row",
    "renewal_sequence",
]


@dataclass(frozen=True)
class IntensityReport:
    lambda_o: float
    lambda_s: float
    lambda_e: float
    truncation: int
    error_bound: float

    def to_json(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class AnalyticValue:
    value: float
    truncation: int
    error_bound: float

    def __float__(self):
        return float(self.value)

    def to_json(self) -> dict:
        return asdict(self)


MAX_TERMS = 1_000_000


def truncation_index(dist: MarkDistribution, budget: float, max_terms: int = MAX_TERMS) -> int:
    """Smallest ``M`` with ``tail_mass(dist, M) <= budget``, capped at ``max_terms``.

    Heavy tails can need more factors than is practical; at the cap the
    reported error bound simply grows.
    """
    if tail_mass(dist, 0) <= budget:
        return 0
    hi = 1
    while tail_mass(dist, hi) > budget:
        if hi >= max_terms:
            return max_terms
        hi *= 2
    lo = hi // 2 if hi > 1 else 0
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if tail_mass(dist, mid) <= budget:
            hi = mid
        else:
            lo = mid
    return hi


def intensities(dist, tol: float = 1e-12) -> IntensityReport:
    """Intensities of the ancestor, successful and ephemeral point processes.

    The ancestor intensity is ``prod_{i>=1} P[a <= i]``.  With
    ``ln(1 - q) >= -2q`` for ``q <= 1/2``, stopping at ``M`` loses a factor
    no smaller than ``exp(-2 tail_mass(M))``; ``M`` is picked so that this
    costs at most ``tol`` in absolute terms.
    """
    dist = make_distribution(dist)
    if dist.p1 <= 0:
        raise ValueError("ancestor intensity needs P[a = 1] > 0")
    if tol <= 0:
        raise ValueError("tol must be positive")
    M = truncation_index(dist, min(tol / 2.0, 0.25))
    i = np.arange(1, M + 1)
    lam_o = float(np.exp(np.sum(np.log(dist.cdf(i))))) if M else 1.0
    err = lam_o * (1.0 - math.exp(-2.0 * tail_mass(dist, M)))
    lam_s = 1.0 / dist.mean
    return IntensityReport(lambda_o=lam_o, lambda_s=lam_s, lambda_e=1.0 - lam_s,
                           truncation=int(M), error_bound=float(err))


def population_mgf(dist, t: float, tol: float = 1e-12) -> AnalyticValue:
    """``E[exp(t N)] = e^t prod_{i>=1} (e^t P[a > i] + P[a <= i])``."""
    dist = make_distribution(dist)
    if tol <= 0:
        raise ValueError("tol must be positive")
    et = math.exp(t)
    if t > 0:
        budget = tol / (et - 1.0)
    else:
        budget = min(tol, 0.25)
    M = truncation_index(dist, budget)
    q = dist.sf(np.arange(1, M + 1))
    log_val = t + float(np.sum(np.log1p(q * (et - 1.0))))
    value = math.exp(log_val)
    tm = tail_mass(dist, M)
    if t > 0:
        err = value * math.expm1((et - 1.0) * tm)
    else:
        err = value * -math.expm1(-2.0 * (1.0 - et) * tm)
    return AnalyticValue(value=value, truncation=int(M), error_bound=float(err))


def _geometric_truncation(r: float, z: float, tol: float) -> int:
    if r == 0.0 or z == 1.0:
        return 0
    M = 0
    while abs(z - 1.0) * r ** (M + 1) / (1.0 - r) > tol:
        M += 1
    return M


def geometric_pgf(s: float, z: float, tol: float = 1e-15) -> float:
    """Stationary PGF of the population for geometric(``s``) marks.

    ``G(z) = z prod_{i>=1} (z r^i + 1 - r^i)`` with ``r = 1 - s``, which
    satisfies ``G(z) = z G(r z + s)``.
    """
    if not 0.0 < s <= 1.0:
        raise ValueError("s must be in (0, 1]")
    r = 1.0 - s
    M = _geometric_truncation(r, z, tol)
    ri = r ** np.arange(1, M + 1)
    return float(z * np.prod(z * ri + 1.0 - ri))


def geometric_moments(s: float) -> tuple[float, float]:
    """Mean and second factorial moment ``E[N(N-1)] = 2r / (s(1 - r^2))``."""
    if not 0.0 < s <= 1.0:
        raise ValueError("s must be in (0, 1]")
    if s == 1.0:
        return 1.0, 0.0
    r = 1.0 - s
    return 1.0 / s, 2.0 * r / (s * (1.0 - r * r))


def geometric_second_moment(s: float) -> float:
    mean, fact2 = geometric_moments(s)
    return fact2 + mean


def markov_row(s: float, k: int) -> np.ndarray:
    """Transition probabilities from population ``k`` to ``1, ..., k + 1``.

    Each of the ``k`` individuals alive survives one more step with
    probability ``r``, independently, and one newcomer is added.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if not 0.0 < s < 1.0:
        raise ValueError("s must be in (0, 1)")
    return stats.binom.pmf(np.arange(k + 1), k, 1.0 - s)


def renewal_sequence(dist, K: int) -> np.ndarray:
    """``u_k = P[some partial sum of marks equals k]`` for ``k = 0..K``."""
    dist = make_distribution(dist)
    if K < 0:
        raise ValueError("K must be >= 0")
    p = dist.pmf(np.arange(1, K + 1))
    u = np.zeros(K + 1)
    u[0] = 1.0
    for k in range(1, K + 1):
        u[k] = np.dot(p[:k], u[k - 1::-1])
    return u
