"""Palm estimators, mass-transport balance and goodness-of-fit tests.

Standard errors come from the regeneration structure when enough cycles
are available (ratio estimator over i.i.d. cycles), otherwise from
non-overlapping batch means.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import stats

from .analytic import markov_row
from .population import CycleSet, PointSample, PopulationTrace
from .tree import (
    EPHEMERAL,
    SUCCESSFUL,
    UNKNOWN,
    FamilyForest,
    GuardError,
    cousin_roots,
    descendant_counts,
    ephemeral_assignment,
    ephemeral_counts,
)

__all__ = [
    "Estimate",
    "InsufficientData",
    "regenerative_mean",
    "batch_means",
    "estimate_mean",
    "empirical_intensity",
    "ForestStatistics",
    "palm_mean",
    "TransportFunctional",
    "MassTransportResult",
    "TRANSPORT_FUNCTIONALS",
    "mtp_balance",
    "diagonal_invariance",
    "distribution_equality_test",
    "kernel_gof_test",
    "RatioCheck",
    "ratio_identity_check",
    "lag1_autocorrelation",
    "pair_independence_test",
]

MIN_CYCLES = 30
N_BATCHES = 20


class InsufficientData(ValueError):
    pass


@dataclass(frozen=True)
class Estimate:
    value: float
    se: float
    method: str
    n_effective: int
    epsilon: float = float("nan")

    def within(self, target: float, k: float = 3.0) -> bool:
        return abs(self.value - target) <= k * self.se

    def to_json(self) -> dict:
        return {"value": self.value, "se": self.se, "method": self.method,
                "n_effective": self.n_effective, "epsilon": self.epsilon}


def regenerative_mean(values: np.ndarray, cycles: CycleSet, epsilon: float = float("nan")) -> Estimate:
    """Ratio estimator ``sum Y_j / sum tau_j`` over i.i.d. cycles.

    ``values`` is a per-node array aligned with the cycles' window.
    """
    n = len(cycles)
    if n < 2:
        raise InsufficientData("regenerative estimate needs at least 2 cycles")
    y = cycles.cycle_sums(np.asarray(values, dtype=float))
    tau = cycles.lengths.astype(float)
    r = y.sum() / tau.sum()
    z = y - r * tau
    se = math.sqrt(z.var(ddof=1) / n) / tau.mean()
    return Estimate(float(r), float(se), "regenerative", n, epsilon)


def batch_means(values, n_batches: int = N_BATCHES, epsilon: float = float("nan")) -> Estimate:
    x = np.asarray(values, dtype=float)
    if x.size < n_batches:
        raise InsufficientData(f"batch means needs at least {n_batches} observations, got {x.size}")
    size = x.size // n_batches
    means = x[: size * n_batches].reshape(n_batches, size).mean(axis=1)
    se = means.std(ddof=1) / math.sqrt(n_batches)
    return Estimate(float(x.mean()), float(se), "batch-means", n_batches, epsilon)


def estimate_mean(values, cycles: CycleSet | None = None, epsilon: float = float("nan")) -> Estimate:
    """Regenerative estimate with 30 or more cycles, batch means otherwise.

    With cycles, ``values`` must be aligned with the cycles' window; without
    them it is the sample to average.
    """
    if cycles is not None and len(cycles) >= MIN_CYCLES:
        return regenerative_mean(values, cycles, epsilon)
    if cycles is not None:
        w = cycles.trace.window
        lo = cycles.trace.B
        values = np.asarray(values)[lo:w.length]
    return batch_means(values, epsilon=epsilon)


def empirical_intensity(points: PointSample, cycles: CycleSet | None = None,
                        epsilon: float = float("nan")) -> Estimate:
    """Atoms per unit length of the core range."""
    n = points.core_length
    if n <= 0:
        raise InsufficientData("empty core range")
    ind = np.zeros(n)
    ind[points.atoms - points.lo] = 1.0
    value = float(ind.mean())
    if cycles is not None and len(cycles) >= MIN_CYCLES:
        w = cycles.trace.window
        full = np.zeros(w.length)
        full[points.atoms - w.L] = 1.0
        se = regenerative_mean(full, cycles, epsilon)
        return Estimate(value, se.se, se.method, se.n_effective, epsilon)
    bm = batch_means(ind, epsilon=epsilon)
    return Estimate(value, bm.se, bm.method, bm.n_effective, epsilon)


# -- Palm statistics over a forest ------------------------------------------

class ForestStatistics:
    """Per-node tree functionals for a classified forest, computed once.

    Arrays are aligned with the window; each comes with a validity mask
    marking nodes whose value is exact (up to the window's epsilon).
    """

    def __init__(self, forest: FamilyForest, depth: int = 3):
        if not forest.classified:
            raise InsufficientData("forest has no anchor; enlarge the window")
        self.forest = forest
        self.depth = depth
        size = forest.window.length
        self.d, self.d_valid = descendant_counts(forest, depth)
        self.de, self.de_valid = ephemeral_counts(forest, depth)
        self.root, self.root_depth = ephemeral_assignment(forest)
        self.cousin_root = cousin_roots(forest, (self.root, self.root_depth))
        self.succ = forest.successful
        L = forest.L
        lab = forest.labels
        self.labeled = lab != UNKNOWN

        resolved = self.root >= 0
        self.max_tree_depth = int(self.root_depth.max()) if resolved.any() else 0
        t_hi = self.succ.size - 1 - self.max_tree_depth
        # successful atoms after the anchor whose cells are fully inside
        self.succ_eligible = self.succ[1:max(t_hi + 1, 1)]

        members = np.bincount(self.root[resolved] - L, minlength=size)
        self.tilde_de = members + 1
        cr = self.cousin_root >= 0
        self.l_total = np.bincount(self.cousin_root[cr] - L, minlength=size) + 1
        idx = np.flatnonzero(resolved)
        self.tree_distance = np.bincount(self.root[idx] - L, weights=(self.root[idx] - L - idx),
                                         minlength=size)
        idx = np.flatnonzero(cr)
        self.foil_distance = np.bincount(self.cousin_root[idx] - L,
                                         weights=np.abs(self.cousin_root[idx] - L - idx),
                                         minlength=size)
        self.cell_valid = np.zeros(size, dtype=bool)
        self.cell_valid[self.succ_eligible - L] = True

    def node_values(self, name: str):
        """Values and validity mask of a built-in functional."""
        size = self.forest.window.length
        if name.startswith("d") and name[1:].isdigit():
            j = int(name[1:])
            return self.d[j], self.d_valid[j]
        if name.startswith("de") and name[2:].isdigit():
            j = int(name[2:])
            return self.de[j], self.de_valid[j]
        if name == "tilde_de":
            return self.tilde_de, self.cell_valid
        if name == "l":
            return self.l_total, self.cell_valid
        if name.startswith("l") and name[1:].isdigit():
            return self.strict_cousins(int(name[1:]))
        raise KeyError(f"unknown functional {name!r}")

    def strict_cousins(self, j: int):
        """Cousins of degree exactly ``j`` of every successful node.

        ``|L_j(k_t)| - |L_{j-1}(k_t)| = d_j(k_{t+j}) - d_{j-1}(k_{t+j-1})``.
        """
        size = self.forest.window.length
        L = self.forest.L
        out = np.zeros(size, dtype=np.int64)
        valid = np.zeros(size, dtype=bool)
        T = self.succ.size
        if T > j and j >= 1:
            base = self.succ[: T - j] - L
            top = self.succ[j:] - L
            below = self.succ[j - 1: T - 1] - L
            out[base] = self.d[j][top] - self.d[j - 1][below]
            valid[base] = self.d_valid[j][top] & self.d_valid[j - 1][below]
        return out, valid

    def atoms(self, label: str) -> np.ndarray:
        code = {"successful": SUCCESSFUL, "ephemeral": EPHEMERAL}[label]
        return np.flatnonzero(self.forest.labels == code) + self.forest.L


def palm_mean(forest_or_stats, label: str, functional: str | Callable[[FamilyForest, int], float]) -> Estimate:
    """Average of a node functional over the atoms with the given label.

    ``functional`` is either the name of a built-in per-node quantity
    (``d1``, ``de2``, ``l3``, ``tilde_de``, ``l``) or a callable
    ``g(forest, n)``; callables raising :class:`GuardError` drop the node.
    """
    fs = forest_or_stats if isinstance(forest_or_stats, ForestStatistics) else ForestStatistics(forest_or_stats)
    forest = fs.forest
    atoms = fs.atoms(label)
    if isinstance(functional, str):
        vals, valid = fs.node_values(functional)
        sel = valid[atoms - forest.L]
        x = vals[atoms[sel] - forest.L].astype(float)
    else:
        out = []
        for n in atoms.tolist():
            try:
                out.append(float(functional(forest, n)))
            except GuardError:
                continue
        x = np.array(out)
    if x.size < 2:
        raise InsufficientData(f"fewer than 2 eligible {label} atoms")
    if x.size >= N_BATCHES * 2:
        return batch_means(x, epsilon=forest.epsilon)
    se = x.std(ddof=1) / math.sqrt(x.size)
    return Estimate(float(x.mean()), float(se), "iid", int(x.size), forest.epsilon)


# -- mass transport ---------------------------------------------------------

PairFn = Callable[[ForestStatistics], tuple]
PointFn = Callable[[FamilyForest, int, int], float]


@dataclass(frozen=True)
class TransportFunctional:
    """A diagonally invariant mass-transport kernel ``h(n, m)``.

    ``pairs`` lists every nonzero ``(n, m, h)`` in the window at once;
    ``point`` evaluates a single pair.  Both are truncated to
    ``|n - m| <= radius``, which keeps the kernel diagonally invariant.
    """

    name: str
    description: str
    pairs: PairFn = field(repr=False)
    point: PointFn = field(repr=False)
    needs_labels: bool = False
    max_abs: Callable[[int], float] = field(default=lambda rho: 1.0, repr=False)


def _parent_pairs(fs):
    F = fs.forest
    n = F.window.indices
    return n, F.parent, np.ones(n.size)


def _parent_point(F, n, m):
    return 1.0 if F.f(n) == m else 0.0


def _gap_pairs(fs):
    F = fs.forest
    n = F.window.indices
    return n, F.parent, (F.parent - n).astype(float)


def _gap_point(F, n, m):
    return float(m - n) if F.f(n) == m else 0.0


def _tree_pairs(fs):
    F = fs.forest
    has = fs.root >= 0
    m = F.window.indices[has]
    s = fs.root[has]
    succ = fs.succ
    src = np.concatenate([succ, s])
    dst = np.concatenate([succ, m])
    return src, dst, np.ones(src.size)


def _tree_point(F, n, m):
    lab = F.labels
    if not F.L <= n <= F.R or lab[n - F.L] != SUCCESSFUL:
        return 0.0
    if m == n:
        return 1.0
    if m > n or lab[m - F.L] != EPHEMERAL:
        return 0.0
    x = m
    while x < n:
        x = F.f(x)
        if x == n:
            return 1.0
        if x > F.R or lab[x - F.L] == SUCCESSFUL:
            return 0.0
    return 0.0


TRANSPORT_FUNCTIONALS = {
    "parent": TransportFunctional(
        "parent", "h(n,m) = 1{f(n) = m}: unit mass to the parent", _parent_pairs, _parent_point),
    "ephemeral_tree": TransportFunctional(
        "ephemeral_tree", "h(n,m) = 1{n successful, m in its direct ephemeral tree}",
        _tree_pairs, _tree_point, needs_labels=True),
    "gap": TransportFunctional(
        "gap", "h(n,m) = 1{f(n) = m} (m - n): lifespan sent to the parent",
        _gap_pairs, _gap_point, max_abs=lambda rho: float(rho)),
}


@dataclass(frozen=True)
class MassTransportResult:
    name: str
    lhs: Estimate
    rhs: Estimate
    difference_se: float
    boundary: float
    radius: int
    core: tuple

    @property
    def bound(self) -> float:
        return 3.0 * self.difference_se + self.boundary

    @property
    def balanced(self) -> bool:
        return abs(self.lhs.value - self.rhs.value) <= self.bound

    def __iter__(self):
        yield self.lhs
        yield self.rhs


def mtp_balance(forest_or_stats, h: TransportFunctional | str, radius: int | None = None) -> MassTransportResult:
    """Compare mass received (lhs) with mass sent (rhs) per core node.

    ``lhs(n) = sum_m h(m, n)`` and ``rhs(n) = sum_m h(n, m)`` are averaged
    over a core shrunk by ``radius`` from both trusted edges.  The two
    sides may differ by the statistical error plus at most
    ``2 radius max|h| / core_length`` of mass crossing the core boundary.
    """
    fs = forest_or_stats if isinstance(forest_or_stats, ForestStatistics) else ForestStatistics(forest_or_stats)
    F = fs.forest
    if isinstance(h, str):
        h = TRANSPORT_FUNCTIONALS[h]
    rho = F.B if radius is None else int(radius)
    rho = max(rho, 1)
    base = (F.anchor + 1) if h.needs_labels else F.guard
    lo, hi = base + rho, F.R - rho
    if hi - lo + 1 < 2 * N_BATCHES:
        raise GuardError(f"radius {rho} exceeds the guard bands of a window of {F.window.length}")
    src, dst, w = h.pairs(fs)
    keep = (np.abs(dst - src) <= rho) & (src >= F.L) & (src <= F.R) & (dst >= F.L) & (dst <= F.R)
    src, dst, w = src[keep], dst[keep], w[keep]
    size = F.window.length
    sent = np.bincount(src - F.L, weights=w, minlength=size)
    received = np.bincount(dst - F.L, weights=w, minlength=size)
    a, b = lo - F.L, hi - F.L + 1
    lhs = batch_means(received[a:b], epsilon=F.epsilon)
    rhs = batch_means(sent[a:b], epsilon=F.epsilon)
    diff = batch_means(received[a:b] - sent[a:b])
    boundary = 2.0 * rho * h.max_abs(rho) / (b - a)
    return MassTransportResult(h.name, lhs, rhs, diff.se, boundary, rho, (lo, hi))


def diagonal_invariance(h: TransportFunctional, forest: FamilyForest, shifted: FamilyForest,
                        k: int, nodes, radius: int) -> bool:
    """Check ``h(n, m)`` on ``forest`` equals ``h(n + k, m + k)`` on ``shifted``."""
    for n in nodes:
        for m in range(n - radius, n + radius + 1):
            if not (forest.L <= m <= forest.R):
                continue
            if h.point(forest, n, m) != h.point(shifted, n + k, m + k):
                return False
    return True


# -- tests of distributional identities ------------------------------------

def _merge_columns(table: np.ndarray, min_expected: float = 5.0) -> np.ndarray:
    """Merge adjacent columns until every expected count reaches the threshold."""
    cols = [table[:, j].astype(float) for j in range(table.shape[1])]
    rows = table.sum(axis=1).astype(float)
    total = rows.sum()
    merged = []
    acc = None
    for c in cols:
        acc = c if acc is None else acc + c
        if (rows * acc.sum() / total).min() >= min_expected:
            merged.append(acc)
            acc = None
    if acc is not None:
        if merged:
            merged[-1] = merged[-1] + acc
        else:
            merged.append(acc)
    return np.column_stack(merged)


def distribution_equality_test(samples_a, samples_b) -> tuple[float, float]:
    """Two-sample chi-square test on the pooled integer support."""
    a = np.asarray(samples_a)
    b = np.asarray(samples_b)
    if a.size == 0 or b.size == 0:
        raise InsufficientData("both samples must be nonempty")
    support = np.union1d(a, b)
    table = np.vstack([
        np.array([np.count_nonzero(a == v) for v in support]),
        np.array([np.count_nonzero(b == v) for v in support]),
    ])
    table = _merge_columns(table)
    if table.shape[1] < 2:
        return 0.0, 1.0
    rows = table.sum(axis=1, keepdims=True)
    cols = table.sum(axis=0, keepdims=True)
    expected = rows * cols / table.sum()
    stat = float(((table - expected) ** 2 / expected).sum())
    df = table.shape[1] - 1
    return stat, float(stats.chi2.sf(stat, df))


def _gof(observed: np.ndarray, probs: np.ndarray, min_expected: float = 5.0) -> float:
    n = observed.sum()
    exp = probs * n
    obs_m, exp_m = [], []
    o_acc = e_acc = 0.0
    for o, e in zip(observed, exp):
        o_acc += o
        e_acc += e
        if e_acc >= min_expected:
            obs_m.append(o_acc)
            exp_m.append(e_acc)
            o_acc = e_acc = 0.0
    if e_acc > 0 or o_acc > 0:
        if exp_m:
            obs_m[-1] += o_acc
            exp_m[-1] += e_acc
        else:
            return 1.0
    if len(exp_m) < 2:
        return 1.0
    obs_m, exp_m = np.array(obs_m), np.array(exp_m)
    stat = float(((obs_m - exp_m) ** 2 / exp_m).sum())
    return float(stats.chi2.sf(stat, len(exp_m) - 1))


def kernel_gof_test(trace: PopulationTrace, s: float, min_visits: int = 50) -> float:
    """Fisher-combined chi-square of observed transitions against the geometric kernel."""
    core = trace.core
    prev, nxt = core[:-1], core[1:]
    states, visits = np.unique(prev, return_counts=True)
    pvals = []
    for k, v in zip(states.tolist(), visits.tolist()):
        if v < min_visits:
            continue
        following = nxt[prev == k]
        if following.min() < 1 or following.max() > k + 1:
            pvals.append(0.0)
            continue
        observed = np.bincount(following - 1, minlength=k + 1)
        pvals.append(_gof(observed, markov_row(s, k)))
    if not pvals:
        raise InsufficientData(f"insufficient data: no state visited {min_visits} times")
    pvals = np.clip(pvals, 1e-300, 1.0)
    return float(stats.combine_pvalues(pvals, method="fisher").pvalue)


@dataclass(frozen=True)
class RatioCheck:
    lhs_ratio: float
    rhs_target: float
    foil_ratio: float
    n_successful: int
    n_ephemeral: int

    def __iter__(self):
        yield self.lhs_ratio
        yield self.rhs_target


def ratio_identity_check(forest_or_stats, mean: float | None = None) -> RatioCheck:
    """Distance-weighted cell sizes versus distance to the assigned root.

    Numerators average ``sum_{n in cell(s)} |n - s|`` over successful
    atoms; denominators average the distance from an ephemeral node to the
    successful node owning its cell.  Both ratios target ``E[a] - 1``.
    """
    fs = forest_or_stats if isinstance(forest_or_stats, ForestStatistics) else ForestStatistics(forest_or_stats)
    F = fs.forest
    if mean is None:
        if F.window.dist is None:
            raise ValueError("mean mark unknown; pass mean=")
        mean = F.window.dist.mean
    if mean <= 1.0:
        raise ValueError("no ephemerals: mean mark is 1 and the ratio is undefined")
    L = F.L
    elig = fs.succ_eligible
    if elig.size < 2:
        raise InsufficientData("too few successful atoms with complete cells")
    lo, hi = elig[0], elig[-1]
    num_d = fs.tree_distance[elig - L].mean()
    num_l = fs.foil_distance[elig - L].mean()
    idx = np.arange(lo - L, hi - L + 1)
    eph = idx[(F.labels[idx] == EPHEMERAL) & (fs.root[idx] >= 0) & (fs.cousin_root[idx] >= 0)]
    if eph.size == 0:
        raise ValueError("no ephemerals in the eligible range")
    nodes = eph + L
    den_d = np.abs(fs.root[eph] - nodes).mean()
    den_l = np.abs(fs.cousin_root[eph] - nodes).mean()
    return RatioCheck(float(num_d / den_d), float(mean - 1.0), float(num_l / den_l),
                      int(elig.size), int(eph.size))


# -- cycle independence -------------------------------------------------

def lag1_autocorrelation(x) -> tuple[float, float]:
    """Sample lag-1 autocorrelation and its standard error under independence."""
    x = np.asarray(x, dtype=float)
    if x.size < 3:
        raise InsufficientData("need at least 3 values")
    c = x - x.mean()
    r = float(np.dot(c[:-1], c[1:]) / np.dot(c, c))
    return r, 1.0 / math.sqrt(x.size)


def _classes(x: np.ndarray, n_classes: int = 8) -> np.ndarray:
    values, counts = np.unique(x, return_counts=True)
    target = x.size / n_classes
    cls = np.zeros(values.size, dtype=np.int64)
    c = acc = 0
    for i, k in enumerate(counts):
        cls[i] = c
        acc += k
        if acc >= target:
            c += 1
            acc = 0
    if acc and c > 0:
        cls[cls == c] = c - 1
    return cls[np.searchsorted(values, x)]


def pair_independence_test(x, n_classes: int = 8) -> tuple[float, float]:
    """Chi-square independence of consecutive pairs ``(x_j, x_{j+1})``."""
    x = np.asarray(x)
    if x.size < 3:
        raise InsufficientData("need at least 3 values")
    c = _classes(x, n_classes)
    k = int(c.max()) + 1
    if k < 2:
        return 0.0, 1.0
    table = np.zeros((k, k))
    np.add.at(table, (c[:-1], c[1:]), 1)
    table = table[table.sum(axis=1) > 0][:, table.sum(axis=0) > 0]
    res = stats.chi2_contingency(table, correction=False)
    return float(res.statistic), float(res.pvalue)
