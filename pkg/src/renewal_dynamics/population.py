"""Population process on finite windows, original ancestors and cycles.

The window ``[L, R]`` is started empty: nobody born before ``L`` is alive.
After ``B`` burn-in steps the empty-start count agrees with the stationary
count unless some lifespan started left of ``L`` is still running, an event
of probability at most ``tail_mass(dist, B)``.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .marks import MarkDistribution, SeedSpec, make_distribution, sample_marks, tail_mass

__all__ = [
    "MAX_WINDOW",
    "WindowTooLarge",
    "InsufficientRegenerations",
    "MarkWindow",
    "PopulationTrace",
    "PointSample",
    "CycleSet",
    "simulate_marks",
    "population_process",
    "burn_in",
    "original_ancestors",
    "regeneration_cycles",
]

MAX_WINDOW = 50_000_000


class WindowTooLarge(ValueError):
    pass


class InsufficientRegenerations(ValueError):
    pass


@dataclass(frozen=True)
class MarkWindow:
    L: int
    R: int
    marks: np.ndarray = field(repr=False)
    dist: MarkDistribution | None = None
    seed: SeedSpec | None = None

    def __post_init__(self):
        if len(self.marks) != self.R - self.L + 1:
            raise ValueError("marks length does not match [L, R]")
        if len(self.marks) and self.marks.min() < 1:
            raise ValueError("marks must be positive integers")

    @classmethod
    def from_marks(cls, marks, L: int = 0, dist=None) -> "MarkWindow":
        """Window over explicitly given marks starting at index ``L``."""
        arr = np.asarray(marks, dtype=np.int64)
        return cls(L=L, R=L + len(arr) - 1, marks=arr, dist=dist)

    @property
    def length(self) -> int:
        return self.R - self.L + 1

    @property
    def indices(self) -> np.ndarray:
        return np.arange(self.L, self.R + 1)

    def mark(self, n: int) -> int:
        return int(self.marks[n - self.L])

    def shifted(self, k: int) -> "MarkWindow":
        """Same marks relabelled to start at ``L + k`` (seed provenance dropped)."""
        return MarkWindow(L=self.L + k, R=self.R + k, marks=self.marks, dist=self.dist)


@dataclass(frozen=True)
class PopulationTrace:
    window: MarkWindow
    nhat: np.ndarray = field(repr=False)
    B: int
    epsilon: float

    @property
    def core_lo(self) -> int:
        return self.window.L + self.B

    @property
    def core(self) -> np.ndarray:
        """Population values over the exact (up to ``epsilon``) core range."""
        return self.nhat[self.B:]

    def at(self, n: int) -> int:
        return int(self.nhat[n - self.window.L])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n", "a_n", "nhat_n"])
        for n, a, v in zip(self.window.indices, self.window.marks, self.nhat):
            w.writerow([int(n), int(a), int(v)])
        return buf.getvalue()


@dataclass(frozen=True)
class PointSample:
    atoms: np.ndarray
    lo: int
    hi: int
    label: str

    def __post_init__(self):
        a = self.atoms
        if a.size and (np.any(np.diff(a) <= 0) or a[0] < self.lo or a[-1] > self.hi):
            raise ValueError("atoms must be strictly increasing inside [lo, hi]")

    def __len__(self):
        return int(self.atoms.size)

    @property
    def core_length(self) -> int:
        return self.hi - self.lo + 1


@dataclass(frozen=True)
class CycleSet:
    """Regeneration cycles ``[k_j, k_{j+1})`` between consecutive ancestors."""

    starts: np.ndarray
    lengths: np.ndarray
    functionals: dict
    trace: PopulationTrace = field(repr=False)

    def __len__(self):
        return int(self.starts.size)

    def marks(self, j: int) -> np.ndarray:
        lo = int(self.starts[j]) - self.trace.window.L
        return self.trace.window.marks[lo:lo + int(self.lengths[j])]

    def population(self, j: int) -> np.ndarray:
        lo = int(self.starts[j]) - self.trace.window.L
        return self.trace.nhat[lo:lo + int(self.lengths[j])]

    def cycle_sums(self, values: np.ndarray) -> np.ndarray:
        """Sum a per-node array (aligned with the window) over every cycle."""
        off = self.starts - self.trace.window.L
        csum = np.concatenate([[0.0], np.cumsum(values, dtype=float)])
        return csum[off + self.lengths] - csum[off]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["start", "length"])
        for s, n in zip(self.starts, self.lengths):
            w.writerow([int(s), int(n)])
        return buf.getvalue()


def simulate_marks(dist, seed, L: int, R: int, max_window: int = MAX_WINDOW) -> MarkWindow:
    if L > R:
        raise ValueError(f"empty window [{L}, {R}]")
    n = R - L + 1
    if n > max_window:
        raise WindowTooLarge(f"window of {n} marks exceeds cap; rerun with max_window >= {n}")
    dist = make_distribution(dist)
    if not isinstance(seed, SeedSpec):
        seed = SeedSpec(int(seed))
    marks = sample_marks(dist, seed, np.arange(L, R + 1, dtype=np.int64))
    return MarkWindow(L=L, R=R, marks=marks, dist=dist, seed=seed)


def burn_in(dist: MarkDistribution, epsilon: float) -> int:
    """Smallest ``B`` with ``tail_mass(dist, B) <= epsilon``."""
    if not 0.0 < epsilon < 1.0:
        raise ValueError("epsilon must lie in (0, 1)")
    if tail_mass(dist, 0) <= epsilon:
        return 0
    if dist.finite:
        hi = int(dist.max_support)
    else:
        hi = 1
        while tail_mass(dist, hi) > epsilon:
            hi *= 2
    lo = 0  # tail_mass(lo) > epsilon >= tail_mass(hi)
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if tail_mass(dist, mid) <= epsilon:
            hi = mid
        else:
            lo = mid
    return hi


def population_process(window: MarkWindow, epsilon: float = 1e-9, B: int | None = None) -> PopulationTrace:
    """Empty-start population counts over ``window``.

    ``nhat[n] = 1 + #{L <= m < n : m + a_m > n}``, computed with a
    difference array over lifespans ``[m + 1, m + a_m - 1]``.  The burn-in
    ``B`` is derived from ``epsilon`` when the window carries its
    distribution; pass ``B`` explicitly otherwise (default 0, epsilon NaN).
    """
    size = window.length
    if B is None:
        if window.dist is not None:
            B = burn_in(window.dist, epsilon)
        else:
            B = 0
    B = min(B, size - 1)
    eps = tail_mass(window.dist, B) if window.dist is not None else float("nan")

    start = np.arange(size) + 1
    stop = np.minimum(np.arange(size) + window.marks, size)
    live = start < stop
    diff = (np.bincount(start[live], minlength=size + 1)
            - np.bincount(stop[live], minlength=size + 1))
    nhat = np.cumsum(diff[:-1]) + 1
    return PopulationTrace(window=window, nhat=nhat, B=int(B), epsilon=float(eps))


def original_ancestors(trace: PopulationTrace) -> PointSample:
    """Atoms of the ancestor process on the core ``[L + B, R]``.

    With ``P[a = 1] > 0`` these are the times of population one.  Without
    mass at 1 the population never drops below the smallest atom ``m``, and
    the regeneration times are the visits to ``m`` instead.
    """
    dist = trace.window.dist
    level = 1 if dist is None or dist.p1 > 0 else dist.min_support
    lo, hi = trace.core_lo, trace.window.R
    atoms = np.flatnonzero(trace.core == level) + lo
    label = "original-ancestor" if level == 1 else f"population-{level}"
    return PointSample(atoms=atoms.astype(np.int64), lo=lo, hi=hi, label=label)


CycleFunctional = Callable[[np.ndarray, np.ndarray], float]

DEFAULT_FUNCTIONALS: Mapping[str, CycleFunctional] = {
    "max_population": lambda nhat, marks: float(nhat.max()),
    "sum_population": lambda nhat, marks: float(nhat.sum()),
}


def regeneration_cycles(trace: PopulationTrace, ancestors: PointSample,
                        functionals: Mapping[str, CycleFunctional] | None = None) -> CycleSet:
    """Split the trace into cycles between consecutive ancestors.

    ``functionals`` maps a name to ``g(nhat_segment, marks_segment)``; the
    two defaults (cycle maximum and cycle sum of the population) are
    vectorized.
    """
    atoms = ancestors.atoms
    if atoms.size < 2:
        raise InsufficientRegenerations(
            f"insufficient regenerations: {atoms.size} ancestor(s) in window"
        )
    starts = atoms[:-1]
    lengths = np.diff(atoms)
    cycles = CycleSet(starts=starts, lengths=lengths, functionals={}, trace=trace)
    off = starts - trace.window.L
    out = {
        "sum_population": cycles.cycle_sums(trace.nhat),
        "max_population": np.maximum.reduceat(trace.nhat, off)[: len(off)].astype(float),
    }
    # reduceat over the final start runs to the end of the window; redo it
    out["max_population"][-1] = float(cycles.population(len(off) - 1).max())
    if functionals:
        for name, g in functionals.items():
            if name in DEFAULT_FUNCTIONALS and g is DEFAULT_FUNCTIONALS[name]:
                continue
            out[name] = np.array([g(cycles.population(j), cycles.marks(j)) for j in range(len(off))])
    cycles.functionals.update(out)
    return cycles
