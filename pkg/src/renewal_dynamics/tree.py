"""Windowed family forest of the map ``n -> n + a_n``.

Node ``n`` has parent ``f(n) = n + a_n``; its children are the preimages
``f^{-1}(n)``, all strictly to its left.  Classification uses the first
in-window original ancestor ``k*``: every node left of ``k*`` descends from
it, so past ``k*`` the successful nodes are exactly the orbit of ``k*``.

Completeness near the left edge: a node ``m < L`` can only be a child of
``x > L + B`` on the excluded event of probability ``epsilon``, so child
lists are trusted from ``guard = L + B + 1`` on.  Queries that would need
children of a node left of the guard raise :class:`GuardError`.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .marks import tail_mass
from .population import MarkWindow, PointSample

__all__ = [
    "UNKNOWN",
    "SUCCESSFUL",
    "EPHEMERAL",
    "LABEL_NAMES",
    "GuardError",
    "FamilyForest",
    "EphemeralTree",
    "Foil",
    "UnionFind",
    "build_forest",
    "descendants",
    "foil",
    "direct_ephemeral_tree",
    "component_count",
    "lattice_span",
    "descendant_counts",
    "ephemeral_counts",
    "ephemeral_assignment",
    "cousin_roots",
]

UNKNOWN, SUCCESSFUL, EPHEMERAL = 0, 1, 2
LABEL_NAMES = {UNKNOWN: "unknown", SUCCESSFUL: "successful", EPHEMERAL: "ephemeral"}
_LABEL_CODES = {v: k for k, v in LABEL_NAMES.items()}


class GuardError(ValueError):
    """A query needs structure outside the trusted part of the window."""


@dataclass(frozen=True)
class FamilyForest:
    window: MarkWindow
    parent: np.ndarray = field(repr=False)
    child_ptr: np.ndarray = field(repr=False)
    child_idx: np.ndarray = field(repr=False)
    labels: np.ndarray = field(repr=False)
    anchor: int | None
    B: int
    epsilon: float

    @property
    def L(self) -> int:
        return self.window.L

    @property
    def R(self) -> int:
        return self.window.R

    @property
    def guard(self) -> int:
        """Smallest node whose child list is complete."""
        return self.window.L + self.B + 1

    @property
    def classified(self) -> bool:
        return self.anchor is not None

    @property
    def successful(self) -> np.ndarray:
        """Successful nodes in increasing order (the anchor's orbit)."""
        return np.flatnonzero(self.labels == SUCCESSFUL) + self.L

    def label(self, n: int) -> str:
        return LABEL_NAMES[int(self.labels[n - self.L])]

    def f(self, n: int) -> int:
        return int(self.parent[n - self.L])

    def iterate(self, n: int, j: int) -> int:
        """``f^j(n)``; raises once the orbit leaves the window."""
        for _ in range(j):
            if n > self.R:
                raise GuardError(f"right guard violated: orbit left the window at {n}")
            n = self.f(n)
        return n

    def children(self, n: int) -> np.ndarray:
        i = n - self.L
        return self.child_idx[self.child_ptr[i]:self.child_ptr[i + 1]] + self.L

    def to_json(self) -> str:
        rows = [
            {"n": int(n), "parent": int(p), "label": LABEL_NAMES[int(c)]}
            for n, p, c in zip(self.window.indices, self.parent, self.labels)
        ]
        return json.dumps(rows)

    def to_dot(self, max_nodes: int = 10_000) -> str:
        if self.window.length > max_nodes:
            raise ValueError(f"DOT export limited to {max_nodes} nodes, window has {self.window.length}")
        colors = {UNKNOWN: "gray", SUCCESSFUL: "red", EPHEMERAL: "lightblue"}
        lines = ["digraph family {", "  rankdir=LR;"]
        for n, c in zip(self.window.indices, self.labels):
            lines.append(f'  {n} [style=filled, fillcolor={colors[int(c)]}, label="{n}"];')
        for n, p in zip(self.window.indices, self.parent):
            if p <= self.R:
                lines.append(f"  {n} -> {p};")
        lines.append("}")
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class EphemeralTree:
    root: int
    members: np.ndarray
    depth_counts: tuple

    def d(self, j: int) -> int:
        """Number of direct ephemeral descendants at depth ``j``."""
        return self.depth_counts[j] if j < len(self.depth_counts) else 0

    def __len__(self):
        return int(self.members.size)


@dataclass(frozen=True)
class Foil:
    """Degree-``j`` foil of ``n``.

    ``members`` is ``{m : f^j(m) = f^j(n)}``; ``cousins`` keeps only those
    whose orbit first meets that of ``n`` after exactly ``j`` steps.
    """

    node: int
    degree: int
    members: np.ndarray
    cousins: np.ndarray

    @property
    def size(self) -> int:
        return int(self.members.size)


def build_forest(window: MarkWindow, ancestors: PointSample | None = None,
                 B: int | None = None, epsilon: float | None = None) -> FamilyForest:
    """Parent/children arrays plus successful/ephemeral labels.

    The burn-in defaults to the offset of the ancestors' core range from
    ``L``; without ancestors nothing is labelled and ``anchor`` is None.
    """
    if B is None:
        B = ancestors.lo - window.L if ancestors is not None else 0
    if epsilon is None:
        epsilon = tail_mass(window.dist, B) if window.dist is not None else float("nan")
    size = window.length
    offs = np.arange(size)
    parent = window.indices + window.marks
    poff = offs + window.marks
    inside = poff < size
    order = np.argsort(poff[inside], kind="stable")
    child_idx = offs[inside][order]
    counts = np.bincount(poff[inside], minlength=size)
    child_ptr = np.concatenate([[0], np.cumsum(counts)])

    labels = np.zeros(size, dtype=np.int8)
    anchor = None
    if ancestors is not None and len(ancestors):
        anchor = int(ancestors.atoms[0])
        i = anchor - window.L
        labels[i + 1:] = EPHEMERAL
        while i < size:
            labels[i] = SUCCESSFUL
            i = int(poff[i])
    return FamilyForest(
        window=window,
        parent=parent,
        child_ptr=child_ptr,
        child_idx=child_idx,
        labels=labels,
        anchor=anchor,
        B=int(B),
        epsilon=float(epsilon),
    )


def forest_from_trace(trace, ancestors: PointSample) -> FamilyForest:
    return build_forest(trace.window, ancestors, B=trace.B, epsilon=trace.epsilon)


def _expand(forest: FamilyForest, level, keep=None):
    nxt = []
    for x in level:
        if x < forest.guard:
            raise GuardError(f"left guard violated: children of {x} may lie left of the window")
        ch = forest.children(x)
        if keep is not None:
            ch = [c for c in ch if keep(c)]
        nxt.extend(int(c) for c in ch)
    return nxt


def descendants(forest: FamilyForest, n: int, i: int) -> set:
    """``D_i(n) = {m : f^i(m) = n}`` by ``i`` rounds of reverse BFS."""
    if n < forest.guard and i > 0:
        raise GuardError(f"left guard violated: {n} < {forest.guard}")
    level = [int(n)]
    for _ in range(i):
        level = _expand(forest, level)
        if not level:
            break
    return set(level)


def foil(forest: FamilyForest, n: int, j: int) -> Foil:
    top = forest.iterate(n, j)
    if top > forest.R:
        raise GuardError(f"right guard violated: f^{j}({n}) = {top} > {forest.R}")
    members = descendants(forest, top, j)
    if j == 0:
        cousins = {n}
    else:
        cousins = members - descendants(forest, forest.iterate(n, j - 1), j - 1)
    return Foil(node=n, degree=j,
                members=np.array(sorted(members), dtype=np.int64),
                cousins=np.array(sorted(cousins), dtype=np.int64))


def direct_ephemeral_tree(forest: FamilyForest, s: int) -> EphemeralTree:
    """Root ``s`` plus every ephemeral node whose first successful ancestor is ``s``."""
    if not forest.L <= s <= forest.R or forest.labels[s - forest.L] != SUCCESSFUL:
        raise ValueError(f"{s} is not a successful node of this forest")
    lab = forest.labels
    L = forest.L

    def ephemeral(c):
        code = lab[c - L]
        if code == UNKNOWN:
            raise GuardError(f"left guard violated: node {c} is unclassified")
        return code == EPHEMERAL

    members = [s]
    counts = [1]
    level = [s]
    while level:
        level = _expand(forest, level, keep=ephemeral)
        if level:
            members.extend(level)
            counts.append(len(level))
    return EphemeralTree(root=s, members=np.array(sorted(members), dtype=np.int64),
                         depth_counts=tuple(counts))


class UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))
        self.rank = [0] * n

    def find(self, x: int) -> int:
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, x: int, y: int) -> None:
        rx, ry = self.find(x), self.find(y)
        if rx == ry:
            return
        if self.rank[rx] < self.rank[ry]:
            rx, ry = ry, rx
        self.parent[ry] = rx
        if self.rank[rx] == self.rank[ry]:
            self.rank[rx] += 1


def component_count(window: MarkWindow, lo: int | None = None, hi: int | None = None) -> int:
    """Connected components meeting the core ``[lo, hi]``.

    Edges ``(n, f(n))`` with both ends in the window are merged.  Nodes near
    the right edge have orbits that leave the window before coalescing, so
    the default core stops a tenth of the window short of ``R``.
    """
    lo = window.L if lo is None else lo
    hi = window.R - window.length // 10 if hi is None else hi
    size = window.length
    uf = UnionFind(size)
    poff = np.arange(size) + window.marks
    for i, p in enumerate(poff.tolist()):
        if p < size:
            uf.union(i, p)
    roots = {uf.find(i) for i in range(lo - window.L, hi - window.L + 1)}
    return len(roots)


def lattice_span(dist) -> int:
    """gcd of the support; 1 for laws with infinite support (they charge 1)."""
    if not dist.finite:
        return 1
    return int(np.gcd.reduce(dist.atoms))


# -- whole-window vectorized counts ----------------------------------------

def _parent_offsets(forest: FamilyForest):
    poff = forest.parent - forest.L
    inside = poff < forest.window.length
    return poff, inside


def descendant_counts(forest: FamilyForest, depth: int):
    """``d_j(x) = |D_j(x)|`` for every node and ``j <= depth``.

    Returns ``(counts, valid)``, each of shape ``(depth + 1, size)``;
    ``valid[j, x]`` is False when the count would need children of a node
    left of the guard.
    """
    size = forest.window.length
    poff, inside = _parent_offsets(forest)
    below = (np.arange(size) + forest.L) < forest.guard
    counts = np.zeros((depth + 1, size), dtype=np.int64)
    invalid = np.zeros((depth + 1, size), dtype=bool)
    counts[0] = 1
    for j in range(1, depth + 1):
        counts[j] = np.bincount(poff[inside], weights=counts[j - 1][inside], minlength=size)
        bad = np.bincount(poff[inside], weights=invalid[j - 1][inside], minlength=size) > 0
        invalid[j] = below | bad
    return counts, ~invalid


def ephemeral_counts(forest: FamilyForest, depth: int):
    """``d^e_j(x)``: depth-``j`` descendants reached through ephemeral children only.

    Every descendant of an ephemeral node is ephemeral, so this is the sum
    of ``d_{j-1}`` over the ephemeral children.  Same ``(counts, valid)``
    layout as :func:`descendant_counts`.
    """
    size = forest.window.length
    d, dvalid = descendant_counts(forest, max(depth - 1, 0))
    poff, inside = _parent_offsets(forest)
    lab = forest.labels
    below = (np.arange(size) + forest.L) < forest.guard
    eph = inside & (lab == EPHEMERAL)
    unknown_child = np.bincount(poff[inside], weights=(lab[inside] == UNKNOWN), minlength=size) > 0
    counts = np.zeros((depth + 1, size), dtype=np.int64)
    valid = np.zeros((depth + 1, size), dtype=bool)
    counts[0] = 1
    valid[0] = True
    for j in range(1, depth + 1):
        counts[j] = np.bincount(poff[eph], weights=d[j - 1][eph], minlength=size)
        bad = np.bincount(poff[eph], weights=~dvalid[j - 1][eph], minlength=size) > 0
        valid[j] = ~(below | bad | unknown_child)
    return counts, valid


def ephemeral_assignment(forest: FamilyForest):
    """First successful ancestor of every ephemeral node and its distance.

    Returns ``(root, depth)`` as absolute node indices and step counts;
    ``root`` is -1 (and ``depth`` 0) where the node is not ephemeral or its
    orbit leaves the window before meeting the successful path.
    """
    size = forest.window.length
    poff = (forest.parent - forest.L).tolist()
    lab = forest.labels.tolist()
    root = [-1] * size
    dep = [0] * size
    for i in range(size - 1, -1, -1):
        if lab[i] != EPHEMERAL:
            continue
        p = poff[i]
        if p >= size:
            continue
        if lab[p] == SUCCESSFUL:
            root[i] = p
            dep[i] = 1
        elif root[p] >= 0:
            root[i] = root[p]
            dep[i] = dep[p] + 1
    root = np.array(root, dtype=np.int64)
    has = root >= 0
    root[has] += forest.L
    return root, np.array(dep, dtype=np.int64)


def cousin_roots(forest: FamilyForest, assignment=None) -> np.ndarray:
    """Successful node whose foil contains each ephemeral node (-1 if unresolved).

    An ephemeral ``m`` first meets the successful path at ``f^d(m) = k_t``;
    it then shares its ``d``-th ancestor with ``k_{t-d}``, so ``m`` belongs
    to the foil of that successful node.
    """
    root, dep = assignment if assignment is not None else ephemeral_assignment(forest)
    succ = forest.successful
    out = np.full(root.shape, -1, dtype=np.int64)
    has = root >= 0
    t = np.searchsorted(succ, root[has]) - dep[has]
    ok = t >= 0
    idx = np.flatnonzero(has)[ok]
    out[idx] = succ[t[ok]]
    return out
