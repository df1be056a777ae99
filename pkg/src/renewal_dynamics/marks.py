"""Mark (lifespan) distributions and counter-based per-index sampling.

A mark ``a_n`` is the lifespan of the individual born at ``n``; its death
time ``n + a_n`` is also its parent in the family tree.  Every distribution
here lives on the positive integers and has a finite mean.

Sampling is a pure function of ``(seed, index)``: the uniform behind
``a_n`` is the SplitMix64 output at position ``n`` of a stream keyed by the
seed and a purpose tag, so windows can be extended in either direction
without disturbing marks that were already drawn.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
from scipy import special

__all__ = [
    "DistributionError",
    "MarkDistribution",
    "SeedSpec",
    "make_distribution",
    "parse_distribution",
    "tail_mass",
    "sample_mark",
    "sample_marks",
    "uniforms",
]

KINDS = ("constant", "twopoint", "geometric", "zeta", "empirical")

_PMF_TOL = 1e-12
_RENORM_TOL = 1e-9


class DistributionError(ValueError):
    """A distribution description violates a standing assumption."""


@dataclass(frozen=True)
class MarkDistribution:
    """Law of a single mark.

    Finite-support laws (constant, two-point, empirical, capped zeta) keep
    an explicit ``atoms``/``probs`` table.  Geometric and uncapped zeta are
    handled in closed form.
    """

    kind: str
    params: tuple
    atoms: np.ndarray | None = field(default=None, repr=False, compare=False)
    probs: np.ndarray | None = field(default=None, repr=False, compare=False)
    mean: float = 0.0
    p1: float = 0.0
    min_support: int = 1

    # -- pmf / survival -------------------------------------------------
    @property
    def finite(self) -> bool:
        return self.atoms is not None

    @property
    def max_support(self) -> float:
        return float(self.atoms[-1]) if self.finite else math.inf

    def pmf(self, k):
        k = np.asarray(k, dtype=np.int64)
        if self.finite:
            out = np.zeros(k.shape)
            pos = np.searchsorted(self.atoms, k)
            pos = np.clip(pos, 0, len(self.atoms) - 1)
            hit = self.atoms[pos] == k
            out[hit] = self.probs[pos[hit]]
            return out
        if self.kind == "geometric":
            s = self.params[0]
            r = 1.0 - s
            kk = np.maximum(k, 1).astype(float)
            return np.where(k >= 1, s * r ** (kk - 1.0), 0.0)
        alpha = self.params[0]
        kk = np.maximum(k, 1).astype(float)
        return np.where(k >= 1, kk ** (-alpha) / special.zeta(alpha, 1), 0.0)

    def sf(self, k):
        """P[a > k], vectorized over integer ``k``."""
        k = np.asarray(k, dtype=np.int64)
        if self.finite:
            tail = np.concatenate([np.cumsum(self.probs[::-1])[::-1], [0.0]])
            pos = np.searchsorted(self.atoms, k, side="right")
            return np.clip(tail[pos], 0.0, 1.0)
        if self.kind == "geometric":
            r = 1.0 - self.params[0]
            return np.where(k >= 0, r ** np.maximum(k, 0).astype(float), 1.0)
        alpha = self.params[0]
        kk = np.maximum(k, 0).astype(float)
        return np.where(k >= 0, special.zeta(alpha, kk + 1.0) / special.zeta(alpha, 1), 1.0)

    def cdf(self, k):
        return 1.0 - self.sf(k)

    def to_json(self) -> dict:
        if self.kind == "constant":
            return {"kind": "constant", "c": int(self.params[0])}
        if self.kind == "twopoint":
            return {"kind": "twopoint", "p1": self.params[0], "v": int(self.params[1])}
        if self.kind == "geometric":
            return {"kind": "geometric", "s": self.params[0]}
        if self.kind == "zeta":
            out = {"kind": "zeta", "alpha": self.params[0]}
            if self.params[1] is not None:
                out["cap"] = int(self.params[1])
            return out
        return {
            "kind": "empirical",
            "pmf": {str(int(a)): float(p) for a, p in zip(self.atoms, self.probs)},
        }


@dataclass(frozen=True)
class SeedSpec:
    """Seed plus a purpose tag; distinct tags give independent streams."""

    seed: int
    purpose: str = "marks"

    def key(self, salt: int = 0) -> np.uint64:
        h = hashlib.blake2b(digest_size=8)
        h.update(int(self.seed).to_bytes(16, "little", signed=True))
        h.update(self.purpose.encode())
        h.update(int(salt).to_bytes(8, "little", signed=False))
        return np.uint64(int.from_bytes(h.digest(), "little"))


def _table(kind, params, atoms, probs) -> MarkDistribution:
    atoms = np.asarray(atoms, dtype=np.int64)
    probs = np.asarray(probs, dtype=float)
    order = np.argsort(atoms)
    atoms, probs = atoms[order], probs[order]
    keep = probs > 0
    atoms, probs = atoms[keep], probs[keep]
    if atoms.size == 0:
        raise DistributionError("pmf has no positive mass")
    if atoms[0] < 1:
        raise DistributionError(f"support must be within {{1, 2, ...}}, got atom {atoms[0]}")
    if len(np.unique(atoms)) != len(atoms):
        raise DistributionError("duplicate atoms in pmf table")
    return MarkDistribution(
        kind=kind,
        params=tuple(params),
        atoms=atoms,
        probs=probs,
        mean=float(np.dot(atoms, probs)),
        p1=float(probs[0]) if atoms[0] == 1 else 0.0,
        min_support=int(atoms[0]),
    )


def make_distribution(spec: Mapping | str | MarkDistribution) -> MarkDistribution:
    """Build a validated :class:`MarkDistribution`.

    ``spec`` is either a JSON-style mapping such as
    ``{"kind": "geometric", "s": 0.5}`` or the compact string form accepted
    by :func:`parse_distribution` (``"geometric:0.5"``).

    Recognised mappings::

        {"kind": "constant", "c": 2}
        {"kind": "twopoint", "p1": 0.5, "v": 2}
        {"kind": "geometric", "s": 0.5}
        {"kind": "zeta", "alpha": 2.5, "cap": 1000}      # cap optional if alpha > 2
        {"kind": "empirical", "pmf": {"1": 0.5, "2": 0.5}}

    Raises
    ------
    DistributionError
        When a parameter is out of range or the mean would be infinite.
    """
    if isinstance(spec, MarkDistribution):
        return spec
    if isinstance(spec, str):
        return parse_distribution(spec)
    spec = dict(spec)
    kind = spec.get("kind")
    if kind not in KINDS:
        raise DistributionError(f"unknown distribution kind {kind!r}; expected one of {KINDS}")

    if kind == "constant":
        c = int(spec.get("c", 1))
        if c < 1:
            raise DistributionError(f"constant mark must be a positive integer, got {c}")
        return _table("constant", (c,), [c], [1.0])

    if kind == "twopoint":
        p1 = float(spec["p1"])
        v = int(spec["v"])
        if not 0.0 <= p1 <= 1.0:
            raise DistributionError(f"twopoint p1 must be in [0, 1], got {p1}")
        if v < 2:
            raise DistributionError(f"twopoint second atom must be >= 2, got {v}")
        return _table("twopoint", (p1, v), [1, v], [p1, 1.0 - p1])

    if kind == "geometric":
        s = float(spec["s"])
        if not 0.0 < s <= 1.0:
            raise DistributionError(f"geometric success probability must be in (0, 1], got {s}")
        if s == 1.0:
            return _table("geometric", (1.0,), [1], [1.0])
        return MarkDistribution(kind="geometric", params=(s,), mean=1.0 / s, p1=s, min_support=1)

    if kind == "zeta":
        alpha = float(spec["alpha"])
        cap = spec.get("cap")
        if cap is None:
            if alpha <= 2.0:
                raise DistributionError(
                    f"zeta with alpha={alpha} <= 2 has infinite mean; finite mean requires "
                    "alpha > 2 or a cap"
                )
            mean = float(special.zeta(alpha - 1.0, 1) / special.zeta(alpha, 1))
            return MarkDistribution(
                kind="zeta",
                params=(alpha, None),
                mean=mean,
                p1=float(1.0 / special.zeta(alpha, 1)),
                min_support=1,
            )
        cap = int(cap)
        if cap < 1:
            raise DistributionError(f"zeta cap must be >= 1, got {cap}")
        if alpha <= 0.0:
            raise DistributionError(f"zeta exponent must be positive, got {alpha}")
        k = np.arange(1, cap + 1, dtype=float)
        w = k ** (-alpha)
        return _table("zeta", (alpha, cap), k.astype(np.int64), w / w.sum())

    pmf = spec.get("pmf")
    if not pmf:
        raise DistributionError("empirical distribution needs a non-empty 'pmf' table")
    atoms = [int(a) for a in pmf]
    probs = np.array([float(pmf[a]) for a in pmf])
    if np.any(probs < 0):
        raise DistributionError("pmf entries must be nonnegative")
    total = probs.sum()
    if abs(total - 1.0) > _RENORM_TOL:
        raise DistributionError(f"pmf sums to {total!r}, not within {_RENORM_TOL} of 1")
    return _table("empirical", (), atoms, probs / total)


def parse_distribution(text: str) -> MarkDistribution:
    """Parse the CLI form ``kind:params``.

    ``constant:2``, ``geometric:0.5``, ``twopoint:0.5,2`` (mass 0.5 at 1,
    rest at 2), ``zeta:2.5`` or ``zeta:2.5,1000`` (capped) and
    ``empirical:1=0.5,2=0.5``.
    """
    kind, _, rest = text.partition(":")
    kind = kind.strip().lower()
    args = [a.strip() for a in rest.split(",") if a.strip()]
    try:
        if kind == "constant":
            return make_distribution({"kind": kind, "c": int(args[0]) if args else 1})
        if kind == "geometric":
            return make_distribution({"kind": kind, "s": float(args[0])})
        if kind == "twopoint":
            return make_distribution({"kind": kind, "p1": float(args[0]), "v": int(args[1])})
        if kind == "zeta":
            out = {"kind": kind, "alpha": float(args[0])}
            if len(args) > 1:
                out["cap"] = int(args[1])
            return make_distribution(out)
        if kind == "empirical":
            pmf = {}
            for item in args:
                a, _, p = item.partition("=")
                pmf[a] = float(p)
            return make_distribution({"kind": kind, "pmf": pmf})
    except (IndexError, ValueError) as exc:
        if isinstance(exc, DistributionError):
            raise
        raise DistributionError(f"cannot parse distribution {text!r}: {exc}") from None
    raise DistributionError(f"unknown distribution kind {kind!r}; expected one of {KINDS}")


def tail_mass(dist: MarkDistribution, B: int) -> float:
    """Return ``sum_{j > B} P[a > j]`` which equals ``E[(a - B - 1)^+]``.

    This is the probability budget for any lifespan started left of a
    window edge reaching past ``B`` further steps.
    """
    if B < 0:
        raise ValueError("B must be nonnegative")
    if dist.finite:
        excess = np.maximum(dist.atoms - (B + 1), 0)
        return float(np.dot(excess, dist.probs))
    if dist.kind == "geometric":
        r = 1.0 - dist.params[0]
        return r ** (B + 1) / (1.0 - r)
    alpha = dist.params[0]
    q = float(B + 2)
    z = special.zeta(alpha, 1)
    val = (special.zeta(alpha - 1.0, q) - (B + 1) * special.zeta(alpha, q)) / z
    return float(max(val, 0.0))


# -- counter-based uniforms ------------------------------------------------

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


def _splitmix(key: np.uint64, index: np.ndarray) -> np.ndarray:
    # SplitMix64 output number index+1 of the stream seeded with ``key``
    with np.errstate(over="ignore"):
        z = key + (index.astype(np.int64).view(np.uint64) + np.uint64(1)) * _GOLDEN
        z = (z ^ (z >> np.uint64(30))) * _M1
        z = (z ^ (z >> np.uint64(27))) * _M2
        return z ^ (z >> np.uint64(31))


def uniforms(seed: SeedSpec, index, salt: int = 0) -> np.ndarray:
    """Uniform(0, 1) variates, one per index, pure in ``(seed, salt, index)``."""
    idx = np.atleast_1d(np.asarray(index, dtype=np.int64))
    bits = _splitmix(seed.key(salt), idx) >> np.uint64(11)
    return (bits.astype(float) + 0.5) * 2.0**-53


def _zeta_devroye(alpha: float, seed: SeedSpec, idx: np.ndarray) -> np.ndarray:
    # rejection sampler for the Zipf law, Devroye (1986) X.6
    out = np.zeros(idx.shape, dtype=np.int64)
    todo = np.arange(idx.size)
    b = 2.0 ** (alpha - 1.0)
    attempt = 0
    while todo.size:
        u = uniforms(seed, idx[todo], salt=2 * attempt + 1)
        v = uniforms(seed, idx[todo], salt=2 * attempt + 2)
        x = np.floor(u ** (-1.0 / (alpha - 1.0)))
        x = np.minimum(x, 2.0**62)
        t = (1.0 + 1.0 / x) ** (alpha - 1.0)
        ok = v * x * (t - 1.0) / (b - 1.0) <= t / b
        out[todo[ok]] = x[ok].astype(np.int64)
        todo = todo[~ok]
        attempt += 1
    return out


def sample_marks(dist: MarkDistribution, seed: SeedSpec, index) -> np.ndarray:
    """Marks for every entry of ``index`` (vectorized :func:`sample_mark`)."""
    idx = np.atleast_1d(np.asarray(index, dtype=np.int64))
    if dist.finite:
        if dist.atoms.size == 1:
            return np.full(idx.shape, dist.atoms[0], dtype=np.int64)
        u = uniforms(seed, idx)
        cdf = np.cumsum(dist.probs)
        cdf[-1] = 1.0
        pos = np.searchsorted(cdf, u, side="right")
        return dist.atoms[np.minimum(pos, dist.atoms.size - 1)]
    if dist.kind == "geometric":
        u = uniforms(seed, idx)
        r = 1.0 - dist.params[0]
        a = np.ceil(np.log(u) / math.log(r))
        return np.maximum(a, 1.0).astype(np.int64)
    return _zeta_devroye(dist.params[0], seed, idx)


def sample_mark(dist: MarkDistribution, seed: SeedSpec, index: int) -> int:
    return int(sample_marks(dist, seed, [index])[0])
