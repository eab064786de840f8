"""Discrete distributions, sampling oracles and clustering instances.

Symbols of a domain of size ``n`` are the integers ``0 .. n-1``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

NORMALIZATION_TOL = 1e-9


class DomainMismatch(ValueError):
    pass


class Pmf:
    """Immutable probability mass function over ``{0, ..., n-1}``.

    Probabilities that sum to one within ``NORMALIZATION_TOL`` are
    renormalized; anything else (or a negative entry) raises ``ValueError``.
    """

    __slots__ = ("probs", "__dict__")

    def __init__(self, probs: Sequence[float] | np.ndarray):
        p = np.array(probs, dtype=float).ravel()
        if p.size == 0:
            raise ValueError("a Pmf needs at least one symbol")
        if not np.all(np.isfinite(p)):
            raise ValueError("probabilities must be finite")
        if np.any(p < 0):
            raise ValueError("probabilities must be non-negative")
        total = p.sum()
        if abs(total - 1.0) > NORMALIZATION_TOL:
            raise ValueError(f"probabilities sum to {total!r}, not 1")
        if abs(total - 1.0) > 1e-12:
            # dividing an already-normalized vector again would drift by an ulp per round trip
            p = p / total
        p.setflags(write=False)
        self.probs = p

    @property
    def n(self) -> int:
        return self.probs.size

    @classmethod
    def uniform(cls, n: int) -> "Pmf":
        if n < 1:
            raise ValueError("n must be positive")
        return cls(np.full(n, 1.0 / n))

    @classmethod
    def point_mass(cls, n: int, x: int) -> "Pmf":
        p = np.zeros(n)
        p[x] = 1.0
        return cls(p)

    @classmethod
    def random(cls, n: int, rng: np.random.Generator, concentration: float = 1.0) -> "Pmf":
        """Dirichlet(concentration) draw, used for generic test instances."""
        return cls(rng.dirichlet(np.full(n, concentration)))

    def __len__(self) -> int:
        return self.n

    def __getitem__(self, x):
        return self.probs[x]

    def __eq__(self, other) -> bool:
        if not isinstance(other, Pmf):
            return NotImplemented
        return self.n == other.n and bool(np.array_equal(self.probs, other.probs))

    def __hash__(self):
        return hash(self.probs.tobytes())

    def __repr__(self) -> str:
        if self.n <= 8:
            return f"Pmf({self.probs.tolist()})"
        return f"Pmf(n={self.n})"

    def mass(self, mask: np.ndarray) -> float:
        """D(S) for a boolean membership mask ``S``."""
        return float(self.probs[np.asarray(mask, dtype=bool)].sum())

    def l2_norm_sq(self) -> float:
        return float(np.dot(self.probs, self.probs))

    @cached_property
    def alias_table(self) -> tuple[np.ndarray, np.ndarray]:
        return build_alias_table(self.probs)

    def to_json(self) -> str:
        return json.dumps(self.probs.tolist())

    @classmethod
    def from_json(cls, text: str) -> "Pmf":
        return cls(json.loads(text))


def build_alias_table(probs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vose's alias method: returns (acceptance, alias) arrays of length n.

    Draw ``i`` uniformly, keep it with probability ``acceptance[i]``,
    otherwise emit ``alias[i]``.
    """
    n = probs.size
    scaled = probs * n
    acceptance = np.ones(n)
    alias = np.arange(n)
    if np.all(np.abs(scaled - 1.0) <= 1e-12):
        return acceptance, alias
    small = [i for i in range(n) if scaled[i] < 1.0]
    large = [i for i in range(n) if scaled[i] >= 1.0]
    while small and large:
        s = small.pop()
        g = large.pop()
        acceptance[s] = scaled[s]
        alias[s] = g
        scaled[g] = (scaled[g] + scaled[s]) - 1.0
        if scaled[g] < 1.0:
            small.append(g)
        else:
            large.append(g)
    # leftovers are 1 up to rounding
    for i in small + large:
        acceptance[i] = 1.0
        alias[i] = i
    return acceptance, alias


def alias_draw(table: tuple[np.ndarray, np.ndarray], size: int, rng: np.random.Generator) -> np.ndarray:
    acceptance, alias = table
    i = rng.integers(0, acceptance.size, size=size)
    keep = rng.random(size) < acceptance[i]
    return np.where(keep, i, alias[i])


def tv_distance(p: Pmf, q: Pmf) -> float:
    if p.n != q.n:
        raise DomainMismatch(f"domain sizes differ: {p.n} vs {q.n}")
    return 0.5 * float(np.abs(p.probs - q.probs).sum())


def scheffe_set(p: Pmf, q: Pmf) -> tuple[np.ndarray, float, float]:
    """Scheffe set ``{x : p(x) > q(x)}`` as a mask, with ``q(S)`` and ``p(S)``.

    ``p(S) - q(S)`` equals ``tv_distance(p, q)``.
    """
    if p.n != q.n:
        raise DomainMismatch(f"domain sizes differ: {p.n} vs {q.n}")
    mask = p.probs > q.probs
    diff = p.probs - q.probs
    p1 = float(p.probs[mask].sum())
    # summing the differences keeps p1 - p0 equal to tv to rounding
    p0 = p1 - float(diff[mask].sum())
    return mask, p0, p1


def make_paninski(n: int, eps: float, seed=None) -> Pmf:
    """Perturbed uniform: ``(1+2eps)/n`` on a random half of the domain and
    ``(1-2eps)/n`` on the other half, so its TV distance to uniform is ``eps``."""
    if n < 2 or n % 2:
        raise ValueError("n must be a positive even integer")
    if not 0 < eps <= 0.5:
        raise ValueError("eps must lie in (0, 1/2]")
    rng = np.random.default_rng(seed)
    heavy = rng.permutation(n)[: n // 2]
    p = np.full(n, (1.0 - 2.0 * eps) / n)
    p[heavy] = (1.0 + 2.0 * eps) / n
    return Pmf(p)


def make_tilted(q: Pmf, eps: float, seed=None, max_tries: int = 100) -> Pmf:
    """A pmf at TV distance exactly ``eps`` from ``q``.

    A random half ``A`` of the domain is scaled up by ``1 + eps/q(A)`` and the
    rest down by ``1 - eps/q(B)``; needs ``q(A), q(B) >= eps``.
    """
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    for _ in range(max_tries):
        up = np.zeros(q.n, dtype=bool)
        up[rng.permutation(q.n)[: max(1, q.n // 2)]] = True
        qa = q.probs[up].sum()
        qb = 1.0 - qa
        if qa >= eps and qb >= eps:
            p = np.where(up, q.probs * (1 + eps / qa), q.probs * (1 - eps / qb))
            return Pmf(np.clip(p, 0.0, None))
    raise ValueError("could not find a split with enough mass on both sides")


class SampleOracle:
    """Draw-only access to a hidden pmf, with an exact count of samples served.

    Single-owner: the generator state and the ledger are mutated by every draw.
    """

    def __init__(self, pmf: Pmf, rng: np.random.Generator | int | None = None):
        self._pmf = pmf
        self.rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
        self.ledger = 0

    @property
    def n(self) -> int:
        return self._pmf.n

    def sample(self, size: int) -> np.ndarray:
        size = int(size)
        if size < 0:
            raise ValueError("size must be non-negative")
        self.ledger += size
        if size == 0:
            return np.empty(0, dtype=np.int64)
        return alias_draw(self._pmf.alias_table, size, self.rng)

    def sample_poissonized(self, mean: float) -> np.ndarray:
        """Draw ``Poisson(mean)`` samples; the count comes from this oracle's stream."""
        return self.sample(self.rng.poisson(mean))

    def counts(self, size: int) -> np.ndarray:
        return np.bincount(self.sample(size), minlength=self.n)

    def __repr__(self) -> str:
        return f"SampleOracle(n={self.n}, ledger={self.ledger})"


def oracle_seed(seed, index: int) -> np.random.SeedSequence:
    """Independent substream for oracle ``index`` under master ``seed``."""
    if isinstance(seed, np.random.SeedSequence):
        return np.random.SeedSequence(seed.entropy, spawn_key=seed.spawn_key + (index,))
    return np.random.SeedSequence(seed, spawn_key=(index,))


@dataclass
class BudgetLedger:
    per_oracle: list[int]

    @property
    def total(self) -> int:
        return int(sum(self.per_oracle))


@dataclass
class ClusterInstance:
    """k oracles hiding two pmfs; ``hidden_partition`` holds the indices given ``q``."""

    oracles: list[SampleOracle]
    hidden_partition: frozenset[int]
    n: int
    k: int
    r: int
    eps: float
    p: Pmf = field(repr=False)
    q: Pmf = field(repr=False)
    rounds: int = 0

    def begin_round(self) -> None:
        """Mark the start of a new adaptive sampling batch."""
        self.rounds += 1

    def ledger(self) -> BudgetLedger:
        return BudgetLedger([o.ledger for o in self.oracles])

    def truth_labels(self) -> np.ndarray:
        labels = np.zeros(self.k, dtype=bool)
        labels[list(self.hidden_partition)] = True
        return labels

    def is_correct(self, partition) -> bool:
        """Unordered comparison: either side of ``partition`` may match ``I``."""
        labels = np.asarray(partition.side_of) == "A"
        truth = self.truth_labels()
        return bool(np.array_equal(labels, truth) or np.array_equal(labels, ~truth))


def make_instance(n: int, k: int, r: int, p: Pmf, q: Pmf, seed=None, eps: float | None = None) -> ClusterInstance:
    """Give ``q`` to a uniformly random size-``r`` subset and ``p`` to the rest."""
    if p.n != n or q.n != n:
        raise DomainMismatch("pmfs do not live on a domain of size n")
    if not 1 <= r <= k - 1:
        raise ValueError(f"r must satisfy 1 <= r <= k-1, got r={r}, k={k}")
    dist = tv_distance(p, q)
    if eps is None:
        eps = dist
    elif dist < eps - 1e-12:
        raise ValueError(f"tv(p, q) = {dist} is below eps = {eps}")
    root = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    part_rng = np.random.default_rng(oracle_seed(root, k))
    chosen = frozenset(int(i) for i in part_rng.choice(k, size=r, replace=False))
    oracles = [
        SampleOracle(q if i in chosen else p, np.random.default_rng(oracle_seed(root, i)))
        for i in range(k)
    ]
    return ClusterInstance(oracles, chosen, n, k, r, float(eps), p, q)
