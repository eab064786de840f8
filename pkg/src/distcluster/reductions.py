"""Stochastic channels: identity-to-uniformity reduction and flattening.

A ``Channel`` maps an input symbol ``x`` to an output symbol in two steps:

1. with probability ``mix_weight`` replace ``x`` by a fresh draw from the
   explicit ``mix_pmf`` (skipped when ``mix_weight == 0``);
2. pick one of the row's blocks with the block weights and emit a uniform
   symbol from that block's contiguous output range.

Every row used here is a mixture of at most two uniform ranges, so rows are
stored as small dense ``(in_n, B)`` arrays and both sampling and exact
pushforward are vectorized.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .core import DomainMismatch, Pmf, SampleOracle, alias_draw


@dataclass(frozen=True, eq=False)
class Channel:
    in_n: int
    out_n: int
    block_start: np.ndarray
    block_len: np.ndarray
    block_weight: np.ndarray
    mix_weight: float = 0.0
    mix_pmf: Pmf | None = None

    def __post_init__(self):
        w = self.block_weight
        if w.shape != self.block_start.shape or w.shape != self.block_len.shape:
            raise ValueError("block arrays must share a shape")
        if w.shape[0] != self.in_n:
            raise ValueError("one row of blocks per input symbol")
        if np.any(np.abs(w.sum(axis=1) - 1.0) > 1e-9) or np.any(w < 0):
            raise ValueError("block weights must form a distribution per row")
        used = w > 0
        if np.any(self.block_len[used] < 1):
            raise ValueError("blocks with positive weight need positive length")
        if np.any(self.block_start[used] + self.block_len[used] > self.out_n):
            raise ValueError("block exceeds the output domain")
        if self.mix_weight and (self.mix_pmf is None or self.mix_pmf.n != self.in_n):
            raise ValueError("mixing needs a pmf over the input domain")
        for arr in (self.block_start, self.block_len, self.block_weight):
            arr.setflags(write=False)

    @cached_property
    def _first_weight(self) -> np.ndarray:
        return np.ascontiguousarray(self.block_weight[:, 0])

    @cached_property
    def _flat_start(self) -> np.ndarray:
        return self.block_start.ravel()

    @cached_property
    def _flat_len(self) -> np.ndarray:
        return self.block_len.ravel()

    @property
    def n_blocks(self) -> int:
        return self.block_weight.shape[1]

    def _spread(self, p: np.ndarray) -> np.ndarray:
        diff = np.zeros(self.out_n + 1)
        used = self.block_weight > 0
        vals = (p[:, None] * self.block_weight)[used] / self.block_len[used]
        starts = self.block_start[used]
        np.add.at(diff, starts, vals)
        np.add.at(diff, starts + self.block_len[used], -vals)
        return np.cumsum(diff[:-1])

    def row(self, x: int) -> Pmf:
        """Output distribution for input symbol ``x`` (dense; for tests and debugging)."""
        e = np.zeros(self.in_n)
        e[x] = 1.0
        return pushforward(self, Pmf(e))

    def spread_rows(self, x: int) -> dict[int, float]:
        """Sparse row of the spreading step alone."""
        out: dict[int, float] = {}
        for b in range(self.n_blocks):
            w = float(self.block_weight[x, b])
            if w <= 0:
                continue
            start, length = int(self.block_start[x, b]), int(self.block_len[x, b])
            for y in range(start, start + length):
                out[y] = out.get(y, 0.0) + w / length
        return out

    def map_samples(self, xs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        xs = np.asarray(xs, dtype=np.int64)
        size = xs.size
        if size == 0:
            return xs.copy()
        if self.mix_weight > 0:
            xs = xs.copy()
            swap = rng.random(size) < self.mix_weight
            n_swap = int(swap.sum())
            if n_swap:
                xs[swap] = alias_draw(self.mix_pmf.alias_table, n_swap, rng)
        if self.n_blocks == 1:
            start, length = self.block_start[xs, 0], self.block_len[xs, 0]
            offset = (rng.random(size) * length).astype(np.int64)
            return start + np.minimum(offset, length - 1)
        if self.n_blocks == 2:
            # weights sum to one, so a zero-weight block is never selected here
            idx = 2 * xs + (rng.random(size) >= self._first_weight[xs])
            length = self._flat_len[idx]
            offset = (rng.random(size) * length).astype(np.int64)
            return self._flat_start[idx] + np.minimum(offset, length - 1)
        cum = np.cumsum(self.block_weight, axis=1)[xs]
        u = rng.random(size)
        b = np.minimum((u[:, None] >= cum).sum(axis=1), self.n_blocks - 1)
        # rounding in cum can select a zero-weight block; fall back to block 0
        dead = self.block_weight[xs, b] <= 0
        b[dead] = 0
        length = self.block_len[xs, b]
        offset = np.minimum((rng.random(size) * length).astype(np.int64), length - 1)
        return self.block_start[xs, b] + offset

    def to_json(self) -> str:
        """Row-sparse triplets of the spreading step, plus the mixing stage."""
        triplets = [[x, y, w] for x in range(self.in_n) for y, w in self.spread_rows(x).items()]
        return json.dumps(
            {
                "in_n": self.in_n,
                "out_n": self.out_n,
                "mix_weight": self.mix_weight,
                "mix_pmf": None if self.mix_pmf is None else self.mix_pmf.probs.tolist(),
                "triplets": triplets,
            }
        )


def pushforward(w: Channel, p: Pmf) -> Pmf:
    """Exact distribution of the channel output when the input is ``p``."""
    if p.n != w.in_n:
        raise DomainMismatch(f"channel expects n={w.in_n}, got {p.n}")
    probs = p.probs
    if w.mix_weight > 0:
        probs = (1.0 - w.mix_weight) * probs + w.mix_weight * w.mix_pmf.probs
    out = np.clip(w._spread(probs), 0.0, None)
    return Pmf(out)


def build_identity_channel(q: Pmf) -> Channel:
    """Channel over ``6n`` outputs that sends ``q`` exactly to uniform.

    Inputs are first mixed half-and-half with uniform, so the mixed pmf ``q'``
    has ``q'(x) >= 1/(2n)``. Symbol ``x`` owns ``m_x = floor(6n q'(x)) >= 3``
    dedicated outputs; it lands on them with probability ``m_x / (6n q'(x))``
    and otherwise on the shared overflow range covering the remaining outputs.
    TV distances to ``q`` shrink by at most a factor of 3.
    """
    n = q.n
    big_n = 6 * n
    uniform = Pmf.uniform(n)
    mixed = 0.5 * (q.probs + uniform.probs)
    scaled = big_n * mixed
    # a relative guard keeps exact integers (q = U_n gives 6 buckets each) from
    # rounding down; rounding up by at most 1e-12 moves bucket mass by <= 1e-12/(6n)
    m = np.floor(scaled * (1 + 1e-12)).astype(np.int64)
    m = np.maximum(m, 1)
    if m.sum() > big_n:
        raise ArithmeticError("bucket allocation overflowed the output domain")
    stay = np.minimum(1.0, m / scaled)
    overflow_start = int(m.sum())
    overflow_len = big_n - overflow_start
    if overflow_len == 0:
        stay = np.ones(n)
    starts = np.empty((n, 2), dtype=np.int64)
    lens = np.empty((n, 2), dtype=np.int64)
    weights = np.empty((n, 2))
    starts[:, 0] = np.concatenate(([0], np.cumsum(m)[:-1]))
    lens[:, 0] = m
    weights[:, 0] = stay
    starts[:, 1] = overflow_start
    lens[:, 1] = max(overflow_len, 1)
    weights[:, 1] = 1.0 - stay
    return Channel(n, big_n, starts, lens, weights, mix_weight=0.5, mix_pmf=uniform)


@dataclass(frozen=True, eq=False)
class FlattenSketch:
    """Multiplicities ``a_x`` of a sample multiset over ``[n]``."""

    counts: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.counts, dtype=np.int64)
        if np.any(c < 0):
            raise ValueError("counts must be non-negative")
        object.__setattr__(self, "counts", c)

    @classmethod
    def from_samples(cls, samples: np.ndarray, n: int) -> "FlattenSketch":
        return cls(np.bincount(np.asarray(samples, dtype=np.int64), minlength=n))

    @classmethod
    def empty(cls, n: int) -> "FlattenSketch":
        return cls(np.zeros(n, dtype=np.int64))

    @property
    def size(self) -> int:
        return int(self.counts.sum())


def build_flatten_channel(sketch: FlattenSketch, n: int) -> Channel:
    """Send ``x`` uniformly to its own ``a_x + 1`` contiguous buckets."""
    counts = sketch.counts
    if counts.size != n:
        raise DomainMismatch(f"sketch has {counts.size} symbols, expected {n}")
    lens = (counts + 1).reshape(n, 1)
    starts = np.concatenate(([0], np.cumsum(lens[:, 0])[:-1])).reshape(n, 1)
    return Channel(n, n + sketch.size, starts, lens, np.ones((n, 1)))


def flatten_weights(w: Channel) -> np.ndarray:
    """Squared row norms ``1/(a_x + 1)`` of a flattening channel."""
    if w.n_blocks != 1 or w.mix_weight:
        raise ValueError("not a flattening channel")
    return 1.0 / w.block_len[:, 0]


class TransformedOracle(SampleOracle):
    """Oracle emitting ``y ~ row_x`` for each ``x`` drawn from an inner oracle."""

    def __init__(self, inner: SampleOracle, channel: Channel):
        if inner.n != channel.in_n:
            raise DomainMismatch(f"oracle domain {inner.n} != channel input {channel.in_n}")
        self.inner = inner
        self.channel = channel
        self.rng = inner.rng
        self.ledger = 0

    @property
    def n(self) -> int:
        return self.channel.out_n

    def sample(self, size: int) -> np.ndarray:
        xs = self.inner.sample(size)
        self.ledger += int(size)
        return self.channel.map_samples(xs, self.rng)

    def __repr__(self) -> str:
        return f"TransformedOracle(n={self.n}, inner={self.inner!r})"


def transform_oracle(o: SampleOracle, w: Channel) -> TransformedOracle:
    return TransformedOracle(o, w)
