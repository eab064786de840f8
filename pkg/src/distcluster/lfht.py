"""Likelihood-free hypothesis testing and the MultiLFHT batch classifier."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .constants import DEFAULT, Constants
from .esw import log_k
from .reductions import FlattenSketch, build_flatten_channel, flatten_weights, transform_oracle
from .testers import amplification_reps


class Regime(enum.Enum):
    LARGE_N = "LargeN"
    MID_N = "MidN"
    SMALL_N = "SmallN"


class Label(enum.Enum):
    P = "P"
    Q = "Q"


@dataclass(frozen=True)
class LfhtBudget:
    s1: int
    s2: int
    regime: Regime


def lfht_regime(n: int, k: int, eps: float) -> Regime:
    klk = k * log_k(k)
    if n >= klk / eps**4:
        return Regime.LARGE_N
    if n >= klk:
        return Regime.MID_N
    return Regime.SMALL_N


def lfht_budget(n: int, k: int, eps: float, constants: Constants = DEFAULT) -> LfhtBudget:
    """Sketch size ``s1`` per exemplar and ``s2`` per classified target."""
    if n < 1 or k < 1 or not 0 < eps <= 1:
        raise ValueError("need n, k >= 1 and eps in (0, 1]")
    c = constants.C_lfht
    lk = log_k(k)
    regime = lfht_regime(n, k, eps)
    if regime is Regime.LARGE_N:
        s1 = c * (n**2 * k * lk / eps**4) ** (1 / 3)
        s2 = c * (n**2 * lk / (k**2 * eps**4)) ** (1 / 3)
    elif regime is Regime.MID_N:
        s1 = c * math.sqrt(n * k * lk) / eps**2
        s2 = c * math.sqrt(n * lk / k) / eps**2
    else:
        s1 = c * k * lk / eps**2
        s2 = c * lk / eps**2
    return LfhtBudget(max(1, math.ceil(s1)), max(1, math.ceil(s2)), regime)


def _unbiased_norm_sq(counts: np.ndarray, weights: np.ndarray) -> float:
    m = counts.sum()
    if m < 2:
        return 0.0
    return float(np.dot(counts * (counts - 1.0), weights) / (m * (m - 1.0)))


class LfhtSketches:
    """Sketches of ``P`` and ``Q`` prepared for the flattened LFHT statistic.

    The first half of each sketch flattens the domain; the second halves give
    the empirical pmfs being compared. Swapping the two sketches negates every
    statistic computed from the same target draws.
    """

    def __init__(self, sample_p: np.ndarray, sample_q: np.ndarray, n: int):
        sample_p = np.asarray(sample_p, dtype=np.int64)
        sample_q = np.asarray(sample_q, dtype=np.int64)
        hp, hq = sample_p.size // 2, sample_q.size // 2
        flat = FlattenSketch.from_samples(np.concatenate([sample_p[:hp], sample_q[:hq]]), n)
        self.channel = build_flatten_channel(flat, n)
        weights = flatten_weights(self.channel)
        xp = np.bincount(sample_p[hp:], minlength=n).astype(float)
        xq = np.bincount(sample_q[hq:], minlength=n).astype(float)
        p_hat = xp / max(xp.sum(), 1.0)
        q_hat = xq / max(xq.sum(), 1.0)
        # flattened (p_hat - q_hat), constant across each symbol's buckets
        self.direction = np.repeat((p_hat - q_hat) * weights, self.channel.block_len[:, 0])
        self.half_norm_gap = 0.5 * (_unbiased_norm_sq(xp, weights) - _unbiased_norm_sq(xq, weights))

    def statistic(self, od, s2: int) -> float:
        """``sum_y N_y (P_hat - Q_hat)_y - s2 (||P||^2 - ||Q||^2)/2`` on the flattened domain.

        Its mean is ``s2/2 (||D - Q||^2 - ||D - P||^2)``: positive for ``D = P``.
        """
        ys = transform_oracle(od, self.channel).sample(s2)
        return float(self.direction[ys].sum()) - s2 * self.half_norm_gap


def lfht_classify(sketch_p, sketch_q, od, s2: int, eps: float, delta: float,
                  repetitions: int | None = 1) -> Label:
    """Decide whether ``od`` hides ``P`` or ``Q`` from raw sketch draws of each.

    With ``repetitions=None`` the sketches and the ``s2`` target draws are
    split into ``ceil(18 log(1/delta))`` parts and the median statistic is
    used; the default single pass relies on ``s1, s2`` already carrying the
    ``log(1/delta)`` factor.
    """
    sketch_p = np.asarray(sketch_p, dtype=np.int64)
    sketch_q = np.asarray(sketch_q, dtype=np.int64)
    n = od.n
    reps = amplification_reps(delta) if repetitions is None else int(repetitions)
    reps = max(1, min(reps, s2, sketch_p.size // 2 or 1, sketch_q.size // 2 or 1))
    if reps == 1:
        t = LfhtSketches(sketch_p, sketch_q, n).statistic(od, s2)
    else:
        parts_p = np.array_split(sketch_p, reps)
        parts_q = np.array_split(sketch_q, reps)
        sizes = [len(c) for c in np.array_split(np.arange(s2), reps)]
        t = float(np.median([
            LfhtSketches(a, b, n).statistic(od, m) for a, b, m in zip(parts_p, parts_q, sizes)
        ]))
    return Label.Q if t < 0 else Label.P


def multi_lfht(op, oq, targets, n: int, k: int, eps: float,
               constants: Constants = DEFAULT) -> list[Label]:
    """Label every target as ``P`` or ``Q`` from one shared pair of sketches.

    Draws exactly ``s1`` from each exemplar and ``s2`` from each target, with
    ``(s1, s2) = lfht_budget(n, k, eps)``.
    """
    budget = lfht_budget(n, k, eps, constants)
    sketches = LfhtSketches(op.sample(budget.s1), oq.sample(budget.s1), n)
    return [Label.Q if sketches.statistic(t, budget.s2) < 0 else Label.P for t in targets]
