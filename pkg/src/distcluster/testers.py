"""Base hypothesis tests: collision uniformity, l2 closeness, Bernoulli gap."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .constants import DEFAULT, Constants


class Decision(enum.Enum):
    ACCEPT = "accept"
    REJECT = "reject"
    LOW = "low"
    HIGH = "high"


@dataclass(frozen=True)
class TestVerdict:
    decision: Decision
    samples_used: tuple[int, ...]
    votes: int = 0
    repetitions: int = 1

    __test__ = False  # keep pytest from collecting this class

    @property
    def rejected(self) -> bool:
        return self.decision is Decision.REJECT


def amplification_reps(delta: float) -> int:
    """Majority-vote repetitions taking a 2/3-correct test to error ``delta``."""
    return max(1, math.ceil(18.0 * math.log(1.0 / delta)))


def _check_eps_delta(eps, delta):
    if not 0 < eps <= 1:
        raise ValueError(f"eps must lie in (0, 1], got {eps}")
    if not 0 < delta < 0.5:
        raise ValueError(f"delta must lie in (0, 1/2), got {delta}")


def _per_rep_sums(rep_ids: np.ndarray, symbols: np.ndarray, n: int, reps: int) -> np.ndarray:
    """Sum of C(N_x, 2) over symbols, separately for each repetition."""
    if symbols.size == 0:
        return np.zeros(reps, dtype=np.int64)
    keys = rep_ids.astype(np.int64) * n + symbols
    uniq, cnt = np.unique(keys, return_counts=True)
    pairs = cnt * (cnt - 1) // 2
    return np.bincount(uniq // n, weights=pairs, minlength=reps).astype(np.int64)


def collision_counts(samples: np.ndarray, n: int) -> np.ndarray:
    """Pairwise collisions in each row of a ``(reps, m)`` sample array."""
    reps, m = samples.shape
    rep_ids = np.repeat(np.arange(reps), m)
    return _per_rep_sums(rep_ids, samples.ravel(), n, reps)


def uniformity_test(o, n: int, eps: float, delta: float, constants: Constants = DEFAULT,
                    repetitions: int | None = None) -> TestVerdict:
    """Collision tester for ``o == U_n`` versus ``tv(o, U_n) >= eps``.

    Each repetition counts colliding pairs among ``C_u sqrt(n)/eps^2`` draws
    and rejects above the midpoint of the two collision rates ``1/n`` and
    ``(1 + 4 eps^2)/n``; the verdict is a majority over repetitions.
    """
    _check_eps_delta(eps, delta)
    if n == 1:
        return TestVerdict(Decision.ACCEPT, (0,))
    reps = repetitions or amplification_reps(delta)
    m = max(2, math.ceil(constants.C_u * math.sqrt(n) / eps**2))
    before = o.ledger
    draws = o.sample(reps * m).reshape(reps, m)
    coll = collision_counts(draws, n)
    threshold = m * (m - 1) / 2.0 * (1.0 + 2.0 * eps**2) / n
    votes = int((coll > threshold).sum())
    decision = Decision.REJECT if 2 * votes > reps else Decision.ACCEPT
    return TestVerdict(decision, (o.ledger - before,), votes, reps)


def _poissonized_batch(o, mean: float, reps: int) -> tuple[np.ndarray, np.ndarray]:
    sizes = o.rng.poisson(mean, size=reps)
    samples = o.sample(int(sizes.sum()))
    return np.repeat(np.arange(reps), sizes), samples


def l2_statistics(rep_a, xa, rep_b, xb, domain_n: int, reps: int) -> np.ndarray:
    """``Z = sum_x (X_x - Y_x)^2 - X_x - Y_x`` for each repetition."""
    keys_a = rep_a.astype(np.int64) * domain_n + xa
    keys_b = rep_b.astype(np.int64) * domain_n + xb
    keys = np.concatenate([keys_a, keys_b])
    if keys.size == 0:
        return np.zeros(reps)
    uniq, inv = np.unique(keys, return_inverse=True)
    sign = np.concatenate([np.ones(keys_a.size), np.zeros(keys_b.size)])
    x = np.bincount(inv, weights=sign, minlength=uniq.size)
    y = np.bincount(inv, minlength=uniq.size) - x
    per_key = (x - y) ** 2 - x - y
    return np.bincount(uniq // domain_n, weights=per_key, minlength=reps)


def l2_closeness_test(oa, ob, domain_n: int, eps: float, delta: float, b: float,
                      constants: Constants = DEFAULT, repetitions: int | None = None) -> TestVerdict:
    """Poissonized l2 closeness test for ``tv = 0`` versus ``tv >= eps``.

    Requires ``b >= min(||a||_2, ||b||_2)``; each repetition takes
    ``Poisson(C_l b n / eps^2)`` draws from each oracle.
    """
    _check_eps_delta(eps, delta)
    if b <= 0:
        raise ValueError("b must be positive")
    reps = repetitions or amplification_reps(delta)
    mean = constants.C_l * b * domain_n / eps**2
    before = (oa.ledger, ob.ledger)
    rep_a, xa = _poissonized_batch(oa, mean, reps)
    rep_b, xb = _poissonized_batch(ob, mean, reps)
    z = l2_statistics(rep_a, xa, rep_b, xb, domain_n, reps)
    threshold = constants.C_z * mean**2 * eps**2 / domain_n
    votes = int((z > threshold).sum())
    decision = Decision.REJECT if 2 * votes > reps else Decision.ACCEPT
    return TestVerdict(decision, (oa.ledger - before[0], ob.ledger - before[1]), votes, reps)


class IndicatorOracle:
    """Bits ``1{x in S}`` for draws ``x`` of a wrapped oracle."""

    def __init__(self, oracle, mask: np.ndarray):
        self.oracle = oracle
        self.mask = np.asarray(mask, dtype=bool)

    @property
    def ledger(self) -> int:
        return self.oracle.ledger

    def sample(self, size: int) -> np.ndarray:
        return self.mask[self.oracle.sample(size)]


def gap_test(bit_oracle, low: float, high: float, delta: float, constants: Constants = DEFAULT) -> TestVerdict:
    """Decide ``alpha <= low`` (LOW) versus ``alpha >= high`` (HIGH).

    Draws ``C_b log(1/delta) high / (high - low)^2`` bits, the multiplicative
    Chernoff count, and thresholds the mean at ``(low + high)/2``.
    """
    if not 0 <= low < high <= 1:
        raise ValueError(f"need 0 <= low < high <= 1, got {low}, {high}")
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    gap = high - low
    m = max(1, math.ceil(constants.C_b * math.log(1.0 / delta) * high / gap**2))
    before = bit_oracle.ledger
    mean = float(np.mean(bit_oracle.sample(m)))
    decision = Decision.HIGH if mean >= low + gap / 2.0 else Decision.LOW
    return TestVerdict(decision, (bit_oracle.ledger - before,))


def bernoulli_gap_test(bit_oracle, beta: float, eta: float, delta: float,
                       constants: Constants = DEFAULT) -> TestVerdict:
    """``alpha <= beta`` versus ``alpha >= beta (1 + eta)``; threshold ``beta (1 + eta/2)``."""
    if not 0 < beta < 1:
        raise ValueError("beta must lie in (0, 1)")
    if eta <= 0 or beta * (1 + eta) > 1 + 1e-12:
        raise ValueError("need eta > 0 and beta (1 + eta) <= 1")
    return gap_test(bit_oracle, beta, min(1.0, beta * (1 + eta)), delta, constants)
