"""Empirical subset weighting: classify targets as ``P`` or uniform.

A sketch of ``s1`` draws from ``P`` is deduplicated into a set ``S``; the
fraction of each target's draws landing in ``S`` is compared against the
expected uniform mass of such a set plus a margin.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .constants import DEFAULT, Constants
from .core import Pmf


class PreconditionError(ValueError):
    pass


def log_k(k: int) -> float:
    return math.log(max(k, 2))


def expected_uniform_mass(n: int, s1: int) -> float:
    """``1 - (1 - 1/n)^s1``: expected uniform mass of the set of ``s1`` uniform draws."""
    if n < 1 or s1 < 0:
        raise ValueError("need n >= 1 and s1 >= 0")
    if s1 == 0:
        return 0.0
    if n == 1:
        return 1.0
    return -math.expm1(s1 * math.log1p(-1.0 / n))


@dataclass(frozen=True)
class EswParams:
    s1: int
    s2: int
    tau: float
    gamma: float

    @property
    def threshold(self) -> float:
        return self.gamma + 2.0 * self.tau


def esw_params(n: int, k: int, eps: float, constants: Constants = DEFAULT) -> EswParams:
    lk = log_k(k)
    s1 = min(n, math.ceil(math.sqrt(n * k * lk) / eps**2))
    tau = s1 * eps**2 / (64.0 * n)
    gamma = expected_uniform_mass(n, s1)
    s2 = max(1, math.ceil(constants.c_esw * n * lk / (s1 * eps**4)))
    return EswParams(s1, s2, tau, gamma)


def esw_applicable(n: int, eps: float, constants: Constants = DEFAULT) -> bool:
    return eps >= constants.C_e / n**0.25


def esw_tester(op, targets, n: int, k: int, eps: float, constants: Constants = DEFAULT) -> set[int]:
    """Indices of targets judged equal to ``P`` (the rest are judged uniform)."""
    if not 0 < eps <= 1:
        raise ValueError("eps must lie in (0, 1]")
    if not esw_applicable(n, eps, constants):
        raise PreconditionError(f"eps={eps} is below C_e / n^(1/4) = {constants.C_e / n**0.25:.4g}")
    if len(targets) != k:
        raise ValueError("expected k targets")
    params = esw_params(n, k, eps, constants)
    in_sketch = np.zeros(n, dtype=bool)
    in_sketch[op.sample(params.s1)] = True
    chosen = set()
    for j, target in enumerate(targets):
        z = np.count_nonzero(in_sketch[target.sample(params.s2)]) / params.s2
        if z >= params.threshold:
            chosen.add(j)
    return chosen


MAX_ENUMERATION = 10**7


def distinct_count_distribution(p: Pmf, s1: int) -> np.ndarray:
    """Exact law of the number of distinct symbols among ``s1`` draws from ``p``.

    Enumerates all ``n**s1`` sequences, so only usable on tiny instances.
    """
    n = p.n
    total = n**s1
    if total > MAX_ENUMERATION:
        raise ValueError(f"n^s1 = {total} sequences is too many to enumerate")
    out = np.zeros(min(n, s1) + 1)
    if s1 == 0:
        out[0] = 1.0
        return out
    radix = n ** np.arange(s1)
    chunk = max(1, 10**6 // s1)
    for lo in range(0, total, chunk):
        idx = np.arange(lo, min(total, lo + chunk))
        seqs = (idx[:, None] // radix) % n
        weight = np.prod(p.probs[seqs], axis=1)
        seen = np.zeros((idx.size, n), dtype=bool)
        np.put_along_axis(seen, seqs, True, axis=1)
        out += np.bincount(seen.sum(axis=1), weights=weight, minlength=out.size)
    return out


def set_mass_tail_oracle(p: Pmf, s1: int, t: float) -> float:
    """``Pr[U(set(S)) >= t]`` for ``S`` made of ``s1`` draws from ``p``, exactly."""
    dist = distinct_count_distribution(p, s1)
    sizes = np.arange(dist.size)
    return float(dist[sizes / p.n >= t - 1e-12].sum())
