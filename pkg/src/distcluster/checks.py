"""Exact (non-Monte-Carlo) property checks run by ``distcluster verify``."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import Pmf, scheffe_set, tv_distance
from .esw import set_mass_tail_oracle
from .reductions import FlattenSketch, build_flatten_channel, build_identity_channel, pushforward


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    value: float
    detail: str

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: {self.detail}"


def _random_pmf(n: int, rng: np.random.Generator) -> Pmf:
    # mix smooth and spiky draws, sometimes with exact zeros
    alpha = rng.choice([0.1, 1.0, 10.0])
    p = rng.dirichlet(np.full(n, alpha))
    if n > 2 and rng.random() < 0.3:
        p[rng.random(n) < 0.3] = 0.0
        if p.sum() == 0:
            p[0] = 1.0
        p = p / p.sum()
    return Pmf(p)


def check_scheffe_identity(pairs: int = 1000, seed: int = 0, tol: float = 1e-12) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(pairs):
        n = int(rng.integers(2, 200))
        p, q = _random_pmf(n, rng), _random_pmf(n, rng)
        _, p0, p1 = scheffe_set(p, q)
        worst = max(worst, abs((p1 - p0) - tv_distance(p, q)))
    return CheckResult("scheffe-identity", worst <= tol, worst,
                       f"max |p1 - p0 - tv| = {worst:.3e} over {pairs} pairs")


def check_identity_reduction(pairs: int = 200, seed: int = 1, tol: float = 1e-12) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst_dev, worst_ratio = 0.0, math.inf
    for _ in range(pairs):
        n = int(rng.integers(1, 300))
        q = _random_pmf(n, rng)
        w = build_identity_channel(q)
        image = pushforward(w, q).probs
        worst_dev = max(worst_dev, float(np.abs(image - 1.0 / w.out_n).max()))
        p = _random_pmf(n, rng)
        d = tv_distance(p, q)
        if d > 1e-9:
            worst_ratio = min(worst_ratio, tv_distance(pushforward(w, p), Pmf(image)) / d)
    ok = worst_dev <= tol and worst_ratio >= 1 / 3 - 1e-12
    return CheckResult("identity-reduction", ok, worst_dev,
                       f"max |W q - U| = {worst_dev:.3e}, min distance factor {worst_ratio:.4f} over {pairs} pairs")


def check_majorization(pmfs: int = 200, max_n: int = 4, max_s1: int = 5, seed: int = 2,
                       tol: float = 1e-12) -> CheckResult:
    """Uniform sketches have the heaviest upper tail of ``U(set(S))`` at every threshold."""
    rng = np.random.default_rng(seed)
    violations, worst = 0, 0.0
    for _ in range(pmfs):
        n = int(rng.integers(1, max_n + 1))
        p = _random_pmf(n, rng) if n > 1 else Pmf([1.0])
        for s1 in range(1, max_s1 + 1):
            for d in range(n + 2):
                t = d / n
                excess = set_mass_tail_oracle(p, s1, t) - set_mass_tail_oracle(Pmf.uniform(n), s1, t)
                worst = max(worst, excess)
                violations += int(excess > tol)
    return CheckResult("majorization", violations == 0, worst,
                       f"{violations} violations, max excess {worst:.3e} over {pmfs} pmfs")


def check_flatten_tv(cases: int = 200, seed: int = 3, tol: float = 1e-12) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(cases):
        n = int(rng.integers(2, 100))
        p, q = _random_pmf(n, rng), _random_pmf(n, rng)
        sketch = FlattenSketch(rng.poisson(rng.uniform(0, 3), size=n))
        w = build_flatten_channel(sketch, n)
        worst = max(worst, abs(tv_distance(pushforward(w, p), pushforward(w, q)) - tv_distance(p, q)))
    return CheckResult("flatten-tv", worst <= tol, worst, f"max tv change {worst:.3e} over {cases} cases")


def flattened_norm_sq(p: Pmf, sketch: FlattenSketch) -> float:
    """``||flat(p)||_2^2 = sum_x p(x)^2 / (a_x + 1)``."""
    return float(np.sum(p.probs**2 / (sketch.counts + 1.0)))


def check_flatten_norm(sketches: int = 200, n: int = 200, s1: int = 50, seed: int = 4) -> CheckResult:
    rng = np.random.default_rng(seed)
    p = Pmf(rng.dirichlet(np.full(n, 0.2)))
    norms = np.array([
        flattened_norm_sq(p, FlattenSketch.from_samples(rng.choice(n, size=s1, p=p.probs), n))
        for _ in range(sketches)
    ])
    mean, se = norms.mean(), norms.std(ddof=1) / math.sqrt(sketches)
    return CheckResult("flatten-norm", mean <= 1.0 / s1 + 3 * se, float(mean),
                       f"mean ||flat p||^2 = {mean:.5f} vs 1/s1 = {1 / s1:.5f} (+3 SE {3 * se:.5f})")


def run_all() -> list[CheckResult]:
    return [
        check_scheffe_identity(),
        check_identity_reduction(),
        check_majorization(),
        check_flatten_tv(),
        check_flatten_norm(),
    ]
