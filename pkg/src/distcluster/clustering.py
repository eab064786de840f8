"""Two-cluster pipelines: known-known, one-known and both-unknown.

Every pipeline partitions the ``k`` oracles of an instance into sides ``A``
and ``B``. Side ``A`` is the side of the first exemplar (``p`` for the
known-known test, the located non-uniform oracle for one-known, the reference
oracle for both-unknown). Comparisons against the hidden partition are
unordered.

Sampling happens in batches. A batch is announced with
``instance.begin_round()`` once its plan (which oracles, how many draws) is
fixed; tests inside a batch may stop at the first decisive outcome, which only
discards draws the planned batch would have ignored anyway.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .constants import DEFAULT, Constants
from .core import Pmf, SampleOracle, scheffe_set
from .esw import esw_applicable, esw_params, esw_tester, log_k
from .lfht import Label, lfht_budget, multi_lfht
from .reductions import (
    FlattenSketch,
    build_flatten_channel,
    build_identity_channel,
    transform_oracle,
)
from .testers import Decision, IndicatorOracle, gap_test, l2_closeness_test, uniformity_test


@dataclass(frozen=True)
class Partition:
    side_of: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "side_of", tuple(self.side_of))
        if any(s not in ("A", "B") for s in self.side_of):
            raise ValueError("cluster tags must be 'A' or 'B'")

    @classmethod
    def from_mask(cls, in_a) -> "Partition":
        return cls(tuple("A" if a else "B" for a in np.asarray(in_a, dtype=bool)))

    @classmethod
    def degenerate(cls, k: int) -> "Partition":
        return cls(("A",) * k)

    @property
    def k(self) -> int:
        return len(self.side_of)

    @property
    def valid(self) -> bool:
        """Both clusters non-empty."""
        return "A" in self.side_of and "B" in self.side_of

    def indices(self, tag: str) -> list[int]:
        return [i for i, s in enumerate(self.side_of) if s == tag]


@dataclass(frozen=True)
class ClusterResult:
    partition: Partition
    samples: int  # draws requested from the instance, as tallied by the pipeline
    stage1_found: bool = True


# ---------------------------------------------------------------- round plans


@dataclass(frozen=True)
class RoundPlan:
    """Doubling schedule: round ``i`` (1-based) tests ``counts[i-1]`` new oracles."""

    counts: tuple[int, ...]
    errors: tuple[float, ...]

    @property
    def n_rounds(self) -> int:
        return len(self.counts)

    def union_error(self) -> float:
        return float(sum(c * e for c, e in zip(self.counts, self.errors)))


def make_round_plan(k: int, c: float) -> RoundPlan:
    """Rounds of ``2^i`` fresh oracles (the last truncated at ``k``), error ``c 2^-i / i^2`` each."""
    if c <= 0:
        raise ValueError("c must be positive")
    if k < 1:
        raise ValueError("k must be positive")
    counts, errors = [], []
    used, i = 0, 1
    while used < k:
        take = min(2**i, k - used)
        counts.append(take)
        errors.append(c * 2.0**-i / i**2)
        used += take
        i += 1
    return RoundPlan(tuple(counts), tuple(errors))


def stage1_subset_size(k: int, r: int) -> int:
    if not 1 <= r <= k:
        raise ValueError("need 1 <= r <= k")
    return min(k, math.ceil(9 * k / r))


def _noop():
    pass


# ---------------------------------------------------------------- known-known


def scheffe_cluster(p: Pmf, q: Pmf, targets: Sequence[SampleOracle], eps: float,
                    constants: Constants = DEFAULT) -> ClusterResult:
    """Classify each target by the frequency of its draws in the Scheffe set of ``(p, q)``.

    Targets judged ``p`` go to side ``A``.
    """
    mask, q_mass, p_mass = scheffe_set(p, q)
    if p_mass - q_mass < eps - 1e-12:
        raise ValueError("tv(p, q) is below eps")
    k = len(targets)
    delta = 1.0 / (3 * max(k, 1))
    in_a, used = [], 0
    for t in targets:
        verdict = gap_test(IndicatorOracle(t, mask), q_mass, p_mass, delta, constants)
        in_a.append(verdict.decision is Decision.HIGH)
        used += verdict.samples_used[0]
    return ClusterResult(Partition.from_mask(in_a), used)


# ---------------------------------------------------------------- one known


def find_exemplar_nonuniform(oracles: Sequence[SampleOracle], n: int, eps: float,
                             r_known: int | None = None, constants: Constants = DEFAULT,
                             rng: np.random.Generator | None = None,
                             on_round=_noop) -> tuple[int | None, int]:
    """Locate an oracle that is not uniform on ``[n]``.

    With ``r_known`` a random subset of ``min(k, ceil(9k/r))`` oracles is
    tested at error ``1/(9 ceil(9k/r))`` each; otherwise fresh oracles are added in
    doubling rounds. Returns ``(index or None, samples drawn)``.
    """
    rng = np.random.default_rng() if rng is None else rng
    k = len(oracles)
    order = rng.permutation(k)
    if r_known is not None:
        size = stage1_subset_size(k, r_known)
        batches = [(order[:size], 1.0 / (9 * math.ceil(9 * k / r_known)))]
    else:
        plan = make_round_plan(k, constants.c_doubling)
        bounds = np.cumsum((0,) + plan.counts)
        batches = [(order[lo:hi], err) for lo, hi, err in zip(bounds[:-1], bounds[1:], plan.errors)]
    used = 0
    for members, delta in batches:
        on_round()
        for i in members:
            verdict = uniformity_test(oracles[i], n, eps, delta, constants)
            used += verdict.samples_used[0]
            if verdict.rejected:
                return int(i), used
    return None, used


def choose_stage2(n: int, k: int, eps: float, constants: Constants = DEFAULT) -> str:
    """``"esw"`` when the domain is large enough for it to be the cheaper test, else ``"lfht"``."""
    if n >= k * log_k(k) / eps**4 and esw_applicable(n, eps, constants):
        return "esw"
    return "lfht"


def cluster_one_known(q_known: Pmf, instance, n: int, k: int, eps: float,
                      r_known: int | None = None, stage2: str = "auto",
                      constants: Constants = DEFAULT,
                      rng: np.random.Generator | None = None) -> ClusterResult:
    """Recover the partition when one cluster's pmf ``q_known`` is known.

    All oracles are pushed through the identity-to-uniformity channel of
    ``q_known`` (domain ``6n``, distance ``eps/3``). Stage 1 finds a
    non-uniform exemplar; Stage 2 classifies every oracle against it with ESW
    or MultiLFHT. Draws from the known uniform distribution are free and are
    not tallied.
    """
    rng = np.random.default_rng() if rng is None else rng
    if q_known.n != n or len(instance.oracles) != k:
        raise ValueError("instance does not match (n, k)")
    channel = build_identity_channel(q_known)
    wrapped = [transform_oracle(o, channel) for o in instance.oracles]
    n2, eps2 = channel.out_n, eps / 3.0
    exemplar, used = find_exemplar_nonuniform(
        wrapped, n2, eps2, r_known, constants, rng, on_round=instance.begin_round)
    if exemplar is None:
        return ClusterResult(Partition.degenerate(k), used, stage1_found=False)

    if stage2 == "auto":
        stage2 = choose_stage2(n2, k, eps2, constants)
    instance.begin_round()
    if stage2 == "esw":
        params = esw_params(n2, k, eps2, constants)
        chosen = esw_tester(wrapped[exemplar], wrapped, n2, k, eps2, constants)
        in_a = np.zeros(k, dtype=bool)
        in_a[list(chosen)] = True
        used += params.s1 + k * params.s2
    elif stage2 == "lfht":
        budget = lfht_budget(n2, k, eps2, constants)
        uniform = SampleOracle(Pmf.uniform(n2), rng)
        labels = multi_lfht(wrapped[exemplar], uniform, wrapped, n2, k, eps2, constants)
        in_a = np.array([lab is Label.P for lab in labels])
        used += budget.s1 + k * budget.s2
    else:
        raise ValueError(f"unknown stage-2 algorithm {stage2!r}")
    return ClusterResult(Partition.from_mask(in_a), used)


# ---------------------------------------------------------------- both unknown


class FindOutcome(enum.Enum):
    ALL_IDENTICAL = "AllIdentical"
    ABORT = "Abort"


@dataclass(frozen=True)
class FindResult:
    outcome: int | FindOutcome
    samples: int

    @property
    def found(self) -> bool:
        return isinstance(self.outcome, int)


def find_one_sketch_size(n: int, m: int, eps: float) -> float:
    return min(float(n), (n * m / eps**2) ** (2.0 / 3.0))


def find_one_unknown(targets: Sequence[SampleOracle], n: int, eps: float,
                     constants: Constants = DEFAULT, rng: np.random.Generator | None = None,
                     candidates: Sequence[int] | None = None, m: int | None = None,
                     delta: float | None = None) -> FindResult:
    """Find a target whose pmf differs from that of ``targets[0]``.

    Draws ``s ~ Poisson(s1)`` samples of ``targets[0]`` (aborting when
    ``s > 2 s1``), flattens the domain with them and runs the l2 closeness
    test of each candidate against ``targets[0]`` on the flattened domain.
    Returns the first rejecting index, else ``ALL_IDENTICAL``.

    ``m``, ``delta`` and ``candidates`` default to ``len(targets)``,
    ``1/(30 m)`` and ``1 .. m-1``; the doubling driver overrides them.
    """
    rng = np.random.default_rng() if rng is None else rng
    if len(targets) < 2:
        raise ValueError("need at least two targets")
    m = len(targets) if m is None else m
    delta = 1.0 / (30 * m) if delta is None else delta
    candidates = range(1, len(targets)) if candidates is None else candidates
    s1 = find_one_sketch_size(n, m, eps)
    s = int(rng.poisson(s1))
    if s > 2 * s1:
        return FindResult(FindOutcome.ABORT, 0)
    ref = targets[0]
    sketch = FlattenSketch.from_samples(ref.sample(s), n)
    channel = build_flatten_channel(sketch, n)
    flat_ref = transform_oracle(ref, channel)
    b = math.sqrt(30.0 / s1)
    used = s
    for j in candidates:
        verdict = l2_closeness_test(flat_ref, transform_oracle(targets[j], channel),
                                    channel.out_n, eps, delta, b, constants)
        used += sum(verdict.samples_used)
        if verdict.rejected:
            return FindResult(int(j), used)
    return FindResult(FindOutcome.ALL_IDENTICAL, used)


def _find_pair_doubling(oracles, n, eps, constants, rng, on_round) -> tuple[tuple[int, int] | None, int]:
    k = len(oracles)
    order = [int(i) for i in rng.permutation(k)]
    plan = make_round_plan(k, constants.c_doubling)
    used, pool = 0, 1  # order[0] is the reference
    for count, delta in zip(plan.counts, plan.errors):
        on_round()
        new_pool = min(k, pool + count)
        if new_pool == pool:
            break
        members = [oracles[i] for i in order[:new_pool]]
        res = find_one_unknown(members, n, eps, constants, rng,
                               candidates=range(pool, new_pool), m=new_pool, delta=delta)
        used += res.samples
        if res.found:
            return (order[0], order[res.outcome]), used
        pool = new_pool
    return None, used


def cluster_both_unknown(instance, n: int, k: int, eps: float, r_known: int | None = None,
                         constants: Constants = DEFAULT,
                         rng: np.random.Generator | None = None) -> ClusterResult:
    """Recover the partition when neither pmf is known.

    Stage 1 finds one oracle of each kind with ``find_one_unknown`` on a random
    subset (or with doubling rounds when ``r`` is unknown); Stage 2 labels all
    ``k`` oracles with MultiLFHT using the pair as exemplars.
    """
    rng = np.random.default_rng() if rng is None else rng
    oracles = instance.oracles
    if len(oracles) != k:
        raise ValueError("instance does not match k")
    if r_known is not None:
        size = stage1_subset_size(k, r_known)
        subset = [int(i) for i in rng.choice(k, size=size, replace=False)]
        instance.begin_round()
        if size < 2:
            return ClusterResult(Partition.degenerate(k), 0, stage1_found=False)
        res = find_one_unknown([oracles[i] for i in subset], n, eps, constants, rng)
        used = res.samples
        pair = (subset[0], subset[res.outcome]) if res.found else None
    else:
        pair, used = _find_pair_doubling(oracles, n, eps, constants, rng, instance.begin_round)
    if pair is None:
        return ClusterResult(Partition.degenerate(k), used, stage1_found=False)
    instance.begin_round()
    budget = lfht_budget(n, k, eps, constants)
    labels = multi_lfht(oracles[pair[0]], oracles[pair[1]], oracles, n, k, eps, constants)
    used += 2 * budget.s1 + k * budget.s2
    return ClusterResult(Partition.from_mask([lab is Label.P for lab in labels]), used)


def cluster_known_known(instance, eps: float | None = None, constants: Constants = DEFAULT) -> ClusterResult:
    """Scheffe clustering of an instance whose two pmfs are both known (one batch)."""
    instance.begin_round()
    eps = instance.eps if eps is None else eps
    return scheffe_cluster(instance.p, instance.q, instance.oracles, eps, constants)
