import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from distcluster.core import (
    BudgetLedger,
    DomainMismatch,
    Pmf,
    SampleOracle,
    alias_draw,
    build_alias_table,
    make_instance,
    make_paninski,
    make_tilted,
    oracle_seed,
    scheffe_set,
    tv_distance,
)


def pmf_vectors(min_n=1, max_n=30):
    return st.integers(min_n, max_n).flatmap(
        lambda n: st.lists(st.floats(0, 1, allow_nan=False), min_size=n, max_size=n)
        .filter(lambda v: sum(v) > 1e-3)
        .map(lambda v: np.asarray(v) / sum(v))
    )


def pmf_pairs(max_n=30):
    return st.integers(1, max_n).flatmap(
        lambda n: st.tuples(*[
            st.lists(st.floats(0, 1, allow_nan=False), min_size=n, max_size=n)
            .filter(lambda v: sum(v) > 1e-3)
            .map(lambda v: Pmf(np.asarray(v) / sum(v)))
        ] * 2)
    )


def brute_tv(p, q):
    # independent oracle: plain Python loop over the definition
    return 0.5 * sum(abs(a - b) for a, b in zip(p.probs.tolist(), q.probs.tolist()))


class TestPmf:
    def test_renormalizes_within_tolerance(self):
        p = Pmf([0.5, 0.5 + 5e-10])
        assert abs(p.probs.sum() - 1.0) < 1e-15

    @pytest.mark.parametrize("bad", [[0.5, 0.4], [1.2, -0.2], [], [float("nan"), 1.0]])
    def test_rejects_invalid(self, bad):
        with pytest.raises(ValueError):
            Pmf(bad)

    def test_immutable(self):
        p = Pmf.uniform(4)
        with pytest.raises(ValueError):
            p.probs[0] = 1.0

    def test_json_round_trip(self):
        p = Pmf([0.1, 0.2, 0.7])
        assert Pmf.from_json(p.to_json()) == p

    @given(pmf_vectors())
    def test_json_round_trip_exact(self, probs):
        p = Pmf(probs)
        assert Pmf.from_json(p.to_json()) == p


class TestTv:
    def test_identity(self):
        assert tv_distance(Pmf.uniform(100), Pmf.uniform(100)) == 0

    def test_disjoint_point_masses(self):
        assert tv_distance(Pmf.point_mass(3, 1), Pmf.point_mass(3, 2)) == 1

    def test_paninski_distance(self):
        p = make_paninski(100, 0.1, seed=3)
        # each of 100 entries deviates by 2 eps / n: tv = 100 * 0.002 / 2
        assert tv_distance(p, Pmf.uniform(100)) == pytest.approx(0.1, abs=1e-12)

    def test_domain_mismatch(self):
        with pytest.raises(DomainMismatch):
            tv_distance(Pmf.uniform(2), Pmf.uniform(3))

    @given(pmf_pairs())
    def test_matches_brute_force_and_is_symmetric(self, pair):
        p, q = pair
        assert tv_distance(p, q) == pytest.approx(brute_tv(p, q), abs=1e-12)
        assert tv_distance(p, q) == tv_distance(q, p)
        assert 0.0 <= tv_distance(p, q) <= 1.0 + 1e-12


class TestScheffe:
    def test_example(self):
        mask, p0, p1 = scheffe_set(Pmf([0.7, 0.3]), Pmf([0.3, 0.7]))
        assert mask.tolist() == [True, False]
        assert (p0, p1) == pytest.approx((0.3, 0.7))
        assert p1 - p0 == pytest.approx(0.4, abs=1e-12)

    def test_equal_pmfs(self):
        p = Pmf([0.2, 0.3, 0.5])
        mask, p0, p1 = scheffe_set(p, p)
        assert not mask.any() and p0 == 0 and p1 == 0

    def test_random_pairs(self):
        rng = np.random.default_rng(11)
        for _ in range(1000):
            n = int(rng.integers(2, 60))
            p, q = Pmf(rng.dirichlet(np.ones(n))), Pmf(rng.dirichlet(np.ones(n)))
            _, p0, p1 = scheffe_set(p, q)
            assert abs((p1 - p0) - brute_tv(p, q)) <= 1e-12

    @given(pmf_pairs())
    def test_gap_property(self, pair):
        p, q = pair
        mask, p0, p1 = scheffe_set(p, q)
        assert abs((p1 - p0) - tv_distance(p, q)) <= 1e-12
        assert p1 == pytest.approx(p.probs[mask].sum(), abs=1e-12)
        assert p0 == pytest.approx(q.probs[mask].sum(), abs=1e-12)


class TestPaninski:
    def test_extreme_n2(self):
        got = {tuple(make_paninski(2, 0.5, seed=s).probs.tolist()) for s in range(20)}
        assert got <= {(1.0, 0.0), (0.0, 1.0)}

    def test_n4(self):
        p = make_paninski(4, 0.25, seed=0)
        assert sorted(p.probs.tolist()) == pytest.approx([0.125, 0.125, 0.375, 0.375])

    @pytest.mark.parametrize("n, eps", [(3, 0.1), (4, 0.6), (0, 0.1)])
    def test_rejects(self, n, eps):
        with pytest.raises(ValueError):
            make_paninski(n, eps)

    @given(st.integers(1, 200), st.floats(0.001, 0.5), st.integers(0, 2**32 - 1))
    def test_tv_is_eps(self, half, eps, seed):
        p = make_paninski(2 * half, eps, seed)
        assert brute_tv(p, Pmf.uniform(2 * half)) == pytest.approx(eps, abs=1e-12)


class TestTilted:
    @given(pmf_vectors(min_n=4, max_n=40), st.floats(0.01, 0.2), st.integers(0, 1000))
    def test_tv_is_eps(self, probs, eps, seed):
        q = Pmf(probs)
        try:
            p = make_tilted(q, eps, seed)
        except ValueError:
            return  # no split with enough mass on both sides
        assert tv_distance(p, q) == pytest.approx(eps, abs=1e-9)


class TestAlias:
    @given(pmf_vectors())
    def test_table_reproduces_pmf(self, probs):
        acc, alias = build_alias_table(np.asarray(probs, dtype=float))
        n = len(probs)
        # exact law of one alias draw
        law = acc / n
        np.add.at(law, alias, (1 - acc) / n)
        assert np.allclose(law, probs, atol=1e-12)

    def test_linf_deviation_bound(self):
        # 5 sqrt(log n / s) in at least 99 of 100 trials
        rng = np.random.default_rng(5)
        n, s = 50, 4000
        p = Pmf(rng.dirichlet(np.ones(n)))
        bound = 5 * math.sqrt(math.log(n) / s)
        good = 0
        for t in range(100):
            o = SampleOracle(p, np.random.default_rng(t))
            hist = o.counts(s) / s
            good += np.abs(hist - p.probs).max() <= bound
        assert good >= 99

    def test_zero_probability_never_drawn(self):
        p = Pmf([0.0, 0.5, 0.0, 0.5])
        xs = alias_draw(p.alias_table, 10_000, np.random.default_rng(0))
        assert set(np.unique(xs).tolist()) <= {1, 3}


class TestOracle:
    def test_ledger_counts_every_draw(self):
        o = SampleOracle(Pmf.uniform(5), 0)
        for size in (0, 3, 10, 1):
            o.sample(size)
        extra = o.sample_poissonized(4.0)
        assert o.ledger == 14 + extra.size
        before = o.ledger
        assert o.counts(7).sum() == 7 and o.ledger == before + 7

    def test_negative_size(self):
        with pytest.raises(ValueError):
            SampleOracle(Pmf.uniform(2), 0).sample(-1)

    @given(st.integers(0, 2**32 - 1), st.lists(st.integers(0, 50), max_size=6))
    @settings(max_examples=30)
    def test_reproducible(self, seed, sizes):
        a = SampleOracle(Pmf([0.1, 0.2, 0.3, 0.4]), seed)
        b = SampleOracle(Pmf([0.1, 0.2, 0.3, 0.4]), seed)
        for size in sizes:
            assert np.array_equal(a.sample(size), b.sample(size))
        assert a.ledger == b.ledger == sum(sizes)

    def test_substreams_differ(self):
        xs = [np.random.default_rng(oracle_seed(7, i)).random() for i in range(4)]
        assert len(set(xs)) == 4
        ss = np.random.SeedSequence(7)
        assert np.random.default_rng(oracle_seed(ss, 2)).random() == xs[2]


class TestInstance:
    def test_small(self):
        p, q = Pmf([1.0, 0.0]), Pmf([0.0, 1.0])
        inst = make_instance(2, 2, 1, p, q, seed=0)
        assert len(inst.hidden_partition) == 1 and inst.k == 2

    def test_counts(self):
        p, q = Pmf.uniform(10), make_paninski(10, 0.2, 0)
        inst = make_instance(10, 10, 3, p, q, seed=1)
        pmfs = [o._pmf for o in inst.oracles]
        assert sum(x is q for x in pmfs) == 3 and sum(x is p for x in pmfs) == 7
        assert all(pmfs[i] is q for i in inst.hidden_partition)

    def test_determinism(self):
        p, q = Pmf.uniform(10), make_paninski(10, 0.2, 0)
        a, b = make_instance(10, 8, 3, p, q, seed=9), make_instance(10, 8, 3, p, q, seed=9)
        assert a.hidden_partition == b.hidden_partition
        for oa, ob in zip(a.oracles, b.oracles):
            assert np.array_equal(oa.sample(20), ob.sample(20))

    @pytest.mark.parametrize("r", [0, 5])
    def test_r_out_of_range(self, r):
        with pytest.raises(ValueError):
            make_instance(4, 5, r, Pmf.uniform(4), make_paninski(4, 0.2, 0))

    def test_eps_above_tv(self):
        with pytest.raises(ValueError):
            make_instance(4, 3, 1, Pmf.uniform(4), make_paninski(4, 0.2, 0), eps=0.3)

    def test_ledger_total(self):
        inst = make_instance(4, 3, 1, Pmf.uniform(4), make_paninski(4, 0.2, 0), seed=0)
        for i, o in enumerate(inst.oracles):
            o.sample(i + 1)
        led = inst.ledger()
        assert led.per_oracle == [1, 2, 3] and led.total == 6
        assert BudgetLedger([]).total == 0

    def test_is_correct_unordered(self):
        from distcluster.clustering import Partition

        inst = make_instance(4, 4, 1, Pmf.uniform(4), make_paninski(4, 0.2, 0), seed=0)
        truth = inst.truth_labels()
        assert inst.is_correct(Partition.from_mask(truth))
        assert inst.is_correct(Partition.from_mask(~truth))
        assert not inst.is_correct(Partition.degenerate(4))
