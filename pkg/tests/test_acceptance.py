"""Acceptance criteria 1-9, one PASS/FAIL line each.

Monte Carlo rates "meet" a target when the upper end of their 95% Wilson
interval reaches it, i.e. rate >= target - interval half-width. The runs of
criteria 4-8 are cached so criterion 9 audits exactly those trials.
"""

import math
import time
from functools import cache

import pytest

from distcluster import checks
from distcluster.harness import ExperimentConfig, min_budget_scale, run_trials, wilson_interval
from distcluster.lfht import Regime, lfht_regime

pytestmark = pytest.mark.acceptance

PIPELINE_POINT = dict(n=10**4, k=20, r=4, eps=0.45)
PIPELINE_TRIALS = 500
LFHT_POINTS = {
    Regime.SMALL_N: dict(n=50, k=20, r=10, eps=0.3),
    Regime.MID_N: dict(n=1000, k=20, r=10, eps=0.3),
    Regime.LARGE_N: dict(n=10**4, k=20, r=10, eps=0.5),
}
R_SWEEP = dict(n=10**4, k=20, eps=0.45, rs=(1, 2, 4, 8), trials=100)
ASYMMETRY = dict(n=100, eps=0.45, ks=(16, 64), trials=150, iterations=6)


def report(capsys, criterion, passed, detail):
    with capsys.disabled():
        print(f"\n{'PASS' if passed else 'FAIL'} criterion {criterion}: {detail}")


def rate_detail(agg):
    lo, hi = agg.wilson_interval
    return f"{agg.success_rate:.3f} [{lo:.3f}, {hi:.3f}] over {agg.trials}"


# ---------------------------------------------------------------- cached runs


@cache
def esw_run():
    return run_trials(ExperimentConfig(variant="esw", n=10**4, k=10, eps=0.4, trials=300, seed=41))


@cache
def lfht_runs():
    return {regime: run_trials(ExperimentConfig(variant="multi-lfht", trials=200, seed=51, **point))
            for regime, point in LFHT_POINTS.items()}


@cache
def find_runs():
    return {n: run_trials(ExperimentConfig(variant="find-one-unknown", n=n, k=10, r=1, eps=0.4, trials=300,
                                           seed=61))
            for n in (27, 1000)}


PIPELINE_CASES = {
    "known-known": dict(variant="known-known"),
    "one-known/uniform": dict(variant="one-known"),
    "one-known/random": dict(variant="one-known", q_kind="random"),
    "both-unknown": dict(variant="both-unknown"),
}
UNKNOWN_R_CASES = ("one-known/uniform", "one-known/random", "both-unknown")


@cache
def pipeline_run(name, r_known=True):
    cfg = ExperimentConfig(trials=PIPELINE_TRIALS, seed=71, r_known=r_known, **PIPELINE_POINT,
                           **PIPELINE_CASES[name])
    return run_trials(cfg)


@cache
def r_sweep_runs():
    p = R_SWEEP
    return {r: run_trials(ExperimentConfig(variant="one-known", n=p["n"], k=p["k"], r=r, eps=p["eps"],
                                           trials=p["trials"], seed=81))
            for r in p["rs"]}


@cache
def asymmetry_runs():
    p = ASYMMETRY
    out = {}
    for k in p["ks"]:
        for r in (1, k - 1):
            cfg = ExperimentConfig(variant="one-known", n=p["n"], k=k, r=r, eps=p["eps"], trials=p["trials"],
                                   seed=5)
            out[k, r] = min_budget_scale(cfg, iterations=p["iterations"])
    return out


# ---------------------------------------------------------------- criteria


def test_criterion_1_exact_oracles(capsys):
    t = time.time()
    scheffe = checks.check_scheffe_identity(pairs=1000)
    identity = checks.check_identity_reduction(pairs=200)
    elapsed = time.time() - t
    ok = scheffe.passed and identity.passed and elapsed < 60
    report(capsys, 1, ok, f"{scheffe.detail}; {identity.detail}; {elapsed:.1f}s")
    assert ok


def test_criterion_2_majorization(capsys):
    t = time.time()
    res = checks.check_majorization(pmfs=200, max_n=4, max_s1=5)
    elapsed = time.time() - t
    ok = res.passed and elapsed < 60
    report(capsys, 2, ok, f"{res.detail}; {elapsed:.1f}s")
    assert ok


def test_criterion_3_flattening(capsys):
    t = time.time()
    tv = checks.check_flatten_tv(cases=200)
    norm = checks.check_flatten_norm(sketches=200)
    elapsed = time.time() - t
    ok = tv.passed and norm.passed and elapsed < 60
    report(capsys, 3, ok, f"{tv.detail}; {norm.detail}; {elapsed:.1f}s")
    assert ok


def test_criterion_4_esw(capsys):
    t = time.time()
    agg = esw_run()
    elapsed = time.time() - t
    ok = agg.meets(8 / 9) and elapsed < 600
    report(capsys, 4, ok, f"exact recovery {rate_detail(agg)} (target 8/9), chi sizes 0, k/2, k; {elapsed:.0f}s")
    assert ok


def test_criterion_5_multi_lfht(capsys):
    t = time.time()
    runs = lfht_runs()
    elapsed = time.time() - t
    regimes_ok = all(lfht_regime(p["n"], p["k"], p["eps"]) is regime for regime, p in LFHT_POINTS.items())
    ok = regimes_ok and all(agg.meets(8 / 9) for agg in runs.values()) and elapsed < 900
    detail = "; ".join(f"{regime.value} {rate_detail(agg)}" for regime, agg in runs.items())
    report(capsys, 5, ok, f"joint success {detail} (target 8/9); {elapsed:.0f}s")
    assert ok


def test_criterion_6_find_one_unknown(capsys):
    t = time.time()
    runs = find_runs()
    elapsed = time.time() - t
    parts, ok = [], elapsed < 600
    for n, agg in runs.items():
        aborts = round(agg.abort_rate * agg.trials)
        # an upper target is met when the lower Wilson end stays below it
        abort_ok = wilson_interval(aborts, agg.trials)[0] <= 1 / 30
        ok = ok and agg.meets(0.9) and abort_ok
        parts.append(f"n={n} correct {rate_detail(agg)}, abort {agg.abort_rate:.3f}")
    report(capsys, 6, ok, f"{'; '.join(parts)} (targets 0.9, abort <= 1/30); {elapsed:.0f}s")
    assert ok


def test_criterion_7_pipelines(capsys):
    t = time.time()
    parts, ok = [], True
    for name in PIPELINE_CASES:
        agg = pipeline_run(name)
        ok = ok and agg.meets(2 / 3)
        parts.append(f"{name} {rate_detail(agg)}")
    for name in UNKNOWN_R_CASES:
        known, unknown = pipeline_run(name), pipeline_run(name, r_known=False)
        gap = abs(unknown.success_rate - known.success_rate)
        factor = unknown.mean_budget / known.mean_budget
        ok = ok and gap <= 0.05 and factor <= 4
        parts.append(f"{name} unknown-r {unknown.success_rate:.3f} (gap {gap:.3f}, budget x{factor:.2f})")
    elapsed = time.time() - t
    ok = ok and elapsed < 1800
    report(capsys, 7, ok, f"{'; '.join(parts)} (target 2/3, gap <= 0.05, budget <= 4x); {elapsed:.0f}s")
    assert ok


def test_criterion_8_scaling(capsys):
    t = time.time()
    sweep = r_sweep_runs()
    budgets = [sweep[r].mean_budget for r in R_SWEEP["rs"]]
    decreasing = all(a > b for a, b in zip(budgets, budgets[1:]))
    parts = ["r-sweep " + ", ".join(f"r={r}: {b:.3g}" for r, b in zip(R_SWEEP["rs"], budgets))]
    ok = decreasing
    asym = asymmetry_runs()
    for k in ASYMMETRY["ks"]:
        ratio = asym[k, 1].aggregate.mean_budget / asym[k, k - 1].aggregate.mean_budget
        need = 0.5 * math.sqrt(k)
        ok = ok and ratio >= need
        parts.append(f"k={k} asymmetry {ratio:.2f} (need {need:.1f})")
    elapsed = time.time() - t
    ok = ok and elapsed < 3600
    report(capsys, 8, ok, f"{'; '.join(parts)}; {elapsed:.0f}s")
    assert ok


def test_criterion_9_accounting(capsys):
    aggregates = [esw_run(), *lfht_runs().values(), *find_runs().values(), *r_sweep_runs().values()]
    for s in asymmetry_runs().values():
        aggregates.extend(s.runs)
    pipelines = [pipeline_run(name) for name in PIPELINE_CASES]
    pipelines += [pipeline_run(name, r_known=False) for name in UNKNOWN_R_CASES]
    aggregates += pipelines
    reports = [rep for agg in aggregates for rep in agg.reports]
    bad_ledger = sum(not rep.accounting_ok for rep in reports)
    bad_rounds = no_find = 0
    for agg in aggregates:
        cfg = agg.config
        if cfg.variant == "known-known":
            # one non-adaptive batch
            bad_rounds += sum(rep.rounds != 1 for rep in agg.reports)
        elif cfg.variant in ("one-known", "both-unknown") and cfg.r_known:
            # a Stage 1 no-find returns the degenerate partition after its single batch
            for rep in agg.reports:
                no_find += rep.aborted
                bad_rounds += rep.rounds != (1 if rep.aborted else 2)
    ok = bad_ledger == 0 and bad_rounds == 0
    report(capsys, 9, ok, f"{len(reports)} trials: {bad_ledger} ledger mismatches, {bad_rounds} known-r runs "
                          f"with a round count other than 2 (1 for known-known, 1 for the {no_find} Stage 1 "
                          f"no-finds)")
    assert ok
