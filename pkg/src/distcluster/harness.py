"""Monte Carlo experiment driver: trials, Wilson intervals, sweeps and calibration."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
from scipy.stats import binomtest

from .clustering import (
    ClusterResult,
    FindOutcome,
    cluster_both_unknown,
    cluster_known_known,
    cluster_one_known,
    find_one_unknown,
)
from .constants import DEFAULT, Constants
from .core import (
    BudgetLedger,
    ClusterInstance,
    Pmf,
    SampleOracle,
    make_instance,
    make_paninski,
    make_tilted,
    oracle_seed,
)
from .esw import esw_params, esw_tester, log_k
from .lfht import Label, Regime, lfht_budget, lfht_regime, multi_lfht
from .testers import IndicatorOracle, bernoulli_gap_test, l2_closeness_test, uniformity_test

log = logging.getLogger("distcluster")

PIPELINES = ("known-known", "one-known", "both-unknown")
PRIMITIVES = ("uniformity", "l2", "bernoulli", "esw", "multi-lfht", "find-one-unknown")
VARIANTS = PIPELINES + PRIMITIVES
CSV_VERSION = 1


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    """One experiment: a variant, its instance parameters and the trial count.

    ``p``/``q`` optionally fix the two pmfs of a known-known instance.
    ``q_kind`` picks the known pmf of one-known instances (``uniform`` or a
    Dirichlet ``random`` draw). ``delta``, ``repetitions``, ``beta`` and
    ``eta`` only concern the primitive variants used for calibration.
    """

    variant: str = "one-known"
    n: int = 1000
    k: int = 10
    r: int = 2
    eps: float = 0.4
    trials: int = 100
    seed: int = 0
    constants: dict = field(default_factory=dict)
    r_known: bool = True
    q_kind: str = "uniform"
    stage2: str = "auto"
    delta: float | None = None
    repetitions: int | None = None
    beta: float = 0.3
    eta: float = 0.5
    p: list | None = None
    q: list | None = None
    threads: int = 1

    def validate(self) -> None:
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}; choose from {', '.join(VARIANTS)}")
        if self.trials < 1:
            raise ConfigError("trials must be at least 1")
        if self.n < 1 or self.k < 1:
            raise ConfigError("n and k must be positive")
        if not 0 < self.eps <= 1:
            raise ConfigError("eps must lie in (0, 1]")
        if self.variant in PIPELINES and not 1 <= self.r <= self.k - 1:
            raise ConfigError(f"need 1 <= r <= k-1, got r={self.r}, k={self.k}")
        if self.variant in ("multi-lfht", "find-one-unknown", "esw") and not 0 <= self.r <= self.k:
            raise ConfigError("need 0 <= r <= k")
        if self.variant == "find-one-unknown" and self.k < 2:
            raise ConfigError("find-one-unknown needs k >= 2")
        if self.q_kind not in ("uniform", "random"):
            raise ConfigError("q_kind must be 'uniform' or 'random'")
        if self.stage2 not in ("auto", "esw", "lfht"):
            raise ConfigError("stage2 must be auto, esw or lfht")
        if self.delta is not None and not 0 < self.delta < 0.5:
            raise ConfigError("delta must lie in (0, 1/2)")
        needs_paninski = (self.variant in ("known-known", "both-unknown", "uniformity", "l2", "esw",
                                           "multi-lfht", "find-one-unknown")
                          or (self.variant == "one-known" and self.q_kind == "uniform"))
        if self.variant == "known-known" and (self.p is not None or self.q is not None):
            if self.p is None or self.q is None:
                raise ConfigError("give both p and q or neither")
            if len(self.p) != self.n or len(self.q) != self.n:
                raise ConfigError("p and q must have n entries")
            needs_paninski = False
        if needs_paninski and (self.n < 2 or self.eps > 0.5 or (self.n // 2) / self.n < self.eps):
            raise ConfigError("far-from-uniform instances need n >= 2 and eps <= floor(n/2)/n <= 1/2")
        if self.threads < 1:
            raise ConfigError("threads must be positive")
        try:
            DEFAULT.with_overrides(**self.constants)
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass
class TrialReport:
    success: bool
    budget: BudgetLedger
    reported: int
    rounds: int
    seed: tuple[int, int]
    aborted: bool = False

    @property
    def accounting_ok(self) -> bool:
        return self.reported == self.budget.total


def wilson_interval(successes: int, trials: int, confidence: float = 0.95) -> tuple[float, float]:
    if trials == 0:
        return 0.0, 1.0
    ci = binomtest(successes, trials).proportion_ci(confidence_level=confidence, method="wilson")
    return float(ci.low), float(ci.high)


@dataclass
class Aggregate:
    config: ExperimentConfig
    successes: int
    trials: int
    success_rate: float
    wilson_interval: tuple[float, float]
    mean_budget: float
    p95_budget: float
    abort_rate: float
    reports: list[TrialReport] = field(repr=False)

    @property
    def accounting_ok(self) -> bool:
        return all(r.accounting_ok for r in self.reports)

    def meets(self, target: float) -> bool:
        """Success rate within its Wilson half-width of ``target`` or above."""
        return self.wilson_interval[1] >= target

    def summary(self) -> dict:
        return {
            "variant": self.config.variant,
            "n": self.config.n,
            "k": self.config.k,
            "r": self.config.r,
            "eps": self.config.eps,
            "trials": self.trials,
            "success_rate": self.success_rate,
            "wilson_interval": list(self.wilson_interval),
            "mean_budget": self.mean_budget,
            "p95_budget": self.p95_budget,
            "abort_rate": self.abort_rate,
            "accounting_ok": self.accounting_ok,
        }


# ---------------------------------------------------------------- instances


def trial_seed(seed: int, trial: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(seed, spawn_key=(trial,))


def _aux_rng(ss: np.random.SeedSequence, k: int, slot: int) -> np.random.Generator:
    # indices below k + 8 belong to oracles and the partition draw
    return np.random.default_rng(oracle_seed(ss, k + 8 + slot))


def far_from_uniform(n: int, eps: float, rng) -> Pmf:
    """Paninski pmf for even ``n``; for odd ``n`` the same tilt on a random half of size ``n // 2``."""
    if n % 2 == 0:
        return make_paninski(n, eps, rng)
    return make_tilted(Pmf.uniform(n), eps, rng)


def pipeline_rng(ss: np.random.SeedSequence, k: int) -> np.random.Generator:
    """Generator for the algorithm's own coin flips in a pipeline trial."""
    return _aux_rng(ss, k, 0)


def build_instance(config: ExperimentConfig, ss: np.random.SeedSequence) -> tuple[ClusterInstance, Pmf | None]:
    """Pipeline instance for one trial, plus the known pmf of a one-known instance."""
    n, k, r, eps = config.n, config.k, config.r, config.eps
    pmf_rng = _aux_rng(ss, k, 1)
    if config.variant == "known-known":
        if config.p is not None:
            p, q = Pmf(config.p), Pmf(config.q)
        else:
            p, q = Pmf.uniform(n), far_from_uniform(n, eps, pmf_rng)
        return make_instance(n, k, r, p, q, seed=ss), None
    if config.variant == "one-known":
        if config.q_kind == "uniform":
            known = Pmf.uniform(n)
            far = far_from_uniform(n, eps, pmf_rng)
        else:
            known = Pmf.random(n, pmf_rng)
            far = make_tilted(known, eps, pmf_rng)
        # the r oracles of the hidden set carry the unknown pmf
        return make_instance(n, k, r, known, far, seed=ss, eps=eps), known
    if config.variant == "both-unknown":
        return make_instance(n, k, r, Pmf.uniform(n), far_from_uniform(n, eps, pmf_rng), seed=ss), None
    raise ConfigError(f"{config.variant} is not a pipeline variant")


def instance_descriptor(config: ExperimentConfig, trial: int = 0) -> dict:
    """JSON-ready description of the instance used by ``trial`` of ``config``."""
    config.validate()
    if config.variant not in PIPELINES:
        raise ConfigError("descriptors exist for pipeline variants only")
    inst, known = build_instance(config, trial_seed(config.seed, trial))
    return {
        "variant": config.variant,
        "n": inst.n,
        "k": inst.k,
        "r": inst.r,
        "eps": inst.eps,
        "family": "custom" if config.p is not None or config.q_kind == "random" else "paninski",
        "seed": config.seed,
        "trial": trial,
        "p": inst.p.probs.tolist(),
        "q": inst.q.probs.tolist(),
        "q_known": None if known is None else known.probs.tolist(),
        "hidden_partition": sorted(inst.hidden_partition),
    }


def instance_from_descriptor(desc: dict) -> tuple[ClusterInstance, Pmf | None]:
    n, k = int(desc["n"]), int(desc["k"])
    p, q = Pmf(desc["p"]), Pmf(desc["q"])
    hidden = frozenset(int(i) for i in desc["hidden_partition"])
    ss = trial_seed(int(desc.get("seed", 0)), int(desc.get("trial", 0)))
    oracles = [SampleOracle(q if i in hidden else p, np.random.default_rng(oracle_seed(ss, i)))
               for i in range(k)]
    inst = ClusterInstance(oracles, hidden, n, k, len(hidden), float(desc["eps"]), p, q)
    known = None if desc.get("q_known") is None else Pmf(desc["q_known"])
    return inst, known


def run_pipeline(variant: str, instance: ClusterInstance, known: Pmf | None, config: ExperimentConfig,
                 constants: Constants, rng: np.random.Generator) -> ClusterResult:
    r_known = instance.r if config.r_known else None
    if variant == "known-known":
        return cluster_known_known(instance, constants=constants)
    if variant == "one-known":
        return cluster_one_known(known, instance, instance.n, instance.k, instance.eps, r_known,
                                 config.stage2, constants, rng)
    if variant == "both-unknown":
        return cluster_both_unknown(instance, instance.n, instance.k, instance.eps, r_known, constants, rng)
    raise ConfigError(f"{variant} is not a pipeline variant")


# ---------------------------------------------------------------- trials


def _oracle(pmf: Pmf, ss, index: int) -> SampleOracle:
    return SampleOracle(pmf, np.random.default_rng(oracle_seed(ss, index)))


def _primitive_trial(config: ExperimentConfig, constants: Constants, ss, trial: int):
    """Returns (success, oracles, reported, aborted)."""
    n, k, r, eps = config.n, config.k, config.r, config.eps
    rng = _aux_rng(ss, k, 0)
    far = trial % 2 == 1
    v = config.variant
    if v == "uniformity":
        pmf = far_from_uniform(n, eps, _aux_rng(ss, k, 1)) if far else Pmf.uniform(n)
        o = _oracle(pmf, ss, 0)
        verdict = uniformity_test(o, n, eps, config.delta or 1 / 3, constants, config.repetitions)
        return verdict.rejected == far, [o], verdict.samples_used[0], False
    if v == "l2":
        other = far_from_uniform(n, eps, _aux_rng(ss, k, 1)) if far else Pmf.uniform(n)
        oa, ob = _oracle(Pmf.uniform(n), ss, 0), _oracle(other, ss, 1)
        b = math.sqrt(Pmf.uniform(n).l2_norm_sq())
        verdict = l2_closeness_test(oa, ob, n, eps, config.delta or 1 / 3, b, constants, config.repetitions)
        return verdict.rejected == far, [oa, ob], sum(verdict.samples_used), False
    if v == "bernoulli":
        alpha = config.beta * (1 + config.eta) if far else config.beta
        o = _oracle(Pmf([1 - alpha, alpha]), ss, 0)
        verdict = bernoulli_gap_test(IndicatorOracle(o, np.array([False, True])), config.beta, config.eta,
                                     config.delta or 1 / 3, constants)
        return (verdict.decision.value == "high") == far, [o], verdict.samples_used[0], False
    if v == "esw":
        size = (0, k // 2, k)[trial % 3]
        p = far_from_uniform(n, eps, _aux_rng(ss, k, 1))
        chosen = set(int(i) for i in rng.choice(k, size=size, replace=False))
        targets = [_oracle(p if i in chosen else Pmf.uniform(n), ss, i) for i in range(k)]
        op = _oracle(p, ss, k)
        params = esw_params(n, k, eps, constants)
        got = esw_tester(op, targets, n, k, eps, constants)
        return got == chosen, targets + [op], params.s1 + k * params.s2, False
    if v == "multi-lfht":
        p, q = Pmf.uniform(n), far_from_uniform(n, eps, _aux_rng(ss, k, 1))
        is_q = np.zeros(k, dtype=bool)
        is_q[rng.choice(k, size=r, replace=False)] = True
        targets = [_oracle(q if is_q[i] else p, ss, i) for i in range(k)]
        op, oq = _oracle(p, ss, k), _oracle(q, ss, k + 1)
        budget = lfht_budget(n, k, eps, constants)
        labels = multi_lfht(op, oq, targets, n, k, eps, constants)
        ok = all((lab is Label.Q) == is_q[i] for i, lab in enumerate(labels))
        return ok, targets + [op, oq], 2 * budget.s1 + k * budget.s2, False
    if v == "find-one-unknown":
        q = far_from_uniform(n, eps, _aux_rng(ss, k, 1))
        odd = np.zeros(k, dtype=bool)
        if far:
            odd[rng.choice(k, size=max(1, r), replace=False)] = True
        targets = [_oracle(q if odd[i] else Pmf.uniform(n), ss, i) for i in range(k)]
        res = find_one_unknown(targets, n, eps, constants, rng)
        if res.outcome is FindOutcome.ABORT:
            ok = False
        elif not far:
            ok = res.outcome is FindOutcome.ALL_IDENTICAL
        else:
            ok = res.found and odd[res.outcome] != odd[0]
        return ok, targets, res.samples, res.outcome is FindOutcome.ABORT
    raise ConfigError(f"unknown variant {v!r}")


def run_trial(config: ExperimentConfig, trial: int, constants: Constants | None = None) -> TrialReport:
    constants = (constants or DEFAULT).with_overrides(**config.constants)
    ss = trial_seed(config.seed, trial)
    if config.variant in PIPELINES:
        instance, known = build_instance(config, ss)
        result = run_pipeline(config.variant, instance, known, config, constants, pipeline_rng(ss, config.k))
        return TrialReport(instance.is_correct(result.partition), instance.ledger(), result.samples,
                           instance.rounds, (config.seed, trial), aborted=not result.stage1_found)
    ok, oracles, reported, aborted = _primitive_trial(config, constants, ss, trial)
    return TrialReport(bool(ok), BudgetLedger([o.ledger for o in oracles]), int(reported), 1,
                       (config.seed, trial), aborted=aborted)


def _trial_chunk(args) -> list[TrialReport]:
    config, trials, constants = args
    return [run_trial(config, t, constants) for t in trials]


def run_trials(config: ExperimentConfig, constants: Constants | None = None) -> Aggregate:
    """Run ``config.trials`` independent seeded trials and aggregate them."""
    config.validate()
    indices = list(range(config.trials))
    if config.threads > 1 and config.trials > 1:
        chunks = [indices[i::config.threads] for i in range(config.threads)]
        with ProcessPoolExecutor(config.threads) as pool:
            parts = list(pool.map(_trial_chunk, [(config, c, constants) for c in chunks]))
        by_trial = {rep.seed[1]: rep for part in parts for rep in part}
        reports = [by_trial[i] for i in indices]
    else:
        reports = _trial_chunk((config, indices, constants))
    return aggregate(config, reports)


def aggregate(config: ExperimentConfig, reports: list[TrialReport]) -> Aggregate:
    successes = sum(r.success for r in reports)
    budgets = np.array([r.reported for r in reports], dtype=float)
    trials = len(reports)
    return Aggregate(
        config=config,
        successes=successes,
        trials=trials,
        success_rate=successes / trials,
        wilson_interval=wilson_interval(successes, trials),
        mean_budget=float(budgets.mean()),
        p95_budget=float(np.percentile(budgets, 95)),
        abort_rate=sum(r.aborted for r in reports) / trials,
        reports=reports,
    )


# ---------------------------------------------------------------- theory


def theoretical_budget(variant: str, n: int, k: int, r: int, eps: float) -> float:
    """Upper-bound sample complexity with unit constants and natural logs."""
    lk = log_k(k)
    if variant == "known-known":
        return k * lk / eps**2
    if variant == "one-known":
        stage1 = k * lk * math.sqrt(n) / (r * eps**2)
        stage2 = math.sqrt(n * k * lk) / eps**2 if n >= k * lk else k * lk / eps**2
        return stage1 + stage2
    if variant == "both-unknown":
        stage1 = max((n * k / (r * eps**2)) ** (2 / 3), k * math.sqrt(n) / (r * eps**2)) * lk
        regime = lfht_regime(n, k, eps)
        if regime is Regime.LARGE_N:
            stage2 = (n**2 * k * lk / eps**4) ** (1 / 3)
        elif regime is Regime.MID_N:
            stage2 = math.sqrt(n * k * lk) / eps**2
        else:
            stage2 = k * lk / eps**2
        return stage1 + stage2
    raise ConfigError(f"no closed-form budget for variant {variant!r}")


# ---------------------------------------------------------------- sweep

CSV_FIELDS = ["schema", "variant", "n", "k", "r", "eps", "trials", "seed", "r_known", "q_kind",
              "success_rate", "ci_low", "ci_high", "mean_budget", "p95_budget",
              "theoretical_budget", "ratio", "error"]


def sweep_rows(configs, constants: Constants | None = None) -> list[dict]:
    """One row per config; a failing config yields a row with ``error`` set."""
    rows = []
    for cfg in configs:
        row = {"schema": f"v{CSV_VERSION}", "variant": cfg.variant, "n": cfg.n, "k": cfg.k, "r": cfg.r,
               "eps": cfg.eps, "trials": cfg.trials, "seed": cfg.seed, "r_known": cfg.r_known,
               "q_kind": cfg.q_kind}
        try:
            agg = run_trials(cfg, constants)
            theory = theoretical_budget(cfg.variant, cfg.n, cfg.k, cfg.r, cfg.eps) \
                if cfg.variant in PIPELINES else float("nan")
            row.update(success_rate=agg.success_rate, ci_low=agg.wilson_interval[0],
                       ci_high=agg.wilson_interval[1], mean_budget=agg.mean_budget,
                       p95_budget=agg.p95_budget, theoretical_budget=theory,
                       ratio=agg.mean_budget / theory, error="")
        except Exception as exc:  # recorded per row, the sweep goes on
            log.warning("config %s failed: %s", cfg, exc)
            row.update({k: "" for k in CSV_FIELDS if k not in row}, error=f"{type(exc).__name__}: {exc}")
        rows.append(row)
    return rows


def rows_to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_FIELDS, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
    return buf.getvalue()


def expand_grid(base: ExperimentConfig, grid: dict) -> list[ExperimentConfig]:
    """Cartesian product of ``grid`` values over the fields of ``base``."""
    configs = [base]
    for key, values in grid.items():
        configs = [ExperimentConfig.from_dict({**c.to_dict(), key: v}) for c in configs for v in values]
    return configs


# ---------------------------------------------------------------- calibration


class NonMonotoneError(RuntimeError):
    pass


@dataclass
class CalibrationResult:
    name: str
    value: float
    target_error: float
    trials: int
    observations: list[tuple[float, float, float, float]]  # (value, error, ci low, ci high)


def _check_monotone(obs) -> None:
    """A larger constant must never be significantly worse than a smaller one."""
    ordered = sorted(obs)
    for i, (_, _, _, hi_a) in enumerate(ordered):
        for _, _, lo_b, _ in ordered[i + 1:]:
            if lo_b > hi_a:
                raise NonMonotoneError(
                    "error increased with the constant: "
                    + ", ".join(f"{v:.4g}: {e:.4f}" for v, e, _, _ in ordered))


def calibrate(name: str, target_error: float, search_range: tuple[float, float],
              config: ExperimentConfig, trials: int = 2000, iterations: int = 8,
              base: Constants | None = None, out_path=None) -> CalibrationResult:
    """Smallest ``name`` in ``search_range`` whose error upper bound is at most ``target_error``.

    Bisects on a log scale with common random numbers (same seeds) at every
    probe; the Wilson upper bound of the error rate over ``trials`` trials
    must not exceed ``target_error``. Raises ``NonMonotoneError`` when a
    larger constant is significantly worse, or when the top of the range
    misses the target. When ``out_path`` is given the constant is merged into
    that JSON file.
    """
    base = base or DEFAULT
    if name not in {f.name for f in fields(Constants)}:
        raise ConfigError(f"unknown constant {name!r}")
    lo, hi = search_range
    if not 0 < lo < hi:
        raise ConfigError("search range must satisfy 0 < lo < hi")
    cfg = ExperimentConfig.from_dict({**config.to_dict(), "trials": trials})
    cfg.validate()
    obs = []

    def probe(value) -> bool:
        agg = run_trials(cfg, base.with_overrides(**{name: value}))
        fails = agg.trials - agg.successes
        ci = wilson_interval(fails, agg.trials)
        obs.append((value, fails / agg.trials, ci[0], ci[1]))
        log.info("calibrate %s=%.5g: error %.4f (upper %.4f)", name, value, fails / agg.trials, ci[1])
        return ci[1] <= target_error

    if not probe(hi):
        raise NonMonotoneError(f"{name}={hi} does not reach error {target_error}; widen the range")
    if probe(lo):
        best = lo
    else:
        best = hi
        for _ in range(iterations):
            mid = math.sqrt(lo * hi)
            if probe(mid):
                hi = best = mid
            else:
                lo = mid
    _check_monotone(obs)
    result = CalibrationResult(name, best, target_error, trials, obs)
    if out_path is not None:
        write_calibration(out_path, result, base)
    return result


def write_calibration(path, result: CalibrationResult, base: Constants) -> None:
    path = Path(path)
    data = json.loads(path.read_text()) if path.exists() else {}
    consts = {**base.to_dict(), **data.get("constants", {}), result.name: result.value}
    data["constants"] = consts
    data.setdefault("calibration", {})[result.name] = {
        "value": result.value,
        "target_error": result.target_error,
        "trials": result.trials,
        "observations": [list(o) for o in result.observations],
    }
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


@dataclass
class ScaleSearch:
    scale: float
    aggregate: Aggregate
    probes: list[tuple[float, float, float]]  # (scale, success rate, mean budget)
    runs: list[Aggregate] = field(default_factory=list, repr=False)


def min_budget_scale(config: ExperimentConfig, target: float = 2 / 3, search_range=(1 / 16, 4.0),
                     iterations: int = 7, base: Constants | None = None) -> ScaleSearch:
    """Smallest global multiplier of the sample-budget constants reaching ``target`` success.

    Every probe reuses ``config.seed``, so probes differ only through the
    budgets. The returned aggregate is the run at the chosen scale.
    """
    base = base or DEFAULT
    config.validate()
    lo, hi = search_range
    probes, runs = [], []

    def probe(scale):
        agg = run_trials(config, base.scaled(scale))
        probes.append((scale, agg.success_rate, agg.mean_budget))
        runs.append(agg)
        log.info("scale %.4g: success %.3f, budget %.4g", scale, agg.success_rate, agg.mean_budget)
        return agg

    best = probe(hi)
    if best.success_rate < target:
        raise NonMonotoneError(f"scale {hi} misses success {target}; widen the range")
    best_scale = hi
    for _ in range(iterations):
        mid = math.sqrt(lo * hi)
        agg = probe(mid)
        if agg.success_rate >= target:
            hi, best, best_scale = mid, agg, mid
        else:
            lo = mid
    return ScaleSearch(best_scale, best, probes, runs)
