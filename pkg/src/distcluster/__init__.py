"""Sample-efficient clustering of discrete distributions into two groups."""

from .clustering import (
    ClusterResult,
    FindOutcome,
    FindResult,
    Partition,
    RoundPlan,
    cluster_both_unknown,
    cluster_known_known,
    cluster_one_known,
    find_exemplar_nonuniform,
    find_one_unknown,
    make_round_plan,
    scheffe_cluster,
)
from .constants import DEFAULT, Constants
from .core import (
    ClusterInstance,
    DomainMismatch,
    Pmf,
    SampleOracle,
    make_instance,
    make_paninski,
    make_tilted,
    scheffe_set,
    tv_distance,
)
from .esw import PreconditionError, esw_params, esw_tester, expected_uniform_mass, set_mass_tail_oracle
from .harness import ExperimentConfig, run_trials, theoretical_budget, wilson_interval
from .lfht import Label, Regime, lfht_budget, lfht_classify, multi_lfht
from .reductions import (
    Channel,
    FlattenSketch,
    build_flatten_channel,
    build_identity_channel,
    pushforward,
    transform_oracle,
)
from .testers import Decision, bernoulli_gap_test, l2_closeness_test, uniformity_test

__version__ = "0.1.0"
