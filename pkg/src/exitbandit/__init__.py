"""UCB bandit policies for online early-exit threshold selection."""

from .analytics import (
    EpisodeLog,
    StepLog,
    TradeoffPoint,
    aggregate,
    cumulative_regret,
    pareto_frontier,
    sublinearity_check,
)
from .environment import (
    ExitOutcome,
    ExitProfile,
    ReplayEnvironment,
    SyntheticEnvironment,
    TraceRecord,
    arm_mean_rewards,
    compute_reward,
    lambda_from_epsilon,
    load_trace,
    resolve_exit,
    synth_sample,
    synth_samples,
    write_trace,
)
from .estimator import ThresholdSelector
from .harness import ExperimentConfig, load_config, run_episode, run_grid
from .numerics import RngStream, inverse_normal_cdf, normal_cdf, sample_gaussian
from .policies import (
    UCB1,
    UCBV,
    ArmState,
    NigPosterior,
    PolicyConfig,
    UCBBayes,
    UCBBwK,
    UCBTuned,
    make_policy,
)

__version__ = "0.1.0"
