"""Upper Confidence Bound policies for choosing an early-exit threshold.

Five strategies share one online protocol::

    policy = make_policy("UCB-V").reset(n_arms=5)
    for t in range(1, T + 1):
        arm = policy.select_arm(t)
        reward, cost = ...            # observe the environment
        policy.update(arm, reward, cost)

The policies are scikit-learn estimators in the parameter sense: constructor
arguments are stored untouched, ``get_params``/``set_params``/``clone`` work, and
all learned state lives in trailing-underscore attributes created by ``reset``.

Index functions are exposed on their own so they can be checked against hand
computations.  An arm with zero pulls gets ``math.inf``, which forces it to be
selected before any index comparison happens.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache

from sklearn.base import BaseEstimator

from .numerics import inverse_normal_cdf

logger = logging.getLogger(__name__)

FORCED_PULL = math.inf
TUNED_VARIANCE_CAP = 0.25
BETA_FLOOR = 1e-12

POLICY_KINDS = ("UCB1", "UCB-V", "UCB-Tuned", "UCB-Bayes", "UCB-BwK")


class RewardRangeError(ValueError):
    """A reward outside [0, 1] reached a policy."""


@dataclass
class ArmState:
    """Running statistics for one arm.

    ``reward_mean`` and ``cost_mean`` are maintained with the incremental-mean
    recurrence (the cost-aware policy reads them); the other policies use the sums.
    """

    pulls: int = 0
    reward_sum: float = 0.0
    reward_sq_sum: float = 0.0
    cost_sum: float = 0.0
    reward_mean: float = 0.0
    cost_mean: float = 0.0

    @property
    def mean(self) -> float:
        return self.reward_sum / self.pulls if self.pulls else 0.0

    @property
    def variance(self) -> float:
        """Population variance S2/N - mean^2, clamped at zero."""
        if not self.pulls:
            return 0.0
        m = self.reward_sum / self.pulls
        return max(self.reward_sq_sum / self.pulls - m * m, 0.0)

    def record(self, reward: float, cost: float = 0.0) -> None:
        self.pulls += 1
        self.reward_sum += reward
        self.reward_sq_sum += reward * reward
        self.cost_sum += cost
        self.reward_mean += (reward - self.reward_mean) / self.pulls
        self.cost_mean += (cost - self.cost_mean) / self.pulls


@dataclass(frozen=True)
class NigPosterior:
    lambda_: float
    mu: float
    alpha: float
    beta: float
    sigma: float


@dataclass
class PolicyConfig:
    """Declarative policy description, as read from an experiment config."""

    kind: str = "UCB1"
    name: str | None = None
    B: float = 1.0
    prior_mu0: float = 0.5
    prior_lambda0: float = 1.0
    prior_alpha0: float = 2.0
    prior_beta0: float = 0.1
    quantile_exponent: float = 1.0
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in POLICY_KINDS:
            raise ValueError(f"unknown policy kind {self.kind!r}; expected one of {POLICY_KINDS}")
        if self.name is None:
            self.name = self.kind
        if self.B <= 0:
            raise ValueError("B must be positive")
        if self.prior_lambda0 <= 0 or self.prior_alpha0 <= 1 or self.prior_beta0 <= 0:
            raise ValueError("NIG prior needs lambda0 > 0, alpha0 > 1, beta0 > 0")
        if self.quantile_exponent <= 0:
            raise ValueError("quantile_exponent must be positive")

    def build(self) -> "BasePolicy":
        if self.kind == "UCB-V":
            return UCBV(B=self.B)
        if self.kind == "UCB-Bayes":
            return UCBBayes(
                mu0=self.prior_mu0,
                lambda0=self.prior_lambda0,
                alpha0=self.prior_alpha0,
                beta0=self.prior_beta0,
                quantile_exponent=self.quantile_exponent,
            )
        return {"UCB1": UCB1, "UCB-Tuned": UCBTuned, "UCB-BwK": UCBBwK}[self.kind]()


# -- index formulas ---------------------------------------------------------


def ucb1_index(state: ArmState, t: int) -> float:
    n = state.pulls
    if n == 0:
        return FORCED_PULL
    return state.reward_sum / n + math.sqrt(2.0 * math.log(t) / n)


def ucbv_index(state: ArmState, t: int, B: float = 1.0) -> float:
    n = state.pulls
    if n == 0:
        return FORCED_PULL
    log_t = math.log(t)
    return state.mean + math.sqrt(2.0 * state.variance * log_t / n) + 3.0 * B * log_t / n


def tuned_variance(state: ArmState, t: int) -> float:
    """Variance estimate inflated by sqrt(2 ln t / N) and capped at 1/4."""
    return min(state.variance + math.sqrt(2.0 * math.log(t) / state.pulls), TUNED_VARIANCE_CAP)


def ucb_tuned_index(state: ArmState, t: int) -> float:
    n = state.pulls
    if n == 0:
        return FORCED_PULL
    return state.mean + math.sqrt(math.log(t) / n * tuned_variance(state, t))


def nig_posterior(
    state: ArmState,
    mu0: float = 0.5,
    lambda0: float = 1.0,
    alpha0: float = 2.0,
    beta0: float = 0.1,
) -> NigPosterior:
    """Normal-Inverse-Gamma posterior from the arm's reward sums."""
    n = state.pulls
    lam = lambda0 + n
    mu = (lambda0 * mu0 + state.reward_sum) / lam
    alpha = alpha0 + n / 2.0
    beta = beta0 + 0.5 * (state.reward_sq_sum + lambda0 * mu0 * mu0 - lam * mu * mu)
    if beta <= 0.0:
        logger.warning("NIG scale collapsed to %r after cancellation; clamping to %g", beta, BETA_FLOOR)
        beta = BETA_FLOOR
    sigma = math.sqrt(beta / ((alpha - 1.0) * lam))
    return NigPosterior(lam, mu, alpha, beta, sigma)


def bayes_quantile(t: int, alpha: float = 1.0) -> float:
    if t < 3:
        return 0.95
    return 1.0 - 1.0 / (t * math.log(t) ** alpha)


@lru_cache(maxsize=65536)
def bayes_z(t: int, alpha: float = 1.0) -> float:
    """Gaussian quantile of ``bayes_quantile``; cached since it only depends on t."""
    return inverse_normal_cdf(bayes_quantile(t, alpha))


def ucb_bayes_index(
    state: ArmState,
    t: int,
    mu0: float = 0.5,
    lambda0: float = 1.0,
    alpha0: float = 2.0,
    beta0: float = 0.1,
    quantile_exponent: float = 1.0,
) -> float:
    if state.pulls == 0:
        return FORCED_PULL
    post = nig_posterior(state, mu0, lambda0, alpha0, beta0)
    return post.mu + bayes_z(t, quantile_exponent) * post.sigma


def bwk_cost_floor(t: int) -> float:
    return math.sqrt(math.log(t) / t)


def bwk_bounds(state: ArmState, t: int) -> tuple[float, float]:
    """(reward UCB, cost LCB) for the cost-aware policy."""
    conf = math.sqrt(2.0 * math.log(t) / state.pulls)
    return state.reward_mean + conf, max(state.cost_mean - conf, bwk_cost_floor(t))


def ucb_bwk_index(state: ArmState, t: int) -> float:
    if state.pulls == 0:
        return FORCED_PULL
    ucb_r, lcb_c = bwk_bounds(state, t)
    if lcb_c <= 0.0:
        raise ValueError(f"cost lower bound is {lcb_c} at t={t}; the ratio index needs t >= 2")
    return ucb_r / lcb_c


# -- policies ---------------------------------------------------------------


class BasePolicy(BaseEstimator):
    """Shared select/update loop.  Subclasses implement :meth:`index`."""

    kind = "base"
    uses_cost = False

    def reset(self, n_arms: int) -> "BasePolicy":
        if n_arms < 1:
            raise ValueError("a policy needs at least one arm")
        self.arms_ = [ArmState() for _ in range(n_arms)]
        self.t_ = 0
        return self

    @property
    def n_arms(self) -> int:
        return len(self.arms_)

    def index(self, state: ArmState, t: int) -> float:
        raise NotImplementedError

    def indices(self, t: int) -> list[float]:
        return [self.index(a, t) for a in self.arms_]

    def select_arm(self, t: int | None = None) -> int:
        """Lowest-numbered unpulled arm, else argmax of the index (first max wins)."""
        if not getattr(self, "arms_", None):
            raise ValueError("policy has no arms; call reset(n_arms) first")
        if t is None:
            t = self.t_ + 1
        arms = self.arms_
        for i, a in enumerate(arms):
            if a.pulls == 0:
                return i
        best, best_val = 0, -math.inf
        for i, a in enumerate(arms):
            v = self.index(a, t)
            if v > best_val:
                best, best_val = i, v
        return best

    def update(self, arm: int, reward: float, cost: float = 0.0) -> "BasePolicy":
        if not 0.0 <= reward <= 1.0:
            raise RewardRangeError(f"reward {reward!r} outside [0, 1]")
        if not 0 <= arm < len(self.arms_):
            raise IndexError(f"arm {arm} out of range for {len(self.arms_)} arms")
        self.arms_[arm].record(reward, cost if self.uses_cost else 0.0)
        self.t_ += 1
        return self

    def partial_fit(self, arm: int, reward: float, cost: float = 0.0) -> "BasePolicy":
        return self.update(arm, reward, cost)

    @property
    def counts(self) -> list[int]:
        return [a.pulls for a in self.arms_]


class UCB1(BasePolicy):
    kind = "UCB1"

    def index(self, state, t):
        return ucb1_index(state, t)


class UCBV(BasePolicy):
    kind = "UCB-V"

    def __init__(self, B: float = 1.0):
        self.B = B

    def index(self, state, t):
        return ucbv_index(state, t, self.B)


class UCBTuned(BasePolicy):
    kind = "UCB-Tuned"

    def index(self, state, t):
        return ucb_tuned_index(state, t)


class UCBBayes(BasePolicy):
    kind = "UCB-Bayes"

    def __init__(
        self,
        mu0: float = 0.5,
        lambda0: float = 1.0,
        alpha0: float = 2.0,
        beta0: float = 0.1,
        quantile_exponent: float = 1.0,
    ):
        self.mu0 = mu0
        self.lambda0 = lambda0
        self.alpha0 = alpha0
        self.beta0 = beta0
        self.quantile_exponent = quantile_exponent

    def posterior(self, arm: int) -> NigPosterior:
        return nig_posterior(self.arms_[arm], self.mu0, self.lambda0, self.alpha0, self.beta0)

    def index(self, state, t):
        return ucb_bayes_index(
            state, t, self.mu0, self.lambda0, self.alpha0, self.beta0, self.quantile_exponent
        )


class UCBBwK(BasePolicy):
    """Reward-to-cost ratio policy without a budget."""

    kind = "UCB-BwK"
    uses_cost = True

    def select_arm(self, t=None):
        if getattr(self, "arms_", None) and any(a.pulls == 0 for a in self.arms_):
            # argmin of pulls, lowest index on ties
            counts = self.counts
            return counts.index(min(counts))
        return super().select_arm(t)

    def index(self, state, t):
        return ucb_bwk_index(state, t)


def make_policy(kind: str | PolicyConfig, **params) -> BasePolicy:
    """Build a policy from a kind name (``"UCB-Tuned"``) or a :class:`PolicyConfig`."""
    if isinstance(kind, PolicyConfig):
        return kind.build()
    return PolicyConfig(kind=kind, **params).build()
