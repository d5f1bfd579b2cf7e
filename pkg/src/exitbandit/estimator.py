"""scikit-learn style wrapper: learn a threshold online from logged exit data."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_correctness, check_exit_matrix, check_thresholds
from .environment import ReplayEnvironment, SampleBatch, exit_indices
from .harness import run_episode
from .policies import PolicyConfig


class ThresholdSelector(BaseEstimator):
    """Pick an early-exit confidence threshold with a UCB policy.

    ``fit`` replays the rows of ``X`` in order as the online stream, so it is a
    single pass of the bandit loop, not a batch optimisation.  ``X`` has shape
    (n_samples, 2 * n_exits): per-exit confidences followed by per-exit gating
    scores.  ``y`` (optional) holds per-exit correctness flags of the same
    (n_samples, n_exits) shape.

    Attributes set by ``fit``: ``threshold_`` (most pulled arm, lowest on ties),
    ``arm_counts_``, ``policy_``, ``log_`` (an EpisodeLog) and ``n_exits_``.
    """

    def __init__(
        self,
        policy="UCB1",
        thresholds=(0.5, 0.6, 0.7, 0.8, 0.9),
        epsilon=0.01,
        policy_params=None,
        latency_ms=None,
        energy_units=None,
    ):
        self.policy = policy
        self.thresholds = thresholds
        self.epsilon = epsilon
        self.policy_params = policy_params
        self.latency_ms = latency_ms
        self.energy_units = energy_units

    def _batch(self, conf, gating, y):
        n, L = conf.shape
        lat = np.arange(1, L + 1, dtype=float) if self.latency_ms is None else np.asarray(self.latency_ms, float)
        en = lat if self.energy_units is None else np.asarray(self.energy_units, float)
        if lat.shape != (L,) or en.shape != (L,):
            raise ValueError(f"latency_ms and energy_units need {L} entries")
        correct = np.zeros((n, L), dtype=bool) if y is None else check_correctness(y, (n, L))
        return SampleBatch(conf, correct, gating,
                           np.broadcast_to(lat, (n, L)), np.broadcast_to(en, (n, L)))

    def fit(self, X, y=None):
        thetas = check_thresholds(self.thresholds)
        conf, gating = check_exit_matrix(X)
        if conf.shape[0] < len(thetas):
            raise ValueError(f"need at least {len(thetas)} samples for the forced initial pulls")
        env = ReplayEnvironment(self._batch(conf, gating, y))
        policy = PolicyConfig(kind=self.policy, **(self.policy_params or {})).build()
        self.log_ = run_episode(policy, env, thetas, conf.shape[0], None, epsilon=self.epsilon)
        self.policy_ = policy
        self.arm_counts_ = np.array(policy.counts)
        self.threshold_ = float(thetas[int(np.argmax(self.arm_counts_))])
        self.n_exits_ = conf.shape[1]
        return self

    def predict(self, X):
        """1-based exit index per row under the learned threshold."""
        check_is_fitted(self, "threshold_")
        conf, _ = check_exit_matrix(X, self.n_exits_)
        return exit_indices(conf, self.threshold_)

    def score(self, X, y):
        """Accuracy of the exits taken under the learned threshold."""
        exits = self.predict(X)
        y = check_correctness(y, (len(exits), self.n_exits_))
        return float(y[np.arange(len(exits)), exits - 1].mean())
