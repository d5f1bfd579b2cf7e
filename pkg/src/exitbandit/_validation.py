"""Input checks shared by the estimator and the harness."""

from __future__ import annotations

import numpy as np
from sklearn.utils.validation import check_array


def check_thresholds(thresholds) -> np.ndarray:
    arr = np.asarray(thresholds, dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError("thresholds must be a non-empty 1-d sequence")
    if np.any((arr < 0) | (arr > 1)):
        raise ValueError("thresholds must lie in [0, 1]")
    if np.any(np.diff(arr) <= 0):
        raise ValueError("thresholds must be strictly increasing")
    return arr


def check_exit_matrix(X, n_exits: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Split ``X`` of shape (n, 2L) into confidences and gating scores.

    The first L columns are per-exit confidences, the last L the gating scores.
    """
    X = check_array(X, dtype=np.float64, ensure_min_samples=1, ensure_min_features=2)
    if X.shape[1] % 2:
        raise ValueError(f"X needs an even number of columns (L confidences + L gating), got {X.shape[1]}")
    L = X.shape[1] // 2
    if n_exits is not None and L != n_exits:
        raise ValueError(f"X has {L} exits, estimator was fitted with {n_exits}")
    if np.any((X < 0) | (X > 1)):
        raise ValueError("confidences and gating scores must lie in [0, 1]")
    return X[:, :L], X[:, L:]


def check_correctness(y, shape) -> np.ndarray:
    y = check_array(y, dtype=None, ensure_min_features=1)
    if y.shape != shape:
        raise ValueError(f"y must have shape {shape} (per-exit correctness), got {y.shape}")
    return y.astype(bool)
