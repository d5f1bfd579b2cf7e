"""Seeded SplitMix64 streams and the Gaussian special functions used by the policies.

Every random draw in the package comes from :class:`RngStream`.  The generator is
counter based (SplitMix64 advances its state by a fixed odd constant), so a block
of ``n`` draws can be produced with numpy in one shot and still match ``n``
sequential :meth:`RngStream.next_u64` calls bit for bit.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np
from scipy.special import erfc

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB

# smallest positive value of next_unit and its mirror below 1
UNIT_EPS = 2.0**-53
_SQRT2 = float(np.sqrt(2.0))
_SQRT2PI = float(np.sqrt(2.0 * np.pi))


def mix64(z: int) -> int:
    """SplitMix64 finalizer on a Python int."""
    z = ((z ^ (z >> 30)) * _MIX1) & MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & MASK64
    return z ^ (z >> 31)


def _mix64_array(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
    return z ^ (z >> np.uint64(31))


def derive_stream_id(*parts: object) -> int:
    """Hash an arbitrary tuple of labels (policy, arm set, seed, purpose...) to a u64."""
    text = "\x1f".join(str(p) for p in parts).encode("utf-8")
    return int.from_bytes(hashlib.blake2b(text, digest_size=8).digest(), "little")


@dataclass
class RngStream:
    """A SplitMix64 generator.

    ``state`` is the raw generator state.  Use :meth:`from_seed` to build a stream
    for a (seed, stream_id) pair; stream 0 of seed ``s`` starts at state ``s``.
    """

    state: int = 0
    stream_id: int = 0

    @classmethod
    def from_seed(cls, seed: int, stream_id: int = 0) -> "RngStream":
        seed &= MASK64
        stream_id &= MASK64
        return cls(state=seed ^ mix64(stream_id), stream_id=stream_id)

    def next_u64(self) -> int:
        self.state = (self.state + GOLDEN_GAMMA) & MASK64
        return mix64(self.state)

    def next_unit(self) -> float:
        return (self.next_u64() >> 11) * UNIT_EPS

    def u64_block(self, n: int) -> np.ndarray:
        """The next ``n`` outputs as a uint64 array; advances the stream by ``n``."""
        steps = np.arange(1, n + 1, dtype=np.uint64) * np.uint64(GOLDEN_GAMMA)
        out = _mix64_array(steps + np.uint64(self.state))
        self.state = (self.state + n * GOLDEN_GAMMA) & MASK64
        return out

    def unit_block(self, n: int) -> np.ndarray:
        return (self.u64_block(n) >> np.uint64(11)).astype(np.float64) * UNIT_EPS


def normal_cdf(x):
    """Standard normal CDF through ``erfc``; accurate in both tails."""
    return 0.5 * erfc(-np.asarray(x, dtype=np.float64) / _SQRT2)


# Acklam's rational approximation, lower region only (q <= 0.5).
_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
      3.754408661907416e00)
_P_LOW = 0.02425


def _lower_quantile(q: np.ndarray) -> np.ndarray:
    """Quantile for q in (0, 0.5]: rational start plus one Halley step."""
    x = np.empty_like(q)
    tail = q < _P_LOW
    if tail.any():
        qt = q[tail]
        r = np.sqrt(-2.0 * np.log(qt))
        num = ((((_C[0] * r + _C[1]) * r + _C[2]) * r + _C[3]) * r + _C[4]) * r + _C[5]
        den = (((_D[0] * r + _D[1]) * r + _D[2]) * r + _D[3]) * r + 1.0
        x[tail] = num / den
    mid = ~tail
    if mid.any():
        qc = q[mid] - 0.5
        r = qc * qc
        num = (((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * qc
        den = ((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0
        x[mid] = num / den
    err = 0.5 * erfc(-x / _SQRT2) - q
    u = err * _SQRT2PI * np.exp(0.5 * x * x)
    return x - u / (1.0 + 0.5 * x * u)


def inverse_normal_cdf(p):
    """Standard normal quantile.

    Works on floats and arrays.  Raises ``ValueError`` unless every ``p`` lies
    strictly inside (0, 1).  ``inverse_normal_cdf(1 - p) == -inverse_normal_cdf(p)``
    holds exactly for ``p >= 0.5`` because both reduce to the same lower tail.
    """
    arr = np.asarray(p, dtype=np.float64)
    if not np.all((arr > 0.0) & (arr < 1.0)):
        raise ValueError(f"inverse_normal_cdf domain is (0, 1), got {p!r}")
    upper = arr > 0.5
    q = np.where(upper, 1.0 - arr, arr)
    z = _lower_quantile(np.atleast_1d(q)).reshape(arr.shape)
    z = np.where(upper, -z, z)
    if np.ndim(p) == 0:
        return float(z)
    return z


def units_to_gaussian(u: np.ndarray, mean=0.0, sd=0.0) -> np.ndarray:
    """Map unit draws to N(mean, sd^2) by inverse-CDF sampling (one draw per variate)."""
    u = np.clip(np.asarray(u, dtype=np.float64), UNIT_EPS, 1.0 - UNIT_EPS)
    return mean + sd * inverse_normal_cdf(u)


def sample_gaussian(rng: RngStream, mean: float = 0.0, sd: float = 1.0) -> float:
    if sd < 0:
        raise ValueError("sd must be nonnegative")
    return float(units_to_gaussian(rng.next_unit(), mean, sd))
