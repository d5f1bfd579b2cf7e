"""Early-exit inference stand-in: synthetic sample generator, trace replay, reward.

A *sample* carries, for each of the L exits, the classifier confidence, whether
that exit's prediction is correct, and the gating network's unreliability score.
Resolving a sample against a threshold picks the first exit whose confidence
reaches it.  Samples never depend on the chosen threshold, so a whole episode's
worth can be drawn up front and every arm resolved against the same rows.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .numerics import RngStream, units_to_gaussian

BWK_KIND = "UCB-BwK"


@dataclass(frozen=True)
class ExitProfile:
    """Per-exit behaviour of the simulated early-exit network."""

    confidence_gain: tuple = (0.60, 0.80, 0.90, 0.97)
    accuracy_ceiling: tuple = (0.70, 0.85, 0.92, 0.95)
    confidence_noise_sd: float = 0.05
    gating_noise_sd: float = 0.05
    latency_ms: tuple = (1.0, 2.0, 3.5, 5.0)
    energy_units: tuple = (1.0, 2.2, 3.8, 6.0)

    def __post_init__(self):
        for name in ("confidence_gain", "accuracy_ceiling", "latency_ms", "energy_units"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))
        L = len(self.confidence_gain)
        if L < 2:
            raise ValueError("an early-exit profile needs at least 2 exits")
        for name in ("accuracy_ceiling", "latency_ms", "energy_units"):
            if len(getattr(self, name)) != L:
                raise ValueError(f"{name} has {len(getattr(self, name))} entries, expected {L}")
        g, a = np.array(self.confidence_gain), np.array(self.accuracy_ceiling)
        if np.any(g <= 0) or np.any(g > 1) or np.any(np.diff(g) <= 0):
            raise ValueError("confidence_gain must be in (0, 1] and strictly increasing")
        if np.any(a < 0) or np.any(a > 1) or np.any(np.diff(a) < 0):
            raise ValueError("accuracy_ceiling must be probabilities, nondecreasing")
        for name in ("latency_ms", "energy_units"):
            v = np.array(getattr(self, name))
            if np.any(v <= 0) or np.any(np.diff(v) <= 0):
                raise ValueError(f"{name} must be positive and strictly increasing")
        if self.confidence_noise_sd < 0 or self.gating_noise_sd < 0:
            raise ValueError("noise standard deviations must be nonnegative")

    @property
    def num_exits(self) -> int:
        return len(self.confidence_gain)


def default_profile() -> ExitProfile:
    return ExitProfile()


@dataclass
class SampleBatch:
    """Column arrays for n samples; every 2-d array has shape (n, L)."""

    confidence: np.ndarray
    correct: np.ndarray
    gating: np.ndarray
    latency_ms: np.ndarray
    energy_units: np.ndarray
    difficulty: np.ndarray | None = None
    sample_id: np.ndarray | None = None

    def __len__(self) -> int:
        return self.confidence.shape[0]

    @property
    def num_exits(self) -> int:
        return self.confidence.shape[1]

    def row(self, i: int) -> "SampleBatch":
        sl = slice(i, i + 1)
        return SampleBatch(
            self.confidence[sl], self.correct[sl], self.gating[sl],
            self.latency_ms[sl], self.energy_units[sl],
            None if self.difficulty is None else self.difficulty[sl],
            None if self.sample_id is None else self.sample_id[sl],
        )


@dataclass(frozen=True)
class ExitOutcome:
    exit_index: int  # 1-based
    confidence: float
    gating: float
    correct: bool
    latency_ms: float
    energy_units: float


@dataclass
class TraceRecord:
    sample_id: int
    conf: list
    correct: list
    gating: list
    latency_ms: list | None = None
    energy: list | None = None


# -- synthetic generation ------------------------------------------------------


def synth_samples(profile: ExitProfile, rng: RngStream, n: int) -> SampleBatch:
    """Draw ``n`` samples.

    Draw order per sample: difficulty, then for each exit (confidence noise,
    correctness uniform, gating noise).  Exactly ``1 + 3L`` uniforms per sample.
    """
    L = profile.num_exits
    return samples_from_units(profile, rng.unit_block(n * (1 + 3 * L)).reshape(n, 1 + 3 * L))


def samples_from_units(profile: ExitProfile, u: np.ndarray) -> SampleBatch:
    """Deterministic part of :func:`synth_samples`; ``u`` has shape (n, 1 + 3L)."""
    n, L = u.shape[0], profile.num_exits
    g = np.asarray(profile.confidence_gain)
    a = np.asarray(profile.accuracy_ceiling)
    d = u[:, 0]
    conf_noise = units_to_gaussian(u[:, 1::3], 0.0, profile.confidence_noise_sd)
    gate_noise = units_to_gaussian(u[:, 3::3], 0.0, profile.gating_noise_sd)
    conf = np.clip(g * (1.0 - d)[:, None] + conf_noise, 0.0, 1.0)
    p_correct = a * conf
    correct = u[:, 2::3] < p_correct
    gating = np.clip((1.0 - p_correct) + gate_noise, 0.0, 1.0)
    return SampleBatch(
        confidence=conf,
        correct=correct,
        gating=gating,
        latency_ms=np.broadcast_to(np.asarray(profile.latency_ms), (n, L)),
        energy_units=np.broadcast_to(np.asarray(profile.energy_units), (n, L)),
        difficulty=d,
        sample_id=np.arange(n),
    )


def synth_sample(profile: ExitProfile, rng: RngStream) -> SampleBatch:
    """A single sample (a batch of one row)."""
    return synth_samples(profile, rng, 1)


# -- exit rule and reward --------------------------------------------------------


def exit_indices(confidence: np.ndarray, theta: float) -> np.ndarray:
    """1-based exit index per row: first exit with confidence >= theta, else L."""
    conf = np.atleast_2d(confidence)
    hit = conf >= theta
    return np.where(hit.any(axis=1), hit.argmax(axis=1) + 1, conf.shape[1])


def resolve_exit(sample: SampleBatch, theta: float, row: int = 0) -> ExitOutcome:
    if not 0.0 <= theta <= 1.0:
        raise ValueError(f"threshold {theta} outside [0, 1]")
    e = int(exit_indices(sample.confidence[row], theta)[0])
    j = e - 1
    return ExitOutcome(
        exit_index=e,
        confidence=float(sample.confidence[row, j]),
        gating=float(sample.gating[row, j]),
        correct=bool(sample.correct[row, j]),
        latency_ms=float(sample.latency_ms[row, j]),
        energy_units=float(sample.energy_units[row, j]),
    )


def lambda_from_epsilon(epsilon: float, num_exits: int) -> float:
    if epsilon < 0 or num_exits < 1:
        raise ValueError("need epsilon >= 0 and at least one exit")
    return epsilon / num_exits


def compute_reward(
    outcome: ExitOutcome, lam: float, policy_kind: str, num_exits: int
) -> tuple[float, float]:
    """(reward, normalized cost) for one outcome.

    The cost-aware policy gets the penalty-free reward and handles cost itself.
    """
    raw = outcome.confidence * (1.0 - outcome.gating)
    if policy_kind != BWK_KIND:
        raw -= lam * outcome.exit_index
    return min(max(raw, 0.0), 1.0), outcome.exit_index / num_exits


@dataclass
class ArmOutcomes:
    """Every arm resolved against every sample of a batch; arrays shaped (K, n)."""

    exit_index: np.ndarray
    reward: np.ndarray
    cost: np.ndarray
    correct: np.ndarray
    latency_ms: np.ndarray
    energy_units: np.ndarray


def resolve_arms(
    batch: SampleBatch, thetas: Sequence[float], lam: float, policy_kind: str
) -> ArmOutcomes:
    """Vectorised :func:`resolve_exit` + :func:`compute_reward` over arms and samples."""
    n, L = batch.confidence.shape
    rows = np.arange(n)
    cols = {k: [] for k in ("e", "r", "c", "ok", "lat", "en")}
    for theta in thetas:
        e = exit_indices(batch.confidence, theta)
        j = e - 1
        raw = batch.confidence[rows, j] * (1.0 - batch.gating[rows, j])
        if policy_kind != BWK_KIND:
            raw = raw - lam * e
        cols["e"].append(e)
        cols["r"].append(np.clip(raw, 0.0, 1.0))
        cols["c"].append(e / L)
        cols["ok"].append(batch.correct[rows, j])
        cols["lat"].append(batch.latency_ms[rows, j])
        cols["en"].append(batch.energy_units[rows, j])
    return ArmOutcomes(*(np.array(cols[k]).reshape(len(thetas), n) for k in cols))


# -- environments ------------------------------------------------------------------


@dataclass
class SyntheticEnvironment:
    profile: ExitProfile = field(default_factory=default_profile)

    @property
    def num_exits(self) -> int:
        return self.profile.num_exits

    def draw(self, n: int, rng: RngStream) -> SampleBatch:
        return synth_samples(self.profile, rng, n)

    def oracle_batch(self, n: int, rng: RngStream) -> SampleBatch:
        return synth_samples(self.profile, rng, n)


class TraceTooShortError(ValueError):
    pass


@dataclass
class ReplayEnvironment:
    """Replays logged samples in file order; consumes no randomness."""

    batch: SampleBatch

    @classmethod
    def from_records(cls, records: Sequence[TraceRecord], profile: ExitProfile | None = None):
        return cls(records_to_batch(records, profile))

    @classmethod
    def from_file(cls, path, profile: ExitProfile | None = None):
        return cls.from_records(load_trace(path), profile)

    @property
    def num_exits(self) -> int:
        return self.batch.num_exits

    def draw(self, n: int, rng: RngStream | None = None) -> SampleBatch:
        if n > len(self.batch):
            raise TraceTooShortError(
                f"trace has {len(self.batch)} records but {n} steps were requested; "
                f"use a horizon of at most {len(self.batch)}"
            )
        b = self.batch
        return SampleBatch(
            b.confidence[:n], b.correct[:n], b.gating[:n], b.latency_ms[:n],
            b.energy_units[:n], None, None if b.sample_id is None else b.sample_id[:n],
        )

    def oracle_batch(self, n: int | None = None, rng: RngStream | None = None) -> SampleBatch:
        return self.batch


def arm_mean_rewards(
    environment,
    thetas: Sequence[float],
    n_samples: int,
    rng: RngStream | None,
    lam: float,
    policy_kind: str = "UCB1",
) -> np.ndarray:
    """Per-arm mean of the value the policy maximizes.

    All arms are scored on the same samples.  In replay mode the whole trace is
    used and the means are exact.  For the cost-aware policy the value is mean
    reward divided by mean normalized cost.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    batch = environment.oracle_batch(n_samples, rng)
    out = resolve_arms(batch, thetas, lam, policy_kind)
    if policy_kind == BWK_KIND:
        return out.reward.mean(axis=1) / out.cost.mean(axis=1)
    return out.reward.mean(axis=1)


# -- trace files ---------------------------------------------------------------------


class TraceFormatError(ValueError):
    pass


def _check_unit_array(value, line_no: int, name: str, L: int | None, *, boolean=False) -> list:
    if not isinstance(value, list):
        raise TraceFormatError(f"line {line_no}: field {name!r} must be an array")
    if L is not None and len(value) != L:
        raise TraceFormatError(
            f"line {line_no}: field {name!r} has {len(value)} entries, expected {L}"
        )
    for v in value:
        if boolean:
            if not isinstance(v, bool):
                raise TraceFormatError(f"line {line_no}: field {name!r} must hold booleans")
        elif isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
            raise TraceFormatError(f"line {line_no}: field {name!r} must hold finite numbers")
        elif name in ("conf", "gating") and not 0.0 <= v <= 1.0:
            raise TraceFormatError(f"line {line_no}: field {name!r} value {v} outside [0, 1]")
        elif name in ("latency_ms", "energy") and v <= 0:
            raise TraceFormatError(f"line {line_no}: field {name!r} value {v} must be positive")
    return [bool(v) if boolean else float(v) for v in value]


def parse_trace_lines(lines: Iterable[str]) -> list[TraceRecord]:
    records: list[TraceRecord] = []
    L = None
    for line_no, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise TraceFormatError(f"line {line_no}: not valid JSON ({exc.msg})") from None
        if not isinstance(obj, dict):
            raise TraceFormatError(f"line {line_no}: record must be an object")
        for key in ("sample_id", "conf", "correct", "gating"):
            if key not in obj:
                raise TraceFormatError(f"line {line_no}: missing field {key!r}")
        unknown = set(obj) - {"sample_id", "conf", "correct", "gating", "latency_ms", "energy"}
        if unknown:
            raise TraceFormatError(f"line {line_no}: unknown field(s) {sorted(unknown)}")
        sid = obj["sample_id"]
        if isinstance(sid, bool) or not isinstance(sid, int):
            raise TraceFormatError(f"line {line_no}: field 'sample_id' must be an integer")
        conf = _check_unit_array(obj["conf"], line_no, "conf", L)
        if L is None:
            L = len(conf)
            if L < 1:
                raise TraceFormatError(f"line {line_no}: field 'conf' is empty")
        rec = TraceRecord(
            sample_id=sid,
            conf=conf,
            correct=_check_unit_array(obj["correct"], line_no, "correct", L, boolean=True),
            gating=_check_unit_array(obj["gating"], line_no, "gating", L),
        )
        if "latency_ms" in obj:
            rec.latency_ms = _check_unit_array(obj["latency_ms"], line_no, "latency_ms", L)
        if "energy" in obj:
            rec.energy = _check_unit_array(obj["energy"], line_no, "energy", L)
        records.append(rec)
    return records


def load_trace(path) -> list[TraceRecord]:
    with open(path, encoding="utf-8") as fh:
        return parse_trace_lines(fh)


def format_record(rec: TraceRecord) -> str:
    obj = {"sample_id": rec.sample_id, "conf": rec.conf, "correct": rec.correct, "gating": rec.gating}
    if rec.latency_ms is not None:
        obj["latency_ms"] = rec.latency_ms
    if rec.energy is not None:
        obj["energy"] = rec.energy
    return json.dumps(obj, separators=(",", ":"))


def write_trace(records: Iterable[TraceRecord], path) -> None:
    Path(path).write_text("".join(format_record(r) + "\n" for r in records), encoding="utf-8")


def batch_to_records(batch: SampleBatch, with_costs: bool = True) -> list[TraceRecord]:
    ids = batch.sample_id if batch.sample_id is not None else np.arange(len(batch))
    return [
        TraceRecord(
            sample_id=int(ids[i]),
            conf=batch.confidence[i].tolist(),
            correct=batch.correct[i].tolist(),
            gating=batch.gating[i].tolist(),
            latency_ms=batch.latency_ms[i].tolist() if with_costs else None,
            energy=batch.energy_units[i].tolist() if with_costs else None,
        )
        for i in range(len(batch))
    ]


def records_to_batch(records: Sequence[TraceRecord], profile: ExitProfile | None = None) -> SampleBatch:
    if not records:
        raise ValueError("cannot replay an empty trace")
    L = len(records[0].conf)
    n = len(records)

    def costs(attr, profile_attr):
        if all(getattr(r, attr) is not None for r in records):
            return np.array([getattr(r, attr) for r in records], dtype=float)
        if profile is None or profile.num_exits != L:
            raise ValueError(
                f"trace lacks {attr} for some records and no {L}-exit profile was given"
            )
        base = np.broadcast_to(np.asarray(getattr(profile, profile_attr)), (n, L)).copy()
        for i, r in enumerate(records):
            if getattr(r, attr) is not None:
                base[i] = getattr(r, attr)
        return base

    return SampleBatch(
        confidence=np.array([r.conf for r in records], dtype=float),
        correct=np.array([r.correct for r in records], dtype=bool),
        gating=np.array([r.gating for r in records], dtype=float),
        latency_ms=costs("latency_ms", "latency_ms"),
        energy_units=costs("energy", "energy_units"),
        sample_id=np.array([r.sample_id for r in records]),
    )
