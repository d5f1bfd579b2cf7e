"""Regret curves, accuracy/latency/energy aggregates and Pareto frontiers."""

from __future__ import annotations

from dataclasses import dataclass
from itertools import groupby
from typing import Iterator, Sequence

import numpy as np

OBJECTIVES = {"latency": "mean_latency_ms", "energy": "mean_energy_units"}


@dataclass(frozen=True)
class StepLog:
    t: int
    arm: int
    reward: float
    normalized_cost: float
    exit_index: int
    correct: bool
    latency_ms: float
    energy_units: float
    regret_increment: float


@dataclass
class EpisodeLog:
    """Column-oriented step records for one episode; iterates as :class:`StepLog`."""

    arm: np.ndarray
    reward: np.ndarray
    normalized_cost: np.ndarray
    exit_index: np.ndarray
    correct: np.ndarray
    latency_ms: np.ndarray
    energy_units: np.ndarray
    regret_increment: np.ndarray

    def __len__(self) -> int:
        return len(self.arm)

    @property
    def t(self) -> np.ndarray:
        return np.arange(1, len(self.arm) + 1)

    def __getitem__(self, i: int) -> StepLog:
        return StepLog(
            t=i + 1 if i >= 0 else len(self) + i + 1,
            arm=int(self.arm[i]),
            reward=float(self.reward[i]),
            normalized_cost=float(self.normalized_cost[i]),
            exit_index=int(self.exit_index[i]),
            correct=bool(self.correct[i]),
            latency_ms=float(self.latency_ms[i]),
            energy_units=float(self.energy_units[i]),
            regret_increment=float(self.regret_increment[i]),
        )

    def __iter__(self) -> Iterator[StepLog]:
        return (self[i] for i in range(len(self)))

    @classmethod
    def from_steps(cls, steps: Sequence[StepLog]) -> "EpisodeLog":
        return cls(
            arm=np.array([s.arm for s in steps], dtype=np.int64),
            reward=np.array([s.reward for s in steps], dtype=float),
            normalized_cost=np.array([s.normalized_cost for s in steps], dtype=float),
            exit_index=np.array([s.exit_index for s in steps], dtype=np.int64),
            correct=np.array([s.correct for s in steps], dtype=bool),
            latency_ms=np.array([s.latency_ms for s in steps], dtype=float),
            energy_units=np.array([s.energy_units for s in steps], dtype=float),
            regret_increment=np.array([s.regret_increment for s in steps], dtype=float),
        )


def as_episode(logs) -> EpisodeLog:
    return logs if isinstance(logs, EpisodeLog) else EpisodeLog.from_steps(list(logs))


@dataclass(frozen=True)
class TradeoffPoint:
    label: str
    accuracy: float
    mean_latency_ms: float
    mean_energy_units: float

    def __post_init__(self):
        if not 0.0 <= self.accuracy <= 1.0:
            raise ValueError(f"accuracy {self.accuracy} outside [0, 1]")


def cumulative_regret(logs) -> np.ndarray:
    ep = as_episode(logs)
    if len(ep) == 0:
        raise ValueError("empty log")
    return np.cumsum(ep.regret_increment)


@dataclass(frozen=True)
class SublinearityReport:
    passed: bool
    ratio_at_T: float
    ratio_at_T_over_10: float

    @property
    def decade_ratio(self) -> float:
        if self.ratio_at_T_over_10 == 0.0:
            return 0.0 if self.ratio_at_T == 0.0 else float("inf")
        return self.ratio_at_T / self.ratio_at_T_over_10

    def __bool__(self) -> bool:
        return self.passed


def sublinearity_check(curve: Sequence[float], T: int, threshold: float = 0.6) -> SublinearityReport:
    """Average regret per step at T versus at T/10.

    Passes when ``regret(T)/T < threshold * regret(T/10)/(T/10)``.  A curve that
    is identically zero up to T counts as sub-linear.
    """
    curve = np.asarray(curve, dtype=float)
    if T < 1000 or len(curve) < T:
        raise ValueError("need T >= 1000 and a curve of at least T points")
    T10 = T // 10
    r_T = curve[T - 1] / T
    r_10 = curve[T10 - 1] / T10
    passed = bool(r_T < threshold * r_10) or (r_T == 0.0 and r_10 == 0.0)
    return SublinearityReport(passed, float(r_T), float(r_10))


def aggregate(logs, label: str = "") -> TradeoffPoint:
    ep = as_episode(logs)
    if len(ep) == 0:
        raise ValueError("empty log")
    return TradeoffPoint(
        label=label,
        accuracy=float(np.mean(ep.correct)),
        mean_latency_ms=float(np.mean(ep.latency_ms)),
        mean_energy_units=float(np.mean(ep.energy_units)),
    )


def _cost_of(point: TradeoffPoint, objective: str) -> float:
    try:
        return getattr(point, OBJECTIVES[objective])
    except KeyError:
        raise ValueError(f"objective must be one of {sorted(OBJECTIVES)}") from None


def dominates(a: TradeoffPoint, b: TradeoffPoint, objective: str) -> bool:
    ca, cb = _cost_of(a, objective), _cost_of(b, objective)
    return a.accuracy >= b.accuracy and ca <= cb and (a.accuracy > b.accuracy or ca < cb)


def pareto_frontier(points: Sequence[TradeoffPoint], objective: str = "latency") -> list[TradeoffPoint]:
    """Points not dominated under (max accuracy, min cost), sorted by ascending cost.

    Sweep over cost ascending (accuracy descending within a cost); a point
    survives if its accuracy beats every strictly cheaper survivor and matches the
    best at its own cost.  Exact duplicates are all kept.
    """
    points = list(points)
    if not points:
        raise ValueError("no points")
    order = sorted(range(len(points)), key=lambda i: (_cost_of(points[i], objective), -points[i].accuracy, i))
    front: list[TradeoffPoint] = []
    best_cheaper = -np.inf  # best accuracy among strictly cheaper points
    for _, grp in groupby(order, key=lambda k: _cost_of(points[k], objective)):
        group = [points[k] for k in grp]
        top = group[0].accuracy
        if top > best_cheaper:
            front.extend(p for p in group if p.accuracy == top)
            best_cheaper = top
    return front
