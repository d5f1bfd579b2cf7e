"""Experiment configuration, episode loop, policy x arm-set x seed grid, CSV output.

Config files are TOML::

    horizon = 10000
    seeds = [1, 2, 3]
    epsilon = 0.01            # risk margin; lambda = epsilon / num_exits
    oracle_samples = 100000   # samples for the per-arm mean-reward pre-pass
    output_dir = "results"    # relative to the config file

    [environment]
    kind = "synthetic"        # or "replay"
    # trace = "trace.jsonl"   # replay only, relative to the config file

    [environment.profile]     # optional; defaults shown in ExitProfile
    confidence_gain = [0.60, 0.80, 0.90, 0.97]

    [arm_sets]
    coarse = [0.5, 0.6, 0.7, 0.8, 0.9]

    [[policies]]
    kind = "UCB1"

    [[policies]]
    kind = "UCB-Bayes"
    prior_beta0 = 0.1
"""

from __future__ import annotations

import csv
import logging
import math
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from . import analytics
from .analytics import EpisodeLog, TradeoffPoint
from .environment import (
    BWK_KIND,
    ExitProfile,
    ReplayEnvironment,
    SyntheticEnvironment,
    arm_mean_rewards,
    lambda_from_epsilon,
    resolve_arms,
)
from .numerics import MASK64, RngStream, derive_stream_id
from .policies import BasePolicy, PolicyConfig

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

logger = logging.getLogger(__name__)

DEFAULT_ARM_SETS = {
    "coarse": [0.5, 0.6, 0.7, 0.8, 0.9],
    "fine": [0.55, 0.60, 0.65, 0.70, 0.75, 0.80, 0.85, 0.90, 0.95],
}

ENV_TAG = "env"
ORACLE_TAG = "oracle"


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    arm_sets: dict = field(default_factory=lambda: {k: list(v) for k, v in DEFAULT_ARM_SETS.items()})
    policies: list = field(default_factory=lambda: [PolicyConfig(kind=k) for k in
                                                     ("UCB1", "UCB-V", "UCB-Tuned", "UCB-Bayes", "UCB-BwK")])
    profile: ExitProfile = field(default_factory=ExitProfile)
    trace_path: Path | None = None
    horizon: int = 10_000
    seeds: list = field(default_factory=lambda: [0])
    epsilon: float = 0.01
    oracle_samples: int = 100_000
    output_dir: Path = Path("results")

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        errors = []
        if not isinstance(self.horizon, int) or self.horizon < 1:
            errors.append("horizon must be a positive integer")
        if not self.arm_sets:
            errors.append("at least one arm set is required")
        for name, thetas in self.arm_sets.items():
            if not thetas:
                errors.append(f"arm set {name!r} is empty")
                continue
            if any(not isinstance(x, (int, float)) or not 0.0 <= x <= 1.0 for x in thetas):
                errors.append(f"arm set {name!r}: every threshold must be in [0, 1]")
            elif any(b <= a for a, b in zip(thetas, thetas[1:])):
                errors.append(f"arm set {name!r}: thresholds must be strictly increasing")
            if isinstance(self.horizon, int) and self.horizon < len(thetas):
                errors.append(f"horizon {self.horizon} < {len(thetas)} arms in {name!r}")
        if not self.policies:
            errors.append("at least one policy is required")
        names = [p.name for p in self.policies]
        if len(set(names)) != len(names):
            errors.append(f"policy names must be unique, got {names}")
        if not self.seeds:
            errors.append("at least one seed is required")
        if any(isinstance(s, bool) or not isinstance(s, int) or not 0 <= s <= MASK64 for s in self.seeds):
            errors.append("seeds must be unsigned 64-bit integers")
        if len(set(self.seeds)) != len(self.seeds):
            errors.append("seeds must be distinct")
        if not isinstance(self.epsilon, (int, float)) or self.epsilon < 0:
            errors.append("epsilon must be >= 0")
        if not isinstance(self.oracle_samples, int) or self.oracle_samples < 1:
            errors.append("oracle_samples must be a positive integer")
        if self.trace_path is not None and not Path(self.trace_path).is_file():
            errors.append(f"trace file not found: {self.trace_path}")
        if errors:
            raise ConfigError("; ".join(errors))

    def make_environment(self):
        if self.trace_path is not None:
            return ReplayEnvironment.from_file(self.trace_path, self.profile)
        return SyntheticEnvironment(self.profile)


def _policy_from_table(table: dict) -> PolicyConfig:
    allowed = {f.name for f in fields(PolicyConfig)} - {"extra"}
    unknown = set(table) - allowed
    if unknown:
        raise ConfigError(f"unknown policy field(s) {sorted(unknown)}")
    try:
        return PolicyConfig(**table)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"policy {table.get('kind')!r}: {exc}") from None


def config_from_dict(data: dict, base_dir: Path | str = ".") -> ExperimentConfig:
    base_dir = Path(base_dir)
    known = {"arm_sets", "policies", "environment", "horizon", "seeds", "epsilon",
             "oracle_samples", "output_dir"}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown top-level key(s) {sorted(unknown)}")
    kwargs = {k: data[k] for k in ("horizon", "seeds", "epsilon", "oracle_samples") if k in data}
    if "arm_sets" in data:
        if not isinstance(data["arm_sets"], dict):
            raise ConfigError("[arm_sets] must be a table of name = [thresholds]")
        kwargs["arm_sets"] = {str(k): list(v) for k, v in data["arm_sets"].items()}
    if "policies" in data:
        kwargs["policies"] = [_policy_from_table(dict(t)) for t in data["policies"]]
    env = data.get("environment", {})
    kind = env.get("kind", "synthetic")
    if kind not in ("synthetic", "replay"):
        raise ConfigError(f"environment.kind must be 'synthetic' or 'replay', got {kind!r}")
    if "profile" in env:
        try:
            kwargs["profile"] = ExitProfile(**env["profile"])
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"environment.profile: {exc}") from None
    if kind == "replay":
        if "trace" not in env:
            raise ConfigError("replay environment needs a 'trace' path")
        kwargs["trace_path"] = base_dir / env["trace"]
    kwargs["output_dir"] = base_dir / data.get("output_dir", "results")
    try:
        return ExperimentConfig(**kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        data = tomllib.loads(path.read_text(encoding="utf-8"))
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return config_from_dict(data, path.parent)


# -- streams ---------------------------------------------------------------------


def env_stream(policy_name: str, arm_set: str, seed: int) -> RngStream:
    return RngStream.from_seed(seed, derive_stream_id(policy_name, arm_set, seed, ENV_TAG))


def oracle_stream(arm_set: str, seed: int) -> RngStream:
    return RngStream.from_seed(seed, derive_stream_id(ORACLE_TAG, arm_set, seed))


# -- episodes ----------------------------------------------------------------------


def run_episode(
    policy: BasePolicy,
    environment,
    thetas,
    T: int,
    rng: RngStream | None,
    *,
    epsilon: float = 0.01,
    mu_star=None,
    oracle_samples: int = 100_000,
    oracle_rng: RngStream | None = None,
) -> EpisodeLog:
    """Run the online threshold-selection loop for ``T`` steps.

    ``mu_star`` (per-arm mean of the policy's objective) sets the regret
    baseline; when omitted it is estimated with :func:`arm_mean_rewards` on
    ``oracle_rng``, a stream that must differ from ``rng``.
    """
    thetas = list(thetas)
    K = len(thetas)
    if T < K:
        raise ValueError(f"horizon {T} is shorter than the {K} forced initial pulls")
    kind = getattr(policy, "kind", None)
    lam = lambda_from_epsilon(epsilon, environment.num_exits)
    if mu_star is None:
        if oracle_rng is None and rng is not None:
            oracle_rng = RngStream.from_seed(rng.state, derive_stream_id(ORACLE_TAG, rng.stream_id))
        mu_star = arm_mean_rewards(environment, thetas, oracle_samples, oracle_rng, lam, kind)
    mu_star = np.asarray(mu_star, dtype=float)

    outcomes = resolve_arms(environment.draw(T, rng), thetas, lam, kind)
    rewards = outcomes.reward.tolist()
    costs = outcomes.cost.tolist()

    policy.reset(K)
    chosen = [0] * T
    select, update = policy.select_arm, policy.update
    for step in range(T):
        arm = select(step + 1)
        update(arm, rewards[arm][step], costs[arm][step])
        chosen[step] = arm

    arms = np.asarray(chosen, dtype=np.int64)
    cols = np.arange(T)
    return EpisodeLog(
        arm=arms,
        reward=outcomes.reward[arms, cols],
        normalized_cost=outcomes.cost[arms, cols],
        exit_index=outcomes.exit_index[arms, cols],
        correct=outcomes.correct[arms, cols],
        latency_ms=outcomes.latency_ms[arms, cols],
        energy_units=outcomes.energy_units[arms, cols],
        regret_increment=mu_star.max() - mu_star[arms],
    )


@dataclass
class GridResult:
    config: ExperimentConfig
    episodes: dict  # (policy name, arm set, seed) -> EpisodeLog
    mu_star: dict  # (policy name, arm set, seed) -> per-arm baseline

    def regret_curves(self, policy: str, arm_set: str) -> np.ndarray:
        """Cumulative regret, one row per seed (seed order of the config)."""
        return np.array([
            analytics.cumulative_regret(self.episodes[(policy, arm_set, s)])
            for s in self.config.seeds
        ])

    def mean_regret(self, policy: str, arm_set: str) -> np.ndarray:
        return self.regret_curves(policy, arm_set).mean(axis=0)

    def tradeoff_points(self) -> list[TradeoffPoint]:
        points = []
        for arm_set in self.config.arm_sets:
            for p in self.config.policies:
                aggs = [analytics.aggregate(self.episodes[(p.name, arm_set, s)]) for s in self.config.seeds]
                points.append(TradeoffPoint(
                    label=f"{p.name}/{arm_set}",
                    accuracy=float(np.mean([a.accuracy for a in aggs])),
                    mean_latency_ms=float(np.mean([a.mean_latency_ms for a in aggs])),
                    mean_energy_units=float(np.mean([a.mean_energy_units for a in aggs])),
                ))
        return points


def run_grid(config: ExperimentConfig, seed_offset: int = 0) -> GridResult:
    config.validate()
    environment = config.make_environment()
    lam = lambda_from_epsilon(config.epsilon, environment.num_exits)
    episodes, baselines = {}, {}
    for arm_set, thetas in config.arm_sets.items():
        for seed in config.seeds:
            s = (seed + seed_offset) & MASK64
            oracle_cache = {}
            for pc in config.policies:
                variant = pc.kind == BWK_KIND
                if variant not in oracle_cache:
                    oracle_cache[variant] = arm_mean_rewards(
                        environment, thetas, config.oracle_samples,
                        oracle_stream(arm_set, s), lam, pc.kind,
                    )
                mu = oracle_cache[variant]
                logger.info("episode policy=%s arm_set=%s seed=%d", pc.name, arm_set, s)
                episodes[(pc.name, arm_set, seed)] = run_episode(
                    pc.build(), environment, thetas, config.horizon,
                    env_stream(pc.name, arm_set, s), epsilon=config.epsilon, mu_star=mu,
                )
                baselines[(pc.name, arm_set, seed)] = mu
    return GridResult(config, episodes, baselines)


# -- CSV output -------------------------------------------------------------------------


def fmt(x) -> str:
    """Nine significant digits, positional notation."""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if not math.isfinite(x):
        return str(x)
    if x == 0.0:
        return "0"
    return np.format_float_positional(x, precision=9, unique=False, fractional=False, trim="-")


def _write_csv(path: Path, header, rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) if not isinstance(v, str) else v for v in row])


def _safe(name: str) -> str:
    return "".join(c if c.isalnum() or c in "-_." else "_" for c in name)


def write_regret_csvs(result: GridResult, out_dir: Path) -> list[Path]:
    written = []
    cfg = result.config
    for arm_set in cfg.arm_sets:
        for p in cfg.policies:
            for seed in cfg.seeds:
                ep = result.episodes[(p.name, arm_set, seed)]
                cum = analytics.cumulative_regret(ep)
                path = out_dir / "regret" / f"{_safe(p.name)}__{_safe(arm_set)}__seed{seed}.csv"
                _write_csv(path, ["t", "arm", "reward", "cumulative_regret"],
                           zip(ep.t, ep.arm, ep.reward, cum))
                written.append(path)
            curves = result.regret_curves(p.name, arm_set)
            path = out_dir / "regret_mean" / f"{_safe(p.name)}__{_safe(arm_set)}.csv"
            _write_csv(path, ["t", "mean_cumulative_regret", "sd_cumulative_regret"],
                       zip(range(1, curves.shape[1] + 1), curves.mean(axis=0), curves.std(axis=0)))
            written.append(path)
    return written


def tradeoff_rows(result: GridResult) -> list[list]:
    points = result.tradeoff_points()
    on_latency = {id(p) for p in analytics.pareto_frontier(points, "latency")}
    on_energy = {id(p) for p in analytics.pareto_frontier(points, "energy")}
    rows = []
    for p in points:
        policy, arm_set = p.label.rsplit("/", 1)
        rows.append([policy, arm_set, p.accuracy, p.mean_latency_ms, p.mean_energy_units,
                     id(p) in on_latency, id(p) in on_energy])
    return rows


def write_tradeoff_csv(result: GridResult, out_dir: Path) -> Path:
    path = out_dir / "tradeoff.csv"
    _write_csv(path, ["policy", "arm_set", "accuracy", "mean_latency_ms", "mean_energy_units",
                      "pareto_latency", "pareto_energy"], tradeoff_rows(result))
    return path


def write_sublinearity_csv(result: GridResult, out_dir: Path) -> Path | None:
    cfg = result.config
    if cfg.horizon < 1000:
        return None
    rows = []
    for arm_set in cfg.arm_sets:
        for p in cfg.policies:
            rep = analytics.sublinearity_check(result.mean_regret(p.name, arm_set), cfg.horizon)
            rows.append([p.name, arm_set, rep.ratio_at_T, rep.ratio_at_T_over_10, rep.passed])
    path = out_dir / "sublinearity.csv"
    _write_csv(path, ["policy", "arm_set", "regret_per_step_T", "regret_per_step_T_over_10", "sublinear"], rows)
    return path
