"""Drift simulation: mixtures, drift schedules, seeded sampling, and the
detection-rate experiment.

Reproducibility contract: every repetition draws from its own generator
seeded by ``mix64(master_seed, rep_index)`` (a splitmix64 step, published
below), and categorical draws use inverse-CDF lookup over the fixed category
order.  Results are therefore bit-identical across runs and across worker
counts.
"""

from __future__ import annotations

import csv
import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

from . import chi2 as chi2mod
from .detector import log_alarm_threshold, log_bf_trajectory
from .errors import ValidationError
from .ingest import FrequencyTable
from .prior import DEFAULT_FLOOR, DEFAULT_PRIOR_WEIGHT, build_prior
from .space import CategorySpace

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def mix64(seed: int, index: int) -> int:
    """Rep seed derivation: splitmix64 output at position ``index`` of the
    stream seeded with ``seed``.  Fixed here so any implementation of the
    file formats can reproduce the streams."""
    z = (seed + (index + 1) * _GOLDEN) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


@dataclass(frozen=True)
class Distribution:
    """Probability vector over the categories of a space."""

    space: CategorySpace
    probs: np.ndarray

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=np.float64)
        object.__setattr__(self, "probs", probs)
        if probs.shape != (self.space.K,):
            raise ValidationError(f"probs must have length {self.space.K}")
        if (probs < 0).any():
            raise ValidationError("probabilities must be non-negative")
        if abs(probs.sum() - 1.0) > 1e-12:
            raise ValidationError("probabilities must sum to 1")

    @classmethod
    def from_frequency(cls, table: FrequencyTable) -> "Distribution":
        if table.total <= 0:
            raise ValidationError("cannot normalize an empty frequency table")
        return cls(table.space, table.counts / table.total)


def mix(h: Distribution, hp: Distribution, pi: float) -> Distribution:
    """Exact convex combination (1 - pi) * h + pi * hp."""
    if h.space != hp.space:
        raise ValidationError("mixture components must share a category space")
    if not 0.0 <= pi <= 1.0:
        raise ValidationError(f"pi must be in [0, 1], got {pi}")
    if pi == 0.0:
        return h
    if pi == 1.0:
        return hp
    return Distribution(h.space, (1.0 - pi) * h.probs + pi * hp.probs)


@dataclass(frozen=True)
class Constant:
    """Time-invariant mixing weight."""

    pi: float

    def __post_init__(self):
        if not 0.0 <= self.pi <= 1.0:
            raise ValidationError(f"pi must be in [0, 1], got {self.pi}")


@dataclass(frozen=True)
class DelayedRamp:
    """No drift before t_start, full drift from t_end, linear in between.

    t_start == t_end means a step change at that time.
    """

    t_start: int
    t_end: int
    shape: str = "linear"

    def __post_init__(self):
        if not 1 <= self.t_start <= self.t_end:
            raise ValidationError("need 1 <= t_start <= t_end")
        if self.shape != "linear":
            raise ValidationError(f"unsupported ramp shape {self.shape!r}")


DriftSchedule = Union[Constant, DelayedRamp]


def pi_at(schedule: DriftSchedule, t: int) -> float:
    """Mixing weight in effect at time step t (1-based)."""
    if t < 1:
        raise ValidationError(f"t must be >= 1, got {t}")
    if isinstance(schedule, Constant):
        return schedule.pi
    if t < schedule.t_start:
        return 0.0
    if t >= schedule.t_end:
        return 1.0
    return (t - schedule.t_start) / (schedule.t_end - schedule.t_start)


def _inverse_cdf(probs: np.ndarray) -> np.ndarray:
    cdf = np.cumsum(probs)
    cdf[-1] = 1.0  # guard against cumulative rounding
    return cdf


def sample_stream(
    source: Union[Distribution, Callable[[int], Distribution]],
    n: int,
    seed: int,
) -> np.ndarray:
    """n categorical draws; ``source`` is either a fixed distribution or a
    map from the 1-based time step to that step's distribution."""
    rng = np.random.Generator(np.random.PCG64(seed))
    u = rng.random(n)
    if isinstance(source, Distribution):
        return np.searchsorted(_inverse_cdf(source.probs), u, side="right").astype(np.int64)
    out = np.empty(n, dtype=np.int64)
    for i in range(n):
        out[i] = np.searchsorted(_inverse_cdf(source(i + 1).probs), u[i], side="right")
    return out


def scheduled_source(
    h: Distribution, hp: Distribution, schedule: DriftSchedule
) -> Callable[[int], Distribution]:
    """Per-step mixture source following a drift schedule."""
    return lambda t: mix(h, hp, pi_at(schedule, t))


@dataclass
class ExperimentConfig:
    baseline: FrequencyTable
    alternate: FrequencyTable
    pi_values: Sequence[float] = (0.0, 0.05, 0.10, 0.20, 0.30, 1.0)
    reps: int = 500
    draws: int = 1000
    fp_levels: Sequence[float] = (0.10, 0.05, 0.01)
    master_seed: int = 0
    prior_weight: float = DEFAULT_PRIOR_WEIGHT
    prior_floor: float = DEFAULT_FLOOR

    def __post_init__(self):
        if self.baseline.space != self.alternate.space:
            raise ValidationError("baseline and alternate must share a category space")
        if self.reps < 1 or self.draws < 1:
            raise ValidationError("reps and draws must be >= 1")
        for pi in self.pi_values:
            if not 0.0 <= pi <= 1.0:
                raise ValidationError(f"pi must be in [0, 1], got {pi}")
        for fp in self.fp_levels:
            log_alarm_threshold(fp)


@dataclass
class DetectionRateTable:
    """Detection proportions per (pi, fp_level) plus per-rep crossing times."""

    pi_values: list[float]
    fp_levels: list[float]
    rates: np.ndarray            # (n_pi, n_fp) proportions
    first_crossing: np.ndarray   # (n_pi, reps, n_fp); -1 = never crossed
    reps: int
    draws: int
    master_seed: int
    chi2_rates: Optional[np.ndarray] = None          # (n_pi, n_fp)
    chi2_first_rejection: Optional[np.ndarray] = None
    trajectories: Optional[list[np.ndarray]] = None  # per pi: (reps, draws) log BF
    log_bf_max: Optional[np.ndarray] = None          # (n_pi, reps)

    def rates_csv(self) -> str:
        out = io.StringIO()
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(["pi"] + [f"fp_{fp:g}" for fp in self.fp_levels])
        for i, pi in enumerate(self.pi_values):
            writer.writerow([f"{pi:g}"] + [f"{r:.17g}" for r in self.rates[i]])
        return out.getvalue()

    def chi2_rates_csv(self) -> str:
        if self.chi2_rates is None:
            raise ValidationError("experiment ran without the chi-squared comparator")
        out = io.StringIO()
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(["pi"] + [f"fp_{fp:g}" for fp in self.fp_levels])
        for i, pi in enumerate(self.pi_values):
            writer.writerow([f"{pi:g}"] + [f"{r:.17g}" for r in self.chi2_rates[i]])
        return out.getvalue()

    def first_crossing_csv(self) -> str:
        out = io.StringIO()
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(["pi", "rep", "fp_level", "first_crossing_t"])
        for i, pi in enumerate(self.pi_values):
            for rep in range(self.reps):
                for j, fp in enumerate(self.fp_levels):
                    t = int(self.first_crossing[i, rep, j])
                    writer.writerow([f"{pi:g}", rep, f"{fp:g}", t])
        return out.getvalue()

    def to_json_dict(self) -> dict:
        return {
            "pi_values": self.pi_values,
            "fp_levels": self.fp_levels,
            "reps": self.reps,
            "draws": self.draws,
            "master_seed": self.master_seed,
            "rates": self.rates.tolist(),
            "chi2_rates": None if self.chi2_rates is None else self.chi2_rates.tolist(),
        }


def _first_crossing_times(log_bf: np.ndarray, thresholds: np.ndarray) -> np.ndarray:
    """Earliest 1-based step where log_bf exceeds each threshold; -1 if never."""
    exceed = log_bf[:, None] > thresholds[None, :]
    any_hit = exceed.any(axis=0)
    first = exceed.argmax(axis=0) + 1
    return np.where(any_hit, first, -1)


def run_experiment(
    config: ExperimentConfig,
    jobs: int = 1,
    keep_trajectories: bool = False,
    with_chi2: bool = False,
    chi2_warmup: Optional[int] = None,
) -> DetectionRateTable:
    """Monte Carlo detection-rate experiment.

    For each mixing weight pi, runs ``reps`` independent streams of
    ``draws`` draws from the exact mixture of baseline and alternate, scores
    each with the sequential detector, and counts a rep as detected at a
    given fp level if the log BF ever exceeds that level's threshold.  Reps
    always run to completion so full trajectories can be exported.
    """
    prior = build_prior(config.baseline, config.prior_weight, config.prior_floor)
    h = Distribution.from_frequency(config.baseline)
    hp = Distribution.from_frequency(config.alternate)
    pi_values = [float(p) for p in config.pi_values]
    fp_levels = [float(f) for f in config.fp_levels]
    thresholds = np.array([log_alarm_threshold(fp) for fp in fp_levels])
    n_pi, n_fp, reps, draws = len(pi_values), len(fp_levels), config.reps, config.draws

    first_crossing = np.full((n_pi, reps, n_fp), -1, dtype=np.int64)
    log_bf_max = np.full((n_pi, reps), -np.inf)
    trajectories = [np.empty((reps, draws)) for _ in pi_values] if keep_trajectories else None
    chi2_first = np.full((n_pi, reps, n_fp), -1, dtype=np.int64) if with_chi2 else None
    warmup = chi2_warmup if chi2_warmup is not None else chi2mod.default_warmup(prior.space.K)

    cdfs = [_inverse_cdf(mix(h, hp, pi).probs) for pi in pi_values]
    dof = prior.space.K - 1
    chi2_criticals = [chi2mod.chi2_critical(fp, dof) for fp in fp_levels] if with_chi2 else []

    def run_rep(pi_idx: int, rep: int) -> None:
        seed = mix64(config.master_seed, pi_idx * reps + rep)
        rng = np.random.Generator(np.random.PCG64(seed))
        stream = np.searchsorted(cdfs[pi_idx], rng.random(draws), side="right").astype(np.int64)
        _, log_bf = log_bf_trajectory(prior, stream)
        first_crossing[pi_idx, rep] = _first_crossing_times(log_bf, thresholds)
        log_bf_max[pi_idx, rep] = log_bf.max()
        if trajectories is not None:
            trajectories[pi_idx][rep] = log_bf
        if chi2_first is not None:
            stats = chi2mod.chi2_statistics(stream, prior.theta0)
            for j, critical in enumerate(chi2_criticals):
                hits = np.flatnonzero(stats[warmup - 1 :] > critical) if len(stats) >= warmup else []
                chi2_first[pi_idx, rep, j] = int(hits[0]) + warmup if len(hits) else -1

    tasks = [(i, rep) for i in range(n_pi) for rep in range(reps)]
    if jobs <= 1:
        for i, rep in tasks:
            run_rep(i, rep)
    else:
        # Reps write to disjoint slots, so scheduling cannot affect results.
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            list(pool.map(lambda args: run_rep(*args), tasks))

    rates = (first_crossing >= 0).mean(axis=1)
    table = DetectionRateTable(
        pi_values=pi_values,
        fp_levels=fp_levels,
        rates=rates,
        first_crossing=first_crossing,
        reps=reps,
        draws=draws,
        master_seed=config.master_seed,
        trajectories=trajectories,
        log_bf_max=log_bf_max,
    )
    if with_chi2:
        table.chi2_rates = (chi2_first >= 0).mean(axis=1)
        table.chi2_first_rejection = chi2_first
    return table
