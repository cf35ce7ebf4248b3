"""Explain a drift decision: which categories drove the Bayes factor.

Two complementary scores per category:

* ``delta``: the summed per-step log BF increments over the steps where the
  category was observed.  It partitions the final log BF exactly (minus the
  prior odds), so it measures each category's direct effect on the decision,
  but a category that never occurred scores exactly 0 even if its absence
  was the anomaly.
* ``rho``: order-free log ratio of observed to expected relative frequency,
  with a 0.5 floor inside the ratio so a category seen once against an
  expectation of ~0 scores +-ln 2 rather than something unbounded.  It
  covers the unobserved-but-expected case delta cannot.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .detector import DriftDetector
from .errors import ValidationError
from .prior import PriorSpec
from .space import PAIR, CategorySpace, label_text

PARENT = "parent"
CHILD = "child"

RHO_FLOOR = 0.5


def delta_scores(psi_log_history: Sequence[tuple[int, int, float]], k: int) -> np.ndarray:
    """Per-category sums of the per-step log BF increments.

    The history must cover every step from t=1 to the stop time; a windowed
    or truncated history would silently misattribute, so it is rejected.
    """
    delta = np.zeros(k)
    expected_t = 1
    for t, category, log_psi in psi_log_history:
        if t != expected_t:
            raise ValidationError(
                f"history must be contiguous from t=1; expected t={expected_t}, got t={t}"
            )
        if not 0 <= category < k:
            raise ValidationError(f"category index {category} out of range [0, {k})")
        delta[category] += log_psi
        expected_t += 1
    return delta


def rho_scores(expected, observed, floor: float = RHO_FLOOR) -> np.ndarray:
    """Floored log ratio of observed to expected relative frequencies.

    Totals are taken over the raw vectors; the floor applies only inside the
    per-category ratio, so well-populated categories are left undistorted.
    """
    f = np.asarray(expected, dtype=np.float64)
    fp = np.asarray(observed, dtype=np.float64)
    if f.shape != fp.shape:
        raise ValidationError("expected and observed must have the same length")
    n0 = f.sum()
    n1 = fp.sum()
    if n0 <= 0 or n1 <= 0:
        raise ValidationError("expected and observed totals must be positive")
    return np.log(np.maximum(fp, floor) / n1) - np.log(np.maximum(f, floor) / n0)


def expected_counts(prior: PriorSpec, t: int) -> np.ndarray:
    """Counts each category would accrue in t draws under the null."""
    if t < 0:
        raise ValidationError("t must be non-negative")
    return t * prior.theta0


def aggregate_parent_child(
    scores, space: CategorySpace, position: str, signed: bool = False
) -> dict:
    """Collapse pair-category scores onto individual APIs at one position.

    Unsigned: sum of absolute scores (an anomaly total).  Signed: separate
    (positive_sum, negative_sum) so over- and under-represented children of
    the same parent stay visible.  Keys cover every API plus the null
    marker (None).
    """
    if space.mode != PAIR:
        raise ValidationError("parent/child aggregation requires a pair-mode space")
    if position not in (PARENT, CHILD):
        raise ValidationError(f"position must be {PARENT!r} or {CHILD!r}")
    scores = np.asarray(scores, dtype=np.float64)
    if scores.shape != (space.K,):
        raise ValidationError(f"scores must have length {space.K}")
    m1 = len(space.api_names) + 1
    grid = scores.reshape(m1, m1)
    axis = 1 if position == PARENT else 0
    labels = list(space.api_names) + [None]
    if signed:
        pos = np.where(grid > 0, grid, 0.0).sum(axis=axis)
        neg = np.where(grid < 0, grid, 0.0).sum(axis=axis)
        return {label: (float(p), float(n)) for label, p, n in zip(labels, pos, neg)}
    totals = np.abs(grid).sum(axis=axis)
    return {label: float(v) for label, v in zip(labels, totals)}


@dataclass
class RankedCategory:
    index: int
    label: str
    score: float
    observed: int
    expected: float


@dataclass
class AttributionReport:
    t_stop: int
    metric: str
    delta: np.ndarray
    rho: np.ndarray
    observed: np.ndarray
    expected: np.ndarray
    top: list[RankedCategory]
    log_bf: float
    prior_odds: float
    parent_scores: Optional[dict] = None
    child_scores: Optional[dict] = None
    parent_scores_signed: Optional[dict] = None
    child_scores_signed: Optional[dict] = None
    space: CategorySpace = field(default=None, repr=False)

    def partition_gap(self) -> float:
        """|sum(delta) - (log_bf - ln prior_odds)|; ~0 on every complete run."""
        return abs(float(self.delta.sum()) - (self.log_bf - math.log(self.prior_odds)))

    def to_json_dict(self) -> dict:
        def agg_dict(agg):
            if agg is None:
                return None
            return {(k if k is not None else ""): v for k, v in agg.items()}

        return {
            "t_stop": self.t_stop,
            "metric": self.metric,
            "log_bf": self.log_bf,
            "prior_odds": self.prior_odds,
            "top": [
                {
                    "index": r.index,
                    "label": r.label,
                    "score": r.score,
                    "observed": r.observed,
                    "expected": r.expected,
                }
                for r in self.top
            ],
            "delta": self.delta.tolist(),
            "rho": self.rho.tolist(),
            "observed": self.observed.tolist(),
            "expected": self.expected.tolist(),
            "parent_scores": agg_dict(self.parent_scores),
            "child_scores": agg_dict(self.child_scores),
        }


def rank_by_magnitude(scores: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k largest |score| entries, ties broken by index."""
    if k < 1:
        raise ValidationError("k must be >= 1")
    order = np.lexsort((np.arange(len(scores)), -np.abs(scores)))
    return order[: min(k, len(scores))]


def _build_report(
    prior: PriorSpec,
    history: Sequence[tuple[int, int, float]],
    observed: np.ndarray,
    log_bf: float,
    prior_odds: float,
    k: int,
    metric: str,
    expected_from_prior_counts: bool,
) -> AttributionReport:
    if metric not in ("delta", "rho"):
        raise ValidationError(f"metric must be 'delta' or 'rho', got {metric!r}")
    space = prior.space
    t_stop = len(history)
    delta = delta_scores(history, space.K)
    expected = prior.alpha0.copy() if expected_from_prior_counts else expected_counts(prior, t_stop)
    rho = rho_scores(expected, observed)

    scores = delta if metric == "delta" else rho
    top = [
        RankedCategory(
            index=int(i),
            label=label_text(space.decode(int(i))),
            score=float(scores[i]),
            observed=int(observed[i]),
            expected=float(expected[i]),
        )
        for i in rank_by_magnitude(scores, k)
    ]

    report = AttributionReport(
        t_stop=t_stop,
        metric=metric,
        delta=delta,
        rho=rho,
        observed=np.asarray(observed),
        expected=expected,
        top=top,
        log_bf=log_bf,
        prior_odds=prior_odds,
        space=space,
    )
    if space.mode == PAIR:
        report.parent_scores = aggregate_parent_child(scores, space, PARENT)
        report.child_scores = aggregate_parent_child(scores, space, CHILD)
        report.parent_scores_signed = aggregate_parent_child(scores, space, PARENT, signed=True)
        report.child_scores_signed = aggregate_parent_child(scores, space, CHILD, signed=True)
    return report


def top_k_report(
    detector: DriftDetector,
    k: int,
    metric: str = "delta",
    expected_from_prior_counts: bool = False,
) -> AttributionReport:
    """Build the ranked anomaly report for a stopped detector run.

    ``expected_from_prior_counts`` switches the expected vector for rho from
    the null expectation over t_stop draws (default, a like-for-like
    relative-frequency comparison) to the raw prior pseudo-counts.
    """
    if detector.psi_log_history is None:
        raise ValidationError("detector was run without history; delta attribution needs it")
    if len(detector.psi_log_history) != detector.t:
        raise ValidationError("history length does not match the observation count")
    return _build_report(
        detector.prior,
        detector.psi_log_history,
        detector.obs_counts.copy(),
        detector.log_bf,
        detector.prior_odds,
        k,
        metric,
        expected_from_prior_counts,
    )


def report_from_history(
    prior: PriorSpec,
    history: Sequence[tuple[int, int, float]],
    k: int,
    metric: str = "delta",
    expected_from_prior_counts: bool = False,
    prior_odds: Optional[float] = None,
) -> AttributionReport:
    """Rebuild the report from a persisted (t, category, log_psi) history,
    e.g. a run directory's trajectory file."""
    odds = prior_odds if prior_odds is not None else prior.prior_odds
    observed = np.zeros(prior.space.K, dtype=np.int64)
    log_bf = math.log(odds)
    for _, category, log_psi in history:
        if not 0 <= category < prior.space.K:
            raise ValidationError(f"category index {category} out of range")
        observed[category] += 1
        log_bf += log_psi
    return _build_report(prior, history, observed, log_bf, odds, k, metric,
                         expected_from_prior_counts)
