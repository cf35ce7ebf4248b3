"""Pearson goodness-of-fit comparator and its sequential (peeking) monitor.

This is the naive alternative the sequential Bayes-factor test is measured
against: re-running a fixed-sample test at every time step inflates its
false-positive rate well past the nominal level, which the property tests
demonstrate empirically.

The upper-tail probability is computed from scratch (regularized upper
incomplete gamma, series below the switch point and a Lentz continued
fraction above it) so the comparator carries no statistics dependency; the
tests cross-check it against scipy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import ValidationError
from .streams import occurrence_ordinals

_REL_TOL = 1e-10
_MAX_ITER = 10_000
_TINY = 1e-300


def _gamma_p_series(a: float, x: float) -> float:
    """Lower regularized incomplete gamma P(a, x) by power series (x < a+1)."""
    term = 1.0 / a
    total = term
    for n in range(1, _MAX_ITER):
        term *= x / (a + n)
        total += term
        if abs(term) < abs(total) * _REL_TOL:
            break
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))


def _gamma_q_contfrac(a: float, x: float) -> float:
    """Upper regularized incomplete gamma Q(a, x) by continued fraction (x >= a+1)."""
    b = x + 1.0 - a
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, _MAX_ITER):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _TINY:
            d = _TINY
        c = b + an / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _REL_TOL:
            break
    return h * math.exp(-x + a * math.log(x) - math.lgamma(a))


def chi2_sf(x: float, dof: int) -> float:
    """Upper-tail probability of the chi-squared distribution, Q(dof/2, x/2).

    Exactly exp(-x/2) at dof = 2; monotone non-increasing in x; 1 at x = 0.
    """
    if dof < 1:
        raise ValidationError(f"dof must be a positive integer, got {dof}")
    if not math.isfinite(x):
        raise ValidationError(f"statistic must be finite, got {x}")
    if x < 0:
        raise ValidationError(f"statistic must be non-negative, got {x}")
    if x == 0.0:
        return 1.0
    a = dof / 2.0
    half_x = x / 2.0
    if half_x < a + 1.0:
        return min(1.0, max(0.0, 1.0 - _gamma_p_series(a, half_x)))
    return min(1.0, max(0.0, _gamma_q_contfrac(a, half_x)))


def chi2_critical(fp_level: float, dof: int) -> float:
    """Statistic value whose upper-tail probability equals fp_level (bisection)."""
    if not 0.0 < fp_level < 1.0:
        raise ValidationError(f"fp_level must be in (0, 1), got {fp_level}")
    lo, hi = 0.0, float(max(dof, 1))
    while chi2_sf(hi, dof) > fp_level:
        hi *= 2.0
        if hi > 1e9:
            raise ArithmeticError("failed to bracket the critical value")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if chi2_sf(mid, dof) > fp_level:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-12 * max(1.0, hi):
            break
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class Chi2Result:
    statistic: float
    dof: int
    p_value: float


def _check_theta0(theta0: np.ndarray) -> np.ndarray:
    theta0 = np.asarray(theta0, dtype=np.float64)
    if (theta0 <= 0).any():
        raise ValidationError("theta0 must be strictly positive in every cell")
    if abs(theta0.sum() - 1.0) > 1e-9:
        raise ValidationError("theta0 must sum to 1")
    return theta0


def pearson_gof(counts, theta0) -> Chi2Result:
    """Pearson goodness-of-fit of observed counts against a fully specified null."""
    x = counts.counts if hasattr(counts, "counts") else np.asarray(counts, dtype=np.float64)
    theta0 = _check_theta0(theta0)
    if x.shape != theta0.shape:
        raise ValidationError("counts and theta0 must have the same length")
    n = float(x.sum())
    if n <= 0:
        raise ValidationError("counts must contain at least one observation")
    expected = n * theta0
    statistic = float(((x - expected) ** 2 / expected).sum())
    dof = len(theta0) - 1
    return Chi2Result(statistic=statistic, dof=dof, p_value=chi2_sf(statistic, dof))


def default_warmup(k: int) -> int:
    """Observations to skip before testing; the asymptotic approximation is
    poor while expected cell counts are tiny."""
    return 5 * k


def chi2_statistics(stream: Sequence[int], theta0) -> np.ndarray:
    """Pearson statistic after each prefix of the stream (vectorized).

    Uses sum_i x_i^2 / (t * theta_i) - t, updated per step from the running
    occurrence count of the observed category.
    """
    theta0 = _check_theta0(theta0)
    cats = np.asarray(stream, dtype=np.int64)
    n = len(cats)
    if n == 0:
        return np.zeros(0)
    if cats.min() < 0 or cats.max() >= len(theta0):
        raise ValidationError("category index out of range")
    k = occurrence_ordinals(cats)
    # Observing category c with prior count k changes sum x^2/theta by (2k+1)/theta_c.
    increments = (2.0 * k + 1.0) / theta0[cats]
    t = np.arange(1, n + 1, dtype=np.float64)
    return np.cumsum(increments) / t - t


def sequential_chi2_monitor(
    stream: Sequence[int],
    theta0,
    fp_level: float,
    warmup: Optional[int] = None,
) -> Optional[int]:
    """First t >= warmup where the goodness-of-fit p-value drops below
    fp_level, or None if it never does.  This is the peeking procedure: the
    fixed-sample test applied at every step with no sequential correction.
    """
    theta0 = _check_theta0(theta0)
    if warmup is None:
        warmup = default_warmup(len(theta0))
    if warmup < len(theta0):
        raise ValidationError("warmup must be at least the number of categories")
    stats = chi2_statistics(stream, theta0)
    if len(stats) < warmup:
        return None
    critical = chi2_critical(fp_level, len(theta0) - 1)
    hits = np.flatnonzero(stats[warmup - 1 :] > critical)
    if len(hits) == 0:
        return None
    return int(hits[0]) + warmup


def chi2_trajectory(stream: Sequence[int], theta0) -> list[tuple[int, float, float]]:
    """(t, statistic, p_value) rows for every prefix, for trajectory export."""
    theta0 = _check_theta0(theta0)
    stats = chi2_statistics(stream, theta0)
    dof = len(theta0) - 1
    return [(t + 1, float(s), chi2_sf(max(s, 0.0), dof)) for t, s in enumerate(stats)]
