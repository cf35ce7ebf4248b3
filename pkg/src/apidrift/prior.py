"""Dirichlet prior construction from a baseline frequency table.

The recipe: rescale the nonzero baseline counts so they sum to
``prior_weight`` (how many observations' worth of trust the baseline gets),
then give every zero-count category a small positive ``floor`` so no label
has prior probability exactly zero.  The null probability vector is the
normalized concentration vector.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .ingest import FrequencyTable
from .space import CategorySpace

DEFAULT_PRIOR_WEIGHT = 50.0
DEFAULT_FLOOR = 0.00006


@dataclass
class PriorSpec:
    """Dirichlet concentration ``alpha0`` and null probabilities ``theta0``."""

    space: CategorySpace
    alpha0: np.ndarray
    theta0: np.ndarray
    prior_weight: float
    floor: float
    prior_odds: float = 1.0

    def __post_init__(self):
        self.alpha0 = np.asarray(self.alpha0, dtype=np.float64)
        self.theta0 = np.asarray(self.theta0, dtype=np.float64)
        if self.alpha0.shape != (self.space.K,) or self.theta0.shape != (self.space.K,):
            raise ValidationError("alpha0/theta0 must have one entry per category")
        if (self.alpha0 <= 0).any():
            raise ValidationError("alpha0 entries must be strictly positive")
        if abs(self.theta0.sum() - 1.0) > 1e-12:
            raise ValidationError("theta0 must sum to 1")

    @property
    def sum_alpha0(self) -> float:
        return float(self.alpha0.sum())

    def to_json(self) -> str:
        # Reals go through repr(), which round-trips float64 bit-exactly.
        return json.dumps(
            {
                "mode": self.space.mode,
                "apis": list(self.space.api_names),
                "alpha0": [repr(float(v)) for v in self.alpha0],
                "theta0": [repr(float(v)) for v in self.theta0],
                "prior_weight": repr(float(self.prior_weight)),
                "floor": repr(float(self.floor)),
                "prior_odds": repr(float(self.prior_odds)),
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "PriorSpec":
        data = json.loads(text)
        space = CategorySpace(mode=data["mode"], api_names=tuple(data["apis"]))
        return cls(
            space=space,
            alpha0=np.array([float(v) for v in data["alpha0"]]),
            theta0=np.array([float(v) for v in data["theta0"]]),
            prior_weight=float(data["prior_weight"]),
            floor=float(data["floor"]),
            prior_odds=float(data["prior_odds"]),
        )


def build_prior(
    baseline: FrequencyTable,
    prior_weight: float = DEFAULT_PRIOR_WEIGHT,
    floor: float = DEFAULT_FLOOR,
    prior_odds: float = 1.0,
) -> PriorSpec:
    """Build the Dirichlet prior from baseline counts.

    Nonzero categories get ``prior_weight * count / total`` (so their
    concentrations sum to exactly ``prior_weight``); zero categories,
    including structurally impossible ones, get ``floor``.
    """
    if baseline.total <= 0:
        raise ValidationError("baseline must contain at least one observation")
    if prior_weight <= 0:
        raise ValidationError("prior_weight must be positive")
    if floor <= 0:
        raise ValidationError("floor must be positive")
    if prior_odds <= 0:
        raise ValidationError("prior_odds must be positive")

    counts = baseline.counts
    total = baseline.total
    alpha0 = np.where(counts > 0, prior_weight * counts / total, floor)

    n_zero = int((counts == 0).sum())
    if floor * n_zero > 0.01 * prior_weight:
        warnings.warn(
            f"floor mass {floor * n_zero:.6g} across {n_zero} unseen categories "
            f"exceeds 1% of the prior weight {prior_weight}; consider a smaller floor",
            UserWarning,
            stacklevel=2,
        )

    theta0 = alpha0 / alpha0.sum()
    return PriorSpec(
        space=baseline.space,
        alpha0=alpha0,
        theta0=theta0,
        prior_weight=float(prior_weight),
        floor=float(floor),
        prior_odds=float(prior_odds),
    )
