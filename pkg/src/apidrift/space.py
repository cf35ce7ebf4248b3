"""Category spaces for single-API and parent/child pair observations.

A space maps every admissible label to a dense integer index:

* ``single`` mode: the labels are the API names themselves and
  ``index = position in the api list``, so ``K = |A|``.
* ``pair`` mode: labels are ordered ``(parent, child)`` pairs where either
  position may be the null marker (``None``, meaning a parent-less or
  child-less call).  With ``m = |A|`` the null marker takes position index
  ``m`` and ``index = parent_idx * (m + 1) + child_idx``, so
  ``K = (m + 1)**2``.  The all-null pair ``(None, None)`` keeps its slot in
  the indexing (its probability is structurally zero) but is rejected as an
  observation.

The index scheme is fixed by the ordered api list, which makes every
serialized artifact (frequency tables, priors, trajectories) reproducible.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional, Union

from .errors import UnknownCategoryError, ValidationError

SINGLE = "single"
PAIR = "pair"

# An observation is an API name (single mode) or a (parent, child) tuple
# where None marks the missing side (pair mode).
PairLabel = tuple[Optional[str], Optional[str]]
Observation = Union[str, PairLabel]


@dataclass(frozen=True)
class CategorySpace:
    """Immutable label universe with a fixed label <-> index bijection."""

    mode: str
    api_names: tuple[str, ...]
    _index: dict[str, int] = field(repr=False, compare=False, default_factory=dict)

    def __post_init__(self):
        if self.mode not in (SINGLE, PAIR):
            raise ValidationError(f"mode must be {SINGLE!r} or {PAIR!r}, got {self.mode!r}")
        if not self.api_names:
            raise ValidationError("api_names must be non-empty")
        if any(not name for name in self.api_names):
            raise ValidationError("api names must be non-empty strings")
        if len(set(self.api_names)) != len(self.api_names):
            raise ValidationError("api names must be distinct")
        self._index.update({name: i for i, name in enumerate(self.api_names)})

    @property
    def K(self) -> int:
        m = len(self.api_names)
        return m if self.mode == SINGLE else (m + 1) ** 2

    def _position(self, label: Optional[str]) -> int:
        """Position index of one pair slot; the null marker sits last."""
        if label is None:
            return len(self.api_names)
        try:
            return self._index[label]
        except KeyError:
            raise UnknownCategoryError(label) from None

    def encode(self, obs: Observation) -> int:
        if self.mode == SINGLE:
            if not isinstance(obs, str):
                raise ValidationError(f"single-mode observation must be an API name, got {obs!r}")
            return self._position(obs)
        if not (isinstance(obs, tuple) and len(obs) == 2):
            raise ValidationError(f"pair-mode observation must be a (parent, child) tuple, got {obs!r}")
        parent, child = obs
        if parent is None and child is None:
            raise ValidationError("the all-null pair is not an admissible observation")
        return self._position(parent) * (len(self.api_names) + 1) + self._position(child)

    def decode(self, index: int) -> Observation:
        if not 0 <= index < self.K:
            raise ValidationError(f"index {index} out of range [0, {self.K})")
        if self.mode == SINGLE:
            return self.api_names[index]
        m1 = len(self.api_names) + 1
        parent_idx, child_idx = divmod(index, m1)
        parent = None if parent_idx == m1 - 1 else self.api_names[parent_idx]
        child = None if child_idx == m1 - 1 else self.api_names[child_idx]
        return (parent, child)

    def labels(self) -> list[Observation]:
        """All K labels in index order (includes the all-null pair slot)."""
        return [self.decode(i) for i in range(self.K)]

    def to_json(self) -> str:
        return json.dumps({"mode": self.mode, "apis": list(self.api_names)})

    @classmethod
    def from_json(cls, text: str) -> "CategorySpace":
        data = json.loads(text)
        return build_space(data["apis"], data["mode"])


def build_space(api_names, mode: str) -> CategorySpace:
    """Build a category space from an ordered list of distinct API names."""
    return CategorySpace(mode=mode, api_names=tuple(api_names))


def label_text(obs: Observation, null: str = "") -> str:
    """Render a label for delimited output; the null marker becomes ``null``."""
    if isinstance(obs, tuple):
        parent, child = obs
        return f"({parent if parent is not None else null}, {child if child is not None else null})"
    return obs
