"""Small helpers shared by the streaming statistics."""

from __future__ import annotations

import numpy as np


def occurrence_ordinals(categories: np.ndarray) -> np.ndarray:
    """For each position, how many earlier positions hold the same value.

    E.g. [3, 1, 3, 3, 1] -> [0, 0, 1, 2, 1].  Lets per-step quantities that
    depend on "count of this category seen so far" be computed vectorized.
    """
    cats = np.asarray(categories)
    n = len(cats)
    if n == 0:
        return np.zeros(0, dtype=np.float64)
    order = np.argsort(cats, kind="stable")
    sorted_cats = cats[order]
    group_start = np.zeros(n, dtype=np.int64)
    new_group = np.flatnonzero(np.diff(sorted_cats)) + 1
    group_start[new_group] = new_group
    np.maximum.accumulate(group_start, out=group_start)
    ordinals = np.empty(n, dtype=np.float64)
    ordinals[order] = np.arange(n, dtype=np.float64) - group_start
    return ordinals
