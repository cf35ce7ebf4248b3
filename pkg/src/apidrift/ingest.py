"""Call-log ingestion: parsing, frequency accumulation, windowed histograms.

Log formats (one call per record):

* JSONL: ``{"ts": <number>, "api": <string>, "parent": <string or null>}``
* CSV: header ``ts,api,parent``; an empty parent cell means no parent.

In pair mode a record maps to the ordered pair ``(parent, api)``; a missing
parent becomes the null marker, i.e. a parent-less call.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import ParseError, ValidationError
from .space import PAIR, SINGLE, CategorySpace, Observation

JSONL = "jsonl"
CSV = "csv"


@dataclass(frozen=True)
class CallRecord:
    ts: float
    api: str
    parent: Optional[str] = None


@dataclass
class FrequencyTable:
    """Integer occurrence counts per category of a space."""

    space: CategorySpace
    counts: np.ndarray

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.counts.shape != (self.space.K,):
            raise ValidationError(
                f"counts must have length {self.space.K}, got {self.counts.shape}"
            )
        if (self.counts < 0).any():
            raise ValidationError("counts must be non-negative")

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @classmethod
    def zeros(cls, space: CategorySpace) -> "FrequencyTable":
        return cls(space, np.zeros(space.K, dtype=np.int64))

    @classmethod
    def from_pairs(cls, space: CategorySpace, pair_counts: dict) -> "FrequencyTable":
        """Build from a {label: count} mapping; unlisted categories are zero."""
        counts = np.zeros(space.K, dtype=np.int64)
        for label, n in pair_counts.items():
            counts[space.encode(label)] = n
        return cls(space, counts)

    def merge(self, other: "FrequencyTable") -> "FrequencyTable":
        if other.space != self.space:
            raise ValidationError("cannot merge tables over different spaces")
        return FrequencyTable(self.space, self.counts + other.counts)

    def to_json(self) -> str:
        return json.dumps(
            {
                "mode": self.space.mode,
                "apis": list(self.space.api_names),
                "counts": self.counts.tolist(),
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "FrequencyTable":
        data = json.loads(text)
        space = CategorySpace(mode=data["mode"], api_names=tuple(data["apis"]))
        return cls(space, np.asarray(data["counts"], dtype=np.int64))

    def to_matrix_csv(self, null_label: str = "") -> str:
        """Dense parent x child matrix as CSV text (pair mode only)."""
        if self.space.mode != PAIR:
            raise ValidationError("matrix export requires a pair-mode table")
        names = list(self.space.api_names) + [null_label]
        m1 = len(names)
        grid = self.counts.reshape(m1, m1)
        out = io.StringIO()
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(["parent"] + names)
        for i, name in enumerate(names):
            writer.writerow([name] + [str(v) for v in grid[i]])
        return out.getvalue()


@dataclass
class WindowedHistogram:
    window_index: int
    raw: FrequencyTable
    normalized: np.ndarray
    partial: bool = False


def _decode_lines(source) -> Iterable[str]:
    if isinstance(source, (str, Path)):
        with open(source, "rb") as fh:
            yield from _decode_lines(fh)
        return
    for raw in source:
        if isinstance(raw, bytes):
            raw = raw.decode("utf-8")
        yield raw


def _parse_ts(value, line_number: int) -> float:
    if isinstance(value, (int, float)):
        return value
    try:
        return int(value)
    except (TypeError, ValueError):
        pass
    try:
        return float(value)
    except (TypeError, ValueError):
        raise ParseError(line_number, f"timestamp is not numeric: {value!r}") from None


def parse_log(source, format: str = JSONL) -> list[CallRecord]:
    """Parse a call log into records, in file order.

    ``source`` may be a path or an iterable of text/byte lines.  Raises
    :class:`ParseError` naming the offending line on malformed input.
    """
    if format not in (JSONL, CSV):
        raise ValidationError(f"unknown log format {format!r}")
    records: list[CallRecord] = []
    if format == JSONL:
        for lineno, line in enumerate(_decode_lines(source), start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(lineno, f"invalid JSON: {exc.msg}") from None
            if not isinstance(obj, dict) or "api" not in obj or not obj["api"]:
                raise ParseError(lineno, "missing required field 'api'")
            ts = _parse_ts(obj.get("ts", 0), lineno)
            parent = obj.get("parent")
            if parent is not None and not isinstance(parent, str):
                raise ParseError(lineno, f"parent must be a string or null, got {parent!r}")
            records.append(CallRecord(ts=ts, api=obj["api"], parent=parent or None))
        return records

    lines = list(_decode_lines(source))
    reader = csv.reader(lines)
    try:
        header = next(reader)
    except StopIteration:
        return records
    header = [h.strip() for h in header]
    if header != ["ts", "api", "parent"]:
        raise ParseError(1, f"expected header ts,api,parent, got {','.join(header)}")
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) != 3:
            raise ParseError(lineno, f"expected 3 columns, got {len(row)}")
        ts_text, api, parent = (cell.strip() for cell in row)
        if not api:
            raise ParseError(lineno, "missing required field 'api'")
        records.append(CallRecord(ts=_parse_ts(ts_text, lineno), api=api, parent=parent or None))
    return records


def to_observations(records: Sequence[CallRecord], mode: str) -> list[Observation]:
    """Map records to observations, preserving order.

    Single mode keeps the called API; pair mode forms ``(parent, api)`` with
    a missing parent mapped to the null marker.
    """
    if mode == SINGLE:
        return [rec.api for rec in records]
    if mode == PAIR:
        return [(rec.parent, rec.api) for rec in records]
    raise ValidationError(f"unknown mode {mode!r}")


def accumulate(space: CategorySpace, observations: Iterable[Observation]) -> FrequencyTable:
    """Count observations per category; total equals the stream length."""
    counts = np.zeros(space.K, dtype=np.int64)
    for obs in observations:
        counts[space.encode(obs)] += 1
    return FrequencyTable(space, counts)


def window_histograms(
    space: CategorySpace,
    observations: Sequence[Observation],
    size,
    mode: str = "count",
    timestamps: Optional[Sequence[float]] = None,
) -> list[WindowedHistogram]:
    """Split a stream into consecutive non-overlapping windows and normalize.

    ``mode="count"`` cuts every ``size`` observations; ``mode="time"`` cuts on
    timestamp intervals of width ``size`` anchored at the first timestamp and
    requires ``timestamps`` aligned with ``observations``.  A trailing window
    that did not fill is still emitted, flagged ``partial``.
    """
    if size <= 0:
        raise ValidationError("window size must be positive")
    if not observations:
        return []

    if mode == "count":
        bounds = range(0, len(observations), int(size))
        groups = [observations[i : i + int(size)] for i in bounds]
        partial_flags = [len(g) < int(size) for g in groups]
    elif mode == "time":
        if timestamps is None or len(timestamps) != len(observations):
            raise ValidationError("time windows require timestamps aligned with observations")
        t0 = timestamps[0]
        bins = [int((t - t0) // size) for t in timestamps]
        n_windows = max(bins) + 1
        groups = [[] for _ in range(n_windows)]
        for obs, b in zip(observations, bins):
            groups[b].append(obs)
        # No notion of a "full" time window from counts alone: only the last
        # window is open-ended, so only it is flagged.
        partial_flags = [False] * (n_windows - 1) + [True]
    else:
        raise ValidationError(f"unknown window mode {mode!r}")

    windows = []
    for w, (group, partial) in enumerate(zip(groups, partial_flags)):
        raw = accumulate(space, group)
        if raw.total > 0:
            normalized = raw.counts / raw.total
        else:
            normalized = np.zeros(space.K)
        windows.append(WindowedHistogram(window_index=w, raw=raw, normalized=normalized, partial=partial))
    return windows
