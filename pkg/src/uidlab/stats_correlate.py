"""Paired-series statistics: Pearson correlation, simple OLS, group pairing
by sequence id, and quality-threshold sweeps.

Reductions use math.fsum, so results do not depend on input ordering beyond
the pairing itself.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping, NamedTuple, Sequence

from .errors import UnpairedId, ZeroVariance
from .surprisal_measures import UniformityReport


@dataclass(frozen=True)
class PairedSeries:
    """Two aligned value series sharing ids."""

    ids: tuple[str, ...]
    x: tuple[float, ...]
    y: tuple[float, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "ids", tuple(str(i) for i in self.ids))
        object.__setattr__(self, "x", tuple(float(v) for v in self.x))
        object.__setattr__(self, "y", tuple(float(v) for v in self.y))
        if not (len(self.ids) == len(self.x) == len(self.y)):
            raise ValueError("ids, x and y must have equal lengths")
        for v in self.x + self.y:
            if not math.isfinite(v):
                raise ValueError("series values must be finite")

    @classmethod
    def from_values(
        cls, x: Sequence[float], y: Sequence[float], ids: Sequence[str] | None = None
    ) -> "PairedSeries":
        if ids is None:
            ids = [str(i) for i in range(len(x))]
        return cls(ids=tuple(ids), x=tuple(x), y=tuple(y))

    def __len__(self) -> int:
        return len(self.ids)


def pearson_r(series: PairedSeries) -> float:
    """Sample Pearson correlation, clamped to [-1, 1]."""
    n = len(series)
    if n < 2:
        raise ValueError(f"correlation needs >= 2 pairs, got {n}")
    mx = math.fsum(series.x) / n
    my = math.fsum(series.y) / n
    sxx = math.fsum((v - mx) ** 2 for v in series.x)
    syy = math.fsum((v - my) ** 2 for v in series.y)
    if sxx == 0.0 or syy == 0.0:
        raise ZeroVariance("correlation undefined for a constant series")
    sxy = math.fsum((a - mx) * (b - my) for a, b in zip(series.x, series.y))
    r = sxy / math.sqrt(sxx * syy)
    return max(-1.0, min(1.0, r))


class OlsFit(NamedTuple):
    slope: float
    intercept: float
    r_squared: float


def ols_fit(series: PairedSeries) -> OlsFit:
    """Least-squares line y = slope * x + intercept with its r-squared.

    A constant y gives slope 0 and r_squared 0; a constant x has no defined
    fit and raises ZeroVariance.
    """
    n = len(series)
    if n < 2:
        raise ValueError(f"a fit needs >= 2 pairs, got {n}")
    mx = math.fsum(series.x) / n
    my = math.fsum(series.y) / n
    sxx = math.fsum((v - mx) ** 2 for v in series.x)
    if sxx == 0.0:
        raise ZeroVariance("fit undefined for constant x")
    sxy = math.fsum((a - mx) * (b - my) for a, b in zip(series.x, series.y))
    slope = sxy / sxx
    intercept = my - slope * mx
    ss_tot = math.fsum((v - my) ** 2 for v in series.y)
    if ss_tot == 0.0:
        return OlsFit(slope=slope, intercept=intercept, r_squared=0.0)
    ss_res = math.fsum(
        (b - (slope * a + intercept)) ** 2 for a, b in zip(series.x, series.y)
    )
    r2 = 1.0 - ss_res / ss_tot
    return OlsFit(slope=slope, intercept=intercept, r_squared=max(0.0, min(1.0, r2)))


def correlate_groups(
    reports: Iterable[UniformityReport],
    measure: str,
    group_a: str,
    group_b: str,
) -> float:
    """Pearson r of one measure between two groups, paired by sequence id.

    Every id must appear in both groups exactly once; ids missing from
    either side raise UnpairedId listing them.
    """
    measure = measure.lower()
    by_group: dict[str, dict[str, float]] = {group_a: {}, group_b: {}}
    for report in reports:
        if report.group not in by_group:
            continue
        bucket = by_group[report.group]
        if report.sequence_id in bucket:
            raise ValueError(
                f"duplicate id {report.sequence_id!r} in group {report.group!r}"
            )
        if measure not in report.values:
            raise ValueError(
                f"report {report.sequence_id!r} has no {measure!r} value"
            )
        bucket[report.sequence_id] = report.values[measure]
    ids_a = set(by_group[group_a])
    ids_b = set(by_group[group_b])
    missing = sorted(ids_a ^ ids_b)
    if missing:
        raise UnpairedId(missing)
    shared = sorted(ids_a)
    if len(shared) < 2:
        raise ValueError(f"correlation needs >= 2 shared ids, got {len(shared)}")
    series = PairedSeries(
        ids=tuple(shared),
        x=tuple(by_group[group_a][i] for i in shared),
        y=tuple(by_group[group_b][i] for i in shared),
    )
    return pearson_r(series)


@dataclass(frozen=True)
class ThresholdCurve:
    """Retained-set statistics as a quality threshold rises.

    means[group][t] is None when no retained item carried a value for that
    group at thresholds[t].
    """

    thresholds: tuple[float, ...]
    counts: tuple[int, ...]
    means: dict[str, tuple[float | None, ...]]

    def __post_init__(self) -> None:
        if len(self.counts) != len(self.thresholds):
            raise ValueError("one count per threshold required")
        for a, b in zip(self.thresholds, self.thresholds[1:]):
            if not b > a:
                raise ValueError("thresholds must be strictly ascending")
        for a, b in zip(self.counts, self.counts[1:]):
            if b > a:
                raise ValueError("retained counts must be non-increasing")
        for group, series in self.means.items():
            if len(series) != len(self.thresholds):
                raise ValueError(f"group {group!r}: one mean per threshold required")


def threshold_sweep(
    items: Sequence[tuple[str, float, Mapping[str, float]]],
    thresholds: Sequence[float],
) -> ThresholdCurve:
    """Filter items by quality score >= threshold and average measure values.

    items are (id, quality score, per-group measure value) triples. Groups
    are the union across items; a group absent from every retained item gets
    a None mean for that threshold.
    """
    ts = tuple(float(t) for t in thresholds)
    for a, b in zip(ts, ts[1:]):
        if not b > a:
            raise ValueError("thresholds must be strictly ascending")
    for _id, score, _values in items:
        if not math.isfinite(score):
            raise ValueError(f"item {_id!r}: quality score must be finite")
    groups = sorted({g for _, _, values in items for g in values})
    counts: list[int] = []
    means: dict[str, list[float | None]] = {g: [] for g in groups}
    for t in ts:
        retained = [(score, values) for _, score, values in items if score >= t]
        counts.append(len(retained))
        for g in groups:
            bucket = [values[g] for _, values in retained if g in values]
            if bucket:
                means[g].append(math.fsum(bucket) / len(bucket))
            else:
                means[g].append(None)
    return ThresholdCurve(
        thresholds=ts,
        counts=tuple(counts),
        means={g: tuple(v) for g, v in means.items()},
    )
