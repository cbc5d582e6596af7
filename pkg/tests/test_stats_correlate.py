"""Unit tests for correlation, regression, and threshold sweeps."""

import math
import random

import pytest

import oracles
from uidlab.errors import UnpairedId, ZeroVariance
from uidlab.stats_correlate import (
    OlsFit,
    PairedSeries,
    ThresholdCurve,
    correlate_groups,
    ols_fit,
    pearson_r,
    threshold_sweep,
)
from uidlab.surprisal_measures import (
    MeasureConfig,
    SurprisalSequence,
    uniformity_report,
)


def series(x, y):
    ids = tuple(f"i{n}" for n in range(len(x)))
    return PairedSeries(ids=ids, x=tuple(x), y=tuple(y))


class TestPearson:
    def test_hand_value(self):
        assert pearson_r(series([1, 2, 3], [1, 3, 2])) == pytest.approx(0.5)

    def test_perfect_positive_and_negative(self):
        assert pearson_r(series([1, 2, 3], [2, 4, 6])) == pytest.approx(1.0)
        assert pearson_r(series([1, 2, 3], [3, 2, 1])) == pytest.approx(-1.0)

    def test_constant_raises(self):
        with pytest.raises(ZeroVariance):
            pearson_r(series([1, 1, 1], [1, 2, 3]))
        with pytest.raises(ZeroVariance):
            pearson_r(series([1, 2, 3], [5, 5, 5]))

    def test_too_short(self):
        with pytest.raises(ValueError):
            pearson_r(series([1], [2]))

    def test_matches_numpy(self):
        rng = random.Random(21)
        for _ in range(300):
            n = rng.randint(2, 60)
            x = [rng.uniform(-5, 5) for _ in range(n)]
            y = [rng.uniform(-5, 5) for _ in range(n)]
            if min(x) == max(x) or min(y) == max(y):
                continue
            assert pearson_r(series(x, y)) == pytest.approx(
                oracles.pearson(x, y), rel=1e-9, abs=1e-12
            )

    def test_clamped_to_unit_interval(self):
        x = [1e-9 * i for i in range(2, 12)]
        y = [3.0 * v for v in x]
        assert abs(pearson_r(series(x, y))) <= 1.0


class TestOls:
    def test_hand_value(self):
        fit = ols_fit(series([0, 1, 2], [0, 1, 0]))
        assert fit.slope == pytest.approx(0.0, abs=1e-12)
        assert fit.intercept == pytest.approx(1.0 / 3.0)
        assert fit.r_squared == pytest.approx(0.0, abs=1e-12)

    def test_constant_x_raises(self):
        with pytest.raises(ZeroVariance):
            ols_fit(series([2, 2, 2], [1, 2, 3]))

    def test_constant_y_r_squared_zero(self):
        fit = ols_fit(series([1, 2, 3], [4, 4, 4]))
        assert fit.slope == pytest.approx(0.0, abs=1e-12)
        assert fit.r_squared == 0.0

    def test_matches_numpy(self):
        rng = random.Random(22)
        for _ in range(300):
            n = rng.randint(2, 50)
            x = [rng.uniform(-4, 4) for _ in range(n)]
            y = [rng.uniform(-4, 4) for _ in range(n)]
            if min(x) == max(x):
                continue
            slope, intercept, r2 = oracles.ols(x, y)
            fit = ols_fit(series(x, y))
            assert fit.slope == pytest.approx(slope, rel=1e-9, abs=1e-9)
            assert fit.intercept == pytest.approx(intercept, rel=1e-9, abs=1e-9)
            assert fit.r_squared == pytest.approx(r2, rel=1e-7, abs=1e-9)

    def test_is_named_tuple(self):
        fit = ols_fit(series([0, 1], [0, 2]))
        assert isinstance(fit, OlsFit)
        assert fit == (fit.slope, fit.intercept, fit.r_squared)


def _report(seq_id, group, surprisals):
    sequence = SurprisalSequence(
        id=seq_id,
        tokens=tuple(f"t{i}" for i in range(len(surprisals))),
        surprisals=tuple(surprisals),
        group=group,
    )
    return uniformity_report(sequence, MeasureConfig(measures=("lv", "cv")))


class TestCorrelateGroups:
    def test_identical_groups_r_one(self):
        reports = []
        rng = random.Random(23)
        for i in range(6):
            values = [rng.uniform(0.5, 8.0) for _ in range(rng.randint(3, 9))]
            reports.append(_report(f"x{i}", "src", values))
            reports.append(_report(f"x{i}", "mt", values))
        assert correlate_groups(reports, "lv", "src", "mt") == pytest.approx(1.0)

    def test_unpaired_ids(self):
        reports = [
            _report("a", "src", [1.0, 2.0]),
            _report("b", "src", [2.0, 1.0]),
            _report("a", "mt", [1.0, 3.0]),
        ]
        with pytest.raises(UnpairedId) as info:
            correlate_groups(reports, "lv", "src", "mt")
        assert info.value.missing == ("b",)

    def test_duplicate_id_rejected(self):
        reports = [
            _report("a", "src", [1.0, 2.0]),
            _report("a", "src", [3.0, 1.0]),
            _report("a", "mt", [1.0, 3.0]),
        ]
        with pytest.raises(ValueError):
            correlate_groups(reports, "lv", "src", "mt")


class TestThresholdSweep:
    def test_counts_and_means(self):
        items = [
            ("a", 0.9, {"src": 10.0, "mt": 20.0}),
            ("b", 0.5, {"src": 20.0, "mt": 30.0}),
        ]
        curve = threshold_sweep(items, [0.0, 0.6])
        assert curve.counts == (2, 1)
        assert curve.means["src"] == (15.0, 10.0)
        assert curve.means["mt"] == (25.0, 20.0)

    def test_empty_retention_gives_none(self):
        items = [("a", 0.2, {"src": 1.0})]
        curve = threshold_sweep(items, [0.0, 0.5])
        assert curve.counts == (1, 0)
        assert curve.means["src"] == (1.0, None)

    def test_counts_monotone_non_increasing(self):
        rng = random.Random(24)
        for _ in range(100):
            items = [
                (f"i{n}", rng.random(), {"g": rng.uniform(0, 5)})
                for n in range(rng.randint(0, 40))
            ]
            thresholds = sorted(rng.uniform(0, 1) for _ in range(rng.randint(1, 9)))
            curve = threshold_sweep(items, thresholds)
            assert all(
                curve.counts[i] >= curve.counts[i + 1]
                for i in range(len(curve.counts) - 1)
            )
            expected = oracles.threshold_counts(
                [score for _, score, _ in items], thresholds
            )
            assert list(curve.counts) == expected

    def test_unsorted_thresholds_rejected(self):
        with pytest.raises(ValueError):
            threshold_sweep([], [0.5, 0.1])

    def test_curve_validates_alignment(self):
        with pytest.raises(ValueError):
            ThresholdCurve(thresholds=(0.1,), counts=(1, 2), means={})
