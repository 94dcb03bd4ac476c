import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from adaptive_pipelines.exceptions import NoTrackedPairs, SchemaMismatch
from adaptive_pipelines.errors import (TABLE, ConstraintSet, DetectionConfig, ErrorProfile, ErrorProfileDiff, ErrorType,
                                       QualityWeights, detect_errors, diff_error_profiles, infer_intervals,
                                       quality_score, tracked_pairs)
from adaptive_pipelines.model import Schema

from helpers import EYE_CONSTRAINTS, eye_batch, numeric_batch, typed

MV, IV, OUT, DUP = (ErrorType.MISSING_VALUE, ErrorType.INTERVAL_VIOLATION, ErrorType.OUTLIER,
                    ErrorType.DUPLICATE_ROW)


class TestDetect:
    def test_running_example_has_eleven_targets(self):
        batch, schema, _ = eye_batch(5000)
        prof = detect_errors(batch, schema, EYE_CONSTRAINTS, DetectionConfig(outlier_method="none"))
        iv = {p for (p, e) in prof.counts if e == IV}
        mv = {p for (p, e) in prof.counts if e == MV}
        assert len(iv) == 6 and len(mv) == 5
        assert len(prof.counts) == 11

    def test_positions_match_generator_truth(self):
        batch, schema, truth = eye_batch(2000)
        prof = detect_errors(batch, schema, EYE_CONSTRAINTS)
        for name, rows in truth["missing"].items():
            assert prof.positions((name, MV)) == sorted(rows)
        for name, rows in truth["violations"].items():
            assert prof.positions((name, IV)) == sorted(rows)

    def test_interval_violation_row(self):
        b, s = numeric_batch({"x": [0.0, 5.0, 5000.0]})
        prof = detect_errors(b, s, ConstraintSet({"x": (0, 1920)}), DetectionConfig(outlier_method="none"))
        assert prof.counts == {("x", IV): 1} and prof.positions(("x", IV)) == [2]

    def test_clean_batch_is_empty(self):
        b, s = numeric_batch({"x": [1.0, 2.0, 3.0], "y": [4.0, 5.0, 6.0]})
        assert not detect_errors(b, s, ConstraintSet({"x": (0, 10)}))

    def test_outlier_excludes_violations(self):
        vals = [float(v) for v in np.linspace(0, 10, 50)] + [1e6]
        b, s = numeric_batch({"x": vals})
        with_iv = detect_errors(b, s, ConstraintSet({"x": (0, 100)}))
        assert with_iv.counts == {("x", IV): 1}
        without = detect_errors(b, s)
        assert without.counts == {("x", OUT): 1}

    def test_duplicates_first_occurrence_exempt(self):
        b, s = typed({"a": ["1", "1", "2", "1"], "b": ["x", "x", "y", "x"]}, {"a": "numeric", "b": "categorical"})
        prof = detect_errors(b, s, config=DetectionConfig(outlier_method="none"))
        assert prof.positions((TABLE, DUP)) == [1, 3]
        assert all(e.property is None for e in prof.entries if e.error_type == DUP)

    def test_duplicate_key_subset(self):
        b, s = numeric_batch({"a": [1.0, 1.0, 2.0], "b": [1.0, 2.0, 3.0]})
        prof = detect_errors(b, s, ConstraintSet(duplicate_key=("a",)), DetectionConfig(outlier_method="none"))
        assert prof.positions((TABLE, DUP)) == [1]

    def test_missing_cells_are_duplicates_of_each_other(self):
        b, s = numeric_batch({"a": [None, None]})
        assert detect_errors(b, s).positions((TABLE, DUP)) == [1]

    def test_category_outside_domain(self):
        b, s = typed({"Group": ["group1", "groupX", None]}, {"Group": "categorical"})
        prof = detect_errors(b, s, EYE_CONSTRAINTS.renamed({}, dropped=list(EYE_CONSTRAINTS.intervals)))
        assert prof.positions(("Group", IV)) == [1] and prof.positions(("Group", MV)) == [2]

    def test_type_mismatch(self):
        b, s = typed({"x": ["1", "oops", "3"]}, {"x": "numeric"})
        prof = detect_errors(b, s, config=DetectionConfig(outlier_method="none"))
        assert prof.counts == {("x", ErrorType.TYPE_MISMATCH): 1}

    def test_iqr_method(self):
        b, s = numeric_batch({"x": [1.0, 2.0, 3.0, 4.0, 100.0]})
        assert detect_errors(b, s, config=DetectionConfig(outlier_method="iqr")).counts == {("x", OUT): 1}

    def test_schema_mismatch(self):
        b, _ = numeric_batch({"x": [1.0]})
        with pytest.raises(SchemaMismatch):
            detect_errors(b, Schema.of([("y", "numeric")]))

    def test_counts_equal_entries_and_rates_bounded(self):
        batch, schema, _ = eye_batch(1000)
        prof = detect_errors(batch, schema, EYE_CONSTRAINTS)
        for pair, c in prof.counts.items():
            assert c == len(prof.positions(pair))
            assert 0 <= prof.rate(pair) <= 1

    def test_fast_path_same_counts(self):
        batch, schema, _ = eye_batch(1000)
        a = detect_errors(batch, schema, EYE_CONSTRAINTS)
        b = detect_errors(batch, schema, EYE_CONSTRAINTS, positions=False)
        assert a.counts == b.counts and b.entries is None

    def test_serialization(self):
        batch, schema, _ = eye_batch(300)
        prof = detect_errors(batch, schema, EYE_CONSTRAINTS)
        again = ErrorProfile.from_dict(prof.to_dict())
        assert again.counts == prof.counts and again.entries == prof.entries

    def test_infer_intervals_wide_fences(self):
        b, s = numeric_batch({"x": [float(v) for v in range(1, 101)]})
        (lo, hi) = infer_intervals(b, s)["x"]
        q1, q3 = np.quantile(np.arange(1, 101), [0.25, 0.75])
        assert (lo, hi) == pytest.approx((q1 - 3 * (q3 - q1), q3 + 3 * (q3 - q1)))

    def test_constraint_validation(self):
        with pytest.raises(ValueError):
            ConstraintSet({"x": (5, 1)})

    def test_tracked_pairs(self):
        _, schema, _ = eye_batch(200)
        pairs = tracked_pairs(schema, EYE_CONSTRAINTS, DetectionConfig(outlier_method="none"))
        assert ("Group", IV) in pairs and ("Fixation-X", IV) in pairs and (TABLE, DUP) in pairs


class TestDiff:
    def test_identical(self):
        batch, schema, _ = eye_batch(500)
        p = detect_errors(batch, schema, EYE_CONSTRAINTS)
        d = diff_error_profiles(p, p)
        assert not d and d.entries == [] and not d.changed()

    def test_only_changed_pairs(self):
        old = ErrorProfile(10, {("x", MV): 2, ("y", MV): 1})
        new = ErrorProfile(10, {("x", MV): 2, ("y", MV): 3})
        (e,) = diff_error_profiles(old, new).entries
        assert (e.property, e.delta) == ("y", pytest.approx(0.2))

    def test_novelty(self):
        old = ErrorProfile(10, {})
        new = ErrorProfile(10, {("Group", MV): 3})
        (e,) = diff_error_profiles(old, new).entries
        assert e.novelty and e.new_rate == pytest.approx(0.3) and e.old_rate == 0

    def test_vanished(self):
        (e,) = diff_error_profiles(ErrorProfile(10, {("x", OUT): 2}), ErrorProfile(10, {})).entries
        assert e.vanished and not e.novelty

    def test_round_trip(self):
        d = diff_error_profiles(ErrorProfile(10, {("x", OUT): 2}), ErrorProfile(20, {("y", MV): 2}))
        assert ErrorProfileDiff.from_dict(d.to_dict()) == d


class TestQuality:
    def test_empty_profile(self):
        assert quality_score(ErrorProfile(10, {})) == 1.0
        assert quality_score(ErrorProfile(10, {}), tracked=[("x", MV)]) == 1.0

    def test_single_pair(self):
        assert quality_score(ErrorProfile(10, {("x", MV): 4})) == pytest.approx(0.6)

    def test_weighted_pairs(self):
        prof = ErrorProfile(10, {("x", MV): 2, ("y", IV): 4})
        w = QualityWeights({("x", MV): 3, ("y", IV): 1})
        assert quality_score(prof, w) == pytest.approx(0.75)

    def test_zero_weights(self):
        prof = ErrorProfile(10, {("x", MV): 2})
        with pytest.raises(NoTrackedPairs):
            quality_score(prof, QualityWeights({("x", MV): 0.0}))

    def test_weights_validated(self):
        with pytest.raises(ValueError):
            QualityWeights({("x", MV): -1})
        with pytest.raises(ValueError):
            QualityWeights({}, default=0)

    def test_weights_round_trip(self):
        w = QualityWeights({("x", MV): 3.0, (TABLE, DUP): 0.5}, 2.0)
        assert QualityWeights.from_dict(w.to_dict()) == w


NAMES = ["a", "b", "c", "d"]
profiles = st.builds(
    lambda n, counts: (n, {(NAMES[i], MV if i % 2 else IV): min(c, n) for i, c in enumerate(counts)}),
    st.integers(1, 500), st.lists(st.integers(0, 500), min_size=1, max_size=4))
weights = st.lists(st.floats(0.01, 100), min_size=4, max_size=4)


def _weights(ws):
    return QualityWeights({(NAMES[i], MV if i % 2 else IV): w for i, w in enumerate(ws)})


@settings(max_examples=500, deadline=None)
@given(profiles, weights)
def test_score_bounds(p, ws):
    n, counts = p
    prof = ErrorProfile(n, counts)
    score = quality_score(prof, _weights(ws), tracked=list(counts))
    assert 0.0 <= score <= 1.0
    assert (score == 1.0) == all(c == 0 for c in counts.values())


@settings(max_examples=500, deadline=None)
@given(profiles, weights, st.floats(0.01, 1000))
def test_weight_scaling_invariance(p, ws, k):
    n, counts = p
    prof = ErrorProfile(n, counts)
    w = _weights(ws)
    assert quality_score(prof, w.scaled(k), list(counts)) == pytest.approx(quality_score(prof, w, list(counts)),
                                                                          abs=1e-12)


@settings(max_examples=500, deadline=None)
@given(profiles, weights, st.data())
def test_score_strictly_decreases_with_rate(p, ws, data):
    n, counts = p
    pair = data.draw(st.sampled_from(sorted(counts)))
    assume(counts[pair] < n)
    bumped = dict(counts)
    bumped[pair] += 1
    w = _weights(ws)
    assert quality_score(ErrorProfile(n, bumped), w, list(counts)) < quality_score(ErrorProfile(n, counts), w,
                                                                                   list(counts))


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=1, max_size=4), st.lists(st.floats(0, 1), min_size=1, max_size=4))
def test_diff_novelty_implies_zero_old_rate(a, b):
    old = ErrorProfile(100, {(NAMES[i], MV): int(r * 100) for i, r in enumerate(a)})
    new = ErrorProfile(100, {(NAMES[i], MV): int(r * 100) for i, r in enumerate(b)})
    for e in diff_error_profiles(old, new).entries:
        assert not e.novelty or e.old_rate == 0
        assert not e.vanished or e.new_rate == 0


def naive_duplicates(rows):
    """Row i is a duplicate when an identical row (missing equal to missing) occurs before it."""
    seen, out = [], []
    for row in rows:
        out.append(row in seen)
        seen.append(row)
    return out


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(st.one_of(st.none(), st.sampled_from([0.0, 1.5, -2.0])),
                          st.one_of(st.none(), st.sampled_from(["u", "v"]))), min_size=1, max_size=30),
       st.booleans())
def test_duplicates_match_naive_scan(rows, key_only):
    b, s = typed({"x": [r[0] for r in rows], "g": [r[1] for r in rows]}, {"x": "numeric", "g": "categorical"})
    key = ("x",) if key_only else None
    prof = detect_errors(b, s, ConstraintSet(duplicate_key=key), DetectionConfig(outlier_method="none"),
                         positions=True)
    expected = naive_duplicates([(r[0],) if key_only else r for r in rows])
    assert prof.positions((TABLE, ErrorType.DUPLICATE_ROW)) == [i for i, d in enumerate(expected) if d]
