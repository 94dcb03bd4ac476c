import json
import math
import zlib

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from adaptive_pipelines.errors import TABLE
from adaptive_pipelines.exceptions import IncompatibleDtype, InsufficientData, InvalidOperator, MissingProperty
from adaptive_pipelines.operators import (CATALOG, HISTORIC, OpClass, OperatorSpec, access_sets, algorithms_of,
                                          apply_operator, catalog_json, commutes, knn_impute_column, validate_spec)
from adaptive_pipelines.profiling import build_profile

from helpers import column, numeric_batch, rng_batch, typed


def op(algorithm, *targets, id="s1", **params):
    return OperatorSpec(id, algorithm, targets, params)


def same(a, b):
    """Cell-for-cell equality of two batches (NaN equals NaN)."""
    if a.names != b.names or a.n_rows != b.n_rows or a.flags != b.flags:
        return False
    for name in a.names:
        x, y = a.columns[name], b.columns[name]
        if x.dtype == object or y.dtype == object:
            if list(x) != list(y):
                return False
        elif not np.array_equal(x, y, equal_nan=True):
            return False
    return True


# ---------------------------------------------------------------- brute-force kNN oracle

def brute_knn(target, features, k):
    n = len(target)
    out = list(target)
    donors = [i for i in range(n) if not math.isnan(target[i])
              and not any(math.isnan(features[i][j]) for j in range(len(features[i])))]
    for r in range(n):
        if not math.isnan(target[r]):
            continue
        usable = [j for j in range(len(features[r])) if not math.isnan(features[r][j])]
        if not usable:
            out[r] = sum(target[d] for d in donors) / len(donors)
            continue
        ranked = []
        for d in donors:
            dist = math.sqrt(sum((features[d][j] - features[r][j]) ** 2 for j in usable))
            ranked.append((dist, d))
        ranked.sort()
        chosen = ranked[:min(k, len(donors))]
        out[r] = sum(target[d] for _, d in chosen) / len(chosen)
    return out


class TestKnn:
    @pytest.mark.parametrize("seed", range(5))
    def test_matches_brute_force(self, seed):
        rng = np.random.default_rng(seed)
        n = 200
        feats = rng.normal(500, 200, (n, 3)).round(1)
        target = (feats @ np.array([0.3, 0.2, 0.5]) + rng.normal(0, 10, n)).round(2)
        target[rng.random(n) < 0.15] = np.nan
        feats[rng.random((n, 3)) < 0.05] = np.nan
        got = knn_impute_column(target, feats, 5)
        want = brute_knn(target.tolist(), feats.tolist(), 5)
        assert np.allclose(got, want, rtol=1e-12, atol=0)

    def test_ties_go_to_lowest_row(self):
        # rows 0, 1 and 3 sit at the same distance from row 2; k=2 takes rows 0 and 1
        target = np.array([10.0, 20.0, np.nan, 90.0])
        feats = np.array([[1.0], [3.0], [2.0], [1.0]])
        assert knn_impute_column(target, feats, 2)[2] == 15.0

    def test_operator_uses_features(self):
        b, _ = numeric_batch({"y": [1.0, 2.0, None, 100.0], "f": [0.0, 1.0, 1.1, 50.0]})
        out = apply_operator(b, op("impute_knn", "y", k=1, features=["f"]))
        assert column(out, "y")[2] == 2.0

    def test_no_donors(self):
        with pytest.raises(InsufficientData):
            knn_impute_column(np.array([np.nan, np.nan]), np.zeros((2, 1)), 3)


class TestApply:
    def test_impute_mean(self):
        b, _ = numeric_batch({"x": [1.0, 2.0, None, 3.0]})
        assert column(apply_operator(b, op("impute_mean", "x")), "x") == [1.0, 2.0, 2.0, 3.0]

    def test_clamp(self):
        b, _ = numeric_batch({"x": [-5.0, 100.0, 2500.0]})
        assert column(apply_operator(b, op("clamp_to_bounds", "x", lo=0, hi=1920)), "x") == [0.0, 100.0, 1920.0]

    def test_impute_median(self):
        b, _ = numeric_batch({"x": [1.0, 2.0, None, 30.0]})
        assert column(apply_operator(b, op("impute_median", "x")), "x")[2] == 2.0

    def test_impute_mode_categorical(self):
        b, _ = typed({"g": ["a", "b", "b", None]}, {"g": "categorical"})
        assert column(apply_operator(b, op("impute_mode", "g")), "g") == ["a", "b", "b", "b"]

    def test_impute_constant_categorical(self):
        b, _ = typed({"g": ["a", None]}, {"g": "categorical"})
        assert column(apply_operator(b, op("impute_constant", "g", value="unknown")), "g") == ["a", "unknown"]

    def test_replace_with_constant_domain(self):
        b, _ = typed({"g": ["a", "zz", None]}, {"g": "categorical"})
        out = apply_operator(b, op("replace_with_constant", "g", value="a", domain=["a", "b"]))
        assert column(out, "g") == ["a", "a", None]

    def test_set_to_missing(self):
        b, _ = numeric_batch({"x": [-1.0, 5.0, 11.0]})
        assert column(apply_operator(b, op("set_to_missing", "x", lo=0, hi=10)), "x") == [None, 5.0, None]

    def test_remove_row_zscore_keeps_order(self):
        vals = [float(v) for v in range(20)] + [1000.0] + [20.0, 21.0]
        b, _ = numeric_batch({"x": vals, "id": [float(i) for i in range(len(vals))]})
        out = apply_operator(b, op("remove_row_zscore", "x", z=3.0))
        assert column(out, "id") == [float(i) for i in range(len(vals)) if i != 20]

    def test_winsorize(self):
        b, _ = numeric_batch({"x": [1.0, 2.0, 3.0, 4.0, 100.0]})
        out = column(apply_operator(b, op("winsorize_iqr", "x", factor=1.5)), "x")
        assert out[:4] == [1.0, 2.0, 3.0, 4.0] and out[4] == pytest.approx(4 + 1.5 * 2)

    def test_flag_lof_flags_only(self):
        rng = np.random.default_rng(0)
        xs = [float(v) for v in rng.normal(0, 1, 60)] + [40.0]
        b, _ = numeric_batch({"x": xs, "y": [float(v) for v in rng.normal(0, 1, 61)]})
        out = apply_operator(b, op("flag_lof", "x", "y", k=10, threshold=1.5))
        assert 60 in out.flags["s1"]
        assert all(np.array_equal(out.columns[n], b.columns[n], equal_nan=True) for n in b.names)

    def test_drop_duplicates(self):
        b, _ = numeric_batch({"x": [1.0, 1.0, 2.0, 1.0]})
        assert column(apply_operator(b, OperatorSpec("d", "drop_exact_duplicates")), "x") == [1.0, 2.0]

    def test_standardize(self):
        b, _ = numeric_batch({"x": [1.0, 2.0, 3.0]})
        out = column(apply_operator(b, op("zscore_standardize", "x")), "x")
        assert out == pytest.approx([-math.sqrt(1.5), 0.0, math.sqrt(1.5)])

    def test_historic_mean(self):
        old, s = numeric_batch({"x": [10.0, 10.0, 10.0]})
        b, _ = numeric_batch({"x": [0.0, None]})
        spec = OperatorSpec("m", "impute_mean", ("x",), {}, HISTORIC)
        assert column(apply_operator(b, spec, [build_profile(old, s)]), "x")[1] == pytest.approx(7.5)
        assert column(apply_operator(b, spec, None), "x")[1] == 0.0

    def test_history_window(self):
        old1, s = numeric_batch({"x": [100.0]})
        old2, _ = numeric_batch({"x": [10.0]})
        b, _ = numeric_batch({"x": [10.0, None]})
        spec = OperatorSpec("m", "impute_mean", ("x",), {"history_window": 1}, HISTORIC)
        hist = [build_profile(old1, s), build_profile(old2, s)]
        assert column(apply_operator(b, spec, hist), "x")[1] == 10.0

    def test_missing_property_named(self):
        b, _ = numeric_batch({"x": [1.0]})
        with pytest.raises(MissingProperty) as ei:
            apply_operator(b, op("impute_mean", "Fixation-X"))
        assert ei.value.property == "Fixation-X"

    def test_incompatible_dtype(self):
        b, _ = typed({"g": ["a", None]}, {"g": "categorical"})
        with pytest.raises(IncompatibleDtype):
            apply_operator(b, op("impute_mean", "g"))

    def test_insufficient_data(self):
        b, _ = numeric_batch({"x": [None, None]})
        with pytest.raises(InsufficientData):
            apply_operator(b, op("impute_mean", "x"))

    def test_input_untouched(self):
        b, _ = numeric_batch({"x": [None, 1.0]})
        apply_operator(b, op("impute_constant", "x", value=0))
        assert column(b, "x") == [None, 1.0]


class TestSpec:
    def test_validation(self):
        assert validate_spec(op("clamp_to_bounds", "x", lo=0, hi=1)) == []
        assert validate_spec(op("clamp_to_bounds", "x", lo=0))
        assert validate_spec(op("impute_mean"))
        assert validate_spec(op("impute_knn", "x", k="five"))
        assert validate_spec(op("nope", "x"))
        with pytest.raises(InvalidOperator):
            apply_operator(numeric_batch({"x": [1.0]})[0], op("impute_mean", "x", bogus=1))

    def test_round_trip_and_class(self):
        s = op("impute_knn", "a", k=3, features=["b", "c"])
        assert OperatorSpec.from_dict(s.to_dict()) == s
        assert s.to_dict()["class"] == "missing_value_imputation"
        bad = dict(s.to_dict(), **{"class": "deduplication"})
        with pytest.raises(InvalidOperator):
            OperatorSpec.from_dict(bad)

    def test_catalog(self):
        assert {a.name for a in algorithms_of(OpClass.OUTLIER_HANDLING)} == {
            "remove_row_zscore", "winsorize_iqr", "flag_lof"}
        doc = json.loads(catalog_json())
        assert len(doc["algorithms"]) == len(CATALOG) == 13


class TestAccessSets:
    def test_constant_on_group(self):
        a = access_sets(op("impute_constant", "Group", value="group1"))
        assert a.read == a.write == {"Group"}

    def test_knn_features(self):
        gaze = ["ET-GazeLeft-X", "ET-GazeLeft-Y", "ET-GazeRight-X"]
        a = access_sets(op("impute_knn", "ET-GazeRight-Y", features=gaze))
        assert a.read == set(gaze) | {"ET-GazeRight-Y"} and a.write == {"ET-GazeRight-Y"}

    def test_dedup(self):
        a = access_sets(OperatorSpec("d", "drop_exact_duplicates"))
        assert a.read == a.write == {TABLE}


class TestCommutes:
    def test_clamp_and_constant(self):
        assert commutes(op("clamp_to_bounds", "x", lo=0, hi=1920), op("impute_constant", "x", id="s2", value=0))

    def test_constant_outside_bounds(self):
        assert not commutes(op("clamp_to_bounds", "x", lo=0, hi=10), op("impute_constant", "x", id="s2", value=50))

    def test_mean_and_clamp(self):
        assert not commutes(op("impute_mean", "x"), op("clamp_to_bounds", "x", id="s2", lo=0, hi=1))

    def test_disjoint_constants(self):
        assert commutes(op("impute_constant", "x", value=1), op("clamp_to_bounds", "y", id="s2", lo=0, hi=1))

    def test_dedup_never(self):
        assert not commutes(OperatorSpec("d", "drop_exact_duplicates"), op("impute_constant", "x", value=1))

    def test_knn_reads_features(self):
        assert not commutes(op("impute_knn", "a", features=["b"]), op("clamp_to_bounds", "b", id="s2", lo=0, hi=1))


# ---------------------------------------------------------------- randomized invariants

NAMES = ("a", "b", "c")


@st.composite
def specs(draw, id="s"):
    algo = draw(st.sampled_from(["impute_constant", "impute_mean", "impute_median", "impute_mode", "impute_knn",
                                 "clamp_to_bounds", "replace_with_constant", "set_to_missing",
                                 "remove_row_zscore", "winsorize_iqr", "zscore_standardize",
                                 "drop_exact_duplicates"]))
    if algo == "drop_exact_duplicates":
        return OperatorSpec(id, algo)
    targets = tuple(draw(st.lists(st.sampled_from(NAMES), min_size=1, max_size=2, unique=True)))
    value = draw(st.sampled_from([0, 50, 100, 200]))
    params = {}
    if algo == "impute_constant":
        params = {"value": value}
    elif algo in ("clamp_to_bounds", "set_to_missing"):
        params = {"lo": 0, "hi": 100}
    elif algo == "replace_with_constant":
        params = {"lo": 0, "hi": 100, "value": value}
    elif algo == "impute_knn":
        params = {"k": 3, "features": [n for n in NAMES if n not in targets][:1]}
    elif algo == "remove_row_zscore":
        params = {"z": 1.5}
    return OperatorSpec(id, algo, targets, params)


@settings(max_examples=200, deadline=None)
@given(specs("s1"), specs("s2"))
def test_commutation_is_sound(a, b):
    if not commutes(a, b):
        return
    assert commutes(b, a)
    rng = np.random.default_rng(zlib.crc32((a.key() + b.key()).encode()))
    for _ in range(50):
        batch, _ = rng_batch(rng, 30)
        ab = apply_operator(apply_operator(batch, a), b)
        ba = apply_operator(apply_operator(batch, b), a)
        assert same(ab, ba), (a.to_dict(), b.to_dict())


@settings(max_examples=200, deadline=None)
@given(specs(), st.integers(0, 2**32 - 1))
def test_cells_outside_write_set_untouched(spec, seed):
    batch, _ = rng_batch(np.random.default_rng(seed), 40)
    out = apply_operator(batch, spec)
    write = access_sets(spec).write
    if TABLE in write:
        return
    for name in NAMES:
        if name not in write:
            assert np.array_equal(out.columns[name], batch.columns[name], equal_nan=True)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_declared_idempotence(seed):
    rng = np.random.default_rng(seed)
    batch, _ = rng_batch(rng, 40)
    batch = batch.take(np.concatenate([np.arange(40), np.arange(10)]))  # plant duplicates
    for spec in (op("clamp_to_bounds", "a", "b", lo=0, hi=100), op("impute_constant", "c", value=7),
                 OperatorSpec("d", "drop_exact_duplicates")):
        assert CATALOG[spec.algorithm].idempotent
        once = apply_operator(batch, spec)
        assert same(apply_operator(once, spec), once)


def test_commutation_sound_on_fifty_batches_for_clamp_and_impute_pairs():
    rng = np.random.default_rng(3)
    pairs = [(op("clamp_to_bounds", "a", lo=0, hi=100), op("impute_constant", "a", id="s2", value=0)),
             (op("replace_with_constant", "a", lo=0, hi=100, value=100), op("impute_constant", "a", id="s2",
                                                                             value=50)),
             (op("impute_mean", "a"), op("clamp_to_bounds", "b", id="s2", lo=0, hi=100))]
    for a, b in pairs:
        assert commutes(a, b)
        for _ in range(50):
            batch, _ = rng_batch(rng, 30)
            assert same(apply_operator(apply_operator(batch, a), b), apply_operator(apply_operator(batch, b), a))
