import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from paretoce.metrics import (
    MetricsReport,
    UnsupportedContextError,
    aggregate,
    dissimilarity,
    evaluate_ces,
    plausibility,
    true_improvement_ratio,
    validity,
)
from paretoce.recourse import CEProblem, CESet


def make_ces(X, P=None, base=None, target="maximize", names=None, used=(0,), method="method1"):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    base = np.zeros(X.shape[1]) if base is None else np.asarray(base, dtype=float)
    P = np.zeros((X.shape[0], 1)) if P is None else np.asarray(P, dtype=float).reshape(X.shape[0], -1)
    names = names or tuple(f"m{j}" for j in range(P.shape[1]))
    prob = CEProblem(base=base, C=1e6, target=target)
    return CESet(prob, X, P, names, method, tuple(used))


def report(dissim=1.0, plaus=1.0, tir=0.5, val=None, label="a", ave=None):
    val = val or {"m0": 1.0}
    return MetricsReport(val, dissim, plaus, tir, float(np.mean(list(val.values()))) if ave is None else ave, 20, label)


class TestValidity:
    def test_maximize_mean(self):
        assert validity(make_ces(np.zeros((2, 1)), [[1.0], [3.0]]), 0) == 2.0

    def test_match_exact(self):
        assert validity(make_ces(np.zeros((2, 1)), [[5.0], [5.0]], target=5.0), 0) == 0.0

    def test_match_mean_absolute(self):
        assert validity(make_ces(np.zeros((2, 1)), [[1.0], [-1.0]], target=0.0), 0) == 1.0

    def test_bad_index(self):
        ces = make_ces(np.zeros((2, 1)), [[1.0], [3.0]])
        with pytest.raises(IndexError):
            validity(ces, 3)
        with pytest.raises(IndexError):
            validity(ces, "nope")


class TestDissimilarity:
    def test_at_base(self):
        assert dissimilarity(make_ces(np.zeros((3, 4)))) == 0.0

    def test_unit_delta(self):
        assert dissimilarity(make_ces([[1.0, 0, 0]])) == 1.0

    def test_hand_mean(self):
        assert dissimilarity(make_ces([[2.0, 0.0], [0.0, 4.0]])) == 10.0


class TestPlausibility:
    def test_member_row_is_zero(self):
        assert plausibility(make_ces([[1.0, 2.0]]), np.array([[1.0, 2.0], [5.0, 5.0]])) == 0.0

    def test_single_row(self):
        assert plausibility(make_ces([[0.0, 0.0]]), np.array([[3.0, 0.0]])) == 9.0

    def test_brute_force_oracle(self):
        rng = np.random.default_rng(0)
        X, T = rng.normal(size=(100, 5)), rng.normal(size=(200, 5))
        want = np.mean([min(float(((x - t) ** 2).sum()) for t in T) for x in X])
        assert plausibility(make_ces(X), T) == pytest.approx(want, abs=1e-12)

    def test_empty_train(self):
        with pytest.raises(ValueError):
            plausibility(make_ces([[0.0]]), np.zeros((0, 1)))


def _truth(X):
    return np.asarray(X)[:, 0]


class TestTIR:
    def test_all_improve(self):
        assert true_improvement_ratio(make_ces([[1.0], [2.0]]), _truth) == 1.0

    def test_none_improve(self):
        assert true_improvement_ratio(make_ces([[0.0], [-2.0]]), _truth) == 0.0

    def test_half_of_twenty(self):
        X = np.r_[np.ones(10), -np.ones(10)][:, None]
        assert true_improvement_ratio(make_ces(X), _truth) == 0.5

    def test_requires_truth(self):
        with pytest.raises(UnsupportedContextError):
            true_improvement_ratio(make_ces([[1.0]]), None)

    def test_prediction_vs_truth_mode(self):
        ces = make_ces([[1.0], [2.0]], [[5.0], [0.0]])
        assert true_improvement_ratio(ces, _truth, mode="prediction_vs_truth") == 0.5

    @settings(max_examples=40, deadline=None)
    @given(st.lists(st.integers(-50, 50), min_size=1, max_size=20), st.floats(-1e3, 1e3))
    def test_shift_invariance(self, xs, c):
        ces = make_ces(np.array(xs, dtype=float)[:, None] / 4)
        assert true_improvement_ratio(ces, _truth) == true_improvement_ratio(ces, lambda X: _truth(X) + c)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 12), st.integers(1, 4), st.integers(0, 2**31))
def test_metrics_permutation_invariant(n, r, seed):
    rng = np.random.default_rng(seed)
    X, P, T = rng.normal(size=(n, r)), rng.normal(size=(n, 2)), rng.normal(size=(15, r))
    perm = rng.permutation(n)
    a, b = make_ces(X, P, used=(0, 1)), make_ces(X[perm], P[perm], used=(0, 1))
    assert dissimilarity(a) == pytest.approx(dissimilarity(b), rel=1e-12)
    assert plausibility(a, T) == pytest.approx(plausibility(b, T), rel=1e-12)
    assert validity(a, 1) == pytest.approx(validity(b, 1), rel=1e-12)
    assert true_improvement_ratio(a, _truth) == true_improvement_ratio(b, _truth)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 12), st.integers(1, 4), st.integers(0, 2**31))
def test_plausibility_bounded_when_base_is_training_row(n, r, seed):
    rng = np.random.default_rng(seed)
    T = rng.normal(size=(20, r))
    X = rng.normal(size=(n, r))
    ces = make_ces(X, base=T[3])
    assert 0 <= plausibility(ces, T) <= dissimilarity(ces) + 1e-12


def test_evaluate_ces_ave_val_over_used_models():
    P = np.array([[10.0, 20.0, 30.0, 99.0]])
    ces = make_ces([[1.0, 0.0]], P, used=(0, 1, 2), method="method3")
    rep = evaluate_ces(ces, np.zeros((1, 2)), truth=_truth, label="method3[m=3]")
    assert rep.ave_val == 20.0 and rep.val["m3"] == 99.0
    assert rep.dissim == 1.0 and rep.plaus == 1.0 and rep.tir == 1.0
    assert rep.ratio_val_dissim == 20.0


def test_evaluate_without_truth_has_no_tir():
    rep = evaluate_ces(make_ces([[1.0]]), np.zeros((1, 1)))
    assert rep.tir is None


class TestAggregate:
    def test_single_report(self):
        r = report(dissim=2.0, plaus=3.0, tir=0.25)
        row = aggregate([r]).rows[0]
        assert (row.dissim, row.plaus, row.tir, row.n_bases) == (2.0, 3.0, 0.25, 1)

    def test_mean_of_two(self):
        agg = aggregate([report(dissim=1.0), report(dissim=3.0)])
        assert agg.row("a").dissim == 2.0 and agg.B == {"a": 2}

    def test_ave_val_average_of_models(self):
        r = report(val={"m0": 10.0, "m1": 20.0, "m2": 30.0})
        assert aggregate([r]).rows[0].ave_val == 20.0

    def test_empty(self):
        with pytest.raises(ValueError):
            aggregate([])

    def test_ratio_undefined_for_tiny_denominator(self):
        row = aggregate([report(dissim=0.0)]).rows[0]
        assert row.ratio_val_dissim is None

    def test_top3_consistent_with_values(self):
        reps = [report(dissim=d, plaus=10 - d, tir=d / 10, label=f"l{d}") for d in range(6)]
        agg = aggregate(reps)
        low = sorted(agg.rows, key=lambda r: r.dissim)[:3]
        assert {r.label for r in agg.rows if r.top3["dissim"]} == {r.label for r in low}
        high = sorted(agg.rows, key=lambda r: -r.tir)[:3]
        assert {r.label for r in agg.rows if r.top3["tir"]} == {r.label for r in high}

    @settings(max_examples=30, deadline=None)
    @given(st.lists(st.floats(0, 1e3), min_size=1, max_size=30))
    def test_matches_streaming_sum(self, ds):
        agg = aggregate([report(dissim=d) for d in ds])
        total = 0.0
        for d in ds:
            total += d
        assert math.isclose(agg.rows[0].dissim, total / len(ds), rel_tol=1e-12, abs_tol=1e-12)

    def test_exports(self, tmp_path):
        agg = aggregate([report(label="x"), report(label="y", dissim=5.0, tir=None)])
        lines = (agg.to_csv(tmp_path / "a.csv")).read_text().splitlines()
        head = lines[0].split(",")
        assert head[:3] == ["label", "method", "val_m0"] and "fir" in head and "top3_dissim" in head
        assert len(lines) == 3
        md = agg.to_markdown()
        assert md.splitlines()[0].startswith("| method | val m0 | ave val | dissim | plaus | TIR |")
        assert "**" in md
