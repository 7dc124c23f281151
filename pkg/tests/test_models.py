import numpy as np
import pytest

from paretoce.data import CONTINUOUS, Dataset, SplitPlan, generate_case1
from paretoce.models import (
    AccuracyReport,
    FitError,
    LinearModel,
    default_zoo,
    evaluate_models,
    fit_gbt,
    fit_linear,
    fit_mlp,
    fit_random_forest,
    fit_stacking,
    fit_zoo,
    load_predictor,
    save_predictor,
    select_top_m,
)
from paretoce.models.mlp import PARAM_NAMES, init_params, loss_and_grad


def _ds(X, y):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    return Dataset(X, y, tuple(f"x{i}" for i in range(X.shape[1])), (CONTINUOUS,) * X.shape[1])


def _normal_equations(X, y):
    A = np.column_stack([np.ones(len(X)), X])
    return np.linalg.solve(A.T @ A, A.T @ y)


# --------------------------------------------------------------------------- linear

def test_linear_exact_slope():
    x = np.linspace(-3, 3, 20)
    m = fit_linear(_ds(x, 2 * x))
    assert m.coef[0] == pytest.approx(2.0, abs=1e-10)
    assert m.intercept == pytest.approx(0.0, abs=1e-10)


def test_linear_constant_target():
    X = np.random.default_rng(0).normal(size=(30, 3))
    m = fit_linear(_ds(X, np.full(30, 4.5)))
    assert m.intercept == pytest.approx(4.5, abs=1e-10)
    np.testing.assert_allclose(m.coef, 0, atol=1e-10)


def test_linear_matches_normal_equations_and_orthogonal_residuals():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(50, 3))
    y = X @ [1.0, -2.0, 0.5] + rng.normal(size=50)
    m = fit_linear(_ds(X, y))
    beta = _normal_equations(X, y)
    np.testing.assert_allclose(np.r_[m.intercept, m.coef], beta, rtol=1e-8, atol=1e-10)
    A = np.column_stack([np.ones(50), X])
    resid = y - m.predict(X)
    assert np.max(np.abs(A.T @ resid)) <= 1e-8 * np.linalg.norm(A) * np.linalg.norm(y)


def test_linear_rank_deficient_uses_ridge():
    x = np.random.default_rng(2).normal(size=20)
    m = fit_linear(_ds(np.column_stack([x, x]), 3 * x))
    assert m.hyperparameters["ridge_fallback"]
    assert m.coef.sum() == pytest.approx(3.0, rel=1e-6)


# --------------------------------------------------------------------------- trees

def _cart_oracle(X, y):
    """Plain recursive CART: exhaustive variance-reduction splits, grown until pure."""
    if len(y) < 2 or np.all(y == y[0]):
        return float(y.mean())
    best = None
    for j in range(X.shape[1]):
        order = np.argsort(X[:, j])
        xs, ys = X[order, j], y[order]
        for i in range(1, len(ys)):
            if xs[i] == xs[i - 1]:
                continue
            left, right = ys[:i], ys[i:]
            sse = ((left - left.mean()) ** 2).sum() + ((right - right.mean()) ** 2).sum()
            if best is None or sse < best[0] - 1e-12:
                best = (sse, j, (xs[i - 1] + xs[i]) / 2)
    if best is None:
        return float(y.mean())
    _, j, t = best
    mask = X[:, j] <= t
    return (j, t, _cart_oracle(X[mask], y[mask]), _cart_oracle(X[~mask], y[~mask]))


def _cart_predict(node, x):
    while isinstance(node, tuple):
        j, t, lo, hi = node
        node = lo if x[j] <= t else hi
    return node


@pytest.mark.parametrize("seed", range(3))
def test_single_tree_forest_matches_cart_oracle(seed):
    # one feature: with several features, equal-gain splits in tiny nodes are
    # broken by random feature order and the tree is not unique
    rng = np.random.default_rng(seed)
    x = rng.uniform(-10, 10, size=120)
    d = _ds(x, np.sin(x) * 5 + x + rng.normal(size=120))
    m = fit_random_forest(d, n_trees=1, seed=seed, bootstrap=False)
    tree = _cart_oracle(d.features, d.target)
    Xt = rng.uniform(-10, 10, size=(300, 1))
    want = np.array([_cart_predict(tree, x) for x in Xt])
    np.testing.assert_allclose(m.predict(Xt), want, rtol=0, atol=1e-9)


def test_forest_constant_target():
    X = np.random.default_rng(0).normal(size=(30, 2))
    m = fit_random_forest(_ds(X, np.full(30, 7.0)), n_trees=5)
    np.testing.assert_allclose(m.predict(np.random.default_rng(1).normal(size=(10, 2))), 7.0)


def test_forest_train_error_below_test_error():
    gaps = []
    for seed in range(5):
        tr, te = generate_case1(300, seed), generate_case1(300, 100 + seed)
        m = fit_random_forest(tr, n_trees=20, seed=seed)
        gaps.append(np.mean((m.predict(te.features) - te.target) ** 2) - np.mean((m.predict(tr.features) - tr.target) ** 2))
    assert np.mean(gaps) > 0


def test_forest_rejects_empty_or_tiny():
    d = generate_case1(4, 0)
    with pytest.raises(FitError):
        fit_random_forest(d, n_trees=2)
    with pytest.raises(FitError):
        fit_gbt(d, n_rounds=2)


def test_gbt_zero_rounds_is_mean():
    d = generate_case1(50, 0)
    m = fit_gbt(d, n_rounds=0)
    np.testing.assert_allclose(m.predict(d.features), d.target.mean())


def test_gbt_training_mse_non_increasing():
    d = generate_case1(300, 1)
    mses = [np.mean((fit_gbt(d, n_rounds=k).predict(d.features) - d.target) ** 2) for k in (1, 5, 20, 50, 100)]
    assert all(b <= a + 1e-9 for a, b in zip(mses, mses[1:]))


def test_tree_predictions_stable_under_tiny_perturbation():
    d = generate_case1(200, 2)
    m = fit_gbt(d, n_rounds=20)
    X = d.features[:50]
    assert np.all(np.isfinite(m.predict(X + 1e-12)))
    leaf_gap = np.ptp(m.predict(d.features))
    assert np.max(np.abs(m.predict(X + 1e-12) - m.predict(X))) <= leaf_gap


# --------------------------------------------------------------------------- MLP

def _fd_check(seed):
    rng = np.random.default_rng(seed)
    params = init_params(4, 7, rng)
    X, y = rng.normal(size=(5, 4)), rng.normal(size=5)
    _, grads = loss_and_grad(params, X, y)
    h = 1e-6
    for name in PARAM_NAMES:
        p = params[name]
        for idx in np.ndindex(p.shape):
            old = p[idx]
            p[idx] = old + h
            up, _ = loss_and_grad(params, X, y)
            p[idx] = old - h
            dn, _ = loss_and_grad(params, X, y)
            p[idx] = old
            fd = (up - dn) / (2 * h)
            g = grads[name][idx]
            assert abs(g - fd) <= 1e-4 * max(1.0, abs(g), abs(fd)), (name, idx, g, fd)


@pytest.mark.parametrize("seed", range(3))
def test_mlp_gradient_matches_finite_differences(seed):
    _fd_check(seed)


def test_mlp_constant_target_zero_output_init():
    X = np.random.default_rng(0).normal(size=(60, 3))
    m = fit_mlp(_ds(X, np.full(60, 2.5)), hidden=8, epochs=50, zero_output_init=True)
    np.testing.assert_allclose(m.predict(X), 2.5, atol=0.1)


def test_mlp_learns_affine_map():
    rng = np.random.default_rng(4)
    X = rng.uniform(-2, 2, size=(400, 2))
    y = 3 * X[:, 0] - 2 * X[:, 1] + 1
    m = fit_mlp(_ds(X[:300], y[:300]), hidden=32, seed=1, epochs=200)
    assert np.mean((m.predict(X[300:]) - y[300:]) ** 2) < 0.05 * y.var()


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_mlp_non_finite_loss_names_epoch():
    X = np.random.default_rng(0).normal(size=(40, 2))
    with pytest.raises(FitError, match="epoch"):
        fit_mlp(_ds(X, X[:, 0]), hidden=4, learning_rate=1e300, epochs=5)


def test_mlp_needs_ten_rows():
    with pytest.raises(FitError):
        fit_mlp(_ds(np.arange(9.0), np.arange(9.0)))


# --------------------------------------------------------------------------- stacking

def test_stacking_matches_normal_equations():
    d = generate_case1(120, 5)
    bases = [fit_linear(d), fit_gbt(d, n_rounds=10)]
    s = fit_stacking(bases, d)
    P = np.column_stack([b.predict(d.features) for b in bases])
    np.testing.assert_allclose(np.r_[s.intercept, s.weights], _normal_equations(P, d.target), rtol=1e-8)
    assert s.bases[0] is bases[0] and s.bases[1] is bases[1]


def test_stacking_prefers_perfect_model():
    X = np.random.default_rng(0).normal(size=(60, 2))
    y = X @ [1.0, 2.0] + 0.5
    perfect = LinearModel([1.0, 2.0], 0.5)
    const = LinearModel([0.0, 0.0], 3.0)
    s = fit_stacking([perfect, const], _ds(X, y))
    assert s.weights[0] == pytest.approx(1.0, abs=1e-6)
    assert np.mean((s.predict(X) - y) ** 2) < 1e-12


def test_stacking_duplicated_base_ridge():
    d = generate_case1(80, 1)
    base = fit_linear(d)
    s = fit_stacking([base, base], d)
    assert s.hyperparameters["ridge_fallback"]
    assert s.weights.sum() == pytest.approx(1.0, abs=1e-4)


def test_stacking_needs_two_bases():
    d = generate_case1(30, 0)
    with pytest.raises(FitError):
        fit_stacking([fit_linear(d)], d)


# --------------------------------------------------------------------------- shared contract

@pytest.fixture(scope="module")
def small_zoo():
    d = generate_case1(150, 8)
    zoo = default_zoo(n_trees=10, n_rounds=10, hidden=8, mlp_options={"epochs": 20})
    return d, fit_zoo(zoo, d, seed=3)


def test_predict_contract(small_zoo):
    d, fitted = small_zoo
    for name, m in fitted.items():
        out = m.predict(d.features)
        assert out.shape == (d.n,) and np.all(np.isfinite(out)), name
        assert isinstance(m.predict(d.features[0]), float)
        with pytest.raises(ValueError):
            m.predict(np.zeros(4))


def test_refit_is_bit_identical(small_zoo):
    d, fitted = small_zoo
    zoo = default_zoo(n_trees=10, n_rounds=10, hidden=8, mlp_options={"epochs": 20})
    again = fit_zoo(zoo, d, seed=3)
    for name in fitted:
        np.testing.assert_array_equal(again[name].predict(d.features), fitted[name].predict(d.features))


def test_serialization_round_trip(small_zoo, tmp_path):
    d, fitted = small_zoo
    for name, m in fitted.items():
        back = load_predictor(save_predictor(m, tmp_path / f"{name}.json"))
        np.testing.assert_array_equal(back.predict(d.features), m.predict(d.features))


# --------------------------------------------------------------------------- evaluation

def test_evaluate_perfect_model_first_and_mean_of_splits():
    X = np.random.default_rng(0).normal(size=(60, 2))
    d = _ds(X, X @ [1.0, -1.0])
    zoo = {
        "noisy": lambda tr, seed, f: LinearModel([0.5, 0.0], 0.0),
        "perfect": lambda tr, seed, f: fit_linear(tr),
    }
    rep = evaluate_models(zoo, d, SplitPlan(4, 0.7, 1))
    assert rep.mean_mse[1] < 1e-20 and rep.ranking[0] == 1
    running = 0.0
    for row in rep.split_mse:
        running += row[0]
    assert rep.mean_mse[0] == pytest.approx(running / 4, rel=1e-12)


def test_identical_models_tie_by_index():
    d = generate_case1(40, 0)
    zoo = {"a": lambda tr, s, f: fit_linear(tr), "b": lambda tr, s, f: fit_linear(tr)}
    rep = evaluate_models(zoo, d, SplitPlan(2, 0.7, 0))
    assert rep.mean_mse[0] == rep.mean_mse[1] and rep.ranking == [0, 1]


def test_fit_error_names_model_and_split():
    d = generate_case1(40, 0)

    def broken(tr, seed, fitted):
        raise FitError("boom")

    with pytest.raises(FitError, match="'bad', split 0"):
        evaluate_models({"ok": lambda tr, s, f: fit_linear(tr), "bad": broken}, d, SplitPlan(2, 0.7, 0))


def _report(means):
    return AccuracyReport(tuple(f"m{i}" for i in range(len(means))), np.array([means], dtype=float))


def test_select_top_m():
    rep = _report([3.0, 1.0, 4.0, 0.5])  # ranking [3, 1, 0, 2]
    assert select_top_m(rep, 2) == [3, 1]
    assert select_top_m(rep, 4) == rep.ranking
    with pytest.raises(ValueError):
        select_top_m(rep, 0)
    with pytest.raises(ValueError):
        select_top_m(rep, 5)


def test_select_top_m_survey_style_report():
    names = ("linear", "random_forest", "gbt", "mlp", "stacking")
    rep = AccuracyReport(names, np.array([[40.0, 45.0, 48.0, 44.0, 41.0]]))
    chosen = {names[i] for i in select_top_m(rep, 3, candidates=names[:4])}
    assert chosen == {"linear", "random_forest", "mlp"}


def test_accuracy_csv(tmp_path):
    p = _report([1.0, 2.0]).to_csv(tmp_path / "a.csv")
    assert p.read_text().splitlines()[0] == "model,mean_mse,std_mse"
