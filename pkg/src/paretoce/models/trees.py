"""Tree ensembles: bagged CART forest and least-squares gradient boosting.

Trees are grown with scikit-learn's CART builder and then flattened into
one set of node arrays, so a whole ensemble is evaluated by walking every
tree in lock-step with a handful of vectorised gathers.
"""

from __future__ import annotations

import numpy as np
from sklearn.ensemble import RandomForestRegressor
from sklearn.tree import DecisionTreeRegressor

from .base import FitError, Predictor, as_int_seed, register_kind


@register_kind(aliases=("random_forest", "gbt"))
class TreeEnsemble(Predictor):
    """Sum of regression trees plus a constant base score.

    Node arrays are global across trees; leaves point to themselves so that
    extra traversal steps are no-ops. Leaf values already carry the
    ensemble weighting (1/n_trees for a forest, the learning rate for
    boosting).
    """

    kind = "tree_ensemble"

    def __init__(self, feature_count, roots, feature, threshold, left, right, value, base_score, depth, *, kind, **kw):
        super().__init__(feature_count, **kw)
        self.kind = kind
        self.roots = np.asarray(roots, dtype=np.int64)
        self.feature = np.asarray(feature, dtype=np.int64)
        self.threshold = np.asarray(threshold, dtype=float)
        self.left = np.asarray(left, dtype=np.int64)
        self.right = np.asarray(right, dtype=np.int64)
        self.value = np.asarray(value, dtype=float)
        self.base_score = float(base_score)
        self.depth = int(depth)

    @property
    def n_trees(self) -> int:
        return len(self.roots)

    def _predict(self, X):
        n = X.shape[0]
        if self.n_trees == 0:
            return np.full(n, self.base_score)
        node = np.repeat(self.roots[:, None], n, axis=1)
        rows = np.arange(n)[None, :]
        for _ in range(self.depth):
            go_left = X[rows, self.feature[node]] <= self.threshold[node]
            node = np.where(go_left, self.left[node], self.right[node])
        return self.base_score + self.value[node].sum(axis=0)

    def _params(self):
        return {
            "roots": self.roots.tolist(),
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
            "base_score": self.base_score,
            "depth": self.depth,
        }

    @classmethod
    def _from_params(cls, feature_count, hyperparameters, seed, params):
        p = dict(params)
        kind = hyperparameters.get("ensemble", "tree_ensemble")
        return cls(feature_count, **p, kind=kind, hyperparameters=hyperparameters, seed=seed)

    @classmethod
    def from_sklearn(cls, trees, weight, base_score, feature_count, *, kind, hyperparameters, seed):
        roots, feats, thrs, lefts, rights, vals = [], [], [], [], [], []
        offset = 0
        depth = 0
        for est in trees:
            t = est.tree_
            k = t.node_count
            idx = np.arange(k) + offset
            leaf = t.children_left < 0
            roots.append(offset)
            feats.append(np.where(leaf, 0, t.feature))
            thrs.append(np.where(leaf, 0.0, t.threshold))
            lefts.append(np.where(leaf, idx, t.children_left + offset))
            rights.append(np.where(leaf, idx, t.children_right + offset))
            vals.append(np.where(leaf, t.value[:, 0, 0] * weight, 0.0))
            depth = max(depth, est.get_depth())
            offset += k
        cat = (lambda a, dt: np.concatenate(a).astype(dt)) if trees else (lambda a, dt: np.zeros(0, dt))
        hyperparameters = dict(hyperparameters, ensemble=kind)
        return cls(
            feature_count, np.array(roots, dtype=np.int64), cat(feats, np.int64), cat(thrs, float),
            cat(lefts, np.int64), cat(rights, np.int64), cat(vals, float), base_score, depth,
            kind=kind, hyperparameters=hyperparameters, seed=seed,
        )


def _check_train(train, min_rows=5):
    if train.n == 0:
        raise FitError("empty training data")
    if train.n < min_rows:
        raise FitError(f"need at least {min_rows} training rows, got {train.n}")


def fit_random_forest(train, n_trees: int = 100, seed: int = 0, bootstrap: bool = True) -> TreeEnsemble:
    """Full-depth CART trees on bootstrap resamples, all features per split."""
    _check_train(train)
    rf = RandomForestRegressor(
        n_estimators=n_trees,
        max_features=1.0,
        min_samples_split=2,
        min_samples_leaf=1,
        bootstrap=bootstrap,
        random_state=as_int_seed(seed),
        n_jobs=1,
    )
    rf.fit(train.features, train.target)
    return TreeEnsemble.from_sklearn(
        rf.estimators_, 1.0 / n_trees, 0.0, train.r, kind="random_forest",
        hyperparameters={"n_trees": n_trees, "bootstrap": bootstrap}, seed=seed,
    )


def fit_gbt(
    train,
    n_rounds: int = 100,
    seed: int = 0,
    learning_rate: float = 0.1,
    max_leaves: int = 31,
    min_samples_leaf: int = 5,
) -> TreeEnsemble:
    """Squared-loss boosting with leaf-wise (best-first) trees on residuals."""
    _check_train(train)
    X, y = train.features, train.target
    base = float(y.mean())
    F = np.full(train.n, base)
    trees = []
    for k in range(n_rounds):
        tree = DecisionTreeRegressor(
            max_leaf_nodes=max_leaves,
            min_samples_leaf=min_samples_leaf,
            random_state=as_int_seed(seed, k),
        )
        tree.fit(X, y - F)
        F = F + learning_rate * tree.predict(X)
        trees.append(tree)
    return TreeEnsemble.from_sklearn(
        trees, learning_rate, base, train.r, kind="gbt",
        hyperparameters={
            "n_rounds": n_rounds, "learning_rate": learning_rate,
            "max_leaves": max_leaves, "min_samples_leaf": min_samples_leaf,
        },
        seed=seed,
    )
