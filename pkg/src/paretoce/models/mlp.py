"""One-hidden-layer ReLU regression network trained with Adam."""

from __future__ import annotations

import numpy as np

from .base import FitError, Predictor, as_int_seed, register_kind

PARAM_NAMES = ("W1", "b1", "W2", "b2")


def forward(params: dict, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Return (outputs, hidden pre-activations) for standardized inputs."""
    z = X @ params["W1"] + params["b1"]
    h = np.maximum(z, 0.0)
    return h @ params["W2"] + params["b2"][0], z


def loss_and_grad(params: dict, X: np.ndarray, y: np.ndarray) -> tuple[float, dict]:
    """Half mean squared error and its gradient with respect to every parameter."""
    n = X.shape[0]
    out, z = forward(params, X)
    h = np.maximum(z, 0.0)
    resid = out - y
    loss = 0.5 * float(resid @ resid) / n
    d_out = resid / n
    grads = {
        "W2": h.T @ d_out,
        "b2": np.array([d_out.sum()]),
    }
    d_z = np.outer(d_out, params["W2"]) * (z > 0)
    grads["W1"] = X.T @ d_z
    grads["b1"] = d_z.sum(axis=0)
    return loss, grads


def init_params(r: int, hidden: int, rng: np.random.Generator, zero_output: bool = False) -> dict:
    # Glorot-uniform weights and biases
    b1 = np.sqrt(6.0 / (r + hidden))
    b2 = np.sqrt(6.0 / (hidden + 1))
    params = {
        "W1": rng.uniform(-b1, b1, size=(r, hidden)),
        "b1": rng.uniform(-b1, b1, size=hidden),
        "W2": rng.uniform(-b2, b2, size=hidden),
        "b2": rng.uniform(-b2, b2, size=1),
    }
    if zero_output:
        params["W2"][:] = 0.0
        params["b2"][:] = 0.0
    return params


@register_kind
class MLPModel(Predictor):
    """Network on z-scored inputs and target; the scaling lives inside predict."""

    kind = "mlp"

    def __init__(self, params, x_mean, x_scale, y_mean, y_scale, **kw):
        params = {k: np.asarray(params[k], dtype=float) for k in PARAM_NAMES}
        super().__init__(params["W1"].shape[0], **kw)
        self.params = params
        self.x_mean = np.asarray(x_mean, dtype=float)
        self.x_scale = np.asarray(x_scale, dtype=float)
        self.y_mean = float(y_mean)
        self.y_scale = float(y_scale)

    def _predict(self, X):
        out, _ = forward(self.params, (X - self.x_mean) / self.x_scale)
        return self.y_mean + self.y_scale * out

    def _params(self):
        return {
            **{k: self.params[k].tolist() for k in PARAM_NAMES},
            "x_mean": self.x_mean.tolist(),
            "x_scale": self.x_scale.tolist(),
            "y_mean": self.y_mean,
            "y_scale": self.y_scale,
        }

    @classmethod
    def _from_params(cls, feature_count, hyperparameters, seed, params):
        return cls(
            {k: params[k] for k in PARAM_NAMES}, params["x_mean"], params["x_scale"],
            params["y_mean"], params["y_scale"], hyperparameters=hyperparameters, seed=seed,
        )


def _scale(a, axis=None):
    s = a.std(axis=axis)
    return np.where(s > 0, s, 1.0)


def fit_mlp(
    train,
    hidden: int = 100,
    seed: int = 0,
    *,
    learning_rate: float = 1e-3,
    batch_size: int = 32,
    epochs: int = 300,
    validation_fraction: float = 0.1,
    patience: int = 20,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
    zero_output_init: bool = False,
) -> MLPModel:
    """Adam on half-MSE with early stopping on a held-out validation slice.

    The weights with the best validation loss are kept.
    """
    if train.n < 10:
        raise FitError(f"need at least 10 training rows, got {train.n}")
    rng = np.random.default_rng(as_int_seed(seed))
    x_mean = train.features.mean(axis=0)
    x_scale = _scale(train.features, axis=0)
    y_mean = float(train.target.mean())
    y_scale = float(_scale(train.target))
    X = (train.features - x_mean) / x_scale
    y = (train.target - y_mean) / y_scale

    perm = rng.permutation(train.n)
    n_val = int(round(validation_fraction * train.n)) if validation_fraction > 0 else 0
    val_idx, fit_idx = perm[:n_val], perm[n_val:]
    Xf, yf = X[fit_idx], y[fit_idx]
    Xv, yv = X[val_idx], y[val_idx]

    params = init_params(train.r, hidden, rng, zero_output=zero_output_init)
    m = {k: np.zeros_like(v) for k, v in params.items()}
    v = {k: np.zeros_like(p) for k, p in params.items()}
    t = 0
    best = (np.inf, {k: p.copy() for k, p in params.items()})
    stale = 0
    for epoch in range(epochs):
        order = rng.permutation(len(fit_idx))
        for start in range(0, len(order), batch_size):
            b = order[start:start + batch_size]
            loss, grads = loss_and_grad(params, Xf[b], yf[b])
            if not np.isfinite(loss):
                raise FitError(f"non-finite training loss at epoch {epoch}")
            t += 1
            c1 = 1.0 - beta1**t
            c2 = 1.0 - beta2**t
            for k in PARAM_NAMES:
                g = grads[k]
                m[k] = beta1 * m[k] + (1 - beta1) * g
                v[k] = beta2 * v[k] + (1 - beta2) * g * g
                params[k] -= learning_rate * (m[k] / c1) / (np.sqrt(v[k] / c2) + eps)
        if n_val:
            out, _ = forward(params, Xv)
            score = float(np.mean((out - yv) ** 2))
        else:
            out, _ = forward(params, Xf)
            score = float(np.mean((out - yf) ** 2))
        if not np.isfinite(score):
            raise FitError(f"non-finite validation loss at epoch {epoch}")
        if score < best[0]:
            best = (score, {k: p.copy() for k, p in params.items()})
            stale = 0
        else:
            stale += 1
            if stale >= patience:
                break
    hp = {
        "hidden": hidden, "learning_rate": learning_rate, "batch_size": batch_size, "epochs": epochs,
        "validation_fraction": validation_fraction, "patience": patience, "epochs_run": epoch + 1,
    }
    return MLPModel(best[1], x_mean, x_scale, y_mean, y_scale, hyperparameters=hp, seed=seed)
