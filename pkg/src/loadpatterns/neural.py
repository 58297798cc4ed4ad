"""Pattern-dependent feedforward networks coupled by a softmax layer.

Each load pattern gets its own fully connected network fed that pattern's
selected socioeconomic features. Every layer applies a sigmoid, including the
scalar output layer; the K scalar outputs then pass through a shared softmax
so the ensemble emits a valid probability distribution. Training is plain
minibatch SGD on the summed per-pattern root-mean-square losses, with the
gradients flowing through the softmax into all networks jointly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .errors import (
    ArityMismatchError,
    DivergedLossError,
    EmptySplitError,
    LengthMismatchError,
    NonFiniteActivationError,
)
from .validation import as_float_matrix

CHECKPOINT_VERSION = 1


def softmax(scores: np.ndarray) -> np.ndarray:
    """Row-wise softmax; invariant to adding a constant to a row."""
    s = np.asarray(scores, dtype=np.float64)
    shifted = s - s.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def pattern_rmse(Y_true, Y_pred) -> np.ndarray:
    """Per-pattern root-mean-square error between two (n, K) matrices."""
    Y_true = np.asarray(Y_true, dtype=np.float64)
    Y_pred = np.asarray(Y_pred, dtype=np.float64)
    if Y_true.shape != Y_pred.shape:
        raise LengthMismatchError(
            f"target shape {Y_true.shape} != prediction shape {Y_pred.shape}"
        )
    return np.sqrt(np.mean((Y_true - Y_pred) ** 2, axis=0))


def _init_stack(sizes: list[int], rng: np.random.Generator) -> list[list[np.ndarray]]:
    """Glorot-uniform weights, zero biases, one (W, b) pair per layer."""
    params = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        W = rng.uniform(-limit, limit, size=(fan_in, fan_out))
        b = np.zeros(fan_out)
        params.append([W, b])
    return params


def _forward_stack(Z: np.ndarray, params: list[list[np.ndarray]]) -> list[np.ndarray]:
    acts = [Z]
    for W, b in params:
        acts.append(expit(acts[-1] @ W + b))
    return acts


def _backward_stack(
    acts: list[np.ndarray], params: list[list[np.ndarray]], grad_out: np.ndarray
) -> list[list[np.ndarray]]:
    grads: list[list[np.ndarray]] = []
    delta = grad_out * acts[-1] * (1.0 - acts[-1])
    for layer in reversed(range(len(params))):
        W, _ = params[layer]
        grads.append([acts[layer].T @ delta, delta.sum(axis=0)])
        if layer > 0:
            delta = (delta @ W.T) * acts[layer] * (1.0 - acts[layer])
    grads.reverse()
    return grads


def _loss_gradient(Y: np.ndarray, P: np.ndarray) -> tuple[float, np.ndarray]:
    """Summed per-pattern RMSE and its gradient w.r.t. the predictions."""
    n = Y.shape[0]
    per_k = np.sqrt(np.mean((Y - P) ** 2, axis=0))
    grad = np.zeros_like(P)
    nonzero = per_k > 0
    grad[:, nonzero] = -(Y[:, nonzero] - P[:, nonzero]) / (n * per_k[nonzero])
    return float(per_k.sum()), grad


def _softmax_backward(P: np.ndarray, grad_P: np.ndarray) -> np.ndarray:
    inner = (grad_P * P).sum(axis=1, keepdims=True)
    return P * (grad_P - inner)


class PatternEnsemble(BaseEstimator):
    """K per-pattern networks joined by a softmax normalization layer.

    Parameters
    ----------
    feature_subsets : per-pattern column index lists; None feeds every
        column to every network.
    hidden_layers, width : hidden architecture shared by all networks; a
        final sigmoid layer maps the last hidden layer to one scalar.
    learning_rate, batch_size, max_epochs, patience : SGD schedule; early
        stopping watches the validation loss and restores the best epoch.
    coupling : "softmax" backpropagates the summed loss through the shared
        softmax; "independent" fits each network to its own target column
        and only applies the softmax at prediction time.
    """

    def __init__(
        self,
        feature_subsets=None,
        hidden_layers: int = 3,
        width: int = 64,
        learning_rate: float = 0.03,
        batch_size: int = 32,
        max_epochs: int = 2000,
        patience: int = 20,
        random_state: int = 0,
        coupling: str = "softmax",
    ):
        self.feature_subsets = feature_subsets
        self.hidden_layers = hidden_layers
        self.width = width
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.patience = patience
        self.random_state = random_state
        self.coupling = coupling

    # -- internals ---------------------------------------------------------

    def _standardize(self, X: np.ndarray) -> np.ndarray:
        return (X - self.scale_mean_) / self.scale_std_

    def _net_inputs(self, Xs: np.ndarray) -> list[np.ndarray]:
        return [Xs[:, idx] for idx in self.feature_subsets_]

    def _forward_all(
        self, Xs: np.ndarray
    ) -> tuple[list[list[np.ndarray]], np.ndarray, np.ndarray]:
        acts_per_net = []
        scores = np.empty((Xs.shape[0], self.n_patterns_))
        for k, Z in enumerate(self._net_inputs(Xs)):
            acts = _forward_stack(Z, self.nets_[k])
            acts_per_net.append(acts)
            scores[:, k] = acts[-1][:, 0]
        return acts_per_net, scores, softmax(scores)

    def _train_step(self, Xs: np.ndarray, Y: np.ndarray) -> None:
        acts_per_net, scores, P = self._forward_all(Xs)
        if self.coupling == "independent":
            _, grad_scores = _loss_gradient(Y, scores)
        else:
            _, grad_P = _loss_gradient(Y, P)
            grad_scores = _softmax_backward(P, grad_P)
        lr = self.learning_rate
        for k in range(self.n_patterns_):
            grads = _backward_stack(
                acts_per_net[k], self.nets_[k], grad_scores[:, k : k + 1]
            )
            for (W, b), (dW, db) in zip(self.nets_[k], grads):
                W -= lr * dW
                b -= lr * db

    def _loss_on(self, Xs: np.ndarray, Y: np.ndarray) -> float:
        _, _, P = self._forward_all(Xs)
        return float(pattern_rmse(Y, P).sum())

    def _snapshot(self) -> list[list[list[np.ndarray]]]:
        return [[[W.copy(), b.copy()] for W, b in net] for net in self.nets_]

    # -- estimator API -------------------------------------------------------

    def fit(self, X, Y, X_val=None, Y_val=None):
        if self.coupling not in ("softmax", "independent"):
            raise ValueError(f"unknown coupling mode {self.coupling!r}")
        X = as_float_matrix(X, name="X")
        Y = as_float_matrix(Y, name="Y")
        if X.shape[0] != Y.shape[0]:
            raise LengthMismatchError(
                f"{X.shape[0]} feature rows vs {Y.shape[0]} target rows"
            )
        if X.shape[0] == 0:
            raise EmptySplitError("training split is empty")
        n_features = X.shape[1]
        K = Y.shape[1]

        if self.feature_subsets is None:
            subsets = [tuple(range(n_features)) for _ in range(K)]
        else:
            subsets = [tuple(int(i) for i in s) for s in self.feature_subsets]
            if len(subsets) != K:
                raise ArityMismatchError(
                    f"{len(subsets)} feature subsets for {K} patterns"
                )
            for k, s in enumerate(subsets):
                if not s:
                    raise ArityMismatchError(f"pattern {k} has an empty feature subset")
                if any(i < 0 or i >= n_features for i in s):
                    raise ArityMismatchError(
                        f"pattern {k} subset {s} out of range for {n_features} features"
                    )

        self.n_patterns_ = K
        self.n_features_in_ = n_features
        self.feature_subsets_ = subsets
        self.scale_mean_ = X.mean(axis=0)
        std = X.std(axis=0)
        std[std == 0] = 1.0  # constant feature: centre it and leave it at 0
        self.scale_std_ = std

        rng = np.random.default_rng(self.random_state)
        self.nets_ = [
            _init_stack(
                [len(s)] + [self.width] * self.hidden_layers + [1], rng
            )
            for s in subsets
        ]

        Xs = self._standardize(X)
        has_val = X_val is not None and Y_val is not None
        if has_val:
            X_val = as_float_matrix(X_val, n_cols=n_features, name="X_val")
            Y_val = as_float_matrix(Y_val, name="Y_val")
            if X_val.shape[0] == 0:
                raise EmptySplitError("validation split is empty")
            Xv = self._standardize(X_val)

        n = Xs.shape[0]
        best_loss = np.inf
        best_nets = self._snapshot()
        best_epoch = 0
        since_best = 0
        self.history_: list[tuple[int, float, float | None]] = []

        for epoch in range(self.max_epochs):
            order = rng.permutation(n)
            for start in range(0, n, self.batch_size):
                batch = order[start : start + self.batch_size]
                self._train_step(Xs[batch], Y[batch])

            train_loss = self._loss_on(Xs, Y)
            if not np.isfinite(train_loss):
                raise DivergedLossError(f"training loss became {train_loss} at epoch {epoch}")
            val_loss = self._loss_on(Xv, Y_val) if has_val else None
            watched = val_loss if has_val else train_loss
            if not np.isfinite(watched):
                raise DivergedLossError(f"watched loss became {watched} at epoch {epoch}")
            self.history_.append((epoch, train_loss, val_loss))

            if watched < best_loss:
                best_loss = watched
                best_nets = self._snapshot()
                best_epoch = epoch
                since_best = 0
            else:
                since_best += 1
                if since_best >= self.patience:
                    break

        self.nets_ = best_nets
        self.best_epoch_ = best_epoch
        self.best_loss_ = float(best_loss)
        return self

    def loss_gradients(
        self, X, Y
    ) -> tuple[float, list[list[list[np.ndarray]]]]:
        """Loss and its analytic gradient for every weight and bias.

        Returns the summed per-pattern RMSE on (X, Y) and gradients nested
        like ``nets_``: one [dW, db] pair per layer per network. Useful for
        finite-difference verification; does not modify the model.
        """
        check_is_fitted(self, "nets_")
        X = as_float_matrix(X, n_cols=self.n_features_in_, name="X")
        Y = as_float_matrix(Y, name="Y")
        Xs = self._standardize(X)
        acts_per_net, scores, P = self._forward_all(Xs)
        if self.coupling == "independent":
            loss, grad_scores = _loss_gradient(Y, scores)
        else:
            loss, grad_P = _loss_gradient(Y, P)
            grad_scores = _softmax_backward(P, grad_P)
        grads = [
            _backward_stack(acts_per_net[k], self.nets_[k], grad_scores[:, k : k + 1])
            for k in range(self.n_patterns_)
        ]
        return loss, grads

    def loss_on(self, X, Y) -> float:
        """Summed per-pattern RMSE of the model's predictions on (X, Y)."""
        check_is_fitted(self, "nets_")
        X = as_float_matrix(X, n_cols=self.n_features_in_, name="X")
        Y = as_float_matrix(Y, name="Y")
        Xs = self._standardize(X)
        if self.coupling == "independent":
            _, scores, _ = self._forward_all(Xs)
            return float(pattern_rmse(Y, scores).sum())
        return self._loss_on(Xs, Y)

    def forward_components(self, X) -> tuple[np.ndarray, np.ndarray]:
        """Raw per-network outputs and their softmax normalization."""
        check_is_fitted(self, "nets_")
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X.reshape(1, -1)
        if X.shape[1] != self.n_features_in_:
            raise ArityMismatchError(
                f"expected {self.n_features_in_} features, got {X.shape[1]}"
            )
        if not np.isfinite(X).all():
            raise NonFiniteActivationError("input contains NaN or infinity")
        _, scores, P = self._forward_all(self._standardize(X))
        if not np.isfinite(scores).all():
            raise NonFiniteActivationError("forward pass produced non-finite values")
        return scores, P

    def predict(self, X) -> np.ndarray:
        """Predicted pattern distribution per row; positive, rows sum to 1."""
        return self.forward_components(X)[1]

    # -- persistence ---------------------------------------------------------

    def to_checkpoint(self, feature_names: list[str] | None = None) -> dict:
        check_is_fitted(self, "nets_")
        subsets_named = None
        if feature_names is not None:
            subsets_named = [
                [feature_names[i] for i in s] for s in self.feature_subsets_
            ]
        return {
            "version": CHECKPOINT_VERSION,
            "kind": "pattern_ensemble",
            "coupling": self.coupling,
            "n_patterns": self.n_patterns_,
            "n_features": self.n_features_in_,
            "hidden_layers": self.hidden_layers,
            "width": self.width,
            "random_state": self.random_state,
            "feature_subsets": [list(s) for s in self.feature_subsets_],
            "feature_subset_names": subsets_named,
            "scale_mean": [float(v) for v in self.scale_mean_],
            "scale_std": [float(v) for v in self.scale_std_],
            "networks": [
                [
                    {
                        "shape": list(W.shape),
                        "weights": [float(v) for v in W.ravel()],
                        "bias": [float(v) for v in b],
                    }
                    for W, b in net
                ]
                for net in self.nets_
            ],
        }

    @classmethod
    def from_checkpoint(cls, data: dict) -> "PatternEnsemble":
        if data.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {data.get('version')}")
        est = cls(
            feature_subsets=[tuple(s) for s in data["feature_subsets"]],
            hidden_layers=data["hidden_layers"],
            width=data["width"],
            random_state=data["random_state"],
            coupling=data.get("coupling", "softmax"),
        )
        est.n_patterns_ = data["n_patterns"]
        est.n_features_in_ = data["n_features"]
        est.feature_subsets_ = [tuple(s) for s in data["feature_subsets"]]
        est.scale_mean_ = np.array(data["scale_mean"])
        est.scale_std_ = np.array(data["scale_std"])
        est.nets_ = [
            [
                [
                    np.array(layer["weights"]).reshape(layer["shape"]),
                    np.array(layer["bias"]),
                ]
                for layer in net
            ]
            for net in data["networks"]
        ]
        est.history_ = []
        return est


def predict_distribution(model, record, day_class: str = ""):
    """Map one household's survey record to its predicted pattern shares."""
    from .cluster import PatternDistribution

    probs = model.predict(record.feature_vector().reshape(1, -1))[0]
    return PatternDistribution(
        household_id=record.household_id, day_class=day_class, probs=probs
    )


@dataclass
class SplitIndices:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray


def split_dataset(
    n: int, fractions: tuple[float, float, float] = (0.70, 0.15, 0.15), seed: int = 0
) -> SplitIndices:
    """Seeded household-level split into train/validation/test indices."""
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError(f"split fractions {fractions} must sum to 1")
    order = np.random.default_rng(seed).permutation(n)
    n_train = int(round(fractions[0] * n))
    n_val = int(round(fractions[1] * n))
    train, val, test = order[:n_train], order[n_train : n_train + n_val], order[n_train + n_val :]
    if min(train.size, val.size, test.size) == 0:
        raise EmptySplitError(f"split of {n} samples left an empty part")
    return SplitIndices(train=train, val=val, test=test)


@dataclass
class GridSearchResult:
    best: dict
    table: list[dict]
    best_model: PatternEnsemble


def grid_search(
    X_train,
    Y_train,
    X_val,
    Y_val,
    layer_counts=(3,),
    widths=(64,),
    learning_rates=(0.1, 0.03, 0.01),
    feature_subsets=None,
    batch_size: int = 32,
    max_epochs: int = 2000,
    patience: int = 20,
    random_state: int = 0,
    coupling: str = "softmax",
) -> GridSearchResult:
    """Train one ensemble per grid cell and keep the best validation loss."""
    if not layer_counts or not widths or not learning_rates:
        raise ValueError("grid must be non-empty")
    best_model = None
    best_cell = None
    table = []
    for layers in layer_counts:
        for width in widths:
            for lr in learning_rates:
                model = PatternEnsemble(
                    feature_subsets=feature_subsets,
                    hidden_layers=layers,
                    width=width,
                    learning_rate=lr,
                    batch_size=batch_size,
                    max_epochs=max_epochs,
                    patience=patience,
                    random_state=random_state,
                    coupling=coupling,
                )
                model.fit(X_train, Y_train, X_val, Y_val)
                val_loss = float(pattern_rmse(np.asarray(Y_val), model.predict(X_val)).sum())
                cell = {
                    "hidden_layers": layers,
                    "width": width,
                    "learning_rate": lr,
                    "val_loss": val_loss,
                }
                table.append(cell)
                if best_cell is None or val_loss < best_cell["val_loss"]:
                    best_cell = cell
                    best_model = model
    return GridSearchResult(best=best_cell, table=table, best_model=best_model)
