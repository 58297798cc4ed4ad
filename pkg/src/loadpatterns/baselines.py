"""Benchmark models the pattern-dependent ensemble is compared against.

Benchmark 1 is a self-contained gradient-boosted regression-tree learner,
one booster per pattern, with the stacked outputs renormalized through the
same softmax as the main model. Benchmark 2 is a single network with K
sigmoid outputs and a softmax head. Benchmark 3 reuses the main ensemble
architecture but feeds each pattern the features it did not select.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .errors import (
    ArityMismatchError,
    DivergedLossError,
    EmptyComplementError,
    EmptySplitError,
    LengthMismatchError,
    NonFiniteActivationError,
)
from .neural import (
    PatternEnsemble,
    _backward_stack,
    _forward_stack,
    _init_stack,
    _loss_gradient,
    _softmax_backward,
    pattern_rmse,
    softmax,
)
from .validation import as_float_matrix, as_float_vector


# --- benchmark 1: gradient-boosted regression trees -------------------------

@dataclass
class _TreeNode:
    feature: int = -1
    threshold: float = 0.0
    left: "_TreeNode | None" = None
    right: "_TreeNode | None" = None
    value: float = 0.0

    @property
    def is_leaf(self) -> bool:
        return self.left is None


def _best_split(X: np.ndarray, residual: np.ndarray) -> tuple[int, float, float] | None:
    """Greedy variance-reduction split; None when nothing reduces the SSE."""
    n, m = X.shape
    base_sse = float(((residual - residual.mean()) ** 2).sum())
    best = None
    best_sse = base_sse
    for j in range(m):
        order = np.argsort(X[:, j], kind="stable")
        xs = X[order, j]
        rs = residual[order]
        prefix = np.cumsum(rs)
        prefix_sq = np.cumsum(rs**2)
        total = prefix[-1]
        total_sq = prefix_sq[-1]
        for i in range(n - 1):
            if xs[i] == xs[i + 1]:
                continue
            nl = i + 1
            nr = n - nl
            sse = (prefix_sq[i] - prefix[i] ** 2 / nl) + (
                (total_sq - prefix_sq[i]) - (total - prefix[i]) ** 2 / nr
            )
            if sse < best_sse - 1e-15:
                best_sse = sse
                best = (j, (xs[i] + xs[i + 1]) / 2.0, sse)
    return best


def _grow_tree(X: np.ndarray, residual: np.ndarray, depth: int) -> _TreeNode:
    node = _TreeNode(value=float(residual.mean()))
    if depth == 0 or X.shape[0] < 2:
        return node
    split = _best_split(X, residual)
    if split is None:
        return node
    j, threshold, _ = split
    mask = X[:, j] <= threshold
    node.feature = j
    node.threshold = threshold
    node.left = _grow_tree(X[mask], residual[mask], depth - 1)
    node.right = _grow_tree(X[~mask], residual[~mask], depth - 1)
    return node


def _tree_predict(node: _TreeNode, X: np.ndarray) -> np.ndarray:
    if node.is_leaf:
        return np.full(X.shape[0], node.value)
    mask = X[:, node.feature] <= node.threshold
    out = np.empty(X.shape[0])
    out[mask] = _tree_predict(node.left, X[mask])
    out[~mask] = _tree_predict(node.right, X[~mask])
    return out


class BoostedTreeRegressor(BaseEstimator):
    """Squared-error gradient boosting over depth-limited regression trees.

    Each round fits a tree to the running residual and adds it with
    shrinkage. A constant target short-circuits to a zero-tree model that
    returns the mean. ``random_state`` is accepted for API uniformity; the
    greedy splitter itself is deterministic.
    """

    def __init__(
        self,
        n_trees: int = 100,
        max_depth: int = 3,
        shrinkage: float = 0.1,
        random_state: int = 0,
    ):
        self.n_trees = n_trees
        self.max_depth = max_depth
        self.shrinkage = shrinkage
        self.random_state = random_state

    def fit(self, X, y):
        X = as_float_matrix(X, name="X")
        y = as_float_vector(y, name="y")
        if X.shape[0] != y.size:
            raise LengthMismatchError(f"{X.shape[0]} rows vs {y.size} targets")
        if X.shape[0] < 2:
            raise EmptySplitError("need at least 2 training households")

        self.base_ = float(y.mean())
        self.trees_: list[_TreeNode] = []
        self.train_losses_ = []
        prediction = np.full(y.size, self.base_)
        self.train_losses_.append(float(((y - prediction) ** 2).mean()))
        if np.all(y == y[0]):
            self.n_features_in_ = X.shape[1]
            return self  # degenerate target: mean model, zero trees

        for _ in range(self.n_trees):
            residual = y - prediction
            tree = _grow_tree(X, residual, self.max_depth)
            self.trees_.append(tree)
            prediction = prediction + self.shrinkage * _tree_predict(tree, X)
            self.train_losses_.append(float(((y - prediction) ** 2).mean()))
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X) -> np.ndarray:
        check_is_fitted(self, "trees_")
        X = as_float_matrix(X, n_cols=self.n_features_in_, name="X")
        out = np.full(X.shape[0], self.base_)
        for tree in self.trees_:
            out = out + self.shrinkage * _tree_predict(tree, X)
        return out


class BoostedPatternModel(BaseEstimator):
    """One booster per pattern, outputs renormalized through the softmax."""

    def __init__(
        self,
        n_trees: int = 100,
        max_depth: int = 3,
        shrinkage: float = 0.1,
        random_state: int = 0,
    ):
        self.n_trees = n_trees
        self.max_depth = max_depth
        self.shrinkage = shrinkage
        self.random_state = random_state

    def fit(self, X, Y):
        X = as_float_matrix(X, name="X")
        Y = as_float_matrix(Y, name="Y")
        self.boosters_ = [
            BoostedTreeRegressor(
                n_trees=self.n_trees,
                max_depth=self.max_depth,
                shrinkage=self.shrinkage,
                random_state=self.random_state,
            ).fit(X, Y[:, k])
            for k in range(Y.shape[1])
        ]
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X) -> np.ndarray:
        check_is_fitted(self, "boosters_")
        X = as_float_matrix(X, n_cols=self.n_features_in_, name="X")
        raw = np.column_stack([b.predict(X) for b in self.boosters_])
        return softmax(raw)


# --- benchmark 2: one network spanning every pattern -------------------------

class UnifiedPatternNetwork(BaseEstimator):
    """A single sigmoid network with K outputs and a softmax head.

    Shares the training loop shape with the main ensemble: minibatch SGD on
    the summed per-pattern RMSE, early stopping on validation loss.
    """

    def __init__(
        self,
        hidden_layers: int = 3,
        width: int = 64,
        learning_rate: float = 0.03,
        batch_size: int = 32,
        max_epochs: int = 2000,
        patience: int = 20,
        random_state: int = 0,
    ):
        self.hidden_layers = hidden_layers
        self.width = width
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.patience = patience
        self.random_state = random_state

    def _standardize(self, X: np.ndarray) -> np.ndarray:
        return (X - self.scale_mean_) / self.scale_std_

    def _forward(self, Xs: np.ndarray) -> tuple[list[np.ndarray], np.ndarray]:
        acts = _forward_stack(Xs, self.net_)
        return acts, softmax(acts[-1])

    def fit(self, X, Y, X_val=None, Y_val=None):
        X = as_float_matrix(X, name="X")
        Y = as_float_matrix(Y, name="Y")
        if X.shape[0] != Y.shape[0]:
            raise LengthMismatchError(f"{X.shape[0]} rows vs {Y.shape[0]} targets")
        if X.shape[0] == 0:
            raise EmptySplitError("training split is empty")
        K = Y.shape[1]
        self.n_patterns_ = K
        self.n_features_in_ = X.shape[1]
        self.scale_mean_ = X.mean(axis=0)
        std = X.std(axis=0)
        std[std == 0] = 1.0
        self.scale_std_ = std

        rng = np.random.default_rng(self.random_state)
        self.net_ = _init_stack(
            [X.shape[1]] + [self.width] * self.hidden_layers + [K], rng
        )

        Xs = self._standardize(X)
        has_val = X_val is not None and Y_val is not None
        if has_val:
            X_val = as_float_matrix(X_val, n_cols=X.shape[1], name="X_val")
            Y_val = as_float_matrix(Y_val, name="Y_val")
            if X_val.shape[0] == 0:
                raise EmptySplitError("validation split is empty")
            Xv = self._standardize(X_val)

        n = Xs.shape[0]
        best_loss = np.inf
        best_net = [[W.copy(), b.copy()] for W, b in self.net_]
        best_epoch = 0
        since_best = 0
        self.history_: list[tuple[int, float, float | None]] = []

        for epoch in range(self.max_epochs):
            order = rng.permutation(n)
            for start in range(0, n, self.batch_size):
                batch = order[start : start + self.batch_size]
                acts, P = self._forward(Xs[batch])
                _, grad_P = _loss_gradient(Y[batch], P)
                grad_scores = _softmax_backward(P, grad_P)
                grads = _backward_stack(acts, self.net_, grad_scores)
                for (W, b), (dW, db) in zip(self.net_, grads):
                    W -= self.learning_rate * dW
                    b -= self.learning_rate * db

            train_loss = float(pattern_rmse(Y, self._forward(Xs)[1]).sum())
            if not np.isfinite(train_loss):
                raise DivergedLossError(f"training loss became {train_loss} at epoch {epoch}")
            val_loss = (
                float(pattern_rmse(Y_val, self._forward(Xv)[1]).sum()) if has_val else None
            )
            watched = val_loss if has_val else train_loss
            if not np.isfinite(watched):
                raise DivergedLossError(f"watched loss became {watched} at epoch {epoch}")
            self.history_.append((epoch, train_loss, val_loss))

            if watched < best_loss:
                best_loss = watched
                best_net = [[W.copy(), b.copy()] for W, b in self.net_]
                best_epoch = epoch
                since_best = 0
            else:
                since_best += 1
                if since_best >= self.patience:
                    break

        self.net_ = best_net
        self.best_epoch_ = best_epoch
        self.best_loss_ = float(best_loss)
        return self

    def predict(self, X) -> np.ndarray:
        check_is_fitted(self, "net_")
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X.reshape(1, -1)
        if X.shape[1] != self.n_features_in_:
            raise ArityMismatchError(
                f"expected {self.n_features_in_} features, got {X.shape[1]}"
            )
        if not np.isfinite(X).all():
            raise NonFiniteActivationError("input contains NaN or infinity")
        return self._forward(self._standardize(X))[1]


# --- benchmark 3: complement-feature ensemble --------------------------------

def complement_subsets(
    feature_subsets: list[tuple[int, ...]], n_features: int
) -> list[tuple[int, ...]]:
    """Per-pattern complements of the selected feature subsets."""
    out = []
    for k, subset in enumerate(feature_subsets):
        complement = tuple(i for i in range(n_features) if i not in set(subset))
        if not complement:
            raise EmptyComplementError(
                f"pattern {k} selected all {n_features} features, no complement remains"
            )
        out.append(complement)
    return out


def unselected_features(
    feature_subsets: list[tuple[int, ...]], n_features: int
) -> tuple[int, ...]:
    """Features not selected for any pattern (for the single-network benchmark)."""
    used = set().union(*[set(s) for s in feature_subsets]) if feature_subsets else set()
    leftover = tuple(i for i in range(n_features) if i not in used)
    if not leftover:
        raise EmptyComplementError("every feature was selected for some pattern")
    return leftover


# --- comparison harness -------------------------------------------------------

PROPOSED = "proposed"
BENCHMARK_GBT = "benchmark1_gbt"
BENCHMARK_UNIFIED = "benchmark2_unified"
BENCHMARK_COMPLEMENT = "benchmark3_complement"
UNIFORM = "uniform"


@dataclass
class ComparisonRow:
    model: str
    day_class: str
    avg_rmse: float
    reductions_pct: dict[str, float]  # keyed by benchmark model name


@dataclass
class ComparisonResult:
    rows: list[ComparisonRow]
    models: dict[str, object]

    def row(self, model: str) -> ComparisonRow:
        return next(r for r in self.rows if r.model == model)


def uniform_prediction(n: int, k: int) -> np.ndarray:
    return np.full((n, k), 1.0 / k)


def compare_models(
    X,
    Y,
    feature_subsets: list[tuple[int, ...]],
    train_idx,
    val_idx,
    test_idx,
    day_class: str = "",
    hidden_layers: int = 3,
    width: int = 64,
    learning_rate: float = 0.03,
    batch_size: int = 32,
    max_epochs: int = 2000,
    patience: int = 20,
    random_state: int = 0,
    gbt_trees: int = 100,
    gbt_depth: int = 3,
    gbt_shrinkage: float = 0.1,
    benchmark2_features: str = "all",
    benchmark1_features: str = "all",
) -> ComparisonResult:
    """Train the main model and the three benchmarks on one shared split.

    Every model is scored on the identical test rows with the identical
    per-pattern RMSE metric, averaged over patterns. The single-network
    benchmark takes either the full feature set ("all") or only the features
    no pattern selected ("unselected"); the boosted-tree benchmark takes
    "all" or "unselected" likewise.
    """
    X = as_float_matrix(X, name="X")
    Y = as_float_matrix(Y, name="Y")
    n_features = X.shape[1]
    K = Y.shape[1]
    train_idx = np.asarray(train_idx)
    val_idx = np.asarray(val_idx)
    test_idx = np.asarray(test_idx)

    net_kwargs = dict(
        hidden_layers=hidden_layers,
        width=width,
        learning_rate=learning_rate,
        batch_size=batch_size,
        max_epochs=max_epochs,
        patience=patience,
        random_state=random_state,
    )

    def columns_for(mode: str) -> np.ndarray:
        if mode == "all":
            return np.arange(n_features)
        if mode == "unselected":
            return np.array(unselected_features(feature_subsets, n_features))
        raise ValueError(f"unknown feature mode {mode!r}")

    models: dict[str, object] = {}

    proposed = PatternEnsemble(feature_subsets=feature_subsets, **net_kwargs)
    proposed.fit(X[train_idx], Y[train_idx], X[val_idx], Y[val_idx])
    models[PROPOSED] = proposed

    gbt_cols = columns_for(benchmark1_features)
    gbt = BoostedPatternModel(
        n_trees=gbt_trees,
        max_depth=gbt_depth,
        shrinkage=gbt_shrinkage,
        random_state=random_state,
    )
    gbt.fit(X[np.ix_(train_idx, gbt_cols)], Y[train_idx])
    models[BENCHMARK_GBT] = gbt

    uni_cols = columns_for(benchmark2_features)
    unified = UnifiedPatternNetwork(**net_kwargs)
    unified.fit(
        X[np.ix_(train_idx, uni_cols)],
        Y[train_idx],
        X[np.ix_(val_idx, uni_cols)],
        Y[val_idx],
    )
    models[BENCHMARK_UNIFIED] = unified

    complement = PatternEnsemble(
        feature_subsets=complement_subsets(feature_subsets, n_features), **net_kwargs
    )
    complement.fit(X[train_idx], Y[train_idx], X[val_idx], Y[val_idx])
    models[BENCHMARK_COMPLEMENT] = complement

    Y_test = Y[test_idx]
    losses = {
        PROPOSED: float(pattern_rmse(Y_test, proposed.predict(X[test_idx])).mean()),
        BENCHMARK_GBT: float(
            pattern_rmse(Y_test, gbt.predict(X[np.ix_(test_idx, gbt_cols)])).mean()
        ),
        BENCHMARK_UNIFIED: float(
            pattern_rmse(Y_test, unified.predict(X[np.ix_(test_idx, uni_cols)])).mean()
        ),
        BENCHMARK_COMPLEMENT: float(
            pattern_rmse(Y_test, complement.predict(X[test_idx])).mean()
        ),
        UNIFORM: float(
            pattern_rmse(Y_test, uniform_prediction(test_idx.size, K)).mean()
        ),
    }

    benchmarks = [BENCHMARK_GBT, BENCHMARK_UNIFIED, BENCHMARK_COMPLEMENT]
    ordering = [BENCHMARK_GBT, BENCHMARK_UNIFIED, BENCHMARK_COMPLEMENT, PROPOSED, UNIFORM]
    rows = []
    for name in ordering:
        reductions = {}
        for base in benchmarks:
            if base == name or name == UNIFORM:
                continue
            if ordering.index(base) < ordering.index(name):
                reductions[base] = (losses[base] - losses[name]) / losses[base] * 100.0
        rows.append(
            ComparisonRow(
                model=name,
                day_class=day_class,
                avg_rmse=losses[name],
                reductions_pct=reductions,
            )
        )
    return ComparisonResult(rows=rows, models=models)
