"""Entropy-based filter selection of socioeconomic features per load pattern.

All information measures work on empirical distributions of discrete values
in bits (base-2 logs). Continuous columns and the per-pattern probability
targets are quantile-binned first. The subset search is exhaustive: with 8
candidate features there are only 255 non-empty subsets to score.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .validation import as_float_matrix, as_label_array, check_same_length

DISCRETE = "discrete"
CONTINUOUS = "continuous"


@dataclass
class FeatureColumn:
    """One socioeconomic feature across the cohort."""

    name: str
    values: np.ndarray
    kind: str = DISCRETE  # continuous columns get quantile-binned


@dataclass
class FeatureSubset:
    """The merit-maximizing feature subset for one pattern target."""

    pattern_id: str
    members: tuple[str, ...]
    merit: float
    low_confidence: bool = False

    def to_dict(self) -> dict:
        return {
            "pattern_id": self.pattern_id,
            "members": list(self.members),
            "merit": float(self.merit),
            "low_confidence": self.low_confidence,
        }


def quantile_discretize(values, bins: int = 5) -> np.ndarray:
    """Equal-frequency binning into at most ``bins`` integer labels.

    A constant column collapses to a single label; duplicate quantile edges
    merge bins rather than erroring.
    """
    if bins < 2:
        raise ValueError("bins must be at least 2")
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError("values must be a non-empty 1-D array")
    if arr.min() == arr.max():
        return np.zeros(arr.size, dtype=int)
    edges = np.quantile(arr, np.linspace(0, 1, bins + 1)[1:-1])
    return np.digitize(arr, edges, right=True)


def discretize_column(column: FeatureColumn, bins: int = 5) -> np.ndarray:
    """Quantile-bin a continuous column; discrete columns pass through unchanged."""
    if column.kind == DISCRETE:
        return as_label_array(column.values, column.name)
    return quantile_discretize(column.values, bins)


def entropy(values) -> float:
    """Empirical entropy of a discrete column, in bits."""
    arr = as_label_array(values)
    _, counts = np.unique(arr, return_counts=True)
    p = counts / arr.size
    return float(-(p * np.log2(p)).sum())


def mutual_info(x, y) -> float:
    """Empirical mutual information between two paired discrete columns."""
    x = as_label_array(x, "x")
    y = as_label_array(y, "y")
    check_same_length(x, y, "paired columns")
    n = x.size

    x_vals, x_idx = np.unique(x, return_inverse=True)
    y_vals, y_idx = np.unique(y, return_inverse=True)
    joint = np.zeros((x_vals.size, y_vals.size))
    np.add.at(joint, (x_idx, y_idx), 1.0)
    joint /= n
    px = joint.sum(axis=1)
    py = joint.sum(axis=0)

    mask = joint > 0
    ratio = joint[mask] / np.outer(px, py)[mask]
    mi = float((joint[mask] * np.log2(ratio)).sum())
    # Exact independence can round to a tiny negative; clamp it away.
    return mi if mi > 0 else 0.0


def symmetric_uncertainty(x, y) -> float:
    """Mutual information scaled by the two marginal entropies, in [0, 1].

    A constant column shares no information with anything, so any pair
    involving one scores 0 (this also covers the 0/0 normalization when
    both are constant).
    """
    hx = entropy(x)
    hy = entropy(y)
    if hx == 0 or hy == 0:
        return 0.0
    su = 2.0 * mutual_info(x, y) / (hx + hy)
    return min(max(su, 0.0), 1.0)


def _su_tables(
    discrete_columns: list[np.ndarray], target: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    m = len(discrete_columns)
    su_target = np.array([symmetric_uncertainty(c, target) for c in discrete_columns])
    su_pair = np.eye(m)
    for i in range(m):
        if entropy(discrete_columns[i]) == 0:
            su_pair[i, i] = 0.0  # constant column: even self-information is 0
        for j in range(i + 1, m):
            su_pair[i, j] = su_pair[j, i] = symmetric_uncertainty(
                discrete_columns[i], discrete_columns[j]
            )
    return su_target, su_pair


def merit(
    subset: tuple[int, ...],
    su_target: np.ndarray,
    su_pair: np.ndarray,
    include_diagonal: bool = True,
) -> float:
    """Subset score: summed target relevance over root summed redundancy.

    The redundancy sum runs over every ordered feature pair in the subset,
    diagonal included; ``include_diagonal=False`` drops the self terms for
    sensitivity checks.
    """
    idx = np.asarray(subset, dtype=int)
    numer = float(su_target[idx].sum())
    block = su_pair[np.ix_(idx, idx)]
    denom = float(block.sum())
    if not include_diagonal:
        denom -= float(np.trace(block))
    if denom <= 0:
        return 0.0
    return numer / math.sqrt(denom)


def _chance_su_level(discrete_columns: list[np.ndarray], target: np.ndarray) -> float:
    """Rough finite-sample level of SU between independent columns.

    Uses the classical chi-square bias of empirical mutual information,
    (r-1)(c-1) / (2 n ln 2) bits, scaled the same way SU is.
    """
    n = target.size
    ht = entropy(target)
    t_levels = np.unique(target).size
    worst = 0.0
    for col in discrete_columns:
        h = entropy(col)
        if h + ht == 0:
            continue
        bias = (np.unique(col).size - 1) * (t_levels - 1) / (2 * n * math.log(2))
        worst = max(worst, 2.0 * bias / (h + ht))
    return worst


def select_subset(
    features: list[FeatureColumn],
    target,
    pattern_id: str = "",
    bins: int = 5,
    include_diagonal: bool = True,
    noise_floor_factor: float = 2.0,
) -> FeatureSubset:
    """Exhaustively score every non-empty feature subset and keep the best.

    Ties break toward smaller subsets, then toward the earlier subset in
    feature order. The result is flagged low-confidence when the winning
    merit is within the finite-sample noise level expected for a target
    independent of every feature.
    """
    if not features:
        raise ValueError("feature list is empty")
    target = np.asarray(target)
    if target.size < 2:
        raise ValueError("need at least 2 households")
    for col in features:
        check_same_length(col.values, target, f"feature {col.name} and target")

    discrete_cols = [discretize_column(c, bins) for c in features]
    disc_target = quantile_discretize(target.astype(np.float64), bins)
    su_target, su_pair = _su_tables(discrete_cols, disc_target)

    m = len(features)
    best_subset: tuple[int, ...] | None = None
    best_merit = -np.inf
    for size in range(1, m + 1):
        for combo in itertools.combinations(range(m), size):
            value = merit(combo, su_target, su_pair, include_diagonal)
            if value > best_merit:
                best_merit = value
                best_subset = combo

    floor = noise_floor_factor * _chance_su_level(discrete_cols, disc_target)
    return FeatureSubset(
        pattern_id=pattern_id,
        members=tuple(features[i].name for i in best_subset),
        merit=best_merit,
        low_confidence=bool(best_merit <= 0.0 or best_merit < floor),
    )


class MeritSubsetSelector(BaseEstimator):
    """Estimator wrapper around the exhaustive merit search.

    ``fit(X, y)`` scores every non-empty column subset of X against the
    target y and ``transform`` keeps the winning columns.

    Parameters
    ----------
    bins : quantile bins for continuous columns and the target.
    include_diagonal : keep self terms in the redundancy sum.
    feature_names : optional column names (defaults to x0..x{m-1}).
    continuous : optional boolean mask of columns to quantile-bin; by
        default a column is binned when any value is non-integral.
    """

    def __init__(
        self,
        bins: int = 5,
        include_diagonal: bool = True,
        feature_names=None,
        continuous=None,
    ):
        self.bins = bins
        self.include_diagonal = include_diagonal
        self.feature_names = feature_names
        self.continuous = continuous

    def fit(self, X, y):
        X = as_float_matrix(X, name="X")
        y = np.asarray(y, dtype=np.float64)
        check_same_length(X, y, "X and y")
        m = X.shape[1]
        names = list(self.feature_names) if self.feature_names is not None else [
            f"x{i}" for i in range(m)
        ]
        if len(names) != m:
            raise ValueError(f"{len(names)} feature names for {m} columns")
        if self.continuous is not None:
            continuous = list(self.continuous)
        else:
            continuous = [not np.all(np.mod(X[:, j], 1) == 0) for j in range(m)]

        columns = [
            FeatureColumn(
                name=names[j],
                values=X[:, j],
                kind=CONTINUOUS if continuous[j] else DISCRETE,
            )
            for j in range(m)
        ]
        result = select_subset(
            columns, y, bins=self.bins, include_diagonal=self.include_diagonal
        )
        self.feature_names_ = names
        self.selected_names_ = list(result.members)
        self.selected_indices_ = [names.index(n) for n in result.members]
        self.merit_ = result.merit
        self.low_confidence_ = result.low_confidence
        self.n_features_in_ = m
        return self

    def get_support(self) -> np.ndarray:
        check_is_fitted(self, "selected_indices_")
        mask = np.zeros(self.n_features_in_, dtype=bool)
        mask[self.selected_indices_] = True
        return mask

    def transform(self, X) -> np.ndarray:
        check_is_fitted(self, "selected_indices_")
        X = as_float_matrix(X, n_cols=self.n_features_in_, name="X")
        return X[:, self.selected_indices_]

    def fit_transform(self, X, y):
        return self.fit(X, y).transform(X)


@dataclass
class PearsonMatrix:
    """Pairwise linear correlations with undefined entries marked NaN."""

    names: list[str]
    matrix: np.ndarray
    defined: np.ndarray  # False where a constant column makes r undefined

    def to_csv(self) -> str:
        lines = ["," + ",".join(self.names)]
        for i, name in enumerate(self.names):
            cells = [
                repr(round(float(self.matrix[i, j]), 12)) if self.defined[i, j] else ""
                for j in range(len(self.names))
            ]
            lines.append(name + "," + ",".join(cells))
        return "\n".join(lines) + "\n"


def pearson_matrix(columns: list[np.ndarray], names: list[str]) -> PearsonMatrix:
    """Pearson correlation for every pair of columns.

    Constant columns give undefined (NaN) entries; the diagonal of a
    non-constant column is exactly 1.
    """
    if len(columns) != len(names):
        raise ValueError("one name per column required")
    m = len(columns)
    data = np.vstack([np.asarray(c, dtype=np.float64) for c in columns])
    if data.shape[1] < 2:
        raise ValueError("need at least 2 households")
    centered = data - data.mean(axis=1, keepdims=True)
    norms = np.sqrt((centered**2).sum(axis=1))
    constant = norms == 0

    matrix = np.full((m, m), np.nan)
    defined = np.zeros((m, m), dtype=bool)
    for i in range(m):
        for j in range(i, m):
            if constant[i] or constant[j]:
                continue
            if i == j:
                r = 1.0
            else:
                r = float(centered[i] @ centered[j] / (norms[i] * norms[j]))
                r = min(max(r, -1.0), 1.0)
            matrix[i, j] = matrix[j, i] = r
            defined[i, j] = defined[j, i] = True
    return PearsonMatrix(names=list(names), matrix=matrix, defined=defined)
