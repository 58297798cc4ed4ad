"""K-Medoids load-pattern extraction, silhouette validation and K selection.

The clustering loop keeps medoids as actual member profiles: assignment goes
to the nearest medoid by Euclidean distance, the cluster score is the total
within-cluster distance to the medoid, and each update step moves a cluster's
medoid to the member minimizing the summed pairwise distance to its
clustermates. Iteration stops as soon as the score stops decreasing.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .errors import EmptyClusterError, NoDaysError, TooFewProfilesError
from .validation import as_float_matrix, check_same_length

_EMPTY_CLUSTER_RETRIES = 5


def distance(a, b) -> float:
    """Euclidean distance between two equal-length profile vectors."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    check_same_length(a, b, "profile vectors")
    return float(np.linalg.norm(a - b))


class _DistanceOracle:
    """Pairwise distances, cached as a full matrix when it fits the budget."""

    def __init__(self, X: np.ndarray, memory_budget_mb: float = 512.0):
        self.X = X
        n = X.shape[0]
        self._full = None
        if n * n * 8 <= memory_budget_mb * 1024 * 1024:
            self._full = cdist(X, X)

    @property
    def cached(self) -> bool:
        return self._full is not None

    def to_points(self, indices: np.ndarray) -> np.ndarray:
        """Distances from every profile to each indexed profile: (n, len(indices))."""
        if self._full is not None:
            return self._full[:, indices]
        return cdist(self.X, self.X[indices])

    def among(self, indices: np.ndarray) -> np.ndarray:
        """Pairwise distances restricted to the indexed profiles."""
        if self._full is not None:
            return self._full[np.ix_(indices, indices)]
        sub = self.X[indices]
        return cdist(sub, sub)

    def full(self) -> np.ndarray:
        if self._full is None:
            self._full = cdist(self.X, self.X)
        return self._full


class _EmptyClusterSignal(Exception):
    pass


def _draw_distinct_init(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """Random initial medoid indices whose profile values are pairwise distinct."""
    order = rng.permutation(X.shape[0])
    chosen: list[int] = []
    for idx in order:
        if all(not np.array_equal(X[idx], X[j]) for j in chosen):
            chosen.append(int(idx))
            if len(chosen) == k:
                return np.array(chosen)
    raise TooFewProfilesError(f"only {len(chosen)} distinct profiles for K={k}")


def _assign(oracle: _DistanceOracle, medoid_idx: np.ndarray) -> tuple[np.ndarray, float]:
    d = oracle.to_points(medoid_idx)
    labels = np.argmin(d, axis=1)  # ties go to the lowest cluster index
    score = float(d[np.arange(d.shape[0]), labels].sum())
    return labels, score


def _update_medoids(
    oracle: _DistanceOracle, labels: np.ndarray, k: int
) -> np.ndarray:
    new_idx = np.empty(k, dtype=int)
    for c in range(k):
        members = np.flatnonzero(labels == c)  # ascending, so argmin tie-breaks low
        if members.size == 0:
            raise _EmptyClusterSignal()
        costs = oracle.among(members).sum(axis=1)
        new_idx[c] = members[int(np.argmin(costs))]
    return new_idx


def _single_fit(
    oracle: _DistanceOracle,
    k: int,
    rng: np.random.Generator,
    max_iter: int,
    init_indices: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray, float, list[float], np.ndarray]:
    X = oracle.X
    if init_indices is not None:
        medoid_idx = np.asarray(init_indices, dtype=int)
    else:
        medoid_idx = _draw_distinct_init(X, k, rng)
    init = medoid_idx.copy()

    labels, score = _assign(oracle, medoid_idx)
    history = [score]
    for _ in range(max_iter):
        new_medoid_idx = _update_medoids(oracle, labels, k)
        new_labels, new_score = _assign(oracle, new_medoid_idx)
        if np.unique(new_labels).size < k:
            raise _EmptyClusterSignal()
        if new_score < score:
            medoid_idx, labels, score = new_medoid_idx, new_labels, new_score
            history.append(score)
            continue
        if new_score == score:
            medoid_idx, labels = new_medoid_idx, new_labels
            history.append(new_score)
        break
    return medoid_idx, labels, score, history, init


class KMedoids(BaseEstimator):
    """K-Medoids clusterer over daily load profiles.

    Runs ``n_restarts`` seeded random initializations and keeps the fit with
    the lowest cluster score. Assignment ties break toward the lowest cluster
    index and medoid-update ties toward the lowest profile index, so a fixed
    ``random_state`` reproduces the fit exactly.

    Parameters
    ----------
    n_clusters : number of medoids to extract.
    random_state : seed for the restart initializations.
    max_iter : cap on update/reassign iterations per restart.
    n_restarts : random initializations to try.
    memory_budget_mb : above this, pairwise distances are recomputed on
        demand instead of cached as an n x n matrix.
    init_indices : optional explicit initial medoid indices (single restart);
        intended for tests and reproductions.
    """

    def __init__(
        self,
        n_clusters: int = 6,
        random_state: int = 0,
        max_iter: int = 100,
        n_restarts: int = 10,
        memory_budget_mb: float = 512.0,
        init_indices=None,
    ):
        self.n_clusters = n_clusters
        self.random_state = random_state
        self.max_iter = max_iter
        self.n_restarts = n_restarts
        self.memory_budget_mb = memory_budget_mb
        self.init_indices = init_indices

    def fit(self, X, y=None, distance_oracle: "_DistanceOracle | None" = None):
        X = as_float_matrix(X, name="profiles")
        k = self.n_clusters
        if k < 1:
            raise ValueError("n_clusters must be at least 1")
        if self.max_iter < 1 or self.n_restarts < 1:
            raise ValueError("max_iter and n_restarts must be at least 1")
        n_distinct = np.unique(X, axis=0).shape[0]
        if n_distinct < k:
            raise TooFewProfilesError(
                f"{n_distinct} distinct profiles cannot support K={k}"
            )
        if self.init_indices is not None:
            init = np.asarray(self.init_indices, dtype=int)
            if init.size != k:
                raise ValueError(f"init_indices must list {k} profiles")
            if init.min() < 0 or init.max() >= X.shape[0]:
                raise ValueError("init_indices out of range")
            if np.unique(X[init], axis=0).shape[0] < k:
                raise ValueError("init_indices reference duplicate profile values")
        oracle = distance_oracle if distance_oracle is not None else _DistanceOracle(
            X, self.memory_budget_mb
        )

        best = None
        restarts = 1 if self.init_indices is not None else self.n_restarts
        for restart in range(restarts):
            rng = np.random.default_rng([self.random_state, restart])
            attempt_init = (
                np.asarray(self.init_indices, dtype=int)
                if self.init_indices is not None
                else None
            )
            result = None
            for _ in range(_EMPTY_CLUSTER_RETRIES):
                try:
                    result = _single_fit(oracle, k, rng, self.max_iter, attempt_init)
                    break
                except _EmptyClusterSignal:
                    # Duplicate medoid values emptied a cluster; redraw the
                    # initialization from the same stream.
                    attempt_init = None
                    continue
            if result is None:
                raise EmptyClusterError(
                    f"clusters kept collapsing after {_EMPTY_CLUSTER_RETRIES} reseeds"
                )
            medoid_idx, labels, score, history, init = result
            if best is None or score < best[2]:
                best = (medoid_idx, labels, score, history, init, restart)

        medoid_idx, labels, score, history, init, restart = best
        self.medoid_indices_ = medoid_idx
        self.medoids_ = X[medoid_idx].copy()
        self.labels_ = labels
        self.score_ = score
        self.score_history_ = history
        self.n_iter_ = len(history) - 1
        self.init_indices_ = init
        self.best_restart_ = restart
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X) -> np.ndarray:
        """Assign profiles to the nearest fitted medoid."""
        check_is_fitted(self, "medoids_")
        X = as_float_matrix(X, n_cols=self.n_features_in_, name="profiles")
        return np.argmin(cdist(X, self.medoids_), axis=1)

    def fit_predict(self, X, y=None) -> np.ndarray:
        return self.fit(X).labels_


def silhouette_samples(X, labels, distances: np.ndarray | None = None) -> np.ndarray:
    """Per-profile silhouette values.

    Cohesion is the mean distance to same-cluster others; separation is the
    smallest mean distance to another cluster. Profiles in singleton clusters
    score 0, as do profiles where both factors are 0.
    """
    X = as_float_matrix(X, name="profiles")
    labels = np.asarray(labels, dtype=int)
    check_same_length(X, labels, "profiles and labels")
    if distances is None:
        distances = cdist(X, X)
    n = X.shape[0]
    cluster_ids = np.unique(labels)
    members = {c: np.flatnonzero(labels == c) for c in cluster_ids}

    out = np.zeros(n)
    for i in range(n):
        own = labels[i]
        own_members = members[own]
        if own_members.size < 2:
            continue  # singleton: cohesion undefined, scored 0 by convention
        a_i = distances[i, own_members].sum() / (own_members.size - 1)
        b_i = min(
            distances[i, members[c]].mean() for c in cluster_ids if c != own
        )
        denom = max(a_i, b_i)
        if denom > 0:
            out[i] = (b_i - a_i) / denom
    return out


def silhouette_coefficient(X, labels, distances: np.ndarray | None = None) -> float:
    """Mean silhouette value over all profiles, in [-1, 1]."""
    return float(silhouette_samples(X, labels, distances).mean())


@dataclass
class KSelection:
    """Outcome of scanning candidate cluster counts."""

    best_k: int
    curve: list[tuple[int, float]]  # (K, mean silhouette)
    fits: dict[int, KMedoids] = field(default_factory=dict)


def select_k(
    X,
    k_range: tuple[int, int] = (2, 10),
    n_restarts: int = 10,
    max_iter: int = 100,
    random_state: int = 0,
    memory_budget_mb: float = 512.0,
) -> KSelection:
    """Fit every K in ``k_range`` and pick the silhouette-maximizing one.

    Each K gets ``n_restarts`` seeded restarts with the lowest-score fit
    kept. Ties on the silhouette go to the smaller K.
    """
    X = as_float_matrix(X, name="profiles")
    lo, hi = int(k_range[0]), int(k_range[1])
    n = X.shape[0]
    if lo < 2 or hi < lo:
        raise ValueError(f"invalid k_range ({lo}, {hi})")
    if hi > n - 1:
        raise ValueError(f"k_range upper bound {hi} exceeds N-1 = {n - 1}")

    oracle = _DistanceOracle(X, memory_budget_mb)
    shared = oracle.full() if oracle.cached else None

    curve = []
    fits: dict[int, KMedoids] = {}
    for k in range(lo, hi + 1):
        est = KMedoids(
            n_clusters=k,
            random_state=random_state,
            max_iter=max_iter,
            n_restarts=n_restarts,
            memory_budget_mb=memory_budget_mb,
        )
        est.fit(X, distance_oracle=oracle)
        sc = silhouette_coefficient(X, est.labels_, distances=shared)
        curve.append((k, sc))
        fits[k] = est

    best_k = max(curve, key=lambda pair: (pair[1], -pair[0]))[0]
    return KSelection(best_k=best_k, curve=curve, fits=fits)


@dataclass
class PatternSet:
    """Fitted medoids plus assignments for one day class."""

    day_class: str
    k: int
    medoids: np.ndarray  # (K, 24)
    medoid_indices: list[int]
    assignments: np.ndarray  # cluster id per pooled profile
    score: float
    seed: int
    n_iter: int
    score_history: list[float]

    @classmethod
    def from_estimator(
        cls, est: KMedoids, day_class: str, assignments: np.ndarray | None = None
    ) -> "PatternSet":
        return cls(
            day_class=day_class,
            k=est.n_clusters,
            medoids=est.medoids_.copy(),
            medoid_indices=[int(i) for i in est.medoid_indices_],
            assignments=est.labels_.copy() if assignments is None else assignments,
            score=est.score_,
            seed=est.random_state,
            n_iter=est.n_iter_,
            score_history=list(est.score_history_),
        )

    def to_dict(self) -> dict:
        return {
            "day_class": self.day_class,
            "k": self.k,
            "medoids": [[float(v) for v in row] for row in self.medoids],
            "medoid_indices": self.medoid_indices,
            "assignments": [int(a) for a in self.assignments],
            "score": float(self.score),
            "seed": int(self.seed),
            "n_iter": int(self.n_iter),
            "score_history": [float(s) for s in self.score_history],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PatternSet":
        return cls(
            day_class=data["day_class"],
            k=data["k"],
            medoids=np.array(data["medoids"], dtype=np.float64),
            medoid_indices=list(data["medoid_indices"]),
            assignments=np.array(data["assignments"], dtype=int),
            score=data["score"],
            seed=data["seed"],
            n_iter=data["n_iter"],
            score_history=list(data["score_history"]),
        )


@dataclass
class PatternDistribution:
    """One household's share of days per load pattern."""

    household_id: str
    day_class: str
    probs: np.ndarray

    def to_row(self) -> list:
        return [self.household_id, *[float(p) for p in self.probs]]


def pattern_distribution(
    assignments, household_ids: list[str], household_id: str, k: int, day_class: str
) -> PatternDistribution:
    """Share of one household's days assigned to each of the K patterns."""
    assignments = np.asarray(assignments, dtype=int)
    check_same_length(assignments, household_ids, "assignments and household ids")
    mask = np.array([h == household_id for h in household_ids])
    total = int(mask.sum())
    if total == 0:
        raise NoDaysError(f"household {household_id} has no {day_class} days")
    counts = np.bincount(assignments[mask], minlength=k)
    return PatternDistribution(
        household_id=household_id,
        day_class=day_class,
        probs=counts / total,
    )


def pattern_distributions(
    assignments, household_ids: list[str], k: int, day_class: str
) -> list[PatternDistribution]:
    """Per-household pattern distributions, ordered by household id."""
    out = []
    for household in sorted(set(household_ids)):
        out.append(
            pattern_distribution(assignments, household_ids, household, k, day_class)
        )
    return out
