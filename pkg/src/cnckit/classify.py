"""K-means user classification in (observations, identifications) space.

Counts are log1p-transformed and z-scored per challenge by default (raw
counts behind a flag), clustered with seeded k-means++ plus Lloyd
iterations, and the four clusters are labeled by the quadrant their
centroid occupies relative to the centroid mean.
"""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from cnckit import kernels
from cnckit.errors import DataError
from cnckit.records import ChallengeWindow, Dataset
from cnckit.stats import UserActivity, aggregate_activity


class UserClass(enum.Enum):
    LOW_ACTIVITY = "low_activity"
    OBSERVER = "observer"
    IDENTIFIER = "identifier"
    HIGH_ACTIVITY = "high_activity"


@dataclass(frozen=True)
class ActivityPoint:
    user_id: str
    x: float  # transformed observation count
    y: float  # transformed identification count


def activity_points(activities: list[UserActivity], raw: bool = False) -> list[ActivityPoint]:
    """Feature transform: log1p then per-challenge z-score (or raw counts).

    Without damping, squared-Euclidean k-means on counts spanning 1 to
    1000+ is dominated by the handful of superusers.
    """
    if not activities:
        return []
    obs = np.array([a.n_observations for a in activities], dtype=np.float64)
    ids = np.array([a.n_identifications for a in activities], dtype=np.float64)
    if not raw:
        obs = np.log1p(obs)
        ids = np.log1p(ids)
        obs = (obs - obs.mean()) / (obs.std() or 1.0)
        ids = (ids - ids.mean()) / (ids.std() or 1.0)
    return [
        ActivityPoint(user_id=a.user_id, x=float(x), y=float(y))
        for a, x, y in zip(activities, obs, ids)
    ]


@dataclass
class ClusterModel:
    k: int
    centroids: np.ndarray  # (k, 2)
    labels: np.ndarray  # (n,) cluster index per input point
    assignment: dict[str, int]  # user_id -> cluster index
    inertia: float
    n_iter: int
    inertia_history: list[float] = field(default_factory=list)


def _points_matrix(points: list[ActivityPoint]) -> np.ndarray:
    X = np.array([[p.x, p.y] for p in points], dtype=np.float64)
    if len(X) and not np.all(np.isfinite(X)):
        raise DataError("activity points contain non-finite coordinates")
    return np.ascontiguousarray(X.reshape(-1, 2))


def _kmeans_pp(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """Greedy k-means++: each step samples several distance-weighted
    candidates and keeps the one that lowers total potential most."""
    n = len(X)
    n_candidates = 2 + int(math.log(k)) if k > 1 else 1
    first = int(rng.integers(n))
    chosen = [first]
    d2 = ((X - X[first]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total > 0:
            candidates = rng.choice(n, size=n_candidates, p=d2 / total)
        else:
            candidates = rng.integers(n, size=n_candidates)
        best_idx, best_d2 = None, None
        for idx in candidates:
            cand_d2 = np.minimum(d2, ((X - X[int(idx)]) ** 2).sum(axis=1))
            if best_d2 is None or cand_d2.sum() < best_d2.sum():
                best_idx, best_d2 = int(idx), cand_d2
        chosen.append(best_idx)
        d2 = best_d2
    return X[chosen].copy()


def _reseed_empty(X, centroids, counts, dists):
    """Move each empty cluster onto the point farthest from its centroid."""
    taken: set[int] = set()
    for j in np.flatnonzero(counts == 0):
        for idx in np.argsort(-dists, kind="stable"):
            if int(idx) not in taken:
                centroids[j] = X[idx]
                taken.add(int(idx))
                break


@dataclass
class _LloydResult:
    centroids: np.ndarray
    labels: np.ndarray
    inertia: float
    n_iter: int
    history: list[float]


def _lloyd(
    X: np.ndarray,
    k: int,
    seed: int,
    max_iter: int,
    tol: float,
    init: np.ndarray | None = None,
) -> _LloydResult:
    if k < 1:
        raise DataError("k must be >= 1")
    if len(X) < k:
        raise DataError(f"need at least k={k} points, got {len(X)}")
    rng = np.random.default_rng(seed)
    centroids = np.array(init, dtype=np.float64).copy() if init is not None else _kmeans_pp(X, k, rng)
    if centroids.shape != (k, 2):
        raise DataError(f"init centroids must be ({k}, 2)")
    centroids = np.ascontiguousarray(centroids)

    history: list[float] = []
    prev_labels: np.ndarray | None = None
    labels = np.zeros(len(X), dtype=np.int64)
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        labels, dists = kernels.assign_labels(X, centroids)
        counts = np.bincount(labels, minlength=k)
        if np.any(counts == 0):
            _reseed_empty(X, centroids, counts, dists)
            labels, dists = kernels.assign_labels(X, centroids)
            counts = np.bincount(labels, minlength=k)
        history.append(float(dists.sum()))
        if prev_labels is not None and np.array_equal(labels, prev_labels):
            break
        prev_labels = labels
        sums = np.stack(
            [
                np.bincount(labels, weights=X[:, 0], minlength=k),
                np.bincount(labels, weights=X[:, 1], minlength=k),
            ],
            axis=1,
        )
        # clusters still empty after reseeding (fewer distinct points than k)
        # keep their previous centroid instead of dividing by zero
        new_centroids = sums / np.maximum(counts, 1)[:, None]
        new_centroids[counts == 0] = centroids[counts == 0]
        new_centroids = np.ascontiguousarray(new_centroids)
        moved = float(np.sqrt(((new_centroids - centroids) ** 2).sum(axis=1)).max())
        centroids = new_centroids
        if tol > 0 and moved < tol:
            labels, dists = kernels.assign_labels(X, centroids)
            history.append(float(dists.sum()))
            break

    return _LloydResult(
        centroids=centroids,
        labels=labels,
        inertia=history[-1],
        n_iter=n_iter,
        history=history,
    )


def _to_model(points: list[ActivityPoint], k: int, result: _LloydResult) -> ClusterModel:
    assignment = {p.user_id: int(label) for p, label in zip(points, result.labels)}
    return ClusterModel(
        k=k,
        centroids=result.centroids,
        labels=result.labels,
        assignment=assignment,
        inertia=result.inertia,
        n_iter=result.n_iter,
        inertia_history=result.history,
    )


def kmeans(
    points: list[ActivityPoint],
    k: int,
    seed: int = 0,
    max_iter: int = 300,
    tol: float = 0.0,
    init: np.ndarray | None = None,
) -> ClusterModel:
    """Seeded k-means++ followed by Lloyd iterations.

    Terminates when the assignment reaches a fixpoint, when the largest
    centroid movement drops below ``tol``, or after ``max_iter`` rounds.
    Empty clusters are re-seeded to the point farthest from its centroid.
    Deterministic given (points order, k, seed).
    """
    return _to_model(points, k, _lloyd(_points_matrix(points), k, seed, max_iter, tol, init))


def kmeans_best(
    points: list[ActivityPoint],
    k: int,
    seed: int = 0,
    restarts: int = 8,
    max_iter: int = 300,
    tol: float = 0.0,
) -> ClusterModel:
    """Lowest-inertia model over `restarts` seeded runs (seed, seed+1, ...)."""
    X = _points_matrix(points)
    best = min(
        (_lloyd(X, k, seed + r, max_iter, tol) for r in range(max(1, restarts))),
        key=lambda res: res.inertia,
    )
    return _to_model(points, k, best)


@dataclass
class ElbowResult:
    chosen_k: int
    wcss: dict[int, float]
    second_differences: dict[int, float]
    strength: float  # ratio of the WCSS drop before the elbow to the drop after


def elbow(
    points: list[ActivityPoint],
    k_range: tuple[int, int] = (1, 8),
    seed: int = 0,
    restarts: int = 8,
    max_iter: int = 300,
) -> ElbowResult:
    """Best-of-restarts WCSS curve and the max-second-difference elbow.

    Each k also runs one warm start from the previous best centroids plus
    the current farthest point, which guarantees WCSS(k+1) <= WCSS(k).
    """
    k_min, k_max = k_range
    if k_min < 1 or k_max - k_min < 2:
        raise DataError("k_range must span at least three values with k_min >= 1")
    if len(points) < k_max:
        raise DataError(f"need at least k_max={k_max} points, got {len(points)}")
    X = _points_matrix(points)
    wcss: dict[int, float] = {}
    prev_best: _LloydResult | None = None
    for k in range(k_min, k_max + 1):
        candidates = [
            _lloyd(X, k, seed + r, max_iter, 0.0) for r in range(max(1, restarts))
        ]
        if prev_best is not None:
            dist = ((X - prev_best.centroids[prev_best.labels]) ** 2).sum(axis=1)
            init = np.vstack([prev_best.centroids, X[int(np.argmax(dist))]])
            candidates.append(_lloyd(X, k, seed, max_iter, 0.0, init=init))
        best = min(candidates, key=lambda res: res.inertia)
        wcss[k] = best.inertia
        prev_best = best

    second_differences = {
        k: wcss[k - 1] - 2.0 * wcss[k] + wcss[k + 1] for k in range(k_min + 1, k_max)
    }
    chosen_k = max(sorted(second_differences), key=lambda k: second_differences[k])
    drop_before = wcss[chosen_k - 1] - wcss[chosen_k]
    drop_after = wcss[chosen_k] - wcss[chosen_k + 1]
    scale = max(abs(wcss[k_min]), 1e-30)
    strength = drop_before / max(drop_after, 1e-12 * scale)
    return ElbowResult(
        chosen_k=chosen_k,
        wcss=wcss,
        second_differences=second_differences,
        strength=strength,
    )


@dataclass
class ClusterLabels:
    classes: dict[int, UserClass]
    warnings: list[str] = field(default_factory=list)


_QUADRANTS = {
    (False, False): UserClass.LOW_ACTIVITY,
    (True, False): UserClass.OBSERVER,
    (False, True): UserClass.IDENTIFIER,
    (True, True): UserClass.HIGH_ACTIVITY,
}


def label_clusters(model: ClusterModel) -> ClusterLabels:
    """Map the four centroids onto the behavioural classes.

    The centroid mean splits the plane into quadrants: below/below is low
    activity, high observations alone is observer, high identifications
    alone is identifier, high/high is high activity. If two centroids land
    in one quadrant the bijection maximizing the total coordinate margin is
    used and a confidence warning is attached.
    """
    if model.k != 4:
        raise DataError(f"labeling requires k=4, got k={model.k}")
    centers = model.centroids
    x_mean, y_mean = centers.mean(axis=0)
    direct = [
        _QUADRANTS[(cx >= x_mean, cy >= y_mean)] for cx, cy in centers
    ]
    if len(set(direct)) == 4:
        return ClusterLabels(classes=dict(enumerate(direct)))

    classes = list(_QUADRANTS.values())
    signs = {
        UserClass.LOW_ACTIVITY: (-1.0, -1.0),
        UserClass.OBSERVER: (1.0, -1.0),
        UserClass.IDENTIFIER: (-1.0, 1.0),
        UserClass.HIGH_ACTIVITY: (1.0, 1.0),
    }

    def margin(idx: int, cls: UserClass) -> float:
        sx, sy = signs[cls]
        return min(sx * (centers[idx, 0] - x_mean), sy * (centers[idx, 1] - y_mean))

    best_perm = max(
        itertools.permutations(range(4)),
        key=lambda perm: sum(margin(idx, classes[pos]) for pos, idx in enumerate(perm)),
    )
    mapping = {idx: classes[pos] for pos, idx in enumerate(best_perm)}
    warning = (
        "two centroids share a quadrant; labels assigned by largest "
        "coordinate margin"
    )
    return ClusterLabels(classes={i: mapping[i] for i in range(4)}, warnings=[warning])


@dataclass
class ClassifyConfig:
    k: int | None = 4  # None selects k by the elbow criterion
    seed: int = 0
    restarts: int = 8
    raw_features: bool = False
    k_range: tuple[int, int] = (1, 8)
    max_iter: int = 300


@dataclass
class ChallengeClassification:
    window: ChallengeWindow
    activities: list[UserActivity]
    points: list[ActivityPoint]
    model: ClusterModel
    labels: ClusterLabels | None
    classes: dict[str, UserClass]
    elbow: ElbowResult | None


@dataclass
class ClassificationRun:
    results: dict[tuple[str, int], ChallengeClassification]
    skipped: list[tuple[tuple[str, int], str]]


def classify_per_challenge(
    dataset: Dataset, config: ClassifyConfig | None = None
) -> ClassificationRun:
    """Cluster every challenge independently; a user may carry different
    classes in different years. Challenges with fewer active users than k
    are reported and skipped."""
    config = config or ClassifyConfig()
    results: dict[tuple[str, int], ChallengeClassification] = {}
    skipped: list[tuple[tuple[str, int], str]] = []
    for window in sorted(dataset.challenges, key=lambda w: w.key):
        activities = aggregate_activity(dataset, window)
        points = activity_points(activities, raw=config.raw_features)
        elbow_result = None
        k = config.k
        if k is None:
            if len(points) < config.k_range[1]:
                skipped.append((window.key, f"only {len(points)} active users"))
                continue
            elbow_result = elbow(
                points,
                k_range=config.k_range,
                seed=config.seed,
                restarts=config.restarts,
                max_iter=config.max_iter,
            )
            k = elbow_result.chosen_k
        if len(points) < k:
            skipped.append((window.key, f"only {len(points)} active users for k={k}"))
            continue
        model = kmeans_best(
            points,
            k,
            seed=config.seed,
            restarts=config.restarts,
            max_iter=config.max_iter,
        )
        labels = label_clusters(model) if k == 4 else None
        classes = (
            {user: labels.classes[idx] for user, idx in model.assignment.items()}
            if labels
            else {}
        )
        results[window.key] = ChallengeClassification(
            window=window,
            activities=activities,
            points=points,
            model=model,
            labels=labels,
            classes=classes,
            elbow=elbow_result,
        )
    return ClassificationRun(results=results, skipped=skipped)
