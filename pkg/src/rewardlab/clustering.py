"""Spherical k-means over unit-norm failure embeddings, plus the
cross-epoch cluster alignment that keeps pseudo-labels stable.

The objective minimized is mean_i ( -v_i . c_{q_i} ), i.e. negative mean
cosine to the assigned center; centers are normalized member means. The
alternation never increases the objective, and the per-iteration history
is kept on the result so tests can assert that.

Alignment between consecutive epochs is an optimal assignment on the
K x K center-similarity matrix (Hungarian method via scipy); new centers
and labels are then relabeled so index k keeps tracking one failure theme.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import SizeMismatchError, TooFewSamplesError, ZeroVectorError


@dataclass
class ClusterState:
    task_id: int
    centers: np.ndarray          # (K, D), unit rows
    assignments: np.ndarray      # (M,)
    objective: float             # in [-1, 1]
    sample_count: int
    objective_history: list = field(default_factory=list)


def assign_pseudo_labels(centers: np.ndarray, features: np.ndarray) -> np.ndarray:
    """Argmax-cosine assignment; ties resolve to the lowest cluster index."""
    sims = np.asarray(features, dtype=np.float64) @ np.asarray(centers, dtype=np.float64).T
    return np.argmax(sims, axis=1)


def clustering_objective(features, centers, assignments) -> float:
    sims = np.sum(features * centers[assignments], axis=1)
    return float(-np.mean(sims))


def _kmeanspp_init(features: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++-style seeding with cosine distance (1 - similarity)."""
    m = features.shape[0]
    centers = np.empty((k, features.shape[1]))
    centers[0] = features[rng.integers(m)]
    for j in range(1, k):
        sims = features @ centers[:j].T
        dist = np.maximum(1.0 - sims.max(axis=1), 0.0)
        weights = dist**2
        total = weights.sum()
        if total <= 0.0:
            centers[j] = features[rng.integers(m)]
        else:
            centers[j] = features[rng.choice(m, p=weights / total)]
    return centers


def _update_centers(features, assignments, centers):
    """Normalized member means; empty clusters steal the worst-fit point."""
    k = centers.shape[0]
    new = centers.copy()
    counts = np.bincount(assignments, minlength=k)
    for j in range(k):
        if counts[j] == 0:
            continue
        mean = features[assignments == j].sum(axis=0)
        norm = np.linalg.norm(mean)
        if norm > 1e-12:
            new[j] = mean / norm
        # antipodal members cancel out; keep the previous center then
    taken = set()
    for j in np.flatnonzero(counts == 0):
        fit = np.sum(features * new[assignments], axis=1)
        order = np.argsort(fit, kind="stable")
        pick = next(int(i) for i in order if int(i) not in taken)
        taken.add(pick)
        new[j] = features[pick]
    return new


def spherical_kmeans(
    features: np.ndarray,
    k: int,
    max_iters: int = 100,
    seed: int = 0,
    n_restarts: int = 10,
    task_id: int = -1,
) -> ClusterState:
    """Cluster M unit vectors into k groups by cosine similarity.

    Deterministic given the seed; restarts (seeded independently) keep the
    run with the lowest converged objective.
    """
    features = np.asarray(features, dtype=np.float64)
    m = features.shape[0]
    if m < k:
        raise TooFewSamplesError(f"{m} samples < {k} clusters")
    if k < 1:
        raise TooFewSamplesError("need k >= 1")
    norms = np.linalg.norm(features, axis=1)
    if np.any(norms <= 1e-12):
        raise ZeroVectorError("features must be nonzero unit vectors")

    best = None
    for restart in range(n_restarts):
        rng = np.random.default_rng([seed, restart])
        centers = _kmeanspp_init(features, k, rng)
        labels = assign_pseudo_labels(centers, features)
        history = [clustering_objective(features, centers, labels)]
        for _ in range(max_iters):
            centers = _update_centers(features, labels, centers)
            new_labels = assign_pseudo_labels(centers, features)
            history.append(clustering_objective(features, centers, new_labels))
            if np.array_equal(new_labels, labels):
                break
            labels = new_labels
        state = ClusterState(
            task_id=task_id,
            centers=centers,
            assignments=labels,
            objective=history[-1],
            sample_count=m,
            objective_history=history,
        )
        if best is None or state.objective < best.objective - 1e-15:
            best = state
    return best


def align_clusters(prev_centers: np.ndarray, new_centers: np.ndarray) -> np.ndarray:
    """Permutation pi maximizing sum_k prev[k] . new[pi[k]]."""
    prev_centers = np.asarray(prev_centers, dtype=np.float64)
    new_centers = np.asarray(new_centers, dtype=np.float64)
    if prev_centers.shape != new_centers.shape:
        raise SizeMismatchError(
            f"center sets differ: {prev_centers.shape} vs {new_centers.shape}"
        )
    sims = prev_centers @ new_centers.T
    rows, cols = linear_sum_assignment(-sims)
    pi = np.empty(len(rows), dtype=np.int64)
    pi[rows] = cols
    return pi


def relabel_state(state: ClusterState, pi: np.ndarray) -> ClusterState:
    """Apply an alignment permutation to centers and assignments."""
    inverse = np.empty_like(pi)
    inverse[pi] = np.arange(len(pi))
    return ClusterState(
        task_id=state.task_id,
        centers=state.centers[pi],
        assignments=inverse[state.assignments],
        objective=state.objective,
        sample_count=state.sample_count,
        objective_history=state.objective_history,
    )


def label_churn(prev_labels: np.ndarray, new_labels: np.ndarray) -> float:
    """Fraction of samples whose pseudo-label changed between epochs."""
    prev_labels = np.asarray(prev_labels)
    new_labels = np.asarray(new_labels)
    if prev_labels.shape != new_labels.shape:
        raise SizeMismatchError("label vectors differ in length")
    if prev_labels.size == 0:
        return 0.0
    return float(np.mean(prev_labels != new_labels))
