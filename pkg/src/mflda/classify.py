"""Discriminant scores, nearest-centroid classification and the KS diagnostic."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateClassError, InsufficientDataError
from .fd_model import fmt

OVERALL = "overall"
TIMEWISE = "timewise"


@dataclass(frozen=True)
class DiscriminantScores:
    """Score curves ``scores[i, c, h]`` of subject i on component c at grid time h."""

    scores: np.ndarray
    subject_ids: tuple = ()

    @property
    def n_subjects(self) -> int:
        return self.scores.shape[0]


@dataclass(frozen=True)
class Centroids:
    classes: np.ndarray
    means: np.ndarray          # G x C x T


@dataclass(frozen=True)
class Prediction:
    subject_id: object
    predicted: int
    margin: float
    votes: tuple = ()


def project(X, gamma_hat, subject_ids=None) -> DiscriminantScores:
    """z_i(t) = sum_j gamma_hat[j, t] x_ij(t), for each component.

    ``X`` is n x p x T; ``gamma_hat`` is p x T or C x p x T.
    """
    X = np.asarray(X, dtype=float)
    G = np.asarray(gamma_hat, dtype=float)
    if G.ndim == 2:
        G = G[None]
    if X.ndim != 3 or G.shape[1:] != X.shape[1:]:
        raise ValueError(f"data shape {X.shape} does not match discriminant shape {G.shape}")
    scores = np.einsum("ipt,cpt->ict", X, G)
    ids = tuple(subject_ids) if subject_ids is not None else tuple(range(X.shape[0]))
    return DiscriminantScores(scores, ids)


def class_centroids(scores: DiscriminantScores, labels, classes=None) -> Centroids:
    """Mean score curve of each class (training data only)."""
    labels = np.asarray(labels)
    classes = np.unique(labels) if classes is None else np.asarray(classes)
    means = []
    for k in classes:
        members = labels == k
        if not members.any():
            raise DegenerateClassError(f"class {k} has no training subjects", klass=k)
        means.append(scores.scores[members].mean(axis=0))
    return Centroids(classes, np.stack(means))


def majority_vote(votes) -> int:
    """Most frequent class; ties go to the lowest class."""
    votes = np.asarray(votes)
    if votes.size == 0:
        raise ValueError("need at least one vote")
    values, counts = np.unique(votes, return_counts=True)
    return int(values[np.argmax(counts)])


def _margin(d):
    """Gap between the two smallest distances (0 with a single class)."""
    if d.size < 2:
        return 0.0
    two = np.partition(d, 1)[:2]
    return float(two[1] - two[0])


def nearest_centroid(scores: DiscriminantScores, centroids: Centroids,
                     time_mode: str = OVERALL) -> list[Prediction]:
    """Assign each subject to the closest class centroid (Euclidean).

    ``overall`` compares whole score curves (components concatenated);
    ``timewise`` classifies each time point and takes a majority vote.
    Exact ties go to the lowest class.
    """
    if time_mode not in (OVERALL, TIMEWISE):
        raise ValueError(f"time_mode must be {OVERALL!r} or {TIMEWISE!r}")
    Z = scores.scores
    M = centroids.means
    if Z.shape[1:] != M.shape[1:]:
        raise ValueError("score and centroid shapes differ")
    classes = centroids.classes
    out = []
    for i in range(Z.shape[0]):
        diff = Z[i][None] - M
        if time_mode == OVERALL:
            d = np.sqrt(np.einsum("gct,gct->g", diff, diff))
            k = int(np.argmin(d))
            out.append(Prediction(scores.subject_ids[i], int(classes[k]), _margin(d)))
        else:
            d_t = np.sqrt(np.einsum("gct,gct->gt", diff, diff))
            per_time = classes[np.argmin(d_t, axis=0)]
            winner = majority_vote(per_time)
            share = float(np.mean(per_time == winner))
            out.append(Prediction(scores.subject_ids[i], winner, share,
                                  tuple(int(v) for v in per_time)))
    return out


def _kolmogorov_sf(x: float, terms: int = 100) -> float:
    """P(K > x) for the Kolmogorov distribution.

    Uses the alternating series in exp(-2 k^2 x^2) for x >= 1 and the
    theta-function form of the CDF below 1, where the first one converges slowly.
    """
    if x <= 0:
        return 1.0
    k = np.arange(1, terms + 1)
    if x < 1.0:
        cdf = np.sqrt(2 * np.pi) / x * np.sum(np.exp(-(2 * k - 1) ** 2 * np.pi ** 2 / (8 * x * x)))
        return float(min(max(1.0 - cdf, 0.0), 1.0))
    s = 2.0 * np.sum((-1.0) ** (k - 1) * np.exp(-2.0 * k * k * x * x))
    return float(min(max(s, 0.0), 1.0))


def ks_separation(a, b):
    """Two-sample Kolmogorov-Smirnov statistic and asymptotic p-value.

    Both inputs are flattened (subjects x times).
    """
    a = np.sort(np.asarray(a, dtype=float).ravel())
    b = np.sort(np.asarray(b, dtype=float).ravel())
    if a.size < 2 or b.size < 2:
        raise InsufficientDataError("each group needs at least two scores")
    pooled = np.concatenate([a, b])
    Fa = np.searchsorted(a, pooled, side="right") / a.size
    Fb = np.searchsorted(b, pooled, side="right") / b.size
    D = float(np.max(np.abs(Fa - Fb)))
    ne = a.size * b.size / (a.size + b.size)
    return D, _kolmogorov_sf(np.sqrt(ne) * D)


def write_predictions_csv(path, predictions, true_labels):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["subject_id", "predicted", "true", "margin"])
        for pred, y in zip(predictions, true_labels):
            w.writerow([pred.subject_id, pred.predicted, y, fmt(pred.margin)])


def write_scores_csv(path, scores: DiscriminantScores, grid):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["subject_id", "component", "time", "score"])
        Z = scores.scores
        for i in range(Z.shape[0]):
            for c in range(Z.shape[1]):
                for h in range(Z.shape[2]):
                    w.writerow([scores.subject_ids[i], c + 1, fmt(grid[h]), fmt(Z[i, c, h])])


__all__ = ["DiscriminantScores", "Centroids", "Prediction", "project", "class_centroids",
           "nearest_centroid", "majority_vote", "ks_separation", "write_predictions_csv",
           "write_scores_csv", "OVERALL", "TIMEWISE"]
