"""Fitting and prediction on curve tensors.

A fit standardizes the training curves per (feature, time), solves the
non-sparse problem once, and sparsifies at a given tau.  Test curves are
standardized with the training statistics and classified by nearest
centroid on the discriminant scores.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .classify import (OVERALL, Centroids, DiscriminantScores, class_centroids, nearest_centroid,
                       project)
from .fd_model import Standardized, standardize
from .scatter import TIME_DEPENDENT
from .sparse import SELECTIVITY, DiscriminantSolution, NonsparseFit, fit_nonsparse, sparsify


@dataclass(frozen=True)
class PreparedFit:
    """Training standardization and the tau-independent non-sparse solution."""

    standardization: Standardized
    nonsparse: NonsparseFit
    labels: np.ndarray
    classes: np.ndarray

    @property
    def Z(self) -> np.ndarray:
        return self.standardization.X

    def standardize(self, X) -> np.ndarray:
        s = self.standardization
        return standardize(X, s.mean, s.sd).X


def default_components(n_classes: int) -> int:
    return max(n_classes - 1, 1)


def prepare(X, labels, mode: str = TIME_DEPENDENT, n_components: int | None = None,
            ridge: float | None = None, threads: int = 1) -> PreparedFit:
    labels = np.asarray(labels)
    classes = np.unique(labels)
    if classes.size < 2:
        raise ValueError("need at least two classes")
    if n_components is None:
        n_components = default_components(classes.size)
    std = standardize(X)
    fit = fit_nonsparse(std.X, labels, mode, n_components, ridge, threads)
    return PreparedFit(std, fit, labels, classes)


@dataclass(frozen=True)
class FittedModel:
    prepared: PreparedFit
    solution: DiscriminantSolution
    centroids: Centroids
    time_mode: str = OVERALL

    @property
    def tau(self) -> float:
        return self.solution.tau

    @property
    def selected(self) -> np.ndarray:
        return self.solution.selected

    def training_scores(self, subject_ids=None) -> DiscriminantScores:
        return project(self.prepared.Z, self.solution.gamma_hat, subject_ids)

    def scores(self, X, subject_ids=None) -> DiscriminantScores:
        return project(self.prepared.standardize(X), self.solution.gamma_hat, subject_ids)

    def predict(self, X, subject_ids=None):
        return nearest_centroid(self.scores(X, subject_ids), self.centroids, self.time_mode)

    def predict_labels(self, X) -> np.ndarray:
        return np.array([p.predicted for p in self.predict(X)])

    def classifier(self) -> "Classifier":
        s = self.prepared.standardization
        return Classifier(s.mean, s.sd, self.solution.gamma_hat, self.centroids, self.time_mode,
                          self.solution.mode, self.solution.tau)


@dataclass(frozen=True)
class Classifier:
    """What prediction needs: training standardization, discriminants and centroids."""

    mean: np.ndarray
    sd: np.ndarray
    gamma_hat: np.ndarray
    centroids: Centroids
    time_mode: str
    mode: str
    tau: float

    def scores(self, X, subject_ids=None) -> DiscriminantScores:
        Z = standardize(X, self.mean, self.sd).X
        return project(Z, self.gamma_hat, subject_ids)

    def predict(self, X, subject_ids=None):
        return nearest_centroid(self.scores(X, subject_ids), self.centroids, self.time_mode)


def save_classifier(path, clf: Classifier, extra: dict | None = None):
    """JSON dump; floats are written with round-trip precision."""
    doc = {
        "mode": clf.mode, "tau": clf.tau, "time_mode": clf.time_mode,
        "mean": clf.mean.tolist(), "sd": clf.sd.tolist(),
        "gamma_hat": clf.gamma_hat.tolist(),
        "classes": [int(k) for k in clf.centroids.classes],
        "centroids": clf.centroids.means.tolist(),
        "extra": extra or {},
    }
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_classifier(path) -> tuple[Classifier, dict]:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    cents = Centroids(np.array(doc["classes"]), np.array(doc["centroids"], dtype=float))
    clf = Classifier(np.array(doc["mean"], dtype=float), np.array(doc["sd"], dtype=float),
                     np.array(doc["gamma_hat"], dtype=float), cents, doc["time_mode"],
                     doc["mode"], float(doc["tau"]))
    return clf, doc.get("extra", {})


def fit_at(prepared: PreparedFit, tau: float, threshold: float = SELECTIVITY, max_iter: int = 20,
           time_mode: str = OVERALL, threads: int = 1) -> FittedModel:
    """Sparsify a prepared fit at ``tau`` and compute training centroids."""
    sol = sparsify(prepared.nonsparse, tau, max_iter, threshold, threads)
    train = project(prepared.Z, sol.gamma_hat)
    cents = class_centroids(train, prepared.labels, prepared.classes)
    return FittedModel(prepared, sol, cents, time_mode)


def fit(X, labels, tau: float, mode: str = TIME_DEPENDENT, n_components: int | None = None,
        threshold: float = SELECTIVITY, max_iter: int = 20, time_mode: str = OVERALL,
        ridge: float | None = None, threads: int = 1) -> FittedModel:
    """Fit sparse discriminants at a fixed tau on an n x p x T curve tensor."""
    prepared = prepare(X, labels, mode, n_components, ridge, threads)
    return fit_at(prepared, tau, threshold, max_iter, time_mode, threads)


__all__ = ["PreparedFit", "FittedModel", "Classifier", "prepare", "fit_at", "fit",
           "default_components", "save_classifier", "load_classifier"]
