"""Choosing tau: range search by target sparsity, then stratified cross-validation.

The range search starts from [tau_max0 sqrt(log p / (nT)), tau_max0] with
tau_max0 the largest entry of |M gamma_tilde| over all time points.  It
evaluates the selected fraction of features on an 8-point grid and moves
the range (divide or multiply by ``c_update``, or zoom between adjacent grid
points when the target band is jumped over) until some grid point lands
within ``target +- tolerance``.  Cross-validation then scores each grid tau
by the fold mean of the combined metric.
"""

from __future__ import annotations

import csv
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .classify import OVERALL
from .errors import NoViableRangeError, StratificationError
from .fd_model import fmt
from .metrics import METRIC_NAMES, EvaluationReport, evaluate
from .model import FittedModel, PreparedFit, fit_at, prepare
from .scatter import TIME_DEPENDENT
from .sparse import SELECTIVITY, NonsparseFit, sparsify

log = logging.getLogger(__name__)

GRID_POINTS = 8


@dataclass(frozen=True)
class TauGrid:
    tau_min: float
    tau_max: float
    target_sparsity: float = 0.10
    tolerance: float = 0.05
    sparsity: tuple = ()
    trace: tuple = ()

    def __post_init__(self):
        if not 0 < self.tau_min < self.tau_max:
            raise ValueError(f"need 0 < tau_min < tau_max, got {self.tau_min}, {self.tau_max}")

    @property
    def grid(self) -> np.ndarray:
        return np.linspace(self.tau_min, self.tau_max, GRID_POINTS)


@dataclass(frozen=True)
class CvConfig:
    K: int = 5
    seed: int = 0
    time_mode: str = OVERALL
    threshold: float = SELECTIVITY
    max_iter: int = 20
    n_components: int | None = None
    average: str = "weighted"
    threads: int = 1

    def __post_init__(self):
        if self.K < 2:
            raise ValueError("K must be at least 2")


def tau_bounds(M, gamma, n: int, p: int, T: int) -> tuple[float, float]:
    """Initial (tau_min0, tau_max0).

    ``M`` is the pT x pT time-dependent matrix or the T x p x p stack of
    per-time matrices; ``gamma`` is the matching time-major pT vector or a
    p x T matrix.
    """
    if n * T <= 1 or p < 2:
        raise ValueError("need n T > 1 and p >= 2")
    M = np.asarray(M, dtype=float)
    g = np.asarray(gamma, dtype=float)
    if g.ndim == 2:
        g = g.T.reshape(-1)
    if not np.any(g):
        raise ValueError("gamma_tilde is identically zero")
    if M.ndim == 3:
        b = np.einsum("tpq,tq->tp", M, g.reshape(T, p))
    else:
        b = M @ g
    tau_max = float(np.max(np.abs(b)))
    return _lower(tau_max, n, p, T), tau_max


def _lower(tau_max, n, p, T):
    return tau_max * np.sqrt(np.log(p) / (n * T))


def bounds_from_fit(fit: NonsparseFit) -> tuple[float, float]:
    """Initial bounds from the first component of a non-sparse fit."""
    n = fit.labels.size
    if n * fit.T <= 1 or fit.p < 2:
        raise ValueError("need n T > 1 and p >= 2")
    tau_max = float(np.max(np.abs(fit.m_gamma()[0])))
    if tau_max == 0:
        raise ValueError("M gamma_tilde is identically zero")
    return _lower(tau_max, n, fit.p, fit.T), tau_max


def realized_sparsity(fit: NonsparseFit, tau: float, threshold: float = SELECTIVITY,
                      max_iter: int = 20, threads: int = 1) -> float:
    """Fraction of features the first sparse discriminant selects at ``tau``."""
    return sparsify(fit, tau, max_iter, threshold, threads).profiles[0].sparsity


def find_tau_range(fit: NonsparseFit, target_sparsity: float = 0.10, c_update: float = 2.0,
                   max_updates: int = 50, tolerance: float = 0.05,
                   threshold: float = SELECTIVITY, max_iter: int = 20,
                   threads: int = 1) -> TauGrid:
    """Search for an 8-point tau grid whose sparsity brackets the target.

    Scanning the grid upward, the first tau inside the band becomes the new
    upper bound and the grid point before it the new lower bound (half the
    lowest point when the band is hit at once).
    """
    if not 0 < target_sparsity <= 1:
        raise ValueError("target_sparsity must lie in (0, 1]")
    if c_update <= 1:
        raise ValueError("c_update must exceed 1")
    lo, hi = bounds_from_fit(fit)
    trace = []
    for _ in range(max_updates + 1):
        grid = np.linspace(lo, hi, GRID_POINTS)
        sp = [realized_sparsity(fit, t, threshold, max_iter, threads) for t in grid]
        trace.append((lo, hi, tuple(sp)))
        log.debug("tau range [%g, %g] sparsity %s", lo, hi, sp)
        inside = [i for i, s in enumerate(sp) if abs(s - target_sparsity) <= tolerance + 1e-12]
        if inside:
            first = inside[0]
            new_lo = grid[first - 1] if first > 0 else grid[0] / c_update
            new_hi = grid[first]
            final = np.linspace(new_lo, new_hi, GRID_POINTS)
            final_sp = tuple(realized_sparsity(fit, t, threshold, max_iter, threads) for t in final)
            return TauGrid(float(new_lo), float(new_hi), target_sparsity, tolerance,
                           final_sp, tuple(trace))
        dense = [s > target_sparsity + tolerance for s in sp]
        if all(dense):
            lo, hi = lo * c_update, hi * c_update
        elif not any(dense):
            lo, hi = lo / c_update, hi / c_update
        elif not dense[0]:
            lo, hi = lo / c_update, hi / c_update
        else:
            # the band lies between two adjacent grid points
            i = dense.index(False)
            lo, hi = grid[i - 1], grid[i]
    raise NoViableRangeError(
        f"no tau range reached sparsity {target_sparsity} +- {tolerance} in {max_updates} updates",
        trace)


def stratified_folds(labels, K: int, seed: int) -> np.ndarray:
    """Fold index (0..K-1) per subject.

    Each class is shuffled, classes are concatenated in ascending order and
    folds are dealt round-robin along that sequence, so fold sizes differ by
    at most one and each fold's class counts differ by at most one from
    every other fold's.
    """
    labels = np.asarray(labels)
    if K < 2:
        raise ValueError("K must be at least 2")
    rng = np.random.default_rng(seed)
    order = []
    for k in np.unique(labels):
        members = np.flatnonzero(labels == k)
        if members.size < K:
            raise StratificationError(f"class {k} has {members.size} subjects, fewer than K = {K}")
        order.append(rng.permutation(members))
    order = np.concatenate(order)
    folds = np.empty(labels.size, dtype=int)
    folds[order] = np.arange(order.size) % K
    return folds


def stratified_holdout(labels, fraction: float, seed: int):
    """(train, test) index arrays holding out ``fraction`` of each class (at least one)."""
    labels = np.asarray(labels)
    if not 0 < fraction < 1:
        raise ValueError("holdout fraction must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    test = []
    for k in np.unique(labels):
        members = rng.permutation(np.flatnonzero(labels == k))
        n_test = max(1, int(round(fraction * members.size)))
        if n_test >= members.size:
            raise StratificationError(f"class {k} is too small to hold out {fraction:g}")
        test.extend(members[:n_test].tolist())
    test = np.array(sorted(test), dtype=int)
    return np.setdiff1d(np.arange(labels.size), test), test


def combined_metric(report: EvaluationReport) -> float:
    """Sum of accuracy, balanced accuracy, F-1, precision, recall and MCC."""
    return report.combined


@dataclass(frozen=True)
class CvResult:
    tau_best: float
    grid: np.ndarray
    mean_metrics: np.ndarray            # n_tau x 6, in METRIC_NAMES order
    combined: np.ndarray                # n_tau, fold mean of the combined metric
    reports: list = field(default_factory=list)   # reports[v][k] for tau v, fold k

    @property
    def best_index(self) -> int:
        return int(np.flatnonzero(self.grid == self.tau_best)[0])


def _fold_reports(X, labels, train, test, taus, cfg: CvConfig, mode, classes):
    prepared = prepare(X[train], labels[train], mode, cfg.n_components)
    out = []
    for tau in taus:
        model = fit_at(prepared, tau, cfg.threshold, cfg.max_iter, cfg.time_mode)
        pred = model.predict_labels(X[test])
        out.append(evaluate(labels[test], pred, classes, cfg.average))
    return out


def cross_validate(X, labels, taus, cfg: CvConfig = CvConfig(),
                   mode: str = TIME_DEPENDENT) -> CvResult:
    """K-fold CV over ``taus`` on an n x p x T curve tensor (unstandardized).

    Each training fold is standardized on its own and the held-out fold
    reuses those statistics.  The best tau maximizes the fold-mean combined
    metric; ties go to the larger tau.
    """
    X = np.asarray(X, dtype=float)
    labels = np.asarray(labels)
    taus = np.asarray(getattr(taus, "grid", taus), dtype=float)
    classes = np.unique(labels)
    folds = stratified_folds(labels, cfg.K, cfg.seed)

    def job(k):
        return _fold_reports(X, labels, folds != k, folds == k, taus, cfg, mode, classes)

    if cfg.threads > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            per_fold = list(pool.map(job, range(cfg.K)))
    else:
        per_fold = [job(k) for k in range(cfg.K)]
    reports = [[per_fold[k][v] for k in range(cfg.K)] for v in range(taus.size)]
    metrics = np.array([[[getattr(r, m) for m in METRIC_NAMES] for r in row] for row in reports])
    mean_metrics = metrics.mean(axis=1)
    combined = metrics.sum(axis=2).mean(axis=1)
    best = max(range(taus.size), key=lambda v: (combined[v], taus[v]))
    return CvResult(float(taus[best]), taus, mean_metrics, combined, reports)


def write_trace_csv(path, result: CvResult):
    """One row per (tau, fold): ``tau,fold,<six metrics>,combined``."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["tau", "fold", *METRIC_NAMES, "combined"])
        for v, tau in enumerate(result.grid):
            for k, r in enumerate(result.reports[v]):
                w.writerow([fmt(tau), k + 1, *(fmt(getattr(r, m)) for m in METRIC_NAMES),
                            fmt(r.combined)])


@dataclass(frozen=True)
class TuningResult:
    tau_grid: TauGrid
    cv: CvResult
    model: FittedModel


def tune(X, labels, mode: str = TIME_DEPENDENT, target_sparsity: float = 0.10,
         cfg: CvConfig = CvConfig(), c_update: float = 2.0, prepared: PreparedFit | None = None) -> TuningResult:
    """Range search on the full data, CV over its grid, refit at the chosen tau."""
    if prepared is None:
        prepared = prepare(X, labels, mode, cfg.n_components, threads=cfg.threads)
    grid = find_tau_range(prepared.nonsparse, target_sparsity, c_update,
                          threshold=cfg.threshold, max_iter=cfg.max_iter, threads=cfg.threads)
    cv = cross_validate(X, labels, grid, cfg, mode)
    model = fit_at(prepared, cv.tau_best, cfg.threshold, cfg.max_iter, cfg.time_mode, cfg.threads)
    return TuningResult(grid, cv, model)


__all__ = ["TauGrid", "CvConfig", "CvResult", "TuningResult", "tau_bounds", "bounds_from_fit",
           "realized_sparsity", "find_tau_range", "stratified_folds", "stratified_holdout", "combined_metric",
           "cross_validate", "write_trace_csv", "tune", "GRID_POINTS"]
