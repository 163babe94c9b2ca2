"""Compositional preprocessing for abundance data.

Order is fixed: drop features that are mostly zero, add a pseudo-count and
apply the centered log-ratio transform to each observation row, then drop
low-variance features.  Rows are observations (a subject at a time point),
columns are features; retained features keep their original order.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError
from .fd_model import FunctionalDataSet, _natural_key


@dataclass(frozen=True)
class PreprocessConfig:
    max_zero_fraction: float = 0.80
    pseudo_count: float = 1.0
    variance_quantile_cut: float = 0.05

    def __post_init__(self):
        if not 0 <= self.max_zero_fraction <= 1:
            raise ValueError("max_zero_fraction must lie in [0, 1]")
        if not 0 <= self.variance_quantile_cut <= 1:
            raise ValueError("variance_quantile_cut must lie in [0, 1]")
        if not self.pseudo_count > 0:
            raise ValueError("pseudo_count must be positive")


def zero_filter(raw, max_zero_fraction: float = 0.80) -> np.ndarray:
    """Indices of features whose zero fraction is strictly below the cut."""
    raw = np.asarray(raw, dtype=float)
    if np.any(raw < 0):
        raise DataError("abundances must be nonnegative")
    frac = (raw == 0).mean(axis=0)
    return np.flatnonzero(frac < max_zero_fraction)


def clr(x, pseudo_count: float = 1.0) -> np.ndarray:
    """Centered log-ratio of each row after adding ``pseudo_count``."""
    x = np.asarray(x, dtype=float)
    logs = np.log(x + pseudo_count)
    return logs - logs.mean(axis=-1, keepdims=True)


def variance_filter(Y, quantile_cut: float = 0.05) -> np.ndarray:
    """Indices of features whose variance is not below the ``quantile_cut`` quantile.

    The quantile is the linear-interpolation (type 7) sample quantile of all
    feature variances; a variance equal to it is kept.
    """
    Y = np.asarray(Y, dtype=float)
    if Y.shape[0] < 2:
        raise DataError("variance filter needs at least two samples")
    var = Y.var(axis=0, ddof=1)
    cut = np.quantile(var, quantile_cut, method="linear")
    return np.flatnonzero(var >= cut)


@dataclass(frozen=True)
class PreprocessResult:
    values: np.ndarray           # rows x retained features, CLR scale
    retained: np.ndarray         # original indices of retained features
    zero_dropped: np.ndarray
    variance_dropped: np.ndarray


def preprocess(raw, cfg: PreprocessConfig = PreprocessConfig()) -> PreprocessResult:
    """Zero filter, then pseudo-count + CLR per row, then variance filter."""
    raw = np.asarray(raw, dtype=float)
    p = raw.shape[1]
    keep1 = zero_filter(raw, cfg.max_zero_fraction)
    if keep1.size == 0:
        raise DataError("every feature fails the zero filter")
    Y = clr(raw[:, keep1], cfg.pseudo_count)
    keep2 = variance_filter(Y, cfg.variance_quantile_cut)
    retained = keep1[keep2]
    return PreprocessResult(Y[:, keep2], retained, np.setdiff1d(np.arange(p), keep1),
                            np.setdiff1d(keep1, retained))


def observation_matrix(data: FunctionalDataSet):
    """Rows (subject, time) x features from long data; every cell must be observed."""
    pairs, row = np.unique(np.column_stack([data.subject, data.time]), axis=0, return_inverse=True)
    row = row.ravel()
    M = np.full((pairs.shape[0], data.n_features), np.nan)
    M[row, data.feature] = data.value
    if np.isnan(M).any():
        r, c = np.argwhere(np.isnan(M))[0]
        sid = data.subject_ids[int(pairs[r, 0])]
        raise DataError(f"composition incomplete: subject {sid} at time {pairs[r, 1]:g} "
                        f"lacks feature {data.feature_names[c]}")
    return pairs, M


def preprocess_dataset(data: FunctionalDataSet, cfg: PreprocessConfig = PreprocessConfig()):
    """Apply :func:`preprocess` to long data; returns (new data set, result)."""
    pairs, M = observation_matrix(data)
    res = preprocess(M, cfg)
    n_rows, q = res.values.shape
    subject = np.repeat(pairs[:, 0].astype(int), q)
    time = np.repeat(pairs[:, 1], q)
    feature = np.tile(np.arange(q), n_rows)
    out = FunctionalDataSet(data.subject_ids, tuple(data.feature_names[j] for j in res.retained),
                            subject, time, feature, res.values.ravel(), data.time_domain,
                            data.labels, data.class_names)
    return out, res


def apply_preprocess(data: FunctionalDataSet, result: PreprocessResult,
                     cfg: PreprocessConfig = PreprocessConfig()) -> FunctionalDataSet:
    """Transform new data with the feature choices of an earlier ``result``.

    ``data`` must carry the same features, in the same order, as the data
    that produced ``result``.  The CLR uses the features that passed the zero
    filter there; the output keeps the retained ones.
    """
    pairs, M = observation_matrix(data)
    keep1 = np.setdiff1d(np.arange(M.shape[1]), result.zero_dropped)
    Y = clr(M[:, keep1], cfg.pseudo_count)
    cols = np.searchsorted(keep1, result.retained)
    values = Y[:, cols]
    n_rows, q = values.shape
    return FunctionalDataSet(data.subject_ids, tuple(data.feature_names[j] for j in result.retained),
                             np.repeat(pairs[:, 0].astype(int), q), np.repeat(pairs[:, 1], q),
                             np.tile(np.arange(q), n_rows), values.ravel(), data.time_domain,
                             data.labels, data.class_names)


def read_wide_csv(path, time_domain=None) -> FunctionalDataSet:
    """Read ``subject_id,time[,class],<feature columns>`` with one row per observation."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[:2] != ["subject_id", "time"]:
            raise DataError(f"{path}: wide format needs leading columns subject_id,time")
        has_class = len(header) > 2 and header[2] == "class"
        names = header[3:] if has_class else header[2:]
        if not names:
            raise DataError(f"{path}: no feature columns")
        subjects, classes, rows = {}, {}, []
        for lineno, rec in enumerate(reader, start=2):
            if len(rec) != len(header):
                raise DataError(f"{path}:{lineno}: expected {len(header)} fields")
            sid = rec[0]
            subjects.setdefault(sid, len(subjects))
            if has_class:
                prev = classes.setdefault(sid, rec[2])
                if prev != rec[2]:
                    raise DataError(f"{path}:{lineno}: subject {sid} changes class")
            try:
                vals = [float(v) for v in rec[3 if has_class else 2:]]
                t = float(rec[1])
            except ValueError:
                raise DataError(f"{path}:{lineno}: non-numeric value") from None
            rows.append((subjects[sid], t, vals))
    if not rows:
        raise DataError(f"{path}: no observations")
    p = len(names)
    subject = np.repeat([r[0] for r in rows], p)
    time = np.repeat([r[1] for r in rows], p)
    feature = np.tile(np.arange(p), len(rows))
    value = np.concatenate([r[2] for r in rows])
    labels, class_names = None, ()
    if has_class:
        class_names = tuple(sorted(set(classes.values()), key=_natural_key))
        code = {c: k + 1 for k, c in enumerate(class_names)}
        labels = np.array([code[classes[s]] for s in subjects], dtype=int)
    if time_domain is None:
        time_domain = (float(time.min()), float(time.max()))
    return FunctionalDataSet(tuple(subjects), tuple(names), subject, time, feature, value,
                             tuple(time_domain), labels, class_names)


def write_retained_manifest(path, feature_names, result: PreprocessResult):
    """``feature,retained,reason`` for every input feature, in input order."""
    reason = {int(j): "zero_fraction" for j in result.zero_dropped}
    reason.update({int(j): "low_variance" for j in result.variance_dropped})
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["feature", "retained", "reason"])
        for j, name in enumerate(feature_names):
            w.writerow([name, 0 if j in reason else 1, reason.get(j, "")])


__all__ = ["PreprocessConfig", "PreprocessResult", "zero_filter", "clr", "variance_filter",
           "preprocess", "preprocess_dataset", "apply_preprocess", "observation_matrix", "read_wide_csv",
           "write_retained_manifest"]
