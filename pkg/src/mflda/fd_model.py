"""Irregular multivariate longitudinal data and its B-spline mean model.

Each subject's observed curves x_ij(t) are replaced by least-squares spline
fits w_ij(t) = phi(t)^T c_ij.  The coefficient matrices C_i (m x p) are the
input to the scatter operators; evaluating them on a common grid gives the
n x p x T curve tensor used for sparse estimation and classification.
"""

from __future__ import annotations

import csv
import math
import warnings
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np
from scipy.interpolate import BSpline

from .errors import DataError, DomainError, EmptyModelError, InsufficientDataError


@dataclass(frozen=True)
class Observation:
    subject_id: str
    time: float
    feature_index: int
    value: float


def _frozen(a, dtype=None):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class FunctionalDataSet:
    """Long-format observations for ``n_subjects`` subjects and ``n_features`` features.

    Observations are stored column-wise: ``subject`` holds integer positions
    into ``subject_ids``.  ``labels`` holds one class code in 1..G per subject
    (or is None for unlabeled data); ``class_names`` maps code k to
    ``class_names[k - 1]``.
    """

    subject_ids: tuple
    feature_names: tuple
    subject: np.ndarray
    time: np.ndarray
    feature: np.ndarray
    value: np.ndarray
    time_domain: tuple
    labels: np.ndarray | None = None
    class_names: tuple = ()

    def __post_init__(self):
        for name in ("subject", "time", "feature", "value"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        if self.labels is not None:
            object.__setattr__(self, "labels", _frozen(self.labels, int))
        lo, hi = self.time_domain
        if not lo <= hi:
            raise DataError(f"invalid time domain {self.time_domain}")
        if self.time.size and (self.time.min() < lo or self.time.max() > hi):
            raise DomainError("observation time outside the declared time domain")
        if self.feature.size and (self.feature.min() < 0 or self.feature.max() >= self.n_features):
            raise DataError("feature index out of range")
        counts = np.bincount(self.subject, minlength=self.n_subjects)
        if np.any(counts == 0):
            missing = [self.subject_ids[i] for i in np.flatnonzero(counts == 0)]
            raise DataError(f"subjects without observations: {missing}")
        if self.labels is not None:
            if self.labels.shape != (self.n_subjects,):
                raise DataError("one label per subject is required")
            G = len(self.class_names) or int(self.labels.max())
            if self.labels.min() < 1 or self.labels.max() > G:
                raise DataError("class labels must lie in 1..G")

    @property
    def n_subjects(self) -> int:
        return len(self.subject_ids)

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    @property
    def n_classes(self) -> int:
        if self.labels is None:
            return 0
        return len(self.class_names) or int(self.labels.max())

    @classmethod
    def from_observations(cls, observations: Iterable[Observation], n_features: int,
                          labels: dict | None = None, time_domain=None,
                          feature_names: Sequence[str] | None = None) -> "FunctionalDataSet":
        obs = list(observations)
        subject_ids = tuple(dict.fromkeys(o.subject_id for o in obs))
        pos = {s: i for i, s in enumerate(subject_ids)}
        time = np.array([o.time for o in obs], dtype=float)
        if time_domain is None:
            time_domain = (float(time.min()), float(time.max()))
        lab = None
        if labels is not None:
            lab = np.array([labels[s] for s in subject_ids], dtype=int)
        names = tuple(feature_names) if feature_names is not None else tuple(str(j) for j in range(n_features))
        return cls(subject_ids=subject_ids, feature_names=names,
                   subject=np.array([pos[o.subject_id] for o in obs], dtype=int),
                   time=time,
                   feature=np.array([o.feature_index for o in obs], dtype=int),
                   value=np.array([o.value for o in obs], dtype=float),
                   time_domain=tuple(float(v) for v in time_domain), labels=lab)

    @classmethod
    def from_tensor(cls, X, times, labels=None, subject_ids=None, feature_names=None,
                    class_names=()) -> "FunctionalDataSet":
        """Wrap a dense n x p x T array; NaN entries are treated as unobserved."""
        X = np.asarray(X, dtype=float)
        n, p, T = X.shape
        times = np.asarray(times, dtype=float)
        i, j, h = np.nonzero(~np.isnan(X))
        if subject_ids is None:
            subject_ids = tuple(str(k) for k in range(n))
        if feature_names is None:
            feature_names = tuple(str(k) for k in range(p))
        return cls(subject_ids=tuple(subject_ids), feature_names=tuple(feature_names),
                   subject=i, time=times[h], feature=j, value=X[i, j, h],
                   time_domain=(float(times.min()), float(times.max())),
                   labels=None if labels is None else np.asarray(labels, dtype=int),
                   class_names=tuple(class_names))

    def observations(self):
        for s, t, f, v in zip(self.subject, self.time, self.feature, self.value):
            yield Observation(self.subject_ids[s], float(t), int(f), float(v))

    def subject_table(self, i: int):
        """Observed times of subject ``i`` and the matching times x p value table (NaN = missing)."""
        mask = self.subject == i
        t = self.time[mask]
        times, inv = np.unique(t, return_inverse=True)
        table = np.full((times.size, self.n_features), np.nan)
        table[inv, self.feature[mask]] = self.value[mask]
        return times, table

    def n_timepoints(self) -> np.ndarray:
        """Distinct observation times per subject."""
        pairs = np.unique(np.column_stack([self.subject, self.time]), axis=0)
        return np.bincount(pairs[:, 0].astype(int), minlength=self.n_subjects)

    def select_features(self, keep) -> "FunctionalDataSet":
        keep = np.asarray(keep, dtype=int)
        remap = np.full(self.n_features, -1)
        remap[keep] = np.arange(keep.size)
        m = remap[self.feature] >= 0
        return FunctionalDataSet(self.subject_ids, tuple(self.feature_names[k] for k in keep),
                                 self.subject[m], self.time[m], remap[self.feature[m]],
                                 self.value[m], self.time_domain, self.labels, self.class_names)

    def with_values(self, value) -> "FunctionalDataSet":
        return FunctionalDataSet(self.subject_ids, self.feature_names, self.subject, self.time,
                                 self.feature, value, self.time_domain, self.labels,
                                 self.class_names)


@dataclass(frozen=True)
class SplineBasis:
    """B-spline family on ``domain`` with the given interior knots."""

    domain: tuple
    interior_knots: tuple = ()
    degree: int = 3

    def __post_init__(self):
        a, b = (float(v) for v in self.domain)
        object.__setattr__(self, "domain", (a, b))
        knots = tuple(float(k) for k in self.interior_knots)
        object.__setattr__(self, "interior_knots", knots)
        if self.degree < 0:
            raise ValueError("degree must be >= 0")
        if not a < b:
            raise ValueError("time domain must have positive length")
        if any(k <= a or k >= b for k in knots):
            raise ValueError("interior knots must lie strictly inside the domain")
        if any(k2 <= k1 for k1, k2 in zip(knots, knots[1:])):
            raise ValueError("interior knots must be strictly increasing")

    @classmethod
    def uniform(cls, domain, n_interior: int = 4, degree: int = 3) -> "SplineBasis":
        a, b = domain
        knots = np.linspace(a, b, n_interior + 2)[1:-1]
        return cls((a, b), tuple(knots), degree)

    @property
    def m(self) -> int:
        return self.degree + 1 + len(self.interior_knots)

    @property
    def knots(self) -> np.ndarray:
        a, b = self.domain
        k = self.degree + 1
        return np.r_[[a] * k, self.interior_knots, [b] * k]


def evaluate_basis(basis: SplineBasis, times) -> np.ndarray:
    """Basis values at ``times`` as a len(times) x m matrix.

    Rows sum to one (partition of unity) everywhere on the closed domain.
    """
    t = np.atleast_1d(np.asarray(times, dtype=float))
    a, b = basis.domain
    if t.size and (np.any(t < a) or np.any(t > b) or np.any(~np.isfinite(t))):
        raise DomainError(f"times outside the basis domain [{a}, {b}]")
    if t.size == 0:
        return np.zeros((0, basis.m))
    return BSpline.design_matrix(t, basis.knots, basis.degree).toarray()


def fit_subject(basis: SplineBasis, times, values, subject_id=None) -> np.ndarray:
    """Least-squares spline coefficients for one subject.

    Parameters
    ----------
    times : array of shape (k,)
        Observation times of the subject.
    values : array of shape (k,) or (k, p)
        Observed values; NaN marks a feature that was not measured at that
        time, in which case the feature is fitted on its available times only.

    Returns
    -------
    ndarray of shape (m, p)
        Rank-deficient per-feature designs get the minimum-norm solution.
    """
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    n_distinct = np.unique(times).size
    if n_distinct < basis.m:
        raise InsufficientDataError(
            f"subject {subject_id!r} has {n_distinct} distinct time points, needs at least {basis.m}",
            subject_id=subject_id)
    B = evaluate_basis(basis, times)
    observed = ~np.isnan(values)
    coef = np.zeros((basis.m, values.shape[1]))
    if observed.all():
        coef[:] = np.linalg.lstsq(B, values, rcond=None)[0]
        return coef
    # features sharing a missingness pattern share one solve
    patterns, inverse = np.unique(observed.T, axis=0, return_inverse=True)
    for k, rows in enumerate(patterns):
        cols = np.flatnonzero(inverse.ravel() == k)
        if rows.any():
            coef[:, cols] = np.linalg.lstsq(B[rows], values[np.ix_(rows, cols)], rcond=None)[0]
    return coef


def default_grid(time_domain) -> np.ndarray:
    """Integer grid 1..floor(end) restricted to the domain (weekly evaluation)."""
    a, b = time_domain
    grid = np.arange(max(1, math.ceil(a)), math.floor(b) + 1, dtype=float)
    if grid.size == 0:
        grid = np.arange(math.ceil(a), math.floor(b) + 1, dtype=float)
    if grid.size == 0:
        grid = np.array([a, b], dtype=float)
    return grid


@dataclass(frozen=True)
class SplineModel:
    basis: SplineBasis
    subject_ids: tuple
    coefficients: np.ndarray  # n x m x p
    grid: np.ndarray
    labels: np.ndarray | None = None
    feature_names: tuple = ()
    phi_grid: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "coefficients", _frozen(self.coefficients, float))
        object.__setattr__(self, "grid", _frozen(self.grid, float))
        if self.labels is not None:
            object.__setattr__(self, "labels", _frozen(self.labels, int))
        object.__setattr__(self, "phi_grid", _frozen(evaluate_basis(self.basis, self.grid)))

    @property
    def n_subjects(self) -> int:
        return self.coefficients.shape[0]

    @property
    def n_features(self) -> int:
        return self.coefficients.shape[2]

    def curves(self) -> np.ndarray:
        """Fitted curves on the evaluation grid, shape n x p x T."""
        return np.einsum("tm,imp->ipt", self.phi_grid, self.coefficients)

    def evaluate(self, i: int, times) -> np.ndarray:
        """Fitted values of subject ``i`` at arbitrary times, shape len(times) x p."""
        return evaluate_basis(self.basis, times) @ self.coefficients[i]


class Exclusion(NamedTuple):
    subject_id: str
    reason: str


def smooth_dataset(data: FunctionalDataSet, basis: SplineBasis | None = None,
                   min_timepoints: int = 8, grid=None) -> tuple[SplineModel, list[Exclusion]]:
    """Fit every subject with enough distinct time points.

    A subject is retained when it has at least ``max(min_timepoints, m)``
    distinct observation times.  The default basis is cubic with 4 equally
    spaced interior knots over the pooled observed time range.
    """
    if basis is None:
        basis = SplineBasis.uniform((float(data.time.min()), float(data.time.max())))
    if min_timepoints < basis.m:
        warnings.warn(f"min_timepoints={min_timepoints} is below the basis size m={basis.m}; "
                      f"using {basis.m}", stacklevel=2)
    elif min_timepoints == basis.m:
        warnings.warn(f"min_timepoints equals the basis size m={basis.m}; fits interpolate "
                      "noise for subjects at the minimum", stacklevel=2)
    need = max(min_timepoints, basis.m)
    grid = default_grid(basis.domain) if grid is None else np.asarray(grid, dtype=float)

    counts = data.n_timepoints()
    kept, coefs, exclusions = [], [], []
    for i, sid in enumerate(data.subject_ids):
        if counts[i] < need:
            exclusions.append(Exclusion(sid, f"{counts[i]} distinct time points < {need}"))
            continue
        times, table = data.subject_table(i)
        coefs.append(fit_subject(basis, times, table, subject_id=sid))
        kept.append(i)
    if not kept:
        raise EmptyModelError("no subject has enough time points for the spline fit")
    labels = None if data.labels is None else data.labels[kept]
    model = SplineModel(basis, tuple(data.subject_ids[i] for i in kept), np.stack(coefs),
                        grid, labels, tuple(data.feature_names))
    return model, exclusions


def smooth_tensor(X, times, basis: SplineBasis | None = None) -> np.ndarray:
    """Spline-smooth a dense n x p x T tensor observed on ``times`` and evaluate it there."""
    X = np.asarray(X, dtype=float)
    times = np.asarray(times, dtype=float)
    if basis is None:
        basis = SplineBasis.uniform((times.min(), times.max()))
    B = evaluate_basis(basis, times)
    if np.isnan(X).any():
        out = np.empty_like(X)
        for i in range(X.shape[0]):
            out[i] = (B @ fit_subject(basis, times, X[i].T, subject_id=i)).T
        return out
    # hat matrix shared by every subject and feature
    H = B @ np.linalg.pinv(B)
    return np.einsum("st,ipt->ips", H, X)


class Standardized(NamedTuple):
    X: np.ndarray
    mean: np.ndarray
    sd: np.ndarray
    zero_variance: np.ndarray


def standardize(X, mean=None, sd=None) -> Standardized:
    """Center and scale an n x p x T tensor per (feature, time) slice.

    Uses the sample standard deviation (divisor n - 1).  Slices with zero
    spread are centered only and flagged.  Passing ``mean`` and ``sd`` applies
    previously estimated statistics (e.g. from a training set).
    """
    X = np.asarray(X, dtype=float)
    if mean is None:
        if X.shape[0] < 2:
            raise DataError("standardization needs at least two subjects")
        mean = X.mean(axis=0)
        raw = X.std(axis=0, ddof=1)
        scale = np.maximum(np.abs(mean), 1.0)
        zero = raw <= 1e-12 * scale
        sd = np.where(zero, 1.0, raw)
    else:
        mean = np.asarray(mean, dtype=float)
        sd = np.asarray(sd, dtype=float)
        zero = sd == 0
        sd = np.where(zero, 1.0, sd)
    return Standardized((X - mean) / sd, mean, sd, zero)


def read_long_csv(path, feature_map_path=None, time_domain=None) -> FunctionalDataSet:
    """Read ``subject_id,time,feature,value[,class]`` rows.

    Feature names get indices in first-seen order; the mapping is written to
    ``feature_map_path`` when given.  Class labels are coded 1..G in sorted
    order of their names.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        required = ["subject_id", "time", "feature", "value"]
        missing = [c for c in required if c not in header]
        if missing:
            raise DataError(f"{path}: missing columns {missing}")
        has_class = "class" in header
        features, subjects, classes = {}, {}, {}
        rows = []
        for lineno, row in enumerate(reader, start=2):
            try:
                t = float(row["time"])
                v = float(row["value"])
            except (TypeError, ValueError):
                raise DataError(f"{path}:{lineno}: non-numeric time or value") from None
            sid = row["subject_id"]
            subjects.setdefault(sid, len(subjects))
            j = features.setdefault(row["feature"], len(features))
            if has_class and row["class"] not in ("", None):
                prev = classes.setdefault(sid, row["class"])
                if prev != row["class"]:
                    raise DataError(f"{path}:{lineno}: subject {sid} changes class")
            rows.append((subjects[sid], t, j, v))
    if not rows:
        raise DataError(f"{path}: no observations")
    arr = np.array(rows, dtype=float)
    labels, class_names = None, ()
    if has_class and classes:
        if len(classes) != len(subjects):
            raise DataError(f"{path}: some subjects have no class")
        class_names = tuple(sorted(set(classes.values()), key=_natural_key))
        code = {c: k + 1 for k, c in enumerate(class_names)}
        labels = np.array([code[classes[s]] for s in subjects], dtype=int)
    if time_domain is None:
        time_domain = (float(arr[:, 1].min()), float(arr[:, 1].max()))
    data = FunctionalDataSet(tuple(subjects), tuple(features), arr[:, 0].astype(int), arr[:, 1],
                             arr[:, 2].astype(int), arr[:, 3], tuple(time_domain), labels,
                             class_names)
    if feature_map_path is not None:
        write_feature_map(feature_map_path, data.feature_names)
    return data


def _natural_key(s):
    try:
        return (0, float(s), "")
    except ValueError:
        return (1, 0.0, s)


def write_feature_map(path, feature_names):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["feature_index", "feature"])
        for j, name in enumerate(feature_names):
            w.writerow([j, name])


def write_long_csv(path, data: FunctionalDataSet):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        has_class = data.labels is not None
        w.writerow(["subject_id", "time", "feature", "value"] + (["class"] if has_class else []))
        order = np.lexsort((data.feature, data.time, data.subject))
        for k in order:
            s = data.subject[k]
            row = [data.subject_ids[s], fmt(data.time[k]), data.feature_names[data.feature[k]],
                   fmt(data.value[k])]
            if has_class:
                code = data.labels[s]
                row.append(data.class_names[code - 1] if data.class_names else code)
            w.writerow(row)


def fmt(x) -> str:
    """Float formatting used by every CSV writer: 17 significant digits."""
    return format(float(x), ".17g")
