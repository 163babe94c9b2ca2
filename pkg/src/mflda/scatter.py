"""Between-class and pooled within-class scatter of spline curves.

Vectors in R^{pT} are laid out time-major: entry ``h * p + j`` belongs to
feature j at grid time t_h.  With that layout the time-independent operators
are literally block diagonal, one p x p block per time point.
"""

from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DataError, DegenerateClassError, NonEstimableError

TIME_DEPENDENT = "time_dependent"
TIME_INDEPENDENT = "time_independent"
MODES = (TIME_DEPENDENT, TIME_INDEPENDENT)
MAX_DENSE_DIM = 20_000


def check_mode(mode: str) -> str:
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    return mode


def flatten_curves(X) -> np.ndarray:
    """n x p x T tensor -> n x pT matrix in time-major layout."""
    X = np.asarray(X, dtype=float)
    n, p, T = X.shape
    return X.transpose(0, 2, 1).reshape(n, T * p)


def unflatten(v, p: int, T: int) -> np.ndarray:
    """Inverse of :func:`flatten_curves` for a vector (or stack of vectors)."""
    v = np.asarray(v)
    return np.swapaxes(v.reshape(v.shape[:-1] + (T, p)), -1, -2)


def tensor_model(X):
    """Coefficients and grid basis that represent a curve tensor exactly.

    A tensor evaluated on T grid points is a spline model whose basis is the
    identity: m = T and phi(t_h) = e_h.
    """
    X = np.asarray(X, dtype=float)
    return X.transpose(0, 2, 1), np.eye(X.shape[2])


def _coefficients(model):
    return np.asarray(getattr(model, "coefficients", model), dtype=float)


@dataclass(frozen=True)
class ClassMeans:
    classes: np.ndarray       # class codes, ascending
    sizes: np.ndarray         # n_k
    class_means: np.ndarray   # G x m x p
    overall: np.ndarray       # m x p

    @property
    def n(self) -> int:
        return int(self.sizes.sum())


def class_means(model, labels, classes=None) -> ClassMeans:
    """Per-class and overall mean coefficient matrices.

    ``model`` is a SplineModel or an n x m x p coefficient array.  Passing
    ``classes`` fixes the set of expected classes; an empty one is an error.
    """
    C = _coefficients(model)
    labels = np.asarray(labels)
    if labels.shape[0] != C.shape[0]:
        raise DataError("labels do not match the number of subjects")
    present = np.unique(labels)
    classes = present if classes is None else np.asarray(classes)
    means, sizes = [], []
    for k in classes:
        members = labels == k
        if not members.any():
            raise DegenerateClassError(f"class {k} has no subjects", klass=k)
        means.append(C[members].mean(axis=0))
        sizes.append(members.sum())
    means = np.stack(means)
    sizes = np.asarray(sizes)
    overall = np.tensordot(sizes, means, axes=1) / sizes.sum()
    return ClassMeans(np.asarray(classes), sizes, means, overall)


def between_scatter(means: ClassMeans, phi_grid, mode: str = TIME_DEPENDENT) -> np.ndarray:
    """S_b = sum_k n_k A_k, built from class-mean deviation curves on the grid.

    Returns a pT x pT matrix (time-dependent) or a T x p x p stack of
    diagonal blocks (time-independent).
    """
    check_mode(mode)
    phi = np.asarray(phi_grid, dtype=float)
    dev = np.einsum("tm,gmp->gtp", phi, means.class_means - means.overall)
    w = means.sizes.astype(float)
    if mode == TIME_INDEPENDENT:
        return np.einsum("g,gtp,gtq->tpq", w, dev, dev)
    V = dev.reshape(dev.shape[0], -1)
    S = (V.T * w) @ V
    return 0.5 * (S + S.T)


def within_scatter(model, labels, means: ClassMeans, phi_grid, mode: str = TIME_DEPENDENT) -> np.ndarray:
    """Pooled within-class scatter with divisor sum_k (n_k - 1).

    Singleton classes have no within-class spread and only drop out of the
    pooling (with a warning); all-singleton input is not estimable.
    """
    check_mode(mode)
    C = _coefficients(model)
    labels = np.asarray(labels)
    phi = np.asarray(phi_grid, dtype=float)
    centered = np.empty_like(C)
    for k, mean in zip(means.classes, means.class_means):
        members = labels == k
        centered[members] = C[members] - mean
    singles = means.classes[means.sizes == 1]
    if singles.size:
        warnings.warn(f"singleton classes {singles.tolist()} contribute no within-class scatter",
                      stacklevel=2)
    dof = int((means.sizes - 1).sum())
    if dof == 0:
        raise NonEstimableError("every class is a singleton; within-class scatter is not estimable")
    dev = np.einsum("tm,imp->itp", phi, centered)
    if mode == TIME_INDEPENDENT:
        return np.einsum("itp,itq->tpq", dev, dev) / dof
    V = dev.reshape(dev.shape[0], -1)
    S = V.T @ V / dof
    return 0.5 * (S + S.T)


def default_ridge(S_p) -> float:
    """1e-6 times the average diagonal entry of S_p."""
    S_p = np.asarray(S_p)
    if S_p.ndim == 3:
        tr = np.einsum("tpp->", S_p)
        d = S_p.shape[0] * S_p.shape[1]
    else:
        tr = np.trace(S_p)
        d = S_p.shape[0]
    return 1e-6 * tr / d


@dataclass(frozen=True)
class ScatterPair:
    between: np.ndarray
    within: np.ndarray
    mode: str
    ridge: float
    p: int
    T: int

    def to_dense(self, which: str = "within") -> np.ndarray:
        S = getattr(self, which)
        if self.mode == TIME_DEPENDENT:
            return S
        p, T = self.p, self.T
        out = np.zeros((p * T, p * T))
        for h in range(T):
            out[h * p:(h + 1) * p, h * p:(h + 1) * p] = S[h]
        return out


def scatter_pair(model, labels, phi_grid=None, mode: str = TIME_DEPENDENT, ridge=None,
                 max_dim: int = MAX_DENSE_DIM) -> ScatterPair:
    """Both operators for a SplineModel (``phi_grid`` taken from it) or a coefficient array."""
    check_mode(mode)
    if phi_grid is None:
        phi_grid = model.phi_grid
    C = _coefficients(model)
    p, T = C.shape[2], np.asarray(phi_grid).shape[0]
    if mode == TIME_DEPENDENT and p * T > max_dim:
        raise ValueError(f"pT = {p * T} exceeds the dense-operator cap {max_dim}; "
                         "use time_independent mode or raise the cap")
    means = class_means(C, labels)
    S_b = between_scatter(means, phi_grid, mode)
    S_p = within_scatter(C, labels, means, phi_grid, mode)
    if ridge is None:
        ridge = default_ridge(S_p)
    return ScatterPair(S_b, S_p, mode, float(ridge), p, T)


_MAGIC = b"MFSC"
_HEADER = struct.Struct("<4sIII")


def dump_scatter(path, S, p: int, T: int, mode: str):
    """Write an operator as little-endian float64 after a 16-byte header.

    Header: magic ``MFSC``, p, T, mode flag (0 time-dependent, 1 time-independent).
    """
    flag = MODES.index(check_mode(mode))
    data = np.ascontiguousarray(S, dtype="<f8")
    expected = (p * T, p * T) if flag == 0 else (T, p, p)
    if data.shape != expected:
        raise ValueError(f"operator shape {data.shape} does not match {expected}")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, p, T, flag))
        fh.write(data.tobytes(order="C"))


def load_scatter(path):
    """Read a dump written by :func:`dump_scatter`; returns (S, p, T, mode)."""
    with open(path, "rb") as fh:
        raw = fh.read()
    magic, p, T, flag = _HEADER.unpack_from(raw)
    if magic != _MAGIC:
        raise DataError(f"{path}: not a scatter dump")
    shape = (p * T, p * T) if flag == 0 else (T, p, p)
    S = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size).reshape(shape).copy()
    return S, p, T, MODES[flag]
