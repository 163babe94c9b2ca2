"""Non-sparse functional LDA.

The generalized problem S_b beta = lambda S_p beta is solved through the
symmetric matrix M = S_p^{-1/2} S_b S_p^{-1/2}: its eigenvectors gamma map
back to discriminants beta = S_p^{-1/2} gamma.  When there are fewer subjects
than coordinates the problem is first rotated onto the row space of the
centered data, which is exact for a ridge-regularized S_p.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateScatterError
from .scatter import between_scatter, class_means, within_scatter

EIG_FLOOR = 1e-12


@dataclass(frozen=True)
class Whitener:
    """Symmetric inverse square root of S_p + ridge * I.

    ``basis`` (d x r, orthonormal columns) and ``scales`` hold the retained
    eigen-directions; the orthogonal complement is multiplied by
    ``complement`` (zero when those directions were truncated).
    """

    basis: np.ndarray
    scales: np.ndarray
    complement: float = 0.0

    @property
    def dim(self) -> int:
        return self.basis.shape[0]

    def apply(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        coords = self.basis.T @ v
        out = self.basis @ (self.scales[:, None] * coords if v.ndim > 1 else self.scales * coords)
        if self.complement:
            out = out + self.complement * (v - self.basis @ coords)
        return out

    def matrix(self) -> np.ndarray:
        return self.apply(np.eye(self.dim))


@dataclass(frozen=True)
class EigenSolution:
    """Leading eigenpairs of M, in descending eigenvalue order.

    ``gamma`` and ``beta`` hold one column per component; ``m_gamma`` is
    M @ gamma, the target of the sparse program.
    """

    eigenvalues: np.ndarray
    gamma: np.ndarray
    beta: np.ndarray
    m_gamma: np.ndarray
    whitener: Whitener
    ridge: float = 0.0


def whiten(S_p, ridge: float = 0.0) -> Whitener:
    """Whitener for S_p + ridge * I; eigenvalues below 1e-12 of the largest are dropped."""
    S_p = np.asarray(S_p, dtype=float)
    if not np.any(S_p):
        raise DegenerateScatterError("within-class scatter is identically zero")
    S = 0.5 * (S_p + S_p.T) + ridge * np.eye(S_p.shape[0])
    vals, vecs = np.linalg.eigh(S)
    top = vals[-1]
    if top <= 0:
        raise DegenerateScatterError("within-class scatter has no positive eigenvalue")
    keep = vals > EIG_FLOOR * top
    return Whitener(vecs[:, keep], 1.0 / np.sqrt(vals[keep]))


def fix_signs(V) -> np.ndarray:
    """Flip columns so the first non-negligible coordinate is positive."""
    V = np.array(V, dtype=float, copy=True)
    for k in range(V.shape[1]):
        col = V[:, k]
        big = np.abs(col) > 1e-12 * max(np.abs(col).max(), 1e-300)
        if big.any() and col[np.argmax(big)] < 0:
            V[:, k] = -col
    return V


def _order(vals, vecs):
    """Descending eigenvalues; numerically tied ones ordered lexicographically by vector."""
    idx = list(np.argsort(-vals, kind="stable"))
    scale = max(1.0, float(np.abs(vals).max()) if vals.size else 1.0)
    out, i = [], 0
    while i < len(idx):
        j = i + 1
        while j < len(idx) and abs(vals[idx[j]] - vals[idx[i]]) <= 1e-12 * scale:
            j += 1
        group = idx[i:j]
        group.sort(key=lambda c: tuple(np.round(vecs[:, c], 12)), reverse=True)
        out.extend(group)
        i = j
    return np.asarray(out, dtype=int)


def _check_components(n_components, n_classes, dim):
    if n_components < 1:
        raise ValueError("n_components must be >= 1")
    if n_classes is not None and n_components > max(n_classes - 1, 1):
        raise ValueError(f"n_components={n_components} exceeds G - 1 = {n_classes - 1}")
    if n_components > dim:
        raise ValueError("n_components exceeds the problem dimension")


def solve_nonsparse(S_b, S_p, n_components: int = 1, ridge: float = 0.0,
                    n_classes: int | None = None) -> EigenSolution:
    """Leading eigenpairs of S_p^{-1/2} S_b S_p^{-1/2} with S_p regularized by ``ridge``."""
    S_b = np.asarray(S_b, dtype=float)
    _check_components(n_components, n_classes, S_b.shape[0])
    W = whiten(S_p, ridge)
    Wm = W.matrix()
    M = Wm @ S_b @ Wm
    M = 0.5 * (M + M.T)
    vals, vecs = np.linalg.eigh(M)
    vecs = fix_signs(vecs)
    order = _order(vals, vecs)[:n_components]
    gamma = vecs[:, order]
    return EigenSolution(vals[order], gamma, Wm @ gamma, M @ gamma, W, float(ridge))


def _data_scatter(Z, labels):
    """Scatter operators of an n x d data matrix (each row one subject)."""
    coef = Z[:, None, :]
    means = class_means(coef, labels)
    one = np.ones((1, 1))
    return between_scatter(means, one), within_scatter(coef, labels, means, one)


def solve_reduced(Z, labels, n_components: int = 1, ridge: float | None = None,
                  n_classes: int | None = None) -> EigenSolution:
    """Same answer as :func:`solve_nonsparse` on the data's scatter, via an n-dimensional problem.

    ``Z`` is the n x d data matrix.  Both operators live in the span of the
    centered rows, so with V an orthonormal basis of that span the problem
    reduces to V^T S V, and solutions lift back as V @ solution.  ``ridge``
    is the absolute ridge of the d-dimensional problem (default
    1e-6 trace(S_p) / d).
    """
    Z = np.asarray(Z, dtype=float)
    n, d = Z.shape
    _check_components(n_components, n_classes, d)
    centered = Z - Z.mean(axis=0)
    U, s, Vt = np.linalg.svd(centered, full_matrices=False)
    tol = s[0] * max(n, d) * np.finfo(float).eps if s.size else 0.0
    r = int((s > tol).sum())
    if r == 0:
        raise DegenerateScatterError("data have no spread")
    R = U[:, :r] * s[:r]
    V = Vt[:r].T
    S_b, S_p = _data_scatter(R, labels)
    if ridge is None:
        ridge = 1e-6 * np.trace(S_p) / d
    k = min(n_components, r)
    red = solve_nonsparse(S_b, S_p, k, ridge)
    W = Whitener(V @ red.whitener.basis, red.whitener.scales,
                 1.0 / np.sqrt(ridge) if ridge > 0 else 0.0)
    gamma = V @ red.gamma
    # sign convention applies to the lifted vector
    flips = np.where(np.all(fix_signs(gamma) == gamma, axis=0), 1.0, -1.0)
    return EigenSolution(red.eigenvalues, gamma * flips, (V @ red.beta) * flips,
                         (V @ red.m_gamma) * flips, W, float(ridge))


def solve_data(Z, labels, n_components: int = 1, ridge: float | None = None,
               n_classes: int | None = None) -> EigenSolution:
    """Non-sparse solution from a data matrix, reducing when n < d."""
    Z = np.asarray(Z, dtype=float)
    n, d = Z.shape
    if n < d:
        return solve_reduced(Z, labels, n_components, ridge, n_classes)
    S_b, S_p = _data_scatter(Z, labels)
    if ridge is None:
        ridge = 1e-6 * np.trace(S_p) / d
    return solve_nonsparse(S_b, S_p, n_components, ridge, n_classes)


def solve_per_time(X, labels, n_components: int = 1, ridge: float | None = None,
                   n_classes: int | None = None, threads: int = 1) -> list[EigenSolution]:
    """Time-independent mode: one p-dimensional problem per grid time of an n x p x T tensor.

    The default ridge is shared by all time points (1e-6 times the mean
    diagonal of the block-diagonal S_p).
    """
    X = np.asarray(X, dtype=float)
    n, p, T = X.shape
    if ridge is None:
        means = class_means(X.transpose(0, 2, 1), labels)
        S_blocks = within_scatter(X.transpose(0, 2, 1), labels, means, np.eye(T), "time_independent")
        ridge = 1e-6 * np.einsum("tpp->", S_blocks) / (p * T)

    def one(h):
        return solve_data(X[:, :, h], labels, n_components, ridge, n_classes)

    if threads > 1 and T > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(one, range(T)))
    return [one(h) for h in range(T)]


def deflate(Z, prior) -> np.ndarray:
    """Project the rows of ``Z`` (n x d) onto the orthogonal complement of ``prior``.

    ``prior`` is a d-vector, a d x k matrix, or a list of d-vectors.  An empty
    set leaves the data unchanged.
    """
    Z = np.asarray(Z, dtype=float)
    if prior is None:
        return Z.copy()
    B = np.asarray(prior, dtype=float)
    if B.size == 0:
        return Z.copy()
    if isinstance(prior, (list, tuple)):
        B = np.column_stack(B)
    elif B.ndim == 1:
        B = B[:, None]
    if np.any(np.linalg.norm(B, axis=0) == 0):
        raise ValueError("cannot deflate by a zero discriminant")
    Q, _ = np.linalg.qr(B)
    return Z - (Z @ Q) @ Q.T
