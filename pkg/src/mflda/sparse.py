"""Sparse discriminant vectors and feature selection.

The sparse program

    minimize ||gamma||_1  subject to  ||b - lam * gamma||_inf <= tau,

with b = M gamma_tilde, separates over coordinates, so its minimizer is the
soft threshold sign(b_i) max(|b_i| - tau, 0) / lam.  Time-dependent mode
solves one pT-dimensional program; time-independent mode solves one
p-dimensional program per grid time.  In both cases the fit is repeated on
the surviving coordinates until the active set stops changing.
"""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateEigenvalueError
from .fd_model import fmt
from .lda_core import EigenSolution, deflate, fix_signs, solve_data, solve_per_time
from .scatter import TIME_DEPENDENT, TIME_INDEPENDENT, check_mode, flatten_curves, unflatten

NONZERO = 1e-12
SELECTIVITY = 0.70


@dataclass(frozen=True)
class SparseProblem:
    target: np.ndarray
    scale: float
    tau: float

    def __post_init__(self):
        object.__setattr__(self, "target", np.asarray(self.target, dtype=float))
        if not self.scale > 0:
            raise DegenerateEigenvalueError(f"eigenvalue must be positive, got {self.scale}")
        if self.tau < 0:
            raise ValueError("tau must be >= 0")
        if not np.all(np.isfinite(self.target)):
            raise ValueError("target vector must be finite")


@dataclass(frozen=True)
class SparseSolution:
    gamma: np.ndarray
    active_set: np.ndarray
    feasibility_gap: float


def soft_threshold(b, tau):
    b = np.asarray(b, dtype=float)
    return np.sign(b) * np.maximum(np.abs(b) - tau, 0.0)


def solve_sparse(problem: SparseProblem) -> SparseSolution:
    b, lam, tau = problem.target, problem.scale, problem.tau
    gamma = soft_threshold(b, tau) / lam
    gap = float(np.max(np.abs(b - lam * gamma), initial=0.0) - tau)
    if gap > 1e-8 * max(1.0, float(np.abs(b).max(initial=0.0))):
        raise ArithmeticError(f"soft-threshold solution infeasible by {gap}")
    return SparseSolution(gamma, np.flatnonzero(np.abs(gamma) > NONZERO), gap)


@dataclass(frozen=True)
class SelectionProfile:
    """Per-time sparse discriminant matrix (p x T) and the features it selects."""

    gamma: np.ndarray
    selectivity: np.ndarray
    selected: np.ndarray
    threshold: float = SELECTIVITY

    @property
    def sparsity(self) -> float:
        """Fraction of features selected."""
        return self.selected.size / self.gamma.shape[0]


def selectivity(gamma, threshold: float = SELECTIVITY) -> SelectionProfile:
    """Select features that are nonzero at a fraction >= ``threshold`` of time points."""
    if not 0 < threshold <= 1:
        raise ValueError("selectivity threshold must lie in (0, 1]")
    gamma = np.asarray(gamma, dtype=float)
    if gamma.ndim == 1:
        gamma = gamma[:, None]
    rates = (np.abs(gamma) > NONZERO).mean(axis=1)
    # tolerate rounding in count / T at the inclusive boundary
    selected = np.flatnonzero(rates >= threshold - 1e-12)
    return SelectionProfile(gamma, rates, selected, threshold)


@dataclass(frozen=True)
class NonsparseFit:
    """Non-sparse solutions per component.

    Each block pairs an EigenSolution with B, the whitened class-mean
    deviations of the (deflated) data it came from, so that M = B B^T.
    Time-dependent: ``blocks[c]`` is a single (B, EigenSolution).
    Time-independent: ``blocks[c]`` lists one (B, EigenSolution) per time.
    """

    mode: str
    p: int
    T: int
    labels: np.ndarray
    blocks: list

    @property
    def n_components(self) -> int:
        return len(self.blocks)

    def eigenvalues(self) -> np.ndarray:
        return np.array([[sol.eigenvalues[0] for _, sol in comp] for comp in self.blocks])

    def gamma_tilde(self) -> np.ndarray:
        """Non-sparse whitened vectors, C x p x T."""
        return self._stack(lambda sol: sol.gamma[:, 0])

    def beta(self) -> np.ndarray:
        return self._stack(lambda sol: sol.beta[:, 0])

    def m_gamma(self) -> np.ndarray:
        return self._stack(lambda sol: sol.m_gamma[:, 0])

    def _stack(self, get):
        out = np.empty((self.n_components, self.p, self.T))
        for c, comp in enumerate(self.blocks):
            if self.mode == TIME_DEPENDENT:
                out[c] = unflatten(get(comp[0][1]), self.p, self.T)
            else:
                for h, (_, sol) in enumerate(comp):
                    out[c, :, h] = get(sol)
        return out


def _whitened_deviations(data, sol: EigenSolution, labels) -> np.ndarray:
    """Columns sqrt(n_k) W (mean_k - mean), so that M = B B^T."""
    labels = np.asarray(labels)
    overall = data.mean(axis=0)
    cols = []
    for k in np.unique(labels):
        members = labels == k
        cols.append(np.sqrt(members.sum()) * (data[members].mean(axis=0) - overall))
    return sol.whitener.apply(np.column_stack(cols))


def _restricted_leading(B):
    """Leading eigenpair of B B^T through the small Gram matrix B^T B."""
    vals, vecs = np.linalg.eigh(B.T @ B)
    lam = vals[-1]
    if lam <= 0:
        return 0.0, np.zeros(B.shape[0])
    g = B @ vecs[:, -1] / np.sqrt(lam)
    return float(lam), fix_signs(g[:, None])[:, 0]


def fit_nonsparse(Z, labels, mode: str = TIME_DEPENDENT, n_components: int = 1,
                  ridge: float | None = None, threads: int = 1) -> NonsparseFit:
    """Leading discriminant of an n x p x T standardized tensor, then of its deflations."""
    check_mode(mode)
    Z = np.asarray(Z, dtype=float)
    labels = np.asarray(labels)
    n, p, T = Z.shape
    G = np.unique(labels).size
    if n_components > max(G - 1, 1):
        raise ValueError(f"n_components={n_components} exceeds G - 1 = {G - 1}")
    blocks = []
    if mode == TIME_DEPENDENT:
        F = flatten_curves(Z)
        for _ in range(n_components):
            sol = solve_data(F, labels, 1, ridge)
            blocks.append([(_whitened_deviations(F, sol, labels), sol)])
            F = deflate(F, sol.beta[:, 0])
    else:
        cur = Z
        for _ in range(n_components):
            sols = solve_per_time(cur, labels, 1, ridge, threads=threads)
            blocks.append([(_whitened_deviations(cur[:, :, h], s, labels), s)
                           for h, s in enumerate(sols)])
            nxt = np.empty_like(cur)
            for h, s in enumerate(sols):
                nxt[:, :, h] = deflate(cur[:, :, h], s.beta[:, 0])
            cur = nxt
    return NonsparseFit(mode, p, T, labels, blocks)


def _sparse_block(B, sol: EigenSolution, tau, max_iter):
    """Soft threshold, then re-solve on the active coordinates until the set is stable.

    The re-solve takes the leading eigenpair of the principal submatrix M_AA
    (the same whitened problem with inactive coordinates forced to zero) and
    thresholds M_AA gamma_A at the same tau.
    """
    dim = B.shape[0]
    gamma = solve_sparse(SparseProblem(sol.m_gamma[:, 0], sol.eigenvalues[0], tau)).gamma
    active = np.flatnonzero(np.abs(gamma) > NONZERO)
    it = 0
    while it < max_iter and 0 < active.size < dim:
        it += 1
        lam, g_a = _restricted_leading(B[active])
        gamma = np.zeros(dim)
        if lam > 0:
            gamma[active] = solve_sparse(SparseProblem(lam * g_a, lam, tau)).gamma
        new = np.flatnonzero(np.abs(gamma) > NONZERO)
        if np.array_equal(new, active):
            break
        active = new
    return gamma, it


@dataclass(frozen=True)
class DiscriminantSolution:
    mode: str
    tau: float
    eigenvalues: np.ndarray      # C x 1 (time-dependent) or C x T
    gamma_tilde: np.ndarray      # C x p x T
    gamma_hat: np.ndarray        # C x p x T
    profiles: list
    iterations: np.ndarray

    @property
    def selected(self) -> np.ndarray:
        """Features selected by the first discriminant."""
        return self.profiles[0].selected


def sparsify(fit: NonsparseFit, tau: float, max_iter: int = 20, threshold: float = SELECTIVITY,
             threads: int = 1) -> DiscriminantSolution:
    """Sparse discriminants at one tau from a precomputed non-sparse fit."""
    if tau < 0:
        raise ValueError("tau must be >= 0")
    C, p, T = fit.n_components, fit.p, fit.T
    gamma_hat = np.zeros((C, p, T))
    iters = []
    for c, comp in enumerate(fit.blocks):
        if fit.mode == TIME_DEPENDENT:
            B, sol = comp[0]
            try:
                g, it = _sparse_block(B, sol, tau, max_iter)
            except DegenerateEigenvalueError as exc:
                raise DegenerateEigenvalueError(f"component {c + 1}: {exc}") from exc
            gamma_hat[c] = unflatten(g, p, T)
            iters.append([it])
        else:
            def one(h, comp=comp, c=c):
                B, sol = comp[h]
                try:
                    return _sparse_block(B, sol, tau, max_iter)
                except DegenerateEigenvalueError as exc:
                    raise DegenerateEigenvalueError(
                        f"component {c + 1}, time point {h}: {exc}") from exc
            if threads > 1:
                with ThreadPoolExecutor(max_workers=threads) as pool:
                    results = list(pool.map(one, range(T)))
            else:
                results = [one(h) for h in range(T)]
            for h, (g, it) in enumerate(results):
                gamma_hat[c, :, h] = g
            iters.append([it for _, it in results])
    profiles = [selectivity(gamma_hat[c], threshold) for c in range(C)]
    return DiscriminantSolution(fit.mode, float(tau), fit.eigenvalues(), fit.gamma_tilde(),
                                gamma_hat, profiles, np.array(iters))


def sparse_discriminants(Z, labels, tau: float, mode: str = TIME_DEPENDENT, n_components: int = 1,
                         ridge: float | None = None, max_iter: int = 20,
                         threshold: float = SELECTIVITY, threads: int = 1) -> DiscriminantSolution:
    """Non-sparse fit followed by :func:`sparsify`."""
    fit = fit_nonsparse(Z, labels, mode, n_components, ridge, threads)
    return sparsify(fit, tau, max_iter, threshold, threads)


def write_selection_csv(path, profile: SelectionProfile, feature_names):
    """``feature,selectivity,mean_abs_coef,selected`` sorted by selectivity, descending."""
    mean_abs = np.abs(profile.gamma).mean(axis=1)
    chosen = np.zeros(profile.gamma.shape[0], dtype=bool)
    chosen[profile.selected] = True
    order = sorted(range(len(mean_abs)), key=lambda j: (-profile.selectivity[j], -mean_abs[j], j))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["feature", "selectivity", "mean_abs_coef", "selected"])
        for j in order:
            w.writerow([feature_names[j], fmt(profile.selectivity[j]), fmt(mean_abs[j]),
                        int(chosen[j])])


__all__ = ["SparseProblem", "SparseSolution", "SelectionProfile", "NonsparseFit",
           "DiscriminantSolution", "solve_sparse", "soft_threshold", "selectivity",
           "fit_nonsparse", "sparsify", "sparse_discriminants", "write_selection_csv",
           "TIME_DEPENDENT", "TIME_INDEPENDENT"]
