"""Synthetic multivariate functional data with known discriminating features.

Every feature j has a shared base curve

    f_j(t) = eta_0 + eta_1 t + ... + eta_4 t^4 + eta_5 sin(eta_6 t)

where the polynomial is a least-squares quartic through six random points on
[0, 10] and eta_5 is its range over the grid.  Signal features add a group
shift lambda_g * delta_g inside a separation window; optionally each subject
gets a random two-basis temporal effect.  Random draws for feature j come
from a stream keyed by (seed, j), so output does not depend on how features
are processed.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .fd_model import FunctionalDataSet, fmt

SCENARIOS = ("all_time", "window_5_15", "random_window_len10",
             "random_window_random_len", "window_5_15_with_ste")


@dataclass(frozen=True)
class SimConfig:
    n_per_group: tuple = (50, 50)
    p: int = 60
    T: int = 40
    sigma: float = 25.0
    delta: tuple | None = None
    signal_fraction: float = 0.10
    scenario: str = "all_time"
    rho: float | None = None
    seed: int = 0
    disjoint_signals: bool = False
    keep_rate: float = 1.0

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ValueError(f"unknown scenario {self.scenario!r}")
        if self.T < 2:
            raise ValueError("T must be at least 2")
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")
        if len(self.n_per_group) < 2 or min(self.n_per_group) < 1:
            raise ValueError("need at least two nonempty groups")
        if not 0 < self.keep_rate <= 1:
            raise ValueError("keep_rate must lie in (0, 1]")
        if self.disjoint_signals and self.n_groups != 3:
            raise ValueError("disjoint_signals needs exactly three groups")
        if self.delta is not None and len(self.delta) != self.n_groups:
            raise ValueError("one delta per group is required")

    @property
    def n_groups(self) -> int:
        return len(self.n_per_group)

    @property
    def group_delta(self) -> np.ndarray:
        if self.delta is not None:
            return np.asarray(self.delta, dtype=float)
        return 500.0 * np.arange(self.n_groups)

    @property
    def ste_weight(self) -> float:
        if self.rho is not None:
            return float(self.rho)
        return 1.0 if self.scenario == "window_5_15_with_ste" else 0.0

    @property
    def n_signal(self) -> int:
        return int(round(self.p * self.signal_fraction))


@dataclass(frozen=True)
class GroundTruth:
    """Signal features with their separation windows (1-based, inclusive) and group signs."""

    signal: np.ndarray
    windows: np.ndarray        # n_signal x 2
    signs: np.ndarray          # n_signal x G, lambda per group
    second_signal: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))

    @property
    def all_signal(self) -> np.ndarray:
        return np.union1d(self.signal, self.second_signal)


def base_curve_params(rng: np.random.Generator, T: int = 40) -> np.ndarray:
    """Draw (eta_0, ..., eta_6) for one feature."""
    x = np.r_[0.0, rng.uniform(0, 10, 4), 10.0]
    y = rng.uniform(50, 100, 6)
    poly = np.polynomial.polynomial.polyfit(x, y, 4)
    t = np.arange(1, T + 1, dtype=float)
    vals = np.polynomial.polynomial.polyval(t, poly)
    eta5 = vals.max() - vals.min()
    eta6 = rng.uniform(0, 10)
    return np.r_[poly, eta5, eta6]


def base_curve(eta, t) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    return np.polynomial.polynomial.polyval(t, eta[:5]) + eta[5] * np.sin(eta[6] * t)


def scenario_window(scenario: str, rng: np.random.Generator, T: int = 40) -> tuple[int, int]:
    """Separation window [t_a, t_b] (inclusive, on the 1..T grid) for one signal feature."""
    if scenario == "all_time":
        return 1, T
    if scenario in ("window_5_15", "window_5_15_with_ste"):
        return 5, min(15, T)
    if scenario == "random_window_len10":
        length = min(10, T)
    elif scenario == "random_window_random_len":
        length = min(int(rng.integers(5, 41)), T)
    else:
        raise ValueError(f"unknown scenario {scenario!r}")
    start = int(rng.integers(1, T - length + 2))
    return start, start + length - 1


def temporal_basis(t) -> np.ndarray:
    """psi_1, psi_2 of the subject-specific temporal effect, shape 2 x len(t)."""
    t = np.asarray(t, dtype=float)
    return np.vstack([-2.0 * np.cos(np.pi * (t - 0.5)), np.sin(np.pi * (t - 0.5))])


def _signs(rng, G):
    lam = np.ones(G)
    lam[1:] = rng.choice([-1.0, 1.0], size=G - 1)
    return lam


def generate(cfg: SimConfig):
    """Simulate one data set.

    Returns
    -------
    X : ndarray, n x p x T
        Observed curves on t = 1..T (NaN where thinned by ``keep_rate``).
    labels : ndarray of int, class codes 1..G (group 1 first).
    truth : GroundTruth
    """
    G, p, T = cfg.n_groups, cfg.p, cfg.T
    t = np.arange(1, T + 1, dtype=float)
    labels = np.repeat(np.arange(1, G + 1), cfg.n_per_group)
    n = labels.size
    n_sig = cfg.n_signal
    if cfg.disjoint_signals:
        first = np.arange(n_sig)
        second = np.arange(n_sig, min(2 * n_sig, p))
    else:
        first = np.arange(n_sig)
        second = np.zeros(0, dtype=int)
    delta = cfg.group_delta
    psi = temporal_basis(t)
    rho = cfg.ste_weight

    X = np.empty((n, p, T))
    windows, signs = [], []
    for j in range(p):
        rng = np.random.default_rng([cfg.seed, j])
        eta = base_curve_params(rng, T)
        lam = _signs(rng, G)
        window = scenario_window(cfg.scenario, rng, T)
        noise = rng.normal(0.0, cfg.sigma, size=(n, T)) if cfg.sigma > 0 else np.zeros((n, T))
        xi = rng.normal(size=(n, 2))
        curve = base_curve(eta, t)[None, :] + noise
        if rho:
            curve = curve + rho * xi @ psi
        is_first, is_second = j in first, j in second
        if is_first or is_second:
            if cfg.disjoint_signals:
                # set 1 splits group 1 from 2 and 3; set 2 splits group 2 from 3 and 1
                # one sign per feature keeps the two merged groups together
                base = np.array([0.0, 500.0, 500.0]) if is_first else np.array([500.0, 0.0, 500.0])
                lam = np.full(G, lam[1])
                shift = lam * base
            else:
                shift = lam * delta
            inside = (t >= window[0]) & (t <= window[1])
            curve = curve + np.outer(shift[labels - 1], inside)
            windows.append(window)
            signs.append(lam)
        X[:, j, :] = curve

    if cfg.keep_rate < 1:
        rng = np.random.default_rng([cfg.seed, p, 1])
        drop = rng.random((n, T)) >= cfg.keep_rate
        X[np.broadcast_to(drop[:, None, :], X.shape)] = np.nan

    truth = GroundTruth(first, np.asarray(windows, dtype=int).reshape(-1, 2),
                        np.asarray(signs).reshape(-1, G), second)
    return X, labels, truth


def holdout_split(labels, n_train_per_group):
    """Indices of the first ``n_train_per_group[g]`` subjects of each group, and the rest.

    Simulated subjects are exchangeable within a group, so the split needs no shuffling.
    """
    labels = np.asarray(labels)
    train = []
    for g, k in enumerate(np.unique(labels)):
        members = np.flatnonzero(labels == k)
        if n_train_per_group[g] >= members.size:
            raise ValueError(f"group {k} has no subjects left for testing")
        train.extend(members[:n_train_per_group[g]].tolist())
    train = np.array(sorted(train))
    test = np.setdiff1d(np.arange(labels.size), train)
    return train, test


def to_dataset(X, labels, prefix: str = "s") -> FunctionalDataSet:
    n, p, T = X.shape
    width = len(str(p - 1))
    return FunctionalDataSet.from_tensor(
        X, np.arange(1, T + 1), labels,
        subject_ids=[f"{prefix}{i:04d}" for i in range(n)],
        feature_names=[f"f{j:0{width}d}" for j in range(p)],
        class_names=[str(k) for k in range(1, int(labels.max()) + 1)])


def write_truth(path, truth: GroundTruth, feature_names):
    rows = []
    for k, j in enumerate(truth.signal):
        rows.append((feature_names[j], 1, *truth.windows[k]))
    for k, j in enumerate(truth.second_signal):
        rows.append((feature_names[j], 2, *truth.windows[len(truth.signal) + k]))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["feature", "signal_set", "t_start", "t_end"])
        for r in rows:
            w.writerow([r[0], r[1], fmt(r[2]), fmt(r[3])])


def read_truth(path) -> set:
    with open(path, newline="", encoding="utf-8") as fh:
        return {row["feature"] for row in csv.DictReader(fh)}
