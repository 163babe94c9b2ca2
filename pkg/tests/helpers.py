"""Shared simulation runs for the slower tests."""

import numpy as np

from mflda.fd_model import smooth_tensor
from mflda.metrics import evaluate, selection_metrics
from mflda.model import prepare
from mflda.scatter import TIME_DEPENDENT
from mflda.simgen import SimConfig, generate, holdout_split
from mflda.tuning import CvConfig, tune


def simulate_and_tune(scenario, n_train, n_test, seed, mode=TIME_DEPENDENT, groups=2,
                      sigma=25.0, rho=None, p=60, T=40, cv_seed=0, smooth=True):
    """Generate train + test subjects together, tune on train, score on test.

    With ``smooth`` every curve is replaced by its cubic B-spline fit (4
    interior knots) on the same grid before anything else, as a real run does.

    Returns (classification report, (sens, spec, f1) of the selection, tuning result).
    """
    cfg = SimConfig(n_per_group=(n_train + n_test,) * groups, p=p, T=T, sigma=sigma,
                    scenario=scenario, rho=rho, seed=seed)
    X, labels, truth = generate(cfg)
    if smooth:
        X = smooth_tensor(X, np.arange(1, T + 1, dtype=float))
    train, test = holdout_split(labels, [n_train] * groups)
    prepared = prepare(X[train], labels[train], mode)
    res = tune(X[train], labels[train], mode, 0.10, CvConfig(seed=cv_seed), prepared=prepared)
    pred = res.model.predict_labels(X[test])
    report = evaluate(labels[test], pred, np.unique(labels))
    sens, spec, f1, _ = selection_metrics(res.model.selected, truth.signal, p)
    return report, (sens, spec, f1), res
