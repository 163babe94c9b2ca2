"""Command line: simulate, preprocess, fit, tune, classify, evaluate, pipeline, rerun.

Settings come from an optional key-value file (``--config``, one
``key = value`` per line, ``#`` comments) overridden by flags.  Every run
writes ``manifest.txt`` in the same format; ``mflda rerun manifest.txt``
repeats the run.  Errors go to stderr as one JSON object and set the exit
code: 2 io, 3 config, 4 numeric, 5 data.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .classify import OVERALL, TIMEWISE, ks_separation, write_predictions_csv, write_scores_csv
from .errors import EXIT_CODES, ConfigError, DataError, MfldaError
from .fd_model import (FunctionalDataSet, SplineBasis, fmt, read_long_csv, smooth_dataset,
                       write_long_csv)
from .metrics import evaluate, selection_metrics, write_report, write_report_csv
from .model import fit_at, load_classifier, prepare, save_classifier
from .preprocess import (PreprocessConfig, apply_preprocess, preprocess_dataset, read_wide_csv,
                         write_retained_manifest)
from .scatter import MODES, TIME_DEPENDENT
from .simgen import SCENARIOS, SimConfig, generate, to_dataset, write_truth
from .sparse import write_selection_csv
from .tuning import (CvConfig, cross_validate, find_tau_range, stratified_holdout,
                     write_trace_csv)

log = logging.getLogger("mflda")

COMMANDS = ("simulate", "preprocess", "fit", "tune", "classify", "evaluate", "pipeline")
STOCHASTIC = {"simulate", "tune", "pipeline"}


def _bool(s):
    if isinstance(s, bool):
        return s
    v = str(s).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _int_list(s):
    if isinstance(s, (list, tuple)):
        return tuple(int(v) for v in s)
    return tuple(int(v) for v in str(s).replace(",", " ").split())


# key -> (parser, default, commands that accept it)
KEYS = {
    "input": (str, None, {"preprocess", "fit", "tune", "classify", "evaluate", "pipeline"}),
    "output_dir": (str, None, set(COMMANDS)),
    "threads": (int, 1, set(COMMANDS)),
    "format": (str, "auto", {"preprocess", "fit", "tune", "classify", "pipeline"}),
    "seed": (int, None, {"simulate", "tune", "pipeline"}),
    # simulation
    "scenario": (str, "all_time", {"simulate"}),
    "groups": (int, 2, {"simulate"}),
    "n_per_group": (int, 50, {"simulate"}),
    "p": (int, 60, {"simulate"}),
    "T": (int, 40, {"simulate"}),
    "sigma": (float, 25.0, {"simulate"}),
    "rho": (float, None, {"simulate"}),
    "signal_fraction": (float, 0.10, {"simulate"}),
    "keep_rate": (float, 1.0, {"simulate"}),
    "disjoint_signals": (_bool, False, {"simulate"}),
    # preprocessing
    "preprocess": (_bool, False, {"pipeline"}),
    "max_zero_fraction": (float, 0.80, {"preprocess", "pipeline"}),
    "pseudo_count": (float, 1.0, {"preprocess", "pipeline"}),
    "variance_quantile_cut": (float, 0.05, {"preprocess", "pipeline"}),
    # model
    "mode": (str, TIME_DEPENDENT, {"fit", "tune", "pipeline"}),
    "tau": (float, None, {"fit", "pipeline"}),
    "selectivity": (float, 0.70, {"fit", "tune", "pipeline"}),
    "degree": (int, 3, {"fit", "tune", "pipeline"}),
    "interior_knots": (int, 4, {"fit", "tune", "pipeline"}),
    "min_timepoints": (int, 8, {"fit", "tune", "pipeline"}),
    "time_mode": (str, OVERALL, {"fit", "tune", "pipeline"}),
    "n_components": (int, None, {"fit", "tune", "pipeline"}),
    "max_iter": (int, 20, {"fit", "tune", "pipeline"}),
    # tuning
    "target_sparsity": (float, 0.10, {"tune", "pipeline"}),
    "folds": (int, 5, {"tune", "pipeline"}),
    "c_update": (float, 2.0, {"tune", "pipeline"}),
    # classification and evaluation
    "model": (str, None, {"classify"}),
    "test_input": (str, None, {"pipeline"}),
    "test_fraction": (float, 0.3, {"pipeline"}),
    "truth": (str, None, {"evaluate", "pipeline"}),
    "selection": (str, None, {"evaluate"}),
}


@dataclass(frozen=True)
class RunConfig:
    command: str
    values: dict = field(default_factory=dict)

    def __getattr__(self, name):
        values = object.__getattribute__(self, "values")
        if name in values:
            return values[name]
        raise AttributeError(name)

    def to_text(self) -> str:
        lines = [f"# mflda {__version__}", f"command = {self.command}"]
        for k in sorted(self.values):
            v = self.values[k]
            if v is None:
                continue
            if isinstance(v, bool):
                v = "true" if v else "false"
            elif isinstance(v, float):
                v = repr(v)
            lines.append(f"{k} = {v}")
        return "\n".join(lines) + "\n"


def parse_kv(text: str, source: str = "config") -> dict:
    """``key = value`` lines; blank lines and ``#`` comments are skipped."""
    out, problems = {}, []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            problems.append(f"{source}:{lineno}: expected key = value")
            continue
        k, v = (s.strip() for s in line.split("=", 1))
        out[k] = v
    if problems:
        raise ConfigError(problems)
    return out


# alternative spellings accepted in config files
ALIASES = {"threshold": "selectivity", "K": "folds", "output": "output_dir"}


def validate_config(raw: dict, command: str) -> RunConfig:
    """Fill defaults, convert types and check constraints; report every problem at once."""
    problems = []
    if command not in COMMANDS:
        raise ConfigError([f"unknown command {command!r}"])
    raw = {ALIASES.get(k, k): v for k, v in raw.items()}
    declared = raw.pop("command", command)
    if declared != command:
        problems.append(f"config is for command {declared!r}, not {command!r}")
    values = {}
    for k in sorted(raw):
        if k not in KEYS:
            problems.append(f"unknown key {k!r}")
        elif command not in KEYS[k][2]:
            problems.append(f"key {k!r} does not apply to {command}")
    for k, (parse, default, cmds) in KEYS.items():
        if command not in cmds:
            continue
        v = raw.get(k)
        if v is None or v == "":
            values[k] = default
            continue
        try:
            values[k] = parse(v)
        except (TypeError, ValueError):
            problems.append(f"{k}: cannot parse {v!r} as {getattr(parse, '__name__', parse)}")
            values[k] = default
    problems.extend(_constraints(command, values))
    if problems:
        raise ConfigError(problems)
    return RunConfig(command, values)


def _constraints(command, v):
    out = []

    def need(cond, msg):
        if not cond:
            out.append(msg)

    need(v.get("output_dir") is not None, "output_dir is required")
    need(v.get("threads", 1) >= 1, "threads must be >= 1")
    if command in STOCHASTIC:
        need(v.get("seed") is not None, f"seed is required for {command}")
    if "input" in v and command != "simulate":
        need(v["input"] is not None, "input is required")
    if "format" in v:
        need(v["format"] in ("auto", "long", "wide"), "format must be auto, long or wide")
    if "mode" in v:
        need(v["mode"] in MODES, f"mode must be one of {', '.join(MODES)}")
    if "selectivity" in v:
        need(0 < v["selectivity"] <= 1, "selectivity must lie in (0, 1]")
    if "degree" in v:
        need(v["degree"] >= 0, "degree must be >= 0")
        need(v["interior_knots"] >= 0, "interior_knots must be >= 0")
        need(v["min_timepoints"] >= 1, "min_timepoints must be >= 1")
        need(v["max_iter"] >= 0, "max_iter must be >= 0")
        need(v["time_mode"] in (OVERALL, TIMEWISE), f"time_mode must be {OVERALL} or {TIMEWISE}")
        need(v["n_components"] is None or v["n_components"] >= 1, "n_components must be >= 1")
    if v.get("tau") is not None:
        need(v["tau"] >= 0, "tau must be >= 0")
    if command == "fit":
        need(v.get("tau") is not None, "tau is required for fit")
    if "folds" in v:
        need(v["folds"] >= 2, "folds must be >= 2")
        need(0 < v["target_sparsity"] <= 1, "target_sparsity must lie in (0, 1]")
        need(v["c_update"] > 1, "c_update must exceed 1")
    if command == "simulate":
        need(v["scenario"] in SCENARIOS, f"scenario must be one of {', '.join(SCENARIOS)}")
        need(v["groups"] >= 2, "groups must be >= 2")
        need(v["n_per_group"] >= 1, "n_per_group must be >= 1")
        need(v["p"] >= 1, "p must be >= 1")
        need(v["T"] >= 2, "T must be >= 2")
        need(v["sigma"] >= 0, "sigma must be >= 0")
        need(0 < v["keep_rate"] <= 1, "keep_rate must lie in (0, 1]")
        need(0 < v["signal_fraction"] <= 1, "signal_fraction must lie in (0, 1]")
        need(not v["disjoint_signals"] or v["groups"] == 3, "disjoint_signals needs groups = 3")
    if "max_zero_fraction" in v:
        need(0 <= v["max_zero_fraction"] <= 1, "max_zero_fraction must lie in [0, 1]")
        need(v["pseudo_count"] > 0, "pseudo_count must be positive")
        need(0 <= v["variance_quantile_cut"] <= 1, "variance_quantile_cut must lie in [0, 1]")
    if command == "classify":
        need(v.get("model") is not None, "model is required for classify")
    if command == "pipeline":
        need(0 < v["test_fraction"] < 1, "test_fraction must lie in (0, 1)")
    return out


# ---------------------------------------------------------------- helpers

def _check_inputs(cfg: RunConfig):
    for key in ("input", "test_input", "model", "truth", "selection"):
        path = cfg.values.get(key)
        if path is not None and not Path(path).is_file():
            raise FileNotFoundError(f"{key}: no such file {path}")


def _read_data(path, fmt_name, time_domain=None) -> FunctionalDataSet:
    if fmt_name == "auto":
        with open(path, newline="", encoding="utf-8") as fh:
            header = next(csv.reader(fh), [])
        fmt_name = "long" if "feature" in header and "value" in header else "wide"
    if fmt_name == "long":
        return read_long_csv(path, time_domain=time_domain)
    return read_wide_csv(path, time_domain=time_domain)


def _basis(cfg, domain) -> SplineBasis:
    return SplineBasis.uniform(domain, cfg.interior_knots, cfg.degree)


def _smooth(data, basis, min_timepoints, out: Path, name="exclusions.csv", grid=None):
    model, excluded = smooth_dataset(data, basis, min_timepoints, grid)
    with open(out / name, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["subject_id", "reason"])
        w.writerows(excluded)
    return model


def _write_discriminant(path, gamma_hat, feature_names, grid):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["component", "feature", "time", "coefficient"])
        for c in range(gamma_hat.shape[0]):
            for j, name in enumerate(feature_names):
                for h, t in enumerate(grid):
                    w.writerow([c + 1, name, fmt(t), fmt(gamma_hat[c, j, h])])


def _write_classes(path, class_names, n_classes):
    names = class_names or tuple(str(k) for k in range(1, n_classes + 1))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["code", "class"])
        for k, name in enumerate(names, start=1):
            w.writerow([k, name])


def _write_grid(path, grid):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["tau", "sparsity"])
        for tau, sp in zip(grid.grid, grid.sparsity):
            w.writerow([fmt(tau), fmt(sp)])


def _cv_config(cfg) -> CvConfig:
    return CvConfig(K=cfg.folds, seed=cfg.seed, time_mode=cfg.time_mode,
                    threshold=cfg.selectivity, max_iter=cfg.max_iter,
                    n_components=cfg.n_components, threads=cfg.threads)


def _fit_outputs(fitted, model, out: Path, class_names, min_timepoints):
    prof = fitted.solution.profiles[0]
    write_selection_csv(out / "selected_features.csv", prof, model.feature_names)
    _write_discriminant(out / "discriminant.csv", fitted.solution.gamma_hat,
                        model.feature_names, model.grid)
    extra = {"feature_names": list(model.feature_names), "grid": model.grid.tolist(),
             "domain": list(model.basis.domain), "degree": model.basis.degree,
             "interior_knots": list(model.basis.interior_knots),
             "min_timepoints": min_timepoints,
             "class_names": list(class_names)}
    save_classifier(out / "model.json", fitted.classifier(), extra)


def _tune(X, labels, cfg, out: Path, prepared):
    grid = find_tau_range(prepared.nonsparse, cfg.target_sparsity, cfg.c_update,
                          threshold=cfg.selectivity, max_iter=cfg.max_iter, threads=cfg.threads)
    _write_grid(out / "tau_grid.csv", grid)
    cv = cross_validate(X, labels, grid, _cv_config(cfg), cfg.mode)
    write_trace_csv(out / "tuning_trace.csv", cv)
    log.info("tau** = %s (fold-mean combined %s)", fmt(cv.tau_best), fmt(cv.combined.max()))
    return cv.tau_best


def _truth_indices(path, feature_names):
    with open(path, newline="", encoding="utf-8") as fh:
        names = [row["feature"] for row in csv.DictReader(fh)]
    index = {n: j for j, n in enumerate(feature_names)}
    missing = [n for n in names if n not in index]
    if missing:
        raise DataError(f"truth lists unknown features {missing[:5]}")
    return [index[n] for n in names]


def _ks_extra(scores, labels):
    """KS statistic between each pair of classes on the first component's scores."""
    extra = {}
    classes = np.unique(labels)
    for a in range(len(classes)):
        for b in range(a + 1, len(classes)):
            sa = scores.scores[labels == classes[a], 0]
            sb = scores.scores[labels == classes[b], 0]
            if sa.size < 2 or sb.size < 2:
                continue
            D, pval = ks_separation(sa, sb)
            key = f"{classes[a]}_{classes[b]}"
            extra[f"ks_d_{key}"] = D
            extra[f"ks_p_{key}"] = pval
    return extra


# ---------------------------------------------------------------- commands

def cmd_simulate(cfg, out: Path):
    sim = SimConfig(n_per_group=(cfg.n_per_group,) * cfg.groups, p=cfg.p, T=cfg.T,
                    sigma=cfg.sigma, signal_fraction=cfg.signal_fraction, scenario=cfg.scenario,
                    rho=cfg.rho, seed=cfg.seed, disjoint_signals=cfg.disjoint_signals,
                    keep_rate=cfg.keep_rate)
    X, labels, truth = generate(sim)
    data = to_dataset(X, labels)
    write_long_csv(out / "data.csv", data)
    write_truth(out / "truth.csv", truth, data.feature_names)


def cmd_preprocess(cfg, out: Path):
    data = _read_data(cfg.input, cfg.format)
    pcfg = PreprocessConfig(cfg.max_zero_fraction, cfg.pseudo_count, cfg.variance_quantile_cut)
    new, res = preprocess_dataset(data, pcfg)
    write_long_csv(out / "preprocessed.csv", new)
    write_retained_manifest(out / "retained_features.csv", data.feature_names, res)


def _labeled(data, what="input"):
    if data.labels is None:
        raise DataError(f"{what} has no class column")
    return data


def cmd_fit(cfg, out: Path, tune: bool = False):
    data = _labeled(_read_data(cfg.input, cfg.format))
    model = _smooth(data, _basis(cfg, data.time_domain), cfg.min_timepoints, out)
    X, labels = model.curves(), model.labels
    prepared = prepare(X, labels, cfg.mode, cfg.n_components, threads=cfg.threads)
    tau = _tune(X, labels, cfg, out, prepared) if tune else cfg.tau
    fitted = fit_at(prepared, tau, cfg.selectivity, cfg.max_iter, cfg.time_mode, cfg.threads)
    _fit_outputs(fitted, model, out, data.class_names, cfg.min_timepoints)
    write_scores_csv(out / "scores.csv", fitted.training_scores(model.subject_ids), model.grid)
    _write_classes(out / "classes.csv", data.class_names, int(labels.max()))


def cmd_classify(cfg, out: Path):
    clf, extra = load_classifier(cfg.model)
    domain = tuple(extra["domain"])
    data = _read_data(cfg.input, cfg.format, time_domain=domain)
    if tuple(data.feature_names) != tuple(extra["feature_names"]):
        data = _align_features(data, extra["feature_names"])
    basis = SplineBasis(domain, tuple(extra["interior_knots"]), extra["degree"])
    grid = np.array(extra["grid"], dtype=float)
    model = _smooth(data, basis, extra["min_timepoints"], out, grid=grid)
    preds = clf.predict(model.curves(), model.subject_ids)
    true = _true_codes(data, model, extra.get("class_names", []))
    write_predictions_csv(out / "predictions.csv", preds, true)
    write_scores_csv(out / "scores.csv", clf.scores(model.curves(), model.subject_ids), grid)


def _align_features(data, names):
    index = {n: j for j, n in enumerate(data.feature_names)}
    missing = [n for n in names if n not in index]
    if missing:
        raise DataError(f"input lacks model features {missing[:5]}")
    return data.select_features([index[n] for n in names])


def _true_codes(data, model, class_names):
    if data.labels is None:
        return [""] * model.n_subjects
    if class_names and data.class_names:
        code = {c: k + 1 for k, c in enumerate(class_names)}
        unknown = set(data.class_names) - set(code)
        if unknown:
            raise DataError(f"classes {sorted(unknown)} were not in the training data")
        return [code[data.class_names[k - 1]] for k in model.labels]
    return [int(k) for k in model.labels]


def _read_predictions(path):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or "predicted" not in rows[0] or "true" not in rows[0]:
        raise DataError(f"{path}: expected columns subject_id,predicted,true,margin")
    if any(r["true"] == "" for r in rows):
        raise DataError(f"{path}: true labels are missing")
    return np.array([int(r["true"]) for r in rows]), np.array([int(r["predicted"]) for r in rows])


def cmd_evaluate(cfg, out: Path):
    true, pred = _read_predictions(cfg.input)
    report = evaluate(true, pred, np.union1d(true, pred))
    if cfg.selection is not None:
        if cfg.truth is None:
            raise ConfigError(["selection metrics need truth"])
        with open(cfg.selection, newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        names = [r["feature"] for r in rows]
        chosen = [j for j, r in enumerate(rows) if r["selected"] == "1"]
        sens, spec, f1, flags = selection_metrics(chosen, _truth_indices(cfg.truth, names),
                                                  len(names))
        report = report.with_selection(sens, spec, f1)
    write_report(out / "metrics.txt", report)
    write_report_csv(out / "metrics.csv", report)


def cmd_pipeline(cfg, out: Path):
    data = _labeled(_read_data(cfg.input, cfg.format))
    test_data = None
    if cfg.test_input is not None:
        test_data = _labeled(_read_data(cfg.test_input, cfg.format, data.time_domain), "test input")
    if cfg.preprocess:
        pcfg = PreprocessConfig(cfg.max_zero_fraction, cfg.pseudo_count, cfg.variance_quantile_cut)
        names = data.feature_names
        data, res = preprocess_dataset(data, pcfg)
        write_retained_manifest(out / "retained_features.csv", names, res)
        if test_data is not None:
            test_data = apply_preprocess(_align_features(test_data, names), res, pcfg)
    basis = _basis(cfg, data.time_domain)
    model = _smooth(data, basis, cfg.min_timepoints, out)
    X, labels, ids = model.curves(), model.labels, np.array(model.subject_ids)
    if test_data is None:
        train, test = stratified_holdout(labels, cfg.test_fraction, cfg.seed)
        X_tr, y_tr, X_te, y_te, ids_te = X[train], labels[train], X[test], labels[test], ids[test]
    else:
        if test_data.class_names != data.class_names:
            raise DataError("test classes differ from training classes")
        tmodel = _smooth(test_data, basis, cfg.min_timepoints, out, "test_exclusions.csv", model.grid)
        X_tr, y_tr = X, labels
        X_te, y_te, ids_te = tmodel.curves(), tmodel.labels, np.array(tmodel.subject_ids)
    prepared = prepare(X_tr, y_tr, cfg.mode, cfg.n_components, threads=cfg.threads)
    tau = cfg.tau if cfg.tau is not None else _tune(X_tr, y_tr, cfg, out, prepared)
    fitted = fit_at(prepared, tau, cfg.selectivity, cfg.max_iter, cfg.time_mode, cfg.threads)
    _fit_outputs(fitted, model, out, data.class_names, cfg.min_timepoints)
    _write_classes(out / "classes.csv", data.class_names, int(labels.max()))
    preds = fitted.predict(X_te, ids_te.tolist())
    write_predictions_csv(out / "predictions.csv", preds, y_te.tolist())
    scores = fitted.scores(X_te, ids_te.tolist())
    write_scores_csv(out / "scores.csv", scores, model.grid)
    report = evaluate(y_te, np.array([p.predicted for p in preds]), np.unique(labels))
    if cfg.truth is not None:
        sens, spec, f1, _ = selection_metrics(fitted.selected,
                                              _truth_indices(cfg.truth, model.feature_names),
                                              len(model.feature_names))
        report = report.with_selection(sens, spec, f1)
    extra = {"tau": tau, "n_selected": float(fitted.selected.size)}
    extra.update(_ks_extra(scores, y_te))
    report = replace(report, extra=extra)
    write_report(out / "metrics.txt", report)
    write_report_csv(out / "metrics.csv", report)


HANDLERS = {
    "simulate": cmd_simulate,
    "preprocess": cmd_preprocess,
    "fit": cmd_fit,
    "tune": lambda cfg, out: cmd_fit(cfg, out, tune=True),
    "classify": cmd_classify,
    "evaluate": cmd_evaluate,
    "pipeline": cmd_pipeline,
}


def run(cfg: RunConfig) -> None:
    """Execute a validated configuration and write its manifest."""
    _check_inputs(cfg)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    HANDLERS[cfg.command](cfg, out)
    (out / "manifest.txt").write_text(cfg.to_text(), encoding="utf-8", newline="\n")


# ---------------------------------------------------------------- entry point

FLAGS = ["input", "output_dir", "mode", "tau", "target_sparsity", "folds", "seed", "threads",
         "scenario", "groups", "selectivity"]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mflda", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"mflda {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS + ("rerun",):
        p = sub.add_parser(name)
        if name == "rerun":
            p.add_argument("manifest", help="manifest.txt written by an earlier run")
        p.add_argument("--config", help="key = value settings file")
        for key in FLAGS:
            p.add_argument("--" + key.replace("_", "-"), dest=key, default=None)
        p.add_argument("--set", dest="extra", action="append", default=[], metavar="KEY=VALUE",
                       help="any other setting, repeatable")
    return parser


def _gather(args) -> tuple[str, dict]:
    raw = {}
    command = args.command
    if command == "rerun":
        raw.update(parse_kv(Path(args.manifest).read_text(encoding="utf-8"), args.manifest))
        command = raw.get("command")
        if command is None:
            raise ConfigError([f"{args.manifest}: no command recorded"])
    if args.config:
        raw.update(parse_kv(Path(args.config).read_text(encoding="utf-8"), args.config))
    problems = []
    for item in args.extra:
        if "=" not in item:
            problems.append(f"--set expects KEY=VALUE, got {item!r}")
            continue
        k, v = item.split("=", 1)
        raw[k.strip()] = v.strip()
    if problems:
        raise ConfigError(problems)
    for key in FLAGS:
        v = getattr(args, key)
        if v is not None:
            raw[key] = v
    return command, raw


def _setup_logging():
    level = os.environ.get("MFLDA_LOG", "WARNING").upper()
    if not isinstance(logging.getLevelName(level), int):
        raise ConfigError([f"MFLDA_LOG: unknown log level {level!r}"])
    logging.basicConfig(level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    logging.captureWarnings(True)


def _category(exc) -> str:
    if isinstance(exc, MfldaError):
        return exc.category
    if isinstance(exc, OSError):
        return "io"
    if isinstance(exc, (ArithmeticError, np.linalg.LinAlgError)):
        return "numeric"
    return "data"


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        _setup_logging()
        command, raw = _gather(args)
        cfg = validate_config(raw, command)
        run(cfg)
    except (MfldaError, OSError, ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        category = _category(exc)
        err = {"category": category, "exit_code": EXIT_CODES[category], "message": str(exc)}
        if isinstance(exc, ConfigError):
            err["problems"] = exc.problems
        print(json.dumps(err), file=sys.stderr)
        return EXIT_CODES[category]
    return 0


if __name__ == "__main__":
    sys.exit(main())
