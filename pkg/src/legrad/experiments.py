"""Experiment runners that turn a config into output files."""

import json
import os
from pathlib import Path

import numpy as np

from . import sbn
from .config import config_hash, format_config
from .data import balanced_subset, binary_patterns, load_idx_pair, two_class_blobs
from .diagnostics import fixed_point_variance_study, write_variance_csv
from .estimators import EstimatorConfig
from .optimizer import OptimizerConfig, run, write_timing_csv, write_trace_csv
from .targets import CorrelatedGaussianTarget, LogisticRegressionTarget, with_bias
from .variational import factorized_gaussian

OUTPUT_ENV = "LEGRAD_OUTPUT_DIR"
DEFAULT_OUTPUT = "legrad-output"


def output_dir(cfg):
    return Path(cfg.out or os.environ.get(OUTPUT_ENV) or DEFAULT_OUTPUT)


def seeds(cfg):
    """Independent integer seeds for data generation and the optimization run."""
    data_ss, run_ss = np.random.SeedSequence(cfg.seed).spawn(2)
    return int(data_ss.generate_state(1)[0]), int(run_ss.generate_state(1)[0])


def parse_estimator_spec(spec, default_samples):
    """``"ldgrad:10000"`` -> (name, EstimatorConfig)."""
    kind, _, s = spec.partition(":")
    samples = int(s) if s else (default_samples if kind == "ldgrad" else 1)
    name = f"{kind}_S{samples}" if kind != "legrad" else kind
    return name, samples, kind


def build_target(cfg, problem, data_seed):
    if problem == "gauss-fit":
        target = CorrelatedGaussianTarget(cfg.n)
    elif cfg.data == "idx":
        X, labels = load_idx_pair(cfg.images, cfg.labels, classes=cfg.classes[:2], limit=cfg.limit)
        y = np.where(labels == cfg.classes[0], -1.0, 1.0)
        target = LogisticRegressionTarget(with_bias(X), y, cfg.prior_variance)
    else:
        X, y = two_class_blobs(cfg.features, cfg.examples, seed=data_seed)
        target = LogisticRegressionTarget(with_bias(X), y, cfg.prior_variance)
    target.incremental = cfg.incremental
    return target


def _initial_model(target):
    return factorized_gaussian(np.zeros(target.n), np.ones(target.n))


def _save_matrix(path, M):
    np.savetxt(path, np.atleast_2d(M), fmt="%.17g")


def _write_manifest(out, cfg, files, f_evaluations, summary):
    manifest = {
        "config": format_config(cfg, exclude=("workers", "out")),
        "config_hash": config_hash(cfg),
        "seed": cfg.seed,
        "f_evaluations": int(f_evaluations),
        "files": sorted(files),
        "summary": summary,
    }
    with open(out / "manifest.json", "w", encoding="utf-8", newline="\n") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest


def _open(path):
    return open(path, "w", encoding="utf-8", newline="")


def _continuous(cfg, out):
    data_seed, run_seed = seeds(cfg)
    problem = cfg.problem if cfg.experiment == "variance-study" else cfg.experiment
    target = build_target(cfg, problem, data_seed)
    budget = target.n * cfg.K
    tracked = [i for i in cfg.tracked if i < 2 * target.n]
    opt = OptimizerConfig(
        step_size=cfg.eta, iterations=max(cfg.T, 1), schedule=cfg.schedule, tau=cfg.tau,
        seed=run_seed, trace_every=cfg.trace_every, window=cfg.window,
    )
    model = _initial_model(target)
    summary = {}
    trace, total = [], 0
    if cfg.experiment == "variance-study":
        if cfg.T > 0:
            result = run(model, target, EstimatorConfig("legrad", 1, cfg.K, cfg.workers), opt, tracked)
            model, trace, total = result.model, result.trace, result.f_evaluations
        configs = {}
        for spec in cfg.estimators:
            name, samples, kind = parse_estimator_spec(spec, cfg.S or budget)
            configs[name] = EstimatorConfig(kind, samples, cfg.K, cfg.workers)
        calls = cfg.calls
    else:
        est = EstimatorConfig(cfg.estimator, cfg.S or (budget if cfg.estimator == "ldgrad" else 1),
                              cfg.K, cfg.workers)
        result = run(model, target, est, opt, tracked)
        model, trace, total = result.model, result.trace, result.f_evaluations
        configs = {parse_estimator_spec(cfg.estimator, est.samples)[0]: est}
        calls = cfg.variance_calls
    table = fixed_point_variance_study(model, target, configs, calls, seed=run_seed, coords=tracked)

    with _open(out / "trace.csv") as fh:
        write_trace_csv(trace, tracked, fh)
    with _open(out / "timing.csv") as fh:
        write_timing_csv(trace, fh)
    with _open(out / "variance.csv") as fh:
        write_variance_csv(table, tracked, fh)
    p = model.params.reshape(-1, 2)
    np.savetxt(out / "final_params.txt", p, fmt="%.17g", header="mu ell")

    if problem == "gauss-fit":
        m_opt, v_opt = target.optimal_factorized()
        summary["max_abs_mean_error"] = float(np.abs(p[:, 0] - m_opt).max())
        summary["max_rel_variance_error"] = float(np.abs(p[:, 1] ** 2 / v_opt - 1).max())
    summary["variance"] = {k: [float(v) for v in vals] for k, vals in table.items()}
    files = ["trace.csv", "timing.csv", "variance.csv", "final_params.txt", "manifest.json"]
    return _write_manifest(out, cfg, files, total, summary)


def _sbn(cfg, out):
    data_seed, run_seed = seeds(cfg)
    if cfg.data == "idx":
        X, labels = load_idx_pair(cfg.images, cfg.labels, binarize=True)
        per_class = max(1, (cfg.limit or 1000) // max(1, len(np.unique(labels))))
        keep = balanced_subset(labels, per_class, np.random.default_rng(data_seed))
        Y = X[keep]
    else:
        Y = binary_patterns(cfg.examples, cfg.pixels, seed=data_seed)
    sc = sbn.SBNConfig(
        hidden=cfg.hidden, step_size=cfg.eta, iterations=cfg.T, seed=run_seed,
        trace_every=cfg.trace_every, window=cfg.window, estimator=cfg.estimator,
        samples=cfg.S or 1, workers=cfg.workers,
    )
    n_v = cfg.hidden * (Y.shape[1] + 1)
    tracked = [i for i in cfg.tracked if i < n_v]
    result = sbn.train(Y, sc, tracked=tracked)

    # fixed-point variance of the recognition gradient over fresh pivots
    rng = np.random.default_rng(np.random.SeedSequence([run_seed, 1]))
    p = sbn.hidden_probs(result.V, Y)
    draws = []
    for _ in range(cfg.variance_calls):
        X = (rng.random(p.shape) < p).astype(float)
        draws.append(sbn.recognition_gradient(result.W, result.V, Y, X).ravel()[tracked])
    table = {cfg.estimator: np.var(np.array(draws), axis=0, ddof=1)}

    with _open(out / "trace.csv") as fh:
        write_trace_csv(result.trace, tracked, fh, extra_columns=("reconstruction_error",))
    with _open(out / "timing.csv") as fh:
        write_timing_csv(result.trace, fh)
    with _open(out / "variance.csv") as fh:
        write_variance_csv(table, tracked, fh)
    _save_matrix(out / "W.txt", result.W)
    _save_matrix(out / "V.txt", result.V)
    np.savetxt(out / "final_params.txt", result.V.ravel(), fmt="%.17g")
    np.savetxt(out / "reconstructions.csv", sbn.reconstruct(result.W, result.V, Y),
               fmt="%.17g", delimiter=",")
    summary = {
        "final_reconstruction_error": sbn.reconstruction_error(result.W, result.V, Y),
        "examples": int(Y.shape[0]),
        "pixels": int(Y.shape[1]),
    }
    files = ["trace.csv", "timing.csv", "variance.csv", "final_params.txt", "W.txt", "V.txt",
             "reconstructions.csv", "manifest.json"]
    return _write_manifest(out, cfg, files, result.f_evaluations, summary)


def run_experiment(cfg):
    """Run the configured experiment and write its files; returns the manifest."""
    out = output_dir(cfg)
    out.mkdir(parents=True, exist_ok=True)
    if cfg.experiment == "sbn":
        return _sbn(cfg, out)
    return _continuous(cfg, out)
