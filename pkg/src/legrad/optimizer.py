"""Stochastic gradient ascent on the variational bound."""

import csv
import time
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .diagnostics import VarianceTracker
from .errors import DivergenceError

SCHEDULES = ("constant", "robbins-monro")


@dataclass
class OptimizerConfig:
    step_size: float = 0.02
    iterations: int = 1000
    schedule: str = "constant"
    tau: float = 1000.0
    seed: int = 0
    trace_every: int = 1
    window: int = 10

    def __post_init__(self):
        if self.step_size < 0:
            raise ValueError("step_size must be nonnegative")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.schedule not in SCHEDULES:
            raise ValueError(f"schedule must be one of {SCHEDULES}")
        if self.trace_every < 1:
            raise ValueError("trace_every must be >= 1")

    def rate(self, t):
        if self.schedule == "constant":
            return self.step_size
        return self.step_size / (1.0 + t / self.tau)


@dataclass
class TraceRecord:
    iteration: int
    bound: float
    f_evaluations: int
    gradients: tuple
    variances: tuple
    elapsed: float = 0.0
    extra: dict = field(default_factory=dict)


@dataclass
class RunResult:
    model: object
    trace: List[TraceRecord]
    f_evaluations: int

    @property
    def params(self):
        return self.model.params


def stochastic_bound(model, target, rng):
    """Single-sample value of the bound at the current parameters."""
    x = model.sample(rng)
    f = target(x)
    if target.entropy == "closed_form":
        return f + model.entropy()
    if target.entropy == "monte_carlo":
        return f - model.log_density(x)
    return f


def run(model, target, estimator, config, tracked=(0,), callback=None):
    """Run ``config.iterations`` steps of draw-pivot / estimate / ascend.

    The model is copied; the fitted copy is returned in the result.  The
    bound sample of each iteration is drawn before that iteration's update.
    """
    model = model.copy()
    rng = np.random.default_rng(config.seed)
    tracker = VarianceTracker(tracked, config.window)
    trace, total = [], 0
    start = time.perf_counter()
    for t in range(config.iterations):
        # non-finite values are reported as DivergenceError below
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            bound = stochastic_bound(model, target, rng)
            est = estimator.estimate(model, target, rng)
            grad = est.gradient
            bad = ~np.isfinite(grad)
            if bad.any():
                raise DivergenceError(t, int(np.flatnonzero(bad)[0]))
            model._params += config.rate(t) * grad
            model.project()
        bad = ~np.isfinite(model.params)
        if bad.any():
            raise DivergenceError(t, int(np.flatnonzero(bad)[0]))
        total += est.f_evaluations
        variances = tracker.push(grad)
        if (t + 1) % config.trace_every == 0:
            rec = TraceRecord(
                iteration=t + 1,
                bound=float(bound),
                f_evaluations=est.f_evaluations,
                gradients=tuple(float(grad[i]) for i in tracker.indices),
                variances=tuple(variances),
                elapsed=time.perf_counter() - start,
            )
            trace.append(rec)
            if callback is not None:
                callback(model, rec)
    return RunResult(model, trace, total)


def _fmt(v):
    return "" if v is None else repr(float(v))


def write_trace_csv(trace, tracked, fh, extra_columns=()):
    """Trace rows: iteration, bound, f_evaluations, extras, then grad/var per tracked index.

    Wall-clock time is deliberately absent so identical seeds give identical
    files; see :func:`write_timing_csv`.
    """
    writer = csv.writer(fh, lineterminator="\n")
    header = ["iteration", "bound", "f_evaluations", *extra_columns]
    for i in tracked:
        header += [f"grad_{i}", f"var_{i}"]
    writer.writerow(header)
    for r in trace:
        row = [r.iteration, _fmt(r.bound), r.f_evaluations]
        row += [_fmt(r.extra.get(c)) for c in extra_columns]
        for g, v in zip(r.gradients, r.variances):
            row += [_fmt(g), _fmt(v)]
        writer.writerow(row)


def write_timing_csv(trace, fh):
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(["iteration", "elapsed_seconds"])
    for r in trace:
        writer.writerow([r.iteration, f"{r.elapsed:.6f}"])
