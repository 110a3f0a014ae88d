"""Gradient-variance diagnostics.

Two views are provided: a running-window variance tracked during
optimization, and a fixed-point study that freezes the parameters and draws
many independent estimates per estimator.
"""

import csv
import zlib
from collections import deque

import numpy as np


class VarianceTracker:
    """Sample variance of the last ``window`` gradient values per tracked index."""

    def __init__(self, indices, window=10):
        if window < 2:
            raise ValueError("window must be >= 2")
        self.window = int(window)
        self.indices = [int(i) for i in indices]
        self._buffers = {i: deque(maxlen=self.window) for i in self.indices}

    def push_and_variance(self, index, value):
        """Record ``value`` for ``index``; return the window variance once full, else None."""
        try:
            buf = self._buffers[int(index)]
        except KeyError:
            raise KeyError(f"index {index} is not tracked") from None
        buf.append(float(value))
        if len(buf) < self.window:
            return None
        return float(np.var(np.fromiter(buf, float, len(buf)), ddof=1))

    def push(self, gradient):
        """Push every tracked entry of a full gradient vector."""
        return [self.push_and_variance(i, gradient[i]) for i in self.indices]


def estimator_stream(seed, name):
    """Random stream keyed by estimator name, independent of run order."""
    key = zlib.crc32(str(name).encode("utf-8"))
    return np.random.default_rng(np.random.SeedSequence([int(seed), key]))


def fixed_point_variance_study(model, target, configs, calls, seed=0, coords=None):
    """Per-coordinate sample variance of each estimator at fixed parameters.

    Parameters
    ----------
    model : VariationalModel
        Snapshot whose parameters stay fixed throughout.
    configs : mapping of name -> EstimatorConfig
    calls : int
        Independent estimates drawn per estimator.
    coords : sequence of int, optional
        Flat parameter indices to report; all of them by default.

    Returns
    -------
    dict mapping name -> array of variances aligned with ``coords``.
    """
    if calls < 2:
        raise ValueError("calls must be >= 2")
    coords = np.arange(model.n_params) if coords is None else np.asarray(coords, dtype=np.intp)
    table = {}
    for name, cfg in configs.items():
        rng = estimator_stream(seed, name)
        draws = np.empty((calls, len(coords)))
        for c in range(calls):
            draws[c] = cfg.estimate(model, target, rng).gradient[coords]
        table[name] = draws.var(axis=0, ddof=1)
    return table


def write_variance_csv(table, coords, fh, labels=None):
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(["estimator", "coordinate", "variance"])
    for name, variances in table.items():
        for j, c in enumerate(coords):
            label = labels[j] if labels is not None else int(c)
            writer.writerow([name, label, repr(float(variances[j]))])
