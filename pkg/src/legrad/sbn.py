"""One-layer sigmoid belief network fitted with a recognition model.

Generative weights ``W`` have shape ``(D, K + 1)`` and recognition weights
``V`` have shape ``(K, D + 1)``; the last column of each is the bias.  Hidden
units of datum ``y`` are independent Bernoullis with success probabilities
``sigmoid(V [y; 1])``.
"""

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import product
from typing import List, Optional

import numpy as np
from scipy.special import expit

from .errors import DivergenceError, StateSpaceTooLargeError
from .optimizer import TraceRecord
from .diagnostics import VarianceTracker
from .variational import clamp_prob

LOG2 = np.log(2.0)

# data per parallel task; fixed so results never depend on the worker count
DATA_CHUNK = 64


def softplus(a):
    return np.logaddexp(0.0, a)


def augment(Y):
    Y = np.asarray(Y, dtype=float)
    return np.concatenate([Y, np.ones(Y.shape[:-1] + (1,))], axis=-1)


def hidden_probs(V, Y):
    """Unclamped success probabilities of the hidden units, shape ``(..., K)``."""
    return expit(augment(Y) @ V.T)


def bernoulli_entropy(p):
    p = clamp_prob(p)
    return -(p * np.log(p) + (1.0 - p) * np.log1p(-p)).sum(axis=-1)


def loglik(W, y, x):
    """``log p(y | x, W)`` for binary ``y`` and hidden vector(s) ``x``."""
    a = np.asarray(x, dtype=float) @ W[:, :-1].T + W[:, -1]
    return -softplus(-(2.0 * np.asarray(y) - 1.0) * a).sum(axis=-1)


def per_datum_bound(W, V, y, rng=None, x=None):
    """Per-datum bound: one-sample likelihood term plus exact entropy.

    Pass ``x`` to use a given hidden sample instead of drawing one.
    """
    p = hidden_probs(V, y)
    if x is None:
        x = (rng.random(p.shape) < p).astype(float)
    return float(loglik(W, y, x) + bernoulli_entropy(p))


def exact_per_datum_bound(W, V, y, max_hidden=16):
    """The same bound with the likelihood expectation summed over all hidden states."""
    K = V.shape[0]
    if K > max_hidden:
        raise StateSpaceTooLargeError(f"2**{K} hidden states is too many to enumerate")
    p = hidden_probs(V, y)
    H = np.array(list(product((0.0, 1.0), repeat=K)))
    q = np.prod(np.where(H == 1.0, p, 1.0 - p), axis=1)
    return float(q @ loglik(W, y, H) + bernoulli_entropy(p))


def _recognition_chunk(W, V, Y, X, incremental):
    Yaug = augment(Y)
    s = expit(Yaug @ V.T)  # (m, K)
    sc = clamp_prob(s)
    signs = 2.0 * Y - 1.0  # (m, D)
    Wh, b = W[:, :-1], W[:, -1]
    K = Wh.shape[1]
    if incremental:
        A = X @ Wh.T + b  # (m, D)
        A0 = A[:, None, :] - X[:, :, None] * Wh.T[None, :, :]  # x_k = 0
        A1 = A0 + Wh.T[None, :, :]  # x_k = 1
    else:
        A0 = np.empty((X.shape[0], K, W.shape[0]))
        A1 = np.empty_like(A0)
        for k in range(K):
            Xk = X.copy()
            Xk[:, k] = 0.0
            A0[:, k] = Xk @ Wh.T + b
            Xk[:, k] = 1.0
            A1[:, k] = Xk @ Wh.T + b
    t = signs[:, None, :]
    data_term = (softplus(-t * A0) - softplus(-t * A1)).sum(axis=2)
    coef = s * (1.0 - s) * (data_term + np.log((1.0 - sc) / sc))
    return coef.T @ Yaug


def recognition_gradient(W, V, Y, X, incremental=True, workers=1):
    """Local expectation gradient of the summed bound with respect to ``V``.

    ``X`` holds one pivot hidden vector per datum.  For each datum and hidden
    unit the expectation over that unit is exact: its two states differ in the
    activations by one column of ``W``.
    """
    W, V = np.asarray(W, float), np.asarray(V, float)
    Y, X = np.atleast_2d(np.asarray(Y, float)), np.atleast_2d(np.asarray(X, float))
    chunks = [slice(lo, lo + DATA_CHUNK) for lo in range(0, Y.shape[0], DATA_CHUNK)]

    def part(sl):
        return _recognition_chunk(W, V, Y[sl], X[sl], incremental)

    if workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(part, chunks))
    else:
        parts = [part(sl) for sl in chunks]
    return np.sum(parts, axis=0)


def generative_gradient(W, Y, X):
    """Gradient of ``sum_i log p(y_i | x_i, W)`` with respect to ``W``."""
    Haug = augment(X)
    resid = Y - expit(Haug @ W.T)
    return resid.T @ Haug


def reconstruct(W, V, y):
    """Pixel means ``sigmoid(W [h; 1])`` at the mean hidden activation ``h``."""
    h = hidden_probs(V, y)
    return expit(augment(h) @ W.T)


def reconstruction_error(W, V, Y):
    return float(np.abs(reconstruct(W, V, Y) - Y).mean())


@dataclass
class SBNConfig:
    hidden: int = 20
    step_size: float = 0.05
    w_step_size: Optional[float] = None
    iterations: int = 1000
    seed: int = 0
    trace_every: int = 1
    window: int = 10
    init_scale: float = 0.1
    estimator: str = "legrad"
    samples: int = 1
    workers: int = 1


@dataclass
class SBNResult:
    W: np.ndarray
    V: np.ndarray
    trace: List[TraceRecord] = field(default_factory=list)
    f_evaluations: int = 0


def _ldgrad_recognition(W, V, Y, S, rng):
    # score-function gradient of the likelihood term, entropy gradient added exactly
    Yaug = augment(Y)
    s = expit(Yaug @ V.T)
    g = np.zeros_like(V)
    for _ in range(S):
        X = (rng.random(s.shape) < s).astype(float)
        f = loglik(W, Y, X).sum()
        g += f * ((X - s).T @ Yaug)
    sc = clamp_prob(s)
    g /= S
    g += (s * (1.0 - s) * np.log((1.0 - sc) / sc)).T @ Yaug
    return g


def train(Y, config, W=None, V=None, tracked=(0,), callback=None):
    """Fit ``W`` and ``V`` by alternating stochastic steps.

    Each iteration draws one hidden sample per datum from the recognition
    model, records the single-sample bound (including the constant
    ``-K log 2`` of the uniform prior), takes a ``W`` step using that sample,
    then a ``V`` step with the recognition gradient using the same sample as
    pivot.  Steps use gradients averaged over data.
    """
    Y = np.asarray(Y, dtype=float)
    m, D = Y.shape
    K = config.hidden
    rng = np.random.default_rng(config.seed)
    if W is None:
        W = config.init_scale * rng.standard_normal((D, K + 1))
    if V is None:
        V = config.init_scale * rng.standard_normal((K, D + 1))
    W, V = np.array(W, dtype=float), np.array(V, dtype=float)
    w_step = config.step_size if config.w_step_size is None else config.w_step_size
    tracker = VarianceTracker(tracked, config.window)
    trace, total = [], 0
    start = time.perf_counter()
    for t in range(config.iterations):
        p = hidden_probs(V, Y)
        X = (rng.random(p.shape) < p).astype(float)
        bound = float(loglik(W, Y, X).sum() + bernoulli_entropy(p).sum()) - m * K * LOG2
        gW = generative_gradient(W, Y, X)
        W = W + w_step * gW / m
        if config.estimator == "legrad":
            gV = recognition_gradient(W, V, Y, X, workers=config.workers)
            evals = m * (K + 1)
        else:
            gV = _ldgrad_recognition(W, V, Y, config.samples, rng)
            evals = m * config.samples
        if not (np.isfinite(gV).all() and np.isfinite(gW).all()):
            raise DivergenceError(t, int(np.flatnonzero(~np.isfinite(gV.ravel()))[0])
                                  if not np.isfinite(gV).all() else -1)
        V = V + config.step_size * gV / m
        total += evals
        flat = gV.ravel()
        variances = tracker.push(flat)
        if (t + 1) % config.trace_every == 0:
            rec = TraceRecord(
                iteration=t + 1,
                bound=bound,
                f_evaluations=evals,
                gradients=tuple(float(flat[i]) for i in tracker.indices),
                variances=tuple(variances),
                elapsed=time.perf_counter() - start,
                extra={"reconstruction_error": reconstruction_error(W, V, Y)},
            )
            trace.append(rec)
            if callback is not None:
                callback(W, V, rec)
    return SBNResult(W, V, trace, total)
