"""Stochastic gradient estimators for ``E_q[f]`` (plus entropy, per the target).

Three estimators share one calling convention and return a
:class:`GradientEstimate`:

* :func:`legrad` -- local expectation gradients: one pivot draw, then for each
  coordinate an exact sum over its states (discrete) or a Gauss-Hermite sum
  (Gaussian) of ``f(pivot with x_i changed) * score_i``.
* :func:`ldgrad` -- the plain score-function (log-derivative) estimator.
* :func:`regrad` -- the reparameterization estimator for Gaussian factors.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

import numpy as np

from .errors import (
    DegenerateConditionalError,
    InvalidAssignmentError,
    InvalidModelError,
    UnsupportedFamilyError,
    UnsupportedStructureError,
)
from .quadrature import gauss_hermite
from .targets import FoldedTarget, GaussianTarget

KINDS = ("legrad", "ldgrad", "regrad")

# coordinates per probe task; fixed so results never depend on the worker count
CHUNK = 128


@dataclass
class GradientEstimate:
    gradient: np.ndarray
    f_evaluations: int
    pivot: Optional[np.ndarray] = None


@dataclass
class EstimatorConfig:
    kind: str = "legrad"
    samples: int = 1
    K: int = 5
    workers: int = 1

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown estimator {self.kind!r}; expected one of {KINDS}")
        if self.samples < 1:
            raise ValueError("samples must be >= 1")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        gauss_hermite(self.K)  # validates K

    def estimate(self, model, target, rng, pivot=None):
        if self.kind == "legrad":
            return legrad(model, target, rng, K=self.K, pivot=pivot, workers=self.workers)
        if self.kind == "ldgrad":
            return ldgrad(model, target, self.samples, rng)
        return regrad(model, target, self.samples, rng)


@lru_cache(maxsize=8)
def _pool(workers):
    return ThreadPoolExecutor(max_workers=workers, thread_name_prefix="legrad-probe")


def _check_dims(model, target):
    n = getattr(target, "n", None)
    if n is not None and n != model.n:
        raise InvalidModelError(f"model has {model.n} coordinates but the target expects {n}")


def _objective(model, target):
    if target.entropy == "monte_carlo":
        return FoldedTarget(target, model)
    return target


def _with_entropy(grad, model, target):
    if target.entropy == "closed_form":
        grad = grad + model.entropy_gradient()
    return grad


def _non_pivot_states(pivot_states, n_states):
    """For each row, every state except the pivot's, shape ``(c, K - 1)``."""
    mask = np.arange(n_states)[None, :] != pivot_states[:, None]
    j = np.arange(n_states - 1)[None, :]
    return mask, j + (j >= pivot_states[:, None])


def legrad(model, target, rng, K=5, rule=None, pivot=None, workers=1):
    """Local expectation gradient from a single pivot sample.

    The pivot is evaluated once; discrete coordinates probe only their
    non-pivot states, so a fully factorized model with ``K`` states per
    coordinate costs ``n (K - 1) + 1`` target evaluations on the generic path.
    """
    _check_dims(model, target)
    rule = gauss_hermite(K) if rule is None else rule
    params = model.params
    objective = _objective(model, target)
    if pivot is None:
        x = model.sample(rng)
    else:
        x = np.array(pivot, dtype=float)
        if x.shape != (model.n,):
            raise InvalidAssignmentError(f"pivot must have shape ({model.n},)")
    state = objective.cache(x)
    f0 = state["f"]
    evaluations = 1

    # local points, weights and scores per block; probes collected as tasks
    plans, tasks = [], []
    for b in model.blocks:
        points, weights = b.local(params, rule)
        scores = b.score(params, points)
        if b.discrete:
            mask, values = _non_pivot_states(x[b.coords].astype(np.intp), b.n_states)
        else:
            mask, values = None, points
        plans.append((b, weights, scores, mask, len(tasks)))
        for lo in range(0, len(b.coords), CHUNK):
            tasks.append((b.coords[lo:lo + CHUNK], values[lo:lo + CHUNK]))
        evaluations += values.size

    # graph nodes: probes batched per state count, one row per node
    node_plans, groups = [], {}
    if model.dag_nodes:
        xs = [int(v) if c else 0 for v, c in zip(x, model._cards_list())]
        tables = model._dag_table_lists()
        for i in model.dag_nodes:
            groups.setdefault(model.n_states(i), []).append(i)
    for k, nodes in sorted(groups.items()):
        mask, values = _non_pivot_states(x[nodes].astype(np.intp), k)
        for lo in range(0, len(nodes), CHUNK):
            chunk = nodes[lo:lo + CHUNK]
            cfgs = [model._config_of(i, xs) for i in chunk]
            weights = np.array([model._blanket_unnormalized(i, xs, tables) for i in chunk])
            totals = weights.sum(axis=1, keepdims=True)
            if not (totals > 0).all():
                raise DegenerateConditionalError(chunk[int(np.flatnonzero(~(totals[:, 0] > 0))[0])])
            plan = dict(
                weights=weights / totals,
                probs=np.array([tables[i][c] for i, c in zip(chunk, cfgs)]),
                starts=np.array([model.factor_slots(i)[0] + c * (k - 1) for i, c in zip(chunk, cfgs)]),
                # same centering as isolated factors, valid only for childless nodes
                base=np.array([0.0 if model.children[i] else f0 for i in chunk]),
                mask=mask[lo:lo + CHUNK],
                task=len(tasks),
            )
            node_plans.append(plan)
            tasks.append((np.array(chunk), values[lo:lo + CHUNK]))
        evaluations += values.size

    def probe(task):
        coords, values = task
        return objective.coordinate_update(state, coords, values)

    if workers > 1 and len(tasks) > 1:
        results = list(_pool(workers).map(probe, tasks))
    else:
        results = [probe(t) for t in tasks]

    # Isolated factors have sum_k w_k score_k = 0 exactly (K >= 2 for
    # quadrature), so centering on f0 is the same estimator and makes a
    # constant f give exact zeros.
    center = f0 if len(rule.nodes) >= 2 else 0.0
    slots, contribs = [], []
    for b, weights, scores, mask, first in plans:
        n_chunks = -(-len(b.coords) // CHUNK)
        probed = np.concatenate(results[first:first + n_chunks], axis=0)
        if mask is None:
            F = probed - center
        else:
            F = np.zeros(mask.shape)
            F[mask] = probed.ravel() - f0
        contribs.append(((weights * F)[:, :, None] * scores).sum(axis=1))
        slots.append(b.slots)
    for plan in node_plans:
        base = plan["base"][:, None]
        F = np.broadcast_to(f0 - base, plan["mask"].shape).copy()
        F[plan["mask"]] = (results[plan["task"]] - base).ravel()
        # score of state s is onehot(s)[1:] - probs[1:] on the row of the pivot's config
        wf = plan["weights"] * F
        k = wf.shape[1]
        contribs.append(wf[:, 1:] - wf.sum(axis=1, keepdims=True) * plan["probs"][:, 1:])
        slots.append(plan["starts"][:, None] + np.arange(k - 1))

    grad = np.bincount(
        np.concatenate([s.ravel() for s in slots]),
        np.concatenate([c.ravel() for c in contribs]),
        minlength=model.n_params,
    )
    return GradientEstimate(_with_entropy(grad, model, target), evaluations, x)


def ldgrad(model, target, S, rng):
    """Score-function estimate ``(1/S) sum_s f(x_s) grad log q(x_s)``, no control variates."""
    if S < 1:
        raise ValueError("S must be >= 1")
    _check_dims(model, target)
    X = model.sample(rng, S)
    F = _objective(model, target).evaluate(X)
    grad = model.weighted_score(X, F / S)
    return GradientEstimate(_with_entropy(grad, model, target), int(S), None)


def _finite_difference_gradient(target, X):
    """Central differences with step ``1e-5 * max(1, |x_i|)`` per coordinate."""
    n = X.shape[1]
    G = np.empty_like(X)
    coords = np.arange(n)
    for s, x in enumerate(X):
        h = 1e-5 * np.maximum(1.0, np.abs(x))
        state = target.cache(x)
        F = target.coordinate_update(state, coords, np.stack([x + h, x - h], axis=1))
        G[s] = (F[:, 0] - F[:, 1]) / (2.0 * h)
    return G


def regrad(model, target, S, rng):
    """Reparameterization estimate with ``x = mu + ell * z``, ``z ~ N(0, I)``."""
    if not model.is_gaussian:
        raise UnsupportedFamilyError("reparameterization needs all-Gaussian factors")
    if S < 1:
        raise ValueError("S must be >= 1")
    _check_dims(model, target)
    b = model.blocks[0]
    mu, ell = b.moments(model.params)
    Z = rng.standard_normal((S, len(mu)))
    X = np.empty_like(Z)
    X[:, b.coords] = mu + ell * Z
    G = target.gradient(X)
    if G is None:
        G = _finite_difference_gradient(target, X)
        evaluations = 2 * S * model.n
    else:
        evaluations = S
    G = G[:, b.coords]
    contrib = np.stack([G.mean(axis=0), (G * Z).mean(axis=0)], axis=1)
    grad = np.bincount(b.slots.ravel(), contrib.ravel(), minlength=model.n_params)
    # the pathwise derivative of -log q(mu + ell z) is the entropy gradient
    if target.entropy in ("closed_form", "monte_carlo"):
        grad = grad + model.entropy_gradient()
    return GradientEstimate(grad, evaluations, None)


def true_gradient_oracle(model, target, limit=2 ** 16):
    """Exact gradient of the objective, for testing.

    Uses full enumeration for all-discrete models and the closed form for a
    factorized Gaussian model against a :class:`GaussianTarget`.
    """
    if model.is_discrete:
        X = model.enumerate_states(limit)
        logq = model.log_density(X)
        F = _objective(model, target).evaluate(X)
        grad = (np.exp(logq) * F) @ model.score_matrix(X)
        return _with_entropy(grad, model, target)
    if model.is_gaussian and isinstance(target, GaussianTarget):
        b = model.blocks[0]
        mu, ell = b.moments(model.params)
        P = target.precision[np.ix_(b.coords, b.coords)]
        contrib = np.stack([-P @ (mu - target.mean[b.coords]), -np.diag(P) * ell], axis=1)
        grad = np.bincount(b.slots.ravel(), contrib.ravel(), minlength=model.n_params)
        if target.entropy in ("closed_form", "monte_carlo"):
            grad = grad + model.entropy_gradient()
        return grad
    raise UnsupportedStructureError("no exact gradient available for this model/target")
