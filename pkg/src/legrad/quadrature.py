"""Gauss-Hermite rules for expectations under a normal density.

Weights follow the probabilists' convention, so a rule approximates
``E[g(z)]`` for ``z ~ N(0, 1)`` as ``sum(w * g(nodes))`` and the weights form
a probability vector.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import NonFiniteValueError

MAX_NODES = 64


@dataclass(frozen=True)
class QuadratureRule:
    nodes: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        self.nodes.setflags(write=False)
        self.weights.setflags(write=False)

    @property
    def size(self):
        return len(self.nodes)


@lru_cache(maxsize=None)
def gauss_hermite(K):
    """Return the K-point rule, exact for polynomials of degree <= 2K - 1.

    Nodes are the eigenvalues of the symmetric tridiagonal Jacobi matrix of
    the monic probabilists' Hermite recurrence (off-diagonal ``sqrt(k)``);
    each weight is the squared first component of the matching unit
    eigenvector.
    """
    if isinstance(K, bool) or not isinstance(K, (int, np.integer)):
        raise TypeError(f"K must be an integer, got {K!r}")
    if not 1 <= K <= MAX_NODES:
        raise ValueError(f"K must lie in [1, {MAX_NODES}], got {K}")
    K = int(K)
    off = np.sqrt(np.arange(1, K, dtype=float))
    jacobi = np.diag(off, 1) + np.diag(off, -1)
    nodes, vecs = np.linalg.eigh(jacobi)
    weights = vecs[0] ** 2
    # enforce the exact symmetry the recurrence guarantees
    nodes = 0.5 * (nodes - nodes[::-1])
    weights = 0.5 * (weights + weights[::-1])
    if K % 2 == 1:
        nodes[K // 2] = 0.0
    weights = weights / weights.sum()
    return QuadratureRule(nodes, weights)


def expect_gaussian(rule, mu, ell, g):
    """Approximate ``E[g(x)]`` for ``x ~ N(mu, ell**2)``.

    ``g`` is called once with the array of abscissae ``mu + ell * nodes`` and
    must return one value per abscissa.
    """
    if not ell > 0:
        raise ValueError(f"ell must be positive, got {ell}")
    points = mu + ell * rule.nodes
    values = np.asarray(g(points), dtype=float)
    bad = ~np.isfinite(values)
    if bad.any():
        k = int(np.flatnonzero(bad)[0])
        raise NonFiniteValueError(
            f"integrand is {values[k]} at node {k} (x = {points[k]!r})"
        )
    return float(np.dot(rule.weights, values))
