"""Target functions ``f(x)`` whose expectation under ``q`` is optimized.

Every target evaluates batches of assignments and can re-evaluate an
assignment with a single coordinate changed.  Targets that know their own
structure override ``_fast_update`` so those probes cost far less than a full
evaluation; setting ``incremental = False`` forces the generic path.

``entropy`` declares how the entropy of ``q`` enters the objective:
``"closed_form"`` adds it analytically, ``"monte_carlo"`` folds ``-log q(x)``
into ``f``, and ``None`` means the objective is ``E_q[f]`` alone.
"""

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.special import expit

LOG_2PI = np.log(2.0 * np.pi)


def log_sigmoid(a):
    """``log(sigmoid(a))`` without overflow."""
    return -np.logaddexp(0.0, -a)


class Target:
    n: int
    entropy = None
    incremental = True

    def evaluate(self, X):
        raise NotImplementedError

    def __call__(self, X):
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            return float(self.evaluate(X[None, :])[0])
        return self.evaluate(X)

    def gradient(self, X):
        """Analytic ``df/dx`` for a batch, or None when unavailable."""
        return None

    def cache(self, x):
        """Evaluation state of a pivot assignment, reused by coordinate updates."""
        x = np.asarray(x, dtype=float)
        return {"x": x, "f": float(self.evaluate(x[None, :])[0])}

    def coordinate_update(self, state, coords, values):
        """``f`` at the pivot with ``x[coords[c]]`` replaced by ``values[c, j]``.

        Returns an array shaped like ``values``.
        """
        coords = np.asarray(coords, dtype=np.intp)
        values = np.asarray(values, dtype=float)
        if self.incremental:
            fast = self._fast_update(state, coords, values)
            if fast is not None:
                return fast
        c, J = values.shape
        X = np.repeat(state["x"][None, :], c * J, axis=0)
        X[np.arange(c * J), np.repeat(coords, J)] = values.ravel()
        return self.evaluate(X).reshape(c, J)

    def _fast_update(self, state, coords, values):
        return None


class FunctionTarget(Target):
    """Wraps a vectorized callable ``fn(X) -> (B,)``."""

    def __init__(self, fn, n, entropy=None, grad=None):
        self.fn = fn
        self.n = n
        self.entropy = entropy
        self._grad = grad

    def evaluate(self, X):
        return np.asarray(self.fn(X), dtype=float).reshape(X.shape[0])

    def gradient(self, X):
        return None if self._grad is None else np.asarray(self._grad(X), dtype=float)


class TableTarget(Target):
    """Arbitrary ``f`` over a finite joint state space given as a lookup table."""

    def __init__(self, table, entropy=None):
        self.table = np.asarray(table, dtype=float)
        self.shape = self.table.shape
        self.n = self.table.ndim
        self.entropy = entropy

    def evaluate(self, X):
        idx = np.ravel_multi_index(tuple(X.T.astype(np.intp)), self.shape)
        return self.table.ravel()[idx]


class FoldedTarget(Target):
    """``f(x) - log q(x)`` for a fixed snapshot of the variational model."""

    def __init__(self, target, model):
        self.target = target
        self.model = model
        self.n = target.n

    def evaluate(self, X):
        return self.target.evaluate(X) - self.model.log_density(X)


# ---------------------------------------------------------------------------
# correlated Gaussian
# ---------------------------------------------------------------------------


class GaussianTarget(Target):
    """Log-density of ``N(x | mean, cov)``."""

    entropy = "closed_form"

    def __init__(self, mean, cov):
        self.mean = np.asarray(mean, dtype=float).ravel()
        self.cov = np.asarray(cov, dtype=float)
        self.n = self.mean.size
        chol = cho_factor(self.cov, lower=True)
        self.precision = cho_solve(chol, np.eye(self.n))
        self.precision = 0.5 * (self.precision + self.precision.T)
        self.logdet = 2.0 * np.log(np.diag(chol[0])).sum()
        self._const = -0.5 * (self.n * LOG_2PI + self.logdet)

    def logpdf(self, x):
        return self(x)

    def evaluate(self, X):
        R = X - self.mean
        return self._const - 0.5 * np.einsum("bi,bi->b", R @ self.precision, R)

    def gradient(self, X):
        return -(np.asarray(X, dtype=float) - self.mean) @ self.precision

    def cache(self, x):
        x = np.asarray(x, dtype=float)
        r = x - self.mean
        g = self.precision @ r
        return {"x": x, "g": g, "f": float(self._const - 0.5 * r @ g)}

    def _fast_update(self, state, coords, values):
        if "g" not in state:
            return None
        delta = values - state["x"][coords][:, None]
        pii = self.precision[coords, coords][:, None]
        return state["f"] - state["g"][coords][:, None] * delta - 0.5 * pii * delta * delta

    def optimal_factorized(self):
        """Mean and variances of the best fully factorized Gaussian fit."""
        return self.mean.copy(), 1.0 / np.diag(self.precision)

    def expected_logpdf(self, mu, ell):
        """``E[log N(x | mean, cov)]`` for ``x ~ prod N(mu_i, ell_i**2)``."""
        d = np.asarray(mu) - self.mean
        return self._const - 0.5 * (d @ self.precision @ d + np.diag(self.precision) @ np.square(ell))


def kernel_covariance(n=100, lo=0.0, hi=10.0, nugget=0.1, lengthscale=1.0):
    """Squared-exponential kernel on a uniform grid plus a diagonal nugget."""
    t = np.linspace(lo, hi, n)
    d = t[:, None] - t[None, :]
    return np.exp(-0.5 * (d / lengthscale) ** 2) + nugget * np.eye(n)


class CorrelatedGaussianTarget(GaussianTarget):
    """The strongly correlated Gaussian used for the factorized-fit experiment."""

    def __init__(self, n=100, mean=2.0, nugget=0.1, lo=0.0, hi=10.0):
        super().__init__(np.full(n, float(mean)), kernel_covariance(n, lo, hi, nugget))


# ---------------------------------------------------------------------------
# Bayesian logistic regression
# ---------------------------------------------------------------------------


def with_bias(X):
    X = np.asarray(X, dtype=float)
    return np.hstack([X, np.ones((X.shape[0], 1))])


class LogisticRegressionTarget(Target):
    """``sum_m log sigmoid(y_m z_m . w) + log N(w | 0, prior_variance I)``.

    ``inputs`` already carries the bias column.
    """

    entropy = "closed_form"
    _max_block = 4_000_000

    def __init__(self, inputs, labels, prior_variance=1.0):
        self.inputs = np.asarray(inputs, dtype=float)
        self.labels = np.asarray(labels, dtype=float).ravel()
        if not np.isin(self.labels, (-1.0, 1.0)).all():
            raise ValueError("labels must be -1 or +1")
        if self.labels.size != self.inputs.shape[0]:
            raise ValueError("one label per input row required")
        if not prior_variance > 0:
            raise ValueError("prior_variance must be positive")
        self.prior_variance = float(prior_variance)
        self.n = self.inputs.shape[1]
        self.signed = self.labels[:, None] * self.inputs
        self._prior_const = -0.5 * self.n * (LOG_2PI + np.log(self.prior_variance))

    def logjoint(self, w):
        return self(w)

    def _prior(self, W):
        return self._prior_const - 0.5 * np.einsum("...i,...i->...", W, W) / self.prior_variance

    def evaluate(self, X):
        A = X @ self.signed.T
        return log_sigmoid(A).sum(axis=1) + self._prior(X)

    def gradient(self, X):
        X = np.asarray(X, dtype=float)
        A = X @ self.signed.T
        return expit(-A) @ self.signed - X / self.prior_variance

    def cache(self, x):
        x = np.asarray(x, dtype=float)
        a = self.signed @ x
        return {"x": x, "a": a, "f": float(log_sigmoid(a).sum() + self._prior(x))}

    def _fast_update(self, state, coords, values):
        if "a" not in state:
            return None
        x, a = state["x"], state["a"]
        sq = float(x @ x)
        out = np.empty_like(values)
        step = max(1, self._max_block // max(1, values.shape[1] * a.size))
        for lo in range(0, len(coords), step):
            c = coords[lo:lo + step]
            delta = values[lo:lo + step] - x[c][:, None]
            A = a[None, None, :] + delta[:, :, None] * self.signed[:, c].T[:, None, :]
            # prior term changes only through coordinate c
            new_sq = sq - x[c][:, None] ** 2 + values[lo:lo + step] ** 2
            out[lo:lo + step] = (
                log_sigmoid(A).sum(axis=2)
                + self._prior_const - 0.5 * new_sq / self.prior_variance
            )
        return out


# ---------------------------------------------------------------------------
# one-layer sigmoid belief network
# ---------------------------------------------------------------------------


class SigmoidBeliefNetTarget(Target):
    """Summed log-likelihood ``sum_i log p(y_i | x_i, W)`` of a sigmoid belief net.

    ``W`` has shape ``(D, K + 1)`` with the bias in the last column.  The
    assignment stacks the hidden vectors of all data: coordinate ``i * K + k``
    is unit ``k`` of datum ``i``.  The prior over hidden units is uniform and
    contributes nothing here.
    """

    entropy = "closed_form"

    def __init__(self, W, data):
        self.W = np.asarray(W, dtype=float)
        self.data = np.asarray(data, dtype=float)
        if not np.isin(self.data, (0.0, 1.0)).all():
            raise ValueError("data must be binary")
        self.D, k1 = self.W.shape
        self.K = k1 - 1
        if self.data.shape[1] != self.D:
            raise ValueError("data width must match W")
        self.m = self.data.shape[0]
        self.n = self.m * self.K
        self.signs = 2.0 * self.data - 1.0

    def activations(self, H):
        """``W [h; 1]`` for hidden vectors ``H`` of shape ``(..., K)``."""
        return H @ self.W[:, :-1].T + self.W[:, -1]

    def loglik(self, i, x):
        """``log p(y_i | x)`` for one binary hidden vector (or a batch of them)."""
        a = self.activations(np.asarray(x, dtype=float))
        return log_sigmoid(self.signs[i] * a).sum(axis=-1)

    def w_gradient(self, i, x):
        """Gradient of ``loglik(i, x)`` with respect to ``W``."""
        h = np.append(np.asarray(x, dtype=float), 1.0)
        resid = self.data[i] - expit(self.W @ h)
        return np.outer(resid, h)

    def evaluate(self, X):
        H = X.reshape(X.shape[0], self.m, self.K)
        A = self.activations(H)
        return log_sigmoid(self.signs[None] * A).sum(axis=(1, 2))

    def cache(self, x):
        x = np.asarray(x, dtype=float)
        A = self.activations(x.reshape(self.m, self.K))
        per = log_sigmoid(self.signs * A).sum(axis=1)
        return {"x": x, "A": A, "per": per, "f": float(per.sum())}

    def _fast_update(self, state, coords, values):
        if "A" not in state:
            return None
        i, k = np.divmod(coords, self.K)
        delta = values - state["x"][coords][:, None]
        A = state["A"][i][:, None, :] + delta[:, :, None] * self.W[:, k].T[:, None, :]
        per = log_sigmoid(self.signs[i][:, None, :] * A).sum(axis=2)
        return state["f"] + per - state["per"][i][:, None]
