"""Factorized variational distributions structured as a directed graph.

A model is a list of factors, one per latent coordinate, plus a parent list
per coordinate.  All tunable scalars live in one flat parameter vector; each
factor reads its own slice of it (recognition factors may share a slice).

Factors that have neither parents nor children are compiled into vectorized
blocks grouped by kind; discrete factors that take part in the graph are
handled node by node in topological order.
"""

from dataclasses import dataclass, field
from itertools import product
from typing import Hashable, Optional, Sequence

import numpy as np
from scipy.special import expit, xlogy

from .errors import (
    DegenerateConditionalError,
    InvalidAssignmentError,
    InvalidModelError,
    StateSpaceTooLargeError,
    UnsupportedStructureError,
)

PROB_FLOOR = 1e-12
MIN_SCALE = 1e-6
LOG_2PI = np.log(2.0 * np.pi)


def clamp_prob(p):
    return np.clip(p, PROB_FLOOR, 1.0 - PROB_FLOOR)


# ---------------------------------------------------------------------------
# factor specifications
# ---------------------------------------------------------------------------


@dataclass
class Gaussian:
    """Normal factor ``N(x | mu, ell**2)`` parametrized by its standard deviation."""

    mu: float
    ell: float

    def __post_init__(self):
        if not np.isfinite(self.mu):
            raise InvalidModelError(f"mu must be finite, got {self.mu}")
        if not (np.isfinite(self.ell) and self.ell > 0):
            raise InvalidModelError(f"ell must be positive, got {self.ell}")


@dataclass
class Categorical:
    """Discrete factor over ``K`` states.

    ``weights`` is either a single simplex vector or a conditional table with
    one row per joint configuration of the parents (mixed radix, first parent
    most significant).  Internally the factor is parametrized by the logits of
    states ``1..K-1`` relative to state 0, so a two-state factor carries the
    Bernoulli natural parameter.
    """

    weights: np.ndarray

    def __post_init__(self):
        w = np.atleast_2d(np.asarray(self.weights, dtype=float))
        if w.ndim != 2 or w.shape[1] < 2:
            raise InvalidModelError("categorical weights need at least two states")
        if (w < 0).any() or not np.allclose(w.sum(axis=1), 1.0, rtol=0, atol=1e-12):
            raise InvalidModelError("categorical weights must be nonnegative and sum to 1")
        self.weights = w

    @property
    def n_states(self):
        return self.weights.shape[1]

    def logits(self):
        w = np.maximum(self.weights, PROB_FLOOR)
        w = w / w.sum(axis=1, keepdims=True)
        return np.log(w[:, 1:]) - np.log(w[:, :1])


def Bernoulli(p):
    """Two-state categorical with success probability ``p``."""
    return Categorical(np.array([1.0 - p, p]))


@dataclass
class RecognitionBernoulli:
    """Bernoulli factor with success probability ``sigmoid(w . [input, 1])``.

    Factors constructed with the same ``tie`` key share one weight vector.
    """

    weight_vector: np.ndarray
    input: np.ndarray
    tie: Optional[Hashable] = None

    def __post_init__(self):
        self.weight_vector = np.asarray(self.weight_vector, dtype=float).ravel()
        self.input = np.asarray(self.input, dtype=float).ravel()
        if self.weight_vector.size != self.input.size + 1:
            raise InvalidModelError("weight_vector must have length len(input) + 1")


@dataclass(frozen=True)
class MarkovBlanket:
    node: int
    blanket_nodes: frozenset
    child_indices: frozenset = field(default_factory=frozenset)


# ---------------------------------------------------------------------------
# vectorized blocks of isolated factors
# ---------------------------------------------------------------------------


class _GaussianBlock:
    discrete = False
    n_states = None

    def __init__(self, coords, slots):
        self.coords = np.asarray(coords, dtype=np.intp)
        self.slots = np.asarray(slots, dtype=np.intp).reshape(-1, 2)

    def moments(self, params):
        return params[self.slots[:, 0]], params[self.slots[:, 1]]

    def sample(self, params, rng, size):
        mu, ell = self.moments(params)
        return mu + ell * rng.standard_normal((size, len(self.coords)))

    def log_prob(self, params, values):
        mu, ell = self.moments(params)
        r = (values - mu[:, None]) / ell[:, None]
        return -0.5 * LOG_2PI - np.log(ell)[:, None] - 0.5 * r * r

    def score(self, params, values):
        mu, ell = self.moments(params)
        d = values - mu[:, None]
        l2 = (ell * ell)[:, None]
        return np.stack([d / l2, (d * d - l2) / (l2 * ell[:, None])], axis=-1)

    def local(self, params, rule):
        mu, ell = self.moments(params)
        points = mu[:, None] + ell[:, None] * rule.nodes[None, :]
        weights = np.broadcast_to(rule.weights, points.shape)
        return points, weights

    def entropy(self, params):
        _, ell = self.moments(params)
        return float(np.sum(0.5 * (LOG_2PI + 1.0) + np.log(ell)))

    def entropy_grad(self, params):
        _, ell = self.moments(params)
        return np.stack([np.zeros_like(ell), 1.0 / ell], axis=-1)


class _DiscreteBlock:
    """Shared machinery for isolated factors with finitely many states."""

    discrete = True

    def probs(self, params):
        raise NotImplementedError

    def sample(self, params, rng, size):
        p = self.probs(params)
        memo = getattr(self, "_cum_memo", None)
        if memo is not None and memo[0] is p:
            cum = memo[1]
        else:
            cum = np.cumsum(p, axis=1)
            self._cum_memo = (p, cum)
        u = rng.random((size, len(self.coords)))
        states = (u[:, :, None] >= cum[None, :, :]).sum(axis=-1)
        return np.minimum(states, self.n_states - 1).astype(float)

    def log_prob(self, params, values):
        p = self.probs(params)
        idx = values.astype(np.intp)
        return np.log(np.take_along_axis(p, idx, axis=1))

    def local(self, params, rule):
        p = self.probs(params)
        states = np.broadcast_to(np.arange(self.n_states, dtype=float), p.shape)
        return states, p


class _CategoricalBlock(_DiscreteBlock):
    def __init__(self, coords, slots, n_states):
        self.coords = np.asarray(coords, dtype=np.intp)
        self.n_states = n_states
        self.slots = np.asarray(slots, dtype=np.intp).reshape(len(self.coords), n_states - 1)

    _memo = None

    def probs(self, params):
        """Per-coordinate state probabilities (read-only, memoized on the logits)."""
        sub = params[self.slots]
        memo = self._memo
        if memo is not None and (memo[0] == sub).all():
            return memo[1]
        logits = np.concatenate([np.zeros((len(self.coords), 1)), sub], axis=1)
        logits -= logits.max(axis=1, keepdims=True)
        w = np.exp(logits)
        w /= w.sum(axis=1, keepdims=True)
        w.flags.writeable = False
        self._memo = (sub, w)
        return w

    def score(self, params, values):
        p = self.probs(params)
        onehot = values[:, :, None] == np.arange(1, self.n_states)[None, None, :]
        return onehot - p[:, None, 1:]

    def entropy(self, params):
        p = self.probs(params)
        return float(-xlogy(p, p).sum())

    def entropy_grad(self, params):
        p = self.probs(params)
        h = -xlogy(p, p).sum(axis=1, keepdims=True)
        pk = p[:, 1:]
        return -(xlogy(pk, pk) + pk * h)


class _RecognitionBlock(_DiscreteBlock):
    n_states = 2

    def __init__(self, coords, slots, inputs):
        self.coords = np.asarray(coords, dtype=np.intp)
        self.slots = np.asarray(slots, dtype=np.intp)
        self.augmented = np.hstack([inputs, np.ones((len(inputs), 1))])

    def activations(self, params):
        return np.einsum("cs,cs->c", params[self.slots], self.augmented)

    def probs(self, params):
        p = clamp_prob(expit(self.activations(params)))
        return np.stack([1.0 - p, p], axis=1)

    def score(self, params, values):
        s = expit(self.activations(params))
        return (values - s[:, None])[:, :, None] * self.augmented[:, None, :]

    def entropy(self, params):
        p = self.probs(params)
        return float(-xlogy(p, p).sum())

    def entropy_grad(self, params):
        a = self.activations(params)
        s = expit(a)
        p = clamp_prob(s)
        dh = -s * (1.0 - s) * np.log(p / (1.0 - p))
        return dh[:, None] * self.augmented


# ---------------------------------------------------------------------------
# model
# ---------------------------------------------------------------------------


class VariationalModel:
    """Directed factorized variational distribution ``prod_i q(x_i | pa_i)``.

    Parameters
    ----------
    factors : sequence of Gaussian, Categorical or RecognitionBernoulli
    parents : sequence of index sequences, optional
        ``parents[i]`` lists the parents of coordinate ``i``; every parent must
        precede its child.  Only categorical factors may take part in the graph.
    """

    def __init__(self, factors: Sequence, parents: Optional[Sequence[Sequence[int]]] = None):
        self.factors = list(factors)
        n = len(self.factors)
        if n == 0:
            raise InvalidModelError("model needs at least one factor")
        if parents is None:
            parents = [()] * n
        if len(parents) != n:
            raise InvalidModelError("parents must have one entry per factor")
        self.parents = [tuple(int(j) for j in pa) for pa in parents]
        self.children = [[] for _ in range(n)]
        for i, pa in enumerate(self.parents):
            if len(set(pa)) != len(pa):
                raise InvalidModelError(f"duplicate parent of node {i}")
            for j in pa:
                if not 0 <= j < i:
                    raise InvalidModelError(
                        f"parent {j} of node {i} must precede it (topological order)"
                    )
                self.children[j].append(i)
        self.children = [tuple(c) for c in self.children]
        self._build_layout()
        self._build_blocks()

    # -- construction -----------------------------------------------------

    def _build_layout(self):
        values, layout, slots = [], [], []
        tied = {}
        for i, (fac, pa) in enumerate(zip(self.factors, self.parents)):
            if isinstance(fac, Gaussian):
                if pa or self.children[i]:
                    raise InvalidModelError(
                        f"Gaussian factor {i} must have no parents and no children"
                    )
                init = [fac.mu, fac.ell]
            elif isinstance(fac, Categorical):
                n_configs = int(np.prod([self._n_states_of(j) for j in pa], dtype=int))
                if fac.weights.shape[0] == 1 and n_configs > 1:
                    raise InvalidModelError(f"factor {i} needs a table of {n_configs} rows")
                if fac.weights.shape[0] != n_configs:
                    raise InvalidModelError(
                        f"factor {i} table has {fac.weights.shape[0]} rows, expected {n_configs}"
                    )
                init = fac.logits().ravel()
            elif isinstance(fac, RecognitionBernoulli):
                if pa or self.children[i]:
                    raise InvalidModelError(f"recognition factor {i} cannot join the graph")
                if fac.tie is not None and fac.tie in tied:
                    owned = tied[fac.tie]
                    if len(owned) != fac.weight_vector.size:
                        raise InvalidModelError(f"tied factor {i} has mismatched length")
                    slots.append(owned)
                    continue
                init = fac.weight_vector
            else:
                raise InvalidModelError(f"unknown factor kind {type(fac).__name__}")
            start = len(values)
            values.extend(np.asarray(init, dtype=float).tolist())
            own = np.arange(start, len(values), dtype=np.intp)
            layout.extend((i, k) for k in range(len(own)))
            slots.append(own)
            if isinstance(fac, RecognitionBernoulli) and fac.tie is not None:
                tied[fac.tie] = own
        self._params = np.array(values, dtype=float)
        self.parameter_layout = layout
        self._slots = slots

    def _cards_list(self):
        cards = self.__dict__.get("_cards")
        if cards is None:
            cards = self._cards = [self._cardinality(j) for j in range(self.n)]
        return cards

    def _n_states_of(self, i):
        cards = self._cards_list()
        if cards[i] is None:
            raise InvalidModelError(f"node {i} is continuous and cannot be a parent")
        return cards[i]

    def _cardinality(self, i):
        fac = self.factors[i]
        if isinstance(fac, Categorical):
            return fac.n_states
        if isinstance(fac, RecognitionBernoulli):
            return 2
        return None

    def _build_blocks(self):
        gauss, cats, recs, dag = [], {}, {}, []
        for i, fac in enumerate(self.factors):
            isolated = not self.parents[i] and not self.children[i]
            if isinstance(fac, Gaussian):
                gauss.append(i)
            elif isinstance(fac, RecognitionBernoulli):
                recs.setdefault(fac.input.size, []).append(i)
            elif isolated:
                cats.setdefault(fac.n_states, []).append(i)
            else:
                dag.append(i)
        blocks = []
        if gauss:
            blocks.append(_GaussianBlock(gauss, np.stack([self._slots[i] for i in gauss])))
        for k in sorted(cats):
            idx = cats[k]
            blocks.append(_CategoricalBlock(idx, np.stack([self._slots[i] for i in idx]), k))
        for d in sorted(recs):
            idx = recs[d]
            blocks.append(
                _RecognitionBlock(
                    idx,
                    np.stack([self._slots[i] for i in idx]),
                    np.stack([self.factors[i].input for i in idx]),
                )
            )
        self.blocks = blocks
        self.dag_nodes = dag
        self._where = {}
        for b in blocks:
            for pos, i in enumerate(b.coords):
                self._where[int(i)] = (b, pos)
        self._gauss_scale_slots = (
            blocks[0].slots[:, 1] if gauss else np.empty(0, dtype=np.intp)
        )

    # -- parameters -------------------------------------------------------

    @property
    def n(self):
        return len(self.factors)

    @property
    def n_params(self):
        return self._params.size

    @property
    def params(self):
        return self._params

    @params.setter
    def params(self, value):
        value = np.asarray(value, dtype=float)
        if value.shape != self._params.shape:
            raise ValueError(f"expected {self._params.shape} parameters, got {value.shape}")
        self._params = value.copy()

    def factor_slots(self, i):
        """Flat parameter indices read by factor ``i``."""
        return self._slots[i]

    def n_states(self, i):
        """Number of states of coordinate ``i``, or None if continuous."""
        return None if isinstance(self.factors[i], Gaussian) else self._n_states_of(i)

    @property
    def is_discrete(self):
        return all(not isinstance(f, Gaussian) for f in self.factors)

    @property
    def is_gaussian(self):
        return all(isinstance(f, Gaussian) for f in self.factors)

    @property
    def fully_factorized(self):
        return not any(self.parents)

    def scale_slots(self):
        """Flat indices holding Gaussian standard deviations."""
        return self._gauss_scale_slots

    def project(self):
        """Clamp Gaussian scales to at least ``MIN_SCALE`` (in place)."""
        s = self._gauss_scale_slots
        if s.size:
            self._params[s] = np.maximum(self._params[s], MIN_SCALE)

    def copy(self):
        other = object.__new__(VariationalModel)
        other.__dict__.update(self.__dict__)
        other._params = self._params.copy()
        return other

    def with_params(self, params):
        other = self.copy()
        other.params = params
        return other

    # -- graph --------------------------------------------------------------

    def markov_blanket(self, i):
        """Parents, children and co-parents of node ``i``."""
        if not 0 <= i < self.n:
            raise IndexError(i)
        kids = set(self.children[i])
        nodes = set(self.parents[i]) | kids
        for c in kids:
            nodes.update(self.parents[c])
        nodes.discard(i)
        return MarkovBlanket(i, frozenset(nodes), frozenset(kids))

    # -- conditional tables for graph nodes --------------------------------

    def table(self, i, params=None):
        """Conditional probability table of categorical node ``i`` (read-only)."""
        if params is not None:
            return self._compute_table(i, params)
        cache = self._valid_table_cache()
        t = cache.get(i)
        if t is None:
            t = cache[i] = self._compute_table(i, self._params)
            t.flags.writeable = False
        return t

    def _valid_table_cache(self):
        # keyed on a parameter snapshot, so in-place updates invalidate it
        snap = self.__dict__.get("_table_snapshot")
        if snap is None or not (snap == self._params).all():
            self._table_snapshot = self._params.copy()
            self._table_cache = {}
            self._table_lists = None
        return self._table_cache

    def _dag_groups(self):
        """Graph nodes grouped by state count, with batched lookup helpers.

        Per group: ``(k, nodes, radix, offsets, starts, flat)`` where
        ``X @ radix`` gives each node's parent config, ``flat`` stacks the
        nodes' tables so ``flat[offsets + cfg]`` is the conditional row, and
        ``starts`` are the nodes' first parameter slots.
        """
        if not self.dag_nodes:
            return []
        structure = self.__dict__.get("_group_structure")
        if structure is None:
            by_k = {}
            for i in self.dag_nodes:
                by_k.setdefault(self._n_states_of(i), []).append(i)
            structure = []
            for k, nodes in sorted(by_k.items()):
                radix = np.zeros((self.n, len(nodes)))
                offsets, rows = [], 0
                for col, i in enumerate(nodes):
                    m = 1
                    for j in reversed(self.parents[i]):
                        radix[j, col] = m
                        m *= self._n_states_of(j)
                    offsets.append(rows)
                    rows += m
                starts = np.array([self._slots[i][0] for i in nodes])
                structure.append((k, np.array(nodes), radix, np.array(offsets), starts))
            self._group_structure = structure
        cache = self._valid_table_cache()
        flats = cache.get("flat")
        if flats is None:
            tables = self._dag_tables()
            flats = cache["flat"] = [np.concatenate([tables[i] for i in nodes]) for _, nodes, *_ in structure]
        return [st + (flat,) for st, flat in zip(structure, flats)]

    def _dag_table_lists(self):
        """``_dag_tables`` as nested lists, for the scalar single-draw paths."""
        tables = self._dag_tables()
        if self._table_lists is None:
            self._table_lists = {i: tables[i].tolist() for i in self.dag_nodes}
        return self._table_lists

    def _dag_tables(self):
        """Tables of every graph node, validated once."""
        cache = self._valid_table_cache()
        for i in self.dag_nodes:
            if i not in cache:
                cache[i] = self._compute_table(i, self._params)
                cache[i].flags.writeable = False
        return cache

    def _compute_table(self, i, p):
        k = self._n_states_of(i)
        logits = p[self._slots[i]].reshape(-1, k - 1)
        logits = np.hstack([np.zeros((logits.shape[0], 1)), logits])
        logits -= logits.max(axis=1, keepdims=True)
        w = np.exp(logits)
        return w / w.sum(axis=1, keepdims=True)

    def parent_config(self, i, X):
        """Row index into node ``i``'s table for each assignment in ``X``."""
        cfg = np.zeros(X.shape[:-1], dtype=np.intp)
        for j in self.parents[i]:
            cfg = cfg * self._n_states_of(j) + X[..., j].astype(np.intp)
        return cfg

    def _config_of(self, i, xs):
        """``parent_config`` for one assignment given as a list of ints."""
        cards = self._cards_list()
        cfg = 0
        for j in self.parents[i]:
            cfg = cfg * cards[j] + xs[j]
        return cfg

    def _node_score(self, i, states, cfg, tables=None):
        """Score of ``log q(x_i = s | pa_i)`` for each ``s`` in ``states``, one config."""
        k = self._n_states_of(i)
        w = (self.table(i) if tables is None else tables[i])[cfg]
        g = np.zeros((len(states), self._slots[i].size))
        onehot = np.asarray(states)[:, None] == np.arange(1, k)[None, :]
        g[:, cfg * (k - 1):(cfg + 1) * (k - 1)] = onehot - w[1:]
        return g

    # -- core operations ----------------------------------------------------

    def sample(self, rng, size=None):
        """Ancestral sample(s): shape ``(n,)`` or ``(size, n)``."""
        m = 1 if size is None else int(size)
        X = np.empty((m, self.n))
        for b in self.blocks:
            X[:, b.coords] = b.sample(self._params, rng, m)
        if m == 1 and self.dag_nodes:
            # single draw: plain ints avoid per-node array overhead
            X[0, self.dag_nodes] = 0.0
            xs = [int(v) if c else 0 for v, c in zip(X[0], self._cards_list())]
            tables = self._dag_table_lists()
            for i in self.dag_nodes:
                row = tables[i][self._config_of(i, xs)]
                u = rng.random()
                s, acc = 0, row[0]
                while s < len(row) - 1 and u >= acc:
                    s += 1
                    acc += row[s]
                xs[i] = s
                X[0, i] = s
            return X[0] if size is None else X
        tables = self._dag_tables()
        for i in self.dag_nodes:
            cum = np.cumsum(tables[i][self.parent_config(i, X)], axis=1)
            u = rng.random(m)
            states = (u[:, None] >= cum).sum(axis=1)
            X[:, i] = np.minimum(states, cum.shape[1] - 1)
        return X[0] if size is None else X

    def _check(self, X):
        X = np.asarray(X, dtype=float)
        if X.shape[-1] != self.n:
            raise InvalidAssignmentError(f"assignment length {X.shape[-1]} != {self.n}")
        for i, f in enumerate(self.factors):
            if isinstance(f, Gaussian):
                continue
            v = X[..., i]
            if (v != np.round(v)).any() or (v < 0).any() or (v >= self._n_states_of(i)).any():
                raise InvalidAssignmentError(f"coordinate {i} is not a valid state")
        return X

    def log_density(self, x):
        """``log q(x)``; accepts one assignment or a batch ``(B, n)``."""
        X = self._check(x)
        single = X.ndim == 1
        X = np.atleast_2d(X)
        total = np.zeros(X.shape[0])
        with np.errstate(divide="ignore"):
            for b in self.blocks:
                total += b.log_prob(self._params, X[:, b.coords].T).sum(axis=0)
            for i in self.dag_nodes:
                t = self.table(i)[self.parent_config(i, X)]
                total += np.log(t[np.arange(X.shape[0]), X[:, i].astype(np.intp)])
        if not np.isfinite(total).all():
            raise InvalidAssignmentError("assignment has zero density under the model")
        return float(total[0]) if single else total

    def score(self, i, x):
        """Gradient of ``log q(x_i | pa_i)`` with respect to factor ``i``'s parameters."""
        x = self._check(x)
        if i in self._where:
            b, pos = self._where[i]
            sub = _sub_block(b, pos)
            return sub.score(self._params, np.array([[x[i]]]))[0, 0]
        cfg = int(self.parent_config(i, x[None, :])[0])
        return self._node_score(i, [x[i]], cfg)[0]

    def score_matrix(self, X):
        """Full flat score ``grad_v log q(x)`` for each row of ``X``: shape ``(B, P)``."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        B = X.shape[0]
        out = np.zeros((B, self.n_params))
        for b in self.blocks:
            s = b.score(self._params, X[:, b.coords].T).transpose(1, 0, 2)  # (B, c, s)
            if np.unique(b.slots).size == b.slots.size:
                out[:, b.slots.ravel()] += s.reshape(B, -1)
            else:
                np.add.at(out, (np.arange(B)[:, None, None], b.slots[None]), s)
        for i in self.dag_nodes:
            k = self._n_states_of(i)
            cfg = self.parent_config(i, X)
            w = self.table(i)[cfg]
            onehot = X[:, i:i + 1] == np.arange(1, k)[None, :]
            g = onehot - w[:, 1:]
            cols = self._slots[i][0] + cfg[:, None] * (k - 1) + np.arange(k - 1)[None, :]
            np.add.at(out, (np.arange(B)[:, None], cols), g)
        return out

    def weighted_score(self, X, weights):
        """``sum_b weights[b] * grad_v log q(X[b])`` as a flat vector."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        weights = np.asarray(weights, dtype=float)
        slots, vals = [], []
        for b in self.blocks:
            s = b.score(self._params, X[:, b.coords].T)  # (c, B, s)
            slots.append(b.slots.ravel())
            vals.append(np.einsum("cbs,b->cs", s, weights).ravel())
        for k, nodes, radix, offsets, starts, flat in self._dag_groups():
            cfg = (X @ radix).astype(np.intp)  # (B, g) parent configs
            probs = flat[offsets + cfg]  # (B, g, k)
            g = (X[:, nodes][:, :, None] == np.arange(1, k)) - probs[:, :, 1:]
            # a node's slots are contiguous, one run of k - 1 per parent config
            slots.append(((starts + cfg * (k - 1))[:, :, None] + np.arange(k - 1)).ravel())
            vals.append((weights[:, None, None] * g).ravel())
        if not slots:
            return np.zeros(self.n_params)
        return np.bincount(np.concatenate(slots), np.concatenate(vals), minlength=self.n_params)

    def conditional_weights(self, i, x):
        """Distribution of discrete coordinate ``i`` given the rest of ``x``."""
        if self.n_states(i) is None:
            raise UnsupportedStructureError(f"coordinate {i} is continuous")
        if i in self._where:
            b, pos = self._where[i]
            return b.probs(self._params)[pos].copy()
        x = np.asarray(x, dtype=float)
        xs = [int(v) if self.n_states(j) else 0 for j, v in enumerate(x)]
        return self._blanket_weights(i, xs)

    def _blanket_weights(self, i, xs, tables=None):
        """``q(x_i | mb_i)`` for graph node ``i``; ``xs`` is a list of ints."""
        w = self._blanket_unnormalized(i, xs, self._dag_table_lists() if tables is None else tables)
        total = sum(w)
        if not total > 0:
            raise DegenerateConditionalError(i)
        return np.array(w) / total

    def _blanket_unnormalized(self, i, xs, tables):
        w = list(tables[i][self._config_of(i, xs)])
        saved = xs[i]
        for s in range(len(w)):
            xs[i] = s
            for c in self.children[i]:
                w[s] *= tables[c][self._config_of(c, xs)][xs[c]]
        xs[i] = saved
        return w

    def entropy(self):
        if not self.fully_factorized:
            raise UnsupportedStructureError(
                "closed-form entropy needs a fully factorized model; fold -log q into f"
            )
        return sum(b.entropy(self._params) for b in self.blocks)

    def entropy_gradient(self):
        if not self.fully_factorized:
            raise UnsupportedStructureError("closed-form entropy needs a fully factorized model")
        slots, vals = [], []
        for b in self.blocks:
            slots.append(b.slots.ravel())
            vals.append(b.entropy_grad(self._params).ravel())
        return np.bincount(
            np.concatenate(slots), np.concatenate(vals), minlength=self.n_params
        )

    def enumerate_states(self, limit=2 ** 16):
        """All joint assignments of an all-discrete model, shape ``(N, n)``."""
        if not self.is_discrete:
            raise UnsupportedStructureError("enumeration needs an all-discrete model")
        sizes = [self._n_states_of(i) for i in range(self.n)]
        total = int(np.prod(sizes, dtype=float))
        if total > limit:
            raise StateSpaceTooLargeError(f"{total} joint states exceed the limit {limit}")
        return np.array(list(product(*[range(k) for k in sizes])), dtype=float)


def _sub_block(block, pos):
    """Single-coordinate view of a block (used by per-node queries)."""
    sub = object.__new__(type(block))
    sub.__dict__.update(block.__dict__)
    sub.coords = block.coords[pos:pos + 1]
    sub.slots = block.slots[pos:pos + 1]
    if hasattr(block, "augmented"):
        sub.augmented = block.augmented[pos:pos + 1]
    return sub


def recognition_model(V, Y):
    """Recognition distribution over hidden units for each row of ``Y``.

    Coordinate ``i * K + k`` is hidden unit ``k`` of datum ``i`` with success
    probability ``sigmoid(V[k] . [Y[i], 1])``; row ``V[k]`` is shared across data.
    """
    V = np.asarray(V, dtype=float)
    Y = np.asarray(Y, dtype=float)
    factors = [
        RecognitionBernoulli(V[k], Y[i], tie=k)
        for i in range(Y.shape[0])
        for k in range(V.shape[0])
    ]
    return VariationalModel(factors)


def factorized_gaussian(mu, ell):
    mu, ell = np.broadcast_arrays(np.atleast_1d(np.asarray(mu, dtype=float)),
                                  np.atleast_1d(np.asarray(ell, dtype=float)))
    return VariationalModel([Gaussian(float(m), float(s)) for m, s in zip(mu, ell)])
