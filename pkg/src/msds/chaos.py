"""Legendre polynomial chaos for independent uniform random variables.

Chaos functions are orthonormal under the uniform law on [0,1] (or [-1,1]
when requested), so the mean of an expansion is the coefficient of the zero
multi-index and its variance is the sum of the squared remaining ones.
"""

from dataclasses import dataclass
from functools import cached_property
import math

import numpy as np

from . import _kernels
from .errors import InvalidArgumentError

UNIT = (0.0, 1.0)
SYMMETRIC = (-1.0, 1.0)


@dataclass(frozen=True, eq=False)
class IndexSet:
    """Ordered multi-index set; graded, then lexicographically descending."""

    r: int
    p: int
    indices: np.ndarray  # (N, r) int
    caps: tuple = None  # per-coordinate caps for anisotropic sets

    def __len__(self):
        return self.indices.shape[0]

    def __iter__(self):
        return (tuple(int(v) for v in row) for row in self.indices)

    def __getitem__(self, k):
        return tuple(int(v) for v in self.indices[k])

    @property
    def kind(self):
        return "total" if self.caps is None else "anisotropic"

    @property
    def max_degree(self):
        return int(self.indices.max()) if self.indices.size else 0

    @cached_property
    def _lookup(self):
        return {tuple(int(v) for v in row): k for k, row in enumerate(self.indices)}

    def position(self, alpha):
        try:
            return self._lookup[tuple(int(v) for v in alpha)]
        except KeyError:
            raise InvalidArgumentError(f"multi-index {tuple(alpha)} not in the index set") from None

    def __contains__(self, alpha):
        return tuple(int(v) for v in alpha) in self._lookup

    def positions_in(self, other):
        """Positions of this set's members inside ``other``."""
        return np.array([other.position(a) for a in self], dtype=np.int64)

    def descriptor(self):
        d = {"r": self.r, "p": self.p, "kind": self.kind, "size": len(self)}
        if self.caps is not None:
            d["caps"] = list(self.caps)
        return d


def _graded_sort(rows, r):
    rows = sorted(set(rows), key=lambda a: (sum(a), tuple(-v for v in a)))
    return np.array(rows, dtype=np.int64).reshape(len(rows), r)


def _enumerate(r, p, caps):
    out = []

    def rec(prefix, left, i):
        if i == r:
            out.append(tuple(prefix))
            return
        for v in range(min(left, caps[i]) + 1):
            prefix.append(v)
            rec(prefix, left - v, i + 1)
            prefix.pop()

    rec([], p, 0)
    return out


def total_degree_set(r, p):
    """All multi-indices of length ``r`` with total degree at most ``p``."""
    if r < 0 or p < 0:
        raise InvalidArgumentError("r and p must be nonnegative")
    rows = _enumerate(r, p, [p] * r)
    return IndexSet(r=r, p=p, indices=_graded_sort(rows, r))


def anisotropic_set(r, p, t):
    """Total degree at most ``p`` with the i-th entry capped by ``t[i]``."""
    t = tuple(int(v) for v in t)
    if len(t) != r:
        raise InvalidArgumentError(f"caps vector has length {len(t)}, expected {r}")
    rows = _enumerate(r, p, t)
    return IndexSet(r=r, p=p, indices=_graded_sort(rows, r), caps=t)


def union(sets):
    """Graded union of index sets sharing the same dimension."""
    sets = list(sets)
    r = sets[0].r
    rows = [a for s in sets for a in s]
    return IndexSet(r=r, p=max(s.p for s in sets), indices=_graded_sort(rows, r))


def from_indices(r, rows, p=None):
    rows = [tuple(int(v) for v in a) for a in rows]
    if p is None:
        p = max((sum(a) for a in rows), default=0)
    return IndexSet(r=r, p=p, indices=_graded_sort(rows, r))


def _to_reference(x, interval):
    lo, hi = interval
    return (2.0 * np.asarray(x, dtype=float) - (lo + hi)) / (hi - lo)


def legendre_1d(x, pmax, interval=UNIT):
    """Orthonormal Legendre values for degrees 0..pmax; shape x.shape + (pmax+1,)."""
    return _kernels.legendre_table(_to_reference(x, interval), int(pmax))


def poly_eval(alpha, xi, interval=UNIT):
    """Evaluate the tensor chaos function for multi-index ``alpha`` at ``xi``."""
    alpha = np.asarray(alpha, dtype=np.int64).ravel()
    xi = np.asarray(xi, dtype=float)
    lo, hi = interval
    if xi.shape[-1] != alpha.size:
        raise InvalidArgumentError("point dimension does not match the multi-index")
    if np.any(xi < lo) or np.any(xi > hi):
        raise InvalidArgumentError(f"point outside [{lo}, {hi}]^r")
    if alpha.size == 0:
        return np.ones(xi.shape[:-1]) if xi.ndim > 1 else 1.0
    table = legendre_1d(xi, int(alpha.max()), interval)  # (..., r, pmax+1)
    vals = np.take_along_axis(table, alpha.reshape((1,) * (xi.ndim - 1) + (-1, 1)), axis=-1)
    out = vals[..., 0].prod(axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def eval_basis(J, xi, interval=UNIT):
    """Values of every chaos function in ``J`` at points ``xi`` (M, r) -> (M, |J|)."""
    xi = np.atleast_2d(np.asarray(xi, dtype=float))
    M = xi.shape[0]
    out = np.ones((M, len(J)))
    if J.r == 0:
        return out
    table = legendre_1d(xi, max(J.max_degree, 0), interval)  # (M, r, pmax+1)
    for i in range(J.r):
        out *= table[:, i, J.indices[:, i]]
    return out


@dataclass(frozen=True, eq=False)
class QuadRule:
    """Tensor Gauss-Legendre rule with weights summing to one."""

    r: int
    q: int
    nodes_1d: np.ndarray
    weights_1d: np.ndarray
    interval: tuple = UNIT

    @cached_property
    def nodes(self):
        if self.r == 0:
            return np.zeros((1, 0))
        grids = np.meshgrid(*([self.nodes_1d] * self.r), indexing="ij")
        return np.column_stack([g.ravel() for g in grids])

    @cached_property
    def weights(self):
        if self.r == 0:
            return np.ones(1)
        w = self.weights_1d
        for _ in range(self.r - 1):
            w = np.multiply.outer(w, self.weights_1d)
        return np.asarray(w).ravel()

    @property
    def size(self):
        return self.q**self.r


def quad_rule(r, q, interval=UNIT):
    if q < 1:
        raise InvalidArgumentError("need at least one point per dimension")
    z, w = np.polynomial.legendre.leggauss(int(q))
    lo, hi = interval
    nodes = 0.5 * (hi - lo) * z + 0.5 * (hi + lo)
    for arr in (nodes, w):
        arr.setflags(write=False)
    return QuadRule(r=int(r), q=int(q), nodes_1d=nodes, weights_1d=0.5 * w, interval=interval)


def default_points(p):
    return p + 2


def gram_check(J, Q):
    """Largest deviation of the quadrature Gram matrix from the identity."""
    V = eval_basis(J, Q.nodes, Q.interval)
    gram = V.T @ (Q.weights[:, None] * V)
    return float(np.abs(gram - np.eye(len(J))).max())


def linear_moments(J, Q, coordinate, rows=None, cols=None):
    """E[xi_c H_a H_b] over ``rows`` x ``cols`` of ``J``, with the tensor rule
    evaluated coordinate by coordinate.

    ``coordinate=None`` gives E[H_a H_b].
    """
    rows = np.arange(len(J)) if rows is None else np.asarray(rows)
    cols = np.arange(len(J)) if cols is None else np.asarray(cols)
    A = J.indices[rows]
    B = J.indices[cols]
    pmax = max(J.max_degree, 0)
    table = legendre_1d(Q.nodes_1d, pmax, Q.interval)  # (q, pmax+1)
    w = Q.weights_1d
    plain = np.einsum("q,qa,qb->ab", w, table, table)
    lin = np.einsum("q,q,qa,qb->ab", w, Q.nodes_1d, table, table)
    out = np.ones((len(rows), len(cols)))
    for i in range(J.r):
        m = lin if i == coordinate else plain
        out *= m[A[:, i][:, None], B[:, i][None, :]]
    return out


def measurement_indices(J, n_xi):
    """The first ``n_xi`` members of ``J`` (graded order), as multi-indices."""
    if not 1 <= n_xi <= len(J):
        raise InvalidArgumentError(f"n_xi={n_xi} outside [1, {len(J)}]")
    return [J[k] for k in range(n_xi)]


def cardinality(r, p):
    return math.comb(p + r, r)

