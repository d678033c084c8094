"""Random coefficient fields a(x, y, xi) with xi uniform on [0,1]^r.

All shipped fields are affine in xi:  a = a0(x,y) + sum_i xi_i a_i(x,y).
The affine split is kept explicitly because it makes the stochastic Galerkin
operator a short sum of Kronecker products; fields without it fall back to
sampling on a quadrature grid.
"""

from dataclasses import dataclass, field
import hashlib
import json

import numpy as np

from .errors import InvalidArgumentError

TWO_PI = 2.0 * np.pi

EXAMPLE1_EPS = (1 / 11, 1 / 14, 1 / 17)
EXAMPLE1_P = (1.6, 1.4, 1.5)

EXAMPLE3_EPS = (
    1 / 11.1, 1 / 10.2, 1 / 15.1, 1 / 15.4, 1 / 13.9, 1 / 16.1,
    1 / 17.3, 1 / 11.3, 1 / 13.3, 1 / 18.1, 1 / 16.7, 1 / 18,
)
EXAMPLE3_P = (1.81, 1.85, 1.90, 1.87, 1.82, 1.85, 1.89, 1.85, 1.82, 1.83, 1.84, 1.86)
# D4 is printed with zero height in the source; the square matching D1-D3 is used.
EXAMPLE3_BOXES = (
    ((1 / 8, 3 / 8), (1 / 8, 3 / 8)),
    ((5 / 8, 7 / 8), (1 / 8, 3 / 8)),
    ((1 / 8, 3 / 8), (5 / 8, 7 / 8)),
    ((5 / 8, 7 / 8), (5 / 8, 7 / 8)),
)
EXAMPLE3_CAPS = {
    0: (3, 3, 3, 1, 1, 1, 1, 1, 1, 0, 0, 0),
    1: (1, 1, 1, 3, 3, 3, 0, 0, 0, 1, 1, 1),
    2: (1, 1, 1, 0, 0, 0, 3, 3, 3, 1, 1, 1),
    3: (0, 0, 0, 1, 1, 1, 1, 1, 1, 3, 3, 3),
}


@dataclass(frozen=True, eq=False)
class CoefficientField:
    name: str
    r: int
    descriptor: dict
    mean_part: object  # (x, y) -> array
    linear_parts: tuple = None  # r callables (x, y) -> array, None entries are zero
    func: object = None  # (x, y, xi) -> array, for non-affine fields
    supports: tuple = field(default=None, repr=False)  # optional per-variable boxes

    @property
    def is_affine(self):
        return self.linear_parts is not None

    @property
    def deterministic(self):
        return self.is_affine and all(part is None for part in self.linear_parts)

    def spatial_terms(self, x, y):
        """(r+1, npts) array: a0 followed by each a_i (zeros where absent)."""
        if not self.is_affine:
            raise InvalidArgumentError(f"field {self.name!r} has no affine decomposition")
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        out = np.zeros((self.r + 1,) + np.broadcast(x, y).shape)
        out[0] = self.mean_part(x, y)
        for i, part in enumerate(self.linear_parts):
            if part is not None:
                out[i + 1] = part(x, y)
        return out

    def eval(self, x, y, xi):
        xi = np.asarray(xi, dtype=float).reshape(-1)
        if xi.size != self.r:
            raise InvalidArgumentError(f"expected {self.r} random variables, got {xi.size}")
        if not self.is_affine:
            return self.func(np.asarray(x, float), np.asarray(y, float), xi)
        terms = self.spatial_terms(x, y)
        return terms[0] + np.tensordot(xi, terms[1:], axes=(0, 0))

    def eval_samples(self, x, y, XI):
        """Coefficient at points (npts,) for samples XI (M, r) -> (npts, M)."""
        XI = np.atleast_2d(np.asarray(XI, dtype=float))
        if self.is_affine:
            terms = self.spatial_terms(x, y)
            return terms[0][:, None] + terms[1:].T @ XI.T
        return np.column_stack([self.func(x, y, xi) for xi in XI])

    def box_minimum(self, x, y):
        """Exact minimum over xi in [0,1]^r at each point (affine fields only)."""
        terms = self.spatial_terms(x, y)
        return terms[0] + np.minimum(terms[1:], 0.0).sum(axis=0)

    def descriptor_hash(self):
        blob = json.dumps(self.descriptor, sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()


def _ratio_term(num_trig, num_arg, den_trig, den_arg, p, eps):
    """(2 + p num_trig(2 pi num_arg / eps)) / (2 - p den_trig(2 pi den_arg / eps))."""

    def term(x, y):
        return (2.0 + p * num_trig(TWO_PI * num_arg(x, y) / eps)) / (
            2.0 - p * den_trig(TWO_PI * den_arg(x, y) / eps)
        )

    return term


def _const(c):
    return lambda x, y: np.full(np.broadcast(x, y).shape, float(c))


def _in_box(box, x, y):
    (x0, x1), (y0, y1) = box
    return (x >= x0) & (x < x1) & (y >= y0) & (y < y1)


def _masked(term, box):
    return lambda x, y: np.where(_in_box(box, x, y), term(x, y), 0.0)


_dxy = lambda x, y: x - y  # noqa: E731
_x = lambda x, y: x  # noqa: E731
_y = lambda x, y: y  # noqa: E731
_xs = lambda x, y: x - 0.5  # noqa: E731
_ys = lambda x, y: y - 0.5  # noqa: E731


def example1():
    """Three-variable oscillatory field, offset 0.1."""
    (e1, e2, e3), (p1, p2, p3) = EXAMPLE1_EPS, EXAMPLE1_P
    parts = (
        _ratio_term(np.sin, _dxy, np.cos, _dxy, p1, e1),
        _ratio_term(np.cos, _y, np.sin, _x, p2, e2),
        _ratio_term(np.sin, _xs, np.cos, _ys, p3, e3),
    )
    desc = {"name": "example1", "eps": list(EXAMPLE1_EPS), "p": list(EXAMPLE1_P), "offset": 0.1}
    return CoefficientField("example1", 3, desc, _const(0.1), parts)


def _cell_lookup(values):
    values = np.asarray(values, dtype=float)
    m = values.shape[0]

    def f(x, y):
        i = np.clip(np.floor(np.asarray(x) * m).astype(int), 0, m - 1)
        j = np.clip(np.floor(np.asarray(y) * m).astype(int), 0, m - 1)
        return values[j, i]

    return f


def example2_cells(seed, sizes=(5, 9, 17)):
    """|theta_i| cell values on the given grids, theta_i ~ N(0,1) per cell."""
    rng = np.random.default_rng(seed)
    return [np.abs(rng.standard_normal((m, m))) for m in sizes]


def piecewise(cells, offset, name="piecewise", extra=None):
    """a = offset + sum_i xi_i k_i with k_i piecewise constant on uniform grids.

    ``cells[i]`` is an (m, m) array; row index is the y cell, column the x cell.
    """
    cells = [np.asarray(c, dtype=float) for c in cells]
    desc = {"name": name, "offset": float(offset), "cells": [c.tolist() for c in cells]}
    if extra:
        desc.update(extra)
    return CoefficientField(name, len(cells), desc, _const(offset), tuple(_cell_lookup(c) for c in cells))


def example2(seed=0):
    """Random combination of three rough piecewise-constant fields, offset 0.5."""
    return piecewise(example2_cells(seed), 0.5, name="example2", extra={"seed": int(seed)})


def example3():
    """Twelve-variable field whose randomness lives in four disjoint boxes."""
    eps, ps = EXAMPLE3_EPS, EXAMPLE3_P
    shapes = (
        (np.sin, _x, np.cos, _y),
        (np.cos, _x, np.sin, _y),
        (np.sin, _dxy, np.cos, _dxy),
        (np.cos, _xs, np.sin, _dxy),
    )
    parts = []
    supports = []
    for g, box in enumerate(EXAMPLE3_BOXES):
        nt, na, dt, da = shapes[g]
        for i in range(3 * g, 3 * g + 3):
            parts.append(_masked(_ratio_term(nt, na, dt, da, ps[i], eps[i]), box))
            supports.append(box)
    desc = {
        "name": "example3",
        "eps": list(eps),
        "p": list(ps),
        "offset": 0.2,
        "boxes": [list(map(list, b)) for b in EXAMPLE3_BOXES],
    }
    return CoefficientField("example3", 12, desc, _const(0.2), tuple(parts), supports=tuple(supports))


def single_variable(which="example1", seed=0):
    """One-variable fields used by the convergence studies.

    ``example1``: 0.1 + ratio(x - y; p=1.6, eps=1/14) xi.
    ``example2``: xi k_3 + 0.5 with k_3 the 17x17 field of ``example2(seed)``.
    ``localized``: 0.1 + ratio(x, y; p=1.5, eps=1/31) xi on [1/8,3/8]^2 only.
    """
    if which == "example1":
        part = _ratio_term(np.sin, _dxy, np.cos, _dxy, 1.6, 1 / 14)
        desc = {"name": "single_example1", "eps": 1 / 14, "p": 1.6, "offset": 0.1}
        return CoefficientField("single_example1", 1, desc, _const(0.1), (part,))
    if which == "example2":
        k3 = example2_cells(seed)[2]
        return piecewise([k3], 0.5, name="single_example2", extra={"seed": int(seed)})
    if which == "localized":
        box = EXAMPLE3_BOXES[0]
        part = _masked(_ratio_term(np.sin, _x, np.cos, _y, 1.5, 1 / 31), box)
        desc = {"name": "localized", "eps": 1 / 31, "p": 1.5, "offset": 0.1, "box": [list(b) for b in box]}
        return CoefficientField("localized", 1, desc, _const(0.1), (part,), supports=(box,))
    raise InvalidArgumentError(f"unknown single-variable field {which!r}")


def constant(value=1.0, r=1):
    """Deterministic field a = value, carried with ``r`` inert random variables."""
    if value <= 0:
        raise InvalidArgumentError("constant coefficient must be positive")
    desc = {"name": "constant", "value": float(value), "r": int(r)}
    return CoefficientField("constant", r, desc, _const(value), (None,) * r)


def affine(mean_part, linear_parts, name="affine", descriptor=None):
    """User-supplied affine field from spatial callables."""
    linear_parts = tuple(linear_parts)
    desc = dict(descriptor or {"name": name})
    return CoefficientField(name, len(linear_parts), desc, mean_part, linear_parts)


def from_function(func, r, name="custom", descriptor=None):
    """User-supplied field with no affine structure; ``func(x, y, xi)``."""
    desc = dict(descriptor or {"name": name})
    return CoefficientField(name, r, desc, None, None, func=func)


def by_name(name, seed=0, value=1.0):
    """Factory used by the CLI configuration."""
    table = {
        "example1": example1,
        "example2": lambda: example2(seed),
        "example3": example3,
        "single_example1": lambda: single_variable("example1"),
        "single_example2": lambda: single_variable("example2", seed),
        "localized": lambda: single_variable("localized"),
        "constant": lambda: constant(value),
    }
    if name not in table:
        raise InvalidArgumentError(f"unknown coefficient {name!r}; choose from {sorted(table)}")
    return table[name]()


def positivity_probe(field, grid=201, samples=100, seed=0):
    """Minimum of the field over a grid x grid spatial probe and random xi."""
    t = np.linspace(0.0, 1.0, grid)
    X, Y = np.meshgrid(t, t)
    x, y = X.ravel(), Y.ravel()
    rng = np.random.default_rng(seed)
    XI = rng.random((samples, field.r))
    if field.r:
        XI[0] = 0.0
        XI[-1] = 1.0
    lo = np.inf
    for start in range(0, samples, 20):
        lo = min(lo, float(field.eval_samples(x, y, XI[start : start + 20]).min()))
    return lo
