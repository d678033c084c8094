"""Element-level kernels for P1 triangles and Legendre tables.

Every kernel has a vectorised numpy implementation (``*_np``) and a loop
implementation compiled with numba (``*_nb``).  The public names at the bottom
of the module point at one or the other depending on ``_accel.USE_NUMBA``.
Both paths produce identical triplet ordering so assembled matrices are
bitwise comparable up to floating point summation order.
"""

import numpy as np

from . import _accel

_MASS_LOCAL = np.array([[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]]) / 12.0


# ---------------------------------------------------------------- numpy path


def _geometry_np(xy, tri):
    p0 = xy[tri[:, 0]]
    p1 = xy[tri[:, 1]]
    p2 = xy[tri[:, 2]]
    det = (p1[:, 0] - p0[:, 0]) * (p2[:, 1] - p0[:, 1]) - (p2[:, 0] - p0[:, 0]) * (
        p1[:, 1] - p0[:, 1]
    )
    area = 0.5 * det
    grads = np.empty((tri.shape[0], 3, 2))
    grads[:, 0, 0] = p1[:, 1] - p2[:, 1]
    grads[:, 0, 1] = p2[:, 0] - p1[:, 0]
    grads[:, 1, 0] = p2[:, 1] - p0[:, 1]
    grads[:, 1, 1] = p0[:, 0] - p2[:, 0]
    grads[:, 2, 0] = p0[:, 1] - p1[:, 1]
    grads[:, 2, 1] = p1[:, 0] - p0[:, 0]
    grads /= det[:, None, None]
    return area, grads


def stiffness_values_np(xy, tri, coef):
    """Local stiffness entries for every coefficient row.

    ``coef`` has shape (m, T).  Returns an (m, 9T) array ordered triangle by
    triangle, row-major over the local 3x3 block.
    """
    area, grads = _geometry_np(xy, tri)
    local = np.einsum("tid,tjd->tij", grads, grads) * area[:, None, None]
    return (coef[:, :, None, None] * local[None]).reshape(coef.shape[0], -1)


def mass_values_np(xy, tri):
    area, _ = _geometry_np(xy, tri)
    return (area[:, None, None] * _MASS_LOCAL[None]).reshape(-1)


def load_values_np(xy, tri, fmid):
    """Edge-midpoint rule.  ``fmid[:, e]`` is f at the midpoint of edge e,
    with edges ordered (0,1), (1,2), (2,0)."""
    area, _ = _geometry_np(xy, tri)
    out = np.empty((tri.shape[0], 3))
    out[:, 0] = fmid[:, 0] + fmid[:, 2]
    out[:, 1] = fmid[:, 0] + fmid[:, 1]
    out[:, 2] = fmid[:, 1] + fmid[:, 2]
    return (out * (area / 6.0)[:, None]).reshape(-1)


def triangle_gradients_np(xy, tri, values):
    """Gradients of P1 fields.  ``values`` is (N, c); returns (T, c, 2)."""
    _, grads = _geometry_np(xy, tri)
    local = values[tri]  # (T, 3, c)
    return np.einsum("tic,tid->tcd", local, grads)


def triangle_energy_np(xy, tri, values, coef, gmats):
    """Per-triangle energy sum_m coef[m,t] |T| sum_ab G_m[a,b] grad_a . grad_b."""
    area, _ = _geometry_np(xy, tri)
    g = triangle_gradients_np(xy, tri, values)
    inner = np.einsum("tad,mab,tbd->mt", g, gmats, g)
    return (coef * inner).sum(axis=0) * area


def legendre_table_np(z, pmax):
    """Orthonormal Legendre values sqrt(2k+1) P_k(z) for k = 0..pmax."""
    z = np.asarray(z, dtype=float)
    out = np.empty(z.shape + (pmax + 1,))
    out[..., 0] = 1.0
    if pmax >= 1:
        out[..., 1] = z
    for k in range(1, pmax):
        out[..., k + 1] = ((2 * k + 1) * z * out[..., k] - k * out[..., k - 1]) / (k + 1)
    out *= np.sqrt(2.0 * np.arange(pmax + 1) + 1.0)
    return out


# ---------------------------------------------------------------- numba path

if _accel.HAVE_NUMBA:

    @_accel.njit
    def _stiffness_values_nb(xy, tri, coef):
        m = coef.shape[0]
        nt = tri.shape[0]
        out = np.empty((m, 9 * nt))
        g = np.empty((3, 2))
        for t in range(nt):
            a, b, c = tri[t, 0], tri[t, 1], tri[t, 2]
            x0, y0 = xy[a, 0], xy[a, 1]
            x1, y1 = xy[b, 0], xy[b, 1]
            x2, y2 = xy[c, 0], xy[c, 1]
            det = (x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0)
            area = 0.5 * det
            g[0, 0] = (y1 - y2) / det
            g[0, 1] = (x2 - x1) / det
            g[1, 0] = (y2 - y0) / det
            g[1, 1] = (x0 - x2) / det
            g[2, 0] = (y0 - y1) / det
            g[2, 1] = (x1 - x0) / det
            for i in range(3):
                for j in range(3):
                    loc = area * (g[i, 0] * g[j, 0] + g[i, 1] * g[j, 1])
                    for k in range(m):
                        out[k, 9 * t + 3 * i + j] = coef[k, t] * loc
        return out

    @_accel.njit
    def _mass_values_nb(xy, tri):
        nt = tri.shape[0]
        out = np.empty(9 * nt)
        for t in range(nt):
            a, b, c = tri[t, 0], tri[t, 1], tri[t, 2]
            det = (xy[b, 0] - xy[a, 0]) * (xy[c, 1] - xy[a, 1]) - (xy[c, 0] - xy[a, 0]) * (
                xy[b, 1] - xy[a, 1]
            )
            area = 0.5 * det
            for i in range(3):
                for j in range(3):
                    out[9 * t + 3 * i + j] = area * (2.0 if i == j else 1.0) / 12.0
        return out

    @_accel.njit
    def _load_values_nb(xy, tri, fmid):
        nt = tri.shape[0]
        out = np.empty(3 * nt)
        for t in range(nt):
            a, b, c = tri[t, 0], tri[t, 1], tri[t, 2]
            det = (xy[b, 0] - xy[a, 0]) * (xy[c, 1] - xy[a, 1]) - (xy[c, 0] - xy[a, 0]) * (
                xy[b, 1] - xy[a, 1]
            )
            w = 0.5 * det / 6.0
            out[3 * t] = (fmid[t, 0] + fmid[t, 2]) * w
            out[3 * t + 1] = (fmid[t, 0] + fmid[t, 1]) * w
            out[3 * t + 2] = (fmid[t, 1] + fmid[t, 2]) * w
        return out

    @_accel.njit
    def _triangle_gradients_nb(xy, tri, values):
        nt = tri.shape[0]
        nc = values.shape[1]
        out = np.zeros((nt, nc, 2))
        for t in range(nt):
            a, b, c = tri[t, 0], tri[t, 1], tri[t, 2]
            x0, y0 = xy[a, 0], xy[a, 1]
            x1, y1 = xy[b, 0], xy[b, 1]
            x2, y2 = xy[c, 0], xy[c, 1]
            det = (x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0)
            for q in range(nc):
                va, vb, vc = values[a, q], values[b, q], values[c, q]
                out[t, q, 0] = (va * (y1 - y2) + vb * (y2 - y0) + vc * (y0 - y1)) / det
                out[t, q, 1] = (va * (x2 - x1) + vb * (x0 - x2) + vc * (x1 - x0)) / det
        return out

    @_accel.njit
    def _triangle_energy_nb(xy, tri, values, coef, gmats):
        nt = tri.shape[0]
        nc = values.shape[1]
        nm = coef.shape[0]
        g = _triangle_gradients_nb(xy, tri, values)
        out = np.zeros(nt)
        for t in range(nt):
            a, b, c = tri[t, 0], tri[t, 1], tri[t, 2]
            det = (xy[b, 0] - xy[a, 0]) * (xy[c, 1] - xy[a, 1]) - (xy[c, 0] - xy[a, 0]) * (
                xy[b, 1] - xy[a, 1]
            )
            acc = 0.0
            for m in range(nm):
                s = 0.0
                for p in range(nc):
                    for q in range(nc):
                        gm = gmats[m, p, q]
                        if gm != 0.0:
                            s += gm * (g[t, p, 0] * g[t, q, 0] + g[t, p, 1] * g[t, q, 1])
                acc += coef[m, t] * s
            out[t] = acc * 0.5 * det
        return out

    @_accel.njit
    def _legendre_flat_nb(z, pmax):
        n = z.shape[0]
        out = np.empty((n, pmax + 1))
        for i in range(n):
            x = z[i]
            out[i, 0] = 1.0
            if pmax >= 1:
                out[i, 1] = x
            for k in range(1, pmax):
                out[i, k + 1] = ((2 * k + 1) * x * out[i, k] - k * out[i, k - 1]) / (k + 1)
            for k in range(pmax + 1):
                out[i, k] *= np.sqrt(2.0 * k + 1.0)
        return out

    def stiffness_values_nb(xy, tri, coef):
        return _stiffness_values_nb(
            np.ascontiguousarray(xy, dtype=np.float64),
            np.ascontiguousarray(tri, dtype=np.int64),
            np.ascontiguousarray(coef, dtype=np.float64),
        )

    def mass_values_nb(xy, tri):
        return _mass_values_nb(
            np.ascontiguousarray(xy, dtype=np.float64), np.ascontiguousarray(tri, dtype=np.int64)
        )

    def load_values_nb(xy, tri, fmid):
        return _load_values_nb(
            np.ascontiguousarray(xy, dtype=np.float64),
            np.ascontiguousarray(tri, dtype=np.int64),
            np.ascontiguousarray(fmid, dtype=np.float64),
        )

    def triangle_gradients_nb(xy, tri, values):
        return _triangle_gradients_nb(
            np.ascontiguousarray(xy, dtype=np.float64),
            np.ascontiguousarray(tri, dtype=np.int64),
            np.ascontiguousarray(values, dtype=np.float64),
        )

    def triangle_energy_nb(xy, tri, values, coef, gmats):
        return _triangle_energy_nb(
            np.ascontiguousarray(xy, dtype=np.float64),
            np.ascontiguousarray(tri, dtype=np.int64),
            np.ascontiguousarray(values, dtype=np.float64),
            np.ascontiguousarray(coef, dtype=np.float64),
            np.ascontiguousarray(gmats, dtype=np.float64),
        )

    def legendre_table_nb(z, pmax):
        z = np.asarray(z, dtype=np.float64)
        flat = _legendre_flat_nb(np.ascontiguousarray(z.reshape(-1)), int(pmax))
        return flat.reshape(z.shape + (pmax + 1,))


if _accel.USE_NUMBA:
    stiffness_values = stiffness_values_nb
    mass_values = mass_values_nb
    load_values = load_values_nb
    triangle_gradients = triangle_gradients_nb
    triangle_energy = triangle_energy_nb
    legendre_table = legendre_table_nb
else:
    stiffness_values = stiffness_values_np
    mass_values = mass_values_np
    load_values = load_values_np
    triangle_gradients = triangle_gradients_np
    triangle_energy = triangle_energy_np
    legendre_table = legendre_table_np

BACKEND = "numba" if _accel.USE_NUMBA else "numpy"
