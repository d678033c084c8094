"""Online stage: Galerkin solve in the span of the stochastic basis.

The coarse Gram matrix is assembled from the stored basis coefficients.  Each
patch is a rectangle of fine nodes, so the overlap of two patches is again a
rectangle and every block of the Gram matrix is a single tensor contraction
over array views.
"""

from dataclasses import dataclass, field
import time

import numpy as np
import scipy.linalg as sla

from . import fem
from .errors import InvalidArgumentError, SolverError


def _rect(patch, fine):
    """Inclusive fine grid ranges (x0, x1, y0, y1) of a patch."""
    i, j = fine.grid_coords(patch.fine_nodes[[0, -1]])
    return int(i[0]), int(i[1]), int(j[0]), int(j[1])


class _Group:
    """All basis functions of one vertex as an array (ny, nx, |J_i|, n_xi)."""

    def __init__(self, vertex, patch, chaos_pos, arr, fine):
        self.vertex = vertex
        self.patch = patch
        self.chaos_pos = np.asarray(chaos_pos)
        self.rect = _rect(patch, fine)
        x0, x1, y0, y1 = self.rect
        self.arr = arr.reshape(y1 - y0 + 1, x1 - x0 + 1, arr.shape[1], arr.shape[2])
        self.flat = arr

    def view(self, ov):
        x0, x1, y0, y1 = ov
        X0, _, Y0, _ = self.rect
        return self.arr[y0 - Y0 : y1 - Y0 + 1, x0 - X0 : x1 - X0 + 1]


def _overlap(a, b):
    x0, x1 = max(a[0], b[0]), min(a[1], b[1])
    y0, y1 = max(a[2], b[2]), min(a[3], b[3])
    if x0 > x1 or y0 > y1:
        return None
    return x0, x1, y0, y1


@dataclass(eq=False)
class CoarseSystem:
    G: np.ndarray
    n_xi: int
    vertices: np.ndarray
    factorizations: int = 0
    _cho: object = field(default=None, repr=False)
    assembly_seconds: float = 0.0

    @property
    def size(self):
        return self.G.shape[0]

    @property
    def nnz(self):
        return int(np.count_nonzero(self.G))

    def factor(self):
        if self._cho is None:
            try:
                self._cho = sla.cho_factor(self.G)
            except np.linalg.LinAlgError as exc:
                raise SolverError(f"coarse Gram matrix is not positive definite: {exc}") from exc
            self.factorizations += 1
        return self._cho

    def solve(self, load):
        return sla.cho_solve(self.factor(), load)


def assemble_coarse(bset, K):
    """Gram matrix G[(i,k),(j,l)] = (psi_ik, psi_jl)_a over patch overlaps."""
    if K.mesh.n != bset.fine.n or len(K.J) != len(bset.J):
        raise InvalidArgumentError("block stiffness and basis set do not share mesh and index set")
    t0 = time.perf_counter()
    fine = bset.fine
    nxi = bset.n_xi
    groups = [_Group(v, p, c, a, fine) for v, p, c, a in bset.groups()]
    ng = len(groups)
    G = np.zeros((ng * nxi, ng * nxi))
    for a, gi in enumerate(groups):
        nbrs = [(b, ov) for b, gj in enumerate(groups) if (ov := _overlap(gi.rect, gj.rect)) is not None]
        U = np.unique(np.concatenate([groups[b].chaos_pos for b, _ in nbrs]))
        nodes = gi.patch.fine_nodes
        ni, nJi, _ = gi.flat.shape
        W = np.zeros((ni, U.size, nxi))
        for Km, Gm in zip(K.stiff, K.gmats):
            Gsub = Gm[np.ix_(gi.chaos_pos, U)]
            if not np.any(Gsub):
                continue
            T = np.einsum("naq,ab->nbq", gi.flat, Gsub, optimize=True)
            W += (Km[nodes][:, nodes] @ T.reshape(ni, -1)).reshape(ni, U.size, nxi)
        x0, x1, y0, y1 = gi.rect
        W = W.reshape(y1 - y0 + 1, x1 - x0 + 1, U.size, nxi)
        for b, ov in nbrs:
            if b < a:
                continue
            gj = groups[b]
            sel = np.searchsorted(U, gj.chaos_pos)
            X0, _, Y0, _ = gi.rect
            Wv = W[ov[2] - Y0 : ov[3] - Y0 + 1, ov[0] - X0 : ov[1] - X0 + 1]
            if sel.size != U.size:
                Wv = Wv[:, :, sel]
            block = np.tensordot(Wv, gj.view(ov), axes=([0, 1, 2], [0, 1, 2]))
            G[a * nxi : (a + 1) * nxi, b * nxi : (b + 1) * nxi] = block
            G[b * nxi : (b + 1) * nxi, a * nxi : (a + 1) * nxi] = block.T
    G = 0.5 * (G + G.T)  # diagonal blocks are only symmetric to rounding
    vertices = np.array([g.vertex for g in groups])
    return CoarseSystem(G=G, n_xi=nxi, vertices=vertices, assembly_seconds=time.perf_counter() - t0)


@dataclass(eq=False)
class DsmSolution:
    coefficients: np.ndarray
    u: fem.GpcField
    forcing: dict = None

    @property
    def mean(self):
        return self.u.mean

    @property
    def std(self):
        return self.u.std


def coarse_load(bset, b):
    """E[int f psi_jl] = b . (zero-chaos column of psi_jl) for a load vector b."""
    out = np.empty(len(bset))
    for n, bf in enumerate(bset):
        if bf.chaos_pos[0] != 0:
            raise InvalidArgumentError("representation set lacks the zero multi-index")
        out[n] = b[bf.nodes] @ bf.coefficients[:, 0]
    return out


def reconstruct(bset, c):
    """Fine-mesh field sum_n c_n psi_n."""
    out = np.zeros((bset.fine.num_vertices, len(bset.J)))
    for v, patch, chaos_pos, arr in bset.groups():
        n0 = bset.index(v, 0)
        contrib = arr @ c[n0 : n0 + bset.n_xi]
        out[np.ix_(patch.fine_nodes, chaos_pos)] += contrib
    return fem.GpcField(bset.fine, bset.J, out)


def solve_online_load(sys, bset, b, descriptor=None):
    load = coarse_load(bset, b)
    c = sys.solve(load) if np.any(load) else np.zeros_like(load)
    return DsmSolution(coefficients=c, u=reconstruct(bset, c), forcing=descriptor)


def solve_online(sys, bset, f):
    """Galerkin solution for a deterministic forcing ``f``."""
    b = fem.assemble_load(bset.fine, f)
    desc = f.descriptor() if hasattr(f, "descriptor") else None
    return solve_online_load(sys, bset, b, desc)


def stats(sol):
    """Mean and std nodal fields."""
    return sol.u.mean, sol.u.std


def projection_coefficients(bset, u):
    """Measurements (u, phi_j H_l) of a gPC field, in basis ordering."""
    from .offline import measurement_set

    meas = measurement_set(bset.coarse, bset.fine, bset.J, bset.n_xi)
    cols = [bset.J.position(a) for a in meas.stochastic]
    M = meas.weighted.T @ u.coeffs[:, cols]  # (N_x, n_xi)
    return M.reshape(-1)


ERROR_COLUMNS = ("mean_L2", "mean_H1", "std_L2", "std_H1")


def multiquery(sys, bset, forcings, reference):
    """Error table of the online solution against ``reference`` per forcing.

    ``reference`` is any object with ``solve(f)`` returning something with
    ``mean`` and ``std`` nodal fields.  Failures are recorded per row.
    """
    rows = []
    fine = bset.fine
    for n, f in enumerate(forcings):
        desc = f.descriptor() if hasattr(f, "descriptor") else {}
        row = {"forcing_id": n}
        for key in ("k", "l", "phase1", "phase2"):
            row[key] = desc.get(key, float("nan"))
        try:
            t = time.perf_counter()
            sol = solve_online(sys, bset, f)
            row["online_seconds"] = time.perf_counter() - t
            ref = reference.solve(f)
            errs = fem.relative_errors(fine, ref.mean, ref.std, sol.mean, sol.std)
            for key in ERROR_COLUMNS:
                row[key] = errs[key]
        except Exception as exc:  # recorded, not fatal
            for key in ERROR_COLUMNS:
                row.setdefault(key, float("nan"))
            row["error"] = str(exc)
        rows.append(row)
    return rows
