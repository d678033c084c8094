"""Offline stage: localized data-driven stochastic basis functions.

Each basis function psi_{i,k} minimizes the energy E[int a |grad psi|^2] over
fields supported in a patch around coarse vertex i, subject to the
measurement constraints E[int psi phi_j H_l] = delta_ij delta_kl.  On a patch
the unknowns are the chaos coefficients of psi at the free fine nodes, laid
out node-major, and the optimality conditions form the saddle-point system

    [ K   C^T ] [ b      ]   [ 0 ]
    [ C   0   ] [ lambda ] = [ e ].

Two solution routes are provided.  ``direct`` factors the full indefinite
matrix with SuperLU.  ``iterative`` runs projected preconditioned CG with the
constraint preconditioner built from the mean stiffness; every iterate then
satisfies the constraints to rounding and only one small dense Schur
complement is formed per patch.  Both reuse their factorizations across all
right-hand sides of a patch.
"""

from collections import OrderedDict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
import json
import logging
import struct
import time

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import fem
from .chaos import IndexSet, anisotropic_set, union
from .errors import BasisFormatError, InfeasibleConstraintError, InvalidArgumentError, SolverError
from .mesh import default_layers, hat_matrix, make_patch, nest

log = logging.getLogger(__name__)

KKT_TOL = 1e-9
DIRECT_LIMIT = 12000  # unknowns above which "auto" switches to the iterative route


# -------------------------------------------------------------- measurements


@dataclass(frozen=True, eq=False)
class MeasurementSet:
    """Coarse hats phi_j times the first ``n_xi`` chaos functions of J."""

    coarse: object
    fine: object
    J: IndexSet
    n_xi: int
    hats: sp.csc_matrix  # fine nodes x coarse interior vertices
    weighted: sp.csc_matrix  # mass @ hats, the constraint rows

    @property
    def num_spatial(self):
        return self.hats.shape[1]

    @property
    def stochastic(self):
        return [self.J[k] for k in range(self.n_xi)]

    def column_of(self, vertex):
        """Position of a coarse vertex among the interior vertices."""
        col = np.searchsorted(self.coarse.interior, vertex)
        if col >= self.coarse.interior.size or self.coarse.interior[col] != vertex:
            raise InvalidArgumentError(f"coarse vertex {vertex} is not interior")
        return int(col)


def measurement_set(coarse, fine, J, n_xi=None):
    n_xi = default_nxi(J) if n_xi is None else int(n_xi)
    if not 1 <= n_xi <= len(J):
        raise InvalidArgumentError(f"n_xi={n_xi} outside [1, {len(J)}]")
    nest(coarse, fine)
    P = hat_matrix(coarse, fine)
    W = (fem.assemble_mass(fine) @ P).tocsc()
    return MeasurementSet(coarse, fine, J, n_xi, P, W)


def default_nxi(J):
    """All chaos of total degree <= 1, capped by |J|."""
    return min(J.r + 1, len(J))


# --------------------------------------------------------------- truncation


@dataclass(frozen=True)
class RegionTruncation:
    """Per-vertex anisotropic index sets driven by subdomain boxes.

    A vertex inside ``regions[g][0]`` (closed box) gets caps ``regions[g][1]``.
    Other vertices get cap 1 on every variable whose support box meets the
    patch and cap 0 elsewhere; without support information they keep J.
    """

    p: int
    regions: tuple  # ((((x0, x1), (y0, y1)), caps), ...)
    supports: tuple = None  # optional per-variable boxes

    def caps_for(self, r, xy, patch_box):
        x, y = xy
        for box, caps in self.regions:
            (x0, x1), (y0, y1) = box
            if x0 - 1e-12 <= x <= x1 + 1e-12 and y0 - 1e-12 <= y <= y1 + 1e-12:
                return tuple(caps)
        if self.supports is None:
            return None
        (px0, px1), (py0, py1) = patch_box
        caps = []
        for (x0, x1), (y0, y1) in self.supports:
            caps.append(int(x0 < px1 and px0 < x1 and y0 < py1 and py0 < y1))
        return tuple(caps)

    def descriptor(self):
        return {
            "kind": "regions",
            "p": self.p,
            "regions": [[list(map(list, b)), list(c)] for b, c in self.regions],
            "supports": None if self.supports is None else [list(map(list, b)) for b in self.supports],
        }


def example3_truncation(p=3):
    from .coeff import EXAMPLE3_BOXES, EXAMPLE3_CAPS

    supports = tuple(EXAMPLE3_BOXES[i // 3] for i in range(12))
    regions = tuple((EXAMPLE3_BOXES[g], EXAMPLE3_CAPS[g]) for g in range(4))
    return RegionTruncation(p=p, regions=regions, supports=supports)


def local_index_set(J, truncation, coarse, vertex, patch, n_xi):
    """Representation set J_i for one vertex: the truncated set plus the
    stochastic measurements, so every constraint has a coordinate."""
    if truncation is None:
        return J
    i_lo, i_hi, j_lo, j_hi = patch.cell_range
    H = coarse.h
    box = ((i_lo * H, (i_hi + 1) * H), (j_lo * H, (j_hi + 1) * H))
    caps = truncation.caps_for(J.r, coarse.vertices[vertex], box)
    if caps is None:
        return J
    aniso = anisotropic_set(J.r, min(truncation.p, J.p), caps)
    meas = IndexSet(r=J.r, p=J.p, indices=J.indices[:n_xi])
    out = union([aniso, meas])
    return IndexSet(r=J.r, p=out.p, indices=out.indices, caps=caps)


# ---------------------------------------------------------- patch operators


def _maybe_sparse(G, tol=1e-15):
    scale = max(np.abs(G).max(), 1e-300)
    G = np.where(np.abs(G) > tol * scale, G, 0.0)
    if np.count_nonzero(G) < 0.25 * G.size and G.shape[0] > 16:
        return sp.csr_matrix(G)
    return G


class PatchOperator:
    """Stochastic stiffness restricted to the free nodes of a patch and a
    chaos subset; acts on arrays of shape (nodes, cols, |J_i|)."""

    def __init__(self, K, free, chaos_pos):
        self.free = free
        self.chaos_pos = chaos_pos
        self.terms = []
        for Km, Gm in zip(K.stiff, K.gmats):
            G = Gm[np.ix_(chaos_pos, chaos_pos)]
            if not np.any(np.abs(G) > 1e-15 * max(np.abs(Gm).max(), 1e-300)):
                continue
            self.terms.append((Km[free][:, free].tocsr(), _maybe_sparse(G), float(G[0, 0])))

    @property
    def shape(self):
        return self.free.size, len(self.chaos_pos)

    def apply(self, V):
        nf, k, nJ = V.shape
        out = np.zeros_like(V)
        flat = V.reshape(nf * k, nJ)
        for Km, G, _ in self.terms:
            VG = (G.T @ flat.T).T if sp.issparse(G) else flat @ G
            out += (Km @ VG.reshape(nf, k * nJ)).reshape(nf, k, nJ)
        return out

    def joint_diagonalization(self, tol=1e-11):
        """Orthogonal V and diagonals D (m, |J_i|) with V^T G_m V = diag(D[m]) for
        every term, or None when the moment matrices do not commute."""
        dense = [np.asarray(G.toarray() if sp.issparse(G) else G) for _, G, _ in self.terms]
        if not dense:
            return None
        nJ = dense[0].shape[0]
        scale = max(np.abs(G).max() for G in dense)
        for a in range(len(dense)):
            for b in range(a + 1, len(dense)):
                if np.abs(dense[a] @ dense[b] - dense[b] @ dense[a]).max() > tol * scale**2:
                    return None
        weights = 1.0 + np.arange(len(dense)) / (np.pi * len(dense))
        _, V = np.linalg.eigh(sum(w * G for w, G in zip(weights, dense)))
        D = np.array([np.einsum("aq,ab,bq->q", V, G, V) for G in dense])
        for G, d in zip(dense, D):
            if np.abs(V.T @ G @ V - np.diag(d)).max() > tol * max(scale, 1.0) * nJ:
                return None
        return V, D

    def mean_block(self):
        return sum(g00 * Km for Km, _, g00 in self.terms if g00 != 0.0).tocsc()

    def matrix(self):
        total = None
        for Km, G, _ in self.terms:
            term = sp.kron(Km, sp.csr_matrix(G), format="csr")
            total = term if total is None else total + term
        return total


@dataclass(eq=False)
class SaddleSystem:
    """Patch-local KKT system for one patch and one representation set."""

    patch: object
    J_local: IndexSet
    chaos_pos: np.ndarray  # positions of J_local in the global J
    rows: list  # constraint rows (coarse vertex, l), vertex-major
    constraint_vertices: np.ndarray
    Cx: sp.csr_matrix  # (constraint vertices) x (free nodes)
    meas_pos: np.ndarray  # positions of the stochastic measurements in J_local
    op: PatchOperator
    method: str = "direct"
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def num_primal(self):
        nf, nJ = self.op.shape
        return nf * nJ

    @property
    def num_constraints(self):
        return len(self.rows)

    def row_of(self, vertex, l):
        j = int(np.searchsorted(self.constraint_vertices, vertex))
        if j >= self.constraint_vertices.size or self.constraint_vertices[j] != vertex:
            raise InvalidArgumentError(f"coarse vertex {vertex} has no constraint on this patch")
        return j * self.meas_pos.size + int(l)

    @property
    def constraint_matrix(self):
        nxi = self.meas_pos.size
        S = sp.csr_matrix((np.ones(nxi), (np.arange(nxi), self.meas_pos)), shape=(nxi, len(self.J_local)))
        return sp.kron(self.Cx, S, format="csr")

    @property
    def matrix(self):
        if "matrix" not in self._cache:
            C = self.constraint_matrix
            self._cache["matrix"] = sp.bmat([[self.op.matrix(), C.T], [C, None]], format="csc")
        return self._cache["matrix"]

    # -- direct route

    def _direct_lu(self):
        if "lu" not in self._cache:
            try:
                self._cache["lu"] = spla.splu(self.matrix)
            except RuntimeError as exc:
                raise InfeasibleConstraintError(
                    f"saddle-point matrix for vertex {self.patch.center_vertex} is singular ({exc})",
                    vertex=self.patch.center_vertex,
                ) from exc
        return self._cache["lu"]

    def _solve_direct(self, E):
        n, m = self.num_primal, self.num_constraints
        A = self.matrix
        lu = self._direct_lu()
        rhs = np.zeros((n + m, E.shape[1]))
        rhs[n:] = E
        X = lu.solve(rhs)
        X += lu.solve(rhs - A @ X)
        res = np.linalg.norm(A @ X - rhs, axis=0) / np.maximum(np.linalg.norm(rhs, axis=0), 1e-300)
        nf, nJ = self.op.shape
        return X[:n].reshape(nf, nJ, -1).transpose(0, 2, 1), {"iterations": 1, "residual": float(res.max())}

    # -- iterative route

    def _precond(self):
        if "mean_lu" not in self._cache:
            Kbar = self.op.mean_block()
            lu = spla.splu(Kbar)
            Y = lu.solve(self.Cx.T.toarray())
            Sx = self.Cx @ Y
            Sx = 0.5 * (Sx + Sx.T)
            try:
                cho = sla.cho_factor(Sx)
            except np.linalg.LinAlgError as exc:
                raise InfeasibleConstraintError(
                    f"constraints on the patch of vertex {self.patch.center_vertex} are rank deficient",
                    vertex=self.patch.center_vertex,
                ) from exc
            w = np.linalg.eigvalsh(Sx)
            if w[0] <= 1e-13 * w[-1]:
                raise InfeasibleConstraintError(
                    f"constraints on the patch of vertex {self.patch.center_vertex} are rank deficient",
                    vertex=self.patch.center_vertex,
                )
            self._cache["mean_lu"] = lu
            self._cache["schur"] = cho
            self._cache["cond"] = float(w[-1] / w[0])
        return self._cache["mean_lu"], self._cache["schur"]

    def _solve_iterative(self, E, tol=1e-12, maxiter=2000):
        lu, cho = self._precond()
        nf, nJ = self.op.shape
        nj, nxi = self.Cx.shape[0], self.meas_pos.size
        k = E.shape[1]
        mp = self.meas_pos
        Cx, CxT = self.Cx, self.Cx.T.tocsr()

        def A(V):
            return (Cx @ V[:, :, mp].reshape(nf, k * nxi)).reshape(nj, k, nxi)

        def At(W):
            V = np.zeros((nf, k, nJ))
            V[:, :, mp] = (CxT @ W.reshape(nj, k * nxi)).reshape(nf, k, nxi)
            return V

        def Ginv(V):
            return lu.solve(np.ascontiguousarray(V.reshape(nf, k * nJ))).reshape(nf, k, nJ)

        def Sinv(W):
            return sla.cho_solve(cho, W.reshape(nj, k * nxi)).reshape(nj, k, nxi)

        def project(R):
            w = Sinv(A(Ginv(R)))
            return Ginv(R - At(w)), w

        def dot(U, V):
            return np.einsum("nkj,nkj->k", U, V)

        Et = E.reshape(nj, nxi, k).transpose(0, 2, 1)
        x = Ginv(At(Sinv(Et)))
        r = self.op.apply(x)
        g, w = project(r)
        r -= At(w)
        rg = dot(r, g)
        rg0 = np.maximum(rg, 1e-300)
        d = -g
        it = 0
        while it < maxiter and np.any(np.sqrt(np.abs(rg) / rg0) > tol):
            Hd = self.op.apply(d)
            curv = dot(d, Hd)
            alpha = np.where(curv > 0, rg / np.where(curv > 0, curv, 1.0), 0.0)
            x += alpha[None, :, None] * d
            r += alpha[None, :, None] * Hd
            g, w = project(r)
            r -= At(w)
            rg_new = dot(r, g)
            beta = np.where(rg > 0, rg_new / np.where(rg > 0, rg, 1.0), 0.0)
            d = -g + beta[None, :, None] * d
            rg = rg_new
            it += 1
        Hx = self.op.apply(x)
        lam = Sinv(A(Ginv(Hx)))
        stat = Hx - At(lam)
        res = np.sqrt(dot(stat, stat)) / np.maximum(np.sqrt(dot(Hx, Hx)), 1e-300)
        return x, {"iterations": it, "residual": float(res.max()), "cond": self._cache["cond"]}

    # -- spectral route (commuting chaos moments)

    def _spectral(self):
        if "spectral" not in self._cache:
            V, D = self.op.joint_diagonalization()
            CxT = self.Cx.T.tocsc()
            nj, nxi = self.Cx.shape[0], self.meas_pos.size
            lus, Y = [], np.empty((V.shape[1], nj, nj))
            for q in range(V.shape[1]):
                Aq = sum(d * Km for (Km, _, _), d in zip(self.op.terms, D[:, q]) if d != 0.0).tocsc()
                lu = spla.splu(Aq)
                for c0 in range(0, nj, 256):
                    cols = CxT[:, c0 : c0 + 256].toarray()
                    Y[q, :, c0 : c0 + cols.shape[1]] = self.Cx @ lu.solve(cols)
                lus.append(lu)
            Vm = V[self.meas_pos]  # (n_xi, |J_i|)
            S = np.einsum("lq,mq,qjk->jlkm", Vm, Vm, Y, optimize=True).reshape(nj * nxi, nj * nxi)
            del Y
            S = 0.5 * (S + S.T)
            try:
                cho = sla.cho_factor(S, overwrite_a=True)
            except np.linalg.LinAlgError:
                cho = None
            d = np.abs(np.diag(cho[0])) if cho is not None else None
            if cho is None or d.min() ** 2 <= 1e-13 * d.max() ** 2:
                raise InfeasibleConstraintError(
                    f"constraints on the patch of vertex {self.patch.center_vertex} are rank deficient",
                    vertex=self.patch.center_vertex,
                )
            self._cache["spectral"] = (V, lus, cho, float((d.max() / d.min()) ** 2))
        return self._cache["spectral"]

    def _solve_spectral(self, E):
        V, lus, cho, cond = self._spectral()
        nj, nxi = self.Cx.shape[0], self.meas_pos.size
        k = E.shape[1]
        mu = sla.cho_solve(cho, E).reshape(nj, nxi, k)
        beta = np.einsum("lq,jlk->qjk", V[self.meas_pos], mu)
        Bt = np.stack([lu.solve(self.Cx.T @ beta[q]) for q, lu in enumerate(lus)], axis=-1)
        x = np.ascontiguousarray(Bt @ V.T)
        return x, {"iterations": 1, "residual": self._stationarity(x, mu), "cond": cond}

    def _stationarity(self, x, mu):
        """Relative KKT residual ||H x - C^T mu|| / ||H x|| per column, maximised."""
        nf, k, nJ = x.shape
        R = self.op.apply(x)
        den = np.maximum(np.sqrt(np.einsum("nkj,nkj->k", R, R)), 1e-300)
        for l, m in enumerate(self.meas_pos):
            R[:, :, m] -= self.Cx.T @ mu[:, l, :]
        return float((np.sqrt(np.einsum("nkj,nkj->k", R, R)) / den).max())

    def solve(self, E):
        """Primal solutions (nodes, cols, |J_i|) for constraint targets E (rows, cols)."""
        E = np.atleast_2d(np.asarray(E, dtype=float).reshape(self.num_constraints, -1))
        if self.method == "direct":
            X, info = self._solve_direct(E)
        elif self.method == "spectral":
            X, info = self._solve_spectral(E)
        else:
            X, info = self._solve_iterative(E)
        if not np.isfinite(info["residual"]) or info["residual"] > KKT_TOL:
            raise SolverError(
                f"KKT residual {info['residual']:.3e} for vertex {self.patch.center_vertex}",
                residual=info["residual"],
            )
        info["method"] = self.method
        return X, info


def build_kkt(patch, K, meas, J_local=None, method="auto", direct_limit=DIRECT_LIMIT):
    """Assemble the saddle-point system of one patch.

    ``K`` is the global block stiffness over ``meas.J``; it is restricted to
    the free patch nodes and to the chaos subset ``J_local``.
    """
    J = meas.J
    J_local = J if J_local is None else J_local
    chaos_pos = J_local.positions_in(J) if J_local is not J else np.arange(len(J))
    meas_pos = np.array([J_local.position(J[l]) for l in range(meas.n_xi)], dtype=np.int64)
    free = patch.free_nodes
    if free.size == 0:
        raise InfeasibleConstraintError(f"patch of vertex {patch.center_vertex} has no interior nodes", patch.center_vertex)
    cols = np.searchsorted(meas.coarse.interior, patch.coarse_vertices)
    Cx = meas.weighted[:, cols].T.tocsr()[:, free]
    keep = np.flatnonzero(np.abs(Cx).sum(axis=1).A1 > 0)
    Cx = Cx[keep]
    verts = patch.coarse_vertices[keep]
    rows = [(int(v), l) for v in verts for l in range(meas.n_xi)]
    op = PatchOperator(K, free, chaos_pos)
    if method == "auto":
        if free.size * len(J_local) + len(rows) <= direct_limit:
            method = "direct"
        elif op.joint_diagonalization() is not None:
            method = "spectral"
        else:
            method = "iterative"
    if method == "spectral" and op.joint_diagonalization() is None:
        raise InvalidArgumentError("spectral route needs commuting chaos moment matrices")
    if method not in ("direct", "iterative", "spectral"):
        raise InvalidArgumentError(f"unknown KKT method {method!r}")
    if len(rows) > free.size * len(J_local):
        raise InfeasibleConstraintError(
            f"patch of vertex {patch.center_vertex} has fewer unknowns than constraints", patch.center_vertex
        )
    return SaddleSystem(patch, J_local, chaos_pos, rows, verts, Cx, meas_pos, op, method)


# ------------------------------------------------------------ basis objects


@dataclass(eq=False)
class BasisFunction:
    vertex: int  # coarse vertex index
    k: int  # stochastic measurement number
    patch: object
    J_local: IndexSet
    chaos_pos: np.ndarray  # positions of J_local in the global J
    coefficients: np.ndarray  # (patch fine nodes) x |J_local|
    energy: float
    info: dict = field(default_factory=dict)

    @property
    def nodes(self):
        return self.patch.fine_nodes

    def to_gpc(self, fine, J):
        out = np.zeros((fine.num_vertices, len(J)))
        out[np.ix_(self.nodes, self.chaos_pos)] = self.coefficients
        return fem.GpcField(fine, J, out)


def _embed(sys, X, nodes_all):
    """Primal block (free, |J_i|) -> coefficients on all patch nodes."""
    out = np.zeros((nodes_all.size, X.shape[-1]))
    out[np.searchsorted(nodes_all, sys.op.free)] = X
    return out


def solve_basis(sys, target):
    """Basis function for constraint target (vertex, k)."""
    vertex, k = target
    E = np.zeros(sys.num_constraints)
    E[sys.row_of(vertex, k)] = 1.0
    X, info = sys.solve(E)
    Xk = X[:, 0, :]
    energy = float(np.sum(Xk[:, None, :] * sys.op.apply(Xk[:, None, :])))
    return BasisFunction(
        vertex=int(vertex),
        k=int(k),
        patch=sys.patch,
        J_local=sys.J_local,
        chaos_pos=sys.chaos_pos,
        coefficients=_embed(sys, Xk, sys.patch.fine_nodes),
        energy=energy,
        info=info,
    )


@dataclass(eq=False)
class BasisSet:
    coarse: object
    fine: object
    J: IndexSet
    n_xi: int
    layers: int
    functions: list
    coefficient_hash: str = ""
    truncation: dict = None
    diagnostics: list = field(default_factory=list)

    def __len__(self):
        return len(self.functions)

    def __iter__(self):
        return iter(self.functions)

    def __getitem__(self, idx):
        return self.functions[idx]

    def index(self, vertex, k):
        col = int(np.searchsorted(self.coarse.interior, vertex))
        return col * self.n_xi + int(k)

    def local_sets(self):
        return {bf.vertex: bf.J_local for bf in self.functions[:: self.n_xi]}

    def groups(self):
        """Per-vertex stacks: (vertex, patch, chaos_pos, array (nodes, |J_i|, n_xi))."""
        out = []
        for start in range(0, len(self.functions), self.n_xi):
            fs = self.functions[start : start + self.n_xi]
            out.append((fs[0].vertex, fs[0].patch, fs[0].chaos_pos, np.stack([f.coefficients for f in fs], axis=-1)))
        return out


def _key(patch, J_local):
    return patch.cell_range, J_local.indices.tobytes()


def build_all(
    coarse,
    fine,
    field,
    J,
    n_xi=None,
    layers=None,
    truncation=None,
    K=None,
    method="auto",
    workers=1,
    progress=None,
    direct_limit=DIRECT_LIMIT,
    cache_size=4,
):
    """All N_x * n_xi localized basis functions, vertex-major then k."""
    t0 = time.perf_counter()
    n_xi = default_nxi(J) if n_xi is None else int(n_xi)
    layers = default_layers(coarse.n) if layers is None else int(layers)
    meas = measurement_set(coarse, fine, J, n_xi)
    if K is None:
        K = fem.assemble_block_stiffness(fine, field, J)
    vertices = [int(v) for v in coarse.interior]
    cache = OrderedDict()

    def system_for(v):
        patch = make_patch(coarse, fine, v, layers)
        J_local = local_index_set(J, truncation, coarse, v, patch, n_xi)
        key = _key(patch, J_local)
        if key in cache:
            cache.move_to_end(key)
            return cache[key], True
        sys = build_kkt(patch, K, meas, J_local, method=method, direct_limit=direct_limit)
        cache[key] = sys
        while len(cache) > cache_size:
            cache.popitem(last=False)
        return sys, False

    def work(v):
        t = time.perf_counter()
        try:
            sys, reused = system_for(v)
            E = np.zeros((sys.num_constraints, n_xi))
            for k in range(n_xi):
                E[sys.row_of(v, k), k] = 1.0
            X, info = sys.solve(E)
        except InfeasibleConstraintError as exc:
            return v, None, {"vertex": v, "error": str(exc)}
        fns = []
        for k in range(n_xi):
            Xk = X[:, k, :]
            energy = float(np.sum(Xk[:, None, :] * sys.op.apply(Xk[:, None, :])))
            fns.append(
                BasisFunction(v, k, sys.patch, sys.J_local, sys.chaos_pos, _embed(sys, Xk, sys.patch.fine_nodes), energy)
            )
        diag = {
            "vertex": v,
            "nodes": int(sys.patch.fine_nodes.size),
            "chaos": len(sys.J_local),
            "unknowns": sys.num_primal,
            "constraints": sys.num_constraints,
            "method": info["method"],
            "iterations": info["iterations"],
            "residual": info["residual"],
            "cond": info.get("cond"),
            "reused": reused,
            "seconds": time.perf_counter() - t,
        }
        return v, fns, diag

    results = []
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for n, res in enumerate(pool.map(work, vertices), 1):
                results.append(res)
                if progress:
                    progress(n, len(vertices))
    else:
        for n, v in enumerate(vertices, 1):
            results.append(work(v))
            if progress:
                progress(n, len(vertices))
            log.debug("vertex %d done (%d/%d)", v, n, len(vertices))

    failed = [d for _, fns, d in results if fns is None]
    if failed:
        names = ", ".join(str(d["vertex"]) for d in failed)
        raise InfeasibleConstraintError(f"infeasible patch constraints at coarse vertices {names}", failed[0]["vertex"])
    functions = [f for _, fns, _ in results for f in fns]
    diagnostics = [d for _, _, d in results]
    log.info("built %d basis functions in %.2fs", len(functions), time.perf_counter() - t0)
    return BasisSet(
        coarse=coarse,
        fine=fine,
        J=J,
        n_xi=n_xi,
        layers=layers,
        functions=functions,
        coefficient_hash=field.descriptor_hash() if field is not None else "",
        truncation=None if truncation is None else truncation.descriptor(),
        diagnostics=diagnostics,
    )


# ----------------------------------------------------------------- analysis


def constraint_matrix(bset):
    """Table of E[int psi_{i,k} phi_j H_l] over all basis functions and measurements."""
    meas = measurement_set(bset.coarse, bset.fine, bset.J, bset.n_xi)
    W = meas.weighted.tocsr()
    out = np.zeros((len(bset), meas.num_spatial * bset.n_xi))
    for n, bf in enumerate(bset):
        Wn = W[bf.nodes]
        for l in range(bset.n_xi):
            alpha = bset.J[l]
            if alpha not in bf.J_local:
                continue
            col = bf.coefficients[:, bf.J_local.position(alpha)]
            out[n, l :: bset.n_xi] = Wn.T @ col
    return out


def decay_profile(psi, K_global, coarse, max_layers=None):
    """Energy fraction of psi outside the Chebyshev ball B(x_i, m H), m = 0, 1, ..."""
    fine = K_global.mesh
    u = psi.to_gpc(fine, K_global.J).coeffs
    if max_layers is None:
        max_layers = coarse.n
    tri_energy = _triangle_energy(K_global, u)
    total = tri_energy.sum()
    c = fine.centroids
    x0, y0 = coarse.vertices[psi.vertex]
    dist = np.maximum(np.abs(c[:, 0] - x0), np.abs(c[:, 1] - y0))
    out = []
    for m in range(max_layers + 1):
        outside = tri_energy[dist > m * coarse.h - 1e-12].sum()
        out.append((m, float(outside / total) if total > 0 else 0.0))
    return out


def _triangle_energy(K, coeffs):
    from . import _kernels

    used = np.flatnonzero(np.abs(coeffs).sum(axis=0) > 0)
    vals = coeffs[:, used]
    gm = K.gmats[:, used][:, :, used]
    return _kernels.triangle_energy(K.mesh.vertices, K.mesh.triangles, vals, K.centroid_coefs, gm)


def chaos_projection(psi, alpha, fine=None):
    """Nodal field of psi's coefficient on chaos function ``alpha``."""
    if alpha not in psi.J_local:
        raise InvalidArgumentError(f"multi-index {tuple(alpha)} not in the representation set")
    col = psi.coefficients[:, psi.J_local.position(alpha)]
    if fine is None:
        return col
    out = np.zeros(fine.num_vertices)
    out[psi.nodes] = col
    return out


# ---------------------------------------------------------------- file I/O

MAGIC = b"MSDS"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sIIIIIIII")  # magic, version, coarse n, fine n, r, p, n_xi, layers, count


def save_basis(bset, path, config=None):
    """Write a basis set to the little-endian binary format.

    The fixed header is followed by a JSON metadata block (u32 length, UTF-8)
    and one record per basis function.
    """
    meta = {
        "J": bset.J.descriptor(),
        "J_indices": bset.J.indices.tolist(),
        "coefficient_hash": bset.coefficient_hash,
        "truncation": bset.truncation,
        "energies": [float(f.energy) for f in bset],
    }
    if config is not None:
        meta["config"] = config
    blob = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode()
    with open(path, "wb") as fh:
        fh.write(
            _HEADER.pack(
                MAGIC, FORMAT_VERSION, bset.coarse.n, bset.fine.n, bset.J.r, bset.J.p, bset.n_xi, bset.layers, len(bset)
            )
        )
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for f in bset:
            nodes = np.ascontiguousarray(f.nodes, dtype="<u4")
            chaos = np.ascontiguousarray(f.chaos_pos, dtype="<u4")
            fh.write(struct.pack("<III", f.vertex, f.k, nodes.size))
            fh.write(nodes.tobytes())
            fh.write(struct.pack("<I", chaos.size))
            fh.write(chaos.tobytes())
            fh.write(np.ascontiguousarray(f.coefficients, dtype="<f8").tobytes())


class _Reader:
    def __init__(self, data):
        self.data = data
        self.pos = 0

    def take(self, n):
        if self.pos + n > len(self.data):
            raise BasisFormatError("basis file is truncated")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def u32(self, count=1):
        vals = struct.unpack(f"<{count}I", self.take(4 * count))
        return vals[0] if count == 1 else vals


def load_basis(path, fine_n=None, coarse_n=None, field=None):
    """Read a basis file; optional arguments are checked against the header."""
    from .chaos import from_indices
    from .mesh import build_uniform_mesh

    with open(path, "rb") as fh:
        rd = _Reader(fh.read())
    magic, version, nc, nf, r, p, n_xi, layers, count = _HEADER.unpack(rd.take(_HEADER.size))
    if magic != MAGIC:
        raise BasisFormatError(f"not a basis file (magic {magic!r})")
    if version != FORMAT_VERSION:
        raise BasisFormatError(f"unsupported basis format version {version}, expected {FORMAT_VERSION}")
    if fine_n is not None and fine_n != nf:
        raise BasisFormatError(f"basis was built on a fine mesh n={nf}, requested n={fine_n}")
    if coarse_n is not None and coarse_n != nc:
        raise BasisFormatError(f"basis was built on a coarse mesh n={nc}, requested n={coarse_n}")
    meta = json.loads(rd.take(rd.u32()).decode())
    if field is not None and meta["coefficient_hash"] != field.descriptor_hash():
        raise BasisFormatError("basis was built for a different coefficient field (descriptor hash mismatch)")
    J = from_indices(r, meta["J_indices"], p=p)
    if len(J) != meta["J"]["size"]:
        raise BasisFormatError("index set in the metadata is inconsistent")
    coarse, fine = build_uniform_mesh(nc), build_uniform_mesh(nf)
    functions = []
    patches = {}
    for n in range(count):
        vertex, k, nn = rd.u32(3)
        nodes = np.frombuffer(rd.take(4 * nn), dtype="<u4").astype(np.int64)
        nch = rd.u32()
        chaos = np.frombuffer(rd.take(4 * nch), dtype="<u4").astype(np.int64)
        coeffs = np.frombuffer(rd.take(8 * nn * nch), dtype="<f8").reshape(nn, nch).copy()
        if vertex not in patches:
            patches[vertex] = make_patch(coarse, fine, vertex, layers)
        patch = patches[vertex]
        if not np.array_equal(patch.fine_nodes, nodes):
            raise BasisFormatError(f"record {n}: node list does not match the patch of vertex {vertex}")
        J_local = J if nch == len(J) and np.array_equal(chaos, np.arange(len(J))) else IndexSet(
            r=r, p=p, indices=J.indices[chaos]
        )
        functions.append(BasisFunction(vertex, k, patch, J_local, chaos, coeffs, meta["energies"][n]))
    if rd.pos != len(rd.data):
        raise BasisFormatError("trailing bytes after the last record")
    bset = BasisSet(
        coarse=coarse,
        fine=fine,
        J=J,
        n_xi=n_xi,
        layers=layers,
        functions=functions,
        coefficient_hash=meta["coefficient_hash"],
        truncation=meta["truncation"],
    )
    bset.config = meta.get("config")
    return bset
