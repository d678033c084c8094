"""Fine-mesh reference solvers: coupled gPC Galerkin, tensor collocation and
Monte Carlo.  These are the oracles every error measurement is taken against.
"""

from dataclasses import dataclass, field
import time

import numpy as np
import scipy.sparse.linalg as spla

from . import fem
from .chaos import eval_basis
from .errors import InvalidArgumentError, SolverError


@dataclass
class ReferenceSolution:
    mean: np.ndarray
    std: np.ndarray
    method: str
    u: object = None  # GpcField for the Galerkin solver
    samples: np.ndarray = None  # (N, M) nodal samples for collocation / MC
    info: dict = field(default_factory=dict)


class SfemSolver:
    """Coupled stochastic Galerkin solver with block-Jacobi preconditioned CG.

    Each diagonal block T_aa = sum_m G_m[a, a] K_m is factored once; blocks
    with identical moment signatures share a factorization (for affine fields
    with Legendre chaos every block equals the mean stiffness).
    """

    def __init__(self, K, tol=fem.RESIDUAL_TOL, maxiter=2000):
        self.K = K
        self.tol = tol
        self.maxiter = maxiter
        mesh = K.mesh
        self.free = mesh.interior
        self._Ks = [fem.restrict(Km, self.free) for Km in K.stiff]
        nJ = len(K.J)
        diag = np.round(K.gmats[:, np.arange(nJ), np.arange(nJ)].T, 13)  # (|J|, m)
        self._groups = {}
        for a, sig in enumerate(map(tuple, diag)):
            self._groups.setdefault(sig, []).append(a)
        self._lus = []
        for sig, members in self._groups.items():
            A = sum(g * Km for g, Km in zip(sig, self._Ks) if g != 0.0)
            self._lus.append((np.array(members), spla.splu(A.tocsc())))
        self.factorizations = len(self._lus)

    def _apply(self, V):
        out = np.zeros_like(V)
        for Km, G in zip(self._Ks, self.K.gmats):
            out += Km @ (V @ G)
        return out

    def _precond(self, R):
        Z = np.empty_like(R)
        for members, lu in self._lus:
            Z[:, members] = lu.solve(np.ascontiguousarray(R[:, members]))
        return Z

    def solve_load(self, b):
        """Solve with a deterministic load vector ``b`` (full nodal length)."""
        ni, nJ = self.free.size, len(self.K.J)
        B = np.zeros((ni, nJ))
        B[:, 0] = np.asarray(b)[self.free]
        coeffs = np.zeros((self.K.mesh.num_vertices, nJ))
        bnorm = np.linalg.norm(B)
        info = {"iterations": 0, "residual": 0.0}
        if bnorm == 0.0:
            return fem.GpcField(self.K.mesh, self.K.J, coeffs), info
        shape = (ni * nJ, ni * nJ)
        A = spla.LinearOperator(shape, matvec=lambda v: self._apply(v.reshape(ni, nJ)).ravel(), dtype=float)
        M = spla.LinearOperator(shape, matvec=lambda v: self._precond(v.reshape(ni, nJ)).ravel(), dtype=float)
        count = [0]

        def cb(_):
            count[0] += 1

        x0 = self._precond(B).ravel()
        x, _ = spla.cg(A, B.ravel(), x0=x0, rtol=0.1 * self.tol, atol=0.0, maxiter=self.maxiter, M=M, callback=cb)
        V = x.reshape(ni, nJ)
        res = np.linalg.norm(self._apply(V) - B) / bnorm
        if not np.isfinite(res) or res > self.tol:
            raise SolverError(f"stochastic Galerkin CG stalled at relative residual {res:.3e}", residual=res)
        coeffs[self.free] = V
        info = {"iterations": count[0], "residual": float(res)}
        return fem.GpcField(self.K.mesh, self.K.J, coeffs), info

    def solve(self, f):
        return self.solve_load(fem.assemble_load(self.K.mesh, f))


def solve_sfem(K, f, J=None, return_info=False):
    """Coupled gPC Galerkin solution of -div(a grad u) = f over the index set of K."""
    if J is not None and (J.r != K.J.r or not np.array_equal(J.indices, K.J.indices)):
        raise InvalidArgumentError("index set does not match the block stiffness")
    u, info = SfemSolver(K).solve(f)
    return (u, info) if return_info else u


class CollocationSolver:
    """Tensor Gauss collocation with one cached factorization per node."""

    def __init__(self, mesh, field, Q):
        if Q.r != field.r:
            raise InvalidArgumentError(f"rule dimension {Q.r} does not match field dimension {field.r}")
        self.mesh = mesh
        self.field = field
        self.Q = Q
        c = mesh.centroids
        self._coef = field.eval_samples(c[:, 0], c[:, 1], Q.nodes)  # (T, nq)
        self._lus = [None] * Q.size
        self.solves = 0

    def _lu(self, q):
        if self._lus[q] is None:
            A = fem.assemble_sample_stiffness(self.mesh, self._coef[:, q], eliminate=True)
            self._lus[q] = (A, spla.splu(A))
        return self._lus[q]

    def samples_for_load(self, b):
        """Nodal solutions (N, nq) for a deterministic load vector."""
        free = self.mesh.interior
        out = np.zeros((self.mesh.num_vertices, self.Q.size))
        rhs = np.asarray(b)[free]
        bnorm = np.linalg.norm(rhs)
        if bnorm == 0.0:
            return out
        for q in range(self.Q.size):
            A, lu = self._lu(q)
            x = lu.solve(rhs)
            res = np.linalg.norm(A @ x - rhs) / bnorm
            if res > fem.RESIDUAL_TOL:
                x += lu.solve(rhs - A @ x)
                res = np.linalg.norm(A @ x - rhs) / bnorm
            if res > fem.RESIDUAL_TOL:
                raise SolverError(f"collocation node {q}: residual {res:.3e}", residual=res)
            out[free, q] = x
            self.solves += 1
        return out

    def solve_load(self, b):
        U = self.samples_for_load(b)
        w = self.Q.weights
        mean = U @ w
        std = np.sqrt(np.maximum(((U - mean[:, None]) ** 2) @ w, 0.0))
        return ReferenceSolution(mean=mean, std=std, method="collocation", samples=U, info={"q": self.Q.q})

    def solve(self, f):
        return self.solve_load(fem.assemble_load(self.mesh, f))

    def chaos_coefficients(self, sol, J):
        """Pseudo-spectral projection of collocation samples onto J."""
        V = eval_basis(J, self.Q.nodes, self.Q.interval)
        return fem.GpcField(self.mesh, J, sol.samples @ (self.Q.weights[:, None] * V))


def solve_collocation(mesh, field, f, Q):
    """Mean and std nodal fields from tensor-grid collocation."""
    return CollocationSolver(mesh, field, Q).solve(f)


def solve_mc(mesh, field, f, samples, seed, batches=20):
    """Seeded Monte Carlo mean/std with batch standard errors per norm."""
    samples = int(samples)
    if samples < 2:
        raise InvalidArgumentError("Monte Carlo needs at least two samples")
    rng = np.random.default_rng(seed)
    XI = rng.random((samples, field.r))
    c = mesh.centroids
    free = mesh.interior
    b = fem.assemble_load(mesh, f)[free]
    U = np.zeros((mesh.num_vertices, samples))
    t0 = time.perf_counter()
    for s in range(samples):
        coef = field.eval_samples(c[:, 0], c[:, 1], XI[s][None])[:, 0]
        A = fem.assemble_sample_stiffness(mesh, coef, eliminate=True)
        U[free, s] = fem.solve_dirichlet(A, b) if np.any(b) else 0.0
    mean = U.mean(axis=1)
    std = U.std(axis=1, ddof=1)
    nb = max(2, min(batches, samples))
    groups = np.array_split(np.arange(samples), nb)
    table = {"L2-mean": [], "H1-mean": [], "L2-std": [], "H1-std": []}
    for g in groups:
        m = U[:, g].mean(axis=1)
        sd = U[:, g].std(axis=1, ddof=1) if g.size > 1 else np.zeros_like(m)
        table["L2-mean"].append(fem.l2_norm(mesh, m))
        table["H1-mean"].append(fem.h1_seminorm(mesh, m))
        table["L2-std"].append(fem.l2_norm(mesh, sd))
        table["H1-std"].append(fem.h1_seminorm(mesh, sd))
    stderr = {k: float(np.std(v, ddof=1) / np.sqrt(nb)) for k, v in table.items()}
    info = {
        "samples": samples,
        "seed": seed,
        "stderr": stderr,
        "node_stderr": std / np.sqrt(samples),
        "seconds": time.perf_counter() - t0,
    }
    return ReferenceSolution(mean=mean, std=std, method="mc", samples=U, info=info)
