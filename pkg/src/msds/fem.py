"""P1 finite elements on uniform triangulations.

The stochastic Galerkin operator is stored as a short sum of Kronecker terms,

    T_ab = sum_m G_m[a, b] K_m,

where each ``K_m`` is a spatial stiffness matrix for one coefficient term and
``G_m`` holds the chaos moments of the matching random factor.  Affine fields
give one term per random variable plus the mean; other fields are compressed
by a weighted SVD of their quadrature samples.  Unknowns of a stochastic
field are laid out node-major: entry ``s*|J| + a`` is node ``s``, chaos ``a``.
"""

from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import _kernels
from .chaos import QuadRule, default_points, eval_basis, linear_moments, quad_rule
from .errors import EllipticityError, InvalidArgumentError, SolverError

RESIDUAL_TOL = 1e-10


# ------------------------------------------------------------------ assembly


def _pattern(mesh):
    tri = mesh.triangles
    rows = np.repeat(tri, 3, axis=1).ravel()
    cols = np.tile(tri, (1, 3)).ravel()
    return rows, cols


def _to_csr(mesh, values):
    rows, cols = _pattern(mesh)
    N = mesh.num_vertices
    A = sp.coo_matrix((values, (rows, cols)), shape=(N, N)).tocsr()
    A.sum_duplicates()
    return A


def _centroid_values(mesh, a):
    if callable(a):
        c = mesh.centroids
        vals = np.asarray(a(c[:, 0], c[:, 1]), dtype=float)
        return np.broadcast_to(vals, (mesh.num_triangles,)).astype(float)
    vals = np.asarray(a, dtype=float)
    if vals.ndim == 0:
        return np.full(mesh.num_triangles, float(vals))
    if vals.shape != (mesh.num_triangles,):
        raise InvalidArgumentError("coefficient array must hold one value per triangle")
    return vals


def stiffness_terms(mesh, coefs):
    """One stiffness matrix per row of ``coefs`` (m, T), sharing a pattern."""
    coefs = np.atleast_2d(np.asarray(coefs, dtype=float))
    values = _kernels.stiffness_values(mesh.vertices, mesh.triangles, coefs)
    return [_to_csr(mesh, v) for v in values]


def assemble_sample_stiffness(mesh, a_fixed, eliminate=False, check=True):
    """Stiffness matrix with the coefficient sampled once per triangle centroid.

    ``a_fixed`` is a callable ``(x, y) -> values`` or an array of centroid
    values.  With ``eliminate`` the boundary rows and columns are removed.
    """
    coef = _centroid_values(mesh, a_fixed)
    if check and coef.min() <= 0.0:
        raise EllipticityError(
            f"coefficient sample {coef.min():.3e} is not positive", min_value=float(coef.min())
        )
    A = stiffness_terms(mesh, coef[None])[0]
    return restrict(A, mesh.interior) if eliminate else A


@lru_cache(maxsize=8)
def unit_stiffness(mesh):
    return assemble_sample_stiffness(mesh, np.ones(mesh.num_triangles))


@lru_cache(maxsize=8)
def assemble_mass(mesh):
    """Consistent P1 mass matrix."""
    return _to_csr(mesh, _kernels.mass_values(mesh.vertices, mesh.triangles))


def assemble_load(mesh, f):
    """Load vector int f lambda_s by the three-point edge-midpoint rule."""
    mid = mesh.edge_midpoints
    fm = np.asarray(f(mid[..., 0], mid[..., 1]), dtype=float)
    fm = np.broadcast_to(fm, mid.shape[:2])
    vals = _kernels.load_values(mesh.vertices, mesh.triangles, fm)
    return np.bincount(mesh.triangles.ravel(), weights=vals, minlength=mesh.num_vertices)


def interpolate(mesh, f):
    xy = mesh.vertices
    return np.broadcast_to(np.asarray(f(xy[:, 0], xy[:, 1]), dtype=float), (mesh.num_vertices,)).copy()


def restrict(A, free):
    A = sp.csr_matrix(A)
    return A[free][:, free].tocsc()


def solve_dirichlet(A, b, tol=RESIDUAL_TOL):
    """Direct sparse solve of an (already eliminated) SPD system.

    Raises ``SolverError`` carrying the residual if the relative residual
    exceeds ``tol`` after one step of iterative refinement.
    """
    b = np.asarray(b, dtype=float)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros_like(b)
    try:
        lu = spla.splu(sp.csc_matrix(A))
    except RuntimeError as exc:
        raise SolverError(f"factorization failed: {exc}") from exc
    x = lu.solve(b)
    res = np.linalg.norm(A @ x - b) / bnorm
    if res > tol:
        x += lu.solve(b - A @ x)
        res = np.linalg.norm(A @ x - b) / bnorm
    if not np.isfinite(res) or res > tol:
        raise SolverError(f"relative residual {res:.3e} above {tol:.1e}", residual=res)
    return x


def solve_poisson(mesh, a_fixed, f):
    """Full nodal solution of -div(a grad u) = f with zero boundary values."""
    A = assemble_sample_stiffness(mesh, a_fixed, eliminate=True)
    b = assemble_load(mesh, f)
    u = np.zeros(mesh.num_vertices)
    u[mesh.interior] = solve_dirichlet(A, b[mesh.interior])
    return u


# ---------------------------------------------------------- stochastic fields


@dataclass(eq=False)
class GpcField:
    """u(x, xi) = sum_a coeffs[s, a] lambda_s(x) H_a(xi)."""

    mesh: object
    J: object
    coeffs: np.ndarray

    @property
    def mean(self):
        return self.coeffs[:, 0]

    @property
    def std(self):
        return np.sqrt(np.sum(self.coeffs[:, 1:] ** 2, axis=1))

    def sample(self, xi):
        """Nodal values at random points ``xi`` (M, r) -> (N, M)."""
        return self.coeffs @ eval_basis(self.J, xi).T

    @classmethod
    def zeros(cls, mesh, J):
        return cls(mesh, J, np.zeros((mesh.num_vertices, len(J))))


class BlockStiffness:
    """Chaos-block stiffness T_ab = E[a H_a H_b] in Kronecker-term form."""

    def __init__(self, mesh, J, stiff, gmats, centroid_coefs):
        self.mesh = mesh
        self.J = J
        self.stiff = list(stiff)  # full-size CSR matrices
        self.gmats = np.asarray(gmats)  # (m, |J|, |J|)
        self.centroid_coefs = np.asarray(centroid_coefs)  # (m, T)

    @property
    def num_terms(self):
        return len(self.stiff)

    def block(self, a, b):
        out = sp.csr_matrix((self.mesh.num_vertices,) * 2)
        for K, G in zip(self.stiff, self.gmats):
            if G[a, b] != 0.0:
                out = out + G[a, b] * K
        return out

    @cached_property
    def pattern(self):
        """Set of (a, b) chaos pairs with a nonzero block."""
        scale = max(np.abs(self.gmats).max(), 1.0)
        nz = np.any(np.abs(self.gmats) > 1e-14 * scale, axis=0)
        return {(int(a), int(b)) for a, b in zip(*np.nonzero(nz))}

    def restricted(self, rows):
        """Same operator on the chaos subset ``rows`` (positions into J)."""
        from .chaos import IndexSet

        rows = np.asarray(rows)
        sub = IndexSet(r=self.J.r, p=self.J.p, indices=self.J.indices[rows])
        return BlockStiffness(self.mesh, sub, self.stiff, self.gmats[:, rows][:, :, rows], self.centroid_coefs)

    def apply(self, V, nodes=None):
        """sum_m K_m V G_m for V of shape (nodes, |J|)."""
        out = np.zeros_like(V)
        for K, G in zip(self.stiff, self.gmats):
            Km = K if nodes is None else K[nodes][:, nodes]
            out += Km @ (V @ G)
        return out

    def operator(self, nodes, chaos=None):
        """Node-major sparse matrix on the given nodes and chaos positions."""
        nodes = np.asarray(nodes)
        total = None
        for K, G in zip(self.stiff, self.gmats):
            Gs = G if chaos is None else G[np.ix_(chaos, chaos)]
            Gs = np.where(np.abs(Gs) > 1e-15 * max(np.abs(Gs).max(), 1e-300), Gs, 0.0)
            if not Gs.any():
                continue
            term = sp.kron(K[nodes][:, nodes], sp.csr_matrix(Gs), format="csr")
            total = term if total is None else total + term
        return total

    def energy(self, V):
        """Squared energy norm of a field with coefficients V (N, |J|)."""
        return float(sum(np.sum(V * (K @ (V @ G))) for K, G in zip(self.stiff, self.gmats)))

    def inner(self, U, V):
        return float(sum(np.sum(U * (K @ (V @ G))) for K, G in zip(self.stiff, self.gmats)))

    def mean_coefficient(self):
        """Centroid values of E[a]."""
        return np.tensordot(self.gmats[:, 0, 0], self.centroid_coefs, axes=(0, 0))


def _compress(samples, weights, rtol=1e-13):
    """Weighted SVD split a(x, xi_q) = sum_k c_k(x) h_k(xi_q)."""
    sw = np.sqrt(weights)
    U, S, Vt = np.linalg.svd(samples * sw[None, :], full_matrices=False)
    keep = S > rtol * S[0]
    return (U[:, keep] * S[keep]).T, Vt[keep] / sw[None, :]


def assemble_block_stiffness(mesh, field, J, Q=None):
    """Chaos-block stiffness of ``field`` over the index set ``J``.

    Moments are taken with the tensor rule ``Q`` (default p+2 points per
    dimension); for affine fields the rule is applied coordinate by coordinate.
    """
    if Q is None:
        Q = quad_rule(field.r, default_points(max(J.max_degree, 1)))
    c = mesh.centroids
    if field.is_affine:
        lo = field.box_minimum(c[:, 0], c[:, 1])
        if lo.min() <= 0.0:
            raise EllipticityError(f"coefficient reaches {lo.min():.3e} at a centroid", float(lo.min()))
        terms = field.spatial_terms(c[:, 0], c[:, 1])
        coefs, gmats = [terms[0]], [linear_moments(J, Q, None)]
        for i, part in enumerate(field.linear_parts):
            if part is None or not np.any(terms[i + 1]):
                continue
            coefs.append(terms[i + 1])
            gmats.append(linear_moments(J, Q, i))
    else:
        samples = field.eval_samples(c[:, 0], c[:, 1], Q.nodes)
        if samples.min() <= 0.0:
            raise EllipticityError(f"coefficient sample {samples.min():.3e} at a centroid", float(samples.min()))
        spatial, stoch = _compress(samples, Q.weights)
        V = eval_basis(J, Q.nodes, Q.interval)
        coefs = list(spatial)
        gmats = [V.T @ ((Q.weights * h)[:, None] * V) for h in stoch]
    coefs = np.array(coefs)
    return BlockStiffness(mesh, J, stiffness_terms(mesh, coefs), np.array(gmats), coefs)


# --------------------------------------------------------------------- norms


def _quad_norm(A, v):
    return float(np.sqrt(max(v @ (A @ v), 0.0)))


def l2_norm(mesh, v):
    return _quad_norm(assemble_mass(mesh), v)


def h1_seminorm(mesh, v):
    return _quad_norm(unit_stiffness(mesh), v)


NORM_KINDS = ("L2-mean", "H1-mean", "L2-std", "H1-std", "energy")


def norms(u, kind, K=None):
    """Norm of a stochastic field: L2/H1 of its mean or std field, or energy."""
    if kind == "energy":
        if K is None:
            raise InvalidArgumentError("energy norm needs a BlockStiffness")
        return float(np.sqrt(max(K.energy(u.coeffs), 0.0)))
    if kind not in NORM_KINDS:
        raise InvalidArgumentError(f"unknown norm {kind!r}")
    space, what = kind.split("-")
    v = u.mean if what == "mean" else u.std
    return l2_norm(u.mesh, v) if space == "L2" else h1_seminorm(u.mesh, v)


def relative_errors(mesh, ref_mean, ref_std, mean, std):
    """Relative L2 / H1-seminorm errors of mean and std nodal fields.

    A reference std below 1e-12 of the mean norm is round-off (deterministic
    coefficient); its error is then taken relative to the mean norm.
    """
    out = {}
    for space, fn in (("L2", l2_norm), ("H1", h1_seminorm)):
        den_mean = fn(mesh, ref_mean)
        for name, ref, val in (("mean", ref_mean, mean), ("std", ref_std, std)):
            den = fn(mesh, ref)
            num = fn(mesh, val - ref)
            if name == "std" and den <= 1e-12 * den_mean:
                den = den_mean
            out[f"{name}_{space}"] = num / den if den > 0 else num
    return {k: out[k] for k in ("mean_L2", "mean_H1", "std_L2", "std_H1")}


def energy_by_samples(K_field, mesh, u, Q):
    """Gauss-rule average of per-sample energies int a(., xi_q) |grad u(., xi_q)|^2."""
    c = mesh.centroids
    a = K_field.eval_samples(c[:, 0], c[:, 1], Q.nodes)
    U = u.sample(Q.nodes)
    total = 0.0
    for q in range(Q.size):
        A = stiffness_terms(mesh, a[:, q][None])[0]
        total += Q.weights[q] * float(U[:, q] @ (A @ U[:, q]))
    return total


def _check_rule(Q):
    if not isinstance(Q, QuadRule):
        raise InvalidArgumentError("expected a QuadRule")
