"""Random-dimension analysis of gPC solutions.

``Y`` collects the chaos coefficients of a solution at the coarse vertices
(rows: chaos index, columns: vertex).  Its squared singular values mu_i measure
how many stochastic modes the solution really uses.  The randomized estimator
bounds the worst error over a dictionary of forcings from a few Gaussian
combinations of them.
"""

from dataclasses import asdict, dataclass, field
import json
import math

import numpy as np

from . import fem
from .errors import InvalidArgumentError


def build_Y(u, coarse):
    """Chaos-by-vertex coefficient matrix of ``u`` at coarse interior vertices.

    ``coarse`` is a coarse TriMesh or an (m, 2) array of vertex coordinates.
    """
    fine = u.mesh
    if hasattr(coarse, "interior"):
        pts = coarse.vertices[coarse.interior]
    else:
        pts = np.atleast_2d(np.asarray(coarse, dtype=float))
    nodes = [fine.find_vertex(float(x), float(y)) for x, y in pts]
    return np.ascontiguousarray(u.coeffs[nodes].T)


@dataclass
class SpectrumReport:
    mu: np.ndarray  # eigenvalues of Y Y^T, descending, length = rows of Y
    cumulative: np.ndarray  # cumulative energy fractions
    modes: np.ndarray  # left singular vectors, columns A_k in chaos coordinates
    n_xi: int = None
    eckart_young: float = 0.0  # max relative deviation of the tail identity

    @property
    def total(self):
        return float(self.mu.sum())

    def tail(self, k):
        return float(self.mu[k:].sum())

    def to_dict(self):
        return {
            "mu": self.mu.tolist(),
            "cumulative": self.cumulative.tolist(),
            "n_xi": self.n_xi,
            "eckart_young": self.eckart_young,
        }


def projector(report, k):
    U = report.modes[:, :k]
    return U @ U.T


def eckart_young_residuals(Y, report):
    """|‖Y - Pi_k Y‖_F^2 - sum_{i>k} mu_i| / ‖Y‖_F^2 for k = 0..rank."""
    total = max(float(np.sum(Y * Y)), 1e-300)
    out = []
    for k in range(report.modes.shape[1] + 1):
        U = report.modes[:, :k]
        R = Y - U @ (U.T @ Y)
        out.append(abs(float(np.sum(R * R)) - report.tail(k)) / total)
    return np.array(out)


def spectrum(Y, tol=None):
    """Eigenvalues of Y Y^T via the SVD of Y, with the Eckart-Young check."""
    Y = np.asarray(Y, dtype=float)
    U, s, _ = np.linalg.svd(Y, full_matrices=False)
    mu = np.zeros(Y.shape[0])
    mu[: s.size] = s**2
    total = mu.sum()
    cumulative = np.cumsum(mu) / total if total > 0 else np.ones_like(mu)
    report = SpectrumReport(mu=mu, cumulative=cumulative, modes=U)
    report.eckart_young = float(eckart_young_residuals(Y, report).max())
    if tol is not None:
        report.n_xi = choose_nxi(report, tol)
    return report


def choose_nxi(report, tol):
    """Smallest k >= 1 whose discarded eigenvalue fraction is at most ``tol``."""
    if tol <= 0:
        raise InvalidArgumentError("energy tolerance must be positive")
    total = report.total
    if total == 0.0:
        return 1
    for k in range(1, report.mu.size + 1):
        if report.tail(k) / total <= tol:
            return k
    return report.mu.size


def log_slope(values, start=1, stop=8, base=10.0):
    """Least-squares slope of log_base(values[i-1]) over i = start..stop."""
    i = np.arange(start, stop + 1)
    v = np.asarray(values, dtype=float)[start - 1 : stop]
    v = np.maximum(v, np.finfo(float).tiny)
    return float(np.polyfit(i, np.log(v) / math.log(base), 1)[0])


# ----------------------------------------------------- randomized estimator


@dataclass
class ErrorBoundReport:
    probes: int
    alpha: float
    n_xi: int
    errors: list
    bound: float
    prob_fail: float
    seed: int = None
    member_errors: list = field(default=None)

    @property
    def confidence(self):
        return 1.0 - self.prob_fail

    def to_dict(self):
        d = asdict(self)
        d["confidence"] = self.confidence
        return d


def failure_probability(alpha, probes):
    if alpha <= 1 or probes < 1:
        raise InvalidArgumentError("need alpha > 1 and at least one probe")
    return float(alpha) ** (-int(probes))


def bound_from_errors(errors, alpha):
    return float(alpha * math.sqrt(2.0 / math.pi) * max(errors))


class ErrorDictionary:
    """Error fields e_i = u_ref(f_i) - u_dsm(f_i) for a forcing dictionary.

    By linearity of both solvers the error for a combination sum w_i f_i is
    sum w_i e_i, so each member is solved once and probes cost a quadratic
    form in the Gram matrix of the e_i.
    """

    def __init__(self, forcings, dsm, reference, norm="energy", K=None, mesh=None):
        if len(forcings) < 1:
            raise InvalidArgumentError("dictionary must contain at least one forcing")
        self.forcings = list(forcings)
        fields = []
        for f in self.forcings:
            a = reference(f)
            b = dsm(f)
            fields.append(np.asarray(a.coeffs) - np.asarray(b.coeffs))
        self.fields = fields
        n = len(fields)
        gram = np.zeros((n, n))
        if norm == "energy":
            if K is None:
                raise InvalidArgumentError("energy norm needs the block stiffness")
            for i in range(n):
                for j in range(i, n):
                    gram[i, j] = gram[j, i] = K.inner(fields[i], fields[j])
        elif norm == "L2":
            M = fem.assemble_mass(mesh if mesh is not None else K.mesh)
            for i in range(n):
                for j in range(i, n):
                    gram[i, j] = gram[j, i] = float(np.sum(fields[i] * (M @ fields[j])))
        else:
            raise InvalidArgumentError(f"unknown norm {norm!r}")
        self.gram = 0.5 * (gram + gram.T)
        self.norm = norm

    def __len__(self):
        return len(self.fields)

    def member_errors(self):
        return np.sqrt(np.maximum(np.diag(self.gram), 0.0))

    def probe_errors(self, omegas):
        """Error norms for combinations with weight rows ``omegas`` (r, N)."""
        q = np.einsum("ri,ij,rj->r", omegas, self.gram, omegas)
        return np.sqrt(np.maximum(q, 0.0))


def draw_probes(seed, probes, n):
    """Standard normal weights from PCG64 (numpy ``default_rng``) via ziggurat."""
    return np.random.default_rng(seed).standard_normal((int(probes), int(n)))


def estimate_nxi(dictionary, probes, alpha, seed, n_xi=None, dsm=None, reference=None, K=None, norm="energy"):
    """Probabilistic error bound for the current N_xi.

    ``dictionary`` is either an ``ErrorDictionary`` or a sequence of forcings
    (then ``dsm`` and ``reference`` must map f to a GpcField).
    """
    if probes < 1:
        raise InvalidArgumentError("need at least one probe")
    if alpha <= 1:
        raise InvalidArgumentError("alpha must exceed 1")
    if not isinstance(dictionary, ErrorDictionary):
        dictionary = ErrorDictionary(dictionary, dsm, reference, norm=norm, K=K)
    omegas = draw_probes(seed, probes, len(dictionary))
    errs = dictionary.probe_errors(omegas)
    return ErrorBoundReport(
        probes=int(probes),
        alpha=float(alpha),
        n_xi=n_xi,
        errors=errs.tolist(),
        bound=bound_from_errors(errs, alpha),
        prob_fail=failure_probability(alpha, probes),
        seed=seed,
        member_errors=dictionary.member_errors().tolist(),
    )


def coverage(dictionary, probes, alpha, trials, seed):
    """Fraction of seeded trials whose bound dominates every member error."""
    ss = np.random.SeedSequence(seed)
    worst = dictionary.member_errors().max()
    hits = 0
    bounds = []
    for child in ss.spawn(int(trials)):
        omegas = np.random.default_rng(child).standard_normal((int(probes), len(dictionary)))
        b = bound_from_errors(dictionary.probe_errors(omegas), alpha)
        bounds.append(b)
        hits += b >= worst
    return hits / int(trials), np.array(bounds)


def report_json(spectrum_report=None, bound_report=None, extra=None):
    """JSON text with keys mu, cumulative, n_xi, bound, prob_fail, probes."""
    out = {"mu": None, "cumulative": None, "n_xi": None, "bound": None, "prob_fail": None, "probes": None}
    if spectrum_report is not None:
        out.update(mu=spectrum_report.mu.tolist(), cumulative=spectrum_report.cumulative.tolist(), n_xi=spectrum_report.n_xi)
    if bound_report is not None:
        out.update(bound=bound_report.bound, prob_fail=bound_report.prob_fail, probes=bound_report.errors)
        if out["n_xi"] is None:
            out["n_xi"] = bound_report.n_xi
    if extra:
        out.update(extra)
    return json.dumps(out, indent=2, sort_keys=True)
