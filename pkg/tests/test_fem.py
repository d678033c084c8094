import math

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, strategies as st

from msds import chaos, coeff, fem, mesh
from msds.errors import EllipticityError, InvalidArgumentError, SolverError
from msds.forcing import SECTION_FORCING


def test_unit_stiffness_n2():
    m = mesh.build_uniform_mesh(2)
    A = fem.assemble_sample_stiffness(m, lambda x, y: np.ones_like(x))
    assert A[4, 4] == pytest.approx(4.0)
    assert np.allclose(np.asarray(A.sum(axis=1)).ravel(), 0.0, atol=1e-14)


@given(st.floats(0.01, 100.0))
def test_stiffness_linear_in_coefficient(c):
    m = mesh.build_uniform_mesh(4)
    A1 = fem.unit_stiffness(m)
    Ac = fem.assemble_sample_stiffness(m, lambda x, y: np.full_like(x, c))
    assert abs(Ac - c * A1).max() <= 1e-13 * c


def test_stiffness_rejects_nonpositive():
    m = mesh.build_uniform_mesh(4)
    with pytest.raises(EllipticityError) as err:
        fem.assemble_sample_stiffness(m, lambda x, y: x - 0.5)
    assert err.value.min_value < 0


def test_assembled_matrices_symmetric():
    m = mesh.build_uniform_mesh(8)
    f = coeff.example1()
    K = fem.assemble_block_stiffness(m, f, chaos.total_degree_set(3, 2))
    for A in [*K.stiff, fem.assemble_mass(m)]:
        assert abs(A - A.T).max() <= 1e-15 * abs(A).max()
    assert np.allclose(K.gmats, K.gmats.transpose(0, 2, 1), atol=1e-15)


def test_block_stiffness_deterministic_field():
    m = mesh.build_uniform_mesh(8)
    J = chaos.total_degree_set(1, 3)
    K = fem.assemble_block_stiffness(m, coeff.constant(2.5), J)
    A = fem.assemble_sample_stiffness(m, lambda x, y: np.full_like(x, 2.5))
    for a in range(len(J)):
        for b in range(len(J)):
            expect = A if a == b else 0 * A
            assert abs(K.block(a, b) - expect).max() <= 1e-13


def test_block_stiffness_affine_moment():
    m = mesh.build_uniform_mesh(8)
    f = coeff.affine(lambda x, y: np.full_like(x, 0.5), [lambda x, y: np.ones_like(x)])
    K = fem.assemble_block_stiffness(m, f, chaos.total_degree_set(1, 1))
    A1 = fem.unit_stiffness(m)
    expect = A1 / (2 * math.sqrt(3))
    assert abs(K.block(0, 1) - expect).max() <= 1e-14
    assert abs(K.block(1, 0) - expect).max() <= 1e-14
    assert all((b, a) in K.pattern for a, b in K.pattern)


def test_galerkin_consistency_zero_index():
    m = mesh.build_uniform_mesh(8)
    K = fem.assemble_block_stiffness(m, coeff.constant(1.0), chaos.total_degree_set(1, 0))
    assert abs(K.block(0, 0) - fem.unit_stiffness(m)).max() <= 1e-14


def test_nonaffine_field_matches_affine_route():
    m = mesh.build_uniform_mesh(8)
    f = coeff.single_variable("example1")
    g = coeff.from_function(lambda x, y, xi: f.eval(x, y, xi), 1)
    J = chaos.total_degree_set(1, 3)
    Ka = fem.assemble_block_stiffness(m, f, J)
    Kb = fem.assemble_block_stiffness(m, g, J)
    for a in range(len(J)):
        for b in range(len(J)):
            assert abs(Ka.block(a, b) - Kb.block(a, b)).max() <= 1e-10


def test_mass_matrix():
    m = mesh.build_uniform_mesh(2)
    M = fem.assemble_mass(m)
    h2 = m.h**2
    assert M.sum() == pytest.approx(1.0, abs=1e-15)
    # corners on the cut diagonal touch two triangles, the others one
    d = M.diagonal()
    assert d[0] == pytest.approx(h2 / 6) and d[8] == pytest.approx(h2 / 6)
    assert d[2] == pytest.approx(h2 / 12) and d[6] == pytest.approx(h2 / 12)
    assert d[4] == pytest.approx(h2 / 2)
    assert np.linalg.eigvalsh(M.toarray()).min() > 0


def test_mass_exact_for_products_of_linears():
    m = mesh.build_uniform_mesh(6)
    M = fem.assemble_mass(m)
    u = fem.interpolate(m, lambda x, y: 1 + 2 * x - y)
    v = fem.interpolate(m, lambda x, y: x + 3 * y)
    # int_0^1 int_0^1 (1+2x-y)(x+3y)
    exact = 1 / 2 + 3 / 2 + 2 / 3 + 5 / 4 - 1  # x + 3y + 2x^2 + 5xy - 3y^2
    assert u @ (M @ v) == pytest.approx(exact, rel=1e-13)


def _duffy_load(m, f, q=8):
    """int f lambda_s by collapsed Gauss on every triangle."""
    z, w = np.polynomial.legendre.leggauss(q)
    z, w = 0.5 * (z + 1), 0.5 * w
    U, V = np.meshgrid(z, z, indexing="ij")
    W = np.outer(w, w)
    s, t = U.ravel(), (V * (1 - U)).ravel()  # barycentric-ish coordinates on the reference triangle
    wt = (W * (1 - U)).ravel()
    out = np.zeros(m.num_vertices)
    P = m.vertices[m.triangles]
    lam = np.stack([1 - s - t, s, t])
    area = np.abs(m.signed_areas)
    for k in range(3):
        x = (lam[:, None, :] * P[:, :, 0].T[:, :, None]).sum(axis=0)
        y = (lam[:, None, :] * P[:, :, 1].T[:, :, None]).sum(axis=0)
        vals = 2 * area[:, None] * f(x, y) * lam[k][None, :] * wt[None, :]
        np.add.at(out, m.triangles[:, k], vals.sum(axis=1))
    return out


def test_load_vector():
    m = mesh.build_uniform_mesh(8)
    assert not fem.assemble_load(m, lambda x, y: 0 * x).any()
    assert fem.assemble_load(m, lambda x, y: 1 + 0 * x).sum() == pytest.approx(1.0, abs=1e-14)
    # edge midpoints integrate (linear f) * lambda exactly
    g = lambda x, y: 1 + x - 2 * y  # noqa: E731
    assert np.allclose(fem.assemble_load(m, g), _duffy_load(m, g), atol=1e-16)


def test_load_sine_forcing_fine():
    m = mesh.build_uniform_mesh(256)
    b = fem.assemble_load(m, SECTION_FORCING)
    assert np.abs(b - _duffy_load(m, SECTION_FORCING)).max() <= 1e-8


def test_solve_dirichlet_trivial():
    A = sp.identity(5, format="csc")
    b = np.arange(5.0)
    assert np.array_equal(fem.solve_dirichlet(A, b), b)
    assert not fem.solve_dirichlet(A, np.zeros(5)).any()
    with pytest.raises(SolverError):
        fem.solve_dirichlet(sp.csc_matrix(np.zeros((2, 2))), np.ones(2))


def test_manufactured_solution_second_order():
    errs = []
    for n in (8, 16, 32, 64):
        m = mesh.build_uniform_mesh(n)
        u = fem.solve_poisson(m, lambda x, y: np.ones_like(x), lambda x, y: 2 * np.pi**2 * np.sin(np.pi * x) * np.sin(np.pi * y))
        exact = fem.interpolate(m, lambda x, y: np.sin(np.pi * x) * np.sin(np.pi * y))
        errs.append(fem.l2_norm(m, u - exact))
    rates = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert rates.min() > 1.8


def test_norms_simple():
    m = mesh.build_uniform_mesh(8)
    J = chaos.total_degree_set(1, 2)
    z = fem.GpcField.zeros(m, J)
    for kind in ("L2-mean", "H1-mean", "L2-std", "H1-std"):
        assert fem.norms(z, kind) == 0.0
    u = fem.GpcField(m, J, np.zeros((m.num_vertices, 3)))
    u.coeffs[:, 0] = fem.interpolate(m, lambda x, y: x * (1 - x) * y * (1 - y))
    assert fem.norms(u, "L2-std") == 0.0 and fem.norms(u, "H1-mean") > 0
    with pytest.raises(InvalidArgumentError):
        fem.norms(u, "energy")
    with pytest.raises(InvalidArgumentError):
        fem.norms(u, "L3-mean")


def test_separable_energy_monte_carlo():
    m = mesh.build_uniform_mesh(16)
    f = coeff.single_variable("example1")
    J = chaos.total_degree_set(1, 2)
    K = fem.assemble_block_stiffness(m, f, J)
    w = fem.interpolate(m, lambda x, y: np.sin(np.pi * x) * np.sin(2 * np.pi * y))
    u = fem.GpcField(m, J, np.zeros((m.num_vertices, 3)))
    u.coeffs[:, 1] = w
    energy = K.energy(u.coeffs)
    rng = np.random.default_rng(5)
    xi = rng.random(4000)
    c = m.centroids
    terms = f.spatial_terms(c[:, 0], c[:, 1])
    A0, A1 = fem.stiffness_terms(m, terms)
    e0, e1 = w @ (A0 @ w), w @ (A1 @ w)
    H1 = math.sqrt(3) * (2 * xi - 1)
    mc = np.mean(H1**2 * (e0 + xi * e1))
    assert energy == pytest.approx(mc, rel=0.01)


@pytest.mark.parametrize("name, p", [("single_example1", 3), ("example1", 2)])
def test_energy_matches_sample_average(name, p, rng):
    m = mesh.build_uniform_mesh(8)
    f = coeff.by_name(name)
    J = chaos.total_degree_set(f.r, p)
    K = fem.assemble_block_stiffness(m, f, J)
    u = fem.GpcField(m, J, rng.standard_normal((m.num_vertices, len(J))))
    u.coeffs[m.boundary_mask] = 0.0
    Q = chaos.quad_rule(f.r, p + 2)
    assert K.energy(u.coeffs) == pytest.approx(fem.energy_by_samples(f, m, u, Q), rel=1e-10)


def test_operator_matches_apply(rng):
    m = mesh.build_uniform_mesh(6)
    f = coeff.example1()
    J = chaos.total_degree_set(3, 2)
    K = fem.assemble_block_stiffness(m, f, J)
    nodes = m.interior
    V = rng.standard_normal((nodes.size, len(J)))
    A = K.operator(nodes)
    assert np.allclose((A @ V.ravel()).reshape(V.shape), K.apply(V, nodes), atol=1e-12)
    sub = K.restricted([0, 2, 3])
    assert np.allclose(sub.gmats, K.gmats[:, [0, 2, 3]][:, :, [0, 2, 3]])


def test_relative_errors_zero_for_identical():
    m = mesh.build_uniform_mesh(8)
    v = fem.interpolate(m, lambda x, y: x * y * (1 - x) * (1 - y))
    errs = fem.relative_errors(m, v, v, v, v)
    assert set(errs) == {"mean_L2", "mean_H1", "std_L2", "std_H1"}
    assert all(e == 0 for e in errs.values())


def test_relative_errors_roundoff_std():
    m = mesh.build_uniform_mesh(8)
    v = fem.interpolate(m, lambda x, y: x * y * (1 - x) * (1 - y))
    noise = 1e-18 * np.ones_like(v)
    errs = fem.relative_errors(m, v, noise, v, 3 * noise)
    assert errs["std_L2"] <= 1e-15
    errs = fem.relative_errors(m, v, 0.5 * v, v, 0.6 * v)
    assert errs["std_L2"] == pytest.approx(0.2)
