import numpy as np
import pytest
from hypothesis import given, strategies as st

from msds import mesh
from msds.errors import InvalidArgumentError


@pytest.mark.parametrize("n, nv, nt, ni", [(2, 9, 8, 1), (8, 81, 128, 49), (256, 66049, 131072, 65025)])
def test_counts(n, nv, nt, ni):
    m = mesh.build_uniform_mesh(n)
    assert m.num_vertices == nv
    assert m.num_triangles == nt
    assert m.interior.size == ni


def test_small_n_rejected():
    with pytest.raises(InvalidArgumentError):
        mesh.build_uniform_mesh(1)


@given(st.integers(2, 40))
def test_areas_positive_and_sum_to_one(n):
    m = mesh.build_uniform_mesh(n)
    assert np.allclose(m.signed_areas, 1.0 / (2 * n * n), rtol=0, atol=1e-15)
    assert abs(m.signed_areas.sum() - 1.0) <= 1e-14


def test_row_major_numbering():
    m = mesh.build_uniform_mesh(4)
    assert m.vertex_index(3, 2) == 2 * 5 + 3
    assert np.allclose(m.vertices[m.vertex_index(3, 2)], [0.75, 0.5])
    assert m.find_vertex(0.75, 0.5) == 13
    with pytest.raises(InvalidArgumentError):
        m.find_vertex(0.3, 0.5)


def test_nesting():
    c, f = mesh.build_uniform_mesh(8), mesh.build_uniform_mesh(256)
    nm = mesh.nest(c, f)
    assert nm.ratio == 32
    assert np.allclose(f.vertices[nm.coarse_to_fine_node], c.vertices)
    same = mesh.nest(mesh.build_uniform_mesh(4), mesh.build_uniform_mesh(4))
    assert np.array_equal(same.coarse_to_fine_node, np.arange(25))
    with pytest.raises(InvalidArgumentError):
        mesh.nest(c, mesh.build_uniform_mesh(12))


def test_patch_layer_zero():
    c, f = mesh.build_uniform_mesh(4), mesh.build_uniform_mesh(8)
    p = mesh.make_patch(c, f, c.find_vertex(0.5, 0.5), 0)
    assert p.num_cells == 4  # 2x2 block = 8 coarse triangles
    assert p.cell_range == (1, 2, 1, 2)
    xy = f.vertices[p.fine_nodes]
    assert xy.min() == 0.25 and xy.max() == 0.75
    assert p.fine_nodes.size == 25 and p.free_nodes.size == 9
    assert p.fine_triangles.size == 2 * 16


def test_patch_saturation_and_side():
    c, f = mesh.build_uniform_mesh(8), mesh.build_uniform_mesh(16)
    for v in c.interior:
        p = mesh.make_patch(c, f, v, 8)
        assert p.fine_nodes.size == f.num_vertices
        q = mesh.make_patch(c, f, v, mesh.default_layers(8))
        i_lo, i_hi, j_lo, j_hi = q.cell_range
        assert i_hi - i_lo + 1 <= 8 and j_hi - j_lo + 1 <= 8


def test_patch_boundary_and_errors():
    c, f = mesh.build_uniform_mesh(4), mesh.build_uniform_mesh(8)
    p = mesh.make_patch(c, f, c.find_vertex(0.25, 0.25), 1)
    xy = f.vertices[p.boundary_nodes]
    on_edge = (xy[:, 0] == 0) | (xy[:, 1] == 0) | (xy[:, 0] == 0.75) | (xy[:, 1] == 0.75)
    assert on_edge.all()
    with pytest.raises(InvalidArgumentError):
        mesh.make_patch(c, f, 0, 1)  # boundary vertex
    with pytest.raises(InvalidArgumentError):
        mesh.make_patch(c, f, 6, -1)


@given(st.sampled_from([2, 4, 8]), st.integers(0, 6), st.data())
def test_patch_monotone(nc, layers, data):
    c, f = mesh.build_uniform_mesh(nc), mesh.build_uniform_mesh(16)
    v = data.draw(st.sampled_from(list(c.interior)))
    a = mesh.make_patch(c, f, v, layers)
    b = mesh.make_patch(c, f, v, layers + 1)
    assert np.isin(a.fine_nodes, b.fine_nodes).all()
    assert np.isin(a.fine_triangles, b.fine_triangles).all()


def _barycentric_hat(coarse, vertex, p):
    """Hat value by locating p in a coarse triangle and solving for barycentrics."""
    for t in coarse.triangles:
        P = coarse.vertices[t]
        A = np.vstack([P.T, np.ones(3)])
        lam = np.linalg.solve(A, [p[0], p[1], 1.0])
        if lam.min() >= -1e-12:
            return lam[list(t).index(vertex)] if vertex in t else 0.0
    raise AssertionError("point outside the mesh")


def test_hat_values():
    c, f = mesh.build_uniform_mesh(4), mesh.build_uniform_mesh(8)
    P = mesh.hat_matrix(c, f).toarray()
    nm = mesh.nest(c, f)
    for col, v in enumerate(c.interior):
        own = nm.coarse_to_fine_node[c.interior]
        assert np.allclose(P[own, col], (c.interior == v).astype(float))
    v = c.find_vertex(0.5, 0.5)
    col = list(c.interior).index(v)
    for x, y in [(0.625, 0.625), (0.375, 0.625), (0.375, 0.375), (0.625, 0.375)]:
        node = f.find_vertex(x, y)
        assert P[node, col] == pytest.approx(_barycentric_hat(c, v, (x, y)), abs=1e-14)
    rng = np.random.default_rng(1)
    for node in rng.choice(f.num_vertices, 20, replace=False):
        for col, v in enumerate(c.interior):
            assert P[node, col] == pytest.approx(_barycentric_hat(c, v, f.vertices[node]), abs=1e-13)


@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(-3, 3))
def test_hat_reproduces_linear_functions(a, b, cc):
    c, f = mesh.build_uniform_mesh(4), mesh.build_uniform_mesh(16)
    g = lambda xy: a + b * xy[:, 0] + cc * xy[:, 1]  # noqa: E731
    P = mesh.hat_matrix(c, f)
    combo = P @ g(c.vertices[c.interior])
    xy = f.vertices
    # boundary hats vanish at least one coarse cell away from the boundary
    away = (xy.min(axis=1) >= c.h) & (xy.max(axis=1) <= 1 - c.h)
    assert np.allclose(combo[away], g(xy)[away], atol=1e-13)
    assert len(mesh.coarse_hats(c, f)) == 9
