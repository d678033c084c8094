import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from msds import chaos
from msds.errors import InvalidArgumentError


def brute(r, p, caps=None):
    caps = caps or (p,) * r
    return {a for a in itertools.product(*(range(c + 1) for c in caps)) if sum(a) <= p}


@pytest.mark.parametrize("r, p, n", [(3, 4, 35), (12, 3, 455), (1, 0, 1), (1, 7, 8)])
def test_total_degree_counts(r, p, n):
    J = chaos.total_degree_set(r, p)
    assert len(J) == n == chaos.cardinality(r, p)
    assert J[0] == (0,) * r


@given(st.integers(1, 4), st.integers(0, 5))
def test_total_degree_members_and_order(r, p):
    J = chaos.total_degree_set(r, p)
    assert set(J) == brute(r, p)
    degrees = J.indices.sum(axis=1)
    assert np.all(np.diff(degrees) >= 0)
    for k, a in enumerate(J):
        assert J.position(a) == k


def test_anisotropic_example3_caps():
    t = (3, 3, 3, 1, 1, 1, 1, 1, 1, 0, 0, 0)
    # the literal definition {|a| <= p, a_i <= t_i}; 49 members appear at total degree 2
    assert len(chaos.anisotropic_set(12, 3, t)) == len(brute(12, 3, t)) == 160
    assert len(chaos.anisotropic_set(12, 2, t)) == 49


@given(st.integers(1, 4), st.integers(0, 4), st.data())
def test_anisotropic_subset(r, p, data):
    t = data.draw(st.lists(st.integers(0, p), min_size=r, max_size=r))
    A = chaos.anisotropic_set(r, p, t)
    assert set(A) == brute(r, p, tuple(t))
    assert set(A) <= set(chaos.total_degree_set(r, p))
    assert set(chaos.anisotropic_set(r, p, [p] * r)) == set(chaos.total_degree_set(r, p))
    assert list(chaos.anisotropic_set(r, p, [0] * r)) == [(0,) * r]


def test_poly_eval_examples():
    assert chaos.poly_eval((0, 0), [0.3, 0.9]) == 1.0
    assert chaos.poly_eval((1,), [0.5]) == pytest.approx(0.0, abs=1e-15)
    assert chaos.poly_eval((2,), [1.0]) == pytest.approx(math.sqrt(5))
    x = 0.3
    z = 2 * x - 1
    assert chaos.poly_eval((3,), [x]) == pytest.approx(math.sqrt(7) * (5 * z**3 - 3 * z) / 2)
    with pytest.raises(InvalidArgumentError):
        chaos.poly_eval((1,), [1.2])


def test_recurrence_bound():
    x = np.linspace(0, 1, 1001)
    table = chaos.legendre_1d(x, 12)
    for k in range(13):
        assert np.abs(table[:, k]).max() <= math.sqrt(2 * k + 1) * (1 + 1e-13)
        assert abs(table[-1, k]) == pytest.approx(math.sqrt(2 * k + 1))


def test_symmetric_interval():
    # H_1 on [-1,1] is sqrt(3) x
    assert chaos.poly_eval((1,), [0.5], interval=chaos.SYMMETRIC) == pytest.approx(math.sqrt(3) / 2)


def test_quad_rule_examples():
    q1 = chaos.quad_rule(1, 1)
    assert q1.nodes[0, 0] == 0.5 and q1.weights[0] == 1.0
    q2 = chaos.quad_rule(1, 2)
    assert np.allclose(np.sort(q2.nodes[:, 0]), [0.5 - 1 / (2 * math.sqrt(3)), 0.5 + 1 / (2 * math.sqrt(3))])
    q3 = chaos.quad_rule(2, 3)
    assert q3.size == 9 and q3.weights.sum() == pytest.approx(1.0, abs=1e-15)


def test_gram_check_examples():
    assert chaos.gram_check(chaos.total_degree_set(1, 3), chaos.quad_rule(1, 4)) <= 1e-12
    assert chaos.gram_check(chaos.total_degree_set(2, 0), chaos.quad_rule(2, 1)) == 0.0
    assert chaos.gram_check(chaos.total_degree_set(3, 4), chaos.quad_rule(3, 5)) <= 1e-12


@given(st.integers(1, 3), st.integers(0, 5))
def test_gram_check_exact_rule(r, p):
    assert chaos.gram_check(chaos.total_degree_set(r, p), chaos.quad_rule(r, p + 1)) <= 1e-12


def test_linear_moments_against_sampling():
    J = chaos.total_degree_set(2, 3)
    Q = chaos.quad_rule(2, chaos.default_points(3))
    V = chaos.eval_basis(J, Q.nodes)
    for c in (None, 0, 1):
        w = Q.weights if c is None else Q.weights * Q.nodes[:, c]
        assert np.allclose(chaos.linear_moments(J, Q, c), V.T @ (w[:, None] * V), atol=1e-14)
    # E[xi H_1^2] = 1/2 and E[xi H_1] = 1/(2 sqrt 3) in one dimension
    J1 = chaos.total_degree_set(1, 1)
    M = chaos.linear_moments(J1, chaos.quad_rule(1, 3), 0)
    assert M[1, 1] == pytest.approx(0.5) and M[0, 1] == pytest.approx(1 / (2 * math.sqrt(3)))


def test_eval_basis_matches_poly_eval(rng):
    J = chaos.total_degree_set(3, 3)
    xi = rng.random((7, 3))
    V = chaos.eval_basis(J, xi)
    for k, a in enumerate(J):
        assert np.allclose(V[:, k], chaos.poly_eval(a, xi))


def test_measurement_indices_and_union():
    J = chaos.total_degree_set(2, 2)
    assert chaos.measurement_indices(J, 3) == [(0, 0), (1, 0), (0, 1)]
    with pytest.raises(InvalidArgumentError):
        chaos.measurement_indices(J, 0)
    U = chaos.union([chaos.anisotropic_set(2, 2, (2, 0)), chaos.anisotropic_set(2, 2, (0, 2))])
    assert set(U) == {(0, 0), (1, 0), (0, 1), (2, 0), (0, 2)}
