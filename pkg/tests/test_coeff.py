import numpy as np
import pytest
from hypothesis import given, strategies as st

from msds import coeff
from msds.errors import InvalidArgumentError

unit = st.floats(0, 1)


@given(unit, unit)
def test_example1_offset(x, y):
    assert coeff.example1().eval(x, y, [0, 0, 0]) == pytest.approx(0.1, abs=1e-15)


def test_example1_periodicity(rng):
    f = coeff.example1()
    (e1, e2, e3) = coeff.EXAMPLE1_EPS
    x, y = rng.random(50), rng.random(50)
    base = f.spatial_terms(x, y)
    assert np.allclose(f.spatial_terms(x + e1, y)[1], base[1], atol=1e-12)
    assert np.allclose(f.spatial_terms(x + e2, y + e2)[2], base[2], atol=1e-12)
    assert np.allclose(f.spatial_terms(x + e3, y + e3)[3], base[3], atol=1e-12)


def test_example2_properties():
    f = coeff.example2(seed=3)
    x, y = np.meshgrid(np.linspace(0, 1, 41), np.linspace(0, 1, 41))
    x, y = x.ravel(), y.ravel()
    assert np.allclose(f.eval(x, y, [0, 0, 0]), 0.5)
    g = coeff.example2(seed=3)
    xi = np.array([0.2, 0.7, 0.9])
    assert np.array_equal(f.eval(x, y, xi), g.eval(x, y, xi))
    assert f.descriptor_hash() == g.descriptor_hash() != coeff.example2(seed=4).descriptor_hash()
    XI = np.random.default_rng(0).random((30, 3))
    assert f.eval_samples(x, y, XI).min() >= 0.5


def test_example2_cell_structure():
    cells = coeff.example2_cells(0)
    assert [c.shape for c in cells] == [(5, 5), (9, 9), (17, 17)]
    f = coeff.example2(0)
    # centre of cell (row 1, col 3) of the 5x5 grid, other variables off
    assert f.eval(3.5 / 5, 1.5 / 5, [1, 0, 0]) == pytest.approx(0.5 + cells[0][1, 3])


def test_example3_properties(rng):
    f = coeff.example3()
    assert f.eval(0.5, 0.5, rng.random(12)) == pytest.approx(0.2)
    xi = rng.random(12)
    moved = xi.copy()
    moved[9] = 1.0 - moved[9]
    x, y = 0.2 + 0.1 * rng.random(20), 0.2 + 0.1 * rng.random(20)  # inside D1
    assert np.array_equal(f.eval(x, y, xi), f.eval(x, y, moved))
    assert coeff.EXAMPLE3_BOXES[3] == ((5 / 8, 7 / 8), (5 / 8, 7 / 8))


@pytest.mark.parametrize("name", ["single_example1", "single_example2", "localized"])
def test_single_variable(name):
    f = coeff.by_name(name)
    assert f.r == 1
    x, y = np.random.default_rng(1).random((2, 30))
    offset = 0.5 if name == "single_example2" else 0.1
    assert np.allclose(f.eval(x, y, [0.0]), offset)
    vals = [f.eval(x, y, [t]) for t in (0.0, 0.25, 0.5)]
    assert np.allclose(vals[2] - vals[1], vals[1] - vals[0], atol=1e-12)


def test_localized_support():
    f = coeff.single_variable("localized")
    assert f.eval(0.6, 0.6, [1.0]) == pytest.approx(0.1)
    assert f.eval(0.2, 0.2, [1.0]) != pytest.approx(0.1)


@pytest.mark.parametrize(
    "name", ["example1", "example2", "example3", "single_example1", "single_example2", "localized", "constant"]
)
def test_positivity_probe(name):
    assert coeff.positivity_probe(coeff.by_name(name), grid=201, samples=100) > 0


def test_box_minimum_is_attained(rng):
    f = coeff.example1()
    x, y = rng.random(200), rng.random(200)
    lo = f.box_minimum(x, y)
    corners = np.array(np.meshgrid(*[[0, 1]] * 3)).reshape(3, -1).T
    assert np.allclose(lo, f.eval_samples(x, y, corners).min(axis=1))


def test_errors_and_custom_fields():
    with pytest.raises(InvalidArgumentError):
        coeff.by_name("nope")
    with pytest.raises(InvalidArgumentError):
        coeff.constant(-1.0)
    with pytest.raises(InvalidArgumentError):
        coeff.example1().eval(0.1, 0.1, [0.1])
    g = coeff.from_function(lambda x, y, xi: 1 + xi[0] * x * 0 + xi[0] ** 2, 1)
    assert g.eval_samples(np.array([0.1]), np.array([0.2]), [[0.5]])[0, 0] == pytest.approx(1.25)
    with pytest.raises(InvalidArgumentError):
        g.spatial_terms(0.1, 0.2)
    assert coeff.constant(2.0).deterministic
