import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from evodiff.errors import ValidationError
from evodiff.grid import Grid, integrate_boundary, integrate_bulk, trace


def test_weights_sum_to_volume_and_area():
    for n in (1, 2, 3):
        g = Grid((1.0, 2.0, 0.5)[:n], (5, 7, 4)[:n])
        assert np.sum(g.weights) == pytest.approx(g.volume, rel=1e-14)
        assert integrate_boundary(np.ones(g.shape), g) == pytest.approx(g.surface_area, rel=1e-14)


def test_bulk_examples():
    g = Grid.unit(2, 9)
    X, Y = g.mesh()
    assert integrate_bulk(np.ones(g.shape), g) == pytest.approx(1.0)
    assert integrate_bulk(X, g) == pytest.approx(0.5, abs=1e-15)
    g1 = Grid.unit(1, 101)
    assert abs(integrate_bulk(g1.coords[0] ** 2, g1) - 1 / 3) <= 2e-5


def test_boundary_examples():
    g = Grid.unit(2, 11)
    assert integrate_boundary(np.ones(g.shape), g) == pytest.approx(4.0)
    assert integrate_boundary(np.ones((5, 5, 5)), Grid.unit(3, 5)) == pytest.approx(6.0)
    X, _ = g.mesh()
    # west 0, east 1, south and north 1/2 each
    assert integrate_boundary(X, g) == pytest.approx(2.0)


def test_trace_examples():
    g = Grid.unit(2, 6)
    X, Y = g.mesh()
    faces = trace(X, g)
    east = [i for i, f in enumerate(g.faces) if f.axis == 0 and f.side == 1][0]
    assert np.all(faces[east] == 1.0)
    north = [i for i, f in enumerate(g.faces) if f.axis == 1 and f.side == 1][0]
    assert np.allclose(trace(X * Y, g)[north], g.coords[0])
    assert all(np.all(t == 3.0) for t in trace(np.full(g.shape, 3.0), g))


def test_trace_accepts_component_axis():
    g = Grid.unit(2, 4)
    u = np.stack([np.zeros(g.shape), np.ones(g.shape)])
    tr = trace(u, g)
    assert tr[0].shape == (2, 4) and np.all(tr[0][1] == 1)


def test_refinement_order():
    errs = []
    for num in (11, 21, 41):
        g = Grid.unit(2, num)
        X, Y = g.mesh()
        errs.append(abs(integrate_bulk(np.exp(X) * np.sin(Y), g) - (np.e - 1) * (1 - np.cos(1))))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders >= 1.9)


def test_validation():
    with pytest.raises(ValidationError):
        Grid((1.0,), (2,))
    with pytest.raises(ValidationError):
        Grid((1.0, 1.0), (3,))
    with pytest.raises(ValidationError):
        integrate_bulk(np.ones(4), Grid.unit(1, 5))


def test_face_normals_and_ordering():
    g = Grid.unit(3, 3)
    assert [(f.axis, f.side) for f in g.faces] == [(0, -1), (0, 1), (1, -1), (1, 1), (2, -1), (2, 1)]
    assert np.array_equal(g.faces[3].unit_normal(3), [0, 1, 0])


@settings(max_examples=30, deadline=None)
@given(a=st.floats(-5, 5), b=st.floats(-5, 5), seed=st.integers(0, 2**16))
def test_linearity(a, b, seed):
    g = Grid((1.0, 2.0), (5, 6))
    r = np.random.default_rng(seed)
    p, q = r.normal(size=g.shape), r.normal(size=g.shape)
    lhs = integrate_bulk(a * p + b * q, g)
    rhs = a * integrate_bulk(p, g) + b * integrate_bulk(q, g)
    assert lhs == pytest.approx(rhs, abs=1e-11)
    lhs = integrate_boundary(a * p + b * q, g)
    rhs = a * integrate_boundary(p, g) + b * integrate_boundary(q, g)
    assert lhs == pytest.approx(rhs, abs=1e-11)
