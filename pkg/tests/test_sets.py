import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import fd_gradient
from ptcbf.sets import (KINDS, SmoothSet, ball, ball_exterior, boundary_points, box_function, contains,
                        ellipsoid, estimate_offset, evaluate, superellipse, weighted_ball)

EXAMPLES = {
    "ball-interior": ball((1.0, -2.0), 1.5, "b"),
    "ellipsoid-interior": ellipsoid((0.0, 0.0), (9.0, 0.9), "e"),
    "weighted-ball-interior": weighted_ball((0.0, 1.5), (1.2, 0.5), 1.0, "w"),
    "ball-exterior": ball_exterior((0.0, 0.0), 1.0, "o"),
    "superellipse-interior": superellipse((1.5, 1.5), 0.5, 8, "c"),
}


def test_every_kind_has_an_example():
    assert set(EXAMPLES) == set(KINDS)


def test_ball_values():
    s = ball((0.0, 0.0), 2.0)
    assert s.value([0.0, 0.0]) < 0
    assert abs(s.value([2.0, 0.0])) < 1e-12
    assert s.value([3.0, 0.0]) > 0
    assert contains(s, [1.0, 1.0]) and not contains(s, [2.0, 2.0])


def test_exterior_is_complement():
    inner, outer = ball((0.0, 0.0), 1.0), ball_exterior((0.0, 0.0), 1.0)
    for x in ([0.2, 0.1], [3.0, 0.0]):
        assert np.sign(inner.value(x)) == -np.sign(outer.value(x))


@pytest.mark.parametrize("kind", KINDS)
def test_boundary_points_are_on_the_zero_level(kind):
    s = EXAMPLES[kind]
    pts = boundary_points(s, 360)
    assert pts.shape == (360, 2)
    np.testing.assert_allclose(s.values(pts), 0.0, atol=1e-9)


def test_unit_circle_boundary_radius():
    pts = boundary_points(ball((0.0, 0.0), 1.0), 360)
    assert np.max(np.abs(np.linalg.norm(pts, axis=1) - 1.0)) <= 1e-9


@pytest.mark.parametrize("kind", KINDS)
def test_dict_round_trip(kind):
    s = EXAMPLES[kind]
    s2 = SmoothSet.from_dict(s.to_dict())
    assert s2.to_dict() == s.to_dict()
    x = np.array([0.3, -0.7])
    assert s2.value(x) == s.value(x)


@pytest.mark.parametrize("kind", KINDS)
def test_vectorised_values_match(kind, rng):
    s = EXAMPLES[kind]
    X = rng.uniform(-3, 3, size=(50, 2))
    np.testing.assert_allclose(s.values(X), [s.value(x) for x in X], rtol=1e-13, atol=1e-13)


def test_evaluate_checks_shape():
    with pytest.raises(ValueError):
        evaluate(ball((0.0, 0.0), 1.0), [1.0, 2.0, 3.0])


def test_invalid_parameters():
    with pytest.raises(ValueError):
        ball((0.0, 0.0), -1.0)
    with pytest.raises(ValueError):
        superellipse((0.0, 0.0), 1.0, 0)


def test_superellipse_sandwiches_the_box():
    # on the box boundary the smooth proxy lies between h_box and h_box + (d - 1)
    proxy = superellipse((0.0, 0.0), 2.0, 8)
    hb = box_function((0.0, 0.0), 2.0, 8)
    edge = np.array([[2.0, t] for t in np.linspace(-2, 2, 41)])
    gap = estimate_offset(proxy, hb, edge)
    assert 0.0 <= gap <= 1.0 + 1e-12


@settings(max_examples=50, deadline=None)
@given(st.floats(-4, 4), st.floats(-4, 4), st.sampled_from(KINDS))
def test_gradient_matches_finite_differences(x1, x2, kind):
    s = EXAMPLES[kind]
    x = np.array([x1, x2])
    if kind == "superellipse-interior" and np.abs(x - 1.5).max() > 3.5:
        x = x / 2  # keep h^(2n) terms well inside double range for the FD step
    g = s.gradient(x)
    g_fd = fd_gradient(s.value, x)
    assert np.linalg.norm(g - g_fd) <= 1e-5 * max(1.0, np.linalg.norm(g))
