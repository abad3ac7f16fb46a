import numpy as np
import pytest

from ptcbf.dynamics import (InputPolytope, get_system, lie_derivatives, linear_system, scenario1_system,
                            single_integrator)
from ptcbf.sets import ball


def test_scenario1_vector_field():
    sys = scenario1_system()
    x = np.array([0.5, -1.0])
    np.testing.assert_allclose(sys.f(x), [1.0 + 0.25, 0.5 + np.tanh(1.0)])
    np.testing.assert_allclose(sys.g(x), [[0.5], [-1.0]])
    assert (sys.state_dim, sys.input_dim) == (2, 1)


def test_lie_derivatives_of_a_ball():
    sys = single_integrator(2)
    Lf, Lg = lie_derivatives(ball((0.0, 0.0), 1.0), sys, [1.0, 2.0])
    assert Lf == 0.0
    np.testing.assert_allclose(Lg, [2.0, 4.0])


def test_registry():
    assert get_system("single_integrator", m=3).state_dim == 3
    with pytest.raises(ValueError):
        get_system("pendulum")


def test_linear_system_shapes():
    sys = linear_system([[0.0, 1.0], [0.0, 0.0]], [[0.0], [1.0]])
    np.testing.assert_allclose(sys(np.array([1.0, 2.0]), np.array([3.0])), [2.0, 3.0])
    with pytest.raises(ValueError):
        linear_system(np.eye(2), np.ones((3, 1)))


def test_box_polytope():
    U = InputPolytope.box(7.0, 2)
    assert U.n_rows == 4
    assert U.contains([7.0, -7.0]) and not U.contains([7.1, 0.0])
    assert U.contains(U.interior_point())
    assert InputPolytope.from_dict(U.to_dict()).to_dict() == U.to_dict()


def test_empty_polytope_rejected():
    with pytest.raises(ValueError):
        InputPolytope([[1.0], [-1.0]], [-1.0, -1.0])


def test_unbounded_polytope():
    U = InputPolytope.unbounded(2)
    assert U.n_rows == 0 and U.contains([1e9, -1e9])
