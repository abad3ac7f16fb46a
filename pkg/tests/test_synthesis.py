import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from ptcbf.dynamics import InputPolytope, scenario1_system, single_integrator
from ptcbf.qp import oracle_solve, solve_qp
from ptcbf.sets import ball, box_function, superellipse
from ptcbf.spec import ReachAvoidSpec, Stage
from ptcbf.synthesis import (ControllerError, FxTSGains, MultiStageController, ReachController, build_multi_qp,
                             build_reach_qp, check_sandwich, decay_terms, relaxed_reach_qp, settling_time_bound,
                             settling_time_bound_general)


def test_gain_floors_give_the_budget():
    g = FxTSGains(5.0, 10.0)
    assert g.gamma1 == 1.2 and g.gamma2 == 0.8
    assert g.alpha_floor1 == pytest.approx(1.0) and g.alpha_floor2 == pytest.approx(1.0)
    assert settling_time_bound(g, g.alpha_floor1, g.alpha_floor2) == pytest.approx(10.0, rel=1e-14)


def test_general_bound_closed_form():
    assert settling_time_bound_general(1.0, 1.0, 0.5, 2.0) == pytest.approx(2.0 + 1.0)
    with pytest.raises(ValueError):
        settling_time_bound_general(1.0, 1.0, 1.5, 2.0)


def test_decay_terms_clamp_before_power():
    g = FxTSGains()
    assert decay_terms(-0.5, g) == (0.0, 0.0)
    p1, p2 = decay_terms(2.0, g)
    assert p1 == pytest.approx(2.0 ** 1.2) and p2 == pytest.approx(2.0 ** 0.8)


def test_reach_qp_matches_oracle():
    sys = single_integrator(2)
    g = FxTSGains(5.0, 5.0)
    p = build_reach_qp(sys, ball((0.0, 0.0), 1.0), InputPolytope.box(30.0, 2), g, [4.0, -2.0])
    s, o = solve_qp(p), oracle_solve(p)
    np.testing.assert_allclose(s.z_star, o.z_star, atol=1e-8)
    assert s.z_star[-1] < 1e-12  # feasible without slack


def test_reach_qp_uses_slack_when_inputs_are_too_small():
    sys = single_integrator(2)
    p = build_reach_qp(sys, ball((0.0, 0.0), 1.0), InputPolytope.box(0.01, 2), FxTSGains(5.0, 0.1), [5.0, 5.0])
    s = solve_qp(p)
    assert s.ok and s.z_star[-1] > 1.0


def test_relaxed_qp_with_proxy_equals_plain_qp():
    sys = single_integrator(2)
    tgt = ball((0.0, 0.0), 1.0)
    g = FxTSGains()
    a = build_reach_qp(sys, tgt, InputPolytope.unbounded(2), g, [2.0, 1.0])
    b = relaxed_reach_qp(sys, tgt, tgt, InputPolytope.unbounded(2), g, [2.0, 1.0])
    np.testing.assert_array_equal(a.A, b.A)
    np.testing.assert_array_equal(a.b, b.b)


def test_sandwich_check():
    proxy = superellipse((0.0, 0.0), 1.0, 8)
    hb = box_function((0.0, 0.0), 1.0, 8)
    pts = np.random.default_rng(0).uniform(-1.5, 1.5, size=(200, 2))
    rep = check_sandwich(proxy, hb, pts)
    assert rep.lower_violation <= 1e-12


def test_multi_qp_row_layout():
    a, b = ball((0.0, 0.0), 1.0, "A"), ball((1.5, 0.0), 1.0, "B")
    safe = ball((0.0, 0.0), 5.0, "safe")
    spec = ReachAvoidSpec((safe,), (Stage(a, 0.0, 1.0), Stage(b, 1.0, 2.0)), InputPolytope.box(5.0, 2), 1.0)
    g = FxTSGains(5.0, 1.0)
    p0 = build_multi_qp(single_integrator(2), spec, 0, g, [0.0, 0.0])
    assert p0.row_labels == ["zcbf-safe", "zcbf-stage", "clf"] + ["input-bound"] * 4 + \
        ["gain-lower-bound"] * 2 + ["slack"]
    p1 = build_multi_qp(single_integrator(2), spec, 1, g, [1.5, 0.0])
    assert "clf" not in p1.row_labels and "gain-lower-bound" not in p1.row_labels


def test_estimator_api():
    c = ReachController(ball((0.0, 0.0), 1.0), mu=3.0, T=2.0)
    assert c.get_params()["T"] == 2.0
    c2 = clone(c).set_params(T=4.0)
    assert c2.T == 4.0 and c.T == 2.0
    with pytest.raises(NotFittedError):
        c.predict([[1.0, 1.0]])
    c.fit(single_integrator(2))
    U = c.predict(np.array([[3.0, 0.0], [0.0, 0.5]]))
    assert U.shape == (2, 2)
    assert U[0, 0] < 0 and np.allclose(U[1], 0.0)  # drives toward the ball, no action inside


def test_controller_stays_at_gain_floors():
    c = ReachController(ball((0.0, 0.0), 1.0), mu=5.0, T=5.0).fit(single_integrator(2))
    r = c.control([3.0, 4.0])
    np.testing.assert_allclose(r.alpha, (c.gains_.alpha_floor1, c.gains_.alpha_floor2), atol=1e-9)
    assert r.slack_used < 1e-12


def test_fit_validates_dimensions():
    with pytest.raises(ValueError):
        ReachController(ball((0.0, 0.0, 0.0), 1.0)).fit(single_integrator(2))
    with pytest.raises(ValueError):
        ReachController(ball((0.0, 0.0), 1.0), InputPolytope.box(1.0, 3)).fit(single_integrator(2))


def test_multi_stage_rejects_invalid_spec():
    a, b = ball((0.0, 0.0), 1.0, "A"), ball((5.0, 0.0), 1.0, "B")
    spec = ReachAvoidSpec((), (Stage(a, 0.0, 1.0), Stage(b, 1.0, 2.0)), InputPolytope.box(5.0, 2), 1.0)
    with pytest.raises(ValueError):
        MultiStageController(spec).fit(single_integrator(2))
    with pytest.warns(UserWarning):
        MultiStageController(spec, check_spec=False).fit(single_integrator(2))


def test_infeasible_control_qp_raises():
    # On the boundary point (4, 0) of A the ZCBF row reads 8 u <= -32, which
    # the input box |u| <= 1e-3 cannot meet.
    a = ball((3.0, 0.0), 1.0, "A")
    spec = ReachAvoidSpec((), (Stage(a, 0.0, 1.0), Stage(a, 1.0, 2.0)), InputPolytope.box(1e-3, 1), 1.0)
    c = MultiStageController(spec).fit(scenario1_system())
    with pytest.raises(ControllerError):
        c.control(np.array([4.0, 0.0]), 1.5)


def test_gain_regularisation_limit():
    # the input part of the solution settles as the gain cost eps shrinks
    sys = single_integrator(2)
    tgt = ball((0.0, 0.0), 1.0)
    U = InputPolytope.box(5.0, 2)
    vs = []
    for eps in (1e-2, 1e-4, 1e-6, 1e-8):
        p = build_reach_qp(sys, tgt, U, FxTSGains(5.0, 5.0), [3.0, 1.0], eps=eps)
        vs.append(solve_qp(p).z_star[:2])
    diffs = [np.linalg.norm(a - b) for a, b in zip(vs, vs[1:])]
    assert diffs[-1] <= 1e-6 and diffs[-1] <= diffs[0] + 1e-12
