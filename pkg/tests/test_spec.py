import numpy as np
import pytest

from ptcbf.config import scenario3
from ptcbf.dynamics import InputPolytope
from ptcbf.sets import ball, ball_exterior, superellipse, weighted_ball
from ptcbf.spec import (And, F, G, ReachAvoidSpec, Stage, corridor_chain, count_conjuncts, find_overlap,
                        is_contained, to_stl, validate)

U = InputPolytope.box(1.0, 2)


def two_stage(gap=0.5, dwell=1.0):
    a, b = ball((0.0, 0.0), 1.0, "A"), ball((2.0 - gap, 0.0), 1.0, "B")
    return ReachAvoidSpec((), (Stage(a, 0.0, 1.0), Stage(b, 1.0, 2.0)), U, dwell)


def test_valid_spec():
    spec = two_stage()
    assert validate(spec).ok
    assert spec.N == 1 and spec.breakpoints == [0.0, 1.0, 2.0] and spec.t_final == 2.0


def test_stage_index_switches_at_breakpoints():
    spec = two_stage()
    assert [spec.stage_index(t) for t in (0.0, 0.999, 1.0, 2.0)] == [0, 0, 1, 1]


def test_disjoint_stage_sets_are_reported():
    rep = validate(two_stage(gap=-0.5))
    assert not rep.ok and rep.violations[0].kind == "overlap"


def test_short_dwell_is_reported():
    rep = validate(two_stage(dwell=1.5))
    assert any(v.kind == "dwell" for v in rep.violations)


def test_find_overlap_witness():
    v, w = find_overlap(ball((0.0, 0.0), 1.0), ball((1.5, 0.0), 1.0))
    assert v <= 0 and ball((0.0, 0.0), 1.0).value(w) <= 0 and ball((1.5, 0.0), 1.0).value(w) <= 0


def test_to_stl_shape():
    f = to_stl(two_stage())
    assert isinstance(f, And) and count_conjuncts(f) == 2
    assert isinstance(f.children[0], G) and isinstance(f.children[1], F)
    assert str(f) == "G_[0,1] phi_A & F_[0,1] phi_B"


def test_half_open_windows():
    spec = scenario3().build().spec
    f = to_stl(spec, half_open=True)
    assert not f.children[2].interval.left_open
    assert f.children[4].interval.left_open


def test_containment():
    assert is_contained(ball((0.0, 0.0), 0.5), ball((0.0, 0.0), 1.0))
    assert not is_contained(ball((0.8, 0.0), 0.5), ball((0.0, 0.0), 1.0))


def test_scenario3_corridor():
    spec = scenario3().build().spec
    names = [s.set.name for s in spec.stages]
    assert names == ["Sb1", "Sb2", "Sb3", "Sb4", "Sb5", "Sb6", "Sb7", "Sb8", "Sb1"]
    assert spec.breakpoints == [float(t) for t in range(10)]
    # each corner target sits inside its waypoint ball and avoids the obstacle
    for k, c in enumerate([(1.5, 1.5), (1.5, -1.5), (-1.5, -1.5), (-1.5, 1.5)]):
        assert is_contained(superellipse(c, 0.5, 8), ball(c, 1.0))
    assert count_conjuncts(to_stl(spec, half_open=True)) == 18


def test_corridor_rejects_bad_breakpoints():
    way = [ball((0.0, 0.0), 1.0, "a"), ball((1.0, 0.0), 1.0, "b")]
    tgt = [ball((1.0, 0.0), 0.2, "t")]
    with pytest.raises(ValueError):
        corridor_chain(tgt, None, way, [2.0], breakpoints=[0.0, 2.5, 2.0])
