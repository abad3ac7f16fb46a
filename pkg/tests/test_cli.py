import csv
import math

import numpy as np
import pytest

from ptcbf.cli import main
from ptcbf.config import BUILTIN_NAMES, BUILTINS, ConfigError, ScenarioConfig, scenario3
from ptcbf.output import emit_plot_data, read_trajectory_csv, write_trajectory_csv
from ptcbf.sets import ball
from ptcbf.sim import Trajectory

SMALL = """
name = "small"
safe = ["room"]

[system]
name = "single_integrator"

[system.params]
m = 2

[sets.room]
kind = "ball-interior"
center = [0.0, 0.0]
radius = 5.0

[sets.A]
kind = "ball-interior"
center = [0.0, 0.0]
radius = 3.0

[sets.B]
kind = "ball-interior"
center = [2.0, 0.0]
radius = 1.0

[[stages]]
set = "A"
t_start = 0.0
t_end = 1.0

[[stages]]
set = "B"
t_start = 1.0
t_end = 2.0

[input]
box = BOX

[controller]
mu = 5.0

[run]
dt = 0.01
initial_conditions = [[-2.0, 0.5], [0.0, -2.0]]
"""


def small(tmp_path, box="50.0"):
    p = tmp_path / "small.toml"
    p.write_text(SMALL.replace("BOX", box))
    return p


@pytest.mark.parametrize("name", BUILTIN_NAMES)
def test_builtin_round_trip_is_a_fixed_point(name):
    text = BUILTINS[name]().dumps()
    again = ScenarioConfig.loads(text).dumps()
    assert again == text
    assert ScenarioConfig.loads(again).dumps() == again


def test_shipped_scenario_files_match_builtins():
    from pathlib import Path

    root = Path(__file__).resolve().parents[1] / "scenarios"
    for name in BUILTIN_NAMES:
        assert (root / f"{name}.toml").read_text() == BUILTINS[name]().dumps()


def test_unknown_set_reports_line(tmp_path):
    text = SMALL.replace("BOX", "50.0").replace('set = "B"', 'set = "Q"')
    with pytest.raises(ConfigError) as exc:
        ScenarioConfig.loads(text, source="x.toml")
    assert exc.value.line == text.splitlines().index('set = "Q"') + 1
    assert "x.toml:" in str(exc.value)


def test_toml_syntax_error_has_line():
    with pytest.raises(ConfigError) as exc:
        ScenarioConfig.loads('name = "a"\n[system\n', source="bad.toml")
    assert exc.value.line == 2


def test_missing_key():
    with pytest.raises(ConfigError, match="missing required key 'run'"):
        ScenarioConfig.loads(SMALL.replace("BOX", "50.0").split("[run]")[0])


def test_linear_system_inline(tmp_path):
    text = SMALL.replace("BOX", "50.0").replace(
        '[system]\nname = "single_integrator"\n\n[system.params]\nm = 2',
        '[system]\nname = "linear"\nA = [[0.0, 0.0], [0.0, 0.0]]\nB = [[1.0, 0.0], [0.0, 1.0]]')
    built = ScenarioConfig.loads(text).build()
    assert built.system.state_dim == 2 and built.system.input_dim == 2


def test_run_writes_outputs_and_is_deterministic(tmp_path, capsys):
    cfg = small(tmp_path)
    assert main(["run", "--scenario", str(cfg), "--out", str(tmp_path / "o1")]) == 0
    assert main(["run", "--scenario", str(cfg), "--out", str(tmp_path / "o2")]) == 0
    for k in range(2):
        a = (tmp_path / "o1" / f"traj_{k}.csv").read_bytes()
        assert a == (tmp_path / "o2" / f"traj_{k}.csv").read_bytes()
    rows = list(csv.DictReader((tmp_path / "o1" / "summary.csv").open()))
    assert [r["verdict"] for r in rows] == ["true", "true"]
    assert float(rows[0]["reach_1_B"]) <= 1.0
    head = (tmp_path / "o1" / "traj_0.csv").read_text().splitlines()[0]
    assert head == "t,x1,x2,u1,u2,stage,slack,h_room,h_A,h_B"


def test_run_env_out_dir(tmp_path, monkeypatch):
    monkeypatch.setenv("PTCBF_OUT_DIR", str(tmp_path / "env"))
    assert main(["run", "--scenario", str(small(tmp_path)), "--x0=-2,0.5"]) == 0
    assert (tmp_path / "env" / "small" / "summary.csv").exists()


def test_parallel_matches_serial(tmp_path):
    cfg = str(small(tmp_path))
    main(["run", "--scenario", cfg, "--out", str(tmp_path / "s")])
    main(["run", "--scenario", cfg, "--out", str(tmp_path / "p"), "--jobs", "2"])
    assert (tmp_path / "s" / "traj_1.csv").read_bytes() == (tmp_path / "p" / "traj_1.csv").read_bytes()


def test_exit_code_one_when_slack_is_used(tmp_path):
    # too little input to reach B in time, so the CLF row needs slack
    assert main(["run", "--scenario", str(small(tmp_path, "0.05")), "--out", str(tmp_path / "o")]) == 1


def test_exit_code_two_on_config_errors(tmp_path, capsys):
    assert main(["run", "--scenario", str(tmp_path / "missing.toml")]) == 2
    assert main(["run", "--scenario", str(small(tmp_path)), "--x0", "1,2,3", "--out", str(tmp_path)]) == 2
    assert main(["validate", "--scenario", str(small(tmp_path, "-1.0"))]) == 2
    assert "config error" in capsys.readouterr().err


def test_exit_code_three_on_runtime_error(tmp_path):
    text = SMALL.replace("BOX", "0.001").replace(
        '[system]\nname = "single_integrator"\n\n[system.params]\nm = 2',
        '[system]\nname = "linear"\nA = [[5.0, 0.0], [0.0, 5.0]]\nB = [[1.0, 0.0], [0.0, 1.0]]')
    p = tmp_path / "unstable.toml"
    p.write_text(text)
    # the drift pushes the state out of the room faster than the inputs can correct
    assert main(["run", "--scenario", str(p), "--x0", "4.9,0", "--out", str(tmp_path / "o")]) == 3


def test_validate_show_export(tmp_path, capsys):
    assert main(["validate", "--scenario", "scenario3"]) == 0
    assert main(["show", "--scenario", "scenario2"]) == 0
    assert "G_[5,15] phi_S1" in capsys.readouterr().out
    assert main(["export", "--dir", str(tmp_path)]) == 0
    assert ScenarioConfig.load(tmp_path / "scenario1.toml").dumps() == BUILTINS["scenario1"]().dumps()


def test_csv_round_trip_is_exact(tmp_path):
    rng = np.random.default_rng(3)
    tr = Trajectory(np.linspace(0, 1, 5), rng.normal(size=(5, 2)), rng.normal(size=(5, 1)),
                    {"A": rng.normal(size=5)}, np.array([0, 0, 1, 1, 1]), np.abs(rng.normal(size=5)))
    write_trajectory_csv(tr, tmp_path / "t.csv")
    back = read_trajectory_csv(tmp_path / "t.csv")
    for a in ("times", "states", "inputs", "stage", "slack"):
        np.testing.assert_array_equal(getattr(back, a), getattr(tr, a))
    np.testing.assert_array_equal(back.h_values["A"], tr.h_values["A"])


def test_plot_data(tmp_path):
    tr = Trajectory(np.array([0.0, 1.0]), np.array([[0.0, 0.0], [3.0, 4.0]]), np.array([[3.0, 4.0], [0.0, 0.0]]),
                    stage=np.array([0, 1]), slack=np.zeros(2))
    emit_plot_data(tr, [ball((0.0, 0.0), 1.0, "unit")], tmp_path, "r")
    rows = list(csv.DictReader((tmp_path / "boundaries.csv").open()))
    assert len(rows) == 360
    radii = [math.hypot(float(r["x1"]), float(r["x2"])) for r in rows]
    assert max(abs(r - 1.0) for r in radii) <= 1e-9
    u = list(csv.DictReader((tmp_path / "r_unorm.csv").open()))
    assert float(u[0]["unorm"]) == 5.0
    assert list(csv.DictReader((tmp_path / "r_path.csv").open()))[1]["stage"] == "1"


def test_plot_empty_trajectory(tmp_path):
    tr = Trajectory(np.zeros(0), np.zeros((0, 2)), np.zeros((0, 2)), stage=np.zeros(0, dtype=int),
                    slack=np.zeros(0))
    emit_plot_data(tr, [], tmp_path, "e")
    assert (tmp_path / "e_path.csv").read_text().strip() == "t,x1,x2,stage"


def test_plot_command(tmp_path):
    cfg = str(small(tmp_path))
    main(["run", "--scenario", cfg, "--x0=-2,0.5", "--out", str(tmp_path / "o")])
    assert main(["plot", "--traj", str(tmp_path / "o" / "traj_0.csv"), "--scenario", cfg]) == 0
    assert (tmp_path / "o" / "traj_0_path.csv").exists()
    bad = tmp_path / "bad.csv"
    bad.write_text("a,b\n1,2\n")
    assert main(["plot", "--traj", str(bad), "--scenario", cfg]) == 2


def test_scenario3_obstacle_override():
    assert scenario3(obstacle_radius=1.5).build().sets["obstacle"].radius == 1.5
