import json
import math
import os

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from savflow import cli
from savflow.cli import ConfigError, config_text, csv_text, main, parse_config


def write(tmp_path, text, name="run.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


@pytest.mark.parametrize("exp", ["convergence", "cylinder", "offset-circles"])
def test_defaults(exp, tmp_path):
    cfg = parse_config(write(tmp_path, ""), experiment=exp)
    key = exp.replace("-", "_")
    assert cfg.experiment == key
    for k, v in cli.DEFAULTS[key].items():
        assert getattr(cfg, k) == v
    assert cfg.alpha1 == "uniform_h2" and cfg.sav_enabled


def test_benchmark_parameter_sets():
    c = parse_config(experiment="cylinder")
    assert (c.nu, c.dt, c.t_end, c.alpha2) == (1e-3, 0.01, 8.0, 0.001)
    o = parse_config(experiment="offset_circles")
    assert (o.dt, o.t_end, o.reynolds) == (0.025, 5.0, (200.0, 800.0, 1200.0))
    v = parse_config(experiment="convergence")
    assert (v.nu, v.alpha2) == (1.0, 1.0)


def test_file_and_flag_precedence(tmp_path):
    path = write(tmp_path, "# comment\nalpha2 = 0.001  # trailing\n\ndt = 0.02\n")
    cfg = parse_config(path, {"dt": "0.05"}, experiment="convergence")
    assert cfg.alpha2 == 0.001 and cfg.dt == 0.05


@pytest.mark.parametrize("override,needle", [
    ({"dt": "-1"}, "dt must be positive"),
    ({"dt": "abc"}, "expected float"),
    ({"refinements": "4,x"}, "list of int"),
    ({"alpha1": "huge"}, "alpha1"),
    ({"solver": "cg"}, "solver"),
    ({"sav_enabled": "maybe"}, "bool"),
])
def test_validation_errors(override, needle):
    with pytest.raises(ConfigError, match=needle):
        parse_config(overrides=override, experiment="convergence")


def test_unknown_key_lists_valid_keys():
    with pytest.raises(ConfigError) as exc:
        parse_config(overrides={"reynolds": "100"}, experiment="cylinder")
    for k in cli.EXPERIMENT_KEYS["cylinder"]:
        assert k in str(exc.value)


def test_experiment_key_required_and_consistent(tmp_path):
    with pytest.raises(ConfigError, match="experiment"):
        parse_config(write(tmp_path, "dt = 0.1\n"))
    assert parse_config(write(tmp_path, "experiment = cylinder\n")).experiment == "cylinder"
    with pytest.raises(ConfigError, match="requested"):
        parse_config(write(tmp_path, "experiment = cylinder\n"), experiment="convergence")
    with pytest.raises(ConfigError, match="line|expected"):
        parse_config(write(tmp_path, "just words\n"), experiment="convergence")


@given(st.sampled_from(cli.EXPERIMENTS), st.floats(1e-4, 1.0), st.floats(0.0, 10.0),
       st.one_of(st.sampled_from(["uniform_h2", "per_element_h2"]), st.floats(0, 1).map(repr)),
       st.booleans())
def test_config_echo_round_trip(exp, dt, t_end, alpha1, sav):
    cfg = parse_config(overrides={"dt": repr(dt), "t_end": repr(t_end), "alpha1": alpha1,
                                  "sav_enabled": str(sav)}, experiment=exp)
    again = parse_config(overrides=dict(line.split(" = ", 1) for line in config_text(cfg).splitlines()))
    assert again == cfg


def test_csv_format():
    text = csv_text(("a", "b", "c"), [dict(a=0.1, b=3, c=None), dict(a=1 / 3, b=True, c="x")])
    lines = text.splitlines()
    assert lines[0] == "a,b,c"
    assert lines[1] == "0.10000000000000001,3,"
    assert lines[2].startswith("0.33333333333333331,1,x")
    assert all(len(l.split(",")) == 3 for l in lines)


def test_total_variation():
    assert cli.total_variation([1.0, 3.0, 2.0]) == 3.0
    assert cli.total_variation([5.0]) == 0.0


def _run(tmp_path, *extra):
    out = tmp_path / "out"
    code = main(["convergence", "--refinements", "2,4", "--output_dir", str(out), *extra])
    return code, out


def test_convergence_outputs_are_deterministic(tmp_path):
    code, out = _run(tmp_path)
    assert code == 0
    first = (out / "convergence.csv").read_bytes()
    code, out = _run(tmp_path)
    assert (out / "convergence.csv").read_bytes() == first
    rows = first.decode().splitlines()
    assert rows[0].split(",") == list(cli.CONVERGENCE_COLUMNS)
    assert all(len(r.split(",")) == len(cli.CONVERGENCE_COLUMNS) for r in rows)
    summary = json.loads((out / "summary.json").read_text())
    assert summary["force_residual"] <= 1e-10
    echoed = parse_config(str(out / "config.txt"))
    assert echoed == parse_config(overrides={"refinements": "2,4", "output_dir": str(out)},
                                  experiment="convergence")
    assert not [f for f in os.listdir(out) if f.startswith(".tmp")]


def test_zero_steps_gives_interpolation_error(tmp_path):
    code, out = _run(tmp_path, "--t_end", "0")
    assert code == 0
    rows = json.loads((out / "summary.json").read_text())["rows"]
    assert all(r["steps"] == 0 and r["time_rms_of_h1"] == 0.0 for r in rows)
    assert rows[1]["initial_error_h1"] < rows[0]["initial_error_h1"]


def test_exit_code_for_config_error(tmp_path, capsys):
    assert main(["convergence", "--dt", "-1"]) == 2
    assert "dt must be positive" in capsys.readouterr().err
    assert main(["bogus"]) == 2
    assert main(["cylinder", "--h_target", "5", "--output_dir", str(tmp_path)]) == 2
    assert main(["convergence", "--dt"]) == 2


def test_exit_code_for_divergence(tmp_path, monkeypatch):
    from savflow.solver import DivergenceError, SavSolver

    def boom(self, state, beta_override=None):
        raise DivergenceError("velocity blew up at step 1", 1)

    monkeypatch.setattr(SavSolver, "step", boom)
    assert main(["offset-circles", "--reynolds", "100", "--t_end", "0.05",
                 "--h_target", "0.3", "--h_boundary", "0.035", "--output_dir", str(tmp_path)]) == 3
    assert (tmp_path / "offset_circles.partial.csv").exists()


def test_nosav_divergence_is_reported_not_fatal(tmp_path, monkeypatch):
    from savflow.solver import DivergenceError, SavSolver
    real = SavSolver.step

    def flaky(self, state, beta_override=None):
        if not self.params.sav_enabled:
            raise DivergenceError("velocity blew up at step 1", 1)
        return real(self, state, beta_override)

    monkeypatch.setattr(SavSolver, "step", flaky)
    assert main(["offset-circles", "--reynolds", "100", "--t_end", "0.05",
                 "--h_target", "0.3", "--h_boundary", "0.035", "--output_dir", str(tmp_path)]) == 0
    runs = json.loads((tmp_path / "summary.json").read_text())["runs"]
    assert runs[0]["status"] == "completed" and runs[1]["status"].startswith("diverged")
    assert runs[0]["max_energy_identity_residual"] <= 1e-9


def test_short_cylinder_run(tmp_path):
    assert main(["cylinder", "--t_end", "0.03", "--h_target", "0.1", "--h_boundary", "0.018",
                 "--output_dir", str(tmp_path)]) == 0
    lines = (tmp_path / "cylinder.csv").read_text().splitlines()
    assert lines[0].split(",")[:5] == ["t", "energy", "c_d", "c_l", "dp"]
    assert len(lines) == 1 + 4
    first = [float(v) for v in lines[1].split(",")[:5]]
    assert first[0] == 0.0 and first[1] == 0.0
    s = json.loads((tmp_path / "summary.json").read_text())
    assert s["steps"] == 3 and math.isfinite(s["c_d_max"])
