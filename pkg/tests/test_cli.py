import json

import pytest

from gaugeforge.cli.router import CommandRouter, router
from gaugeforge.errors import ConfigurationError, MonitorBreachError
from gaugeforge.main import main
from gaugeforge.schemas.run_schemas import RunConfig
from gaugeforge.services.pipeline_service import load_run_config, observed_orders, parse_override

CONFIG = """m = 3
n = 2
N = 17
output_dir = "{out}"

[omega]
kind = "{kind}"
seed = 0
target_norm = 0.05
{extra}

[boundary]
kind = "linear"

[experiment]
lambda = 0.5
radii = [0.25]
centers = [[0.0, 0.0, 0.0]]

[study]
grids = [9, 17]
"""


def _config(tmp_path, name="run", kind="zero", extra=""):
    path = tmp_path / f"{name}.toml"
    path.write_text(CONFIG.format(out=(tmp_path / name).as_posix(), kind=kind, extra=extra), encoding="utf-8")
    return str(path), tmp_path / name


def test_parse_override():
    assert parse_override("solver.tol=1e-9") == (["solver", "tol"], 1e-9)
    assert parse_override("omega.kind=zero") == (["omega", "kind"], "zero")
    assert parse_override("experiment.radii=[0.25]") == (["experiment", "radii"], [0.25])
    with pytest.raises(ConfigurationError):
        parse_override("solver.tol")


def test_overrides_apply_on_top_of_the_file(tmp_path):
    path, _ = _config(tmp_path)
    cfg = load_run_config(path, ["N=33", "solver.steps=4"])
    assert cfg.N == 33
    assert cfg.solver.steps == 4
    assert cfg.experiment.lambda_ == 0.5
    assert cfg.continuation().steps == 4


def test_defaults_fill_centers_and_exponents():
    cfg = load_run_config(None)
    assert isinstance(cfg, RunConfig)
    assert len(cfg.experiment.centers) == 5
    assert cfg.experiment.exponents == [3.0, 3.5, 6.0]


@pytest.mark.parametrize("override", ["N=18", "m=2", "experiment.radii=[0.5]", "solver.tol=1e-3",
                                      "experiment.centers=[[0.6, 0.0, 0.0]]", "study.grids=[16]"])
def test_invalid_configuration_is_rejected(override):
    with pytest.raises(ConfigurationError):
        load_run_config(None, [override])


def test_missing_and_malformed_config_files(tmp_path):
    with pytest.raises(ConfigurationError):
        load_run_config(tmp_path / "absent.toml")
    bad = tmp_path / "bad.toml"
    bad.write_text("m = = 3", encoding="utf-8")
    with pytest.raises(ConfigurationError):
        load_run_config(bad)
    assert main(["gen", "--config", str(tmp_path / "absent.toml")]) == 4


def test_observed_orders():
    orders = observed_orders([0.25, 0.125, 0.0625], [1.0, 0.25, 0.0])
    assert orders[0] is None
    assert orders[1] == pytest.approx(2.0)
    assert orders[2] is None


def test_full_pipeline_on_zero_potential(tmp_path):
    path, out = _config(tmp_path)
    for command in ("gen", "gauge", "solve", "morrey"):
        assert main([command, "--config", path]) == 0, command

    for name in ("omega.gfld", "omega.json", "U.gfld", "P.gfld", "Q.gfld", "A.gfld", "verification.json",
                 "v_direct.gfld", "v_conservation.gfld", "equivalence.json",
                 "decay.csv", "decay.json", "integrability.csv"):
        assert (out / name).exists(), name
    assert (out / "logs" / "gaugeforge.log").exists()

    verification = json.loads((out / "verification.json").read_text(encoding="utf-8"))
    assert verification["monitors_passed"] is True
    assert verification["omega_norm"] == 0.0
    equivalence = json.loads((out / "equivalence.json").read_text(encoding="utf-8"))
    assert equivalence["relative_l2_difference"] < 1e-6
    assert "wall_time" not in equivalence["direct"]
    decay = json.loads((out / "decay.json").read_text(encoding="utf-8"))
    assert decay["lambda"] == 0.5
    assert len(decay["rows"]) == 1


def test_commands_are_deterministic(tmp_path):
    first, out1 = _config(tmp_path, "first")
    second, out2 = _config(tmp_path, "second")
    for path in (first, second):
        assert main(["gen", "--config", path]) == 0
        assert main(["gauge", "--config", path]) == 0
    for name in ("omega.gfld", "A.gfld"):
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes()
    assert (out1 / "verification.json").read_text() == (out2 / "verification.json").read_text()


def test_commands_need_their_inputs(tmp_path):
    path, _ = _config(tmp_path)
    assert main(["gauge", "--config", path]) == 4
    assert main(["gen", "--config", path]) == 0
    assert main(["solve", "--config", path]) == 4
    assert main(["morrey", "--config", path]) == 4


def test_stale_outputs_of_another_run_are_refused(tmp_path):
    path, _ = _config(tmp_path)
    assert main(["gen", "--config", path]) == 0
    assert main(["gauge", "--config", path, "--set", "n=3"]) == 4
    assert main(["gauge", "--config", path]) == 0
    assert main(["solve", "--config", path, "--set", "N=9"]) == 4


def test_help_lists_every_command(capsys):
    with pytest.raises(SystemExit):
        main(["--help"])
    text = capsys.readouterr().out
    for name in router.commands:
        assert name in text
        assert router.descriptions[name] in text


def test_unknown_command_is_a_usage_error():
    with pytest.raises(SystemExit):
        main(["transpose"])


def test_sweep_is_written(tmp_path):
    path, out = _config(tmp_path, kind="constant", extra="sweep_norms = [0.025, 2.0]")
    assert main(["gen", "--config", path]) == 0
    assert main(["gauge", "--config", path]) == 0
    lines = (out / "sweep.csv").read_text(encoding="utf-8").splitlines()
    assert lines[0].startswith("target_norm,converged")
    assert len(lines) == 3
    assert ",true," in lines[1]
    assert ",false," in lines[2]


def test_monitor_breach_exit_code(tmp_path):
    path, out = _config(tmp_path, kind="constant")
    assert main(["gen", "--config", path]) == 0
    assert main(["gauge", "--config", path, "--set", "monitors.eps1=1e-12"]) == 2
    assert not (out / "verification.json").exists()


def test_study_table(tmp_path):
    path, out = _config(tmp_path)
    assert main(["study", "--config", path]) == 0
    study = json.loads((out / "study.json").read_text(encoding="utf-8"))
    assert [row["N"] for row in study["rows"]] == [9, 17]
    assert study["rows"][0]["order_residual_A"] is None
    assert (out / "study.csv").exists()


def test_router_maps_errors_to_exit_codes():
    local = CommandRouter()
    cfg = RunConfig()

    @local.command("breach")
    def breach(cfg):
        raise MonitorBreachError("eps0", 1.0, 0.1)

    @local.command("boom")
    def boom(cfg):
        raise RuntimeError("boom")

    assert local.dispatch("breach", cfg) == 2
    assert local.dispatch("boom", cfg) == 1
    assert local.dispatch("missing", cfg) == 1
    assert set(router.commands) == {"gen", "gauge", "solve", "morrey", "study"}
