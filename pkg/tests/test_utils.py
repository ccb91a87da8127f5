import json
import logging

import pandas as pd
import pytest

from utils.artifacts import ArtifactWriter, canonical_json, content_hash
from utils.config import RunConfig, load_config
from utils.errors import CapExceeded, ConfigError, HittingTimesError, LatticeError, PreconditionError
from utils.logger import ROOT_LOGGER, configure_logging, get_logger
from utils.profiler import profile_sites, radial_frame


def test_defaults_without_sources():
    config = load_config(environ={})
    assert config == RunConfig()
    assert config.caps.generator_sites == 6


def test_environment_then_file_then_overrides(tmp_path):
    env = {"HITTING_MODEL_RHO": "0.3", "HITTING_RUN_SEED": "5", "HITTING_CAPS_STATES": "100"}
    config = load_config(environ=env)
    assert config.rho == 0.3 and config.seed == 5 and config.caps.states == 100

    path = tmp_path / "run.env"
    path.write_text("model.rho=0.4\ngrid.t=0,1,2\nrun.naive=true\n")
    config = load_config(str(path), environ=env)
    assert config.rho == 0.4
    assert config.seed == 5
    assert config.t_grid == (0.0, 1.0, 2.0)
    assert config.naive

    config = load_config(str(path), overrides={"model.rho": "0.6", "run.seed": None}, environ=env)
    assert config.rho == 0.6
    assert config.seed == 5


def test_errors_name_the_field(tmp_path):
    with pytest.raises(ConfigError, match=r"^model\.rho: "):
        load_config(overrides={"model.rho": 1.5}, environ={})
    with pytest.raises(ConfigError, match="allowed: ssep, beta-bond, birth-death"):
        load_config(overrides={"model.kind": "zrp"}, environ={})
    with pytest.raises(ConfigError, match=r"^run\.trials: invalid value"):
        load_config(overrides={"run.trials": "many"}, environ={})
    with pytest.raises(ConfigError, match=r"^grid\.t: "):
        load_config(overrides={"grid.t": "2,1"}, environ={})
    path = tmp_path / "bad.env"
    path.write_text("model.colour=red\n")
    with pytest.raises(ConfigError) as info:
        load_config(str(path), environ={})
    assert info.value.field == "model.colour"
    with pytest.raises(ConfigError):
        load_config(str(tmp_path / "missing.env"), environ={})


def test_spec_errors_become_config_errors():
    config = load_config(overrides={"model.kind": "beta-bond", "model.n": 0, "model.pattern": "A2"}, environ={})
    with pytest.raises(ConfigError, match="^model: "):
        config.spec()


def test_exit_codes():
    assert ConfigError("run.seed", "x").exit_code == 2
    assert LatticeError("x").exit_code == 2
    assert CapExceeded("states", 10, 20).exit_code == 3
    assert PreconditionError("x").exit_code == 1
    assert "cap 'states' exceeded" in str(CapExceeded("states", 10, 20))
    assert issubclass(ConfigError, HittingTimesError)


def test_artifact_writer_and_manifest(tmp_path):
    config = RunConfig().as_dict()
    writer = ArtifactWriter(str(tmp_path), "exp", "rates", config)
    writer.write_csv("table.csv", pd.DataFrame({"t": [0.0, 0.1], "value": [1.0, 1 / 3]}))
    writer.write_json("summary.json", {"b": 1, "a": [1, 2]})
    writer.write_text("report.md", "# report\n")
    writer.write_manifest("pass", [{"check": "x", "pass": True}])

    directory = tmp_path / "exp" / "rates"
    assert (directory / "table.csv").read_text() == "t,value\n0,1\n0.1,0.333333333333\n"
    manifest = json.loads((directory / "manifest.json").read_text())
    assert manifest["schema_version"] == "1.0"
    assert manifest["status"] == "pass"
    assert manifest["config_hash"] == content_hash(config)
    assert [a["name"] for a in manifest["artifacts"]] == ["report.md", "summary.json", "table.csv"]
    assert all(len(a["sha256"]) == 64 for a in manifest["artifacts"])


def test_hashes_are_deterministic():
    assert content_hash({"a": 1, "b": 2}) == content_hash({"b": 2, "a": 1})
    assert content_hash({"a": 1}) != content_hash({"a": 2})
    # empty object as a git blob
    assert content_hash({}) == "9e26dfeeb6e641a33dae4961196235bdb965b21b"
    assert canonical_json({"b": 1, "a": 2}).index('"a"') < canonical_json({"b": 1, "a": 2}).index('"b"')


def test_site_profile_by_radius():
    frame = pd.DataFrame({"x1": [-1, 0, 1], "h": [0.5, 1.0, 0.5]})
    profile = profile_sites(frame, ["h"])
    assert profile["sites"] == 3
    assert profile["by_radius"]["h"] == {0: 1.0, 1: 0.5}
    radial = radial_frame(profile)
    assert list(radial.columns) == ["radius", "column", "mean"]
    assert radial["mean"].tolist() == [1.0, 0.5]


def test_loggers_share_the_package_root():
    logger = configure_logging("debug")
    assert logger.name == ROOT_LOGGER
    assert logger.level == logging.DEBUG
    handlers = len(logger.handlers)
    configure_logging("info")
    assert len(logger.handlers) == handlers
    assert get_logger("exact.spectral").name == f"{ROOT_LOGGER}.exact.spectral"
