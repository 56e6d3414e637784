import numpy as np
import pytest

from memcap.config import (
    DEFAULTS,
    ExperimentConfig,
    default_params_path,
    load_config,
    load_params,
    substream,
)
from memcap.errors import ConfigError


def test_defaults_without_file():
    cfg = load_config()
    assert cfg.dt == 1e-3
    assert cfg.jobs == 1
    assert cfg.get_int_list("spoken_digits", "fractions") == [10, 20, 25, 30, 40]
    assert cfg.get_bool("eeg", "integrate") is True
    assert cfg.get_optional_float("readout", "lr") is None


def test_seed_is_mandatory():
    cfg = ExperimentConfig()
    with pytest.raises(ConfigError):
        cfg.seed
    with pytest.raises(ConfigError):
        cfg.validate()


def test_load_config_overlays_file(tmp_path):
    path = tmp_path / "exp.ini"
    path.write_text("[experiment]\nseed = 9\ntask = iris\n\n[bank]\nn = 4\n")
    cfg = load_config(str(path))
    assert cfg.seed == 9
    assert cfg.task == "iris"
    assert cfg.get_int("bank", "n") == 4
    assert cfg.get_float("bank", "rel_sigma") == 0.02
    assert cfg.source == str(path)


def test_load_config_rejects_unknown_section(tmp_path):
    path = tmp_path / "exp.ini"
    path.write_text("[experimnt]\nseed = 1\n")
    with pytest.raises(ConfigError) as excinfo:
        load_config(str(path))
    assert "experimnt" in str(excinfo.value)


def test_load_config_rejects_unknown_key(tmp_path):
    path = tmp_path / "exp.ini"
    path.write_text("[bank]\nsize = 3\n")
    with pytest.raises(ConfigError):
        load_config(str(path))


def test_load_config_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(str(tmp_path / "absent.ini"))


def test_relative_paths_resolve_against_config_directory(tmp_path):
    (tmp_path / "data").mkdir()
    path = tmp_path / "exp.ini"
    path.write_text("[experiment]\nseed = 1\n\n[eeg]\ndata_dir = data\n")
    cfg = load_config(str(path))
    assert cfg.get_str("eeg", "data_dir") == str(tmp_path / "data")
    cfg.validate()


def test_validate_reports_missing_path(tmp_path):
    cfg = ExperimentConfig()
    cfg.set("experiment", "seed", 1)
    cfg.set("iris", "csv", str(tmp_path / "absent.csv"))
    with pytest.raises(ConfigError) as excinfo:
        cfg.validate()
    assert "iris.csv" in str(excinfo.value)


def test_validate_rejects_unknown_task():
    cfg = ExperimentConfig()
    cfg.set("experiment", "seed", 1)
    cfg.set("experiment", "task", "mnist")
    with pytest.raises(ConfigError):
        cfg.validate()


def test_overrides():
    cfg = ExperimentConfig()
    cfg.apply_overrides(["bank.n=7", "readout.ridge_lambda = 0.5"])
    assert cfg.get_int("bank", "n") == 7
    assert cfg.get_float("readout", "ridge_lambda") == 0.5


def test_overrides_reject_unknown_and_malformed():
    cfg = ExperimentConfig()
    with pytest.raises(ConfigError):
        cfg.apply_overrides(["bank.size=3"])
    with pytest.raises(ConfigError):
        cfg.apply_overrides(["bank=3"])


def test_typed_accessors_report_bad_values():
    cfg = ExperimentConfig()
    cfg.set("bank", "n", "three")
    with pytest.raises(ConfigError):
        cfg.get_int("bank", "n")
    cfg.set("eeg", "integrate", "maybe")
    with pytest.raises(ConfigError):
        cfg.get_bool("eeg", "integrate")


def test_configs_do_not_share_defaults():
    a = ExperimentConfig()
    a.set("bank", "n", 9)
    assert ExperimentConfig().get("bank", "n") == DEFAULTS["bank"]["n"]


def test_resolved_is_a_copy():
    cfg = ExperimentConfig()
    resolved = cfg.resolved()
    resolved["bank"]["n"] = "100"
    assert cfg.get("bank", "n") == "1"


def test_resolved_without_run_keys_ignores_output_location():
    a, b = ExperimentConfig(), ExperimentConfig()
    a.set("experiment", "output_dir", "/tmp/a")
    b.set("experiment", "output_dir", "/tmp/b")
    b.set("experiment", "jobs", 4)
    assert a.resolved() != b.resolved()
    assert a.resolved(run_keys=False) == b.resolved(run_keys=False)
    assert "output_dir" not in a.resolved(run_keys=False)["experiment"]
    assert a.get("experiment", "output_dir") == "/tmp/a"


def test_substreams_are_reproducible_and_independent():
    a = substream(5, "bank").random(4)
    b = substream(5, "bank").random(4)
    c = substream(5, "split").random(4)
    d = substream(6, "bank").random(4)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)
    assert not np.array_equal(a, d)


def test_unknown_substream_is_rejected():
    with pytest.raises(ConfigError):
        substream(1, "weights")


def test_packaged_params():
    params = load_params()
    assert params.k_ew == 3.7799770369
    assert load_params(default_params_path()) == params
