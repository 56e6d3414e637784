"""
Experiment configuration: INI files with flat sections, typed accessors, CLI overrides
and named random sub-streams derived from one root seed.
"""

import configparser
import copy
import logging
import os
import zlib
from dataclasses import dataclass, field
from importlib import resources
from typing import Dict, Iterable, List, Optional

import numpy as np

from memcap.errors import ConfigError
from memcap.io import read_params_file
from memcap.models import MemcapacitorParams

logger = logging.getLogger(__name__)

TASKS = ("second-order", "linear-baseline", "spoken-digits", "eeg", "iris")
STREAMS = ("bank", "series", "split", "baseline", "noise", "synthetic", "energy")

DEFAULTS: Dict[str, Dict[str, str]] = {
    "experiment": {
        "task": "",
        "seed": "",
        "output_dir": "results",
        "jobs": "1",
    },
    "device": {
        "params_file": "",
        "dt": "1e-3",
        "w_floor": "0.2",
        "noise_sigma": "0",
    },
    "bank": {
        "n": "1",
        "rel_sigma": "0.02",
    },
    "readout": {
        "method": "closed-form",
        "ridge_lambda": "1e-6",
        "lr": "",
        "iters": "20000",
    },
    "logistic": {
        "l2_lambda": "1e-4",
        "lr": "0.1",
        "iters": "2000",
    },
    "energy": {
        "charge_factor": "1.0",
    },
    "second_order": {
        "train_frames": "300",
        "test_frames": "100",
        "in_min": "0.0",
        "in_max": "0.5",
        "v_min": "0.05",
        "v_max": "0.2",
        "duty": "0.5",
        "frame_min": "0.2",
        "frame_max": "0.6",
        "n_frames": "10",
    },
    "baseline": {
        "features": "50",
    },
    "spoken_digits": {
        "data_dir": "",
        "low_v": "0.01",
        "high_v": "0.2",
        "width": "0.5",
        "every_k": "5",
        "fractions": "10,20,25,30,40",
        "synthetic_per_class": "50",
        "test_fraction": "0.1",
        "test_size_real": "50",
    },
    "eeg": {
        "data_dir": "",
        "clip_uv": "300",
        "v_min": "0.1",
        "v_max": "0.2",
        "sample_rate": "173.67",
        "dt": "1e-4",
        "window": "60",
        "integrate": "true",
        "test_fraction": "0.2",
    },
    "iris": {
        "csv": "",
        "v_min": "0.1",
        "v_max": "0.2",
        "width": "2.5",
        "test_fraction": "0.4",
    },
}

_PATH_KEYS = (
    ("device", "params_file"),
    ("spoken_digits", "data_dir"),
    ("eeg", "data_dir"),
    ("iris", "csv"),
)
_RUN_KEYS = (("experiment", "output_dir"), ("experiment", "jobs"))


def default_params_path() -> str:
    """Filesystem path of the calibrated parameter file shipped with the package."""
    return str(resources.files("memcap") / "data" / "memcapacitor_default.ini")


def load_params(path: Optional[str] = None) -> MemcapacitorParams:
    """Read device parameters from `path`, or the packaged calibrated defaults."""
    if not path:
        with resources.as_file(
            resources.files("memcap") / "data" / "memcapacitor_default.ini"
        ) as p:
            return read_params_file(str(p))
    return read_params_file(path)


def substream(seed: int, name: str) -> np.random.Generator:
    """
    Independent generator for one named consumer of randomness.

    The stream depends only on (seed, name), so changing how one component draws numbers
    never shifts another component's draws.
    """
    if name not in STREAMS:
        raise ConfigError(f"unknown random stream {name!r}; expected one of {STREAMS}")
    return np.random.default_rng([int(seed), zlib.crc32(name.encode())])


@dataclass
class ExperimentConfig:
    """
    Resolved experiment settings: `values[section][key]` holds raw strings, with
    every key of DEFAULTS present.
    """

    values: Dict[str, Dict[str, str]] = field(
        default_factory=lambda: copy.deepcopy(DEFAULTS)
    )
    source: Optional[str] = None

    def get(self, section: str, key: str) -> str:
        try:
            return self.values[section][key]
        except KeyError:
            raise ConfigError(f"unknown config key {section}.{key}")

    def get_str(self, section: str, key: str) -> str:
        return self.get(section, key).strip()

    def get_float(self, section: str, key: str) -> float:
        raw = self.get_str(section, key)
        try:
            return float(raw)
        except ValueError:
            raise ConfigError(f"{section}.{key} must be a number, got {raw!r}")

    def get_optional_float(self, section: str, key: str) -> Optional[float]:
        return self.get_float(section, key) if self.get_str(section, key) else None

    def get_int(self, section: str, key: str) -> int:
        raw = self.get_str(section, key)
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(f"{section}.{key} must be an integer, got {raw!r}")

    def get_bool(self, section: str, key: str) -> bool:
        raw = self.get_str(section, key).lower()
        states = configparser.ConfigParser.BOOLEAN_STATES
        if raw not in states:
            raise ConfigError(f"{section}.{key} must be a boolean, got {raw!r}")
        return states[raw]

    def get_int_list(self, section: str, key: str) -> List[int]:
        raw = self.get_str(section, key)
        try:
            return [int(x) for x in raw.split(",") if x.strip()]
        except ValueError:
            raise ConfigError(f"{section}.{key} must be a comma-separated int list")

    def set(self, section: str, key: str, value) -> None:
        if section not in self.values or key not in self.values[section]:
            raise ConfigError(f"unknown config key {section}.{key}")
        self.values[section][key] = str(value)

    def apply_overrides(self, overrides: Iterable[str]) -> None:
        """Apply `section.key=value` strings, as given to `--set`."""
        for item in overrides:
            name, sep, value = item.partition("=")
            section, dot, key = name.strip().partition(".")
            if not sep or not dot:
                raise ConfigError(f"override {item!r} is not of the form section.key=value")
            self.set(section, key.strip(), value.strip())

    @property
    def task(self) -> str:
        return self.get_str("experiment", "task")

    @property
    def seed(self) -> int:
        if not self.get_str("experiment", "seed"):
            raise ConfigError("experiment.seed is mandatory")
        return self.get_int("experiment", "seed")

    @property
    def output_dir(self) -> str:
        return self.get_str("experiment", "output_dir")

    @property
    def jobs(self) -> int:
        return max(1, self.get_int("experiment", "jobs"))

    @property
    def dt(self) -> float:
        return self.get_float("device", "dt")

    def rng(self, name: str) -> np.random.Generator:
        return substream(self.seed, name)

    def params(self) -> MemcapacitorParams:
        return load_params(self.get_str("device", "params_file") or None)

    def validate(self) -> "ExperimentConfig":
        """Check the seed, the task id, numeric sections and that referenced paths exist."""
        _ = self.seed
        if self.task and self.task not in TASKS:
            raise ConfigError(f"unknown task {self.task!r}; expected one of {TASKS}")
        for section, key in _PATH_KEYS:
            path = self.get_str(section, key)
            if path and not os.path.exists(path):
                raise ConfigError(f"{section}.{key} points to a missing path: {path}")
        if self.dt <= 0 or self.get_float("eeg", "dt") <= 0:
            raise ConfigError("integration dt must be > 0")
        if self.get_int("bank", "n") < 1:
            raise ConfigError("bank.n must be >= 1")
        if self.get_float("bank", "rel_sigma") < 0:
            raise ConfigError("bank.rel_sigma must be >= 0")
        if self.get_str("readout", "method") not in ("closed-form", "gradient-descent"):
            raise ConfigError("readout.method must be closed-form or gradient-descent")
        return self

    def resolved(self, run_keys: bool = True) -> Dict[str, Dict[str, str]]:
        """
        Full resolved configuration as a nested dict.

        Reports embed it with run_keys=False: where the results go and how many workers
        computed them do not change the results.
        """
        values = copy.deepcopy(self.values)
        if not run_keys:
            for section, key in _RUN_KEYS:
                values[section].pop(key, None)
        return values


def load_config(path: Optional[str] = None) -> ExperimentConfig:
    """
    Read an experiment INI file on top of DEFAULTS.

    Unknown sections or keys are rejected. Relative paths inside the file are resolved
    against the file's directory.
    """
    cfg = ExperimentConfig()
    if path is None:
        return cfg
    parser = configparser.ConfigParser(interpolation=None)
    try:
        with open(path) as f:
            parser.read_file(f, source=path)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}")
    base = os.path.dirname(os.path.abspath(path))
    for section in parser.sections():
        if section not in DEFAULTS:
            raise ConfigError(f"{path}: unknown section [{section}]")
        for key, value in parser[section].items():
            if key not in DEFAULTS[section]:
                raise ConfigError(f"{path}: unknown key {section}.{key}")
            if (section, key) in _PATH_KEYS and value and not os.path.isabs(value):
                value = os.path.normpath(os.path.join(base, value))
            cfg.values[section][key] = value
    cfg.source = os.path.abspath(path)
    logger.debug("loaded config %s", cfg.source)
    return cfg
