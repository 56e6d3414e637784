"""
End-to-end benchmark pipelines. Each runner takes an ExperimentConfig and returns a
TaskReport whose JSON form depends only on the configuration and seed.
"""

import logging
import time
from collections import Counter
from dataclasses import dataclass, field
from functools import partial
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
from sklearn.model_selection import train_test_split

from memcap.config import ExperimentConfig
from memcap.datasets import (
    dedup_channels,
    gen_second_order,
    gen_synthetic_cochleograms,
    load_cochleograms,
    load_eeg_bonn,
    load_iris_csv,
)
from memcap.encoding import (
    AmplitudeMap,
    BinaryLevels,
    ClipAbsMap,
    StaticMap,
    encode_amplitude,
    encode_binary,
    encode_eeg,
    encode_static,
    fit_static_range,
    frame_widths,
)
from memcap.energy import reservoir_energy
from memcap.errors import ConfigError, InvalidInputError
from memcap.readout import (
    LinearReadout,
    Metrics,
    evaluate_classification,
    evaluate_regression,
    predict,
    train_linear,
    train_logistic_ovr,
)
from memcap.reservoir import (
    StateMatrix,
    build_state_matrix,
    column_names,
    integrate_features,
    make_device_bank,
    run_reservoir_batch,
    select_virtual_nodes,
    window_end_nodes,
)

logger = logging.getLogger(__name__)


@dataclass
class TaskReport:
    """
    Outcome of one benchmark run.

    Only task, seed, config, metrics, energy and diagnostics go into the report JSON;
    wall time and the exported arrays are kept apart so reruns compare byte for byte.
    """

    task: str
    seed: int
    config: Dict
    metrics: Dict[str, Dict]
    energy: Dict[str, float]
    diagnostics: Dict = field(default_factory=dict)
    wall_time_s: float = 0.0
    tables: Dict[str, Dict[str, np.ndarray]] = field(default_factory=dict)
    state_matrix: Optional[StateMatrix] = None
    readout: Optional[LinearReadout] = None
    confusion: Optional[Metrics] = None

    def as_dict(self) -> Dict:
        return {
            "task": self.task,
            "seed": self.seed,
            "config": self.config,
            "metrics": self.metrics,
            "energy": self.energy,
            "diagnostics": self.diagnostics,
        }


def _split(
    cfg: ExperimentConfig, labels: np.ndarray, test_size
) -> Tuple[np.ndarray, np.ndarray]:
    """Seeded stratified split of row indices; both halves sorted."""
    seed = int(cfg.rng("split").integers(2**31 - 1))
    idx = np.arange(len(labels))
    train, test = train_test_split(
        idx, test_size=test_size, stratify=labels, random_state=seed
    )
    return np.sort(train), np.sort(test)


def _energy_summary(cfg: ExperimentConfig, matrix: StateMatrix, test_rows) -> Dict:
    return {
        "test_reservoir_energy_J": reservoir_energy(matrix, test_rows),
        "charge_factor": cfg.get_float("energy", "charge_factor"),
    }


def _train_regression(cfg: ExperimentConfig, X, y) -> LinearReadout:
    return train_linear(
        X,
        y,
        method=cfg.get_str("readout", "method"),
        ridge_lambda=cfg.get_float("readout", "ridge_lambda"),
        lr=cfg.get_optional_float("readout", "lr"),
        iters=cfg.get_int("readout", "iters"),
    )


def _train_classifier(cfg: ExperimentConfig, X, labels) -> LinearReadout:
    return train_logistic_ovr(
        X,
        labels,
        l2_lambda=cfg.get_float("logistic", "l2_lambda"),
        lr=cfg.get_float("logistic", "lr"),
        iters=cfg.get_int("logistic", "iters"),
    )


def _noise(cfg: ExperimentConfig) -> Dict:
    sigma = cfg.get_float("device", "noise_sigma")
    return {"noise_sigma": sigma, "rng": cfg.rng("noise") if sigma > 0 else None}


def _regression_report(
    cfg: ExperimentConfig, name: str, X: StateMatrix, y: np.ndarray, n_train: int
) -> TaskReport:
    train_rows = np.arange(n_train)
    test_rows = np.arange(n_train, X.shape[0])
    Xtr, Xte = X.take(train_rows), X.take(test_rows)
    readout = _train_regression(cfg, Xtr, y[train_rows])
    train_m = evaluate_regression(readout, Xtr, y[train_rows])
    test_m = evaluate_regression(readout, Xte, y[test_rows])
    logger.info(
        "%s: test nmse_ratio %.3g, nmse_variance %.3g",
        name,
        test_m.nmse_ratio,
        test_m.nmse_variance,
    )
    return TaskReport(
        task=name,
        seed=cfg.seed,
        config=cfg.resolved(run_keys=False),
        metrics={"train": train_m.as_dict(), "test": test_m.as_dict()},
        energy=_energy_summary(cfg, X, test_rows),
        tables={
            "predictions": {
                "frame": np.arange(X.shape[0]),
                "split": np.where(np.arange(X.shape[0]) < n_train, "train", "test"),
                "y_true": y,
                "y_pred": predict(readout, X),
            }
        },
        state_matrix=X,
        readout=readout,
    )


def second_order_encoders(cfg: ExperimentConfig) -> List[Callable]:
    s = "second_order"
    widths = frame_widths(
        cfg.get_float(s, "frame_min"),
        cfg.get_float(s, "frame_max"),
        cfg.get_int(s, "n_frames"),
    )
    return [
        partial(
            encode_amplitude,
            spec=AmplitudeMap(
                in_min=cfg.get_float(s, "in_min"),
                in_max=cfg.get_float(s, "in_max"),
                v_min_V=cfg.get_float(s, "v_min"),
                v_max_V=cfg.get_float(s, "v_max"),
                frame_s=float(w),
                duty=cfg.get_float(s, "duty"),
            ),
        )
        for w in widths
    ]


def _second_order_series(cfg: ExperimentConfig):
    n_train = cfg.get_int("second_order", "train_frames")
    n_test = cfg.get_int("second_order", "test_frames")
    if n_train < 1 or n_test < 1:
        raise ConfigError("second_order train_frames and test_frames must be >= 1")
    return gen_second_order(n_train + n_test, cfg.seed), n_train


def run_second_order_task(cfg: ExperimentConfig) -> TaskReport:
    """
    Streaming regression on the second-order nonlinear series: every device of the bank
    sees the whole series under every frame-width encoding, one C/C0 sample per frame.
    """
    start = time.perf_counter()
    series, n_train = _second_order_series(cfg)
    bank = make_device_bank(
        cfg.params(),
        cfg.get_int("bank", "n"),
        cfg.get_float("bank", "rel_sigma"),
        cfg.seed,
    )
    encoders = second_order_encoders(cfg)
    logger.info(
        "second-order: %d frames through %d devices x %d encodings",
        series.u.size,
        len(bank),
        len(encoders),
    )
    X = build_state_matrix(
        series.u,
        bank,
        encoders,
        dt=cfg.dt,
        streaming=True,
        charge_factor=cfg.get_float("energy", "charge_factor"),
        jobs=cfg.jobs,
        w_floor=cfg.get_float("device", "w_floor"),
        **_noise(cfg),
    )
    report = _regression_report(cfg, "second-order", X, series.y, n_train)
    report.diagnostics = {"features": X.shape[1], "frames": X.shape[0]}
    report.wall_time_s = time.perf_counter() - start
    return report


def run_linear_baseline(cfg: ExperimentConfig) -> TaskReport:
    """
    Same series and readout as the second-order task, with the reservoir replaced by the
    purely linear expansion x(k) = r * u(k) for a seeded random vector r.
    """
    start = time.perf_counter()
    series, n_train = _second_order_series(cfg)
    n_features = cfg.get_int("baseline", "features")
    if n_features < 1:
        raise ConfigError("baseline.features must be >= 1")
    r = cfg.rng("baseline").random(n_features)
    X = StateMatrix(
        values=series.u[:, None] * r[None, :],
        columns=[f"r{i}" for i in range(n_features)],
        row_energy=np.zeros(series.u.size),
    )
    report = _regression_report(cfg, "linear-baseline", X, series.y, n_train)
    report.diagnostics = {"features": n_features, "frames": X.shape[0]}
    report.wall_time_s = time.perf_counter() - start
    return report


def _classification(
    cfg: ExperimentConfig,
    X: StateMatrix,
    labels: np.ndarray,
    train_rows: np.ndarray,
    test_rows: np.ndarray,
) -> Tuple[LinearReadout, Metrics, Metrics]:
    readout = _train_classifier(cfg, X.take(train_rows), labels[train_rows])
    train_m = evaluate_classification(readout, X.take(train_rows), labels[train_rows])
    test_m = evaluate_classification(readout, X.take(test_rows), labels[test_rows])
    return readout, train_m, test_m


def run_spoken_digit_task(cfg: ExperimentConfig) -> TaskReport:
    """
    Spoken-digit classification at full and partial utterance lengths.

    Each distinct channel bitstream is simulated once from rest; a prefix of T pulses
    of that run is exactly the run of the first T bits, so every utterance fraction is
    read off the same simulations.
    """
    start = time.perf_counter()
    s = "spoken_digits"
    every_k = cfg.get_int(s, "every_k")
    fractions = cfg.get_int_list(s, "fractions")
    for steps in fractions:
        if steps < every_k or steps % every_k or steps > 40:
            raise InvalidInputError(
                f"utterance length {steps} must be a multiple of {every_k} up to 40"
            )

    data_dir = cfg.get_str(s, "data_dir")
    if data_dir:
        cochleograms = load_cochleograms(data_dir)
        test_size = cfg.get_int(s, "test_size_real")
    else:
        cochleograms = gen_synthetic_cochleograms(
            cfg.get_int(s, "synthetic_per_class"), cfg.seed
        )
        test_size = cfg.get_float(s, "test_fraction")
    labels = np.array([c.label for c in cochleograms])
    train_rows, test_rows = _split(cfg, labels, test_size)

    uniques, back_map = dedup_channels(cochleograms)
    spec = BinaryLevels(
        low_V=cfg.get_float(s, "low_v"),
        high_V=cfg.get_float(s, "high_v"),
        width_s=cfg.get_float(s, "width"),
    )
    params = cfg.params()
    runs = run_reservoir_batch(
        [encode_binary(u, spec) for u in uniques],
        params,
        cfg.dt,
        w_floor=cfg.get_float("device", "w_floor"),
        jobs=cfg.jobs,
        **_noise(cfg),
    )
    samples = np.vstack([r.samples for r in runs])
    charge_factor = cfg.get_float("energy", "charge_factor")
    edge_energy = np.vstack([r.edge_energies(charge_factor) for r in runs])

    metrics, energy = {}, {}
    report = TaskReport(
        task="spoken-digits",
        seed=cfg.seed,
        config=cfg.resolved(run_keys=False),
        metrics=metrics,
        energy=energy,
        diagnostics={
            "dataset": "real" if data_dir else "synthetic",
            "examples": len(cochleograms),
            "channels": int(back_map.size),
            "distinct_channels": int(uniques.shape[0]),
            "train": int(train_rows.size),
            "test": int(test_rows.size),
        },
    )
    for steps in fractions:
        nodes = np.vstack(
            [select_virtual_nodes(row[:steps], every_k) for row in samples]
        )
        n_nodes = nodes.shape[1]
        values = nodes[back_map].reshape(len(cochleograms), -1)
        row_energy = edge_energy[:, :steps].sum(axis=1)[back_map].sum(axis=1)
        X = StateMatrix(
            values=values,
            columns=column_names(1, back_map.shape[1], n_nodes),
            row_labels=labels,
            row_energy=row_energy,
        )
        readout, train_m, test_m = _classification(cfg, X, labels, train_rows, test_rows)
        key = f"steps_{steps}"
        metrics[key] = {"train": train_m.as_dict(), "test": test_m.as_dict()}
        energy[key] = _energy_summary(cfg, X, test_rows)
        logger.info(
            "spoken digits, %d steps: test accuracy %.3f", steps, test_m.accuracy
        )
        if steps == max(fractions):
            report.state_matrix, report.readout, report.confusion = X, readout, test_m
    report.wall_time_s = time.perf_counter() - start
    return report


def run_eeg_task(cfg: ExperimentConfig) -> TaskReport:
    """
    Healthy (Z) versus epileptic (S) EEG classification. With integration each feature
    is the rectangular integral of C/C0 over a window of pulses; without it each feature
    is the C/C0 sample at the end of the window.
    """
    start = time.perf_counter()
    s = "eeg"
    data_dir = cfg.get_str(s, "data_dir")
    if not data_dir:
        raise ConfigError("eeg.data_dir is not set; point it at the Bonn Z/ and S/ sets")
    records = load_eeg_bonn(data_dir)
    labels = np.array([r.label for r in records])
    train_rows, test_rows = _split(cfg, labels, cfg.get_float(s, "test_fraction"))

    spec = ClipAbsMap(
        clip_uV=cfg.get_float(s, "clip_uv"),
        v_min_V=cfg.get_float(s, "v_min"),
        v_max_V=cfg.get_float(s, "v_max"),
        width_s=1.0 / cfg.get_float(s, "sample_rate"),
    )
    window = cfg.get_int(s, "window")
    integrate = cfg.get_bool(s, "integrate")
    if integrate:
        nodes = partial(integrate_features, window=window, period=spec.width_s)
    else:
        nodes = partial(window_end_nodes, window=window)

    bank = make_device_bank(cfg.params(), 1, 0.0, cfg.seed)
    X = build_state_matrix(
        [r.samples for r in records],
        bank,
        [partial(encode_eeg, spec=spec)],
        nodes=nodes,
        dt=cfg.get_float(s, "dt"),
        row_labels=labels,
        charge_factor=cfg.get_float("energy", "charge_factor"),
        jobs=cfg.jobs,
        w_floor=cfg.get_float("device", "w_floor"),
        **_noise(cfg),
    )
    readout, train_m, test_m = _classification(cfg, X, labels, train_rows, test_rows)
    logger.info(
        "eeg (%s): test accuracy %.3f",
        "integrated" if integrate else "plain",
        test_m.accuracy,
    )
    return TaskReport(
        task="eeg",
        seed=cfg.seed,
        config=cfg.resolved(run_keys=False),
        metrics={"train": train_m.as_dict(), "test": test_m.as_dict()},
        energy=_energy_summary(cfg, X, test_rows),
        diagnostics={
            "variant": "integrated" if integrate else "plain",
            "records": len(records),
            "features": X.shape[1],
            "train": int(train_rows.size),
            "test": int(test_rows.size),
        },
        wall_time_s=time.perf_counter() - start,
        state_matrix=X,
        readout=readout,
        confusion=test_m,
    )


def run_iris_task(cfg: ExperimentConfig) -> TaskReport:
    """
    IRIS with one single-pulse reservoir run per feature: four end-of-pulse C/C0 values
    per flower feed a 4x3 logistic readout. Voltage ranges come from the training split.
    """
    start = time.perf_counter()
    s = "iris"
    features, labels, names = load_iris_csv(cfg.get_str(s, "csv") or None)
    train_rows, test_rows = _split(cfg, labels, cfg.get_float(s, "test_fraction"))
    spec = StaticMap(
        v_min_V=cfg.get_float(s, "v_min"),
        v_max_V=cfg.get_float(s, "v_max"),
        width_s=cfg.get_float(s, "width"),
    )
    in_range = fit_static_range(features[train_rows])
    clamped: Counter = Counter()
    trains = []
    for row in features:
        trains.extend(encode_static(row, in_range, spec, clamped))
    runs = run_reservoir_batch(
        trains,
        cfg.params(),
        cfg.dt,
        w_floor=cfg.get_float("device", "w_floor"),
        jobs=cfg.jobs,
        **_noise(cfg),
    )
    n_feat = features.shape[1]
    charge_factor = cfg.get_float("energy", "charge_factor")
    values = np.array([r.samples[-1] for r in runs]).reshape(-1, n_feat)
    row_energy = np.array([r.energy(charge_factor) for r in runs]).reshape(-1, n_feat)
    X = StateMatrix(
        values=values,
        columns=column_names(1, n_feat, 1),
        row_labels=labels,
        row_energy=row_energy.sum(axis=1),
    )
    readout, train_m, test_m = _classification(cfg, X, labels, train_rows, test_rows)
    logger.info("iris: test accuracy %.3f", test_m.accuracy)
    return TaskReport(
        task="iris",
        seed=cfg.seed,
        config=cfg.resolved(run_keys=False),
        metrics={"train": train_m.as_dict(), "test": test_m.as_dict()},
        energy=_energy_summary(cfg, X, test_rows),
        diagnostics={
            "feature_names": names,
            "readout_shape": list(readout.weights.shape),
            "clamped_test_features": {str(k): v for k, v in sorted(clamped.items())},
            "train": int(train_rows.size),
            "test": int(test_rows.size),
        },
        wall_time_s=time.perf_counter() - start,
        state_matrix=X,
        readout=readout,
        confusion=test_m,
    )


TASK_RUNNERS: Dict[str, Callable[[ExperimentConfig], TaskReport]] = {
    "second-order": run_second_order_task,
    "linear-baseline": run_linear_baseline,
    "spoken-digits": run_spoken_digit_task,
    "eeg": run_eeg_task,
    "iris": run_iris_task,
}


def run_task(name: str, cfg: ExperimentConfig) -> TaskReport:
    try:
        runner = TASK_RUNNERS[name]
    except KeyError:
        raise ConfigError(f"unknown task {name!r}; expected one of {sorted(TASK_RUNNERS)}")
    report = runner(cfg)
    logger.info("%s finished in %.1f s", name, report.wall_time_s)
    return report
