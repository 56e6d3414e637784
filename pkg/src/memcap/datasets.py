"""
Benchmark inputs: the second-order nonlinear series, binary cochleograms (real or
synthetic), Bonn EEG records and the IRIS table.
"""

import csv
import glob
import logging
import os
import re
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from memcap.config import substream
from memcap.errors import (
    CochleogramParseError,
    DatasetError,
    EegRecordError,
    InvalidInputError,
)
from memcap.io import atomic_write_text

logger = logging.getLogger(__name__)

N_CHANNELS = 50
N_STEPS = 40
EEG_LENGTH = 4097
EEG_CLASSES = ("Z", "S")

_COCHLEOGRAM_NAME = re.compile(r"^digit_(\d)_(\d+)\.csv$")
COCHLEOGRAM_LAYOUT = (
    "a directory of CSV files named digit_<label>_<idx>.csv, "
    f"each {N_CHANNELS} rows x {N_STEPS} comma-separated 0/1 values"
)
EEG_LAYOUT = (
    "a directory holding Z/ and S/ subdirectories of *.txt records, "
    f"one integer sample per line, {EEG_LENGTH} lines each"
)


@dataclass(frozen=True)
class SecondOrderSeries:
    u: np.ndarray
    y: np.ndarray
    seed: int


def second_order_response(u: Sequence[float]) -> np.ndarray:
    """
    y(t) = 0.4*y(t-1) + 0.4*y(t-1)*y(t-2) + 0.6*u(t)^3 + 0.1, with y(-1) = y(-2) = 0.
    """
    u = np.asarray(u, dtype=float)
    y = np.empty_like(u)
    y1 = y2 = 0.0
    for t, ut in enumerate(u):
        yt = 0.4 * y1 + 0.4 * y1 * y2 + 0.6 * ut**3 + 0.1
        y[t] = yt
        y1, y2 = yt, y1
    return y


def gen_second_order(n: int, seed: int) -> SecondOrderSeries:
    """Seeded uniform input on [0, 0.5] and its second-order response."""
    if n < 1:
        raise InvalidInputError(f"series length must be >= 1, got {n}")
    u = substream(seed, "series").uniform(0.0, 0.5, n)
    return SecondOrderSeries(u=u, y=second_order_response(u), seed=seed)


@dataclass(frozen=True)
class Cochleogram:
    """Binary channels x timesteps firing matrix of one spoken digit."""

    bits: np.ndarray
    label: int
    id: str

    def __post_init__(self):
        if self.bits.shape != (N_CHANNELS, N_STEPS):
            raise CochleogramParseError(
                f"expected {N_CHANNELS}x{N_STEPS}, got {self.bits.shape}", self.id
            )
        if not np.isin(self.bits, (0, 1)).all():
            raise CochleogramParseError("entries must be 0 or 1", self.id)
        if not 0 <= self.label <= 9:
            raise CochleogramParseError(f"label {self.label} is not a digit", self.id)


def _read_cochleogram(path: str, label: int) -> Cochleogram:
    try:
        with open(path, newline="") as f:
            rows = [r for r in csv.reader(f) if r]
        bits = np.array(rows, dtype=float)
    except ValueError as exc:
        raise CochleogramParseError(f"malformed entries ({exc})", path)
    if bits.ndim != 2:
        raise CochleogramParseError("rows have unequal lengths", path)
    return Cochleogram(bits=bits, label=label, id=path)


def load_cochleograms(directory: str) -> List[Cochleogram]:
    """
    Read every digit_<label>_<idx>.csv in `directory`, ordered by (label, idx).

    :raises DatasetError: missing directory or no matching files
    :raises CochleogramParseError: a file with the wrong shape or non-binary entries
    """
    if not os.path.isdir(directory):
        raise DatasetError(f"not a directory; expected {COCHLEOGRAM_LAYOUT}", directory)
    entries = []
    for name in os.listdir(directory):
        m = _COCHLEOGRAM_NAME.match(name)
        if m:
            entries.append((int(m.group(1)), int(m.group(2)), name))
    if not entries:
        raise DatasetError(
            f"no cochleogram files; expected {COCHLEOGRAM_LAYOUT}", directory
        )
    entries.sort()
    cochleograms = [
        _read_cochleogram(os.path.join(directory, name), label)
        for label, _, name in entries
    ]
    logger.info("loaded %d cochleograms from %s", len(cochleograms), directory)
    return cochleograms


def dedup_channels(
    cochleograms: Sequence[Cochleogram],
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Unique channel bitstreams in first-occurrence order and, per cochleogram and
    channel, the index of its bitstream in the unique set.

    :return: (uniques of shape (U, steps), back_map of shape (N, channels))
    """
    index: Dict[bytes, int] = {}
    uniques = []
    back_map = np.empty((len(cochleograms), N_CHANNELS), dtype=np.intp)
    for i, coch in enumerate(cochleograms):
        for ch, row in enumerate(np.asarray(coch.bits, dtype=np.uint8)):
            key = row.tobytes()
            if key not in index:
                index[key] = len(uniques)
                uniques.append(row)
            back_map[i, ch] = index[key]
    stacked = np.array(uniques, dtype=np.uint8).reshape(len(uniques), N_STEPS)
    logger.info(
        "%d channels in total, %d distinct", back_map.size, stacked.shape[0]
    )
    return stacked, back_map


def gen_synthetic_cochleograms(
    n_per_class: int,
    seed: int,
    vocabulary: int = 12,
    onset_steps: int = 10,
    density: float = 0.3,
    silent: float = 0.4,
    noise: float = 0.1,
) -> List[Cochleogram]:
    """
    Class-conditional cochleograms for desk testing.

    Every channel is an onset (first `onset_steps` columns) followed by a tail, each
    drawn from a small vocabulary of random bit patterns or left silent. Onsets are
    shared by the class pairs (0,1), (2,3), ... so that the first steps of an utterance
    identify only the pair; tails are class specific. In each example a channel is
    replaced by a random vocabulary channel with probability `noise`.
    """
    if n_per_class < 1:
        raise InvalidInputError("n_per_class must be >= 1")
    rng = substream(seed, "synthetic")
    tail_steps = N_STEPS - onset_steps
    onsets = (rng.random((vocabulary, onset_steps)) < density).astype(np.uint8)
    tails = (rng.random((vocabulary, tail_steps)) < density).astype(np.uint8)
    onsets[0] = 0
    tails[0] = 0

    def pick(shape):
        idx = rng.integers(1, vocabulary, size=shape)
        return np.where(rng.random(shape) < silent, 0, idx)

    group_onset = pick((5, N_CHANNELS))
    class_tail = pick((10, N_CHANNELS))

    cochleograms = []
    for label in range(10):
        template = np.hstack(
            [onsets[group_onset[label // 2]], tails[class_tail[label]]]
        )
        for k in range(n_per_class):
            bits = template.copy()
            swap = np.flatnonzero(rng.random(N_CHANNELS) < noise)
            for ch in swap:
                bits[ch] = np.concatenate(
                    [onsets[rng.integers(vocabulary)], tails[rng.integers(vocabulary)]]
                )
            cochleograms.append(
                Cochleogram(bits=bits, label=label, id=f"digit_{label}_{k}")
            )
    return cochleograms


def write_cochleograms(directory: str, cochleograms: Sequence[Cochleogram]) -> List[str]:
    """Write each cochleogram as digit_<label>_<idx>.csv, numbering per label."""
    counters: Dict[int, int] = {}
    paths = []
    for coch in cochleograms:
        idx = counters.get(coch.label, 0)
        counters[coch.label] = idx + 1
        path = os.path.join(directory, f"digit_{coch.label}_{idx}.csv")
        text = "\n".join(",".join(str(int(b)) for b in row) for row in coch.bits)
        atomic_write_text(path, text + "\n")
        paths.append(path)
    return paths


@dataclass(frozen=True)
class EegRecord:
    samples: np.ndarray
    label: str
    id: str

    def __post_init__(self):
        if self.samples.shape != (EEG_LENGTH,):
            raise EegRecordError(
                f"expected {EEG_LENGTH} samples, got {self.samples.size}", self.id
            )
        if self.label not in EEG_CLASSES:
            raise EegRecordError(f"unknown class {self.label!r}", self.id)


def load_eeg_bonn(directory: str) -> List[EegRecord]:
    """
    Read the Z (healthy) and S (epileptic) sets, Z records first, each sorted by name.
    """
    records = []
    for label in EEG_CLASSES:
        sub = os.path.join(directory, label)
        if not os.path.isdir(sub):
            raise DatasetError(
                f"missing class directory {label}/; expected {EEG_LAYOUT}", directory
            )
        paths = sorted(
            glob.glob(os.path.join(sub, "*.txt")) + glob.glob(os.path.join(sub, "*.TXT"))
        )
        if not paths:
            raise DatasetError(f"no *.txt records; expected {EEG_LAYOUT}", sub)
        for path in paths:
            try:
                samples = np.loadtxt(path, dtype=float, ndmin=1)
            except ValueError as exc:
                raise EegRecordError(f"unreadable record ({exc})", path)
            records.append(EegRecord(samples=samples, label=label, id=path))
    logger.info("loaded %d EEG records from %s", len(records), directory)
    return records


def load_iris_csv(path: Optional[str] = None) -> Tuple[np.ndarray, np.ndarray, List[str]]:
    """
    IRIS as (features (150, 4), species labels, feature names).

    The CSV holds four numeric columns and a species column, with or without a header
    row. Without a path the copy bundled with scikit-learn is used.
    """
    if not path:
        from sklearn.datasets import load_iris

        bunch = load_iris()
        labels = np.asarray(bunch.target_names)[bunch.target]
        return np.asarray(bunch.data, dtype=float), labels, list(bunch.feature_names)

    try:
        with open(path, newline="") as f:
            rows = [r for r in csv.reader(f) if r]
    except FileNotFoundError:
        raise DatasetError("IRIS CSV not found", path)
    if not rows:
        raise DatasetError("IRIS CSV is empty", path)
    names = ["sepal_length", "sepal_width", "petal_length", "petal_width"]
    try:
        float(rows[0][0])
    except (ValueError, IndexError):
        names = [c.strip() for c in rows[0][:4]]
        rows = rows[1:]
    if not rows or any(len(r) != 5 for r in rows):
        raise DatasetError("expected rows of 4 numeric features and a species", path)
    try:
        X = np.array([[float(v) for v in r[:4]] for r in rows])
    except ValueError as exc:
        raise DatasetError(f"non-numeric feature ({exc})", path)
    labels = np.array([r[4].strip() for r in rows])
    return X, labels, names
