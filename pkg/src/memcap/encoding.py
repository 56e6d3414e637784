import logging
from collections import Counter
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from memcap.errors import InvalidInputError
from memcap.models import PulseTrain

logger = logging.getLogger(__name__)

EEG_SAMPLE_RATE = 173.67


def _check_levels(v_min: float, v_max: float) -> None:
    if not v_min < v_max:
        raise InvalidInputError(f"v_min must be < v_max, got {v_min} >= {v_max}")


@dataclass(frozen=True)
class BinaryLevels:
    """Square pulses: bit 1 -> high_V, bit 0 -> low_V, each width_s long."""

    low_V: float = 0.01
    high_V: float = 0.2
    width_s: float = 0.5

    def __post_init__(self):
        _check_levels(self.low_V, self.high_V)
        if not self.width_s > 0:
            raise InvalidInputError("width_s must be > 0")


@dataclass(frozen=True)
class AmplitudeMap:
    """
    Scalars in [in_min, in_max] mapped linearly onto [v_min_V, v_max_V], held for
    duty*frame_s and followed by a 0 V rest for the remainder of the frame.
    """

    in_min: float = 0.0
    in_max: float = 0.5
    v_min_V: float = 0.05
    v_max_V: float = 0.2
    frame_s: float = 0.2
    duty: float = 0.5

    def __post_init__(self):
        _check_levels(self.v_min_V, self.v_max_V)
        if not self.in_min < self.in_max:
            raise InvalidInputError("in_min must be < in_max")
        if not 0 < self.duty <= 1:
            raise InvalidInputError(f"duty must be in (0, 1], got {self.duty}")
        if not self.frame_s > 0:
            raise InvalidInputError("frame_s must be > 0")


@dataclass(frozen=True)
class ClipAbsMap:
    """|x| clipped at clip_uV and mapped linearly onto [v_min_V, v_max_V]."""

    clip_uV: float = 300.0
    v_min_V: float = 0.1
    v_max_V: float = 0.2
    width_s: float = 1.0 / EEG_SAMPLE_RATE

    def __post_init__(self):
        _check_levels(self.v_min_V, self.v_max_V)
        if not self.clip_uV > 0:
            raise InvalidInputError("clip_uV must be > 0")
        if not self.width_s > 0:
            raise InvalidInputError("width_s must be > 0")


@dataclass(frozen=True)
class StaticMap:
    """One pulse per static feature, mapped from its training range onto [v_min_V, v_max_V]."""

    v_min_V: float = 0.1
    v_max_V: float = 0.2
    width_s: float = 2.5

    def __post_init__(self):
        _check_levels(self.v_min_V, self.v_max_V)
        if not self.width_s > 0:
            raise InvalidInputError("width_s must be > 0")


EncoderSpec = Union[BinaryLevels, AmplitudeMap, ClipAbsMap, StaticMap]


def encode_binary(bits: Sequence[int], spec: BinaryLevels = BinaryLevels()) -> PulseTrain:
    """
    One square pulse per bit.

    :param bits: Sequence of 0/1 symbols
    :param spec: Pulse levels and width
    :return: PulseTrain with len(bits) segments
    """
    arr = np.asarray(bits)
    if arr.size == 0:
        raise InvalidInputError("cannot encode an empty bit sequence")
    if not np.isin(arr, (0, 1)).all():
        raise InvalidInputError("bits must be 0 or 1")
    amps = np.where(arr.astype(int) == 1, spec.high_V, spec.low_V)
    return PulseTrain.from_arrays(amps, np.full(arr.size, spec.width_s))


def _linear_map(x, lo, hi, v_min, v_max):
    return v_min + (x - lo) * (v_max - v_min) / (hi - lo)


def encode_amplitude(u: Sequence[float], spec: AmplitudeMap = AmplitudeMap()) -> PulseTrain:
    """
    Pulse-amplitude encoding with a duty cycle; every frame is an on-pulse followed by a
    0 V rest segment (omitted when duty is 1).
    """
    arr = np.asarray(u, dtype=float)
    if arr.size == 0:
        raise InvalidInputError("cannot encode an empty input sequence")
    if np.any(~np.isfinite(arr)) or arr.min() < spec.in_min or arr.max() > spec.in_max:
        raise InvalidInputError(
            f"inputs must lie in [{spec.in_min}, {spec.in_max}]"
        )
    amps = _linear_map(arr, spec.in_min, spec.in_max, spec.v_min_V, spec.v_max_V)
    on = spec.duty * spec.frame_s
    if spec.duty == 1:
        return PulseTrain.from_arrays(amps, np.full(arr.size, on))
    off = spec.frame_s - on
    n = arr.size
    amplitudes = np.zeros(2 * n)
    amplitudes[0::2] = amps
    durations = np.empty(2 * n)
    durations[0::2] = on
    durations[1::2] = off
    rest = np.zeros(2 * n, dtype=bool)
    rest[1::2] = True
    return PulseTrain.from_arrays(amplitudes, durations, rest)


def eeg_voltages(samples: Sequence[float], spec: ClipAbsMap = ClipAbsMap()) -> np.ndarray:
    arr = np.abs(np.asarray(samples, dtype=float))
    clipped = np.minimum(arr, spec.clip_uV)
    return _linear_map(clipped, 0.0, spec.clip_uV, spec.v_min_V, spec.v_max_V)


def encode_eeg(samples: Sequence[float], spec: ClipAbsMap = ClipAbsMap()) -> PulseTrain:
    """Rectify, clip and map each EEG sample (uV) to one pulse of spec.width_s."""
    if len(samples) == 0:
        raise InvalidInputError("cannot encode an empty EEG record")
    amps = eeg_voltages(samples, spec)
    return PulseTrain.from_arrays(amps, np.full(amps.size, spec.width_s))


def fit_static_range(features: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Per-column (min, max) of a training feature matrix."""
    X = np.asarray(features, dtype=float)
    if X.ndim != 2 or X.shape[0] == 0:
        raise InvalidInputError("expected a non-empty 2-D feature matrix")
    return X.min(axis=0), X.max(axis=0)


def encode_static(
    features: Sequence[float],
    in_range: Tuple[Sequence[float], Sequence[float]],
    spec: StaticMap = StaticMap(),
    clamped: Optional[Counter] = None,
) -> List[PulseTrain]:
    """
    One single-pulse train per feature.

    Features outside their training range are clamped to it; each clamp is logged and,
    when `clamped` is given, tallied under the feature index.
    """
    x = np.asarray(features, dtype=float)
    lo = np.asarray(in_range[0], dtype=float)
    hi = np.asarray(in_range[1], dtype=float)
    if not (x.shape == lo.shape == hi.shape):
        raise InvalidInputError("features and range bounds must have the same length")
    outside = (x < lo) | (x > hi)
    for i in np.flatnonzero(outside):
        logger.warning(
            "feature %d value %g outside training range [%g, %g]; clamped",
            i,
            x[i],
            lo[i],
            hi[i],
        )
        if clamped is not None:
            clamped[int(i)] += 1
    x = np.clip(x, lo, hi)
    span = hi - lo
    mid = 0.5 * (spec.v_min_V + spec.v_max_V)
    # constant training columns map to the middle of the voltage range
    safe_hi = np.where(span > 0, hi, lo + 1.0)
    mapped = _linear_map(x, lo, safe_hi, spec.v_min_V, spec.v_max_V)
    amps = np.where(span > 0, mapped, mid)
    return [PulseTrain.from_arrays([a], [spec.width_s]) for a in amps]


def frame_widths(lo: float = 0.2, hi: float = 0.6, n: int = 10) -> np.ndarray:
    """n equally spaced frame lengths from lo to hi inclusive, s."""
    if n < 1 or not 0 < lo <= hi:
        raise InvalidInputError("need n >= 1 and 0 < lo <= hi")
    return np.linspace(lo, hi, n)
