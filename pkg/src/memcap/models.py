import math
from dataclasses import dataclass, field, fields, replace
from typing import Iterable, Literal, Optional, Sequence, Tuple

import numpy as np

from memcap.errors import InvalidInputError

EPS0 = 8.854187817e-12
"""Permittivity of free space, F/m."""


@dataclass(frozen=True)
class MemcapacitorParams:
    """
    Physical constants of one droplet-interface-bilayer memcapacitor (SI units).

    Attributes
    ----------
    a : float
        Dimensionless shape factor multiplying pi*R^2 in the bilayer area.
    eps : float
        Relative permittivity of the hydrophobic core.
    R0 : float
        Zero-volt minor-axis radius of the bilayer, m.
    W0 : float
        Zero-volt hydrophobic thickness, m.
    zeta_ew, k_ew : float
        Electrowetting damping (N s m^-2) and stiffness (N m^-2).
    zeta_ec, k_ec : float
        Electrocompression damping (N s m^-1) and stiffness (N m^-1).
    eps0 : float
        Permittivity of free space; fixed at EPS0.
    """

    a: float
    eps: float
    R0: float
    W0: float
    zeta_ew: float
    k_ew: float
    zeta_ec: float
    k_ec: float
    eps0: float = EPS0

    def __post_init__(self):
        self._validate()

    def _validate(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if not isinstance(value, (int, float, np.floating)) or not math.isfinite(
                value
            ):
                raise InvalidInputError(f"MemcapacitorParams.{f.name} must be finite")
            if value <= 0:
                raise InvalidInputError(
                    f"MemcapacitorParams.{f.name} must be strictly positive, got {value!r}"
                )
        if not math.isclose(self.eps0, EPS0, rel_tol=1e-12):
            raise InvalidInputError(f"eps0 is fixed at {EPS0} F/m, got {self.eps0!r}")

    @property
    def permittivity(self) -> float:
        """eps * eps0, F/m."""
        return self.eps * self.eps0

    @property
    def c0(self) -> float:
        """Rest (zero-volt) capacitance, F."""
        return self.permittivity * self.a * math.pi * self.R0**2 / self.W0

    @property
    def specific_capacitance(self) -> float:
        """Capacitance per unit area at rest, F/m^2."""
        return self.permittivity / self.W0

    @property
    def tau_ew(self) -> float:
        return self.zeta_ew / self.k_ew

    @property
    def tau_ec(self) -> float:
        return self.zeta_ec / self.k_ec

    def rest_state(self) -> "MemcapacitorState":
        return MemcapacitorState(R=self.R0, W=self.W0, t=0.0)

    def scaled(self, r0_factor: float = 1.0, w0_factor: float = 1.0) -> "MemcapacitorParams":
        """Copy with R0 and W0 multiplied by the given factors."""
        return replace(self, R0=self.R0 * r0_factor, W0=self.W0 * w0_factor)

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass(frozen=True)
class MemcapacitorState:
    """Dynamical variables of one device: radius R (m), thickness W (m), time t (s)."""

    R: float
    W: float
    t: float = 0.0
    floor_hit: bool = False

    def __post_init__(self):
        if not (math.isfinite(self.R) and math.isfinite(self.W) and math.isfinite(self.t)):
            raise InvalidInputError(f"non-finite state {self!r}")
        if self.R <= 0 or self.W <= 0:
            raise InvalidInputError(f"state must have R > 0 and W > 0, got {self!r}")


@dataclass(frozen=True)
class Segment:
    """One constant-voltage piece of a pulse train; `rest` marks inter-pulse gaps."""

    amplitude: float
    duration: float
    rest: bool = False


@dataclass(frozen=True)
class PulseTrain:
    """
    Piecewise-constant voltage waveform, the universal input to the device model.

    Segments are (amplitude V, duration s) pairs applied in order.
    """

    segments: Tuple[Segment, ...]

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))
        for i, seg in enumerate(self.segments):
            if not math.isfinite(seg.amplitude):
                raise InvalidInputError(f"segment {i}: amplitude must be finite")
            if not (math.isfinite(seg.duration) and seg.duration > 0):
                raise InvalidInputError(
                    f"segment {i}: duration must be > 0, got {seg.duration!r}"
                )

    @classmethod
    def from_arrays(
        cls,
        amplitudes: Iterable[float],
        durations: Iterable[float],
        rest: Optional[Iterable[bool]] = None,
    ) -> "PulseTrain":
        amps = [float(a) for a in amplitudes]
        durs = [float(d) for d in durations]
        if len(amps) != len(durs):
            raise InvalidInputError("amplitudes and durations must have equal length")
        flags = [False] * len(amps) if rest is None else [bool(r) for r in rest]
        return cls(tuple(Segment(a, d, r) for a, d, r in zip(amps, durs, flags)))

    def __len__(self):
        return len(self.segments)

    def __add__(self, other: "PulseTrain") -> "PulseTrain":
        return PulseTrain(self.segments + other.segments)

    @property
    def amplitudes(self) -> np.ndarray:
        return np.array([s.amplitude for s in self.segments], dtype=float)

    @property
    def durations(self) -> np.ndarray:
        return np.array([s.duration for s in self.segments], dtype=float)

    @property
    def on_mask(self) -> np.ndarray:
        """True for segments that are pulses (not rest gaps)."""
        return np.array([not s.rest for s in self.segments], dtype=bool)

    @property
    def duration(self) -> float:
        return math.fsum(s.duration for s in self.segments)

    def step_counts(self, dt: float) -> np.ndarray:
        """
        Integer number of integration steps per segment.

        Durations are rounded to the nearest whole number of steps (minimum 1), so a
        5.758 ms EEG sample at dt = 0.1 ms runs for 58 steps.
        """
        if not dt > 0:
            raise InvalidInputError(f"dt must be > 0, got {dt!r}")
        counts = np.rint(self.durations / dt).astype(np.int64)
        return np.maximum(counts, 1)


@dataclass(frozen=True)
class SamplePolicy:
    """When `simulate` emits samples: every step, at each segment end, or at given times."""

    mode: Literal["every_step", "segment_end", "times"] = "every_step"
    times: Tuple[float, ...] = ()

    @classmethod
    def every_step(cls) -> "SamplePolicy":
        return cls("every_step")

    @classmethod
    def segment_end(cls) -> "SamplePolicy":
        return cls("segment_end")

    @classmethod
    def at_times(cls, times: Sequence[float]) -> "SamplePolicy":
        return cls("times", tuple(float(t) for t in times))


@dataclass(frozen=True)
class CapacitanceTrace:
    """
    Sampled device response. Sample 0 is the initial state at t = 0; `voltage[i]` is the
    voltage held over the step that ended at `times[i]` (0 for the initial sample).
    """

    times: np.ndarray
    voltage: np.ndarray
    radius: np.ndarray
    thickness: np.ndarray
    area: np.ndarray
    capacitance: np.ndarray
    c0: float
    dt: float
    floor_hit: bool = False
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        n = len(self.times)
        for name in ("voltage", "radius", "thickness", "area", "capacitance"):
            if len(getattr(self, name)) != n:
                raise InvalidInputError(f"trace array {name!r} has length != {n}")
        if n > 1 and np.any(np.diff(self.times) <= 0):
            raise InvalidInputError("trace times must be strictly increasing")

    def __len__(self):
        return len(self.times)

    @property
    def normalized(self) -> np.ndarray:
        """C / C0."""
        return self.capacitance / self.c0
