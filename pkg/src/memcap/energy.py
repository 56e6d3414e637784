"""
Energy per spike and mean power of a memcapacitor driven by a pulse train.

Only charging counts: every rising voltage edge costs charge_factor * C * dV^2 with C
taken just before the edge; falling edges cost nothing. The baseline before the first
segment is 0 V.
"""

import logging
import math
from dataclasses import asdict, dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np

from memcap.core import DEFAULT_DT, integrate_lanes
from memcap.errors import InvalidInputError, MisalignedTraceError
from memcap.models import CapacitanceTrace, MemcapacitorParams, PulseTrain

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class EnergyReport:
    energy_per_spike: float
    total_energy: float
    mean_power: float
    spike_count: int
    pulse_width_s: float
    charge_factor: float
    duration_s: float

    def as_dict(self) -> Dict:
        return asdict(self)


def edge_energies(
    amplitudes: Sequence[float],
    c_before: Sequence[float],
    charge_factor: float = 1.0,
    baseline: float = 0.0,
) -> np.ndarray:
    """
    Per-segment charging energy, J.

    :param amplitudes: Segment voltages, V
    :param c_before: Capacitance just before each segment starts, F
    :param charge_factor: 1.0 for C*dV^2, 0.5 for the stored-energy convention
    :param baseline: Voltage before the first segment
    :return: Array of len(amplitudes); zero wherever the voltage does not rise
    """
    amps = np.asarray(amplitudes, dtype=float)
    caps = np.asarray(c_before, dtype=float)
    if amps.shape != caps.shape:
        raise InvalidInputError("need one capacitance per segment")
    if charge_factor <= 0:
        raise InvalidInputError(f"charge_factor must be > 0, got {charge_factor}")
    dv = np.diff(amps, prepend=baseline)
    return np.where(dv > 0, charge_factor * caps * dv * dv, 0.0)


def _report(energies: np.ndarray, train: PulseTrain, charge_factor: float) -> EnergyReport:
    amps = train.amplitudes
    spikes = int(np.count_nonzero(np.diff(amps, prepend=0.0) > 0))
    total = float(energies.sum())
    on = train.on_mask
    width = float(train.durations[on].mean()) if on.any() else 0.0
    duration = train.duration
    return EnergyReport(
        energy_per_spike=total / spikes if spikes else 0.0,
        total_energy=total,
        mean_power=total / duration,
        spike_count=spikes,
        pulse_width_s=width,
        charge_factor=charge_factor,
        duration_s=duration,
    )


def memcap_energy(
    trace: CapacitanceTrace, train: PulseTrain, charge_factor: float = 1.0
) -> EnergyReport:
    """
    Energy of driving the device of `trace` with `train`.

    The trace must contain a sample at every segment boundary (segment-end or
    every-step sampling) and its voltages must match the train.
    """
    dt = trace.dt
    counts = train.step_counts(dt)
    bounds = trace.times[0] + np.concatenate(([0], np.cumsum(counts))) * dt
    tol = 0.25 * dt
    idx = np.searchsorted(trace.times, bounds - tol)
    if np.any(idx >= len(trace.times)):
        raise MisalignedTraceError(
            f"trace ends at {trace.times[-1]:.6g} s before the train ({bounds[-1]:.6g} s)"
        )
    if np.any(np.abs(trace.times[idx] - bounds) > tol):
        raise MisalignedTraceError("trace has no sample at some segment boundary")
    if not np.allclose(trace.voltage[idx[1:]], train.amplitudes, rtol=0, atol=1e-12):
        raise MisalignedTraceError("trace voltages do not match the pulse train")
    energies = edge_energies(
        train.amplitudes, trace.capacitance[idx[:-1]], charge_factor
    )
    return _report(energies, train, charge_factor)


def reservoir_energy(run, rows: Optional[Sequence[int]] = None) -> float:
    """
    Total reservoir energy of a set of rows, J.

    :param run: A StateMatrix (anything with `row_energy`) or an array of per-row energies
    :param rows: Rows to include, e.g. the test split; all rows when None
    """
    energy = getattr(run, "row_energy", run)
    if energy is None:
        return 0.0
    energy = np.asarray(energy, dtype=float)
    if rows is not None:
        energy = energy[np.asarray(rows, dtype=int)]
    return float(energy.sum())


@dataclass
class WidthSweep:
    widths: List[float]
    reports: List[EnergyReport]

    @property
    def relative_spread(self) -> float:
        """(max - min) / mean of energy_per_spike across widths."""
        eps = np.array([r.energy_per_spike for r in self.reports])
        mean = eps.mean()
        return float((eps.max() - eps.min()) / mean) if mean > 0 else 0.0

    def as_dict(self) -> Dict:
        return {
            "widths_s": list(self.widths),
            "reports": [r.as_dict() for r in self.reports],
            "relative_spread": self.relative_spread,
        }


def pulse_width_sweep(
    amplitudes: Sequence[float],
    widths: Sequence[float],
    params: MemcapacitorParams,
    dt: float = DEFAULT_DT,
    charge_factor: float = 1.0,
) -> WidthSweep:
    """
    Replay one amplitude sequence as back-to-back pulses at each width and report energy.

    All widths are integrated side by side as lanes of one batch. Any spread in
    energy_per_spike comes from the state-dependent capacitance at the edges and is
    reported as is: it stays below 0.1% only while the pulses barely move the device
    (amplitudes of about 10 mV).
    """
    amps = np.asarray(amplitudes, dtype=float)
    if amps.size == 0 or len(widths) == 0:
        raise InvalidInputError("need at least one amplitude and one width")
    trains = [PulseTrain.from_arrays(amps, np.full(amps.size, float(w))) for w in widths]
    reports = []
    for w, train, lane in zip(widths, trains, integrate_lanes(trains, params, dt)):
        R, W = lane.segment_boundary_states()
        area = params.a * math.pi * R[:-1] ** 2
        c_before = params.permittivity * area / W[:-1]
        reports.append(
            _report(edge_energies(amps, c_before, charge_factor), train, charge_factor)
        )
        logger.debug(
            "width %.3g s: %.4g J per spike", w, reports[-1].energy_per_spike
        )
    return WidthSweep(widths=[float(w) for w in widths], reports=reports)
