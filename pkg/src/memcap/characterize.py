"""
Device fingerprints: paired-pulse facilitation, pinched C-v hysteresis, zero-input
decay, the steady-state capacitance curve and energy per spike of a random pulse train.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence

import numpy as np

from memcap.calibrate import decay_time
from memcap.config import substream
from memcap.core import DEFAULT_DT, normalized_capacitance, simulate, steady_state
from memcap.energy import pulse_width_sweep
from memcap.errors import InvalidInputError
from memcap.models import CapacitanceTrace, MemcapacitorParams, PulseTrain, SamplePolicy

logger = logging.getLogger(__name__)

ENERGY_DT = 5e-3


@dataclass
class Fingerprint:
    """One characterization run: its trace (if any) and JSON-ready summary numbers."""

    name: str
    summary: Dict
    trace: Optional[CapacitanceTrace] = None
    curve: Dict[str, np.ndarray] = field(default_factory=dict)


def ppf_run(
    params: MemcapacitorParams,
    amplitude: float = 0.2,
    width: float = 0.5,
    gap: float = 0.25,
    pulses: int = 4,
    dt: float = DEFAULT_DT,
) -> Fingerprint:
    """Equal pulses separated by short rests; ratios of end-of-pulse C to the first."""
    amps, durs, rest = [], [], []
    for i in range(pulses):
        amps.append(amplitude)
        durs.append(width)
        rest.append(False)
        if i < pulses - 1:
            amps.append(0.0)
            durs.append(gap)
            rest.append(True)
    train = PulseTrain.from_arrays(amps, durs, rest)
    trace = simulate(train, params, dt, SamplePolicy.every_step())
    ends = simulate(train, params, dt, SamplePolicy.segment_end())
    peaks = ends.normalized[1:][train.on_mask]
    ratios = peaks / peaks[0]
    return Fingerprint(
        name="ppf",
        summary={
            "amplitude_V": amplitude,
            "pulse_width_s": width,
            "gap_s": gap,
            "peak_ratio": peaks.tolist(),
            "ppf_ratio": ratios.tolist(),
            "monotone": bool(np.all(np.diff(peaks) > 0)),
        },
        trace=trace,
    )


def _lobe_area(v: np.ndarray, c: np.ndarray) -> float:
    # shoelace over one half cycle, closed back to its first point
    return 0.5 * abs(float(np.dot(v, np.roll(c, -1)) - np.dot(np.roll(v, -1), c)))


def hysteresis_run(
    params: MemcapacitorParams,
    amplitude: float = 0.15,
    frequency: float = 0.05,
    cycles: int = 2,
    segments_per_cycle: int = 2000,
    dt: float = DEFAULT_DT,
    tolerance: float = 0.02,
) -> Fingerprint:
    """
    Piecewise-constant sampled sinusoid. Loop area (C/C0 against V) is the sum of the
    absolute areas of the two lobes of the last cycle; the loop counts as pinched when
    C/C0 stays within `tolerance` of 1 at every zero crossing of that cycle.
    """
    if cycles < 1 or segments_per_cycle < 4 or segments_per_cycle % 2:
        raise InvalidInputError("need cycles >= 1 and an even segments_per_cycle >= 4")
    period = 1.0 / frequency
    seg = period / segments_per_cycle
    k = np.arange(cycles * segments_per_cycle)
    amps = amplitude * np.sin(2.0 * math.pi * frequency * (k + 0.5) * seg)
    train = PulseTrain.from_arrays(amps, np.full(k.size, seg))
    trace = simulate(train, params, dt, SamplePolicy.segment_end())

    ratio = trace.normalized[1:]
    half = segments_per_cycle // 2
    last = slice((cycles - 1) * segments_per_cycle, cycles * segments_per_cycle)
    v_last, c_last = amps[last], ratio[last]
    area = _lobe_area(v_last[:half], c_last[:half]) + _lobe_area(
        v_last[half:], c_last[half:]
    )
    # boundary samples at the start, middle and end of the last cycle
    crossings = trace.normalized[
        [(cycles - 1) * segments_per_cycle + j * half for j in range(3)]
    ]
    deviation = float(np.max(np.abs(crossings - 1.0)))
    return Fingerprint(
        name="hysteresis",
        summary={
            "amplitude_V": amplitude,
            "frequency_Hz": frequency,
            "loop_area": area,
            "zero_crossing_deviation": deviation,
            "pinched": bool(deviation < tolerance),
            "tolerance": tolerance,
        },
        trace=trace,
    )


def decay_run(
    params: MemcapacitorParams,
    amplitude: float = 0.15,
    hold: float = 5.0,
    observe: float = 5.0,
    dt: float = DEFAULT_DT,
    tolerance: float = 0.01,
) -> Fingerprint:
    """Long pulse, then 0 V; time until C/C0 is back within `tolerance` of 1."""
    train = PulseTrain.from_arrays([amplitude, 0.0], [hold, observe], [False, True])
    trace = simulate(train, params, dt, SamplePolicy.every_step())
    off = int(train.step_counts(dt)[0])
    excess = np.abs(trace.normalized[off:] - 1.0)
    settled = np.flatnonzero(excess <= tolerance)
    measured = float(settled[0] * dt) if settled.size else float("nan")
    if not settled.size:
        logger.warning("C/C0 did not return within %g of rest in %g s", tolerance, observe)
    return Fingerprint(
        name="decay",
        summary={
            "amplitude_V": amplitude,
            "hold_s": hold,
            "tolerance": tolerance,
            "peak_ratio": float(trace.normalized[off]),
            "decay_time_s": measured,
            "decay_time_analytic_s": decay_time(params, amplitude, tolerance),
        },
        trace=trace,
    )


def steady_state_sweep(
    params: MemcapacitorParams, v_max: float = 0.2, increment: float = 0.005
) -> Fingerprint:
    """C_ss/C0 from -v_max to +v_max in fixed voltage increments."""
    n = int(round(v_max / increment))
    volts = np.arange(-n, n + 1) * increment
    ratios = []
    for v in volts:
        R, W = steady_state(float(v), params)
        ratios.append(float(normalized_capacitance(R, W, params)))
    ratios = np.array(ratios)
    by_mv = {f"{v * 1000:.0f}": r for v, r in zip(volts, ratios) if v >= 0}
    return Fingerprint(
        name="steady_state",
        summary={
            "increment_V": increment,
            "ratio_at_150mV": by_mv.get("150"),
            "ratio_at_200mV": by_mv.get("200"),
            "max_ratio": float(ratios.max()),
        },
        curve={"v_V": volts, "C_ss_over_C0": ratios},
    )


def energy_run(
    params: MemcapacitorParams,
    pulses: int = 1000,
    v_min: float = 0.0,
    v_max: float = 0.2,
    widths: Sequence[float] = (0.05, 0.1, 0.2, 0.5),
    reference_width: float = 0.1,
    seed: int = 0,
    dt: float = ENERGY_DT,
    charge_factor: float = 1.0,
) -> Fingerprint:
    """
    Back-to-back pulses with seeded uniform random amplitudes, replayed at several
    widths. Reports energy per spike and mean power at `reference_width` plus the
    spread of energy per spike across all widths.
    """
    if pulses < 1:
        raise InvalidInputError(f"need at least one pulse, got {pulses}")
    if reference_width not in widths:
        widths = tuple(widths) + (reference_width,)
    amps = substream(seed, "energy").uniform(v_min, v_max, pulses)
    sweep = pulse_width_sweep(amps, widths, params, dt, charge_factor)
    ref = sweep.reports[list(widths).index(reference_width)]
    if sweep.relative_spread > 1e-3:
        logger.info(
            "energy per spike varies by %.1f%% across widths %s",
            100 * sweep.relative_spread,
            list(widths),
        )
    return Fingerprint(
        name="energy",
        summary={
            "pulses": pulses,
            "v_min_V": v_min,
            "v_max_V": v_max,
            "seed": seed,
            "reference_width_s": reference_width,
            "energy_per_spike_J": ref.energy_per_spike,
            "mean_power_W": ref.mean_power,
            "sweep": sweep.as_dict(),
        },
        curve={
            "width_s": np.array(sweep.widths),
            "energy_per_spike_J": np.array([r.energy_per_spike for r in sweep.reports]),
            "mean_power_W": np.array([r.mean_power for r in sweep.reports]),
        },
    )


def characterize(params: MemcapacitorParams, dt: float = DEFAULT_DT) -> Dict[str, Fingerprint]:
    runs = [
        ppf_run(params, dt=dt),
        hysteresis_run(params, dt=dt),
        decay_run(params, dt=dt),
        steady_state_sweep(params),
        energy_run(params, dt=max(dt, ENERGY_DT)),
    ]
    for run in runs:
        logger.info("%s: %s", run.name, run.summary)
    return {run.name: run for run in runs}
