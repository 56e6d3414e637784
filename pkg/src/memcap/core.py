"""
Electrowetting / electrocompression model of a lipid-bilayer memcapacitor.

The bilayer radius R and hydrophobic thickness W obey

    dR/dt = (1/zeta_ew) * ( a*eps*eps0/(2W) * v^2 - k_ew*(R - R0) )
    dW/dt = (1/zeta_ec) * ( -a*eps*eps0*pi*R^2/(2W^2) * v^2 + k_ec*(W0 - W) )

and the capacitance is C = eps*eps0*a*pi*R^2 / W. Integration is classical fixed-step
RK4 with the voltage held constant over each step.
"""

import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.optimize import brentq

from memcap.errors import (
    IntegrationDivergedError,
    InvalidInputError,
    NonphysicalRootError,
    SolverFailedError,
)
from memcap.models import (
    CapacitanceTrace,
    MemcapacitorParams,
    MemcapacitorState,
    PulseTrain,
    SamplePolicy,
)

logger = logging.getLogger(__name__)

DEFAULT_DT = 1e-3
DEFAULT_W_FLOOR = 0.2
DEFAULT_V_GUARD = 0.5
STEADY_STATE_RTOL = 1e-12

ParamsLike = Union[MemcapacitorParams, Sequence[MemcapacitorParams]]


@dataclass(frozen=True)
class _Coefficients:
    """Rate coefficients of one device, or of a batch of devices as arrays."""

    ew_drive: Union[float, np.ndarray]
    ew_restore: Union[float, np.ndarray]
    ec_drive: Union[float, np.ndarray]
    ec_restore: Union[float, np.ndarray]
    R0: Union[float, np.ndarray]
    W0: Union[float, np.ndarray]

    @staticmethod
    def _scalars(p: MemcapacitorParams) -> Tuple[float, ...]:
        half_aee = p.a * p.permittivity / 2.0
        return (
            half_aee / p.zeta_ew,
            p.k_ew / p.zeta_ew,
            half_aee * math.pi / p.zeta_ec,
            p.k_ec / p.zeta_ec,
            p.R0,
            p.W0,
        )

    @classmethod
    def single(cls, params: MemcapacitorParams) -> "_Coefficients":
        return cls(*cls._scalars(params))

    @classmethod
    def batch(cls, params: Sequence[MemcapacitorParams]) -> "_Coefficients":
        columns = zip(*(cls._scalars(p) for p in params))
        return cls(*(np.array(col, dtype=float) for col in columns))


def _rates(R, W, v2, c: _Coefficients):
    dR = c.ew_drive * v2 / W - c.ew_restore * (R - c.R0)
    dW = c.ec_restore * (c.W0 - W) - c.ec_drive * (R * R) * v2 / (W * W)
    return dR, dW


def _rk4(R, W, v2, c: _Coefficients, dt: float):
    h = 0.5 * dt
    k1R, k1W = _rates(R, W, v2, c)
    k2R, k2W = _rates(R + h * k1R, W + h * k1W, v2, c)
    k3R, k3W = _rates(R + h * k2R, W + h * k2W, v2, c)
    k4R, k4W = _rates(R + dt * k3R, W + dt * k3W, v2, c)
    sixth = dt / 6.0
    R_next = R + sixth * (k1R + 2.0 * k2R + 2.0 * k3R + k4R)
    W_next = W + sixth * (k1W + 2.0 * k2W + 2.0 * k3W + k4W)
    return R_next, W_next


def _check_voltage(v: float) -> None:
    if not math.isfinite(v):
        raise InvalidInputError(f"voltage must be finite, got {v!r}")


def derivatives(
    state: MemcapacitorState, v: float, params: MemcapacitorParams
) -> Tuple[float, float]:
    """
    Right-hand side of the coupled state equations.

    :param state: Current (R, W)
    :param v: Applied voltage, V
    :param params: Device constants
    :return: (dR/dt, dW/dt) in m/s
    """
    _check_voltage(v)
    return _rates(state.R, state.W, v * v, _Coefficients.single(params))


def capacitance(state: MemcapacitorState, params: MemcapacitorParams) -> float:
    """Parallel-plate capacitance eps*eps0*(a*pi*R^2)/W, F."""
    area = params.a * math.pi * state.R**2
    return params.permittivity * area / state.W


def step(
    state: MemcapacitorState,
    v: float,
    dt: float,
    params: MemcapacitorParams,
    w_floor: float = DEFAULT_W_FLOOR,
) -> MemcapacitorState:
    """
    Advance one classical RK4 step of length dt with v held constant.

    W is clamped to w_floor*W0 when the step undershoots it; the returned state then
    carries floor_hit=True.
    """
    if not dt > 0:
        raise InvalidInputError(f"dt must be > 0, got {dt!r}")
    _check_voltage(v)
    c = _Coefficients.single(params)
    R, W = _rk4(state.R, state.W, v * v, c, dt)
    t = state.t + dt
    if not (math.isfinite(R) and math.isfinite(W)) or R <= 0 or W <= 0:
        raise IntegrationDivergedError(t, dt, f"R={R!r}, W={W!r}")
    w_min = w_floor * params.W0
    floor_hit = state.floor_hit
    if W < w_min:
        logger.warning("W fell below floor %.3g m at t=%.6g s; clamped", w_min, t)
        W = w_min
        floor_hit = True
    return MemcapacitorState(R=R, W=W, t=t, floor_hit=floor_hit)


@dataclass
class LaneResult:
    """
    Outcome of integrating one pulse train (one lane of a batch).

    `segment_R[j]`, `segment_W[j]` hold the state after the last step of segment j.
    `steps_R`/`steps_W` hold the state after every step when per-step recording was on.
    """

    initial_R: float
    initial_W: float
    t0: float
    dt: float
    step_counts: np.ndarray
    segment_R: np.ndarray
    segment_W: np.ndarray
    floor_hit: bool = False
    steps_R: Optional[np.ndarray] = None
    steps_W: Optional[np.ndarray] = None

    @property
    def total_steps(self) -> int:
        return int(self.step_counts.sum())

    def final_state(self) -> MemcapacitorState:
        return MemcapacitorState(
            R=float(self.segment_R[-1]),
            W=float(self.segment_W[-1]),
            t=self.t0 + self.total_steps * self.dt,
            floor_hit=self.floor_hit,
        )

    def segment_boundary_states(self) -> Tuple[np.ndarray, np.ndarray]:
        """State at t=0 followed by the state at the end of every segment."""
        R = np.concatenate(([self.initial_R], self.segment_R))
        W = np.concatenate(([self.initial_W], self.segment_W))
        return R, W


def as_param_list(params: ParamsLike, n: int) -> List[MemcapacitorParams]:
    if isinstance(params, MemcapacitorParams):
        return [params] * n
    params = list(params)
    if len(params) != n:
        raise InvalidInputError(
            f"got {len(params)} parameter sets for {n} pulse trains"
        )
    return params


def integrate_lanes(
    trains: Sequence[PulseTrain],
    params: ParamsLike,
    dt: float = DEFAULT_DT,
    initial: Optional[Sequence[Optional[MemcapacitorState]]] = None,
    w_floor: float = DEFAULT_W_FLOOR,
    record_steps: bool = False,
) -> List[LaneResult]:
    """
    Integrate many independent devices side by side, one pulse train per lane.

    Every lane is advanced with the same elementwise arithmetic, so a lane's result does
    not depend on which other lanes share the batch.

    :param trains: One pulse train per lane
    :param params: One parameter set for all lanes, or one per lane
    :param dt: Integration step, s
    :param initial: Optional starting state per lane (rest when None)
    :param w_floor: W is clamped at w_floor*W0
    :param record_steps: Also keep the state after every step
    :return: One LaneResult per lane, in input order
    """
    if not dt > 0:
        raise InvalidInputError(f"dt must be > 0, got {dt!r}")
    n = len(trains)
    if n == 0:
        return []
    plist = as_param_list(params, n)
    if initial is None:
        initial = [None] * n
    if len(initial) != n:
        raise InvalidInputError("initial states must match the number of trains")
    for i, train in enumerate(trains):
        if len(train) == 0:
            raise InvalidInputError(f"pulse train {i} is empty")

    coeffs = _Coefficients.batch(plist)
    starts = [s if s is not None else p.rest_state() for s, p in zip(initial, plist)]
    R = np.array([s.R for s in starts], dtype=float)
    W = np.array([s.W for s in starts], dtype=float)
    t0 = np.array([s.t for s in starts], dtype=float)
    w_min = np.array([w_floor * p.W0 for p in plist], dtype=float)

    counts = [t.step_counts(dt) for t in trains]
    for train, cnt in zip(trains, counts):
        drift = np.abs(cnt * dt - train.durations)
        if np.any(drift > 1e-9 * np.maximum(train.durations, dt)):
            logger.debug(
                "segment durations rounded to whole steps (max shift %.3g s)",
                float(drift.max()),
            )
    n_seg = max(len(t) for t in trains)
    v2_table = np.zeros((n, n_seg + 1))
    end_table = np.full((n, n_seg + 1), np.iinfo(np.int64).max, dtype=np.int64)
    for i, (train, cnt) in enumerate(zip(trains, counts)):
        amps = train.amplitudes
        v2_table[i, : len(amps)] = amps * amps
        end_table[i, : len(cnt)] = np.cumsum(cnt)
    total = max(int(c.sum()) for c in counts)

    lanes = np.arange(n)
    ptr = np.zeros(n, dtype=np.intp)
    next_end = end_table[lanes, ptr].copy()
    v2 = v2_table[lanes, ptr].copy()
    seg_R = np.full((n, n_seg), np.nan)
    seg_W = np.full((n, n_seg), np.nan)
    floor_hits = np.zeros(n, dtype=bool)
    steps_R = np.empty((total, n)) if record_steps else None
    steps_W = np.empty((total, n)) if record_steps else None

    with np.errstate(all="ignore"):
        for k in range(1, total + 1):
            R, W = _rk4(R, W, v2, coeffs, dt)
            # NaN fails both comparisons
            bad = ~((R > 0) & (W > 0))
            if bad.any():
                raise IntegrationDivergedError(
                    float((t0[bad] + k * dt).min()), dt, "R or W left the positive range"
                )
            low = W < w_min
            if low.any():
                if not floor_hits[low].all():
                    logger.warning(
                        "W fell below floor in %d lane(s) at step %d; clamped",
                        int(low.sum()),
                        k,
                    )
                W = np.where(low, w_min, W)
                floor_hits |= low
            if record_steps:
                steps_R[k - 1] = R
                steps_W[k - 1] = W
            hit = next_end == k
            if hit.any():
                idx = lanes[hit]
                bad = ~(np.isfinite(R[idx]) & np.isfinite(W[idx]))
                if bad.any():
                    raise IntegrationDivergedError(
                        float((t0[idx][bad] + k * dt).min()), dt, "non-finite state"
                    )
                seg_R[idx, ptr[idx]] = R[idx]
                seg_W[idx, ptr[idx]] = W[idx]
                ptr[idx] += 1
                next_end[idx] = end_table[idx, ptr[idx]]
                v2[idx] = v2_table[idx, ptr[idx]]

    results = []
    for i, (train, cnt, s) in enumerate(zip(trains, counts, starts)):
        m = len(train)
        lane_steps = int(cnt.sum())
        results.append(
            LaneResult(
                initial_R=s.R,
                initial_W=s.W,
                t0=s.t,
                dt=dt,
                step_counts=cnt,
                segment_R=seg_R[i, :m].copy(),
                segment_W=seg_W[i, :m].copy(),
                floor_hit=bool(floor_hits[i]),
                steps_R=steps_R[:lane_steps, i].copy() if record_steps else None,
                steps_W=steps_W[:lane_steps, i].copy() if record_steps else None,
            )
        )
    return results


def normalized_capacitance(R, W, params: MemcapacitorParams):
    """C/C0 = (R/R0)^2 * (W0/W); exactly 1 at rest."""
    return (R / params.R0) ** 2 * (params.W0 / W)


def _trace_from_arrays(times, voltage, R, W, params, dt, floor_hit) -> CapacitanceTrace:
    area = params.a * math.pi * R**2
    cap = params.permittivity * area / W
    return CapacitanceTrace(
        times=times,
        voltage=voltage,
        radius=R,
        thickness=W,
        area=area,
        capacitance=cap,
        c0=params.c0,
        dt=dt,
        floor_hit=floor_hit,
    )


def simulate(
    train: PulseTrain,
    params: MemcapacitorParams,
    dt: float = DEFAULT_DT,
    sample: Optional[SamplePolicy] = None,
    initial: Optional[MemcapacitorState] = None,
    w_floor: float = DEFAULT_W_FLOOR,
) -> CapacitanceTrace:
    """
    Integrate one device through a pulse train and return the sampled trace.

    Integration starts from rest (R0, W0) unless an initial state is supplied. Every
    trace starts with the initial sample at t0; further samples follow `sample`.
    """
    if len(train) == 0:
        raise InvalidInputError("pulse train is empty")
    sample = sample or SamplePolicy.every_step()
    per_step = sample.mode != "segment_end"
    lane = integrate_lanes(
        [train], params, dt, initial=[initial], w_floor=w_floor, record_steps=per_step
    )[0]
    t0 = lane.t0

    if sample.mode == "segment_end":
        R, W = lane.segment_boundary_states()
        steps = np.concatenate(([0], np.cumsum(lane.step_counts)))
        voltage = np.concatenate(([0.0], train.amplitudes))
        return _trace_from_arrays(
            t0 + steps * dt, voltage, R, W, params, dt, lane.floor_hit
        )

    R = np.concatenate(([lane.initial_R], lane.steps_R))
    W = np.concatenate(([lane.initial_W], lane.steps_W))
    voltage = np.concatenate(([0.0], np.repeat(train.amplitudes, lane.step_counts)))
    steps = np.arange(lane.total_steps + 1)
    if sample.mode == "times":
        idx = np.rint((np.asarray(sample.times, dtype=float) - t0) / dt).astype(np.int64)
        if idx.size == 0:
            raise InvalidInputError("no sample times given")
        if idx.min() < 0 or idx.max() > lane.total_steps:
            raise InvalidInputError("sample times fall outside the simulated interval")
        if np.any(np.diff(idx) <= 0):
            raise InvalidInputError("sample times must map to increasing steps")
        keep = idx if idx[0] == 0 else np.concatenate(([0], idx))
        R, W, voltage, steps = R[keep], W[keep], voltage[keep], steps[keep]
    return _trace_from_arrays(t0 + steps * dt, voltage, R, W, params, dt, lane.floor_hit)


def steady_state_residual(
    R: float, W: float, v: float, params: MemcapacitorParams
) -> float:
    """
    Largest relative force-balance residual of the steady-state equations.

    Each balance is scaled by its stiffness times the rest dimension (k_ew*R0, k_ec*W0).
    """
    half_aee_v2 = params.a * params.permittivity * v * v / 2.0
    ew = params.k_ew * (R - params.R0) - half_aee_v2 / W
    ec = params.k_ec * (params.W0 - W) - half_aee_v2 * math.pi * R * R / (W * W)
    return max(abs(ew) / (params.k_ew * params.R0), abs(ec) / (params.k_ec * params.W0))


def steady_state(
    v: float,
    params: MemcapacitorParams,
    w_floor: float = DEFAULT_W_FLOOR,
    v_guard: float = DEFAULT_V_GUARD,
    max_iter: int = 200,
) -> Tuple[float, float]:
    """
    Zero-derivative state (R_ss, W_ss) under a constant voltage.

    R is eliminated analytically, R = R0 + a*eps*eps0*v^2/(2*W*k_ew), leaving one
    equation in the compression d = 1 - W/W0, solved by bracketed Brent iteration on
    the smallest root (the stable branch). Above the pull-in voltage no root with
    W >= w_floor*W0 exists and NonphysicalRootError is raised.
    """
    _check_voltage(v)
    if abs(v) > v_guard:
        raise InvalidInputError(f"|v|={abs(v)} V exceeds the blow-up guard {v_guard} V")
    if v == 0:
        return params.R0, params.W0

    half_aee_v2 = params.a * params.permittivity * v * v / 2.0

    def radius(W):
        return params.R0 + half_aee_v2 / (W * params.k_ew)

    def balance(d):
        W = params.W0 * (1.0 - d)
        R = radius(W)
        return params.k_ec * params.W0 * d - half_aee_v2 * math.pi * R * R / (W * W)

    grid = np.linspace(0.0, 1.0 - w_floor, 401)
    values = np.array([balance(d) for d in grid])
    positive = np.flatnonzero(values > 0)
    if positive.size == 0:
        raise NonphysicalRootError(
            f"no steady state with W >= {w_floor}*W0 at v={v} V "
            "(electrocompression pull-in)"
        )
    i = positive[0]
    try:
        d = brentq(
            balance,
            grid[i - 1],
            grid[i],
            xtol=1e-300,
            rtol=4 * np.finfo(float).eps,
            maxiter=max_iter,
        )
    except RuntimeError as exc:
        raise SolverFailedError(f"steady state did not converge at v={v} V: {exc}")
    W = params.W0 * (1.0 - d)
    R = radius(W)
    residual = steady_state_residual(R, W, v, params)
    if residual >= STEADY_STATE_RTOL:
        raise SolverFailedError(
            f"steady state residual {residual:.3g} above {STEADY_STATE_RTOL} at v={v} V"
        )
    return R, W
