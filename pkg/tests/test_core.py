import math
from dataclasses import replace

import numpy as np
import pytest

from memcap.config import load_params
from memcap.core import (
    capacitance,
    derivatives,
    integrate_lanes,
    normalized_capacitance,
    simulate,
    steady_state,
    steady_state_residual,
    step,
)
from memcap.errors import (
    IntegrationDivergedError,
    InvalidInputError,
    NonphysicalRootError,
)
from memcap.models import MemcapacitorState, PulseTrain, SamplePolicy

PARAMS = load_params()


def _ratio_ss(v):
    R, W = steady_state(v, PARAMS)
    return normalized_capacitance(R, W, PARAMS)


def test_derivatives_vanish_at_rest():
    assert derivatives(PARAMS.rest_state(), 0.0, PARAMS) == (0.0, 0.0)


def test_derivatives_relax_stretched_radius():
    state = MemcapacitorState(R=2 * PARAMS.R0, W=PARAMS.W0)
    dR, dW = derivatives(state, 0.0, PARAMS)
    assert dR == pytest.approx(-PARAMS.k_ew * PARAMS.R0 / PARAMS.zeta_ew, rel=1e-12)
    assert dW == 0.0


def test_derivatives_under_voltage_grow_area_and_thin_core():
    dR, dW = derivatives(PARAMS.rest_state(), 0.15, PARAMS)
    assert dR > 0
    assert dW < 0


def test_derivatives_reject_non_finite_voltage():
    with pytest.raises(InvalidInputError):
        derivatives(PARAMS.rest_state(), math.inf, PARAMS)


def test_capacitance_parallel_plate():
    c = capacitance(MemcapacitorState(R=1e-4, W=4e-9), PARAMS)
    assert c == pytest.approx(1.53e-10, rel=1e-3)


def test_capacitance_quadruples_with_doubled_radius():
    c1 = capacitance(MemcapacitorState(R=2e-5, W=4e-9), PARAMS)
    c2 = capacitance(MemcapacitorState(R=4e-5, W=4e-9), PARAMS)
    assert c2 == pytest.approx(4 * c1, rel=1e-12)


def test_step_at_rest_with_no_voltage_is_fixed_point():
    s = step(PARAMS.rest_state(), 0.0, 1e-3, PARAMS)
    assert (s.R, s.W) == (PARAMS.R0, PARAMS.W0)
    assert s.t == pytest.approx(1e-3)


def test_step_clamps_thickness_at_floor():
    s = step(PARAMS.rest_state(), 0.2, 0.05, PARAMS, w_floor=0.99999)
    assert s.floor_hit
    assert s.W == 0.99999 * PARAMS.W0


def test_step_reports_divergence():
    # RK4 far outside its stability region at v = 0
    state = MemcapacitorState(R=PARAMS.R0, W=0.9 * PARAMS.W0)
    with pytest.raises(IntegrationDivergedError):
        step(state, 0.0, 10.0, PARAMS)


def test_step_rejects_nonpositive_dt():
    with pytest.raises(InvalidInputError):
        step(PARAMS.rest_state(), 0.1, 0.0, PARAMS)


def test_rk4_global_error_is_fourth_order():
    horizon = 0.2
    train = PulseTrain.from_arrays([0.15], [horizon])

    def end_state(dt):
        trace = simulate(train, PARAMS, dt, SamplePolicy.segment_end())
        return trace.radius[-1], trace.thickness[-1]

    ref_R, ref_W = end_state(1e-3 / 16)
    errs_R, errs_W = [], []
    for dt in (8e-3, 4e-3, 2e-3):
        R, W = end_state(dt)
        errs_R.append(abs(R - ref_R))
        errs_W.append(abs(W - ref_W))
    for errs in (errs_R, errs_W):
        orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
        assert np.all(orders >= 3.5)


def test_capacitance_trace_matches_parallel_plate_identity():
    train = PulseTrain.from_arrays([0.2, 0.0], [0.3, 0.3], [False, True])
    trace = simulate(train, PARAMS, 1e-3)
    expected = PARAMS.permittivity * trace.area / trace.thickness
    np.testing.assert_allclose(trace.capacitance, expected, rtol=1e-14)
    np.testing.assert_allclose(
        trace.area, PARAMS.a * math.pi * trace.radius**2, rtol=1e-14
    )


def test_response_is_even_in_voltage():
    amps = np.array([0.12, 0.0, 0.18, 0.05])
    durs = [0.2, 0.1, 0.2, 0.1]
    pos = simulate(PulseTrain.from_arrays(amps, durs), PARAMS, 1e-3)
    neg = simulate(PulseTrain.from_arrays(-amps, durs), PARAMS, 1e-3)
    np.testing.assert_array_equal(pos.capacitance, neg.capacitance)
    np.testing.assert_array_equal(pos.voltage, -neg.voltage)


def test_trace_starts_with_initial_sample():
    train = PulseTrain.from_arrays([0.1, 0.2], [0.05, 0.05])
    trace = simulate(train, PARAMS, 1e-3, SamplePolicy.segment_end())
    np.testing.assert_allclose(trace.times, [0.0, 0.05, 0.1])
    np.testing.assert_array_equal(trace.voltage, [0.0, 0.1, 0.2])
    assert trace.normalized[0] == 1.0


def test_every_step_sampling_length():
    train = PulseTrain.from_arrays([0.1, 0.2], [0.05, 0.05])
    trace = simulate(train, PARAMS, 1e-3)
    assert len(trace) == 101
    assert trace.voltage[50] == 0.1
    assert trace.voltage[51] == 0.2


def test_sampling_at_requested_times():
    train = PulseTrain.from_arrays([0.15], [0.3])
    full = simulate(train, PARAMS, 1e-3)
    picked = simulate(train, PARAMS, 1e-3, SamplePolicy.at_times([0.1, 0.2]))
    np.testing.assert_allclose(picked.times, [0.0, 0.1, 0.2])
    np.testing.assert_array_equal(picked.capacitance, full.capacitance[[0, 100, 200]])


def test_sampling_outside_interval_is_rejected():
    train = PulseTrain.from_arrays([0.15], [0.1])
    with pytest.raises(InvalidInputError):
        simulate(train, PARAMS, 1e-3, SamplePolicy.at_times([0.5]))


def test_simulate_resumes_from_initial_state():
    first = PulseTrain.from_arrays([0.15], [0.2])
    second = PulseTrain.from_arrays([0.1], [0.2])
    whole = simulate(first + second, PARAMS, 1e-3, SamplePolicy.segment_end())
    head = simulate(first, PARAMS, 1e-3, SamplePolicy.segment_end())
    mid = MemcapacitorState(R=head.radius[-1], W=head.thickness[-1], t=head.times[-1])
    tail = simulate(second, PARAMS, 1e-3, SamplePolicy.segment_end(), initial=mid)
    assert tail.times[-1] == pytest.approx(0.4)
    assert tail.capacitance[-1] == whole.capacitance[-1]


def test_lanes_do_not_depend_on_batch_composition():
    a = PulseTrain.from_arrays([0.2, 0.0, 0.1], [0.1, 0.05, 0.2], [False, True, False])
    b = PulseTrain.from_arrays([0.05] * 7, [0.03] * 7)
    alone = integrate_lanes([a], PARAMS, 1e-3)[0]
    together = integrate_lanes([b, a, b], PARAMS, 1e-3)[1]
    np.testing.assert_array_equal(alone.segment_R, together.segment_R)
    np.testing.assert_array_equal(alone.segment_W, together.segment_W)


def test_lanes_reject_empty_train():
    with pytest.raises(InvalidInputError):
        integrate_lanes([PulseTrain(())], PARAMS, 1e-3)


def test_constant_voltage_converges_to_steady_state():
    trace = simulate(
        PulseTrain.from_arrays([0.15], [5.0]), PARAMS, 1e-3, SamplePolicy.segment_end()
    )
    assert trace.normalized[-1] == pytest.approx(_ratio_ss(0.15), rel=1e-3)


def test_paired_pulses_facilitate():
    amps = [0.2, 0.0, 0.2, 0.0, 0.2, 0.0, 0.2]
    durs = [0.5, 0.25, 0.5, 0.25, 0.5, 0.25, 0.5]
    rest = [False, True] * 3 + [False]
    trace = simulate(
        PulseTrain.from_arrays(amps, durs, rest), PARAMS, 1e-3, SamplePolicy.segment_end()
    )
    peaks = trace.normalized[1:][0::2]
    assert np.all(np.diff(peaks) > 0)


def test_steady_state_at_zero_volts_is_rest():
    assert steady_state(0.0, PARAMS) == (PARAMS.R0, PARAMS.W0)


def test_steady_state_grows_radius_and_compresses_core():
    R, W = steady_state(0.15, PARAMS)
    assert R > PARAMS.R0
    assert W < PARAMS.W0
    assert steady_state_residual(R, W, 0.15, PARAMS) < 1e-12


def test_steady_state_is_even_in_voltage():
    assert steady_state(-0.17, PARAMS) == steady_state(0.17, PARAMS)


def test_steady_state_ratio_band():
    assert _ratio_ss(0.15) == pytest.approx(2.0, rel=1e-6)
    assert 2.0 < _ratio_ss(0.175) < 3.0
    # v^2 scaling of electrowetting alone puts 200 mV at about 3.015
    assert 3.0 < _ratio_ss(0.2) < 3.02


def test_steady_state_past_pull_in_has_no_physical_root():
    soft_core = replace(PARAMS, k_ec=PARAMS.k_ec / 100, zeta_ec=PARAMS.zeta_ec / 100)
    steady_state(0.2, soft_core)
    with pytest.raises(NonphysicalRootError):
        steady_state(0.3, soft_core)


def test_steady_state_guards_large_voltage():
    with pytest.raises(InvalidInputError):
        steady_state(0.6, PARAMS)


def test_divergence_time_counts_from_resumed_start():
    start = MemcapacitorState(R=PARAMS.R0, W=0.9 * PARAMS.W0, t=5.0)
    train = PulseTrain.from_arrays([0.0], [10.0])
    with pytest.raises(IntegrationDivergedError) as excinfo:
        integrate_lanes([train], PARAMS, 10.0, initial=[start])
    assert excinfo.value.t == pytest.approx(15.0)
    assert excinfo.value.dt == 10.0
