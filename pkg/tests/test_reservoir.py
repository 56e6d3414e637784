from functools import partial

import numpy as np
import pytest

from memcap.config import load_params, substream
from memcap.core import normalized_capacitance, steady_state
from memcap.encoding import AmplitudeMap, BinaryLevels, encode_amplitude, encode_binary
from memcap.errors import InvalidInputError
from memcap.models import PulseTrain
from memcap.reservoir import (
    StateMatrix,
    build_state_matrix,
    column_names,
    integrate_features,
    make_device_bank,
    run_reservoir,
    run_reservoir_batch,
    select_virtual_nodes,
    window_end_nodes,
)

PARAMS = load_params()


def test_device_bank_is_seeded():
    a = make_device_bank(PARAMS, 5, 0.02, seed=4)
    b = make_device_bank(PARAMS, 5, 0.02, seed=4)
    c = make_device_bank(PARAMS, 5, 0.02, seed=5)
    assert a.devices == b.devices
    assert a.devices != c.devices
    assert len(a) == 5


def test_device_bank_spread_is_bounded():
    bank = make_device_bank(PARAMS, 50, 0.02, seed=1)
    r0 = np.array([d.R0 for d in bank]) / PARAMS.R0
    w0 = np.array([d.W0 for d in bank]) / PARAMS.W0
    assert np.all(np.abs(r0 - 1) <= 0.06 + 1e-12)
    assert np.all(np.abs(w0 - 1) <= 0.06 + 1e-12)
    assert r0.std() > 0


def test_device_bank_without_spread_repeats_base():
    bank = make_device_bank(PARAMS, 3, 0.0, seed=9)
    assert all(d == PARAMS for d in bank)


def test_device_bank_rejects_empty():
    with pytest.raises(InvalidInputError):
        make_device_bank(PARAMS, 0)


def test_zero_voltage_pulses_leave_device_at_rest():
    run = run_reservoir(PulseTrain.from_arrays([0.0] * 3, [0.1] * 3), PARAMS)
    np.testing.assert_array_equal(run.samples, [1.0, 1.0, 1.0])
    assert run.energy() == 0.0


def test_long_pulse_reaches_steady_state_ratio():
    run = run_reservoir(PulseTrain.from_arrays([0.2], [5.0]), PARAMS)
    R, W = steady_state(0.2, PARAMS)
    expected = normalized_capacitance(R, W, PARAMS)
    assert run.samples[-1] == pytest.approx(expected, rel=1e-3)
    assert run.samples[-1] > 2.0


def test_rest_segments_are_not_sampled():
    train = PulseTrain.from_arrays(
        [0.2, 0.0, 0.2], [0.5, 0.25, 0.5], [False, True, False]
    )
    run = run_reservoir(train, PARAMS)
    assert run.samples.size == 2
    assert run.samples[1] > run.samples[0]
    assert run.boundary_capacitance.size == 4


def test_noise_only_touches_samples():
    train = encode_binary([1, 0, 1, 1])
    clean = run_reservoir_batch([train], PARAMS)[0]
    noisy = run_reservoir_batch(
        [train], PARAMS, noise_sigma=0.01, rng=substream(0, "noise")
    )[0]
    assert not np.array_equal(clean.samples, noisy.samples)
    np.testing.assert_array_equal(clean.boundary_capacitance, noisy.boundary_capacitance)


def test_noise_requires_generator():
    with pytest.raises(InvalidInputError):
        run_reservoir_batch([encode_binary([1])], PARAMS, noise_sigma=0.01)


def test_select_virtual_nodes():
    seq = np.arange(40.0)
    np.testing.assert_array_equal(select_virtual_nodes(seq, 5), seq[4::5])
    np.testing.assert_array_equal(select_virtual_nodes(seq, 1), seq)
    assert select_virtual_nodes(seq, 5).size == 8


def test_select_virtual_nodes_requires_divisible_length():
    with pytest.raises(InvalidInputError):
        select_virtual_nodes(np.arange(40.0), 7)


def test_integrate_features_window_sums():
    feats = integrate_features(np.ones(4097), 60, period=0.01)
    assert feats.size == 68
    np.testing.assert_allclose(feats, 0.6)


def test_integrate_features_whole_sequence():
    seq = np.arange(10.0)
    np.testing.assert_allclose(integrate_features(seq, 10, 2.0), [90.0])


def test_integrate_features_rejects_bad_window():
    with pytest.raises(InvalidInputError):
        integrate_features(np.ones(10), 0)
    with pytest.raises(InvalidInputError):
        integrate_features(np.ones(10), 11)


def test_window_end_nodes():
    np.testing.assert_array_equal(window_end_nodes(np.arange(125.0), 60), [59.0, 119.0])


def test_column_names_are_device_major():
    assert column_names(2, 2, 1) == ["d0_e0_n0", "d0_e1_n0", "d1_e0_n0", "d1_e1_n0"]


def test_state_matrix_rejects_non_finite_values():
    with pytest.raises(InvalidInputError):
        StateMatrix(values=np.array([[1.0, np.nan]]), columns=["a", "b"])


def test_state_matrix_take():
    sm = StateMatrix(
        values=np.arange(6.0).reshape(3, 2),
        columns=["a", "b"],
        row_labels=np.array([0, 1, 2]),
        row_energy=np.array([1.0, 2.0, 3.0]),
    )
    sub = sm.take([2, 0])
    np.testing.assert_array_equal(sub.values, [[4.0, 5.0], [0.0, 1.0]])
    np.testing.assert_array_equal(sub.row_labels, [2, 0])
    np.testing.assert_array_equal(sub.row_energy, [3.0, 1.0])


def _binary_matrix(examples, **kwargs):
    bank = make_device_bank(PARAMS, 1, 0.0)
    spec = BinaryLevels(width_s=0.05)
    return build_state_matrix(
        examples,
        bank,
        [partial(encode_binary, spec=spec)],
        nodes=partial(select_virtual_nodes, every_k=2),
        **kwargs,
    )


def test_state_matrix_rows_follow_example_order():
    examples = [[1, 0, 1, 1], [0, 0, 1, 0], [1, 1, 1, 1]]
    X = _binary_matrix(examples)
    Y = _binary_matrix([examples[2], examples[0], examples[1]])
    assert X.shape == (3, 2)
    np.testing.assert_array_equal(Y.values, X.values[[2, 0, 1]])
    np.testing.assert_array_equal(Y.row_energy, X.row_energy[[2, 0, 1]])


def test_one_bit_difference_changes_features():
    X = _binary_matrix([[1, 0, 0, 0], [1, 1, 0, 0]])
    assert not np.array_equal(X.values[0], X.values[1])


def test_worker_processes_give_identical_features():
    examples = [[1, 0, 1, 1], [0, 0, 1, 0], [1, 1, 1, 1], [0, 1, 0, 1]]
    single = _binary_matrix(examples)
    pooled = _binary_matrix(examples, jobs=2)
    np.testing.assert_array_equal(single.values, pooled.values)


def _streaming(u, n_devices=2):
    bank = make_device_bank(PARAMS, n_devices, 0.02, seed=3)
    encoders = [
        partial(encode_amplitude, spec=AmplitudeMap(frame_s=w)) for w in (0.02, 0.04, 0.06)
    ]
    return build_state_matrix(u, bank, encoders, streaming=True)


def test_streaming_layout():
    u = substream(1, "series").uniform(0, 0.5, 12)
    X = _streaming(u)
    assert X.shape == (12, 6)
    assert X.columns[:3] == ["d0_e0_n0", "d0_e1_n0", "d0_e2_n0"]
    assert X.row_energy.shape == (12,)
    assert np.all(X.row_energy > 0)


def test_streaming_rows_are_causal():
    u = substream(2, "series").uniform(0, 0.5, 12)
    full = _streaming(u)
    head = _streaming(u[:5])
    np.testing.assert_array_equal(head.values, full.values[:5])
    np.testing.assert_array_equal(head.row_energy, full.row_energy[:5])


def test_build_state_matrix_requires_encoders():
    with pytest.raises(InvalidInputError):
        build_state_matrix([[1, 0]], make_device_bank(PARAMS, 1, 0.0), [])
