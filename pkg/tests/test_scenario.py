import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fasecure.scenario import (ApvState, InfeasibleScenario, ScenarioError, build_channels,
                               propagation_gain, random_layout, spread_layout,
                               steering_vector, uniform_layout)

from conftest import make_scenario


def test_broadside_steering_is_all_ones():
    d = np.array([0.0, 0.013, 0.04])
    assert np.allclose(steering_vector(d, np.pi / 2, 0.01), 1.0, atol=1e-15)


def test_zero_positions_give_all_ones():
    assert np.allclose(steering_vector(np.zeros(5), 0.3, 0.01), 1.0)


def test_quarter_wave_phase_at_sixty_degrees():
    a = steering_vector([0.0, 0.005], np.pi / 3, 0.01)
    assert np.allclose(a, [1.0, 1j], atol=1e-12)


def test_steering_rejects_bad_arguments():
    with pytest.raises(ValueError):
        steering_vector([0.0], np.nan, 0.01)
    with pytest.raises(ValueError):
        steering_vector([0.0], 0.5, 0.0)


@given(st.lists(st.floats(0, 0.1), min_size=1, max_size=12), st.floats(0.01, 3.13))
@settings(max_examples=60, deadline=None)
def test_steering_unit_modulus_and_mirror_conjugate(d, angle):
    a = steering_vector(d, angle, 0.01)
    assert np.allclose(np.abs(a), 1.0, atol=1e-12)
    assert np.allclose(steering_vector(d, np.pi - angle, 0.01), np.conj(a), atol=1e-9)


def test_propagation_gain_examples():
    assert propagation_gain(1.0, 1.0, 3.7) == 1.0
    assert propagation_gain(1e-4, 100.0, 2.8) == pytest.approx(10 ** -9.6, rel=1e-12)
    assert propagation_gain(1e-4, 1.0, 2.8) == pytest.approx(1e-4)
    with pytest.raises(ValueError):
        propagation_gain(1e-4, 0.0, 2.8)


def test_channel_norm_follows_gain_convention():
    s = make_scenario(gain_convention="amplitude")
    ch = build_channels(s, uniform_layout(s))
    delta = 10 ** -9.6
    assert np.allclose(np.linalg.norm(ch.user_channels, axis=1), delta * np.sqrt(8), rtol=1e-12)
    assert np.allclose(np.abs(ch.user_channels), delta)
    ch_p = build_channels(s.replace(gain_convention="power"), uniform_layout(s))
    assert np.allclose(np.abs(ch_p.eve_channel), np.sqrt(delta))


def test_single_broadside_user_channel_is_all_ones():
    s = make_scenario(M=3, K=1, angles=[90.0], reference_gain=1.0, user_distances=1.0,
                      gain_convention="amplitude")
    ch = build_channels(s, uniform_layout(s))
    assert np.allclose(ch.user_channels[0], 1.0)


def test_common_shift_is_a_global_phase_per_angle():
    s = make_scenario()
    d = uniform_layout(s).positions
    a = build_channels(s, d - 0.01)
    b = build_channels(s, d)
    for h0, h1 in zip(np.vstack([a.user_channels, a.eve_channels]),
                      np.vstack([b.user_channels, b.eve_channels])):
        ratio = h1 / h0
        assert np.allclose(ratio, ratio[0]) and abs(abs(ratio[0]) - 1) < 1e-12


def test_build_channels_deterministic():
    s = make_scenario()
    d = uniform_layout(s)
    a, b = build_channels(s, d), build_channels(s, d)
    assert np.array_equal(a.user_channels, b.user_channels)
    assert np.array_equal(a.eve_channels, b.eve_channels)


def test_apv_state_is_read_only_and_checks_constraints():
    d = ApvState([0.0, 0.006, 0.02])
    with pytest.raises(ValueError):
        d.positions[0] = 1.0
    assert d.is_feasible(0.1, 0.005)
    assert ApvState([0.0, 0.003]).violation(0.1, 0.005) == pytest.approx(0.002)
    assert ApvState([-0.001, 0.01]).violation(0.1, 0.005) == pytest.approx(0.001)


def test_scenario_validation():
    with pytest.raises(ScenarioError):
        make_scenario(K=2, angles=[30.0])
    with pytest.raises(ScenarioError):
        make_scenario(angles=[0.0, 90.0])
    with pytest.raises(ScenarioError):
        make_scenario(noise_eve=0.0)
    with pytest.raises(InfeasibleScenario):
        make_scenario(M=30)                      # 29 * L0 > L
    with pytest.raises(InfeasibleScenario):
        make_scenario(P_d=9.0).check_feasible()  # P_d > M * P_max
    make_scenario(P_d=8.0).check_feasible()


def test_eavesdroppers_default_to_the_target():
    s = make_scenario()
    assert s.eavesdropper_angles == (s.sensing_angle,)
    assert s.eavesdropper_distances == (s.target_distance,)
    s2 = make_scenario(eavesdropper_angles=np.deg2rad([60.0, 40.0]))
    assert s2.num_eves == 2 and build_channels(s2, uniform_layout(s2)).eve_channels.shape == (2, 8)


def test_layouts_are_feasible(rng):
    s = make_scenario()
    u = uniform_layout(s)
    assert u.is_feasible(s.aperture_length, s.min_spacing)
    assert np.allclose(np.diff(u.positions), 0.005)
    assert np.mean(u.positions) == pytest.approx(0.05)
    for _ in range(20):
        assert random_layout(s, rng).is_feasible(s.aperture_length, s.min_spacing)
    for step in (0.001, 0.01, 0.02):
        assert spread_layout(s, step).is_feasible(s.aperture_length, s.min_spacing)
