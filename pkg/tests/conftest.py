import numpy as np
import pytest

from fasecure.scenario import Scenario

TWO_USER = (100.0, 130.0)
EIGHT_USER = (10.0, 30.0, 80.0, 90.0, 120.0, 130.0, 150.0, 170.0)


def make_scenario(M=8, K=2, angles=None, P_d=3.0, P_max=1.0, gain_convention="power", **kw):
    """Section-IV style instance (powers in W, angles given in degrees)."""
    if angles is None:
        angles = TWO_USER if K == 2 else EIGHT_USER if K == 8 else np.linspace(20, 160, K)
    params = dict(num_antennas=M, num_users=K, aperture_length=0.1, min_spacing=0.005,
                  wavelength=0.01, user_angles=np.deg2rad(angles),
                  sensing_angle=np.deg2rad(60.0), user_distances=100.0, target_distance=100.0,
                  reference_gain=1e-4, pathloss_exponent=2.8, noise_user=1e-11,
                  noise_eve=1e-11, power_budget=P_max, probing_threshold=P_d,
                  gain_convention=gain_convention)
    params.update(kw)
    return Scenario(**params)


def random_beamformer(rng, K, M, power=1.0):
    W = rng.standard_normal((K, M)) + 1j * rng.standard_normal((K, M))
    return W * np.sqrt(power / np.sum(np.abs(W) ** 2))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda x: int(x.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
