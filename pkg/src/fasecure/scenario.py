"""Problem instance, antenna positions and line-of-sight channels.

A linear fluid-antenna array of aperture ``L`` hosts ``M`` elements at
positions ``d``. Every link is pure LoS: the steering vector toward angle
``phi`` has entries ``exp(j * 2*pi/lambda * cos(phi) * d_m)`` and a link is
that vector scaled by a propagation gain.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class ScenarioError(ValueError):
    """Raised for invalid or infeasible problem instances."""


class InfeasibleScenario(ScenarioError):
    """Valid parameters whose constraint set is empty."""


GAIN_CONVENTIONS = ("amplitude", "power")


def steering_vector(d, angle, wavelength):
    """Unit-modulus array response ``a(d, angle)`` for positions ``d`` (m)."""
    if not np.isfinite(angle):
        raise ValueError(f"angle must be finite, got {angle}")
    if not wavelength > 0:
        raise ValueError(f"wavelength must be positive, got {wavelength}")
    d = np.asarray(getattr(d, "positions", d), dtype=float)
    rate = 2.0 * np.pi / wavelength * np.cos(angle)
    return np.exp(1j * rate * d)


def phase_rate(angle, wavelength):
    return 2.0 * np.pi / wavelength * np.cos(angle)


def propagation_gain(g0, distance, alpha):
    """Large-scale gain ``g0 * distance**(-alpha)``."""
    if distance <= 0:
        raise ValueError("distance must be positive (the gain is singular at 0)")
    if g0 <= 0 or alpha <= 0:
        raise ValueError("g0 and alpha must be positive")
    return g0 * distance ** (-alpha)


@dataclass(frozen=True)
class ApvState:
    """Antenna position vector, nondecreasing positions in metres."""

    positions: np.ndarray

    def __post_init__(self):
        pos = np.array(self.positions, dtype=float).reshape(-1)
        pos.setflags(write=False)
        object.__setattr__(self, "positions", pos)

    @property
    def M(self):
        return self.positions.size

    def violation(self, aperture, min_spacing):
        """Largest violation (m) of the box and spacing constraints."""
        d = self.positions
        worst = max(0.0, -d[0], d[-1] - aperture)
        if d.size > 1:
            worst = max(worst, float(np.max(min_spacing - np.diff(d))))
        return worst

    def is_feasible(self, aperture, min_spacing, tol=1e-9):
        return self.violation(aperture, min_spacing) <= tol


@dataclass(frozen=True)
class Scenario:
    """Immutable problem instance. Angles in radians, powers in watts."""

    num_antennas: int
    num_users: int
    aperture_length: float
    min_spacing: float
    wavelength: float
    user_angles: tuple
    sensing_angle: float
    user_distances: tuple
    target_distance: float
    reference_gain: float
    pathloss_exponent: float
    noise_user: tuple
    noise_eve: float
    power_budget: float
    probing_threshold: float
    eavesdropper_angles: tuple = None
    eavesdropper_distances: tuple = None
    gain_convention: str = "amplitude"

    def __post_init__(self):
        K = self.num_users
        set_ = lambda k, v: object.__setattr__(self, k, v)
        set_("user_angles", tuple(float(x) for x in np.atleast_1d(self.user_angles)))
        set_("user_distances", _broadcast(self.user_distances, K, "user_distances"))
        set_("noise_user", _broadcast(self.noise_user, K, "noise_user"))
        if self.eavesdropper_angles is None:
            set_("eavesdropper_angles", (float(self.sensing_angle),))
        else:
            set_("eavesdropper_angles",
                 tuple(float(x) for x in np.atleast_1d(self.eavesdropper_angles)))
        n_eve = len(self.eavesdropper_angles)
        if self.eavesdropper_distances is None:
            set_("eavesdropper_distances", (float(self.target_distance),) * n_eve)
        else:
            set_("eavesdropper_distances",
                 _broadcast(self.eavesdropper_distances, n_eve, "eavesdropper_distances"))
        self.validate()

    def validate(self):
        M, K = self.num_antennas, self.num_users
        if int(M) != M or M < 1:
            raise ScenarioError(f"num_antennas must be a positive integer, got {M}")
        if int(K) != K or K < 1:
            raise ScenarioError(f"num_users must be a positive integer, got {K}")
        if len(self.user_angles) != K:
            raise ScenarioError(f"expected {K} user angles, got {len(self.user_angles)}")
        if not (self.aperture_length > 0 and self.min_spacing > 0 and self.wavelength > 0):
            raise ScenarioError("aperture, min spacing and wavelength must be positive")
        if (M - 1) * self.min_spacing > self.aperture_length * (1 + 1e-12):
            raise InfeasibleScenario(
                f"(M-1)*L0 = {(M - 1) * self.min_spacing:g} m exceeds aperture "
                f"{self.aperture_length:g} m; no feasible antenna layout")
        angles = self.user_angles + (self.sensing_angle,) + self.eavesdropper_angles
        for a in angles:
            if not (0.0 < a < np.pi):
                raise ScenarioError(f"angle {a} rad outside (0, pi)")
        positive = dict(target_distance=self.target_distance,
                        reference_gain=self.reference_gain,
                        pathloss_exponent=self.pathloss_exponent,
                        noise_eve=self.noise_eve, power_budget=self.power_budget,
                        probing_threshold=self.probing_threshold)
        for name, val in positive.items():
            if not val > 0:
                raise ScenarioError(f"{name} must be strictly positive, got {val}")
        for name in ("user_distances", "noise_user", "eavesdropper_distances"):
            if min(getattr(self, name)) <= 0:
                raise ScenarioError(f"{name} must be strictly positive")
        if self.gain_convention not in GAIN_CONVENTIONS:
            raise ScenarioError(f"gain_convention must be one of {GAIN_CONVENTIONS}")

    def check_feasible(self):
        """Raise if the probing threshold cannot be met at full power."""
        limit = self.num_antennas * self.power_budget
        if self.probing_threshold > limit:
            raise InfeasibleScenario(
                f"probing threshold {self.probing_threshold:g} W exceeds "
                f"M*P_max = {limit:g} W; constraint C_d is unsatisfiable")

    @property
    def M(self):
        return self.num_antennas

    @property
    def K(self):
        return self.num_users

    @property
    def num_eves(self):
        return len(self.eavesdropper_angles)

    def _amplitude(self, distance):
        gain = propagation_gain(self.reference_gain, distance, self.pathloss_exponent)
        return gain if self.gain_convention == "amplitude" else np.sqrt(gain)

    @property
    def user_gains(self):
        return np.array([self._amplitude(x) for x in self.user_distances])

    @property
    def eve_gains(self):
        return np.array([self._amplitude(x) for x in self.eavesdropper_distances])

    def replace(self, **changes):
        from dataclasses import replace
        return replace(self, **changes)


def _broadcast(value, n, name):
    arr = np.atleast_1d(np.asarray(value, dtype=float))
    if arr.size == 1:
        arr = np.repeat(arr, n)
    if arr.size != n:
        raise ScenarioError(f"{name}: expected {n} entries, got {arr.size}")
    return tuple(float(x) for x in arr)


@dataclass(frozen=True)
class ChannelSet:
    """LoS channels of all users and eavesdroppers for one antenna layout.

    ``user_channels`` is (K, M); ``eve_channels`` is (E, M) with row 0 the
    sensing target. Gains are the linear amplitudes applied to the steering
    vectors.
    """

    positions: np.ndarray
    user_channels: np.ndarray
    eve_channels: np.ndarray
    user_rates: np.ndarray
    eve_rates: np.ndarray
    user_gains: np.ndarray
    eve_gains: np.ndarray
    wavelength: float
    sensing_angle: float
    noise_user: np.ndarray = field(repr=False, default=None)
    noise_eve: float = 0.0

    @property
    def eve_channel(self):
        return self.eve_channels[0]

    @property
    def M(self):
        return self.positions.size

    @property
    def K(self):
        return self.user_channels.shape[0]

    def steering_toward_target(self):
        return steering_vector(self.positions, self.sensing_angle, self.wavelength)


def build_channels(s: Scenario, d) -> ChannelSet:
    """Channels ``h_k = delta_k a(d, phi_k)`` and ``h_e = delta_e a(d, phi_e)``."""
    pos = np.asarray(getattr(d, "positions", d), dtype=float)
    if pos.size != s.num_antennas:
        raise ScenarioError(f"expected {s.num_antennas} positions, got {pos.size}")
    ug, eg = s.user_gains, s.eve_gains
    H = np.array([ug[k] * steering_vector(pos, phi, s.wavelength)
                  for k, phi in enumerate(s.user_angles)])
    He = np.array([eg[e] * steering_vector(pos, phi, s.wavelength)
                   for e, phi in enumerate(s.eavesdropper_angles)])
    return ChannelSet(
        positions=pos.copy(),
        user_channels=H,
        eve_channels=He,
        user_rates=np.array([phase_rate(p, s.wavelength) for p in s.user_angles]),
        eve_rates=np.array([phase_rate(p, s.wavelength) for p in s.eavesdropper_angles]),
        user_gains=ug,
        eve_gains=eg,
        wavelength=s.wavelength,
        sensing_angle=s.sensing_angle,
        noise_user=np.asarray(s.noise_user, dtype=float),
        noise_eve=float(s.noise_eve),
    )


def uniform_layout(s: Scenario) -> ApvState:
    """Fixed-position array: half-wavelength (at least L0) spacing, centred."""
    step = max(s.wavelength / 2.0, s.min_spacing)
    M = s.num_antennas
    if (M - 1) * step > s.aperture_length:
        step = s.min_spacing
    offsets = (np.arange(M) - (M - 1) / 2.0) * step
    return ApvState(s.aperture_length / 2.0 + offsets)


def spread_layout(s: Scenario, step) -> ApvState:
    """Centred uniform array with element spacing ``step`` (clipped to fit)."""
    M = s.num_antennas
    if M > 1:
        step = min(max(step, s.min_spacing), s.aperture_length / (M - 1))
    offsets = (np.arange(M) - (M - 1) / 2.0) * step
    d = np.clip(s.aperture_length / 2.0 + offsets, 0.0, s.aperture_length)
    return ApvState(d)


def random_layout(s: Scenario, rng) -> ApvState:
    """Uniformly random feasible layout (slack spread by sorted uniforms)."""
    M = s.num_antennas
    slack = s.aperture_length - (M - 1) * s.min_spacing
    gaps = np.sort(rng.uniform(0.0, slack, size=M))
    return ApvState(gaps + np.arange(M) * s.min_spacing)
