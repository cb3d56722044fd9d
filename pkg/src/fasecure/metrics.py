"""SINRs, secrecy rates, probing power and beampatterns.

Beamformers are passed around as a complex ``(K, M)`` array ``W`` whose row
``k`` is the precoder of user ``k``.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np

from .scenario import steering_vector


def _responses(h, W):
    """``h^H w_i`` for every stream ``i``."""
    return np.asarray(W) @ np.conj(h)


def user_sinr(ch, W, k, noise):
    y = _responses(ch.user_channels[k], W)
    p = np.abs(y) ** 2
    return p[k] / (p.sum() - p[k] + noise)


def eve_sinr(ch, W, k, noise, eve=0):
    y = _responses(ch.eve_channels[eve], W)
    p = np.abs(y) ** 2
    return p[k] / (p.sum() - p[k] + noise)


def user_sinrs(ch, W):
    P = np.abs(np.conj(ch.user_channels) @ np.asarray(W).T) ** 2   # P[k, i] = |h_k^H w_i|^2
    sig = np.diag(P)
    return sig / (P.sum(axis=1) - sig + ch.noise_user)


def eve_sinrs(ch, W):
    """Eavesdropping SINR per (eve, stream), shape (E, K)."""
    P = np.abs(np.conj(ch.eve_channels) @ np.asarray(W).T) ** 2   # P[e, k]
    return P / (P.sum(axis=1, keepdims=True) - P + ch.noise_eve)


def secrecy_rate(gamma_user, gamma_eve):
    """``[log2(1+g_user) - log2(1+g_eve)]^+`` in bits/s/Hz."""
    if gamma_user < 0 or gamma_eve < 0:
        raise ValueError("SINRs must be nonnegative")
    return max(0.0, float(np.log2(1.0 + gamma_user) - np.log2(1.0 + gamma_eve)))


def secrecy_rates(ch, W, clamp=True):
    g = user_sinrs(ch, W)
    ge = eve_sinrs(ch, W).max(axis=0)
    r = np.log2(1.0 + g) - np.log2(1.0 + ge)
    return np.maximum(r, 0.0) if clamp else r


def probing_power(d, W, angle, wavelength):
    """``a^H R_w a = sum_k |a^H w_k|^2`` toward ``angle``."""
    a = steering_vector(d, angle, wavelength)
    return float(np.sum(np.abs(np.asarray(W) @ np.conj(a)) ** 2))


def beampattern(d, W, wavelength, angle_grid):
    grid = np.atleast_1d(np.asarray(angle_grid, dtype=float))
    if grid.size == 0:
        raise ValueError("angle grid must be nonempty")
    return np.array([probing_power(d, W, t, wavelength) for t in grid])


def total_power(W):
    return float(np.sum(np.abs(W) ** 2))


@dataclass
class MetricsReport:
    user_sinrs: np.ndarray
    eve_sinrs: np.ndarray
    secrecy_rates: np.ndarray
    sum_secrecy: float
    probing_power: float
    total_power: float

    CSV_SCHEMA = "fasecure.metrics/v1"

    def csv_header(self):
        K = len(self.secrecy_rates)
        return (["seed", "iteration", "sum_secrecy"]
                + [f"secrecy_{k + 1}" for k in range(K)]
                + ["probing_power", "total_power"])

    def csv_row(self, seed, iteration):
        return ([seed, iteration, self.sum_secrecy] + list(map(float, self.secrecy_rates))
                + [self.probing_power, self.total_power])

    def to_dict(self):
        out = asdict(self)
        for key, val in out.items():
            if isinstance(val, np.ndarray):
                out[key] = val.tolist()
        return out


def evaluate(ch, W) -> MetricsReport:
    rates = secrecy_rates(ch, W)
    return MetricsReport(
        user_sinrs=user_sinrs(ch, W),
        eve_sinrs=eve_sinrs(ch, W),
        secrecy_rates=rates,
        sum_secrecy=float(rates.sum()),
        probing_power=probing_power(ch.positions, W, ch.sensing_angle, ch.wavelength),
        total_power=total_power(W),
    )
