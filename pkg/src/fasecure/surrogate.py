"""Block-successive upper bound of the negative secrecy sum rate.

The objective minimised over ``(W, d)`` is

    f = -sum_k ln(1 + gamma_k) + sum_e sum_k ln(1 + gamma_{e,k})

and ``F(W, d; aux)`` is an upper bound of ``f`` that is tight when the
auxiliaries are refreshed at the current point. Its user part is the
weighted-MMSE form

    F_user = sum_k [ -2 Re{b_k^H w_k} + w_k^H A w_k
                     + rho_k (1 + |u_k|^2 sigma_k^2) - ln rho_k - 1 ],

with ``A = sum_k rho_k |u_k|^2 h_k h_k^H`` and ``b_k = rho_k u_k h_k``.
For each eavesdropper, ``ln(1+gamma_{e,k}) = ln(T + s2) - ln(I_k + s2)``
where ``T`` is the total received power and ``I_k`` the interference seen
on stream ``k``. The first log is bounded by its tangent (weight
``lam = 1/(T + s2)``), the second by a scalar weighted-MMSE bound on the
interference projected onto its current direction. Both bounds are
quadratic in ``W`` and keep every stream decoupled:

    F_eve = sum_i w_i^H (A_e + E - E_i) w_i - 2 Re{g_i^H w_i} + const,

with ``A_e = K lam h_e h_e^H``, ``E_k = kappa_k h_e h_e^H`` and
``g_i = (K-1)/s2 * x_i h_e`` where ``x_i`` is the current eavesdropper
response of stream ``i``. The eavesdropper parameters are stored through
``xi_k = j x_k / (T + s2)`` and ``lam``; ``eta_k = 1 + gamma_{e,k}``.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .scenario import build_channels


class DegenerateAuxiliaryError(ArithmeticError):
    pass


@dataclass(frozen=True)
class SurrogateState:
    u: np.ndarray            # (K,) complex
    rho: np.ndarray          # (K,) > 0
    xi: np.ndarray           # (E, K) complex
    eta: np.ndarray          # (E, K) > 0
    eve_power_weight: np.ndarray   # (E,) > 0, tangent weight 1/(T + s2)
    noise_user: np.ndarray
    noise_eve: float
    positions: np.ndarray = None
    A: np.ndarray = None     # (M, M)
    A_eve: np.ndarray = None  # (M, M)
    E: np.ndarray = None     # (K, M, M), summed over eavesdroppers
    b: np.ndarray = None     # (K, M)
    g: np.ndarray = None     # (K, M)
    penalty_weight: float = 1.0
    E_sum: np.ndarray = None  # sum_k E_k
    constant: float = None   # W-independent part of F
    links: tuple = None      # link_coefficients output for these auxiliaries

    @property
    def K(self):
        return self.u.size

    @property
    def E_total(self):
        return self.E.sum(axis=0) if self.E_sum is None else self.E_sum


def _eve_coefficients(xi, lam, noise_eve, K):
    """Per-eavesdropper quadratic weights, linear weights and constant."""
    x_hat = -1j * xi / lam[:, None]                  # implied responses
    p = np.abs(x_hat) ** 2
    I0 = p.sum(axis=1, keepdims=True) - p            # (E, K)
    s2 = noise_eve
    kappa = I0 / (s2 * (I0 + s2))
    quad = K * lam[:, None] + kappa.sum(axis=1, keepdims=True) - kappa
    lin = (K - 1) * x_hat / s2
    const = (K * (-np.log(lam) + lam * s2 - 1.0)
             + np.sum(I0 / s2 + I0 / (I0 + s2) - np.log(I0 + s2), axis=1))
    return quad, lin, kappa, float(const.sum())


def _user_constant(st):
    return float(np.sum(st.rho * (1.0 + np.abs(st.u) ** 2 * st.noise_user)
                        - np.log(st.rho) - 1.0))


def link_coefficients(st, ch):
    """Coefficients of ``F`` as a sum over links.

    Returns ``rates, gains, alpha, beta, const`` so that

        F(d) = const + sum_l sum_i gain_l^2 alpha_li |a_l^H w_i|^2
                     - 2 gain_l Re{conj(beta_li) a_l^H w_i}

    where ``a_l`` is the steering vector with phase rate ``rates[l]``.
    """
    if st.links is not None:
        return st.links
    return _link_coefficients(st, ch)


def _link_coefficients(st, ch):
    K = st.K
    eye = np.eye(K)
    alpha_u = np.repeat((st.rho * np.abs(st.u) ** 2)[:, None], K, axis=1)
    beta_u = eye * (st.rho * st.u)[:, None]
    quad, lin, _, c_eve = _eve_coefficients(st.xi, st.eve_power_weight, st.noise_eve, K)
    rates = np.concatenate([ch.user_rates, ch.eve_rates])
    gains = np.concatenate([ch.user_gains, ch.eve_gains])
    alpha = np.vstack([alpha_u, quad])
    beta = np.vstack([beta_u, lin])
    return rates, gains, alpha, beta, _user_constant(st) + c_eve


def rebuild_caches(ch, st) -> SurrogateState:
    """Recompute ``A, A_e, E_k, b_k, g_k`` for the channels' positions."""
    H, He = ch.user_channels, ch.eve_channels
    K, M = H.shape
    w_user = st.rho * np.abs(st.u) ** 2
    A = (H.T * w_user) @ np.conj(H)
    b = (st.rho * st.u)[:, None] * H
    quad, lin, kappa, _ = _eve_coefficients(st.xi, st.eve_power_weight, st.noise_eve, K)
    A_eve = np.zeros((M, M), dtype=complex)
    E = np.zeros((K, M, M), dtype=complex)
    g = np.zeros((K, M), dtype=complex)
    for e in range(He.shape[0]):
        outer = np.outer(He[e], np.conj(He[e]))
        A_eve += K * st.eve_power_weight[e] * outer
        E += kappa[e][:, None, None] * outer
        g += lin[e][:, None] * He[e]
    bare = replace(st, links=None)
    links = _link_coefficients(bare, ch)
    return replace(st, positions=np.array(ch.positions), A=A, A_eve=A_eve, E=E, b=b, g=g,
                   E_sum=E.sum(axis=0), constant=links[4], links=links)


def update_auxiliaries(ch, W, st=None, penalty_weight=None) -> SurrogateState:
    """Closed-form minimisers of ``F`` over ``(u, rho, xi, eta, lam)``."""
    W = np.asarray(W)
    Yu = np.conj(ch.user_channels) @ W.T            # Yu[k, i] = h_k^H w_i
    s = np.diag(Yu).copy()
    Tu = np.sum(np.abs(Yu) ** 2, axis=1)
    u = s / (Tu + ch.noise_user)
    den = 1.0 - np.conj(u) * s
    if np.any(den.real <= 0):
        raise DegenerateAuxiliaryError("rho denominator is not positive")
    rho = 1.0 / den.real

    Ye = np.conj(ch.eve_channels) @ W.T             # Ye[e, k] = h_e^H w_k
    Te = np.sum(np.abs(Ye) ** 2, axis=1, keepdims=True) + ch.noise_eve
    xi = 1j * Ye / Te
    den_e = 1.0 - 1j * np.conj(xi) * Ye
    if np.any(den_e.real <= 0):
        raise DegenerateAuxiliaryError("eta denominator is not positive")
    eta = 1.0 / den_e.real
    lam = 1.0 / Te[:, 0]
    if penalty_weight is None:
        penalty_weight = st.penalty_weight if st is not None else 1.0
    new = SurrogateState(u=u, rho=rho, xi=xi, eta=eta, eve_power_weight=lam,
                         noise_user=np.asarray(ch.noise_user, dtype=float),
                         noise_eve=float(ch.noise_eve), penalty_weight=penalty_weight)
    return rebuild_caches(ch, new)


def _check_caches(ch, st):
    if st.A is None or not np.array_equal(st.positions, ch.positions):
        raise ValueError("surrogate caches are stale; call rebuild_caches first")


def eval_surrogate(ch, W, st) -> float:
    """Value of ``F`` from the cached matrices."""
    _check_caches(ch, st)
    if np.any(st.rho <= 0) or np.any(st.eta <= 0) or np.any(st.eve_power_weight <= 0):
        raise ValueError("auxiliary weights must be strictly positive")
    W = np.asarray(W)
    H = st.A + st.A_eve + st.E_total
    Wc = np.conj(W)
    quad = np.einsum("ki,ij,kj->", Wc, H, W) - np.einsum("ki,kij,kj->", Wc, st.E, W)
    val = quad - 2.0 * np.sum(np.conj(st.b + st.g) * W).real
    if abs(val.imag) > 1e-10 * max(1.0, abs(val.real)):
        raise ArithmeticError(f"surrogate has imaginary residual {val.imag:g}")
    const = st.constant
    if const is None:
        const = _user_constant(st) + _eve_coefficients(st.xi, st.eve_power_weight,
                                                       st.noise_eve, st.K)[3]
    return float(val.real) + const


def _link_responses(d, W, rates):
    phases = np.exp(-1j * np.outer(rates, d))       # (L, M): conj steering
    return phases, phases @ np.asarray(W).T         # Y[l, i] = a_l^H w_i


def surrogate_at(d, W, st, ch):
    """``F`` evaluated at positions ``d`` without building matrices."""
    rates, gains, alpha, beta, const = link_coefficients(st, ch)
    _, Y = _link_responses(np.asarray(d, dtype=float), W, rates)
    quad = np.sum((gains ** 2)[:, None] * alpha * np.abs(Y) ** 2)
    lin = np.sum(gains[:, None] * np.real(np.conj(beta) * Y))
    return float(const + quad - 2.0 * lin)


def true_objective(ch, W):
    """``-sum_k ln(1+gamma_k) + sum_{e,k} ln(1+gamma_{e,k})`` (nats)."""
    from .metrics import user_sinrs, eve_sinrs
    return float(-np.sum(np.log1p(user_sinrs(ch, W))) + np.sum(np.log1p(eve_sinrs(ch, W))))


def initial_state(s, d, W, penalty_weight=1.0):
    ch = build_channels(s, d)
    return ch, update_auxiliaries(ch, W, penalty_weight=penalty_weight)
