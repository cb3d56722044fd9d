"""Antenna-position block: extrapolated projected gradient.

The gradient of the surrogate with respect to the positions is assembled
analytically. Each projection step works on a concave quadratic minorant of
the probing power, so the projected set is convex and every accepted point
keeps the true probing power above threshold.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import isotonic_regression

from .qcqp import solve_qcqp
from .scenario import ApvState
from .surrogate import link_coefficients, surrogate_at

log = logging.getLogger(__name__)


class ProjectionInfeasible(ArithmeticError):
    """The relaxed probing set does not meet the position polyhedron."""


# -- gradient ---------------------------------------------------------------

def apv_gradient(ch, W, st, d=None):
    """Gradient of ``F`` with respect to the antenna positions.

    For every link ``l`` (users, then eavesdroppers) with steering phase
    rate ``v_l`` the surrogate carries the power terms ``alpha |a^H w_i|^2``
    and the linear terms ``-2 Re{conj(beta) a^H w_i}``; differentiating
    ``a^H w_i = sum_m exp(-j v_l d_m) w_im`` gives the sum below.
    """
    d = ch.positions if d is None else np.asarray(getattr(d, "positions", d), dtype=float)
    W = np.asarray(W)
    rates, gains, alpha, beta, _ = link_coefficients(st, ch)
    phases = np.exp(-1j * np.outer(rates, d))            # (L, M)
    Y = phases @ W.T                                     # (L, K)
    coef = (gains ** 2)[:, None] * alpha * np.conj(Y) - gains[:, None] * np.conj(beta)
    inner = coef @ W                                     # (L, M)
    return 2.0 * np.real(-1j * np.sum(rates[:, None] * phases * inner, axis=0))


# -- Taylor minorant of the probing power ----------------------------------

@dataclass(frozen=True)
class TaylorBound:
    """``g(d) = d^T Q d - 2 d^T p + c``, a global lower bound on the probing
    power that is exact at ``center``."""

    Q: np.ndarray
    p: np.ndarray
    c: float
    center: np.ndarray

    def __call__(self, d):
        d = np.asarray(getattr(d, "positions", d), dtype=float)
        return float(d @ self.Q @ d - 2.0 * d @ self.p + self.c)

    def gradient(self, d):
        d = np.asarray(d, dtype=float)
        return 2.0 * self.Q @ d - 2.0 * self.p


def build_taylor_bound(W, center, angle, wavelength):
    """Second-order expansion of every ``cos`` term of ``a^H R_w a``.

    With ``R = sum_k w_k w_k^H`` the probing power is
    ``sum_{m,n} |R_mn| cos(v (d_n - d_m) + arg R_mn)``; since ``cos'' >= -1``
    the quadratic expansion at ``center`` never exceeds it.
    """
    W = np.asarray(W)
    dc = np.asarray(getattr(center, "positions", center), dtype=float)
    v = 2.0 * np.pi / wavelength * np.cos(angle)
    R = W.T @ np.conj(W)                                  # sum_k w_k w_k^H
    mag = np.abs(R)
    phi = v * (dc[None, :] - dc[:, None]) + np.angle(R)   # phase of term (m, n)
    lap = np.diag(mag.sum(axis=1)) - mag
    Q = -v ** 2 * lap
    S = mag * np.sin(phi)
    # coefficient of (d_l - dc_l): -v * (sum_m S_ml - sum_n S_ln)
    lin = -v * (S.sum(axis=0) - S.sum(axis=1))
    c0 = float(np.sum(mag * np.cos(phi)))
    p = Q @ dc - 0.5 * lin
    c = float(dc @ Q @ dc - lin @ dc + c0)
    return TaylorBound(Q=Q, p=p, c=c, center=dc)


# -- projection -------------------------------------------------------------

def chain_constraints(M, aperture, min_spacing):
    """Rows of ``G d <= h`` for ``0 <= d_1``, ``d_M <= L`` and spacing."""
    G = np.zeros((M + 1, M))
    h = np.zeros(M + 1)
    G[0, 0] = -1.0
    G[1, -1] = 1.0
    h[1] = aperture
    for m in range(1, M):
        G[m + 1, m - 1] = 1.0
        G[m + 1, m] = -1.0
        h[m + 1] = -min_spacing
    return G, h


def project_chain(kappa, aperture, min_spacing):
    """Exact projection onto the box/spacing polyhedron.

    Subtracting ``(m-1) L0`` turns the spacing rows into monotonicity, so
    the projection is a clipped isotonic regression.
    """
    kappa = np.asarray(kappa, dtype=float)
    M = kappa.size
    offs = np.arange(M) * min_spacing
    upper = aperture - (M - 1) * min_spacing
    if upper < -1e-15:
        raise ProjectionInfeasible("(M-1) L0 exceeds the aperture")
    e = isotonic_regression(kappa - offs).x if M > 1 else kappa - offs
    return np.clip(e, 0.0, max(upper, 0.0)) + offs


@dataclass
class ProjectionInfo:
    used_qcqp: bool = False
    iterations: int = 0
    kkt_residual: float = 0.0
    converged: bool = True


def project_feasible(kappa, tb, s, threshold=None, info=None):
    """Nearest point to ``kappa`` in the polyhedron intersected with
    ``{g(d) >= P_d}``. Pass ``tb=None`` to drop the probing row."""
    threshold = s.probing_threshold if threshold is None else threshold
    L, L0, M = s.aperture_length, s.min_spacing, s.num_antennas
    info = info if info is not None else ProjectionInfo()
    base = project_chain(kappa, L, L0)
    if tb is None or tb(base) >= threshold * (1 - 1e-12):
        return ApvState(base)
    # the centre is normally feasible up to round-off; only a clear
    # violation needs the (costlier) check that the relaxed set is nonempty
    if (tb(tb.center) < threshold * (1 - 1e-9)
            or not ApvState(tb.center).is_feasible(L, L0)):
        best = _max_minorant(tb, s)
        if tb(best) < threshold * (1 - 1e-12):
            raise ProjectionInfeasible(
                f"minorant peaks at {tb(best):.6g} W < P_d = {threshold:.6g} W")
    # scaled variables y = d / L keep the IPM well conditioned
    G, h = chain_constraints(M, L, L0)
    quad = (-2.0 * L ** 2 * tb.Q / threshold, 2.0 * L * tb.p / threshold,
            (threshold - tb.c) / threshold)
    res = solve_qcqp(np.eye(M), -np.asarray(kappa) / L, G, h / L, [quad], x0=base / L)
    info.used_qcqp = True
    info.iterations = res.iterations
    info.kkt_residual = res.kkt_residual
    info.converged = res.converged
    d = _polish(res.x * L, L, L0)
    if res.converged:
        return ApvState(d)
    # Slater's condition can fail when the centre sits on the probing boundary
    # in a corner of the polyhedron; fall back to the feasible segment point
    fallback = _segment_point(tb, base, threshold, L, L0)
    if tb(d) >= threshold * (1 - 1e-12) and ApvState(d).is_feasible(L, L0) \
            and np.linalg.norm(d - kappa) < np.linalg.norm(fallback - kappa):
        return ApvState(d)
    log.debug("QCQP projection stopped at KKT residual %.3g; using segment point",
              res.kkt_residual)
    return ApvState(fallback)


def _segment_point(tb, base, threshold, L, L0):
    """Point of ``[centre, base]`` closest to ``base`` with ``tb >= threshold``.

    Both ends lie in the convex polyhedron and ``tb`` is concave, so the
    feasible part of the segment is an interval containing the centre.
    """
    c = project_chain(tb.center, L, L0)
    u = base - c
    # tb(c + t u) = a t^2 + b t + tb(c), with a <= 0
    a = float(u @ tb.Q @ u)
    b = float(2.0 * (c @ tb.Q @ u - tb.p @ u))
    c0 = tb(c) - threshold
    if c0 < 0:
        return c
    if a < 0:
        disc = b * b - 4.0 * a * c0
        t = (-b - np.sqrt(max(disc, 0.0))) / (2.0 * a)
    else:
        t = -c0 / b if b < 0 else 1.0
    t = float(np.clip(t, 0.0, 1.0))
    # shrink by a hair so round-off never lands outside
    while t > 0 and tb(c + t * u) < threshold:
        t = t * (1 - 1e-9) - 1e-15
    return c + max(t, 0.0) * u


def _polish(d, L, L0):
    # strip round-off level violations of the linear rows
    d = np.array(d)
    d[0] = max(d[0], 0.0)
    for m in range(1, d.size):
        d[m] = max(d[m], d[m - 1] + L0)
    if d[-1] > L:
        d[-1] = L
        for m in range(d.size - 2, -1, -1):
            d[m] = min(d[m], d[m + 1] - L0)
    return d


def _max_minorant(tb, s):
    """Maximiser of the concave minorant over the polyhedron."""
    L, L0, M = s.aperture_length, s.min_spacing, s.num_antennas
    G, h = chain_constraints(M, L, L0)
    # maximise g(Ly)  <=>  minimise -L^2 y^T Q y + 2 L y^T p
    scale = max(np.max(np.abs(tb.Q)) * L ** 2, 1e-300)
    H = -2.0 * L ** 2 * tb.Q / scale + 1e-12 * np.eye(M)
    f = 2.0 * L * tb.p / scale
    x0 = project_chain(tb.center, L, L0) / L
    res = solve_qcqp(H, f, G, h / L, x0=x0)
    return _polish(res.x * L, L, L0)


# -- extrapolated projected gradient ---------------------------------------

@dataclass
class EpgState:
    d: np.ndarray                 # last projected iterate
    extrapolated: np.ndarray      # point where the gradient is taken
    momentum: float = 0.0         # varsigma_i, starts at 0
    coefficient: float = 0.0      # extrapolation weight eta_i
    step: float = None            # last accepted step size
    stalled: bool = False
    restarted: bool = False

    @classmethod
    def start(cls, d):
        d = np.array(getattr(d, "positions", d), dtype=float)
        return cls(d=d, extrapolated=d.copy())


def next_momentum(varsigma):
    nxt = (1.0 + np.sqrt(1.0 + 4.0 * varsigma ** 2)) / 2.0
    return nxt, (nxt - 1.0) / nxt


@dataclass
class EpgOptions:
    max_inner: int = 100
    tol: float = 1e-7             # on ||d_{i+1} - d_i||_inf / L
    initial_step: float = 1e-2    # first trial move, as a fraction of L
    max_halvings: int = 30


def _trial(point, grad, step, tb, s, f_ref, W, st, ch):
    cand = project_feasible(point - step * grad, tb, s).positions
    return cand, surrogate_at(cand, W, st, ch)


def epg_step(state, ch, W, st, s, opts=None):
    """One accelerated projected-gradient step with backtracking.

    A trial point is accepted once it does not increase ``F`` relative to
    the current iterate. If no step size works from the extrapolated
    point, momentum is reset and the search is repeated from the iterate;
    if that fails too the iterate is kept and ``stalled`` is set.
    """
    opts = opts or EpgOptions()
    L = s.aperture_length
    f_cur = surrogate_at(state.d, W, st, ch)
    tb = build_taylor_bound(W, state.d, s.sensing_angle, s.wavelength)
    new = None
    restarted = False
    for origin in (state.extrapolated, state.d):
        grad = apv_gradient(ch, W, st, origin)
        gmax = float(np.max(np.abs(grad)))
        if gmax == 0.0:
            step = state.step
            cand = project_feasible(origin, tb, s).positions
            if surrogate_at(cand, W, st, ch) <= f_cur:
                new = cand
                break
            restarted = True
            continue
        alpha0 = opts.initial_step * L / gmax
        step = alpha0 if state.step is None else min(2.0 * state.step, alpha0)
        for _ in range(opts.max_halvings):
            try:
                cand, f_new = _trial(origin, grad, step, tb, s, f_cur, W, st, ch)
            except ArithmeticError:
                step *= 0.5
                continue
            if f_new <= f_cur:
                new = cand
                break
            step *= 0.5
        if new is not None:
            break
        restarted = True
    varsigma, coeff = next_momentum(state.momentum)
    if new is None:
        return EpgState(d=state.d.copy(), extrapolated=state.d.copy(), momentum=0.0,
                        coefficient=0.0, step=state.step, stalled=True, restarted=True)
    if restarted:
        varsigma, coeff = 0.0, 0.0
    extrap = new + coeff * (new - state.d)
    return EpgState(d=new, extrapolated=extrap, momentum=varsigma, coefficient=coeff,
                    step=step, stalled=False, restarted=restarted)


def solve_apv_block(ch, W, st, d_init, s, opts=None):
    """Iterate ``epg_step`` until the positions settle.

    Returns ``(ApvState, trace, info)`` with the surrogate value per step.
    """
    opts = opts or EpgOptions()
    state = EpgState.start(d_init)
    trace = [surrogate_at(state.d, W, st, ch)]
    stalls = 0
    it = 0
    for it in range(1, opts.max_inner + 1):
        prev = state.d
        state = epg_step(state, ch, W, st, s, opts)
        trace.append(surrogate_at(state.d, W, st, ch))
        if state.stalled:
            stalls += 1
            break
        if np.max(np.abs(state.d - prev)) < opts.tol * s.aperture_length:
            break
    return ApvState(state.d), trace, {"iterations": it, "stalled": stalls > 0}
