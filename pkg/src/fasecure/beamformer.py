"""Beamformer block: proximal distance iterations with closed-form steps.

The constrained subproblem ``min_W F(W)`` over the power ball ``C_BS`` and
the probing set ``C_d`` is replaced by the penalised objective

    F(W) + mu * (dist^2(W, C_BS) + dist^2(W, C_d)).

Each iteration majorises the squared distances at the current point by the
squared distance to the current projections and minimises the result in
closed form, one Hermitian solve per user.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .metrics import probing_power, total_power
from .scenario import steering_vector
from .surrogate import eval_surrogate

log = logging.getLogger(__name__)


class DegenerateProjectionError(ArithmeticError):
    """Probing projection with zero beam gain toward the target."""


class NumericalError(ArithmeticError):
    pass


def project_power(W, power_budget):
    """Euclidean projection onto ``sum_k ||w_k||^2 <= P_max``."""
    W = np.asarray(W)
    p = total_power(W)
    if p <= power_budget:
        return W.copy()
    return W * np.sqrt(power_budget / p)


def project_probing(W, d, angle, wavelength, threshold, eps=None):
    """Euclidean projection onto ``sum_k |a^H w_k|^2 >= P_d``.

    Only the components along ``a`` change: ``w_k <- (I - mu a a^H)^{-1} w_k``
    with ``mu = (1 - sqrt(P/P_d)) / ||a||^2``, applied through the rank-one
    inverse. If the beam gain is exactly zero the nearest point is not
    unique; pass ``eps`` to nudge ``w_1`` along ``a`` first.
    """
    W = np.array(W, dtype=complex)
    a = steering_vector(d, angle, wavelength)
    n2 = float(np.real(np.vdot(a, a)))
    proj = W @ np.conj(a)                        # a^H w_k
    P = float(np.sum(np.abs(proj) ** 2))
    if P >= threshold:
        return W
    if P <= 0.0:
        if eps is None:
            raise DegenerateProjectionError(
                "beam gain toward the target is zero; projection direction undefined")
        W[0] += eps * a / np.sqrt(n2)
        proj = W @ np.conj(a)
        P = float(np.sum(np.abs(proj) ** 2))
    # mu / (1 - mu ||a||^2) with mu as above, simplified to avoid cancellation
    scale = (np.sqrt(threshold / P) - 1.0) / n2
    return W + scale * np.outer(proj, a)


def project_feasible(W, d, angle, wavelength, power_budget, threshold, eps=None):
    """Exact projection onto ``C_BS`` intersected with ``C_d``.

    Along the unit target direction the components are scaled by ``t_a``,
    orthogonally by ``t_o``; the KKT conditions leave four cases.
    """
    W = np.array(W, dtype=complex)
    a = steering_vector(d, angle, wavelength)
    a_hat = a / np.linalg.norm(a)
    q = threshold / float(np.real(np.vdot(a, a)))   # required energy along a_hat
    if q > power_budget * (1 + 1e-12):
        raise ValueError("probing threshold exceeds M * P_max")
    alpha = W @ np.conj(a_hat)
    if np.sum(np.abs(alpha) ** 2) <= 0.0 and q > 0:
        if eps is None:
            raise DegenerateProjectionError("zero beam gain toward the target")
        W[0] += eps * a_hat
        alpha = W @ np.conj(a_hat)
    par = np.outer(alpha, a_hat)
    orth = W - par
    ea = float(np.sum(np.abs(alpha) ** 2))
    eo = float(np.sum(np.abs(orth) ** 2))
    if ea >= q and ea + eo <= power_budget:
        return W
    t_a = max(1.0, np.sqrt(q / ea))
    if t_a ** 2 * ea + eo <= power_budget:
        return t_a * par + orth
    if ea + eo > 0 and power_budget / (ea + eo) * ea >= q:
        t = np.sqrt(power_budget / (ea + eo))
        return t * W
    # both constraints active
    t_o = np.sqrt(max(power_budget - q, 0.0) / eo) if eo > 0 else 0.0
    return np.sqrt(q / ea) * par + t_o * orth


def penalized_objective(ch, st, W, s, eps=None):
    Wb = project_power(W, s.power_budget)
    Wd = project_probing(W, ch.positions, s.sensing_angle, s.wavelength,
                         s.probing_threshold, eps=eps)
    mu = st.penalty_weight
    return (eval_surrogate(ch, W, st)
            + mu * (np.sum(np.abs(W - Wb) ** 2) + np.sum(np.abs(W - Wd) ** 2)))


def block_operator(st, k):
    M = st.A.shape[0]
    return st.A + st.A_eve + st.E_total - st.E[k] + 2.0 * st.penalty_weight * np.eye(M)


def pda_update(ch, st, W, s, eps=None):
    """One closed-form proximal distance step for all users."""
    W = np.asarray(W)
    mu = st.penalty_weight
    Wb = project_power(W, s.power_budget)
    Wd = project_probing(W, ch.positions, s.sensing_angle, s.wavelength,
                         s.probing_threshold, eps=eps)
    M = W.shape[1]
    ops = (st.A + st.A_eve + st.E_total + 2.0 * mu * np.eye(M))[None] - st.E
    rhs = st.b + st.g + mu * (Wb + Wd)
    out = np.linalg.solve(ops, rhs[..., None])[..., 0]
    if not np.all(np.isfinite(out)):
        raise NumericalError(f"non-finite beamformer update (mu={mu:g}, "
                             f"cond={np.linalg.cond(block_operator(st, 0)):.3g})")
    return out


@dataclass
class PdaOptions:
    """Penalty schedule: ``mu`` starts at ``mu_init * scale`` and is multiplied
    by ``mu_growth`` every ``mu_every`` iterations up to ``mu_max * scale``,
    where ``scale`` is the dominant eigenvalue of the block operator."""

    mu_init: float = 1e-2
    mu_growth: float = 2.0
    mu_every: int = 5
    mu_max: float = 1e6
    max_inner: int = 200
    tol: float = 1e-6
    polish_steps: int = 500       # projected-gradient steps after the exit repair
    polish_tol: float = 1e-10


def _scale(st):
    H = st.A + st.A_eve + st.E_total
    lam = float(np.max(np.linalg.eigvalsh(H)))
    return lam if lam > 0 else 1.0


def solve_beamformer_block(ch, st, W_init, s, opts=None):
    """Run the proximal distance iterations, then restore exact feasibility.

    Returns ``(W, trace, info)``. ``trace`` holds the penalised objective per
    inner iteration; ``info`` flags non-convergence and whether the
    monotone safeguard kept ``W_init``.
    """
    from dataclasses import replace
    opts = opts or PdaOptions()
    eps = 1e-9 * np.sqrt(s.power_budget)
    scale = _scale(st)
    mu = opts.mu_init * scale
    mu_cap = opts.mu_max * scale
    cur = replace(st, penalty_weight=mu)
    W = np.array(W_init, dtype=complex)
    trace = [penalized_objective(ch, cur, W, s, eps)]
    converged = False
    it = 0
    for it in range(1, opts.max_inner + 1):
        W = pda_update(ch, cur, W, s, eps)
        val = penalized_objective(ch, cur, W, s, eps)
        prev = trace[-1]
        trace.append(val)
        at_cap = mu >= mu_cap
        if abs(prev - val) <= opts.tol * max(abs(prev), 1e-12) and (at_cap or it > 1):
            if at_cap:
                converged = True
                break
            mu = min(mu * opts.mu_growth, mu_cap)
            cur = replace(cur, penalty_weight=mu)
            trace[-1] = penalized_objective(ch, cur, W, s, eps)
            continue
        if it % opts.mu_every == 0 and mu < mu_cap:
            mu = min(mu * opts.mu_growth, mu_cap)
            cur = replace(cur, penalty_weight=mu)
            trace[-1] = penalized_objective(ch, cur, W, s, eps)

    W = project_feasible(W, ch.positions, s.sensing_angle, s.wavelength,
                         s.power_budget, s.probing_threshold, eps=eps)
    info = {"iterations": it, "converged": converged, "kept_initial": False,
            "penalty_weight": mu}
    if is_feasible(W_init, ch, s):
        if eval_surrogate(ch, W, st) > eval_surrogate(ch, W_init, st):
            W = np.array(W_init, dtype=complex)
            info["kept_initial"] = True
    if opts.polish_steps > 0:
        W, moved = polish(ch, st, W, s, opts.polish_steps, opts.polish_tol, eps)
        info["polish_moved"] = moved
        if moved:
            info["kept_initial"] = False
    if not converged:
        log.debug("beamformer block stopped at max_inner=%d", opts.max_inner)
    return W, trace, info


def polish(ch, st, W, s, steps, tol, eps=None):
    """Accelerated projected gradient with step ``1/L`` and the exact
    feasible projection.

    A plain step from a feasible point cannot increase ``F`` even though
    ``C_d`` is not convex, so every extrapolated step is checked and the
    momentum is dropped whenever it would increase ``F``. The penalty
    iterations can end at a poor point of the nonconvex boundary and this
    pass moves off it. Returns ``(W, moved)``.
    """
    K = W.shape[0]
    base = st.A + st.A_eve + st.E_total
    ops = [base - st.E[k] for k in range(K)]
    lip = max(float(np.max(np.linalg.eigvalsh(op))) for op in ops)
    if lip <= 0:
        return W, False

    def step_from(Y):
        grad = np.array([ops[k] @ Y[k] - st.b[k] - st.g[k] for k in range(K)])
        return project_feasible(Y - grad / lip, ch.positions, s.sensing_angle, s.wavelength,
                                s.power_budget, s.probing_threshold, eps=eps)

    f = eval_surrogate(ch, W, st)
    moved = False
    prev = W
    t_k = 1.0
    quiet = 0
    for _ in range(steps):
        t_next = (1.0 + np.sqrt(1.0 + 4.0 * t_k ** 2)) / 2.0
        Y = W + (t_k - 1.0) / t_next * (W - prev)
        cand = step_from(Y)
        f_new = eval_surrogate(ch, cand, st)
        if not f_new <= f:
            # restart: plain step from the iterate is a guaranteed descent
            t_next = 1.0
            cand = step_from(W)
            f_new = eval_surrogate(ch, cand, st)
            if not f_new <= f:
                break
        quiet = quiet + 1 if f - f_new <= tol * max(abs(f), 1e-12) else 0
        prev, W, f, t_k = W, cand, f_new, t_next
        moved = True
        if quiet >= 5:
            break
    return W, moved


def is_feasible(W, ch, s, rtol=1e-8):
    p = total_power(W)
    pr = probing_power(ch.positions, W, s.sensing_angle, s.wavelength)
    return p <= s.power_budget * (1 + rtol) and pr >= s.probing_threshold * (1 - 1e-6)
