"""Independent oracles for the analytic code paths.

Nothing here calls the solver's channel, metric or projection helpers: the
oracles rebuild what they need from the scenario fields so that a bug in
the analytic path cannot hide in the reference.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np


class OracleError(ArithmeticError):
    """A reference computation could not be completed."""


class OracleInfeasible(OracleError):
    """No grid point satisfies the constraints."""


# -- finite differences -----------------------------------------------------

def fd_gradient(F, d, h=1e-6):
    """Central-difference gradient of the scalar field ``F`` at ``d``."""
    if not h > 0:
        raise ValueError("h must be positive")
    d = np.asarray(d, dtype=float)
    g = np.empty(d.size)
    for m in range(d.size):
        e = np.zeros(d.size)
        e[m] = h
        hi, lo = F(d + e), F(d - e)
        if not (np.isfinite(hi) and np.isfinite(lo)):
            raise OracleError(f"non-finite sample along coordinate {m}")
        g[m] = (hi - lo) / (2.0 * h)
    return g


# -- brute-force geometry ---------------------------------------------------

@dataclass(frozen=True)
class PositionSet:
    """``0 <= d_1``, ``d_M <= L``, ``d_{m+1} - d_m >= L0`` and optionally
    ``g(d) >= threshold`` where ``g`` maps an (N, M) batch to N values."""

    aperture: float
    min_spacing: float
    g: object = None
    threshold: float = 0.0

    def contains(self, D, tol=1e-12):
        D = np.atleast_2d(D)
        ok = (D[:, 0] >= -tol) & (D[:, -1] <= self.aperture + tol)
        if D.shape[1] > 1:
            ok &= np.all(np.diff(D, axis=1) >= self.min_spacing - tol, axis=1)
        if self.g is not None:
            ok &= self.g(D) >= self.threshold
        return ok


def quadratic_batch(Q, p, c):
    """Batch evaluator of ``d^T Q d - 2 p^T d + c``."""
    Q, p = np.asarray(Q, float), np.asarray(p, float)
    return lambda D: np.einsum("ni,ij,nj->n", D, Q, D) - 2.0 * D @ p + c


def grid_project(kappa, cset, resolution, refine=0):
    """Nearest feasible point of a uniform grid over ``[0, L]^M`` to ``kappa``.

    With ``refine > 0`` the scan is repeated that many times on a finer
    grid around the incumbent (factor 10 each time). Raises
    :class:`OracleInfeasible` if no grid point is feasible.
    """
    kappa = np.asarray(kappa, dtype=float)
    M = kappa.size
    if M > 3:
        raise ValueError("grid_project supports M <= 3")
    if not resolution > 0:
        raise ValueError("resolution must be positive")
    axis = np.arange(0.0, cset.aperture + 0.5 * resolution, resolution)
    best, best_dist = None, np.inf
    # the last M-1 coordinates are vectorised, the first one looped
    tail = np.array(list(itertools.product(axis, repeat=M - 1))) if M > 1 else np.zeros((1, 0))
    for x in axis:
        D = np.column_stack([np.full(len(tail), x), tail])
        ok = cset.contains(D)
        if not np.any(ok):
            continue
        dist = np.sum((D[ok] - kappa) ** 2, axis=1)
        i = int(np.argmin(dist))
        if dist[i] < best_dist:
            best, best_dist = D[ok][i], dist[i]
    if best is None:
        raise OracleInfeasible("no feasible grid point")
    step = resolution
    for _ in range(refine):
        best = _local_scan(kappa, cset, best, 2 * step, step / 10)
        step /= 10
    return best


def _local_scan(target, cset, centre, radius, step):
    n = int(round(2 * radius / step)) + 1
    offs = np.linspace(-radius, radius, n)
    D = centre + np.array(list(itertools.product(offs, repeat=centre.size)))
    ok = cset.contains(D)
    if not np.any(ok):
        return centre
    dist = np.sum((D[ok] - target) ** 2, axis=1)
    return D[ok][int(np.argmin(dist))]


def nearest_feasible_search(point, feasible, radius, points_per_axis=21, levels=30,
                            shrink=1.5):
    """Zooming grid search for the feasible point nearest to ``point``.

    ``feasible`` maps an (N, n) batch of real vectors to a boolean mask.
    The box around the incumbent shrinks by ``shrink`` per level.
    """
    point = np.asarray(point, dtype=float)
    offs = np.array(list(itertools.product(np.linspace(-1, 1, points_per_axis),
                                           repeat=point.size)))
    centre, best = point.copy(), None
    for _ in range(levels):
        D = centre + radius * offs
        ok = feasible(D)
        if np.any(ok):
            dist = np.sum((D[ok] - point) ** 2, axis=1)
            best = D[ok][int(np.argmin(dist))]
            centre = best
        elif best is None:
            raise OracleInfeasible("no feasible point in the search box")
        radius /= shrink
    return best


def complex_to_real(W):
    W = np.asarray(W)
    return np.concatenate([W.real.ravel(), W.imag.ravel()])


def real_to_complex(x, shape):
    n = int(np.prod(shape))
    return (x[:n] + 1j * x[n:]).reshape(shape)


def probing_batch(positions, angle, wavelength, threshold, shape):
    """Feasibility mask of ``sum_k |a^H w_k|^2 >= threshold`` for real batches."""
    v = 2.0 * np.pi / wavelength * np.cos(angle)
    conj_a = np.exp(-1j * v * np.asarray(positions, float))

    def mask(X):
        n = int(np.prod(shape))
        Wb = (X[:, :n] + 1j * X[:, n:]).reshape((-1,) + tuple(shape))
        P = np.sum(np.abs(Wb @ conj_a) ** 2, axis=1)
        return P >= threshold
    return mask


# -- toy global reference ---------------------------------------------------

def _link(distance, s):
    g = s.reference_gain * distance ** (-s.pathloss_exponent)
    return g if s.gain_convention == "amplitude" else np.sqrt(g)


def exhaustive_secrecy_search(s, n_power=16, n_theta=61, n_phase=72, n_spacing=100):
    """Best grid point of the secrecy problem for ``M <= 2``, ``K = 1``.

    For ``M = 2`` the beamformer is ``sqrt(p) [cos t, sin t e^{j psi}]``
    (the common phase does not matter) and only the spacing ``d_2 - d_1``
    enters the secrecy rate. Returns ``(w, d, secrecy_bits)``.
    """
    if s.num_users != 1 or s.num_antennas > 2:
        raise ValueError("exhaustive search needs K = 1 and M <= 2")
    M = s.num_antennas
    total = n_power * (n_theta * n_phase if M == 2 else 1) * (n_spacing if M == 2 else 1)
    if total > 1e7:
        raise ValueError(f"grid of {total:.3g} points is too large")
    wl = s.wavelength
    v_u = 2 * np.pi / wl * np.cos(s.user_angles[0])
    v_t = 2 * np.pi / wl * np.cos(s.sensing_angle)
    v_e = [2 * np.pi / wl * np.cos(a) for a in s.eavesdropper_angles]
    g_u = _link(s.user_distances[0], s)
    g_e = [_link(r, s) for r in s.eavesdropper_distances]
    n_u, n_e = s.noise_user[0], s.noise_eve
    powers = np.linspace(s.power_budget / n_power, s.power_budget, n_power)

    def score(W, d):
        # W: (N, M) candidates, d: positions (M,)
        ru = np.abs(W @ np.exp(-1j * v_u * d)) ** 2 * g_u ** 2 / n_u
        worst = np.zeros(len(W))
        for v, g in zip(v_e, g_e):
            worst = np.maximum(worst, np.abs(W @ np.exp(-1j * v * d)) ** 2 * g ** 2 / n_e)
        sec = np.maximum(np.log2(1 + ru) - np.log2(1 + worst), 0.0)
        probe = np.abs(W @ np.exp(-1j * v_t * d)) ** 2
        sec[probe < s.probing_threshold] = -np.inf
        return sec

    if M == 1:
        W = np.sqrt(powers)[:, None].astype(complex)
        d = np.array([s.aperture_length / 2])
        sc = score(W, d)
        i = int(np.argmax(sc))
        if not np.isfinite(sc[i]):
            raise OracleInfeasible("no feasible beamformer on the grid")
        return W[i], d, float(sc[i])

    t = np.linspace(0, np.pi / 2, n_theta)
    psi = np.linspace(0, 2 * np.pi, n_phase, endpoint=False)
    T, Psi, P = np.meshgrid(t, psi, powers, indexing="ij")
    W = np.sqrt(P.ravel())[:, None] * np.column_stack(
        [np.cos(T.ravel()), np.sin(T.ravel()) * np.exp(1j * Psi.ravel())])
    best = (-np.inf, None, None)
    for gap in np.linspace(s.min_spacing, s.aperture_length, n_spacing):
        d = np.array([0.0, gap])
        sc = score(W, d)
        i = int(np.argmax(sc))
        if sc[i] > best[0]:
            best = (float(sc[i]), W[i], d)
    if not np.isfinite(best[0]):
        raise OracleInfeasible("no feasible grid point")
    return best[1], best[2], best[0]


# -- gate suites -------------------------------------------------------------

@dataclass
class GateResult:
    name: str
    residual: float
    tolerance: float

    @property
    def passed(self):
        return bool(np.isfinite(self.residual) and self.residual <= self.tolerance)

    def line(self):
        tag = "PASS" if self.passed else "FAIL"
        return f"{tag}  {self.name:<42s} residual={self.residual:.3e}  tol={self.tolerance:.1e}"


def reference_scenario(M=8, K=2, P_d=3.0, seed=0, angles=None):
    """Two-user style test instance with power-convention gains."""
    from .scenario import Scenario
    rng = np.random.default_rng(seed)
    if angles is None:
        angles = np.sort(rng.uniform(15, 165, size=K))
    return Scenario(num_antennas=M, num_users=K, aperture_length=0.1, min_spacing=0.005,
                    wavelength=0.01, user_angles=np.deg2rad(angles),
                    sensing_angle=np.deg2rad(60.0), user_distances=100.0,
                    target_distance=100.0, reference_gain=1e-4, pathloss_exponent=2.8,
                    noise_user=1e-11, noise_eve=1e-11, power_budget=1.0,
                    probing_threshold=P_d, gain_convention="power")


def _random_point(s, rng):
    from .scenario import random_layout
    d = random_layout(s, rng).positions
    W = rng.standard_normal((s.K, s.M)) + 1j * rng.standard_normal((s.K, s.M))
    W *= np.sqrt(s.power_budget / np.sum(np.abs(W) ** 2))
    return d, W


def gate_gradients(h=1e-6, n_points=100, seed=0, gradient=None):
    from .apv import apv_gradient
    from .scenario import build_channels
    from .surrogate import surrogate_at, update_auxiliaries
    gradient = gradient or apv_gradient
    rng = np.random.default_rng(seed)
    s = reference_scenario(M=8, K=2, seed=seed)
    worst = 0.0
    for _ in range(n_points):
        d, W = _random_point(s, rng)
        ch = build_channels(s, d)
        st = update_auxiliaries(ch, W)
        g = gradient(ch, W, st, d)
        ref = fd_gradient(lambda x: surrogate_at(x, W, st, ch), d, h)
        worst = max(worst, np.linalg.norm(g - ref) / max(np.linalg.norm(ref), 1e-300))
    return [GateResult("apv_gradient vs central differences", worst, 1e-5)]


def gate_projections(seed=0):
    from .apv import ProjectionInfo, build_taylor_bound, project_feasible as project_positions
    from .beamformer import project_power, project_probing
    rng = np.random.default_rng(seed)
    out = []
    # probing projection: boundary and brute-force nearest point, M = 2, K = 1
    s = reference_scenario(M=2, K=1, P_d=1.5, seed=seed)
    bnd, near = 0.0, 0.0
    for _ in range(3):
        d = np.sort(rng.uniform(0, s.aperture_length, 2))
        W = 0.2 * (rng.standard_normal((1, 2)) + 1j * rng.standard_normal((1, 2)))
        Wp = project_probing(W, d, s.sensing_angle, s.wavelength, s.probing_threshold)
        v = 2 * np.pi / s.wavelength * np.cos(s.sensing_angle)
        P = np.sum(np.abs(Wp @ np.exp(-1j * v * d)) ** 2)
        bnd = max(bnd, abs(P - s.probing_threshold) / s.probing_threshold)
        mask = probing_batch(d, s.sensing_angle, s.wavelength, s.probing_threshold, W.shape)
        x = nearest_feasible_search(complex_to_real(W), mask,
                                    radius=2.0 * np.linalg.norm(Wp - W) + 1e-3)
        near = max(near, np.linalg.norm(real_to_complex(x, W.shape) - Wp))
    out.append(GateResult("project_probing lands on P = P_d", bnd, 1e-8))
    out.append(GateResult("project_probing vs brute-force nearest", near, 1e-3))
    # power projection
    W = rng.standard_normal((3, 4)) + 1j * rng.standard_normal((3, 4))
    Wp = project_power(W, 1.0)
    res = max(abs(np.sum(np.abs(Wp) ** 2) - 1.0),
              np.max(np.abs(project_power(Wp, 1.0) - Wp)))
    out.append(GateResult("project_power norm-exact and idempotent", res, 1e-12))
    # position projection against the grid oracle, M = 2 with active probing row
    worst = 0.0
    s2 = reference_scenario(M=2, K=1, P_d=1.0, seed=seed)
    L = s2.aperture_length
    done = 0
    while done < 3:
        W = rng.standard_normal((1, 2)) + 1j * rng.standard_normal((1, 2))
        W *= np.sqrt(s2.power_budget / np.sum(np.abs(W) ** 2))
        centre = np.sort(rng.uniform(0, L, 2))
        if centre[1] - centre[0] < s2.min_spacing:
            continue
        tb = build_taylor_bound(W, centre, s2.sensing_angle, s2.wavelength)
        thr = 0.9 * tb(centre)
        kappa = rng.uniform(0, L, 2)
        cset = PositionSet(L, s2.min_spacing, quadratic_batch(tb.Q, tb.p, tb.c), thr)
        info = ProjectionInfo()
        d_an = project_positions(kappa, tb, s2, threshold=thr, info=info).positions
        if not info.used_qcqp:
            continue
        d_grid = grid_project(kappa, cset, 1e-3 * L, refine=1)
        worst = max(worst, np.max(np.abs(d_an - d_grid)) / L)
        done += 1
    out.append(GateResult("position projection vs grid (units of L)", worst, 1e-3))
    return out


def gate_oracle(seed=0, n_instances=3):
    from .driver import SolverOptions, bsum_solve
    rng = np.random.default_rng(seed)
    worst = -np.inf
    for _ in range(n_instances):
        s = toy_instance(rng)
        _, _, best = exhaustive_secrecy_search(s)
        rep = bsum_solve(s, opts=SolverOptions(tol=1e-6))
        worst = max(worst, best - rep.sum_secrecy - grid_slack(best))
    return [GateResult("solver vs exhaustive toy optimum (bits short)", max(worst, 0.0), 0.0)]


def toy_instance(rng):
    """Random ``M = 2, K = 1`` instance for the global-reference gate."""
    from .scenario import Scenario
    ang_u = rng.uniform(20, 160)
    ang_t = rng.uniform(20, 160)
    return Scenario(num_antennas=2, num_users=1, aperture_length=0.05, min_spacing=0.005,
                    wavelength=0.01, user_angles=[np.deg2rad(ang_u)],
                    sensing_angle=np.deg2rad(ang_t), user_distances=100.0,
                    target_distance=float(rng.uniform(60, 140)), reference_gain=1e-4,
                    pathloss_exponent=2.8, noise_user=1e-11, noise_eve=1e-11,
                    power_budget=1.0, probing_threshold=float(rng.uniform(0.1, 1.5)),
                    gain_convention="power")


def grid_slack(best):
    """Allowance for the continuous solver versus the discretised optimum."""
    return 0.01 * abs(best) + 1e-3


SUITES = {
    "gradients": gate_gradients,
    "projections": gate_projections,
    "oracle": gate_oracle,
}


def run_suite(name="all", h=1e-6, seed=0, gradient=None):
    names = list(SUITES) if name == "all" else [name]
    results = []
    for n in names:
        if n not in SUITES:
            raise ValueError(f"unknown suite {n!r}")
        if n == "gradients":
            results += gate_gradients(h=h, seed=seed, gradient=gradient)
        else:
            results += SUITES[n](seed=seed)
    return results
