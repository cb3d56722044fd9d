import numpy as np
import pytest
from scipy.optimize import minimize

from fasecure import metrics
from fasecure.apv import (EpgOptions, EpgState, ProjectionInfeasible, ProjectionInfo,
                          apv_gradient, build_taylor_bound, chain_constraints, epg_step,
                          next_momentum, project_chain, project_feasible, solve_apv_block)
from fasecure.qcqp import solve_qcqp
from fasecure.scenario import ApvState, build_channels, random_layout, uniform_layout
from fasecure.surrogate import surrogate_at, update_auxiliaries
from fasecure.verification import PositionSet, fd_gradient, grid_project, quadratic_batch

from conftest import make_scenario, random_beamformer


def _setup(rng, M=8, K=2, P_d=3.0):
    s = make_scenario(M=M, K=K, P_d=P_d)
    d = random_layout(s, rng)
    ch = build_channels(s, d)
    W = random_beamformer(rng, K, M)
    return s, d, ch, W, update_auxiliaries(ch, W)


def test_gradient_matches_central_differences(rng):
    for _ in range(10):
        s, d, ch, W, st = _setup(rng)
        g = apv_gradient(ch, W, st)
        ref = fd_gradient(lambda x: surrogate_at(x, W, st, ch), d.positions, 1e-6)
        assert np.linalg.norm(g - ref) <= 1e-5 * np.linalg.norm(ref)


def test_gradient_with_several_eavesdroppers(rng):
    s = make_scenario(M=5, K=3, eavesdropper_angles=np.deg2rad([60.0, 20.0]))
    d = random_layout(s, rng)
    ch = build_channels(s, d)
    W = random_beamformer(rng, 3, 5)
    st = update_auxiliaries(ch, W)
    ref = fd_gradient(lambda x: surrogate_at(x, W, st, ch), d.positions, 1e-6)
    assert np.linalg.norm(apv_gradient(ch, W, st) - ref) <= 1e-5 * np.linalg.norm(ref)


def test_zero_beamformers_give_zero_gradient(rng):
    s, d, ch, W, st = _setup(rng)
    assert np.allclose(apv_gradient(ch, np.zeros_like(W), st), 0.0)


def test_single_antenna_gradient_is_tiny(rng):
    s, d, ch, W, st = _setup(rng, M=1, K=2)
    g = apv_gradient(ch, W, st)
    ref = fd_gradient(lambda x: surrogate_at(x, W, st, ch), d.positions, 1e-6)
    assert abs(g[0] - ref[0]) <= 1e-6 * max(1.0, abs(surrogate_at(d.positions, W, st, ch)))


def test_taylor_bound_is_a_global_minorant(rng):
    for _ in range(3):
        s, d, ch, W, st = _setup(rng)
        tb = build_taylor_bound(W, d, s.sensing_angle, s.wavelength)
        exact = metrics.probing_power(d, W, s.sensing_angle, s.wavelength)
        assert tb(d) == pytest.approx(exact, rel=1e-9)
        D = rng.uniform(0, s.aperture_length, size=(10_000, s.M))
        v = 2 * np.pi / s.wavelength * np.cos(s.sensing_angle)
        true = np.sum(np.abs(np.exp(-1j * v * D) @ W.T) ** 2, axis=1)
        g = quadratic_batch(tb.Q, tb.p, tb.c)(D)
        assert np.all(g <= true + 1e-9)
        eig = np.linalg.eigvalsh(tb.Q)
        assert eig.max() <= 1e-10 * abs(eig.min())


def test_taylor_bound_single_antenna(rng):
    W = random_beamformer(rng, 3, 1)
    tb = build_taylor_bound(W, [0.02], 1.0, 0.01)
    assert np.all(tb.Q == 0)
    assert tb([0.07]) == pytest.approx(metrics.total_power(W))


def test_chain_projection_example():
    L = 1.0
    assert np.allclose(project_chain([0.6 * L, 0.6 * L], L, 0.2 * L), [0.5 * L, 0.7 * L])


def test_chain_projection_matches_grid_oracle(rng):
    for _ in range(5):
        kappa = rng.uniform(-0.02, 0.12, 2)
        ours = project_chain(kappa, 0.1, 0.005)
        ref = grid_project(kappa, PositionSet(0.1, 0.005), 1e-4, refine=1)
        assert np.allclose(ours, ref, atol=2e-5)


def test_chain_rows_describe_the_polyhedron(rng):
    G, h = chain_constraints(4, 0.1, 0.005)
    for _ in range(20):
        d = project_chain(rng.uniform(-0.1, 0.2, 4), 0.1, 0.005)
        assert np.all(G @ d <= h + 1e-12)


def test_feasible_point_is_its_own_projection(rng):
    s, d, ch, W, st = _setup(rng, P_d=0.5)
    tb = build_taylor_bound(W, d, s.sensing_angle, s.wavelength)
    if tb(d) >= 0.5:
        assert np.allclose(project_feasible(d.positions, tb, s).positions, d.positions)


def test_projection_with_active_probing_matches_grid(rng):
    s = make_scenario(M=2, K=1, angles=[100.0], P_d=1.0)
    checked = 0
    while checked < 3:
        W = random_beamformer(rng, 1, 2)
        centre = np.sort(rng.uniform(0, 0.1, 2))
        if np.diff(centre)[0] < s.min_spacing:
            continue
        tb = build_taylor_bound(W, centre, s.sensing_angle, s.wavelength)
        thr = 0.9 * tb(centre)
        kappa = rng.uniform(0, 0.1, 2)
        info = ProjectionInfo()
        out = project_feasible(kappa, tb, s, threshold=thr, info=info).positions
        if not info.used_qcqp:
            continue
        assert info.converged
        assert tb(out) >= thr * (1 - 1e-8)
        ref = grid_project(kappa, PositionSet(0.1, s.min_spacing,
                                              quadratic_batch(tb.Q, tb.p, tb.c), thr),
                           1e-4, refine=1)
        assert np.max(np.abs(out - ref)) <= 1e-3 * s.aperture_length
        again = project_feasible(out, tb, s, threshold=thr).positions
        assert np.allclose(again, out, atol=1e-7)
        checked += 1


def test_empty_relaxed_set_is_signalled(rng):
    s = make_scenario(M=2, K=1, angles=[100.0], P_d=1.0)
    W = random_beamformer(rng, 1, 2, power=0.1)
    tb = build_taylor_bound(W, [0.01, 0.03], s.sensing_angle, s.wavelength)
    with pytest.raises(ProjectionInfeasible):
        project_feasible([0.0, 0.05], tb, s, threshold=5.0)


def test_qcqp_matches_general_solver(rng):
    n = 4
    for _ in range(5):
        B = rng.standard_normal((n, n))
        H = B @ B.T + np.eye(n)
        f = rng.standard_normal(n)
        G = rng.standard_normal((3, n))
        h = np.abs(rng.standard_normal(3)) + 0.1
        C = rng.standard_normal((n, n))
        P = C @ C.T
        r = rng.standard_normal(n)
        res = solve_qcqp(H, f, G, h, [(P, r, -1.0)])
        assert res.converged
        cons = [{"type": "ineq", "fun": lambda x: h - G @ x},
                {"type": "ineq", "fun": lambda x: -(0.5 * x @ P @ x + r @ x - 1.0)}]
        ref = minimize(lambda x: 0.5 * x @ H @ x + f @ x, np.zeros(n), constraints=cons,
                       method="SLSQP", options={"ftol": 1e-14})
        assert np.allclose(res.x, ref.x, atol=1e-6)


def test_momentum_sequence():
    v2, e2 = next_momentum(0.0)
    v3, e3 = next_momentum(v2)
    assert v2 == 1.0 and e2 == 0.0
    assert v3 == pytest.approx((1 + np.sqrt(5)) / 2)
    assert e3 == pytest.approx(1 - 2 / (1 + np.sqrt(5)))


def test_stationary_point_is_fixed(rng, monkeypatch):
    import fasecure.apv as apv
    s, d, ch, W, st = _setup(rng, P_d=0.1)
    W = project_feasible_w(W, d, s)
    monkeypatch.setattr(apv, "apv_gradient", lambda ch, W, st, d=None: np.zeros(ch.M))
    state = epg_step(EpgState.start(d), ch, W, st, s)
    assert np.allclose(state.d, d.positions)
    assert not state.stalled


def test_epg_steps_never_increase_surrogate(rng):
    s, d, ch, W, st = _setup(rng, P_d=0.5)
    W = project_feasible_w(W, d, s)
    state = EpgState.start(d)
    f = surrogate_at(d.positions, W, st, ch)
    for _ in range(30):
        state = epg_step(state, ch, W, st, s)
        f_new = surrogate_at(state.d, W, st, ch)
        assert f_new <= f + 1e-9
        assert ApvState(state.d).is_feasible(s.aperture_length, s.min_spacing)
        assert metrics.probing_power(state.d, W, s.sensing_angle, s.wavelength) >= 0.5 * (1 - 1e-9)
        f = f_new


def project_feasible_w(W, d, s):
    from fasecure.beamformer import project_feasible as proj
    return proj(W, d, s.sensing_angle, s.wavelength, s.power_budget, s.probing_threshold)


def test_apv_block_from_uniform_layout_descends(rng):
    s = make_scenario(P_d=3.0)
    d = uniform_layout(s)
    ch = build_channels(s, d)
    W = project_feasible_w(random_beamformer(rng, 2, 8), d, s)
    st = update_auxiliaries(ch, W)
    out, trace, info = solve_apv_block(ch, W, st, d, s)
    assert trace[-1] <= trace[0] + 1e-12
    assert np.all(np.diff(trace) <= 1e-9)
    assert out.is_feasible(s.aperture_length, s.min_spacing)


def test_single_antenna_block_keeps_position(rng):
    s = make_scenario(M=1, K=1, angles=[100.0], P_d=0.5)
    d = ApvState([0.03])
    ch = build_channels(s, d)
    W = np.array([[1.0 + 0j]])
    st = update_auxiliaries(ch, W)
    out, _, _ = solve_apv_block(ch, W, st, d, s)
    assert out.positions[0] == pytest.approx(0.03, abs=1e-9)


def test_two_antenna_block_refines_grid_minimum(rng):
    s = make_scenario(M=2, K=1, angles=[120.0], P_d=0.2)
    W = random_beamformer(rng, 1, 2)
    d0 = ApvState([0.02, 0.03])
    ch = build_channels(s, d0)
    st = update_auxiliaries(ch, W)
    gaps = np.linspace(s.min_spacing, s.aperture_length, 2001)
    vals = [surrogate_at(np.array([0.0, g]), W, st, ch)
            if metrics.probing_power([0.0, g], W, s.sensing_angle, s.wavelength) >= 0.2
            else np.inf for g in gaps]
    g_best = gaps[int(np.argmin(vals))]
    out, trace, _ = solve_apv_block(ch, W, st, ApvState([0.0, g_best]), s,
                                    EpgOptions(max_inner=200))
    assert trace[-1] <= min(vals) + 1e-3 * abs(min(vals))
