import numpy as np
import pytest
from dataclasses import replace
from scipy.optimize import minimize

from fasecure import metrics
from fasecure.beamformer import (DegenerateProjectionError, PdaOptions, block_operator,
                                 is_feasible, pda_update, penalized_objective, project_feasible,
                                 project_power, project_probing, solve_beamformer_block)
from fasecure.scenario import build_channels, random_layout, steering_vector, uniform_layout
from fasecure.surrogate import eval_surrogate, update_auxiliaries

from conftest import make_scenario, random_beamformer


def _state(rng, M=6, K=3, P_d=3.0, mu=10.0):
    s = make_scenario(M=M, K=K, P_d=P_d)
    ch = build_channels(s, random_layout(s, rng))
    W = random_beamformer(rng, K, M)
    st = replace(update_auxiliaries(ch, W), penalty_weight=mu)
    return s, ch, W, st


def test_project_power_examples(rng):
    W = random_beamformer(rng, 2, 3, power=0.5)
    assert np.array_equal(project_power(W, 1.0), W)
    W4 = random_beamformer(rng, 2, 3, power=4.0)
    assert np.allclose(project_power(W4, 1.0), W4 / 2)


def test_project_power_is_the_ball_projection(rng):
    for _ in range(20):
        W = random_beamformer(rng, 3, 4, power=rng.uniform(1.5, 9))
        P = project_power(W, 1.0)
        assert metrics.total_power(P) == pytest.approx(1.0, rel=1e-12)
        x = W.ravel()
        ref = x / max(1.0, np.linalg.norm(x))          # generic norm-ball projection
        assert np.allclose(P.ravel(), ref, atol=1e-14)
        assert np.allclose(project_power(P, 1.0), P, atol=1e-12)
        assert np.linalg.norm(P) <= np.linalg.norm(W)


def test_project_probing_leaves_feasible_points():
    d = np.array([0.0, 0.005, 0.012])
    a = steering_vector(d, 1.0, 0.01)
    W = (a * np.sqrt(6.0 / 9.0))[None, :]                # probing power = 6
    assert np.array_equal(project_probing(W, d, 1.0, 0.01, 3.0), W)


def test_project_probing_scalar_case():
    W = np.array([[0.3 * np.exp(0.7j)]])
    P = project_probing(W, [0.01], 1.0, 0.01, 2.0)
    assert np.allclose(P, np.sqrt(2.0) * np.exp(0.7j))


def test_project_probing_hits_boundary_along_a(rng):
    for _ in range(20):
        d = np.sort(rng.uniform(0, 0.1, 5))
        W = random_beamformer(rng, 2, 5, power=0.1)
        P = project_probing(W, d, 1.0, 0.01, 3.0)
        assert metrics.probing_power(d, P, 1.0, 0.01) == pytest.approx(3.0, rel=1e-8)
        a = steering_vector(d, 1.0, 0.01)
        for k in range(2):
            delta = P[k] - W[k]
            along = a * np.vdot(a, W[k])
            assert abs(np.vdot(along, delta)) == pytest.approx(
                np.linalg.norm(along) * np.linalg.norm(delta), rel=1e-9)
        assert np.allclose(project_probing(P, d, 1.0, 0.01, 3.0 * (1 - 1e-12)), P)


def test_project_probing_degenerate_case():
    d = np.array([0.0, 0.005])
    a = steering_vector(d, np.pi / 3, 0.01)
    w = np.array([a[1], -a[0]]).conj()                   # a^H w = 0
    W = w[None, :]
    assert abs(np.vdot(a, w)) < 1e-15
    with pytest.raises(DegenerateProjectionError):
        project_probing(W, d, np.pi / 3, 0.01, 1.0)
    P = project_probing(W, d, np.pi / 3, 0.01, 1.0, eps=1e-9)
    assert metrics.probing_power(d, P, np.pi / 3, 0.01) == pytest.approx(1.0, rel=1e-8)


def test_intersection_projection_is_feasible_and_nearest(rng):
    d = np.sort(rng.uniform(0, 0.1, 2))
    for _ in range(10):
        W = random_beamformer(rng, 1, 2, power=rng.uniform(0.2, 3.0))
        P = project_feasible(W, d, 1.0, 0.01, 1.0, 1.2)
        assert metrics.total_power(P) <= 1.0 * (1 + 1e-12)
        assert metrics.probing_power(d, P, 1.0, 0.01) >= 1.2 * (1 - 1e-10)
        # compare with a constrained solver started from many points
        x0 = np.concatenate([W.real.ravel(), W.imag.ravel()])
        a = steering_vector(d, 1.0, 0.01)

        def cplx(x):
            return x[:2] + 1j * x[2:]
        cons = [{"type": "ineq", "fun": lambda x: 1.0 - np.sum(x ** 2)},
                {"type": "ineq", "fun": lambda x: abs(np.vdot(a, cplx(x))) ** 2 - 1.2}]
        best = np.inf
        for _ in range(8):
            r = minimize(lambda x: np.sum((x - x0) ** 2), rng.standard_normal(4) * 0.7,
                         constraints=cons, method="SLSQP", options={"ftol": 1e-12})
            if r.success and all(c["fun"](r.x) >= -1e-9 for c in cons):
                best = min(best, r.fun)
        assert np.sum(np.abs(P - W) ** 2) <= best + 1e-7


def test_pda_update_solves_its_linear_system(rng):
    s, ch, W, st = _state(rng)
    Wn = pda_update(ch, st, W, s)
    Wb = project_power(W, s.power_budget)
    Wd = project_probing(W, ch.positions, s.sensing_angle, s.wavelength, s.probing_threshold)
    for k in range(W.shape[0]):
        rhs = st.b[k] + st.g[k] + st.penalty_weight * (Wb[k] + Wd[k])
        res = block_operator(st, k) @ Wn[k] - rhs
        assert np.linalg.norm(res) <= 1e-10 * np.linalg.norm(rhs)


def test_pda_update_is_proximal_average_without_objective(rng):
    s, ch, W, st = _state(rng, P_d=6.0)
    M = W.shape[1]
    K = W.shape[0]
    z = np.zeros((M, M), complex)
    st0 = replace(st, A=z, A_eve=z, E=np.zeros((K, M, M), complex),
                  b=np.zeros((K, M), complex), g=np.zeros((K, M), complex), E_sum=None)
    Wb = project_power(W, s.power_budget)
    Wd = project_probing(W, ch.positions, s.sensing_angle, s.wavelength, s.probing_threshold)
    assert np.allclose(pda_update(ch, st0, W, s), (Wb + Wd) / 2)


def test_pda_update_descends_penalized_objective(rng):
    for _ in range(100):
        s, ch, W, st = _state(rng, M=4, K=2, mu=10 ** rng.uniform(-12, -8))
        W = 3 * W
        before = penalized_objective(ch, st, W, s)
        after = penalized_objective(ch, st, pda_update(ch, st, W, s), s)
        assert after <= before + 1e-9


def test_block_operator_is_positive_definite(rng):
    s, ch, W, st = _state(rng, mu=0.5)
    for k in range(W.shape[0]):
        op = block_operator(st, k)
        assert np.allclose(op, op.conj().T)
        assert np.linalg.eigvalsh(op).min() >= 2 * 0.5 - 1e-12


def test_block_solution_is_feasible_and_not_worse(rng):
    for _ in range(5):
        s, ch, W, st = _state(rng)
        W0 = project_feasible(W, ch.positions, s.sensing_angle, s.wavelength,
                              s.power_budget, s.probing_threshold)
        Wn, trace, info = solve_beamformer_block(ch, st, W0, s)
        assert is_feasible(Wn, ch, s)
        assert eval_surrogate(ch, Wn, st) <= eval_surrogate(ch, W0, st) + 1e-12
        assert len(trace) == info["iterations"] + 1


def test_block_exits_quickly_at_a_solution(rng):
    s, ch, W, st = _state(rng)
    W1, _, _ = solve_beamformer_block(ch, st, W, s)
    W2, _, info = solve_beamformer_block(ch, st, W1, s)
    assert eval_surrogate(ch, W2, st) == pytest.approx(eval_surrogate(ch, W1, st), abs=1e-6)


def test_penalty_saturation(rng):
    s, ch, W, st = _state(rng)
    out = {}
    for cap in (1e4, 1e6):
        opts = PdaOptions(mu_max=cap, polish_steps=0, max_inner=400)
        Wn, _, _ = solve_beamformer_block(ch, st, W, s, opts)
        out[cap] = eval_surrogate(ch, Wn, st)
    assert abs(out[1e6] - out[1e4]) <= 1e-3 * abs(out[1e4])


def test_single_user_block_matches_reference_optimum(rng):
    s = make_scenario(M=2, K=1, angles=[110.0], P_d=1.0)
    ch = build_channels(s, uniform_layout(s))
    W = random_beamformer(rng, 1, 2)
    st = update_auxiliaries(ch, W)
    Wn, _, _ = solve_beamformer_block(ch, st, W, s)
    a = steering_vector(ch.positions, s.sensing_angle, s.wavelength)

    def f(x):
        return eval_surrogate(ch, (x[:2] + 1j * x[2:])[None, :], st)
    cons = [{"type": "ineq", "fun": lambda x: 1.0 - np.sum(x ** 2)},
            {"type": "ineq", "fun": lambda x: abs(np.vdot(a, x[:2] + 1j * x[2:])) ** 2 - 1.0}]
    best = np.inf
    for t in np.linspace(0, np.pi / 2, 7):
        for p in np.linspace(0, 2 * np.pi, 8, endpoint=False):
            x0 = np.array([np.cos(t), np.sin(t) * np.cos(p), 0.0, np.sin(t) * np.sin(p)])
            r = minimize(f, x0, constraints=cons, method="SLSQP", options={"ftol": 1e-14})
            if all(c["fun"](r.x) >= -1e-9 for c in cons):
                best = min(best, r.fun)
    assert eval_surrogate(ch, Wn, st) <= best + 1e-4 * abs(best)
