"""Small dense convex QCQP solver (primal-dual interior point).

Solves

    minimise    0.5 x^T H x + f^T x
    subject to  G x <= h
                0.5 x^T P_i x + r_i^T x + c_i <= 0     (P_i PSD)

with slack variables, so the starting point need not be feasible. Intended
for dimensions up to a few dozen.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class QcqpInfeasible(ArithmeticError):
    pass


@dataclass
class QcqpResult:
    x: np.ndarray
    z: np.ndarray
    iterations: int
    kkt_residual: float
    converged: bool


def _constraints(x, G, h, quads):
    vals = [G @ x - h]
    jac = [G]
    for P, r, c in quads:
        vals.append(np.array([0.5 * x @ P @ x + r @ x + c]))
        jac.append((P @ x + r)[None, :])
    return np.concatenate(vals), np.vstack(jac)


def solve_qcqp(H, f, G, h, quads=(), x0=None, tol=1e-10, max_iter=100):
    n = H.shape[0]
    G = np.atleast_2d(np.asarray(G, dtype=float)).reshape(-1, n)
    h = np.asarray(h, dtype=float).reshape(-1)
    quads = [(np.asarray(P, float), np.asarray(r, float), float(c)) for P, r, c in quads]
    m = G.shape[0] + len(quads)
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    cx, J = _constraints(x, G, h, quads)
    s = np.maximum(-cx, 1.0)
    z = np.ones(m)

    def residuals(x, s, z, target):
        cx, J = _constraints(x, G, h, quads)
        rd = H @ x + f + J.T @ z
        rp = cx + s
        rc = s * z - target
        return rd, rp, rc, J

    it = 0
    for it in range(1, max_iter + 1):
        gap = s @ z / m
        rd, rp, rc, J = residuals(x, s, z, 0.0)
        res = max(np.linalg.norm(rd, np.inf), np.linalg.norm(rp, np.inf), gap)
        if res <= tol:
            return QcqpResult(x, z, it, res, True)
        target = 0.1 * gap
        rc = s * z - target
        hess = H.copy()
        for i, (P, _, _) in enumerate(quads):
            hess += z[G.shape[0] + i] * P
        d = z / s
        lhs = hess + J.T @ (d[:, None] * J)
        rhs = -rd - J.T @ ((-rc + z * rp) / s)
        try:
            dx = np.linalg.solve(lhs, rhs)
        except np.linalg.LinAlgError:
            dx = np.linalg.lstsq(lhs, rhs, rcond=None)[0]
        ds = -rp - J @ dx
        dz = (-rc - z * ds) / s
        step = 1.0
        for v, dv in ((s, ds), (z, dz)):
            neg = dv < 0
            if np.any(neg):
                step = min(step, 0.99 * float(np.min(-v[neg] / dv[neg])))
        x, s, z = x + step * dx, s + step * ds, z + step * dz
    rd, rp, rc, _ = residuals(x, s, z, 0.0)
    res = max(np.linalg.norm(rd, np.inf), np.linalg.norm(rp, np.inf), s @ z / m)
    return QcqpResult(x, z, it, res, res <= tol)
