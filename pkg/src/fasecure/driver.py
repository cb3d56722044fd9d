"""Outer block-successive loop over auxiliaries, beamformers and positions.

Each outer iteration refreshes the auxiliaries (which makes the surrogate
tight at the current point), then minimises it over the beamformers and
over the antenna positions. The surrogate value therefore never increases
from one outer iteration to the next.

Cost per outer iteration is dominated by the position block: every
projection solves a dense QCQP in ``M`` variables, roughly ``O(M^3.5)``,
while the beamformer block needs ``K`` Hermitian solves of size ``M``
(``O(M^3 K)``) per inner step and the auxiliary refresh ``O(M^2 K^2)``.
"""

from __future__ import annotations

import hashlib
import json
import logging
import time
from dataclasses import dataclass, field, asdict

import numpy as np

from . import metrics
from .apv import EpgOptions, solve_apv_block
from .beamformer import PdaOptions, project_feasible, solve_beamformer_block
from .scenario import (ApvState, ScenarioError, build_channels, random_layout,
                       spread_layout, uniform_layout)
from .surrogate import eval_surrogate, rebuild_caches, update_auxiliaries

log = logging.getLogger(__name__)


@dataclass
class SolverOptions:
    max_outer: int = 300
    tol: float = 1e-3
    pda: PdaOptions = field(default_factory=PdaOptions)
    epg: EpgOptions = field(default_factory=EpgOptions)
    refresh_before_positions: bool = False
    optimize_positions: bool = True
    init: str = "default"          # or "random"
    seed: int = 0
    layout_starts: int = 0         # extra spread layouts tried by fa_multistart
    random_starts: int = 0         # extra seeded random layouts tried by fa_multistart

    def to_dict(self):
        return asdict(self)


@dataclass
class SolverReport:
    rows: list
    status: str
    W: np.ndarray
    d: np.ndarray
    final: metrics.MetricsReport
    best_iteration: int
    audit: dict
    label: str = "fa"
    starts: list = None           # (start label, sum secrecy) when several starts were run

    TRACE_SCHEMA = "fasecure.trace/v1"
    TRACE_COLUMNS = ("iteration", "surrogate", "objective", "sum_secrecy",
                     "probing_power", "total_power", "max_violation", "wall_time")

    @property
    def iterations(self):
        return self.rows[-1]["iteration"]

    @property
    def surrogate_trace(self):
        return np.array([r["surrogate"] for r in self.rows])

    @property
    def secrecy_trace(self):
        return np.array([r["sum_secrecy"] for r in self.rows])

    @property
    def sum_secrecy(self):
        return self.final.sum_secrecy

    def summary(self, scenario_dict=None):
        out = {
            "label": self.label,
            "status": self.status,
            "iterations": self.iterations,
            "best_iteration": self.best_iteration,
            "final": self.final.to_dict(),
            "audit": self.audit,
            "positions": self.d.tolist(),
            "beamformers_real": self.W.real.tolist(),
            "beamformers_imag": self.W.imag.tolist(),
        }
        if self.starts:
            out["starts"] = [{"start": a, "sum_secrecy": b} for a, b in self.starts]
        if scenario_dict is not None:
            out["config"] = scenario_dict
            out["config_hash"] = config_hash(scenario_dict)
        return out


def config_hash(obj):
    blob = json.dumps(obj, sort_keys=True, default=str).encode()
    return hashlib.sha1(blob).hexdigest()[:12]


def default_beamformer(s, d):
    """Matched filters sharing the budget, then made feasible."""
    ch = build_channels(s, d)
    H = ch.user_channels
    W = H / np.linalg.norm(H, axis=1, keepdims=True) * np.sqrt(s.power_budget / s.K)
    return _feasible(W, s, d)


def random_beamformer(s, d, rng):
    W = rng.standard_normal((s.K, s.M)) + 1j * rng.standard_normal((s.K, s.M))
    W *= np.sqrt(s.power_budget / np.sum(np.abs(W) ** 2))
    return _feasible(W, s, d)


def _feasible(W, s, d):
    return project_feasible(W, getattr(d, "positions", d), s.sensing_angle, s.wavelength,
                            s.power_budget, s.probing_threshold,
                            eps=1e-9 * np.sqrt(s.power_budget))


def feasibility_audit(s, W, d):
    d = np.asarray(getattr(d, "positions", d), dtype=float)
    power = metrics.total_power(W)
    probe = metrics.probing_power(d, W, s.sensing_angle, s.wavelength)
    pos = ApvState(d).violation(s.aperture_length, s.min_spacing)
    out = {
        "power_excess": max(0.0, power - s.power_budget),
        "probing_shortfall": max(0.0, s.probing_threshold - probe),
        "position_violation": pos,
    }
    out["ok"] = bool(power <= s.power_budget * (1 + 1e-8)
                     and probe >= s.probing_threshold * (1 - 1e-6)
                     and pos <= 1e-9)
    return out


def _max_violation(s, W, d):
    a = feasibility_audit(s, W, d)
    return max(a["power_excess"] / s.power_budget,
               a["probing_shortfall"] / s.probing_threshold,
               a["position_violation"])


def initial_point(s, opts, init=None):
    init = dict(init or {})
    if opts.init == "random":
        rng = np.random.default_rng(opts.seed)
        d0 = init.get("d", uniform_layout(s) if not opts.optimize_positions
                      else random_layout(s, rng))
        d0 = ApvState(getattr(d0, "positions", d0))
        W0 = init.get("W", random_beamformer(s, d0, rng))
    else:
        d0 = ApvState(getattr(init.get("d"), "positions", init.get("d"))) \
            if init.get("d") is not None else uniform_layout(s)
        W0 = init.get("W")
        if W0 is None:
            W0 = default_beamformer(s, d0)
    W0 = _feasible(np.asarray(W0, dtype=complex), s, d0)
    return np.asarray(W0, dtype=complex), d0


def bsum_solve(s, init=None, opts=None, label="fa"):
    """Jointly optimise beamformers and positions.

    ``init`` may carry ``W`` and/or ``d``; missing parts follow
    ``opts.init``. The returned ``W``/``d`` are the iterate with the largest
    sum secrecy seen (the last one on ties); the trace keeps every iterate.
    """
    opts = opts or SolverOptions()
    s.check_feasible()
    W, d = initial_point(s, opts, init)
    if not d.is_feasible(s.aperture_length, s.min_spacing):
        raise ScenarioError("initial antenna layout violates the position constraints")
    t0 = time.perf_counter()
    ch = build_channels(s, d)
    st = update_auxiliaries(ch, W)

    def row(it, F):
        rep = metrics.evaluate(ch, W)
        return {"iteration": it, "surrogate": F, "objective": eval_surrogate(ch, W, st),
                "sum_secrecy": rep.sum_secrecy, "probing_power": rep.probing_power,
                "total_power": rep.total_power, "max_violation": _max_violation(s, W, d),
                "wall_time": time.perf_counter() - t0}, rep

    first, rep = row(0, eval_surrogate(ch, W, st))
    rows = [first]
    best = (rep.sum_secrecy, 0, W.copy(), d, rep)
    status = "max_iters"
    F_prev = first["surrogate"]
    for it in range(1, opts.max_outer + 1):
        st = update_auxiliaries(ch, W, st)
        W, _, winfo = solve_beamformer_block(ch, st, W, s, opts.pda)
        apv_info = {}
        if opts.optimize_positions and s.M > 1:
            if opts.refresh_before_positions:
                st = update_auxiliaries(ch, W, st)
            d, _, apv_info = solve_apv_block(ch, W, st, d, s, opts.epg)
            ch = build_channels(s, d)
            st = rebuild_caches(ch, st)
        F = eval_surrogate(ch, W, st)
        # objective column: surrogate after refreshing, i.e. the true value
        st_tight = update_auxiliaries(ch, W, st)
        r, rep = row(it, F)
        r["objective"] = eval_surrogate(ch, W, st_tight)
        rows.append(r)
        if rep.sum_secrecy >= best[0]:
            best = (rep.sum_secrecy, it, W.copy(), d, rep)
        change = abs(F_prev - F) / max(abs(F_prev), 1e-12)
        F_prev = F
        if change < opts.tol:
            status = "converged"
            break
        if winfo.get("kept_initial") and apv_info.get("stalled"):
            status = "stalled"
            break
    _, best_it, W_best, d_best, rep_best = best
    audit = feasibility_audit(s, W_best, d_best)
    return SolverReport(rows=rows, status=status, W=W_best, d=d_best.positions,
                        final=rep_best, best_iteration=best_it, audit=audit, label=label)


def fpa_baseline(s, opts=None, init=None):
    """Beamformer-only optimisation on the fixed uniform array."""
    from dataclasses import replace
    opts = replace(opts or SolverOptions(), optimize_positions=False)
    init = dict(init or {})
    init["d"] = uniform_layout(s)
    return bsum_solve(s, init=init, opts=opts, label="fpa")


def fa_from_fpa(s, fpa, opts=None):
    """Position optimisation warm-started at the baseline solution."""
    return bsum_solve(s, init={"W": fpa.W, "d": fpa.d}, opts=opts, label="fa")


def start_layouts(s, n_spread, n_random=0, seed=0):
    """Deterministic spread layouts from ``lambda/2`` spacing up to the full
    aperture (the ``lambda/2`` one is the fixed array itself and is skipped),
    followed by seeded random layouts."""
    M = s.num_antennas
    out = []
    if M > 1 and n_spread > 0:
        lo = max(s.wavelength / 2.0, s.min_spacing)
        hi = s.aperture_length / (M - 1)
        for step in np.linspace(lo, hi, n_spread + 1)[1:]:
            out.append((f"spread:{step:.6g}", spread_layout(s, step)))
    rng = np.random.default_rng(seed)
    for i in range(n_random):
        out.append((f"random:{seed}:{i}", random_layout(s, rng)))
    return out


def fa_multistart(s, fpa=None, opts=None):
    """Best FA solution over several starting layouts.

    The position block is a local method and the secrecy landscape in
    ``d`` has many basins, so one start from the fixed array tends to stay
    near it. This runs the FPA warm start plus ``opts.layout_starts``
    spread layouts and ``opts.random_starts`` random ones and keeps the
    run with the largest sum secrecy. Because the warm start is always
    included, the result never falls below the warm-started run.
    """
    opts = opts or SolverOptions()
    if fpa is None:
        fpa = fpa_baseline(s, opts)
    best = fa_from_fpa(s, fpa, opts)
    starts = [("fpa", best.sum_secrecy)]
    for name, d0 in start_layouts(s, opts.layout_starts, opts.random_starts, opts.seed):
        rep = bsum_solve(s, init={"d": d0}, opts=opts)
        starts.append((name, rep.sum_secrecy))
        if rep.sum_secrecy > best.sum_secrecy:
            best = rep
    best.starts = starts
    return best
