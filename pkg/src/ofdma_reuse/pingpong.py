"""Distributed shared-band allocation by alternating best responses.

Each cell, given the neighbour's shared-band power, sizes its own
shared-band users (:func:`cell_response`).  Iterating the two responses
from zero converges to the unique fixed point whenever the users can be
served at all; otherwise the powers grow without bound.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .kernels import DEFAULT_CONFIG, KernelConfig, solve_level
from .system import SystemParams, g1


@dataclass
class InterferenceCellSolve:
    """``beta1`` is ``nan`` for an empty user set."""

    beta1: float
    q1: float
    gamma1: np.ndarray
    p1: np.ndarray
    gains: np.ndarray  # g1 at the neighbour power used


@dataclass
class PingPongResult:
    cell_a: InterferenceCellSolve
    cell_b: InterferenceCellSolve
    iterations: int
    converged: bool
    diverged: bool = False
    trace: list = field(default_factory=list)

    @property
    def q1(self):
        return self.cell_a.q1, self.cell_b.q1


def cell_response(positions, rates, q1_neighbor: float, params: SystemParams,
                  config: KernelConfig = DEFAULT_CONFIG, beta_guess=None) -> InterferenceCellSolve:
    """Shared-band allocation of one cell with the neighbour's power frozen.

    ``rates`` are normalized (nats/s/Hz); the users share ``params.alpha``.
    """
    positions = np.atleast_1d(np.asarray(positions, dtype=float))
    rates = np.atleast_1d(np.asarray(rates, dtype=float))
    if positions.size == 0:
        e = np.zeros(0)
        return InterferenceCellSolve(math.nan, 0.0, e, e, e)
    if not params.alpha > 0:
        raise ValueError("shared-band users need alpha > 0")
    gains = np.atleast_1d(g1(positions, q1_neighbor, params))
    sol = solve_level(rates, gains, params.alpha, config, beta_guess)
    gamma = rates / sol.levels.cap
    p = sol.levels.snr / gains
    return InterferenceCellSolve(sol.beta, float(np.dot(gamma, p)), gamma, p, gains)


def run_pingpong(cell_a, cell_b, params: SystemParams, fp_tol: float = 1e-6,
                 max_iters: int = 200, q1_b_init: float = 0.0, ceiling: float | None = None,
                 config: KernelConfig = DEFAULT_CONFIG) -> PingPongResult:
    """Gauss-Seidel iteration A then B until both powers settle.

    ``cell_a`` and ``cell_b`` are the shared-band subsets (CellScenario).
    Stops when both q1 values move by at most ``fp_tol`` relative.  Powers
    above ``ceiling`` flag divergence.
    """
    if max_iters < 1:
        raise ValueError("max_iters must be >= 1")
    xa, ra = cell_a.positions, cell_a.normalized_rates(params)
    xb, rb = cell_b.positions, cell_b.normalized_rates(params)
    qb = float(q1_b_init)
    qa = math.nan
    ba = bb = None
    trace = []
    for it in range(1, max_iters + 1):
        sa = cell_response(xa, ra, qb, params, config, ba)
        sb = cell_response(xb, rb, sa.q1, params, config, bb)
        ba, bb = sa.beta1, sb.beta1
        trace.append((it, sa.q1, sb.q1))
        if ceiling is not None and max(sa.q1, sb.q1) > ceiling:
            return PingPongResult(sa, sb, it, False, True, trace)
        done = (_close(sa.q1, qa, fp_tol) and _close(sb.q1, qb, fp_tol))
        qa, qb = sa.q1, sb.q1
        if done:
            return PingPongResult(sa, sb, it, True, False, trace)
    return PingPongResult(sa, sb, max_iters, False, False, trace)


def _close(new, old, tol):
    if math.isnan(old):
        return False
    return abs(new - old) <= tol * max(abs(new), abs(old)) or new == old


def write_trace_csv(path, result: PingPongResult):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iter", "q1_a", "q1_b"])
        for it, qa, qb in result.trace:
            w.writerow([it, f"{qa:.17g}", f"{qb:.17g}"])


# -- standard interference function checks ------------------------------------------


@dataclass
class PropertyReport:
    positivity: list = field(default_factory=list)
    monotonicity: list = field(default_factory=list)
    scalability: list = field(default_factory=list)
    checked: int = 0

    @property
    def ok(self) -> bool:
        return not (self.positivity or self.monotonicity or self.scalability)


def interference_map(cell_a, cell_b, params: SystemParams, config: KernelConfig = DEFAULT_CONFIG):
    """Return the joint best-response map (qa, qb) -> (I_A(qb), I_B(qa))."""
    xa, ra = cell_a.positions, cell_a.normalized_rates(params)
    xb, rb = cell_b.positions, cell_b.normalized_rates(params)

    def best(qa, qb):
        return (cell_response(xa, ra, qb, params, config).q1,
                cell_response(xb, rb, qa, params, config).q1)

    return best


def check_interference_function_properties(q_grid, cells, params: SystemParams,
                                           t_values=(1.5, 2.0, 10.0), rel_tol: float = 1e-12,
                                           config: KernelConfig = DEFAULT_CONFIG) -> PropertyReport:
    """Look for violations of positivity, monotonicity and scalability.

    ``q_grid`` is a 1-D array of powers; all pairs (qa, qb) are tested.
    Monotonicity compares every componentwise-ordered pair of grid points.
    """
    best = interference_map(cells[0], cells[1], params, config)
    q = np.asarray(q_grid, dtype=float)
    pts = [(a, b) for a in q for b in q]
    vals = {p: best(*p) for p in pts}
    rep = PropertyReport()
    nonempty = (len(cells[0]) > 0, len(cells[1]) > 0)
    for p, v in vals.items():
        rep.checked += 1
        if any(ne and not vi > 0 for ne, vi in zip(nonempty, v)):
            rep.positivity.append((p, v))
        for t in t_values:
            vt = best(t * p[0], t * p[1])
            if any(ne and not t * vi > wi for ne, vi, wi in zip(nonempty, v, vt)):
                rep.scalability.append((p, t, v, vt))
    for p in pts:
        for r in pts:
            if p[0] >= r[0] and p[1] >= r[1] and p != r:
                vp, vr = vals[p], vals[r]
                if any(a < b * (1 - rel_tol) for a, b in zip(vp, vr)):
                    rep.monotonicity.append((p, r, vp, vr))
    return rep
