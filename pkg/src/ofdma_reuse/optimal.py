"""Optimal and fixed-pivot joint allocation for the two-cell system.

An optimal allocation has a binary structure: in each cell the users
nearest to the station use only the shared band, the farthest ones only the
protected band, and a single pivot user may be split between both.  A cell
is therefore described by a continuous load ``theta`` in ``[0, K]``: users
``1 .. L-1`` in the shared band, the pivot ``L = ceil(theta)`` carrying a
fraction ``theta - (L - 1)`` of its rate there and the rest protected.

For a fixed load the two band levels follow from the band budgets alone:
``beta1_tilde = beta1 / (1 + xi)`` from the shared band with the raw gains
``g1`` and ``beta2`` from the protected band.  The price ``xi`` of
shared-band power then follows from the pivot indifference condition

    g1_L F(g1_L beta1_tilde) = (1 + xi) g2_L F(g2_L beta2).

Two search strategies are provided.  ``method="pivot"`` minimizes total
power over the pair of loads, with the shared-band powers at the ping-pong
fixed point for each candidate.  ``method="grid"`` scans shared-band power
caps ``(Q1_A, Q1_B)`` on a log grid and solves the capped cell systems at
each point, as a slower, independent reference.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .kernels import DEFAULT_CONFIG, KernelConfig, KernelConvergenceError, cap_f, e_log, solve_level
from .pingpong import run_pingpong
from .single_cell import all_protected_power, allocate_protected
from .system import CellScenario, SystemParams, cross_gain, g1, g2
from .system import rho as rho_gain


class NoSolution:
    """Marker: the capped cell system has no solution at this point."""

    def __init__(self, reason: str):
        self.reason = reason

    def __bool__(self):
        return False

    def __repr__(self):
        return f"NoSolution({self.reason!r})"


class InfeasibleError(RuntimeError):
    """No allocation meets the rate targets (or the search found none)."""


@dataclass
class CellSystemSolution:
    """Per-cell allocation; arrays follow the cell's nearest-first order."""

    pivot_index: int  # 1-based; 0 when no user touches the shared band
    theta: float
    beta1_tilde: float
    beta2: float
    xi: float
    q1: float
    q2: float
    gamma1: np.ndarray
    gamma2: np.ndarray
    p1: np.ndarray
    p2: np.ndarray
    gains1: np.ndarray
    gains2: np.ndarray
    positions: np.ndarray

    @property
    def beta1(self) -> float:
        return self.beta1_tilde * (1.0 + self.xi)

    @property
    def pivot_distance(self) -> float:
        if self.pivot_index == 0:
            return float("nan")
        return float(self.positions[self.pivot_index - 1])

    def delivered_rates(self) -> np.ndarray:
        """Ergodic rate per user in nats/s/Hz."""
        return (self.gamma1 * e_log(self.gains1 * self.p1)
                + self.gamma2 * e_log(self.gains2 * self.p2))

    def split_users(self) -> np.ndarray:
        return np.flatnonzero((self.gamma1 > 0) & (self.gamma2 > 0))

    def to_dict(self) -> dict:
        return {
            "pivot_index": self.pivot_index,
            "theta": self.theta,
            "beta1": _num(self.beta1),
            "beta1_tilde": _num(self.beta1_tilde),
            "beta2": _num(self.beta2),
            "xi": _num(self.xi),
            "q1": self.q1,
            "q2": self.q2,
            "users": [
                {"x_m": float(x), "gamma1": float(a), "gamma2": float(b), "p1": float(c), "p2": float(d)}
                for x, a, b, c, d in zip(self.positions, self.gamma1, self.gamma2, self.p1, self.p2)
            ],
        }


def _num(v):
    return None if v is None or not math.isfinite(v) else float(v)


@dataclass
class JointAllocationResult:
    cell_a: CellSystemSolution
    cell_b: CellSystemSolution
    q_total: float
    grid_point: tuple
    method: str = "pivot"
    grid_diagnostics: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "q_total": self.q_total,
            "grid_point": list(self.grid_point),
            "cells": {"A": self.cell_a.to_dict(), "B": self.cell_b.to_dict()},
        }


# -- per-cell model ------------------------------------------------------------------


@dataclass
class _Band:
    beta: float
    gamma: np.ndarray
    p: np.ndarray
    ratio_pivot: float  # F at the pivot's level in this band
    power: float


class CellModel:
    """Load-parametrized allocations of one cell.

    ``evaluate(theta, q_bar)`` returns the allocation for the load ``theta``
    with the neighbour's shared-band power ``q_bar``.
    """

    def __init__(self, cell: CellScenario, params: SystemParams, config: KernelConfig = DEFAULT_CONFIG):
        self.cell = cell
        self.params = params
        self.config = config
        self.x = cell.positions
        self.r = cell.normalized_rates(params)
        self.K = len(cell)
        self.alpha = params.alpha
        self.share = params.protected_share
        self.g2 = np.atleast_1d(g2(self.x, params)) if self.K else np.zeros(0)
        # path gains are fixed; only the neighbour's power changes g1
        self._rho = np.atleast_1d(rho_gain(self.x, params.path_loss)) if self.K else np.zeros(0)
        self._cross = np.atleast_1d(cross_gain(self.x, params)) if self.K else np.zeros(0)
        self._sigma2 = params.noise_power
        self._guess1 = None
        self._guess2 = None
        self._band2_cache = {}
        self._g1_cache = (None, None)

    @property
    def theta_range(self):
        lo = 0.0 if self.share > 0 else float(self.K)
        hi = float(self.K) if self.alpha > 0 else 0.0
        return lo, hi

    def gains1(self, q_bar):
        if self._g1_cache[0] != q_bar:
            if not q_bar >= 0:
                raise ValueError("q_bar must be non-negative")
            self._g1_cache = (q_bar, self._rho / (self._cross * q_bar + self._sigma2))
        return self._g1_cache[1]

    def split(self, theta):
        """(pivot index L, fraction of the pivot rate in the shared band)."""
        L = max(1, int(math.ceil(theta)))
        return L, theta - (L - 1)

    def _band(self, w, g, budget, guess, pivot):
        """Fill one band with weights w; ``pivot`` indexes the pivot user in w."""
        if not (w.size and w.max() > 0):
            n = w.size
            return _Band(0.0, np.zeros(n), np.zeros(n), 1.0, 0.0)
        try:
            sol = solve_level(w, g, budget, self.config, guess)
        except KernelConvergenceError:
            # no finite power serves these users in this band
            n = w.size
            return _Band(math.inf, np.full(n, math.nan), np.full(n, math.inf), 0.0, math.inf)
        lv = sol.levels
        gamma = np.where(w > 0, w / lv.cap, 0.0)
        p = np.where(w > 0, lv.snr / g, 0.0)
        return _Band(sol.beta, gamma, p, float(lv.ratio[pivot]), float(np.dot(gamma, p)))

    def band1(self, theta, q_bar):
        L, rho = self.split(theta)
        w = self.r[:L].copy()
        w[-1] *= rho
        band = self._band(w, self.gains1(q_bar)[:L], self.alpha, self._guess1, -1)
        if band.beta > 0:
            self._guess1 = band.beta
        return band

    def band2(self, theta):
        key = float(theta)
        hit = self._band2_cache.get(key)
        if hit is not None:
            return hit
        L, rho = self.split(theta)
        w = self.r[L - 1:].copy()
        w[0] *= 1.0 - rho
        band = self._band(w, self.g2[L - 1:], self.share, self._guess2, 0)
        if band.beta > 0:
            self._guess2 = band.beta
        if len(self._band2_cache) > 4096:
            self._band2_cache.clear()
        self._band2_cache[key] = band
        return band

    def q1(self, theta, q_bar) -> float:
        return self.band1(theta, q_bar).power

    def xi(self, theta, q_bar) -> float:
        L, _ = self.split(theta)
        b1, b2 = self.band1(theta, q_bar), self.band2(theta)
        gl1 = self.gains1(q_bar)[L - 1]
        return gl1 * b1.ratio_pivot / (self.g2[L - 1] * b2.ratio_pivot) - 1.0

    def interference_sensitivity(self, theta, q_bar) -> float:
        """d log(power needed) / d q_bar summed over shared-band power: sum_k W_k c_k / (c_k q_bar + sigma2)."""
        L, _ = self.split(theta)
        b1 = self.band1(theta, q_bar)
        c = self._cross[:L]
        return float(np.sum(b1.gamma * b1.p * c / (c * q_bar + self._sigma2)))

    def evaluate(self, theta, q_bar) -> CellSystemSolution:
        K = self.K
        if K == 0:
            e = np.zeros(0)
            return CellSystemSolution(0, 0.0, math.nan, math.nan, math.nan, 0.0, 0.0, e, e, e, e, e, e, e)
        L, rho = self.split(theta)
        b1, b2 = self.band1(theta, q_bar), self.band2(theta)
        gamma1 = np.zeros(K)
        p1 = np.zeros(K)
        gamma2 = np.zeros(K)
        p2 = np.zeros(K)
        gamma1[:L], p1[:L] = b1.gamma, b1.p
        gamma2[L - 1:], p2[L - 1:] = b2.gamma, b2.p
        pivot = L if theta > 0 else 0
        xi = self.xi(theta, q_bar) if 0 < self.alpha and self.share > 0 else math.nan
        return CellSystemSolution(
            pivot, float(theta), b1.beta if theta > 0 else math.nan,
            b2.beta if theta < K else math.nan, xi, b1.power, b2.power,
            gamma1, gamma2, p1, p2, self.gains1(q_bar).copy(), self.g2.copy(), self.x.copy())


# -- a_l, b_l and the pivot rule --------------------------------------------------


def pivot_sequences(cell: CellScenario, q1_neighbor: float, params: SystemParams,
                    config: KernelConfig = DEFAULT_CONFIG):
    """Levels a_l, b_l for l = 0..K.

    a_l: the first l users fill the shared band with raw gains g1.
    b_l: users l+1..K fill the protected band.  a_0 = b_K = 0.
    """
    m = CellModel(cell, params, config)
    K = m.K
    a = np.zeros(K + 1)
    b = np.zeros(K + 1)
    g = m.gains1(q1_neighbor)
    for l in range(1, K + 1):
        a[l] = solve_level(m.r[:l], g[:l], params.alpha, config).beta if params.alpha > 0 else math.inf
    for l in range(0, K):
        b[l] = solve_level(m.r[l:], m.g2[l:], params.protected_share, config).beta \
            if params.protected_share > 0 else math.inf
    return a, b


def pivot_rule(cell: CellScenario, q1_neighbor: float, xi: float, params: SystemParams,
               literal: bool = False, config: KernelConfig = DEFAULT_CONFIG) -> int:
    """Smallest l (1-based) with  h_l F(g1_l a_l) <= g2_l F(g2_l b_l),  h = g1 / (1 + xi).

    Since a_l is built from the raw shared-band gains it already plays the
    role of beta1 / (1 + xi), so F is evaluated at g1_l a_l.  With
    ``literal=True`` the argument of F is scaled by 1 / (1 + xi) as well.
    Returns K + 1 when no index qualifies.
    """
    a, b = pivot_sequences(cell, q1_neighbor, params, config)
    gl1 = np.atleast_1d(g1(cell.positions, q1_neighbor, params))
    gl2 = np.atleast_1d(g2(cell.positions, params))
    h = gl1 / (1.0 + xi)
    for l in range(1, len(cell) + 1):
        arg = (h if literal else gl1)[l - 1] * a[l]
        lhs = h[l - 1] * cap_f(arg, config)
        rhs = gl2[l - 1] * cap_f(gl2[l - 1] * b[l], config)
        if lhs <= rhs:
            return l
    return len(cell) + 1


# -- capped cell system ----------------------------------------------------------------


def solve_cell_system(cell: CellScenario, q1_target: float, q1_neighbor: float, params: SystemParams,
                      config: KernelConfig = DEFAULT_CONFIG, rel_tol: float = 1e-12,
                      model: CellModel | None = None):
    """Minimum protected-band power when the shared-band power equals ``q1_target``.

    Returns :class:`NoSolution` when the target cannot be met with equality
    or when spending it would need a negative price ``xi`` (a smaller
    shared-band power would then do at least as well).
    """
    if q1_target < 0 or q1_neighbor < 0:
        raise ValueError("powers must be non-negative")
    m = model or CellModel(cell, params, config)
    if m.K == 0:
        return m.evaluate(0.0, q1_neighbor) if q1_target == 0 else NoSolution("empty cell")
    lo, hi = m.theta_range
    q_lo, q_hi = m.q1(lo, q1_neighbor), m.q1(hi, q1_neighbor)
    tol = rel_tol * max(q1_target, q_hi, 1e-300)
    if q1_target < q_lo - tol or q1_target > q_hi + tol:
        return NoSolution("target outside the attainable shared-band power")
    if lo == hi:
        return m.evaluate(lo, q1_neighbor)
    if q1_target <= q_lo + tol:
        theta = lo
    elif q1_target >= q_hi - tol:
        theta = hi
    else:
        # integer segment first, then a smooth root inside it
        il, ih = int(lo), int(hi)
        while ih - il > 1:
            mid = (il + ih) // 2
            if m.q1(float(mid), q1_neighbor) <= q1_target:
                il = mid
            else:
                ih = mid
        theta = optimize.brentq(lambda t: m.q1(t, q1_neighbor) - q1_target, float(il), float(ih),
                                xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
    sol = m.evaluate(theta, q1_neighbor)
    if math.isfinite(sol.xi) and sol.xi < -1e-9:
        return NoSolution("negative price: the cap exceeds the unconstrained optimum")
    return sol


# -- joint search over loads ----------------------------------------------------------------


class _JointModel:
    """Total power as a function of the two loads, at the ping-pong fixed point."""

    def __init__(self, ma: CellModel, mb: CellModel, ceiling: float, fp_tol: float = 1e-13,
                 max_iters: int = 500):
        self.ma, self.mb = ma, mb
        self.ceiling = ceiling
        self.fp_tol = fp_tol
        self.max_iters = max_iters
        self.qb = 0.0
        self.cache = {}
        self.evals = []

    def fixed_point(self, ta, tb):
        qb = self.qb
        qa_old = math.nan
        for _ in range(self.max_iters):
            qa = self.ma.q1(ta, qb)
            qb_new = self.mb.q1(tb, qa)
            if qa > self.ceiling or qb_new > self.ceiling:
                return None
            if (abs(qb_new - qb) <= self.fp_tol * max(qb_new, 1e-300)
                    and abs(qa - qa_old) <= self.fp_tol * max(qa, 1e-300)):
                qb = qb_new
                break
            qa_old, qb = qa, qb_new
        else:
            return None
        qa = self.ma.q1(ta, qb)
        self.qb = qb
        return qa, qb

    def total(self, ta, tb):
        key = (float(ta), float(tb))
        if key in self.cache:
            return self.cache[key][0]
        fp = self.fixed_point(ta, tb)
        if fp is None:
            val = math.inf
            qa = qb = math.nan
        else:
            qa, qb = fp
            val = qa + qb + self.ma.band2(ta).power + self.mb.band2(tb).power
        self.cache[key] = (val, qa, qb)
        self.evals.append((qa, qb, math.isfinite(val), val))
        return val


def _lattice_descent(J: _JointModel, start, bounds):
    (la, ha), (lb, hb) = bounds
    cur = start
    cur_v = J.total(*cur)
    while True:
        best, best_v = cur, cur_v
        for da in (-1, 0, 1):
            for db in (-1, 0, 1):
                if da == db == 0:
                    continue
                ta, tb = cur[0] + da, cur[1] + db
                if la <= ta <= ha and lb <= tb <= hb:
                    v = J.total(float(ta), float(tb))
                    if v < best_v:
                        best, best_v = (ta, tb), v
        if best == cur:
            return cur, cur_v
        cur, cur_v = best, best_v


def _search_loads(J: _JointModel, starts=None):
    ra, rb = J.ma.theta_range, J.mb.theta_range
    bounds = ((int(ra[0]), int(ra[1])), (int(rb[0]), int(rb[1])))
    if starts is None:
        mid = lambda r: int(round(0.5 * (r[0] + r[1])))
        starts = [(mid(bounds[0]), mid(bounds[1])), (bounds[0][0], bounds[1][0])]
    best, best_v = None, math.inf
    for s in starts:
        p, v = _lattice_descent(J, s, bounds)
        if v < best_v:
            best, best_v = p, v
    if best is None:
        raise InfeasibleError("no load pair gives a finite ping-pong fixed point")
    # continuous refinement in the lattice cells around the best corner
    ta0, tb0 = float(best[0]), float(best[1])
    cand = [((ta0, tb0), best_v)]
    for da in (-1, 0):
        for db in (-1, 0):
            box = ((max(ta0 + da, ra[0]), min(ta0 + da + 1, ra[1])),
                   (max(tb0 + db, rb[0]), min(tb0 + db + 1, rb[1])))
            if box[0][0] >= box[0][1] and box[1][0] >= box[1][1]:
                continue
            x0 = _feasible_start(J, (ta0, tb0), box)
            if x0 is None:
                continue
            res = optimize.minimize(lambda t: _penalized(J, t), x0, method="L-BFGS-B",
                                    bounds=box, options={"ftol": 1e-15, "gtol": 1e-13, "eps": 1e-7})
            x = (float(res.x[0]), float(res.x[1]))
            if not all(map(math.isfinite, x)):
                continue
            fx = J.total(*x)
            if not math.isfinite(fx):
                continue
            px = _polish(J, x, box)
            if px is not None:
                # the objective is flat at the optimum; keep the stationary point
                fp = J.total(*px)
                if fp <= fx * (1 + 1e-12):
                    x, fx = px, fp
            cand.append((x, fx))
    return min(cand, key=lambda c: (c[1], c[0]))


def _penalized(J: _JointModel, t):
    # infeasible loads sit beyond the power ceiling; a finite value keeps the line search usable
    v = J.total(t[0], t[1])
    return v if math.isfinite(v) else 4.0 * J.ceiling


def _feasible_start(J: _JointModel, corner, box):
    """Cell midpoint, pulled towards the feasible corner until the fixed point exists."""
    mid = np.array([0.5 * (box[0][0] + box[0][1]), 0.5 * (box[1][0] + box[1][1])])
    c = np.clip(np.array(corner, dtype=float), [box[0][0], box[1][0]], [box[0][1], box[1][1]])
    for frac in (1.0, 0.5, 0.25, 0.1, 0.01):
        x = c + frac * (mid - c)
        if math.isfinite(J.total(float(x[0]), float(x[1]))):
            return x
    return None


def _stationarity(J: _JointModel, ta, tb):
    """Residuals of  xi_A = (1 + xi_B) S_B  and  xi_B = (1 + xi_A) S_A.

    S_c is the sensitivity of cell c's required power to the other cell's
    shared-band power; both vanish at an interior optimum of the loads.
    """
    fp = J.fixed_point(ta, tb)
    if fp is None:
        return None
    qa, qb = fp
    xa, xb = J.ma.xi(ta, qb), J.mb.xi(tb, qa)
    sa = J.ma.interference_sensitivity(ta, qb)
    sb = J.mb.interference_sensitivity(tb, qa)
    return np.array([xa - (1 + xb) * sb, xb - (1 + xa) * sa])


def _polish(J: _JointModel, x, box):
    """Newton-type solve of the stationarity conditions inside one lattice cell."""
    (la, ha), (lb, hb) = box
    if not (la < x[0] < ha and lb < x[1] < hb):
        return None

    def fun(t):
        if not (la < t[0] < ha and lb < t[1] < hb):
            return np.array([1e3, 1e3])
        r = _stationarity(J, t[0], t[1])
        return np.array([1e3, 1e3]) if r is None else r

    try:
        sol = optimize.root(fun, np.array(x), method="hybr", options={"xtol": 1e-14})
    except (ArithmeticError, RuntimeError):
        return None
    t = (float(sol.x[0]), float(sol.x[1]))
    if not np.max(np.abs(sol.fun)) < 1e-10 or not (la < t[0] < ha and lb < t[1] < hb):
        return None
    return t


# -- public allocators ------------------------------------------------------------------


@dataclass(frozen=True)
class GridSpec:
    """Log grid of shared-band power caps, relative to the all-protected power."""

    lo: float = 1e-3
    hi: float = 1e3
    points: int = 32
    refinements: int = 1

    def __post_init__(self):
        if not 0 < self.lo < self.hi:
            raise ValueError("need 0 < lo < hi")
        if self.points < 2:
            raise ValueError("need at least 2 grid points")


def optimal_allocate(cell_a: CellScenario, cell_b: CellScenario, params: SystemParams,
                     grid_spec: GridSpec | None = None, method: str = "pivot",
                     config: KernelConfig = DEFAULT_CONFIG, start_distance: float | None = None
                     ) -> JointAllocationResult:
    """Jointly optimal allocation minimizing the total power of both stations.

    ``start_distance`` seeds the load search with the users nearer than it
    (for instance a limit-optimal pivot distance); otherwise the search
    starts from half-loaded cells and from the all-protected split.
    """
    ma, mb = CellModel(cell_a, params, config), CellModel(cell_b, params, config)
    bench = all_protected_power((cell_a, cell_b), params, config)
    if method == "pivot":
        J = _JointModel(ma, mb, ceiling=1e6 * bench)
        starts = None
        if start_distance is not None:
            starts = [tuple(int(np.clip(np.sum(c.positions < start_distance), *m.theta_range)) for c, m in
                            ((cell_a, ma), (cell_b, mb)))]
        (ta, tb), val = _search_loads(J, starts)
        if not math.isfinite(val):
            raise InfeasibleError("no feasible allocation found")
        qa, qb = J.fixed_point(ta, tb)
        sa, sb = ma.evaluate(ta, qb), mb.evaluate(tb, qa)
        return JointAllocationResult(sa, sb, sa.q1 + sa.q2 + sb.q1 + sb.q2, (sa.q1, sb.q1),
                                     "pivot", J.evals)
    if method == "grid":
        return _grid_allocate(ma, mb, bench, grid_spec or GridSpec())
    raise ValueError(f"unknown method {method!r}")


def _grid_allocate(ma: CellModel, mb: CellModel, bench: float, spec: GridSpec):
    diag = []

    def scan(qa_grid, qb_grid):
        best = None
        for qa in qa_grid:
            for qb in qb_grid:
                sa = solve_cell_system(ma.cell, qa, qb, ma.params, ma.config, model=ma)
                sb = solve_cell_system(mb.cell, qb, qa, mb.params, mb.config, model=mb) if sa else None
                if sa and sb:
                    tot = sa.q1 + sa.q2 + sb.q1 + sb.q2
                    diag.append((qa, qb, True, tot))
                    key = (tot, qa, qb)
                    if best is None or key < best[0]:
                        best = (key, sa, sb)
                else:
                    diag.append((qa, qb, False, math.nan))
        return best

    def axis(model, other):
        # a cell with fixed load has a single attainable power; pin it on the grid
        lo, hi = model.theta_range
        if lo == hi:
            return None
        # cells with near users can need far less than the benchmark scale
        floor = min(spec.lo * bench, model.q1(lo + 1e-3 * (hi - lo), 0.0))
        return np.geomspace(floor, spec.hi * bench, spec.points)

    ga, gb = axis(ma, mb), axis(mb, ma)
    if ga is None or gb is None:
        # a degenerate band split leaves one load fixed; the cells reduce to a ping-pong
        ta, tb = ma.theta_range[0], mb.theta_range[0]
        J = _JointModel(ma, mb, ceiling=1e6 * bench)
        if ga is not None:
            (ta, tb), _ = _search_loads(J)
        elif gb is not None:
            (ta, tb), _ = _search_loads(J)
        fp = J.fixed_point(ta, tb)
        if fp is None:
            raise InfeasibleError("ping-pong diverged")
        sa, sb = ma.evaluate(ta, fp[1]), mb.evaluate(tb, fp[0])
        return JointAllocationResult(sa, sb, sa.q1 + sa.q2 + sb.q1 + sb.q2, (sa.q1, sb.q1), "grid", J.evals)
    best = scan(ga, gb)
    if best is None:
        raise InfeasibleError("every grid point was eliminated")
    for _ in range(spec.refinements):
        (_, qa, qb), _, _ = best
        ra, rb = ga[1] / ga[0], gb[1] / gb[0]
        ga = np.geomspace(qa / ra, qa * ra, spec.points)
        gb = np.geomspace(qb / rb, qb * rb, spec.points)
        nb = scan(ga, gb)
        if nb is not None and nb[0] < best[0]:
            best = nb
    (tot, qa, qb), sa, sb = best
    return JointAllocationResult(sa, sb, tot, (qa, qb), "grid", diag)


def simplified_allocate(cell_a: CellScenario, cell_b: CellScenario, d_subopt_a: float, d_subopt_b: float,
                        params: SystemParams, fp_tol: float = 1e-12, max_iters: int = 1000,
                        config: KernelConfig = DEFAULT_CONFIG) -> JointAllocationResult:
    """Fixed-pivot allocation: users nearer than d share the band, the rest are protected.

    Raises :class:`InfeasibleError` when the ping-pong iteration diverges.
    """
    for d in (d_subopt_a, d_subopt_b):
        if not params.epsilon_m <= d <= params.cell_radius_m:
            raise ValueError("pivot distance outside [epsilon, D]")
    bench = all_protected_power((cell_a, cell_b), params, config)
    masks = [c.positions < d for c, d in ((cell_a, d_subopt_a), (cell_b, d_subopt_b))]
    if params.alpha <= 0 and any(m.any() for m in masks):
        raise InfeasibleError("shared band is empty but users were assigned to it")
    if params.protected_share <= 0 and any((~m).any() for m in masks):
        raise InfeasibleError("protected band is empty but users were assigned to it")
    ia, ib = cell_a.subset(masks[0]), cell_b.subset(masks[1])
    pp = run_pingpong(ia, ib, params, fp_tol=fp_tol, max_iters=max_iters, ceiling=1e6 * bench, config=config)
    if not pp.converged:
        raise InfeasibleError("ping-pong did not converge")
    out = []
    for cell, mask, inter in ((cell_a, masks[0], pp.cell_a), (cell_b, masks[1], pp.cell_b)):
        K = len(cell)
        gamma1, p1, gamma2, p2 = (np.zeros(K) for _ in range(4))
        gamma1[mask], p1[mask] = inter.gamma1, inter.p1
        prot = allocate_protected(np.atleast_1d(g2(cell.positions[~mask], params)),
                                  cell.normalized_rates(params)[~mask], params.protected_share, config) \
            if (~mask).any() else None
        if prot is not None:
            gamma2[~mask], p2[~mask] = prot.gamma2, prot.p2
        q_bar = pp.cell_b.q1 if cell is cell_a else pp.cell_a.q1
        gains1 = np.atleast_1d(g1(cell.positions, q_bar, params)) if K else np.zeros(0)
        gains2 = np.atleast_1d(g2(cell.positions, params)) if K else np.zeros(0)
        n1 = int(mask.sum())
        out.append(CellSystemSolution(n1, float(n1), inter.beta1, prot.beta2 if prot else math.nan, math.nan,
                                      inter.q1, prot.q2 if prot else 0.0, gamma1, gamma2, p1, p2,
                                      gains1, gains2, cell.positions))
    sa, sb = out
    return JointAllocationResult(sa, sb, sa.q1 + sa.q2 + sb.q1 + sb.q2, (sa.q1, sb.q1), "simplified")


def naive_benchmark(cell_a: CellScenario, cell_b: CellScenario, params: SystemParams,
                    config: KernelConfig = DEFAULT_CONFIG) -> float:
    """Total power with every user confined to its cell's protected band."""
    if params.protected_share <= 0:
        return math.inf
    return all_protected_power((cell_a, cell_b), params, config)


def write_diagnostics_csv(path, result: JointAllocationResult):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["q1_a", "q1_b", "feasible_flag", "q_total"])
        for qa, qb, ok, tot in result.grid_diagnostics:
            w.writerow([f"{qa:.17g}", f"{qb:.17g}", int(ok), f"{tot:.17g}"])
