"""Large-population limit of the optimal allocation.

When the number of users grows with the bandwidth, a cell is described by a
user density on ``[eps, D]`` and an average normalized rate ``r_bar``.
Users nearer than the pivot distance ``d`` use the shared band and the rest
the protected band; sums over users become integrals against the density,
evaluated here by Gauss-Legendre quadrature in ``log x``.  Each integral is
then a weighted sum over nodes, so the finite-population level solver
applies unchanged.

For a pivot distance ``d`` the shared-band level ``beta1_tilde`` comes from
the shared-band budget (raw gains ``g1``), ``beta2`` from the protected
budget, and the price ``xi`` from the pivot indifference condition.  The
total power is minimized over the pivot distances, with the shared-band
powers at the fixed point of the two cells' responses.  A cap grid over
``(Q1_A, Q1_B)``, with each cap met by solving for ``d``, is available as a
reference method.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import optimize

from .kernels import DEFAULT_CONFIG, KernelConfig, KernelConvergenceError, cap, cap_f, f_inv, solve_level
from .system import SystemParams, g1, g2


def script_f(x, beta, q_bar, xi, params: SystemParams, config: KernelConfig = DEFAULT_CONFIG):
    """Power per unit rate of a shared-band user at x: f_inv(y) / (g1 cap(y)), y = g1 beta / (1 + xi)."""
    g = g1(x, q_bar, params)
    y = np.asarray(g * np.asarray(beta) / (1.0 + np.asarray(xi)), dtype=float)
    c = np.asarray(cap(y, config))
    num = np.asarray(f_inv(y, config))
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(y > 0, num / (g * np.where(c > 0, c, 1.0)), 0.0)
    return out if out.ndim else float(out)


def script_g(x, beta, q_bar, xi, params: SystemParams, config: KernelConfig = DEFAULT_CONFIG):
    """Band fraction per unit rate: 1 / cap(g1 beta / (1 + xi)); infinite at beta = 0."""
    g = g1(x, q_bar, params)
    y = np.asarray(g * np.asarray(beta) / (1.0 + np.asarray(xi)), dtype=float)
    c = np.asarray(cap(y, config))
    with np.errstate(divide="ignore"):
        out = 1.0 / c
    return out if out.ndim else float(out)


def uniform_density(params: SystemParams):
    width = params.cell_radius_m - params.epsilon_m
    return lambda x: np.full_like(np.asarray(x, dtype=float), 1.0 / width)


@dataclass
class AsymptoticScenario:
    """Average normalized rate per cell (nats/s/Hz) and a user density.

    ``density`` maps positions to a pdf on [eps, D]; uniform by default.
    """

    params: SystemParams
    mean_rate: tuple
    density: object = None
    quad_nodes: int = 64

    def __post_init__(self):
        if np.isscalar(self.mean_rate):
            self.mean_rate = (float(self.mean_rate), float(self.mean_rate))
        self.mean_rate = tuple(float(r) for r in self.mean_rate)
        if len(self.mean_rate) != 2 or min(self.mean_rate) <= 0:
            raise ValueError("mean_rate needs two positive entries")
        self._uniform = self.density is None
        if self.density is None:
            self.density = uniform_density(self.params)
        mass = _integrate(self.density, self.params.epsilon_m, self.params.cell_radius_m, 4 * self.quad_nodes)
        if abs(mass - 1.0) > 1e-6:
            raise ValueError(f"user density integrates to {mass}, not 1")

    @classmethod
    def from_sum_rate(cls, r_t_bps: float, params: SystemParams, **kw):
        return cls(params, r_t_bps * math.log(2.0) / params.bandwidth_hz, **kw)

    @property
    def symmetric(self) -> bool:
        return self._uniform and self.mean_rate[0] == self.mean_rate[1]

    def with_alpha(self, alpha):
        return AsymptoticScenario(self.params.with_alpha(alpha), self.mean_rate,
                                  None if self._uniform else self.density, self.quad_nodes)


@lru_cache(maxsize=16)
def _legendre(n):
    return np.polynomial.legendre.leggauss(n)


def _gauss_log(a, b, n):
    """Gauss-Legendre nodes/weights for dx on [a, b], in the variable log x."""
    z, w = _legendre(n)
    la, lb = math.log(a), math.log(b)
    u = 0.5 * (lb - la) * z + 0.5 * (lb + la)
    x = np.exp(u)
    return x, 0.5 * (lb - la) * w * x


def _integrate(fun, a, b, n):
    x, w = _gauss_log(a, b, n)
    return float(np.dot(w, fun(x)))


@dataclass
class _AsymBand:
    beta: float
    power: float
    ratio_pivot: float


class AsymptoticCell:
    """Pivot-distance parametrized limit allocation of one cell."""

    def __init__(self, scenario: AsymptoticScenario, index: int, config: KernelConfig = DEFAULT_CONFIG):
        self.params = scenario.params
        self.rate = scenario.mean_rate[index]
        self.density = scenario.density
        self.n = scenario.quad_nodes
        self.config = config
        self.alpha = self.params.alpha
        self.share = self.params.protected_share
        self.eps = self.params.epsilon_m
        self.D = self.params.cell_radius_m
        self._guess1 = None
        self._guess2 = None
        self._cache2 = {}

    @property
    def d_range(self):
        lo = self.eps if self.share > 0 else self.D
        hi = self.D if self.alpha > 0 else self.eps
        return lo, hi

    def _nodes(self, a, b, pivot):
        """Quadrature nodes on [a, b] plus a zero-weight node at the pivot."""
        if b <= a:
            return np.array([pivot]), np.zeros(1)
        x, w = _gauss_log(a, b, self.n)
        w = self.rate * w * self.density(x)
        return np.append(x, pivot), np.append(w, 0.0)

    def _band(self, x, w, g, budget, guess):
        if not np.any(w > 0):
            return _AsymBand(0.0, 0.0, 1.0)
        try:
            sol = solve_level(w, g, budget, self.config, guess)
        except KernelConvergenceError:
            # the band cannot carry this population at any finite power
            return _AsymBand(math.inf, math.inf, 0.0)
        lv = sol.levels
        power = float(np.sum(w[:-1] / lv.cap[:-1] * lv.snr[:-1] / g[:-1]))
        return _AsymBand(sol.beta, power, float(lv.ratio[-1]))

    def band1(self, d, q_bar) -> _AsymBand:
        x, w = self._nodes(self.eps, d, d)
        b = self._band(x, w, np.atleast_1d(g1(x, q_bar, self.params)), self.alpha, self._guess1)
        if b.beta > 0:
            self._guess1 = b.beta
        return b

    def band2(self, d) -> _AsymBand:
        key = float(d)
        if key in self._cache2:
            return self._cache2[key]
        x, w = self._nodes(d, self.D, d)
        b = self._band(x, w, np.atleast_1d(g2(x, self.params)), self.share, self._guess2)
        if b.beta > 0:
            self._guess2 = b.beta
        if len(self._cache2) > 4096:
            self._cache2.clear()
        self._cache2[key] = b
        return b

    def q1(self, d, q_bar) -> float:
        return self.band1(d, q_bar).power

    def xi(self, d, q_bar) -> float:
        b1, b2 = self.band1(d, q_bar), self.band2(d)
        return float(g1(d, q_bar, self.params) * b1.ratio_pivot / (g2(d, self.params) * b2.ratio_pivot) - 1.0)


@dataclass
class CellLimit:
    d: float
    beta1_tilde: float
    beta2: float
    xi: float
    q1: float
    q2: float

    @property
    def beta1(self):
        return self.beta1_tilde * (1.0 + self.xi)


@dataclass
class AsymptoticSolution:
    cell_a: CellLimit
    cell_b: CellLimit
    q_t: float
    alpha: float
    epsilon_m: float
    feasible: bool = True

    @property
    def d(self):
        return self.cell_a.d, self.cell_b.d


class Infeasible:
    """Marker for an eliminated or unsolvable point."""

    def __init__(self, reason):
        self.reason = reason

    def __bool__(self):
        return False

    def __repr__(self):
        return f"Infeasible({self.reason!r})"


def _cell_limit(cell: AsymptoticCell, d, q_bar) -> CellLimit:
    b1, b2 = cell.band1(d, q_bar), cell.band2(d)
    xi = cell.xi(d, q_bar) if cell.alpha > 0 and cell.share > 0 else math.nan
    return CellLimit(float(d), b1.beta, b2.beta, xi, b1.power, b2.power)


def solve_relaxed_cell(q1_cap: float, q1_neighbor: float, scenario: AsymptoticScenario, alpha: float | None = None,
                       index: int = 0, config: KernelConfig = DEFAULT_CONFIG, cell: AsymptoticCell | None = None):
    """Pivot distance whose shared-band power meets ``q1_cap``.

    Returns ``(d, beta1_tilde, beta2, xi, q1_achieved)``.  When even d = D
    stays below the cap, the boundary solution is returned with
    ``q1_achieved < q1_cap``.  A negative price gives :class:`Infeasible`.
    """
    if alpha is not None and alpha != scenario.params.alpha:
        scenario = scenario.with_alpha(alpha)
    cell = cell or AsymptoticCell(scenario, index, config)
    lo, hi = cell.d_range
    if lo == hi:
        d = lo
    else:
        q_hi = cell.q1(hi, q1_neighbor)
        if q_hi <= q1_cap:
            d = hi
        elif q1_cap <= 0:
            d = lo
        else:
            d = _monotone_root(lambda t: cell.q1(t, q1_neighbor) - q1_cap, lo, hi)
    lim = _cell_limit(cell, d, q1_neighbor)
    if math.isfinite(lim.xi) and lim.xi < -1e-9:
        return Infeasible("negative price")
    return d, lim.beta1_tilde, lim.beta2, lim.xi, lim.q1


def _monotone_root(h, lo, hi, scan=16):
    """Root of an increasing function on [lo, hi]; falls back to a scan if monotonicity fails.

    Infinite values (unservable populations) are clipped to a huge finite number.
    """
    raw = h
    h = lambda t: min(raw(t), 1e300)
    ts = np.linspace(lo, hi, scan + 1)
    vals = np.array([h(t) for t in ts])
    if np.all(np.diff(vals) >= 0):
        i = int(np.searchsorted(vals, 0.0))
        i = min(max(i, 1), scan)
        return optimize.brentq(h, ts[i - 1], ts[i], xtol=1e-12, rtol=1e-14)
    # first sign change of a non-monotone function
    for i in range(scan):
        if vals[i] <= 0 <= vals[i + 1]:
            return optimize.brentq(h, ts[i], ts[i + 1], xtol=1e-12, rtol=1e-14)
    raise ArithmeticError("no sign change for the pivot distance")


# -- searches ---------------------------------------------------------------------------------


@dataclass
class SearchSpec:
    """Controls for the pivot-distance searches."""

    scan_points: int = 41
    xtol_m: float = 1e-6
    fp_tol: float = 1e-13
    max_fp_iters: int = 2000
    ceiling: float = 1e3  # watts; fixed points above are treated as divergent
    grid_lo: float = 1e-3
    grid_hi: float = 1e3
    grid_points: int = 32
    grid_refinements: int = 1


class _LimitJoint:
    def __init__(self, ca: AsymptoticCell, cb: AsymptoticCell, spec: SearchSpec):
        self.ca, self.cb = ca, cb
        self.spec = spec
        self.qb = 0.0

    def fixed_point(self, da, db):
        qb, qa_old = self.qb, math.nan
        tol = self.spec.fp_tol
        for _ in range(self.spec.max_fp_iters):
            qa = self.ca.q1(da, qb)
            qbn = self.cb.q1(db, qa)
            if max(qa, qbn) > self.spec.ceiling:
                return None
            if abs(qbn - qb) <= tol * max(qbn, 1e-300) and abs(qa - qa_old) <= tol * max(qa, 1e-300):
                qb = qbn
                break
            qa_old, qb = qa, qbn
        else:
            return None
        self.qb = qb
        return self.ca.q1(da, qb), qb

    def total(self, da, db):
        fp = self.fixed_point(da, db)
        if fp is None:
            return math.inf
        return fp[0] + fp[1] + self.ca.band2(da).power + self.cb.band2(db).power

    def symmetric_fixed_point(self, d):
        """q = Q1(d, q) with Aitken acceleration (both cells identical)."""
        q = min(self.qb, self.spec.ceiling)
        tol = self.spec.fp_tol
        for _ in range(self.spec.max_fp_iters):
            q1 = self.ca.q1(d, q)
            q2 = self.ca.q1(d, q1)
            if max(q1, q2) > self.spec.ceiling:
                return None
            den = q2 - 2 * q1 + q
            qn = q2 - (q2 - q1) ** 2 / den if den < 0 and q2 != q1 else q2
            if not qn >= 0:
                qn = q2
            if abs(qn - q) <= tol * max(qn, 1e-300):
                q = self.ca.q1(d, qn)
                if abs(q - qn) <= 10 * tol * max(q, 1e-300):
                    break
            q = qn
        else:
            return None
        self.qb = q
        return q

    def symmetric_total(self, d):
        q = self.symmetric_fixed_point(d)
        if q is None:
            return math.inf
        return 2.0 * (q + self.ca.band2(d).power)


def asymptotic_search(scenario: AsymptoticScenario, alpha: float | None = None, spec: SearchSpec | None = None,
                      method: str = "auto", config: KernelConfig = DEFAULT_CONFIG):
    """Minimum limit power and the optimal pivot distances.

    ``method`` is "auto" (diagonal search for symmetric scenarios, otherwise
    a 2-D bounded search), "pivot" (always 2-D), or "grid" (cap grid over
    ``(Q1_A, Q1_B)``).  Returns :class:`Infeasible` when no point works.
    """
    spec = spec or SearchSpec()
    if alpha is not None and alpha != scenario.params.alpha:
        scenario = scenario.with_alpha(alpha)
    p = scenario.params
    ca, cb = AsymptoticCell(scenario, 0, config), AsymptoticCell(scenario, 1, config)
    J = _LimitJoint(ca, cb, spec)
    if method == "auto" and scenario.symmetric:
        lo, hi = ca.d_range
        if lo == hi:
            d = lo
        else:
            d = _scan_then_brent(J.symmetric_total, lo, hi, spec)
        q = J.symmetric_fixed_point(d)
        if q is None:
            return Infeasible("shared-band powers diverge at every pivot distance")
        lim = _cell_limit(ca, d, q)
        return AsymptoticSolution(lim, lim, 2 * (lim.q1 + lim.q2), p.alpha, p.epsilon_m)
    if method in ("auto", "pivot"):
        return _pivot_search(J, ca, cb, spec, p)
    if method == "grid":
        return _grid_search(scenario, ca, cb, spec, config)
    raise ValueError(f"unknown method {method!r}")


def _scan_then_brent(fun, lo, hi, spec: SearchSpec):
    ts = np.linspace(lo, hi, spec.scan_points)
    vals = np.array([fun(t) for t in ts])
    if not np.any(np.isfinite(vals)):
        return float(ts[np.argmin(vals)])
    i = int(np.argmin(vals))
    a, b = ts[max(i - 1, 0)], ts[min(i + 1, len(ts) - 1)]
    res = optimize.minimize_scalar(fun, bounds=(a, b), method="bounded",
                                   options={"xatol": spec.xtol_m, "maxiter": 200})
    return float(res.x) if res.fun <= vals[i] else float(ts[i])


def _pivot_search(J: _LimitJoint, ca, cb, spec: SearchSpec, p: SystemParams):
    ra, rb = ca.d_range, cb.d_range
    # diagonal start, then a bounded 2-D polish
    lo, hi = max(ra[0], rb[0]), min(ra[1], rb[1])
    if lo < hi:
        d0 = _scan_then_brent(lambda t: J.total(t, t), lo, hi, spec)
        x0 = [d0, d0]
    else:
        x0 = [0.5 * sum(ra), 0.5 * sum(rb)]
    scale = p.cell_radius_m
    fun = lambda z: J.total(z[0] * scale, z[1] * scale)
    res = optimize.minimize(fun, np.array(x0) / scale, method="L-BFGS-B",
                            bounds=[(ra[0] / scale, ra[1] / scale), (rb[0] / scale, rb[1] / scale)],
                            options={"ftol": 1e-15, "gtol": 1e-12, "eps": 1e-8})
    da, db = (float(v * scale) for v in res.x)
    if not math.isfinite(res.fun):
        return Infeasible("shared-band powers diverge")
    qa, qb = J.fixed_point(da, db)
    la, lb = _cell_limit(ca, da, qb), _cell_limit(cb, db, qa)
    return AsymptoticSolution(la, lb, la.q1 + la.q2 + lb.q1 + lb.q2, p.alpha, p.epsilon_m)


def _grid_search(scenario, ca, cb, spec: SearchSpec, config):
    p = scenario.params
    # power scale: all users protected
    scale = sum(cell.band2(cell.eps).power for cell in (ca, cb)) if p.protected_share > 0 else 1e-3

    def solve(qa, qb):
        ra = solve_relaxed_cell(qa, qb, scenario, index=0, config=config, cell=ca)
        if not ra or ra[4] < qa * (1 - 1e-9):
            return None
        rb = solve_relaxed_cell(qb, qa, scenario, index=1, config=config, cell=cb)
        if not rb or rb[4] < qb * (1 - 1e-9):
            return None
        return ra, rb

    def scan(ga, gb):
        best = None
        for qa in ga:
            for qb in gb:
                sol = solve(qa, qb)
                if sol is None:
                    continue
                ra, rb = sol
                tot = qa + qb + ca.band2(ra[0]).power + cb.band2(rb[0]).power
                if best is None or (tot, qa, qb) < best[0]:
                    best = ((tot, qa, qb), ra, rb)
        return best

    ga = np.geomspace(spec.grid_lo * scale, spec.grid_hi * scale, spec.grid_points)
    gb = ga.copy()
    best = scan(ga, gb)
    if best is None:
        return Infeasible("every grid point was eliminated")
    for _ in range(spec.grid_refinements):
        (_, qa, qb), _, _ = best
        ratio = ga[1] / ga[0]
        ga = np.geomspace(qa / ratio, qa * ratio, spec.grid_points)
        gb = np.geomspace(qb / ratio, qb * ratio, spec.grid_points)
        nb = scan(ga, gb)
        if nb is not None and nb[0] < best[0]:
            best = nb
    (tot, qa, qb), ra, rb = best
    la = CellLimit(ra[0], ra[1], ra[2], ra[3], ra[4], ca.band2(ra[0]).power)
    lb = CellLimit(rb[0], rb[1], rb[2], rb[3], rb[4], cb.band2(rb[0]).power)
    return AsymptoticSolution(la, lb, tot, p.alpha, p.epsilon_m)


# -- reuse factor -------------------------------------------------------------------------


@dataclass
class SweepResult:
    """Limit power against alpha for one scenario, plus the optimum."""

    r_t_bps: float
    points: list  # AsymptoticSolution or Infeasible per alpha
    alphas: np.ndarray
    best: AsymptoticSolution | None = None

    @property
    def alpha_opt(self):
        return self.best.alpha if self.best else math.nan

    @property
    def d_opt(self):
        return self.best.cell_a.d if self.best else math.nan

    def rows(self):
        out = []
        for a, sol in zip(self.alphas, self.points):
            out.append(_row(a, self.r_t_bps, sol))
        return out


def _row(alpha, r_t, sol):
    if sol:
        return (float(alpha), r_t, sol.cell_a.d, sol.cell_a.q1, sol.cell_a.q2, sol.q_t, True)
    nan = float("nan")
    return (float(alpha), r_t, nan, nan, nan, nan, False)


def reuse_factor_sweep(scenario: AsymptoticScenario, alpha_grid, refine: bool = True,
                       spec: SearchSpec | None = None, r_t_bps: float = math.nan,
                       config: KernelConfig = DEFAULT_CONFIG) -> SweepResult:
    """Limit power on an alpha grid; the argmin is polished by a bounded scalar search."""
    alphas = np.asarray(alpha_grid, dtype=float)
    if alphas.size < 3 or np.any((alphas < 0) | (alphas > 1)):
        raise ValueError("alpha_grid needs at least 3 points in [0, 1]")
    spec = spec or SearchSpec()
    pts = []
    for a in alphas:
        try:
            pts.append(asymptotic_search(scenario, a, spec, config=config))
        except (ArithmeticError, RuntimeError) as exc:
            pts.append(Infeasible(str(exc)))
    vals = np.array([s.q_t if s else math.inf for s in pts])
    res = SweepResult(r_t_bps, pts, alphas)
    if not np.any(np.isfinite(vals)):
        return res
    i = int(np.argmin(vals))
    best = pts[i]
    if refine:
        lo, hi = alphas[max(i - 1, 0)], alphas[min(i + 1, len(alphas) - 1)]
        cache = {}

        def q_of(a):
            sol = asymptotic_search(scenario, a, spec, config=config)
            cache[a] = sol
            return sol.q_t if sol else math.inf

        r = optimize.minimize_scalar(q_of, bounds=(lo, hi), method="bounded",
                                     options={"xatol": 1e-5, "maxiter": 100})
        if r.x in cache and cache[r.x] and cache[r.x].q_t < best.q_t:
            best = cache[r.x]
    res.best = best
    return res


SWEEP_HEADER = ["alpha", "r_t_bps", "d_opt_m", "q1", "q2", "q_t", "feasible"]


def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    return f"{v:.17g}"


def write_sweep_csv(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SWEEP_HEADER)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def optimum_row(sweep: SweepResult):
    return _row(sweep.alpha_opt, sweep.r_t_bps, sweep.best)
