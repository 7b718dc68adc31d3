"""Expectations over a unit-mean exponential fading variable and their inverses.

With ``Z ~ Exp(1)``:

* ``e_log(x)   = E[log(1 + x Z)]``
* ``e_ratio(x) = E[Z / (1 + x Z)]``
* ``f(x)       = e_log(x) / e_ratio(x) - x``
* ``cap(y)     = e_log(f_inv(y))``
* ``cap_f(y)   = e_ratio(f_inv(y))``

Every public function takes a scalar or an array and returns the same shape.

The fast path evaluates ``e_log(x) = exp(1/x) E1(1/x)`` in closed form
(compiled with numba) and switches to the asymptotic power series below
``SERIES_CUTOFF``, where the closed form cancels catastrophically.
:func:`e_log_quad` and :func:`e_ratio_quad` compute the same expectations
by Gauss-Laguerre quadrature with an adaptive fallback, for cross-checks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numba
import numpy as np
from scipy import integrate


class KernelDomainError(ValueError):
    """Argument outside the domain of a kernel function."""


class KernelConvergenceError(RuntimeError):
    """Monotone inversion failed to bracket or converge."""


@dataclass(frozen=True)
class KernelConfig:
    quad_abs_tol: float = 1e-14
    quad_rel_tol: float = 1e-12
    root_tol: float = 1e-13
    max_bracket_expansions: int = 200
    laguerre_nodes: int = 64

    def __post_init__(self):
        for name in ("quad_abs_tol", "quad_rel_tol", "root_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be strictly positive")
        if self.root_tol < 10 * np.finfo(float).eps:
            raise ValueError("root_tol must be at least 10 * machine epsilon")
        if self.max_bracket_expansions < 1:
            raise ValueError("max_bracket_expansions must be >= 1")


DEFAULT_CONFIG = KernelConfig()

# The closed form loses about eps/x**2 relative accuracy in f; 30 terms of
# the asymptotic series are good to ~1e-15 below the cutoff.
SERIES_CUTOFF = 0.02
_N_TERMS = 30
_EULER = 0.5772156649015329

_fact = [math.factorial(n) for n in range(_N_TERMS + 3)]
# ascending powers of x
_C_LOG = np.array([0.0] + [(-1.0) ** (n + 1) * _fact[n - 1] for n in range(1, _N_TERMS + 1)])
_C_RATIO = np.array([(-1.0) ** n * _fact[n + 1] for n in range(_N_TERMS + 1)])
_C_NUM = np.array([0.0, 0.0] + [(-1.0) ** m * (m - 1) * _fact[m - 1] for m in range(2, _N_TERMS + 1)])
_C_SQ = np.array([(-1.0) ** n * (n + 1) * _fact[n + 2] for n in range(_N_TERMS + 1)])


@numba.njit(cache=True)
def _horner(c, x):
    acc = 0.0
    for i in range(c.size - 1, -1, -1):
        acc = acc * x + c[i]
    return acc


@numba.njit(cache=True)
def _scaled_e1(u):
    """exp(u) * E1(u) for u > 0."""
    if u <= 2.0:
        s = 0.0
        term = 1.0
        for k in range(1, 40):
            term *= -u / k
            s += term / k
        return math.exp(u) * (-_EULER - math.log(u) - s)
    # modified Lentz on the classical continued fraction
    b = u + 1.0
    c = 1e300
    d = 1.0 / b
    h = d
    for i in range(1, 500):
        a = -float(i * i)
        b += 2.0
        d = 1.0 / (a * d + b)
        c = b + a / c
        de = c * d
        h *= de
        if abs(de - 1.0) < 1e-16:
            break
    return h


@numba.njit(cache=True)
def _moments(x):
    """(e_log, e_ratio, f numerator, E[Z^2/(1+xZ)^2]) at x > 0.

    f = numerator / e_ratio and f' = e_log * last / e_ratio**2.
    """
    if x < SERIES_CUTOFF:
        return (_horner(_C_LOG, x), _horner(_C_RATIO, x), _horner(_C_NUM, x), _horner(_C_SQ, x))
    u = 1.0 / x
    lg = _scaled_e1(u)
    rt = u * (1.0 - u * lg)
    # uses E[1/(1+xZ)^2] == E[Z/(1+xZ)]
    return lg, rt, lg - x * rt, u * u * (1.0 - 2.0 * u * lg + rt)


@numba.njit(cache=True)
def _f_scalar(x):
    if x <= 0.0:
        return 0.0
    _, r, n, _ = _moments(x)
    return n / r


@numba.njit(cache=True)
def _guess(y):
    # f(x) ~ x**2 near zero, ~ x (log x - 1 - euler) for large x
    if y < 4.0:
        return math.sqrt(y)
    lg = math.log(y)
    return y / max(lg - math.log(lg) - 0.5, 1.0)


@numba.njit(cache=True)
def _finv_scalar(y, x0, tol, max_expand):
    """Solve f(x) = y for y > 0.  Returns (x, ok).

    log f(exp v) is increasing and concave in v, so Newton on v lands below
    the root after one step and then climbs monotonically.  Bisection on a
    doubled bracket is the fallback.
    """
    w = math.log(y)
    v = math.log(x0 if x0 > 0.0 else _guess(y))
    for _ in range(60):
        x = math.exp(v)
        lg, rt, n, m = _moments(x)
        fx = n / rt
        step = (math.log(fx) - w) / (x * lg * m / (rt * rt) / fx)
        v -= step
        if abs(step) <= tol:
            return math.exp(v), True
    lo, hi = -1.0, 1.0
    k = 0
    while _f_scalar(math.exp(lo)) > y:
        lo *= 2.0
        k += 1
        if k > max_expand:
            return math.nan, False
    k = 0
    while _f_scalar(math.exp(hi)) < y:
        hi *= 2.0
        k += 1
        if k > max_expand:
            return math.nan, False
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if _f_scalar(math.exp(mid)) > y:
            hi = mid
        else:
            lo = mid
    return math.exp(0.5 * (lo + hi)), True


@numba.njit(cache=True)
def _eval_levels(y, guess, tol, max_expand, snr, capv, ratio, dcap):
    """Fill snr = f_inv(y), cap, cap_f and d cap/dy.  Returns False on failure."""
    for i in range(y.size):
        yi = y[i]
        if yi <= 0.0:
            snr[i] = 0.0
            capv[i] = 0.0
            ratio[i] = 1.0
            dcap[i] = math.inf  # cap(y) ~ sqrt(y) near 0
            continue
        x, ok = _finv_scalar(yi, guess[i], tol, max_expand)
        if not ok:
            return False
        lg, rt, _, m = _moments(x)
        snr[i] = x
        capv[i] = lg
        ratio[i] = rt
        dcap[i] = rt / (lg * m / (rt * rt))
    return True


@numba.njit(cache=True)
def _vec_moments(x, out_l, out_r, out_f, out_fp):
    for i in range(x.size):
        xi = x[i]
        if xi <= 0.0:
            out_l[i] = 0.0
            out_r[i] = 1.0
            out_f[i] = 0.0
            out_fp[i] = 0.0
            continue
        lg, rt, n, m = _moments(xi)
        out_l[i] = lg
        out_r[i] = rt
        out_f[i] = n / rt
        out_fp[i] = lg * m / (rt * rt)


@numba.njit(cache=True)
def _level_start(w, g, budget):
    tot = 0.0
    lg = 0.0
    for i in range(w.size):
        tot += w[i]
        lg += w[i] * math.log(g[i])
    c = tot / budget
    x = math.expm1(c) * math.exp(_EULER * min(c, 1.0))
    return math.log(_f_scalar(x)) - lg / tot


@numba.njit(cache=True)
def _solve_level(w, g, budget, b0, tol, max_expand, snr, capv, ratio, dcap):
    """Solve sum_k w_k / cap(g_k beta) = budget for beta > 0.

    Safeguarded Newton on log(beta); the left side is strictly decreasing.
    Per-user outputs are filled at the solution.  Returns (beta, ok).
    The inner inversions are warm-started from the previous iterate.
    """
    n = w.size
    if not np.isfinite(b0):
        b0 = _level_start(w, g, budget)
    b = b0
    lo = -math.inf
    hi = math.inf
    lt = math.log(budget)
    slope = np.empty(n)
    for i in range(n):
        snr[i] = 0.0
    for _ in range(200):
        eb = math.exp(b)
        s = 0.0
        ds = 0.0
        for i in range(n):
            x, ok = _finv_scalar(g[i] * eb, snr[i], tol, max_expand)
            if not ok:
                return math.nan, False
            lg, rt, num, m = _moments(x)
            fp = lg * m / (rt * rt)
            snr[i] = x
            capv[i] = lg
            ratio[i] = rt
            dcap[i] = rt / fp
            slope[i] = num / rt / (x * fp)  # d log x / d log y
            s += w[i] / lg
            ds += w[i] * dcap[i] * g[i] * eb / (lg * lg)
        phi = math.log(s) - lt
        if phi > 0.0:
            lo = b
        else:
            hi = b
        if abs(phi) < 1e-15:
            return eb, True
        step = phi * s / ds
        step = max(min(step, 8.0), -8.0)
        nb = b + step
        if not (lo < nb < hi):
            if np.isfinite(lo) and np.isfinite(hi):
                nb = 0.5 * (lo + hi)
            elif np.isfinite(lo):
                nb = lo + 8.0
            else:
                nb = hi - 8.0
        for i in range(n):
            snr[i] *= math.exp((nb - b) * slope[i])
        done = abs(nb - b) <= tol
        b = nb
        if done:
            # refresh outputs at the final point
            eb = math.exp(b)
            for i in range(n):
                x, ok = _finv_scalar(g[i] * eb, snr[i], tol, max_expand)
                lg, rt, num, m = _moments(x)
                snr[i] = x
                capv[i] = lg
                ratio[i] = rt
                dcap[i] = rt / (lg * m / (rt * rt))
            return eb, True
    return math.nan, False


def _as_array(x, name="x"):
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise KernelDomainError(f"{name} must be finite")
    if np.any(arr < 0):
        raise KernelDomainError(f"{name} must be non-negative")
    return arr


def _wrap(arr, like):
    return arr if np.ndim(like) else float(arr.reshape(()))


def _all_moments(x):
    arr = _as_array(x).ravel()
    outs = [np.empty_like(arr) for _ in range(4)]
    _vec_moments(arr, *outs)
    shape = np.shape(x)
    return [o.reshape(shape) for o in outs]


def e_log(x):
    """E[log(1 + xZ)] for x >= 0."""
    return _wrap(_all_moments(x)[0], x)


def e_ratio(x):
    """E[Z / (1 + xZ)] for x >= 0; equals 1 at x = 0."""
    return _wrap(_all_moments(x)[1], x)


def f(x):
    """e_log(x) / e_ratio(x) - x, continuous at f(0) = 0."""
    return _wrap(_all_moments(x)[2], x)


def f_prime(x):
    return _wrap(_all_moments(x)[3], x)


@dataclass
class LevelEval:
    """f_inv and friends on a vector of levels y = gain * beta."""

    snr: np.ndarray  # f_inv(y)
    cap: np.ndarray  # e_log(snr) == cap(y)
    ratio: np.ndarray  # e_ratio(snr) == cap_f(y)
    dcap: np.ndarray  # d cap / d y


def evaluate_levels(y, config: KernelConfig = DEFAULT_CONFIG, snr_guess=None) -> LevelEval:
    y = _as_array(y, "y")
    flat = np.ascontiguousarray(y.ravel())
    guess = np.zeros_like(flat) if snr_guess is None else np.asarray(snr_guess, dtype=float).ravel()
    outs = [np.empty_like(flat) for _ in range(4)]
    if not _eval_levels(flat, guess, config.root_tol, config.max_bracket_expansions, *outs):
        raise KernelConvergenceError("f_inv failed to bracket the root")
    return LevelEval(*(o.reshape(y.shape) for o in outs))


def f_inv(y, config: KernelConfig = DEFAULT_CONFIG):
    """Inverse of f on [0, inf); f_inv(0) = 0."""
    return _wrap(evaluate_levels(y, config).snr, y)


def cap(y, config: KernelConfig = DEFAULT_CONFIG):
    """e_log(f_inv(y)): spectral efficiency reached at level y."""
    return _wrap(evaluate_levels(y, config).cap, y)


def cap_f(y, config: KernelConfig = DEFAULT_CONFIG):
    """e_ratio(f_inv(y)); 1 at y = 0, decreasing."""
    return _wrap(evaluate_levels(y, config).ratio, y)


# -- quadrature route ---------------------------------------------------------


@lru_cache(maxsize=8)
def _laguerre(n):
    return np.polynomial.laguerre.laggauss(n)


def _expect(integrand, x, config: KernelConfig):
    """E[integrand(x, Z)] by Gauss-Laguerre; QUADPACK when x > 1.

    For large x the integrand bends on the scale 1/x near z = 0, which a
    fixed Laguerre rule under-resolves, so those points are integrated
    adaptively with a breakpoint at 1/x.
    """
    arr = _as_array(x)
    flat = arr.ravel()
    out = np.empty_like(flat)
    z, w = _laguerre(config.laguerre_nodes)
    gl = flat <= 1.0
    if np.any(gl):
        out[gl] = integrand(flat[gl, None], z[None, :]) @ w
    for i in np.flatnonzero(~gl):
        xi = flat[i]
        g = lambda t: integrand(xi, t) * np.exp(-t)
        kw = dict(epsabs=0.0, epsrel=config.quad_rel_tol, limit=200)
        a, _ = integrate.quad(g, 0.0, 1.0 / xi, **kw)
        b, _ = integrate.quad(g, 1.0 / xi, np.inf, **kw)
        out[i] = a + b
    return _wrap(out.reshape(arr.shape), x)


def e_log_quad(x, config: KernelConfig = DEFAULT_CONFIG):
    return _expect(lambda xx, z: np.log1p(xx * z), x, config)


def e_ratio_quad(x, config: KernelConfig = DEFAULT_CONFIG):
    return _expect(lambda xx, z: z / (1.0 + xx * z), x, config)


@dataclass
class LevelSolution:
    beta: float
    levels: LevelEval


def solve_level(weights, gains, budget, config: KernelConfig = DEFAULT_CONFIG,
                beta_guess: float | None = None) -> LevelSolution:
    """Find beta with sum_k weights_k / cap(gains_k * beta) = budget.

    Zero weights (or no users) give beta = 0 and an empty level set.
    """
    w = np.ascontiguousarray(weights, dtype=float)
    g = np.ascontiguousarray(gains, dtype=float)
    if w.shape != g.shape:
        raise ValueError("weights and gains must have the same shape")
    if w.size and (not w.min() >= 0 or not g.min() > 0):
        raise KernelDomainError("weights must be >= 0 and gains > 0")
    if not (w.size and w.max() > 0):
        zeros = np.zeros_like(w)
        return LevelSolution(0.0, LevelEval(zeros, zeros.copy(), np.ones_like(w), np.full_like(w, np.inf)))
    if not budget > 0:
        raise KernelDomainError("positive weights need a positive budget")
    outs = [np.empty_like(w) for _ in range(4)]
    b0 = math.log(beta_guess) if beta_guess and beta_guess > 0 else math.nan
    try:
        beta, ok = _solve_level(w, g, float(budget), b0, config.root_tol, config.max_bracket_expansions, *outs)
    except ZeroDivisionError:
        # SNR left floating point range
        ok = False
    if not ok:
        raise KernelConvergenceError("level equation did not converge")
    return LevelSolution(beta, LevelEval(*outs))
