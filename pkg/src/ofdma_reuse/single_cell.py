"""Allocation of users confined to a cell's protected (interference-free) band."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kernels import DEFAULT_CONFIG, KernelConfig, solve_level
from .system import g2


@dataclass
class ProtectedAllocation:
    """``beta2`` is ``nan`` when the band carries no users."""

    beta2: float
    gamma2: np.ndarray
    p2: np.ndarray
    q2: float

    @property
    def empty(self) -> bool:
        return self.gamma2.size == 0


def solve_beta2(gains, rates, band_share, config: KernelConfig = DEFAULT_CONFIG,
                beta_guess=None) -> float:
    """Level beta2 with sum_k R_k / cap(g_k beta2) = band_share.

    ``rates`` are normalized (nats/s/Hz).  Returns ``nan`` for no users.
    """
    gains = np.atleast_1d(np.asarray(gains, dtype=float))
    rates = np.atleast_1d(np.asarray(rates, dtype=float))
    if gains.size == 0:
        return float("nan")
    if np.any(~(rates > 0)):
        raise ValueError("rates must be positive")
    if not band_share > 0:
        raise ValueError("users need a positive band share")
    return solve_level(rates, gains, band_share, config, beta_guess).beta


def allocate_protected(gains, rates, band_share, config: KernelConfig = DEFAULT_CONFIG,
                       beta_guess=None) -> ProtectedAllocation:
    """Per-user band fraction and power meeting each rate with equality.

    p_k = f_inv(g_k beta2) / g_k and gamma_k = R_k / cap(g_k beta2).
    """
    gains = np.atleast_1d(np.asarray(gains, dtype=float))
    rates = np.atleast_1d(np.asarray(rates, dtype=float))
    if gains.size == 0:
        return ProtectedAllocation(float("nan"), np.zeros(0), np.zeros(0), 0.0)
    if np.any(~(rates > 0)):
        raise ValueError("rates must be positive")
    if not band_share > 0:
        raise ValueError("users need a positive band share")
    sol = solve_level(rates, gains, band_share, config, beta_guess)
    gamma = rates / sol.levels.cap
    p = sol.levels.snr / gains
    return ProtectedAllocation(sol.beta, gamma, p, float(np.dot(gamma, p)))


def all_protected_power(cells, params, config: KernelConfig = DEFAULT_CONFIG) -> float:
    """Total power when every user of both cells is kept out of the shared band.

    With alpha = 1 there is no protected band; the half-band share is used
    instead so the figure still works as a power scale.
    """
    share = params.protected_share if params.alpha < 1.0 else 0.5
    total = 0.0
    for cell in cells:
        if len(cell):
            total += allocate_protected(g2(cell.positions, params), cell.normalized_rates(params),
                                        share, config).q2
    return total
