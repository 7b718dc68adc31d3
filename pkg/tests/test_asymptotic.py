import csv
import math

import numpy as np
import pytest
from scipy import integrate, optimize

from ofdma_reuse.asymptotic import (SWEEP_HEADER, AsymptoticCell, AsymptoticScenario, Infeasible, SearchSpec,
                                    asymptotic_search, optimum_row, reuse_factor_sweep, script_f, script_g,
                                    solve_relaxed_cell, write_sweep_csv)
from ofdma_reuse.kernels import cap, cap_f, f
from ofdma_reuse.system import PathLossModel, SystemParams, cross_gain, g1, g2, rho

P = SystemParams(alpha=0.5)
E_LOG_1 = 0.596347362323194


def _scenario(r_t=10e6, params=P, **kw):
    return AsymptoticScenario.from_sum_rate(r_t, params, **kw)


def _unit_gain_interference(x, params):
    # neighbour power that makes g1(x) exactly 1
    return (rho(x, params.path_loss) - params.noise_power) / cross_gain(x, params)


def test_script_f_values():
    x = 250.0
    assert script_f(x, 0.0, 1e-4, 0.0, P) == 0.0
    assert script_f(x, 2e-3, 1e-4, 1.0, P) == pytest.approx(script_f(x, 1e-3, 1e-4, 0.0, P), rel=1e-14)
    q = _unit_gain_interference(x, P)
    assert g1(x, q, P) == pytest.approx(1.0, rel=1e-12)
    assert script_f(x, f(1.0), q, 0.0, P) == pytest.approx(1 / 0.596347, rel=1e-5)
    assert script_f(x, f(1.0), q, 0.0, P) == pytest.approx(1 / E_LOG_1, rel=1e-9)


def test_script_g_values():
    x = 250.0
    q = _unit_gain_interference(x, P)
    assert script_g(x, f(1.0), q, 0.0, P) == pytest.approx(1 / E_LOG_1, rel=1e-9)
    assert script_g(x, 3e-3, 1e-4, 2.0, P) == pytest.approx(script_g(x, 1e-3, 1e-4, 0.0, P), rel=1e-14)
    assert script_g(x, 1e12, 1e-4, 0.0, P) < 0.05
    betas = np.geomspace(1e-6, 1e2, 20)
    assert np.all(np.diff([script_g(x, b, 1e-4, 0.0, P) for b in betas]) < 0)


def test_density_must_be_normalized():
    with pytest.raises(ValueError):
        AsymptoticScenario(P, 1.0, density=lambda x: np.ones_like(x))
    with pytest.raises(ValueError):
        AsymptoticScenario(P, (1.0, -1.0))


def test_relaxed_cell_solves_the_limit_equations():
    # independent adaptive integration of the budget, pivot and power equations
    sc = _scenario()
    cell = AsymptoticCell(sc, 0)
    q_nb = 2e-4
    cap_target = 0.5 * cell.q1(300.0, q_nb)
    d, b1t, b2, xi, q1 = solve_relaxed_cell(cap_target, q_nb, sc)
    rbar, lam = sc.mean_rate[0], 1.0 / (P.cell_radius_m - P.epsilon_m)
    quad = lambda fun, a, b: integrate.quad(fun, a, b, epsabs=0, epsrel=1e-11, limit=200)[0]
    budget1 = rbar * lam * quad(lambda x: script_g(x, b1t, q_nb, 0.0, P), P.epsilon_m, d)
    budget2 = rbar * lam * quad(lambda x: 1.0 / cap(g2(x, P) * b2), d, P.cell_radius_m)
    power1 = rbar * lam * quad(lambda x: script_f(x, b1t, q_nb, 0.0, P), P.epsilon_m, d)
    assert budget1 == pytest.approx(P.alpha, abs=1e-6)
    assert budget2 == pytest.approx(P.protected_share, abs=1e-6)
    assert power1 == pytest.approx(cap_target, rel=1e-6)
    assert q1 == pytest.approx(cap_target, rel=1e-9)
    # recombined beta1 satisfies the raw pivot equation
    b1 = b1t * (1 + xi)
    lhs = g1(d, q_nb, P) / (1 + xi) * cap_f(g1(d, q_nb, P) * b1 / (1 + xi))
    rhs = g2(d, P) * cap_f(g2(d, P) * b2)
    assert lhs == pytest.approx(rhs, rel=1e-6)


def test_relaxed_cell_boundaries():
    sc = _scenario()
    tiny = solve_relaxed_cell(1e-3, 1e-4, sc, alpha=1e-6)
    assert isinstance(tiny, Infeasible) or tiny[0] < 0.05 * P.cell_radius_m
    full = solve_relaxed_cell(1e9, 1e-4, sc, alpha=1.0)
    assert full[0] == P.cell_radius_m
    unreachable = solve_relaxed_cell(1e9, 1e-4, sc)
    assert not unreachable or unreachable[4] < 1e9


def test_symmetric_search_and_pivot_search_agree():
    sc = _scenario()
    auto = asymptotic_search(sc)
    pivot = asymptotic_search(sc, method="pivot")
    assert auto.cell_a.d == auto.cell_b.d
    assert auto.cell_a.q1 == auto.cell_b.q1
    assert pivot.q_t == pytest.approx(auto.q_t, rel=1e-7)
    assert pivot.cell_a.d == pytest.approx(pivot.cell_b.d, rel=1e-3)
    assert auto.q_t == pytest.approx(auto.cell_a.q1 + auto.cell_a.q2 + auto.cell_b.q1 + auto.cell_b.q2, rel=1e-14)
    assert auto.cell_a.xi >= 0 and P.epsilon_m <= auto.cell_a.d <= P.cell_radius_m


def test_cap_grid_method_agrees():
    sc = _scenario(5e6)
    auto = asymptotic_search(sc)
    grid = asymptotic_search(sc, method="grid", spec=SearchSpec(grid_points=16, grid_refinements=3))
    assert grid.q_t == pytest.approx(auto.q_t, rel=2e-3)
    assert grid.q_t >= auto.q_t * (1 - 1e-9)


def test_quadrature_doubling():
    a = asymptotic_search(_scenario(quad_nodes=64))
    b = asymptotic_search(_scenario(quad_nodes=128))
    assert b.q_t == pytest.approx(a.q_t, rel=1e-6)


def test_decoupled_cells():
    p = SystemParams(alpha=0.5, cross_gain_scale=0.0)
    sc = _scenario(params=p)
    sol = asymptotic_search(sc)
    cell = AsymptoticCell(sc, 0)
    # with no coupling each cell minimizes its own power over the pivot distance
    r = optimize.minimize_scalar(lambda d: cell.q1(d, 0.0) + cell.band2(d).power,
                                 bounds=(p.epsilon_m, p.cell_radius_m), method="bounded",
                                 options={"xatol": 1e-8})
    assert sol.q_t == pytest.approx(2 * r.fun, rel=1e-9)
    assert sol.cell_a.d == pytest.approx(r.x, abs=1e-3)


def test_steeper_path_loss_moves_pivot_out():
    s2 = asymptotic_search(_scenario())
    s3 = asymptotic_search(_scenario(params=SystemParams(alpha=0.5, path_loss=PathLossModel.okumura_hata())))
    assert s3.cell_a.d > s2.cell_a.d


def test_sweep_and_csv(tmp_path):
    sc = _scenario()
    sw = reuse_factor_sweep(sc, np.linspace(0, 1, 11), r_t_bps=10e6)
    assert 0 < sw.alpha_opt < 1
    finite = [p.q_t for p in sw.points if p]
    assert sw.best.q_t <= min(finite)
    path = tmp_path / "sweep.csv"
    write_sweep_csv(path, sw.rows() + [optimum_row(sw)])
    rows = list(csv.reader(path.open()))
    assert rows[0] == SWEEP_HEADER == ["alpha", "r_t_bps", "d_opt_m", "q1", "q2", "q_t", "feasible"]
    assert rows[1][-1] in ("true", "false")
    with pytest.raises(ValueError):
        reuse_factor_sweep(sc, [0.2, 0.4])


def test_finite_population_pivot_approaches_limit():
    from ofdma_reuse.optimal import optimal_allocate
    from ofdma_reuse.system import generate_scenario, rate_per_user_nats

    lim = asymptotic_search(_scenario()).cell_a.d
    err = {}
    for k in (10, 200):
        dev = []
        for t in range(4):
            cells = generate_scenario(k, rate_per_user_nats(10e6, k), np.random.SeedSequence([1, k, t]), P)
            res = optimal_allocate(*cells, P, start_distance=lim)
            dev += [abs(res.cell_a.pivot_distance - lim), abs(res.cell_b.pivot_distance - lim)]
        err[k] = np.mean(dev) / P.cell_radius_m
    assert err[200] < err[10]
