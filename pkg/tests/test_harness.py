import filecmp
import json
import math

import numpy as np
import pytest

from ofdma_reuse import harness
from ofdma_reuse.harness import (ConfigError, ExperimentConfig, best_over_alpha, load_config, run_compare,
                                 run_mse_convergence, run_sensitivity, trial_seed, verify_allocation)
from ofdma_reuse.optimal import optimal_allocate
from ofdma_reuse.system import SystemParams, generate_scenario, rate_per_user_nats

P = SystemParams()
COARSE = [0.2, 0.35, 0.5, 0.65, 0.8]


@pytest.mark.parametrize("doc,field", [
    ({"trials": 0}, "trials"),
    ({"trials": 2.5}, "trials"),
    ({"r_t_bps": [1e6, -1.0]}, "r_t_bps"),
    ({"r_t_bps": []}, "r_t_bps"),
    ({"k_per_cell": [0]}, "k_per_cell"),
    ({"kind": "plot"}, "kind"),
    ({"alpha_grid": [0.1, 2.0, 0.3]}, "alpha_grid"),
    ({"system": {"alpha": -0.1}}, "system"),
    ({"sytem": {}}, "sytem"),
])
def test_config_errors_name_the_field(doc, field):
    with pytest.raises(ConfigError, match=field):
        ExperimentConfig.from_dict(doc)


def test_config_round_trip(tmp_path):
    cfg = ExperimentConfig(kind="mse_convergence", k_per_cell=[10, 20], trials=7, seed=3)
    path = tmp_path / "c.json"
    path.write_text(json.dumps(cfg.to_dict()))
    assert load_config(path) == cfg
    path.write_text("[1, 2]")
    with pytest.raises(ConfigError):
        load_config(path)


def test_trial_streams_are_distinct():
    draws = {tuple(np.random.default_rng(trial_seed(0, k, t)).random(3)) for k in (2, 3) for t in range(5)}
    assert len(draws) == 10
    a = np.random.default_rng(trial_seed(4, 2, 1)).random(3)
    b = np.random.default_rng(trial_seed(4, 2, 1)).random(3)
    np.testing.assert_array_equal(a, b)


def test_compare_single_trial_is_reproducible(tmp_path):
    cfg = ExperimentConfig(k_per_cell=[2], r_t_bps=[5e6], trials=1, seed=11, alpha_grid=COARSE)
    rows1, _ = run_compare(cfg, tmp_path / "a")
    rows2, _ = run_compare(cfg, tmp_path / "b")
    assert rows1 == rows2
    for name in ("compare.csv", "compare_trials.csv"):
        assert filecmp.cmp(tmp_path / "a" / name, tmp_path / "b" / name, shallow=False)
    row = rows1[0]
    assert row.failed == 0 and row.trials == 1
    assert row.mean_q_subopt >= row.mean_q_opt * (1 - 1e-9)
    assert row.var_q_subopt == 0.0
    header = (tmp_path / "a" / "compare.csv").read_text().splitlines()[0]
    assert header == ",".join(harness.COMPARE_HEADER)


def test_best_over_alpha_beats_grid():
    k = 6
    cells = generate_scenario(k, rate_per_user_nats(10e6, k), trial_seed(0, k, 0), P)
    q, a, res = best_over_alpha(*cells, P, center=0.5, start_distance=250.0)
    assert res.q_total == q and 0 < a < 1
    for alpha in np.linspace(0.3, 0.7, 5):
        assert q <= optimal_allocate(*cells, P.with_alpha(alpha)).q_total * (1 + 1e-12)
    verify_allocation(res, cells, P.with_alpha(a))


def test_verify_allocation_catches_violations():
    k = 3
    cells = generate_scenario(k, rate_per_user_nats(5e6, k), 1, P)
    res = optimal_allocate(*cells, P)
    verify_allocation(res, cells, P)
    res.cell_a.gamma2[-1] *= 1.01
    with pytest.raises(ArithmeticError):
        verify_allocation(res, cells, P)


def test_sensitivity_curve(tmp_path):
    cfg = ExperimentConfig(kind="sensitivity", k_per_cell=[8], r_t_bps=[10e6], trials=3, seed=2,
                           alpha_grid=COARSE, d_grid_points=11)
    c1 = run_sensitivity(cfg, tmp_path / "a")
    c2 = run_sensitivity(cfg, tmp_path / "b")
    assert filecmp.cmp(tmp_path / "a" / "sensitivity.csv", tmp_path / "b" / "sensitivity.csv", shallow=False)
    finite = c1.mean_q[np.isfinite(c1.mean_q)]
    assert finite.size >= 2
    # the prefix d = epsilon is the all-protected benchmark and is always feasible
    assert math.isfinite(c1.mean_q[0])
    assert c1.mean_q[0] >= np.nanmin(c1.mean_q)
    if math.isfinite(c1.mean_q[-1]):
        assert c1.mean_q[-1] >= np.nanmin(c1.mean_q)
    assert c1.grid_step == pytest.approx(49.9)
    np.testing.assert_array_equal(c1.mean_q, c2.mean_q)


def test_mse_nonnegative_stable_and_matches_bootstrap():
    k, trials = 4, 12
    cfg = ExperimentConfig(kind="mse_convergence", k_per_cell=[k], r_t_bps=[10e6], trials=trials, seed=5,
                           alpha_grid=COARSE)
    pt = run_mse_convergence(cfg)[0]
    assert pt.nmse >= 0 and pt.stderr >= 0 and pt.failed == 0
    # recompute per-trial squared errors for twice the trials
    sw = harness.limit_optimum(10e6, P, COARSE)
    errs = []
    for t in range(2 * trials):
        cells = generate_scenario(k, rate_per_user_nats(10e6, k), trial_seed(5, k, t), P)
        q, _, _ = best_over_alpha(*cells, P, sw.alpha_opt, sw.d_opt)
        errs.append(((q - pt.q_t_asymptotic) / pt.q_t_asymptotic) ** 2)
    errs = np.array(errs)
    assert pt.nmse == pytest.approx(errs[:trials].mean(), rel=1e-12)
    rng = np.random.default_rng(0)
    boot = errs[:trials][rng.integers(0, trials, (4000, trials))].mean(axis=1)
    assert pt.stderr == pytest.approx(boot.std(), rel=0.15)
    doubled = errs.mean()
    doubled_se = errs.std(ddof=1) / math.sqrt(errs.size)
    assert abs(doubled - pt.nmse) <= 3 * math.hypot(pt.stderr, doubled_se)
