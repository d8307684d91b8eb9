import numpy as np
import pytest

from omnisurface import Mode, SystemConfig, effective_channels, sample_channels, sum_rate_solve
from omnisurface.oracles import (batched_rows, batched_wmmse_rate, grid_power_min,
                                 params_to_state, scan_1d)
from omnisurface.sumrate import SumRateOptions


def _tiny(seed=0):
    cfg = SystemConfig(n_tx=2, n_elements=2, k_r=1, k_t=1, seed=seed)
    return cfg, sample_channels(cfg)


def test_batched_rows_match_model(rng):
    cfg, ch = _tiny()
    params = np.c_[rng.uniform(0, 2 * np.pi, (6, 3)), rng.random((6, 2))]
    rows = batched_rows(ch, params)
    for p, r in zip(params, rows):
        np.testing.assert_allclose(r, effective_channels(ch, params_to_state(p)), rtol=1e-12)


def test_batched_wmmse_matches_solver_with_fixed_surface(rng):
    cfg, ch = _tiny(2)
    p = np.array([0.3, 1.9, 4.0, 2 ** -0.5, 2 ** -0.5])
    state = params_to_state(p).replace(mode=Mode.EED)
    rep = sum_rate_solve(ch, cfg, SumRateOptions(outer_rel_tol=1e-10, outer_max_iters=2000),
                         init=state, optimize_phases=False)
    batch = batched_wmmse_rate(batched_rows(ch, p[None]), cfg.noises(), cfg.power_budget)[0]
    assert batch == pytest.approx(rep.objective, rel=1e-4)


def test_grid_oracle_only_for_tiny_systems():
    cfg = SystemConfig(n_tx=2, n_elements=3, k_r=1, k_t=1)
    with pytest.raises(ValueError):
        grid_power_min(sample_channels(cfg), cfg)


def test_grid_oracle_beats_its_own_coarse_points():
    cfg, ch = _tiny(4)
    res = grid_power_min(ch, cfg, coarse_phase=6, coarse_zeta=5, keep=4)
    assert np.isfinite(res.value) and res.evaluations > 6 ** 3 * 25
    state = params_to_state(res.params)
    from omnisurface import solve_tx_beamforming, total_power
    w = solve_tx_beamforming(ch, state, cfg, cfg)
    assert total_power(w) == pytest.approx(res.value, rel=1e-8)


def test_scan_1d():
    x, v = scan_1d(lambda t: (t - 0.3) ** 2, 0.0, 1.0, 1e-3)
    assert x == pytest.approx(0.3, abs=1e-9) and v < 1e-12
