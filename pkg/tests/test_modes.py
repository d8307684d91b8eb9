import numpy as np
import pytest

from omnisurface import IosState, Mode, ModeSpec, Status, SystemConfig, project_mode, sample_channels
from omnisurface.modes import SCHEMES, random_phase_state, sd_partition, solve_with_mode
from omnisurface.powermin import PowerMinOptions
from conftest import random_channels, random_state

FAST = PowerMinOptions(outer_max_iters=15)


def test_eed_projection(rng):
    s = project_mode(random_state(rng, 7), ModeSpec(Mode.EED))
    np.testing.assert_allclose(s.zeta, 2 ** -0.5)
    np.testing.assert_allclose(s.zeta ** 2 + s.eta ** 2, 1.0)
    assert s.mode == Mode.EED


def test_sd_with_everything_reflecting_equals_irs(rng):
    s = random_state(rng, 5)
    sd = project_mode(s, ModeSpec(Mode.SD, reflect_set=range(5)))
    irs = project_mode(s, ModeSpec(Mode.IRS))
    np.testing.assert_array_equal(sd.zeta, irs.zeta)
    np.testing.assert_array_equal(sd.phi_r, irs.phi_r)


@pytest.mark.parametrize("mode", [Mode.UED, Mode.EED, Mode.SD, Mode.IRS, Mode.TD_REFLECT,
                                  Mode.TD_TRANSMIT, Mode.NONE])
def test_projection_idempotent(rng, mode):
    ch = random_channels(rng, 2, 6, 2, 1)
    s = random_state(rng, 6)
    once = project_mode(s, ModeSpec(mode), ch)
    twice = project_mode(once, ModeSpec(mode), ch)
    np.testing.assert_array_equal(once.zeta, twice.zeta)
    np.testing.assert_array_equal(once.phi_t, twice.phi_t)
    assert once.mode == twice.mode == mode


def test_sd_partition_sizes():
    assert sd_partition(8, 1, 3).sum() == 2
    assert sd_partition(7, 1, 1).sum() == 4
    assert sd_partition(5, 2, 0).all()
    with pytest.raises(ValueError):
        project_mode(IosState.initial(3), ModeSpec(Mode.SD))
    with pytest.raises(ValueError):
        project_mode(IosState.initial(3), ModeSpec(Mode.SD, reflect_set=(0, 5)))


def test_mode_spec_validation():
    with pytest.raises(ValueError):
        ModeSpec(Mode.TD_REFLECT, tau_r=1.0)
    with pytest.raises(ValueError):
        ModeSpec(Mode.SD, reflect_set=(1, 1))
    assert ModeSpec(tau_r=0.3).tau_t == pytest.approx(0.7)


def test_random_phase_state_is_seeded():
    a, b = random_phase_state(6, 3), random_phase_state(6, 3)
    np.testing.assert_array_equal(a.phi_r, b.phi_r)
    assert not np.array_equal(a.phi_r, random_phase_state(6, 4).phi_r)


def _cfg(seed, **kw):
    base = dict(n_tx=3, n_elements=6, k_r=2, k_t=1, sinr_target=3.0, seed=seed)
    base.update(kw)
    return SystemConfig(**base)


def test_no_surface_cannot_serve_transmitted_users():
    cfg = _cfg(0)
    rep = solve_with_mode("power", sample_channels(cfg), cfg, "NONE")
    assert rep.status == Status.INFEASIBLE


@pytest.mark.parametrize("seed", range(4))
def test_warm_started_orderings(seed):
    cfg = _cfg(seed)
    ch = sample_channels(cfg)
    rnd = solve_with_mode("rate", ch, cfg, "random-EED")
    eed = solve_with_mode("rate", ch, cfg, "EED", warm=(rnd,))
    ued = solve_with_mode("rate", ch, cfg, "UED", warm=(eed,))
    assert rnd.objective <= eed.objective + 1e-9 <= ued.objective + 2e-9
    p_eed = solve_with_mode("power", ch, cfg, "EED", opts=FAST)
    p_ued = solve_with_mode("power", ch, cfg, "UED", warm=(p_eed,), opts=FAST)
    assert p_ued.objective <= p_eed.objective + 1e-12


def test_time_division_combines_slots():
    cfg = _cfg(1)
    ch = sample_channels(cfg)
    spec = ModeSpec(Mode.TD_REFLECT, tau_r=0.25)
    rate = solve_with_mode("rate", ch, cfg, spec)
    r_slot, t_slot = rate.slots
    assert rate.objective == pytest.approx(0.25 * r_slot.objective + 0.75 * t_slot.objective)
    power = solve_with_mode("power", ch, cfg, "TD", opts=FAST)
    assert power.objective == pytest.approx(max(s.objective for s in power.slots))
    assert all(s.ios.mode in (Mode.TD_REFLECT, Mode.TD_TRANSMIT) for s in power.slots)


def test_random_eed_keeps_its_phases():
    cfg = _cfg(2)
    ch = sample_channels(cfg)
    rep = solve_with_mode("rate", ch, cfg, "random-EED")
    ref = random_phase_state(6, cfg.seed, Mode.EED)
    np.testing.assert_array_equal(rep.ios.phi_r, ref.phi_r)
    np.testing.assert_allclose(rep.ios.zeta, 2 ** -0.5)


def test_unknown_inputs_rejected():
    cfg = _cfg(0)
    ch = sample_channels(cfg)
    with pytest.raises(ValueError):
        solve_with_mode("energy", ch, cfg, "UED")
    with pytest.raises(ValueError):
        solve_with_mode("rate", ch, cfg, "STAR")
    assert "random-EED" in SCHEMES
