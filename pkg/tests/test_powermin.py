import numpy as np
import pytest

from omnisurface import (ChannelSet, IosState, Mode, Status, SystemConfig, effective_channels,
                         power_min_solve, sample_channels, sinr_all, solve_tx_beamforming,
                         total_power)
from omnisurface.manifold import lse_smooth
from omnisurface.oracles import batched_min_power, grid_power_min, scan_1d
from omnisurface.powermin import (InfeasibleError, PowerMinOptions, _residual_objective,
                                  _side_terms, aligned_phases, design_energy_division_pm,
                                  design_phase_r, design_phase_t, phase_quadratics)
from conftest import cgauss, random_channels, random_state


def _direct_only(rows):
    rows = np.atleast_2d(rows)
    return ChannelSet(np.zeros((0, rows.shape[1])), rows.conj(), np.zeros((len(rows), 0)),
                      np.zeros((0, 0)))


def test_single_user_closed_form(rng):
    c = cgauss(rng, 4)
    ch = _direct_only(c)
    w = solve_tx_beamforming(ch, IosState.initial(0), 50.0, 0.3).matrix[:, 0]
    assert total_power(w) == pytest.approx(50.0 * 0.3 / np.linalg.norm(c) ** 2, rel=1e-8)
    # c is the row channel, so the matched beam is its conjugate
    cos = abs(c @ w) / (np.linalg.norm(c) * np.linalg.norm(w))
    assert cos == pytest.approx(1.0, abs=1e-8)


def test_orthogonal_users_decouple():
    c = np.array([[2.0, 0, 0], [0, 0.5j, 0]])
    ch = _direct_only(c)
    w = solve_tx_beamforming(ch, IosState.initial(0), [3.0, 7.0], [1.0, 2.0])
    assert total_power(w) == pytest.approx(3.0 / 4.0 + 7.0 * 2.0 / 0.25, rel=1e-8)


def test_identical_channels_are_infeasible(rng):
    c = cgauss(rng, 2)
    ch = _direct_only(np.vstack([c, c]))
    with pytest.raises(InfeasibleError):
        solve_tx_beamforming(ch, IosState.initial(0), 100.0, 1.0)
    # independent check: random two-user beams never give both users SINR >= 1
    w = cgauss(rng, 200000, 2, 2) * rng.exponential(100.0, (200000, 1, 1))
    amp2 = np.abs(np.einsum("n,bnk->bk", c.conj(), w)) ** 2
    s1 = amp2[:, 0] / (amp2[:, 1] + 1.0)
    s2 = amp2[:, 1] / (amp2[:, 0] + 1.0)
    assert np.max(np.minimum(s1, s2)) < 1.0


@pytest.mark.parametrize("seed", range(20))
def test_two_user_beams_match_closed_form(seed):
    rng = np.random.default_rng(seed)
    rows = cgauss(rng, 2, 3)
    gamma = rng.uniform(0.5, 20.0, 2)
    noise = rng.uniform(0.1, 2.0, 2)
    ref = batched_min_power(rows[None], gamma, noise)[0]
    ch = _direct_only(rows)
    try:
        w = solve_tx_beamforming(ch, IosState.initial(0), gamma, noise)
    except InfeasibleError:
        assert np.isinf(ref)
        return
    assert total_power(w) == pytest.approx(ref, rel=1e-8)
    np.testing.assert_allclose(sinr_all(ch, IosState.initial(0), w, noise), gamma, rtol=1e-8)


def test_phase_design_without_users_is_identity(rng):
    ch = random_channels(rng, 3, 4, 0, 2)
    ios = random_state(rng, 4)
    w = solve_tx_beamforming(ch, ios, 1.0, 1.0)
    np.testing.assert_array_equal(design_phase_r(ch, ios, w, 1.0, 1.0), ios.phi_r)
    ch = random_channels(rng, 3, 4, 2, 0)
    w = solve_tx_beamforming(ch, ios, 1.0, 1.0)
    np.testing.assert_array_equal(design_phase_t(ch, ios, w, 1.0, 1.0), ios.phi_t)


def _worst_ratio(ch, ios, w, gamma, noise):
    return np.max(gamma / sinr_all(ch, ios, w, noise))


@pytest.mark.parametrize("direct", [0.0, 1.0])
def test_single_element_reflect_phase_matches_grid(rng, direct):
    ch = random_channels(rng, 2, 1, 1, 0, direct=direct)
    ios = IosState([1.0], [1.0], [1.0])
    w = solve_tx_beamforming(ch, ios, 2.0, 1.0)
    phi = design_phase_r(ch, ios, w, 2.0, 1.0)
    got = _worst_ratio(ch, ios.replace(phi_r=phi), w, 2.0, 1.0)

    def grid(t):
        return np.array([_worst_ratio(ch, ios.replace(phi_r=np.exp(1j * np.array([x]))), w, 2.0, 1.0)
                         for x in t])
    _, best = scan_1d(grid, 0.0, 2 * np.pi, 1e-3)
    assert got <= best * (1 + 1e-6)


def test_single_element_transmit_phase_matches_grid(rng):
    ch = random_channels(rng, 2, 1, 1, 1)
    ios = IosState([1.0], [1.0], [0.6])
    w = solve_tx_beamforming(ch, ios, 1.0, 1.0)
    phi = design_phase_t(ch, ios, w, 1.0, 1.0)

    def ratio_t(x):
        s = sinr_all(ch, ios.replace(phi_t=np.exp(1j * np.array([x]))), w, 1.0)
        return 1.0 / s[1]
    _, best = scan_1d(np.vectorize(ratio_t), 0.0, 2 * np.pi, 1e-3)
    assert ratio_t(np.angle(phi[0])) <= best * (1 + 1e-6)


def _direct_residual(ch, ios, w, gamma, noise, lam):
    amp2 = np.abs(effective_channels(ch, ios) @ w.matrix) ** 2
    sig = np.diag(amp2)
    return gamma * (amp2.sum(axis=1) - sig + noise) - lam * sig


@pytest.mark.parametrize("side", ["r", "t"])
def test_quadratic_coefficients_match_direct_residual(rng, side):
    ch = random_channels(rng, 3, 3, 2, 2)
    ios = random_state(rng, 3)
    w = solve_tx_beamforming(ch, IosState.initial(3), 1.5, 0.8)
    B, b, c = phase_quadratics(ch, ios, w, 1.5, 0.8, 0.4, side)
    phi = ios.phi_r if side == "r" else ios.phi_t
    quad = (np.real(np.einsum("m,kmn,n->k", phi.conj(), B, phi))
            + 2 * np.real(b.conj() @ phi) + c)
    ref = _direct_residual(ch, ios, w, 1.5, 0.8, 0.4)
    ref = ref[:2] if side == "r" else ref[2:]
    np.testing.assert_allclose(quad, ref, rtol=1e-10, atol=1e-12)


def test_low_rank_objective_equals_explicit_quadratics(rng):
    ch = random_channels(rng, 3, 5, 2, 2)
    ios = random_state(rng, 5)
    w = solve_tx_beamforming(ch, IosState.initial(5), 1.0, 1.0).matrix
    v, hbar, own, phi = _side_terms(ch, ios, w, "r")
    gamma, noise, lam = np.full(2, 1.0), np.full(2, 1.0), 0.7
    scale = rng.uniform(0.5, 2.0, 2)
    obj = _residual_objective(v, v.conj(), hbar, own, gamma, noise, lam, scale, phi)
    B, b, c = phase_quadratics(ch, ios, w, 1.0, 1.0, lam, "r")
    x = np.exp(2j * np.pi * rng.random(5))
    vals = (np.real(np.einsum("m,kmn,n->k", x.conj(), B, x)) + 2 * np.real(b.conj() @ x) + c)
    assert obj.evaluate(x) == pytest.approx(lse_smooth(vals / scale, obj.epsilon), rel=1e-10)


def test_phase_design_does_not_worsen_worst_ratio(rng):
    for _ in range(5):
        ch = random_channels(rng, 3, 6, 2, 2)
        ios = random_state(rng, 6)
        w = solve_tx_beamforming(ch, ios, 1.0, 1.0)
        before = _worst_ratio(ch, ios, w, 1.0, 1.0)
        ios = ios.replace(phi_r=design_phase_r(ch, ios, w, 1.0, 1.0))
        ios = ios.replace(phi_t=design_phase_t(ch, ios, w, 1.0, 1.0))
        assert _worst_ratio(ch, ios, w, 1.0, 1.0) <= before * (1 + 1e-12)


def test_energy_split_single_populated_side(rng):
    ch = random_channels(rng, 3, 4, 2, 0)
    ios = random_state(rng, 4)
    w = solve_tx_beamforming(ch, ios, 1.0, 1.0)
    np.testing.assert_array_equal(design_energy_division_pm(ch, ios, w, 1.0, 1.0), np.ones(4))
    ch = random_channels(rng, 3, 4, 0, 2)
    w = solve_tx_beamforming(ch, ios, 1.0, 1.0)
    np.testing.assert_array_equal(design_energy_division_pm(ch, ios, w, 1.0, 1.0), np.zeros(4))


def test_symmetric_single_element_splits_equally():
    # one antenna, one element, identical unit paths on both sides
    ch = ChannelSet([[1.0]], [[0.0]], [[1.0]], [[1.0]])
    ios = IosState([1.0], [1.0], [0.3])
    w = np.array([[1.0, 1.0]], complex)
    z = design_energy_division_pm(ch, ios, w, 1.0, 0.5)[0]

    def worst(zs):
        # an endpoint silences one user, so its ratio is infinite there
        with np.errstate(divide="ignore"):
            return np.array([_worst_ratio(ch, ios.replace(zeta=[x]), w, 1.0, 0.5) for x in zs])
    z_scan, _ = scan_1d(worst, 0.0, 1.0, 1e-4)
    assert z == pytest.approx(2 ** -0.5, abs=1e-4)
    assert z == pytest.approx(z_scan, abs=1e-4)


def test_energy_split_does_not_worsen_worst_ratio(rng):
    for _ in range(5):
        ch = random_channels(rng, 3, 6, 2, 2)
        ios = random_state(rng, 6)
        w = solve_tx_beamforming(ch, ios, 1.0, 1.0)
        before = _worst_ratio(ch, ios, w, 1.0, 1.0)
        z = design_energy_division_pm(ch, ios, w, 1.0, 1.0)
        assert np.all((0 <= z) & (z <= 1))
        assert _worst_ratio(ch, ios.replace(zeta=z), w, 1.0, 1.0) <= before * (1 + 1e-12)


def test_aligned_phases_add_up_coherently(rng):
    ch = random_channels(rng, 1, 6, 1, 0, direct=0.0)
    phi = aligned_phases(ch, "r")
    path = ch.h_r[0].conj() * ch.g[:, 0]
    total = abs(np.sum(path * phi))
    assert total == pytest.approx(np.sum(np.abs(path)), rel=1e-12)


def _small_cfg(**kw):
    base = dict(n_tx=3, n_elements=6, k_r=2, k_t=1, sinr_target=3.0, noise_r=1e-10,
                noise_t=1e-10, seed=4)
    base.update(kw)
    return SystemConfig(**base)


def test_solver_trace_monotone_and_targets_met():
    cfg = _small_cfg()
    ch = sample_channels(cfg)
    rep = power_min_solve(ch, cfg, PowerMinOptions(outer_max_iters=30))
    assert rep.status in (Status.CONVERGED, Status.MAX_ITERS)
    tr = rep.objective_trace
    assert all(b <= a + 1e-9 for a, b in zip(tr, tr[1:]))
    assert total_power(rep.beamformers) == pytest.approx(tr[-1])
    s = sinr_all(ch, rep.ios, rep.beamformers, cfg.noises())
    assert np.all(s >= cfg.targets() * (1 - 1e-6))
    assert len(rep.ios_history) == len(tr)


def test_solver_reports_infeasible_without_surface():
    cfg = _small_cfg()
    ch = sample_channels(cfg)
    rep = power_min_solve(ch, cfg, mode=Mode.NONE)
    assert rep.status == Status.INFEASIBLE
    assert np.isnan(rep.objective)


def test_fixed_phases_keep_phases():
    cfg = _small_cfg()
    ch = sample_channels(cfg)
    init = IosState.initial(6, mode=Mode.EED)
    rep = power_min_solve(ch, cfg, init=init, optimize_phases=False)
    np.testing.assert_array_equal(rep.ios.phi_r, init.phi_r)
    np.testing.assert_array_equal(rep.ios.zeta, init.zeta)


def test_tiny_instance_near_grid_optimum():
    cfg = SystemConfig(n_tx=2, n_elements=2, k_r=1, k_t=1, seed=0)
    ch = sample_channels(cfg)
    grid = grid_power_min(ch, cfg)
    rep = power_min_solve(ch, cfg, PowerMinOptions(multistart=4))
    assert rep.objective <= 1.05 * grid.value


def test_multistart_never_worse():
    cfg = SystemConfig(n_tx=2, n_elements=2, k_r=1, k_t=1, seed=3)
    ch = sample_channels(cfg)
    one = power_min_solve(ch, cfg).objective
    many = power_min_solve(ch, cfg, PowerMinOptions(multistart=3)).objective
    assert many <= one
