"""Sum-rate maximization through the weighted MMSE reformulation.

Block coordinate descent over the receive scalars ``nu``, the MSE weights
``mu``, the beamformers, the two phase vectors and the energy split. Every
block has a closed form or a one-dimensional search, so the weighted MSE
objective never increases.

The weighted objective is ``sum_k mu_k MSE_k - ln mu_k``. With the natural
log the optimal weight is exactly ``1 / MSE_k`` and the objective after the
``nu`` and ``mu`` blocks equals ``K - sum_k ln(1 + SINR_k)``.
"""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .model import (Beamformers, ChannelSet, IosState, Mode, SolveReport, Status,
                    SystemConfig, effective_channels, mse_all, noise_vector, sinr_all,
                    sum_rate, total_power)
from .powermin import _side_terms, bootstrap_state, zeta_coefficients

__all__ = [
    "WmmseState", "SumRateOptions", "update_nu", "update_mu", "update_w",
    "phase_quadratic_terms", "update_phase_elementwise", "zeta_quadratic_terms",
    "zeta_stationary_points", "minimize_zeta_scalar", "update_zeta_elementwise",
    "wmmse_objective", "matched_filter_init", "sum_rate_solve",
]


@dataclass
class WmmseState:
    nu: np.ndarray
    mu: np.ndarray
    lagrange_lambda: float = 0.0

    def __post_init__(self):
        self.nu = np.asarray(self.nu, complex)
        self.mu = np.asarray(self.mu, float)
        if np.any(self.mu <= 0):
            raise ValueError("MSE weights must be positive")
        if self.lagrange_lambda < 0:
            raise ValueError("power multiplier must be non-negative")


@dataclass(frozen=True)
class SumRateOptions:
    outer_max_iters: int = 200
    outer_rel_tol: float = 1e-4
    sweep_rel_tol: float = 1e-6
    max_sweeps: int = 50
    power_rel_tol: float = 1e-9
    root_grid: int = 64


def _wm(w):
    return w.matrix if isinstance(w, Beamformers) else np.asarray(w, complex)


# -- receiver and weight blocks -------------------------------------------------

def update_nu(channels: ChannelSet, ios: IosState, w, noise) -> np.ndarray:
    """MMSE receive scalars ``c_k^H w_k / (sum_j |c_k^H w_j|^2 + sigma_k^2)``."""
    amp = effective_channels(channels, ios) @ _wm(w)
    return np.diag(amp) / (np.sum(np.abs(amp) ** 2, axis=1) + noise_vector(channels, noise))


def update_mu(mse) -> np.ndarray:
    mse = np.asarray(mse, float)
    if np.any(mse <= 0):
        raise ValueError("MSE values must be positive")
    return 1.0 / mse


def wmmse_objective(channels, ios, w, state: WmmseState, noise) -> float:
    mse = mse_all(channels, ios, w, state.nu, noise)
    return float(np.sum(state.mu * mse - np.log(state.mu)))


# -- beamformer block -------------------------------------------------------------

def update_w(channels: ChannelSet, ios: IosState, state: WmmseState, power_budget: float,
             opts: SumRateOptions | None = None) -> Beamformers:
    """``w_k = mu_k nu_k (H_w + lam I)^-1 c_k^H`` with the smallest ``lam`` meeting the budget.

    ``hbar_k = (nu_k c_k)^H`` and ``H_w = sum_k mu_k hbar_k hbar_k^H``. When
    ``H_w`` is singular the ``lam = 0`` candidate uses its pseudo-inverse,
    which is exact because every right-hand side lies in its range. The chosen
    multiplier is stored in ``state.lagrange_lambda``.
    """
    opts = opts or SumRateOptions()
    rows = effective_channels(channels, ios)
    hbar = (state.nu[:, None] * rows).conj().T                # (N, K) columns (nu_k c_k)^H
    rhs = rows.T.conj() * (state.mu * state.nu)               # mu_k nu_k c_k^H
    h_w = (hbar * state.mu) @ hbar.conj().T
    d, u = np.linalg.eigh(h_w)
    d = np.clip(d, 0.0, None)
    proj = np.abs(u.conj().T @ rhs) ** 2                      # (N, K)
    weight = proj.sum(axis=1)
    floor = 1e-12 * max(d.max(initial=0.0), 1e-300)

    live = d > floor

    def power(lam):
        # directions outside the range of H_w carry no weight
        return float(np.sum(weight[live] / (d[live] + lam) ** 2))

    p0 = float(np.sum(weight[live] / d[live] ** 2))
    if p0 <= power_budget:
        lam = 0.0
        inv = np.where(live, 1.0 / np.where(live, d, 1.0), 0.0)
    else:
        lo, hi = 0.0, np.sqrt(weight.sum() / power_budget)
        while power(hi) > power_budget:
            hi *= 2.0
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if power(mid) > power_budget:
                lo = mid
            else:
                hi = mid
            if hi - lo <= 1e-15 * hi or power(lo) - power(hi) <= opts.power_rel_tol * power_budget:
                break
        lam = hi
        inv = 1.0 / (d + lam)
    state.lagrange_lambda = lam
    w = u @ (inv[:, None] * (u.conj().T @ rhs))
    return Beamformers.from_matrix(w, channels.k_r)


# -- phase blocks -------------------------------------------------------------------

def phase_quadratic_terms(channels: ChannelSet, ios: IosState, w, state: WmmseState,
                          side: str = "r"):
    """``(E, f)`` with the weighted MSE equal to ``phi^H E phi - 2 Re(phi^H f)`` + const."""
    wm = _wm(w)
    v, hbar, own, _ = _side_terms(channels, ios, wm, side)
    nu, mu = state.nu[own], state.mu[own]
    weight = mu * np.abs(nu) ** 2
    e = np.einsum("k,kim,kin->mn", weight, v, v.conj())
    idx = np.arange(own.size)
    f = (np.einsum("k,km->m", mu * nu, v[idx, own])
         - np.einsum("k,kim,ki->m", weight, v, hbar))
    return 0.5 * (e + e.conj().T), f


def update_phase_elementwise(e: np.ndarray, f: np.ndarray, phi: np.ndarray,
                             opts: SumRateOptions | None = None) -> np.ndarray:
    """Cyclic closed-form sweeps on ``phi^H E phi - 2 Re(phi^H f)`` over unit-modulus ``phi``."""
    opts = opts or SumRateOptions()
    phi = np.asarray(phi, complex).copy()
    diag = np.diag(e).copy()

    def objective(x):
        return float(np.real(np.vdot(x, e @ x)) - 2.0 * np.real(np.vdot(x, f)))

    ephi = e @ phi
    obj = objective(phi)
    for _ in range(opts.max_sweeps):
        for m in range(phi.size):
            num = f[m] - (ephi[m] - diag[m] * phi[m])
            mag = abs(num)
            if mag == 0.0:
                continue
            new = num / mag
            ephi += e[:, m] * (new - phi[m])
            phi[m] = new
        new_obj = objective(phi)
        done = abs(obj - new_obj) <= opts.sweep_rel_tol * max(abs(obj), 1e-300)
        obj = new_obj
        if done:
            break
    return phi


# -- energy-split block -----------------------------------------------------------------

def zeta_quadratic_terms(channels: ChannelSet, ios: IosState, w, state: WmmseState):
    """``(H_r, varpi_r, H_t, varpi_t)`` so that the weighted MSE equals
    ``z^T H_r z - 2 Re(z^T varpi_r) + e^T H_t e - 2 Re(e^T varpi_t)`` + const
    with ``z = zeta`` and ``e = eta``.
    """
    alpha, hbar, beta = zeta_coefficients(channels, ios, w)
    k_r = channels.k_r
    nu_r, mu_r = state.nu[:k_r], state.mu[:k_r]
    nu_t, mu_t = state.nu[k_r:], state.mu[k_r:]
    wr = mu_r * np.abs(nu_r) ** 2
    wt = mu_t * np.abs(nu_t) ** 2
    h_r = np.einsum("k,kjm,kjn->mn", wr, alpha.conj(), alpha)
    h_t = np.einsum("k,kjm,kjn->mn", wt, beta.conj(), beta)
    ir, it_ = np.arange(k_r), np.arange(channels.k_t)
    varpi_r = (np.einsum("k,km->m", mu_r * nu_r.conj(), alpha[ir, ir])
               - np.einsum("k,kjm,kj->m", wr, alpha.conj(), hbar))
    varpi_t = np.einsum("k,km->m", mu_t * nu_t.conj(), beta[it_, k_r + it_])
    return 0.5 * (h_r + h_r.conj().T), varpi_r, 0.5 * (h_t + h_t.conj().T), varpi_t


def _g(z, d1, d2, d3, d4):
    z = np.asarray(z, float)
    return d1 * z + d2 * np.sqrt(np.clip(1.0 - z ** 2, 0.0, 1.0)) + d3 * z ** 2 + d4 * (1.0 - z ** 2)


def _dg(z, d1, d2, d3, d4):
    z = np.asarray(z, float)
    return 2.0 * (d3 - d4) * z + d1 - d2 * z / np.sqrt(1.0 - z ** 2)


def zeta_stationary_points(d1, d2, d3, d4, grid: int = 64) -> np.ndarray:
    """Interior roots of ``g'`` bracketed by sign changes on ``[0, 1 - 1e-8]``."""
    zs = np.linspace(0.0, 1.0 - 1e-8, grid)
    vals = _dg(zs, d1, d2, d3, d4)
    roots = []
    for i in np.flatnonzero(np.sign(vals[:-1]) * np.sign(vals[1:]) <= 0):
        a, b = zs[i], zs[i + 1]
        if vals[i] == 0.0:
            roots.append(a)
        elif vals[i + 1] == 0.0:
            roots.append(b)
        else:
            roots.append(brentq(_dg, a, b, args=(d1, d2, d3, d4), xtol=1e-14))
    return np.unique(np.asarray(roots, float))


def minimize_zeta_scalar(d1, d2, d3, d4, current=None, grid: int = 64) -> float:
    """Argmin of ``g(z) = d1 z + d2 sqrt(1-z^2) + d3 z^2 + d4 (1-z^2)`` on [0, 1]."""
    cands = [0.0, 1.0, *zeta_stationary_points(d1, d2, d3, d4, grid)]
    if current is not None:
        cands.append(float(current))
    cands = np.asarray(cands)
    vals = _g(cands, d1, d2, d3, d4)
    if current is not None and vals.min() >= vals[-1]:
        return float(current)
    return float(cands[np.argmin(vals)])


def update_zeta_elementwise(channels: ChannelSet, ios: IosState, w, state: WmmseState,
                            opts: SumRateOptions | None = None) -> np.ndarray:
    """Cyclic per-element minimization of the weighted MSE over ``zeta``."""
    opts = opts or SumRateOptions()
    h_r, p_r, h_t, p_t = zeta_quadratic_terms(channels, ios, w, state)
    z = ios.zeta.copy()
    e = np.sqrt(np.clip(1.0 - z ** 2, 0.0, 1.0))
    hz, he = h_r @ z, h_t @ e
    dr, dt = np.real(np.diag(h_r)), np.real(np.diag(h_t))

    def objective():
        return float(np.real(z @ hz) - 2 * np.real(z @ p_r) + np.real(e @ he) - 2 * np.real(e @ p_t))

    obj = objective()
    for _ in range(opts.max_sweeps):
        for m in range(z.size):
            d1 = 2.0 * np.real(hz[m] - h_r[m, m] * z[m] - p_r[m])
            d2 = 2.0 * np.real(he[m] - h_t[m, m] * e[m] - p_t[m])
            z_new = minimize_zeta_scalar(d1, d2, dr[m], dt[m], z[m], opts.root_grid)
            if z_new != z[m]:
                e_new = np.sqrt(max(0.0, 1.0 - z_new ** 2))
                hz += h_r[:, m] * (z_new - z[m])
                he += h_t[:, m] * (e_new - e[m])
                z[m], e[m] = z_new, e_new
        new_obj = objective()
        done = abs(obj - new_obj) <= opts.sweep_rel_tol * max(abs(obj), 1e-300)
        obj = new_obj
        if done:
            break
    return np.clip(z, 0.0, 1.0)


# -- outer loop ----------------------------------------------------------------------------

def matched_filter_init(channels: ChannelSet, ios: IosState, power_budget: float) -> Beamformers:
    """Matched-filter beams with equal power, together using the full budget."""
    rows = effective_channels(channels, ios)
    norms = np.linalg.norm(rows, axis=1)
    k = rows.shape[0]
    cols = np.where(norms > 0, 1.0 / np.where(norms > 0, norms, 1.0), 0.0)
    w = rows.conj().T * cols
    served = max(int(np.count_nonzero(norms > 0)), 1)
    w *= np.sqrt(power_budget / served)
    return Beamformers.from_matrix(w.reshape(channels.n_tx, k), channels.k_r)


def sum_rate_solve(channels: ChannelSet, cfg: SystemConfig, opts: SumRateOptions | None = None,
                   init: IosState | None = None, mode: Mode | None = None,
                   w0=None, optimize_phases: bool = True) -> SolveReport:
    """Weighted-MMSE block coordinate descent for the sum-rate.

    ``objective_trace`` holds the weighted MSE objective after every outer
    iteration and ``rate_trace`` the matching sum-rate in bit/s/Hz.
    """
    opts = opts or SumRateOptions()
    start = time.perf_counter()
    noise = noise_vector(channels, cfg)
    budget = cfg.power_budget
    if init is None:
        init = bootstrap_state(channels, mode or Mode.UED)
    elif mode is not None:
        init = init.replace(mode=mode)
    ios = init
    w = w0 if w0 is not None else matched_filter_init(channels, ios, budget)
    if total_power(w) > budget * (1 + 1e-12):
        w = Beamformers.from_matrix(_wm(w) * np.sqrt(budget / total_power(w)), channels.k_r)
    tune_phases = optimize_phases and ios.mode != Mode.NONE
    tune_split = ios.mode == Mode.UED
    k = channels.n_users

    rate = sum_rate(channels, ios, w, noise)
    trace = [float(k - np.sum(np.log1p(sinr_all(channels, ios, w, noise))))]
    rates = [rate]
    history = [ios]
    status = Status.MAX_ITERS
    it = 0
    state = WmmseState(np.zeros(k, complex), np.ones(k))
    for it in range(1, opts.outer_max_iters + 1):
        state.nu = update_nu(channels, ios, w, noise)
        state.mu = update_mu(mse_all(channels, ios, w, state.nu, noise))
        w = update_w(channels, ios, state, budget, opts)
        if tune_phases:
            e, f = phase_quadratic_terms(channels, ios, w, state, "r")
            ios = ios.replace(phi_r=update_phase_elementwise(e, f, ios.phi_r, opts))
            e, f = phase_quadratic_terms(channels, ios, w, state, "t")
            ios = ios.replace(phi_t=update_phase_elementwise(e, f, ios.phi_t, opts))
        if tune_split:
            ios = ios.replace(zeta=update_zeta_elementwise(channels, ios, w, state, opts))
        obj = wmmse_objective(channels, ios, w, state, noise)
        prev = trace[-1]
        trace.append(obj)
        rates.append(sum_rate(channels, ios, w, noise))
        history.append(ios)
        if abs(prev - obj) <= opts.outer_rel_tol * max(1.0, abs(obj)):
            status = Status.CONVERGED
            break
    report = SolveReport(trace, w, ios, status, it, rate_trace=rates,
                         wall_time=time.perf_counter() - start, kind="rate")
    report.ios_history = history
    return report

