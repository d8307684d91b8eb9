"""Brute-force reference solutions for tiny systems.

These search the surface parameters of a two-element, two-user system
(one reflected, one transmitted user) on a grid and solve the beamforming
for every grid point with batched, independent code: the closed-form
two-user virtual uplink solution for power minimization and a vectorized
beamformer-only WMMSE for the sum-rate. The full joint grid at the finest resolution has about 1e10
points, so the search is multi-resolution: a coarse exhaustive grid, then
repeated local grids around the best candidates down to the target step.

Surface parameters are ``(phi_r1, phi_r2, dphi_t, zeta_1, zeta_2)``. A
common rotation of ``phi_t`` only rotates the transmitted user's channel,
so the transmit side has one free phase ``dphi_t`` with ``phi_t = (1,
exp(i dphi_t))``.
"""
from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np

from .model import ChannelSet, IosState, Mode, SystemConfig

__all__ = ["OracleResult", "batched_rows", "batched_min_power", "batched_wmmse_rate",
           "grid_power_min", "grid_sum_rate", "params_to_state", "scan_1d"]


@dataclass
class OracleResult:
    value: float
    params: np.ndarray
    evaluations: int


def params_to_state(params) -> IosState:
    p = np.asarray(params, float)
    return IosState(np.exp(1j * p[0:2]), np.array([1.0, np.exp(1j * p[2])]),
                    np.clip(p[3:5], 0.0, 1.0), Mode.UED)


def batched_rows(channels: ChannelSet, params: np.ndarray) -> np.ndarray:
    """Row channels ``(B, K, N_t)`` for a batch of surface parameters ``(B, 5)``."""
    p = np.asarray(params, float)
    phr = np.exp(1j * p[:, 0:2])
    pht = np.stack([np.ones(len(p)), np.exp(1j * p[:, 2])], axis=1)
    z = np.clip(p[:, 3:5], 0.0, 1.0)
    e = np.sqrt(1.0 - z ** 2)
    coef_r = z * phr                                           # (B, M)
    coef_t = e * pht
    rows_r = np.einsum("km,bm,mn->bkn", channels.h_r.conj(), coef_r, channels.g) + channels.h_d.conj()
    rows_t = np.einsum("km,bm,mn->bkn", channels.h_t.conj(), coef_t, channels.g)
    return np.concatenate([rows_r, rows_t], axis=1)


def batched_min_power(rows: np.ndarray, gamma, noise) -> np.ndarray:
    """Minimum total power meeting SINR targets for a batch of two-user channels.

    Uses the virtual uplink: with noise-normalized channels ``h_k`` the
    optimal uplink powers meet ``q_k h_k^H (I + q_j h_j h_j^H)^-1 h_k =
    Gamma_k`` for both users, and the minimum downlink power equals
    ``q_1 + q_2``. Eliminating ``q_1`` leaves a quadratic in ``q_2`` with
    exactly one positive root whenever the two channels are independent.
    Returns ``inf`` where the targets are unreachable.
    """
    b, k, n = rows.shape
    if k != 2:
        raise ValueError("closed-form power oracle handles exactly two users")
    g1, g2 = np.broadcast_to(np.asarray(gamma, float), (2,))
    noise = np.broadcast_to(np.asarray(noise, float), (2,))
    h = rows / np.sqrt(noise)[None, :, None]
    a1 = np.sum(np.abs(h[:, 0]) ** 2, axis=1)
    a2 = np.sum(np.abs(h[:, 1]) ** 2, axis=1)
    c = np.abs(np.sum(h[:, 0].conj() * h[:, 1], axis=1)) ** 2
    d = np.clip(a1 * a2 - c, 0.0, None)
    qa = a2 * d * (1.0 + g1)
    qb = a1 * a2 + d * g1 - g2 * (d + a1 * a2 * g1)
    qc = -g2 * a1 * (1.0 + g1)
    out = np.full(b, np.inf)
    with np.errstate(divide="ignore", invalid="ignore"):
        # stable positive root of qa s^2 + qb s + qc = 0 (qc < 0 < qa)
        disc = np.sqrt(qb ** 2 - 4.0 * qa * qc)
        s = np.where(qb >= 0, -2.0 * qc / (qb + disc), (disc - qb) / (2.0 * qa))
        lin = qa <= 1e-300
        s = np.where(lin, np.where(qb > 0, -qc / qb, np.inf), s)
        q1 = g1 * (1.0 + s * a2) / (a1 + s * d)
        total = q1 + s
    ok = np.isfinite(total) & (s > 0) & (q1 > 0) & (a1 > 0) & (a2 > 0)
    out[ok] = total[ok]
    return out


def _batched_update_w(rows, nu, mu, budget):
    """Beamformer block of WMMSE for a batch: rows (B, K, N), nu and mu (B, K)."""
    rows_h = rows.conj().transpose(0, 2, 1)                   # (B, N, K)
    h_w = np.einsum("bk,bnk,bmk->bnm", mu * np.abs(nu) ** 2, rows_h, rows_h.conj())
    d, u = np.linalg.eigh(h_w)
    d = np.clip(d, 0.0, None)
    rhs = rows_h * (mu * nu)[:, None, :]
    proj = u.conj().transpose(0, 2, 1) @ rhs                   # (B, N, K)
    weight = np.sum(np.abs(proj) ** 2, axis=2)                # (B, N)
    floor = 1e-12 * np.maximum(d.max(axis=1, keepdims=True), 1e-300)
    live = d > floor
    inv0 = np.where(live, 1.0 / np.where(live, d, 1.0), 0.0)
    p0 = np.sum(weight * inv0 ** 2, axis=1)
    # power(lam) is convex and decreasing, so Newton from lam = 0 climbs
    # monotonically to the root without overshooting
    lam = np.zeros(len(d))
    has = live
    for _ in range(60):
        den = np.where(has, d + lam[:, None], 1.0)
        pw = np.sum(np.where(has, weight / den ** 2, 0.0), axis=1)
        slope = -2.0 * np.sum(np.where(has, weight / den ** 3, 0.0), axis=1)
        step = np.where((pw > budget) & (p0 > budget), (pw - budget) / -slope, 0.0)
        lam = lam + step
        if np.all(step <= 1e-13 * np.maximum(lam, 1e-300)):
            break
    lam = np.where(p0 <= budget, 0.0, lam)
    inv = np.where((p0 <= budget)[:, None], inv0, 1.0 / (d + lam[:, None]))
    return u @ (inv[:, :, None] * proj)


def _rates(rows, w, noise):
    amp = rows @ w
    tot = np.sum(np.abs(amp) ** 2, axis=2) + noise
    sig = np.diagonal(amp, axis1=1, axis2=2)
    sinr = np.abs(sig) ** 2 / (tot - np.abs(sig) ** 2)
    return sig / tot, 1.0 + sinr, np.sum(np.log2(1.0 + sinr), axis=1)


def batched_wmmse_rate(rows: np.ndarray, noise, budget: float, iters: int = 400,
                       tol: float = 1e-8) -> np.ndarray:
    """Sum-rate reached by beamformer-only WMMSE for every channel in a batch.

    Two starts (matched filter and zero-forcing direction, both filling the
    budget) are run and the better rate kept. A point stops iterating once
    its rate changes by less than ``tol`` (relative).
    """
    b, k, n = rows.shape
    noise = np.broadcast_to(np.asarray(noise, float), (k,))
    best = np.full(b, -np.inf)
    for w in (rows.conj().transpose(0, 2, 1), np.linalg.pinv(rows)):
        scale = np.sqrt(budget / np.maximum(np.sum(np.abs(w) ** 2, axis=(1, 2)), 1e-300))
        w = w * scale[:, None, None]
        nu, mu, rate = _rates(rows, w, noise)
        active = np.arange(b)
        for _ in range(iters):
            if active.size == 0:
                break
            r = rows[active]
            w[active] = _batched_update_w(r, nu[active], mu[active], budget)
            nu_a, mu_a, rate_a = _rates(r, w[active], noise)
            moved = np.abs(rate_a - rate[active]) > tol * np.maximum(np.abs(rate_a), 1.0)
            nu[active], mu[active], rate[active] = nu_a, mu_a, rate_a
            active = active[moved]
        best = np.maximum(best, rate)
    return best


def _check_tiny(channels: ChannelSet):
    if channels.n_elements != 2 or channels.k_r != 1 or channels.k_t != 1:
        raise ValueError("grid oracles expect M = 2 with one reflected and one transmitted user")


def _multires(score, minimize: bool, coarse_phase: int, coarse_zeta: int,
              phase_step: float, zeta_step: float, keep: int, radius: int = 2,
              chunk: int = 50000):
    """Coarse exhaustive grid, then local grids that halve the step down to the target."""
    sign = 1.0 if minimize else -1.0
    phases = np.linspace(0.0, 2 * np.pi, coarse_phase, endpoint=False)
    zetas = np.linspace(0.0, 1.0, coarse_zeta)
    grid = np.array(list(product(phases, phases, phases, zetas, zetas)))
    vals = np.concatenate([score(grid[i:i + chunk]) for i in range(0, len(grid), chunk)])
    count = len(grid)
    ps, zs = 2 * np.pi / coarse_phase, 1.0 / (coarse_zeta - 1)
    order = np.argsort(sign * vals)[:keep]
    cands, cvals = grid[order], vals[order]
    offsets = np.array(list(product(range(-radius, radius + 1), repeat=5)), float)
    while True:
        ps, zs = max(ps / 2, phase_step), max(zs / 2, zeta_step)
        step = np.array([ps, ps, ps, zs, zs])
        pts = (cands[:, None, :] + offsets[None] * step).reshape(-1, 5)
        pts[:, 3:] = np.clip(pts[:, 3:], 0.0, 1.0)
        pts = np.unique(np.round(pts, 12), axis=0)
        v = np.concatenate([score(pts[i:i + chunk]) for i in range(0, len(pts), chunk)])
        count += len(pts)
        allp, allv = np.vstack([cands, pts]), np.concatenate([cvals, v])
        order = np.argsort(sign * allv)[:keep]
        cands, cvals = allp[order], allv[order]
        if ps <= phase_step and zs <= zeta_step:
            # one more pass at the finest step lets the winner settle on the grid
            pts = (cands[:1, None, :] + offsets[None] * step).reshape(-1, 5)
            pts[:, 3:] = np.clip(pts[:, 3:], 0.0, 1.0)
            v = score(pts)
            count += len(pts)
            j = int(np.argmin(sign * v))
            if sign * v[j] < sign * cvals[0]:
                cands[0], cvals[0] = pts[j], v[j]
            return OracleResult(float(cvals[0]), cands[0], count)


def grid_power_min(channels: ChannelSet, cfg: SystemConfig, phase_step: float = np.pi / 50,
                   zeta_step: float = 0.01, coarse_phase: int = 12, coarse_zeta: int = 11,
                   keep: int = 8) -> OracleResult:
    """Smallest total power over the surface grid (``inf`` if nothing is feasible)."""
    _check_tiny(channels)
    gamma = cfg.targets()[:2] if cfg.n_users == 2 else np.full(2, cfg.sinr_target)
    noise = np.array([cfg.noise_r, cfg.noise_t])
    return _multires(lambda p: batched_min_power(batched_rows(channels, p), gamma, noise),
                     True, coarse_phase, coarse_zeta, phase_step, zeta_step, keep)


def grid_sum_rate(channels: ChannelSet, cfg: SystemConfig, phase_step: float = np.pi / 50,
                  zeta_step: float = 0.01, coarse_phase: int = 8, coarse_zeta: int = 6,
                  keep: int = 4, radius: int = 1) -> OracleResult:
    """Largest sum-rate over the surface grid with WMMSE beamformers per point.

    Each grid point runs an iterative WMMSE, which is far dearer than the
    closed-form power oracle, so the default search is coarser and refines
    with a smaller neighbourhood.
    """
    _check_tiny(channels)
    noise = np.array([cfg.noise_r, cfg.noise_t])
    return _multires(lambda p: batched_wmmse_rate(batched_rows(channels, p), noise,
                                                  cfg.power_budget),
                     False, coarse_phase, coarse_zeta, phase_step, zeta_step, keep, radius)


def scan_1d(f, lo: float, hi: float, step: float):
    """Exhaustive scan of a vectorized scalar function; returns (argmin, min)."""
    xs = np.arange(lo, hi + 0.5 * step, step)
    vals = f(xs)
    j = int(np.argmin(vals))
    return float(xs[j]), float(vals[j])
