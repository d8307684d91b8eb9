"""Total transmit power minimization under per-user SINR constraints.

Three blocks are alternated: the beamformers for a fixed surface (solved
exactly through uplink-downlink duality), the reflection and transmission
phases (Dinkelbach iterations over a smoothed min-max, each solved by RCG),
and the energy split (Dinkelbach iterations with an element-wise search).
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .manifold import (RcgOptions, SmoothedObjective, rcg_minimize,
                       smoothing_epsilon)
from .model import (Beamformers, ChannelSet, IosState, Mode, SolveReport, Status,
                    SystemConfig, effective_channels, noise_vector, sinr_all,
                    target_vector, total_power)

__all__ = [
    "InfeasibleError", "PowerMinOptions", "solve_tx_beamforming",
    "phase_quadratics", "design_phase_r", "design_phase_t", "design_phase",
    "zeta_coefficients", "design_energy_division_pm", "aligned_phases",
    "bootstrap_state", "power_min_solve",
]


class InfeasibleError(RuntimeError):
    """The SINR targets cannot be met for the given surface configuration."""


@dataclass(frozen=True)
class PowerMinOptions:
    outer_max_iters: int = 100
    outer_rel_tol: float = 1e-4
    dinkelbach_tol: float = 1e-4
    dinkelbach_max_iters: int = 20
    bisection_tol: float = 1e-6
    feasibility_cap: float = 1e8
    duality_tol: float = 1e-10
    duality_max_iters: int = 20000
    scan_points: int = 64
    random_restarts: int = 10
    multistart: int = 0
    rcg: RcgOptions = field(default_factory=lambda: RcgOptions(max_iters=20, grad_tol=1e-7))


# -- transmit beamforming ---------------------------------------------------

def _duality_beams(rows, gamma, noise, opts: PowerMinOptions, q0=None):
    """Minimum-power beams meeting ``gamma`` for row channels ``rows``.

    Returns the beams and the virtual uplink powers, which can seed the next
    call on a nearby channel.
    """
    k, n = rows.shape
    if k == 0:
        return np.zeros((n, 0), complex), np.zeros(0)
    h = rows / np.sqrt(noise)[:, None]
    gain = np.sum(np.abs(h) ** 2, axis=1)
    if np.any(gain <= 1e-300):
        raise InfeasibleError("a user has a zero composite channel")
    cap = opts.feasibility_cap * gamma / gain
    # a standard interference map converges from any start, so q0 is only a hint
    q = np.zeros(k) if q0 is None else np.asarray(q0, float).copy()
    eye = np.eye(n)
    ratio = gamma / (1.0 + gamma)
    for _ in range(opts.duality_max_iters):
        cov = eye + h.conj().T @ (q[:, None] * h)
        y = np.linalg.solve(cov, h.conj().T)
        cross = h @ y                                         # h_k^H C^-1 h_j
        x = np.real(np.diag(cross))
        t = ratio / x
        if np.any(t > cap) or not np.all(np.isfinite(t)):
            raise InfeasibleError("virtual uplink powers diverge")
        if np.max(np.abs(t - q) / t) < opts.duality_tol:
            q = t
            break
        # Newton on q = T(q) with dT_k/dq_j = T_k |h_k^H C^-1 h_j|^2 / x_k;
        # a plain fixed-point step is the fallback when Newton leaves q > 0
        jac = (t / x)[:, None] * np.abs(cross) ** 2
        try:
            q_new = q + np.linalg.solve(np.eye(k) - jac, t - q)
        except np.linalg.LinAlgError:
            q_new = t
        if not (np.all(np.isfinite(q_new)) and np.all(q_new > 0)):
            q_new = t
        q = q_new
    else:
        raise InfeasibleError("virtual uplink power iteration did not settle")
    cov = eye + h.conj().T @ (q[:, None] * h)
    u = np.linalg.solve(cov, h.conj().T)
    u /= np.linalg.norm(u, axis=0)
    d = np.abs(h @ u) ** 2
    coupling = -d
    np.fill_diagonal(coupling, np.diag(d) / gamma)
    p = np.linalg.solve(coupling, np.ones(k))
    if not np.all(np.isfinite(p)) or np.any(p <= 0):
        raise InfeasibleError("downlink power system has no positive solution")
    return u * np.sqrt(p), q


def solve_tx_beamforming(channels: ChannelSet, ios: IosState, targets, noise,
                         opts: PowerMinOptions | None = None) -> Beamformers:
    """Minimum total power beamformers with every SINR exactly at its target.

    Raises
    ------
    InfeasibleError
        If the targets cannot be met with the given surface state.
    """
    return _solve_tx(channels, ios, targets, noise, opts or PowerMinOptions())[0]


def _solve_tx(channels, ios, targets, noise, opts, q0=None):
    rows = effective_channels(channels, ios)
    gamma = target_vector(channels, targets)
    sig2 = noise_vector(channels, noise)
    w, q = _duality_beams(rows, gamma, sig2, opts, q0)
    return Beamformers.from_matrix(w, channels.k_r), q


# -- phase design -------------------------------------------------------------

def _side_terms(channels: ChannelSet, ios: IosState, w: np.ndarray, side: str):
    """Per-user linear maps ``a_ki(phi) = v_ki^H phi + hbar_ki`` for one side."""
    gw = channels.g @ w                               # (M, K)
    if side == "r":
        v = (channels.h_r * ios.zeta)[:, None, :] * gw.T.conj()[None, :, :]
        hbar = channels.h_d.conj() @ w
        own = np.arange(channels.k_r)
        phi = ios.phi_r
    else:
        v = (channels.h_t * ios.eta)[:, None, :] * gw.T.conj()[None, :, :]
        hbar = np.zeros((channels.k_t, w.shape[1]), complex)
        own = channels.k_r + np.arange(channels.k_t)
        phi = ios.phi_t
    return v, hbar, own, phi


def phase_quadratics(channels: ChannelSet, ios: IosState, w, targets, noise, lam: float,
                     side: str = "r"):
    """Coefficients of the Dinkelbach residuals as quadratics in the phases.

    For user k on ``side`` the residual
    ``Gamma_k (total received power + noise) - (Gamma_k + lam) |signal|^2``
    equals ``phi^H B_k phi + 2 Re(phi^H b_k) + c_k``.
    """
    wm = w.matrix if isinstance(w, Beamformers) else np.asarray(w, complex)
    v, hbar, own, _ = _side_terms(channels, ios, wm, side)
    gamma = target_vector(channels, targets)[own]
    sig2 = noise_vector(channels, noise)[own]
    idx = np.arange(own.size)
    v_own, h_own = v[idx, own], hbar[idx, own]
    coef = gamma + lam
    B = (gamma[:, None, None] * np.einsum("kim,kin->kmn", v, v.conj())
         - coef[:, None, None] * np.einsum("km,kn->kmn", v_own, v_own.conj()))
    b = (gamma[:, None] * np.einsum("kim,ki->km", v, hbar)
         - coef[:, None] * v_own * h_own[:, None])
    c = (gamma * (np.sum(np.abs(hbar) ** 2, axis=1) + sig2)
         - coef * np.abs(h_own) ** 2)
    return B, b, c


def design_phase(channels: ChannelSet, ios: IosState, w, targets, noise,
                 opts: PowerMinOptions | None = None, side: str = "r") -> np.ndarray:
    """Phases on one side that shrink the worst ratio ``Gamma_k / gamma_k``.

    Each Dinkelbach round fixes ``lam`` at the current worst ratio and
    minimizes a smoothed maximum of the residuals. Residual k is divided by
    ``lam |signal_k|^2`` at the round's start; the division keeps every sign,
    so a point with all residuals negative still improves every ratio.
    """
    opts = opts or PowerMinOptions()
    wm = w.matrix if isinstance(w, Beamformers) else np.asarray(w, complex)
    v, hbar, own, phi = _side_terms(channels, ios, wm, side)
    if own.size == 0 or channels.n_elements == 0 or ios.mode == Mode.NONE:
        return phi.copy()
    gamma = target_vector(channels, targets)[own]
    sig2 = noise_vector(channels, noise)[own]
    idx = np.arange(own.size)
    vc = v.conj()

    def amplitudes(x):
        return np.einsum("kim,m->ki", vc, x) + hbar

    def ratios(x):
        p = np.abs(amplitudes(x)) ** 2
        s = p[idx, own]
        return gamma * (p.sum(axis=1) - s + sig2) / s

    lam = float(ratios(phi).max())
    for _ in range(opts.dinkelbach_max_iters):
        if not np.isfinite(lam):
            break
        scale = lam * np.abs(amplitudes(phi)[idx, own]) ** 2
        obj = _residual_objective(v, vc, hbar, own, gamma, sig2, lam, scale, phi)
        phi_new, _ = rcg_minimize(obj, phi, opts.rcg)
        new_lam = float(ratios(phi_new).max())
        if not new_lam < lam:
            break
        phi = phi_new
        done = lam - new_lam < opts.dinkelbach_tol * lam
        lam = new_lam
        if done:
            break
    return phi.copy()


def _residual_objective(v, vc, hbar, own, gamma, noise, lam, scale, phi_ref):
    """Smoothed maximum of the scaled Dinkelbach residuals in low-rank form.

    Same value as the explicit quadratics of ``phase_quadratics`` divided by
    ``scale``, evaluated through the per-beam amplitudes instead of M x M
    matrices.
    """
    idx = np.arange(own.size)
    coef = gamma + lam

    k, n_beams, m = vc.shape
    flat = vc.reshape(k * n_beams, m)
    hflat = hbar.reshape(-1)
    g_s, n_s, c_s = gamma / scale, gamma * noise / scale, coef / scale

    def residuals(x):
        a = (flat @ x + hflat).reshape(k, n_beams)
        p = a.real ** 2 + a.imag ** 2
        return g_s * p.sum(axis=1) + n_s - c_s * p[idx, own], a

    eps = smoothing_epsilon(residuals(phi_ref)[0])

    def evaluate(x):
        r = residuals(x)[0]
        top = r.max()
        return float(top + eps * np.log(np.exp((r - top) / eps).sum()))

    def gradient(x):
        r, a = residuals(x)
        wgt = np.exp((r - r.max()) / eps)
        wgt /= wgt.sum()
        # d|a_ki|^2 contributes 2 v_ki a_ki
        ca = (wgt * g_s)[:, None] * a
        ca[idx, own] -= wgt * c_s * a[idx, own]
        return 2.0 * np.einsum("kim,ki->m", v, ca)

    return SmoothedObjective(evaluate, gradient, eps)


def design_phase_r(channels, ios, w, targets, noise, opts=None) -> np.ndarray:
    return design_phase(channels, ios, w, targets, noise, opts, side="r")


def design_phase_t(channels, ios, w, targets, noise, opts=None) -> np.ndarray:
    return design_phase(channels, ios, w, targets, noise, opts, side="t")


# -- energy division ----------------------------------------------------------

def zeta_coefficients(channels: ChannelSet, ios: IosState, w):
    """Per-element contributions to every received amplitude.

    Returns ``(alpha, hbar, beta)`` with reflected amplitudes
    ``alpha @ zeta + hbar`` of shape (K_r, K) and transmitted amplitudes
    ``beta @ eta`` of shape (K_t, K).
    """
    wm = w.matrix if isinstance(w, Beamformers) else np.asarray(w, complex)
    gw = channels.g @ wm
    alpha = np.einsum("km,mj->kjm", channels.h_r.conj() * ios.phi_r, gw)
    beta = np.einsum("km,mj->kjm", channels.h_t.conj() * ios.phi_t, gw)
    hbar = channels.h_d.conj() @ wm
    return alpha, hbar, beta


def _refine_scan(f, points: int, tol: float):
    """Minimize a scalar function on [0, 1] by a coarse scan and nested re-scans.

    Each pass re-scans the two cells around the best point, so the bracket
    shrinks by ``(points - 1) / 2`` per pass until it is below ``tol``.
    """
    lo, hi = 0.0, 1.0
    best_z, best_f = 0.0, np.inf
    unit = np.arange(points) / (points - 1)
    while True:
        zs = lo + (hi - lo) * unit
        vals = f(zs)
        j = int(np.argmin(vals))
        if vals[j] < best_f:
            best_z, best_f = float(zs[j]), float(vals[j])
        step = (hi - lo) / (points - 1)
        if step <= tol:
            return best_z, best_f
        lo, hi = max(0.0, zs[j] - step), min(1.0, zs[j] + step)


def _residual_quadratic(base, slope, idx, gamma, noise, kappa, scale):
    """Coefficients ``(c0, c1, c2)`` of each scaled residual in one amplitude ``x``.

    Received amplitudes are ``base + slope * x``; the residual is
    ``gamma (total - signal + noise) - kappa signal`` divided by ``scale``.
    """
    p0 = np.abs(base) ** 2
    p1 = 2.0 * np.real(base.conj() * slope)
    p2 = np.abs(slope) ** 2
    own = np.arange(idx.size), idx
    coefs = []
    for p in (p0, p1, p2):
        sig = p[own]
        coefs.append(gamma * (p.sum(axis=1) - sig) - kappa * sig)
    coefs[0] = coefs[0] + gamma * noise
    return [c / scale for c in coefs]


def design_energy_division_pm(channels: ChannelSet, ios: IosState, w, targets, noise,
                              opts: PowerMinOptions | None = None) -> np.ndarray:
    """Energy split that raises the worst ``gamma_k / Gamma_k``.

    Dinkelbach on ``kappa = max_k Gamma_k / gamma_k``; for fixed ``kappa``
    every element is swept once, minimizing the upper envelope of the scaled
    residuals ``Gamma_k (I_k + sigma_k^2) - kappa |s_k|^2`` over ``zeta_m``
    (coarse scan, then nested re-scans down to ``bisection_tol``).
    """
    opts = opts or PowerMinOptions()
    m_count = channels.n_elements
    zeta = ios.zeta.copy()
    if m_count == 0 or ios.mode == Mode.NONE:
        return zeta
    if channels.k_t == 0 or channels.k_r == 0:
        # only one side carries users: give it all the energy
        return np.full(m_count, 1.0 if channels.k_t == 0 else 0.0)
    wm = w.matrix if isinstance(w, Beamformers) else np.asarray(w, complex)
    gamma = target_vector(channels, targets)
    sig2 = noise_vector(channels, noise)
    k_r = channels.k_r
    alpha, hbar, beta = zeta_coefficients(channels, ios, wm)
    g_r, g_t = gamma[:k_r], gamma[k_r:]
    n_r, n_t = sig2[:k_r], sig2[k_r:]
    own_r, own_t = np.arange(k_r), k_r + np.arange(channels.k_t)
    ir, it_ = np.arange(k_r), np.arange(channels.k_t)

    def amplitudes(z):
        eta = np.sqrt(np.clip(1.0 - z ** 2, 0.0, 1.0))
        return alpha @ z + hbar, beta @ eta

    def worst_ratio(z):
        ar, at = amplitudes(z)
        sr = np.abs(ar[ir, own_r]) ** 2
        st = np.abs(at[it_, own_t]) ** 2
        with np.errstate(divide="ignore"):
            rr = g_r * (np.sum(np.abs(ar) ** 2, axis=1) - sr + n_r) / sr
            rt = g_t * (np.sum(np.abs(at) ** 2, axis=1) - st + n_t) / st
        return float(np.max(np.r_[rr, rt]))

    kappa = worst_ratio(zeta)
    for _ in range(opts.dinkelbach_max_iters):
        if not np.isfinite(kappa):
            break
        ar, at = amplitudes(zeta)
        scale_r = kappa * np.abs(ar[ir, own_r]) ** 2
        scale_t = kappa * np.abs(at[it_, own_t]) ** 2
        z_new = zeta.copy()
        for m in range(m_count):
            zm = z_new[m]
            em = np.sqrt(max(0.0, 1.0 - zm ** 2))
            base_r = ar - zm * alpha[:, :, m]
            base_t = at - em * beta[:, :, m]
            a_m, b_m = alpha[:, :, m], beta[:, :, m]
            # every scaled residual is a quadratic in zeta_m (reflected) or eta_m
            q_r = _residual_quadratic(base_r, a_m, own_r, g_r, n_r, kappa, scale_r)
            q_t = _residual_quadratic(base_t, b_m, own_t, g_t, n_t, kappa, scale_t)

            r0, r1, r2 = (c[:, None] for c in q_r)
            t0, t1, t2 = (c[:, None] for c in q_t)

            def envelope(z):
                z = np.atleast_1d(np.asarray(z, float))
                out = np.full(z.shape, -np.inf)
                if k_r:
                    out = (r0 + z * (r1 + z * r2)).max(axis=0)
                if channels.k_t:
                    e = np.sqrt(np.clip(1.0 - z * z, 0.0, 1.0))
                    out = np.maximum(out, (t0 + e * (t1 + e * t2)).max(axis=0))
                return out

            best_z, best_f = _refine_scan(envelope, opts.scan_points, opts.bisection_tol)
            f_cur = float(envelope(zm)[0])
            if best_f < f_cur:
                z_new[m] = best_z
                e_new = np.sqrt(max(0.0, 1.0 - best_z ** 2))
                ar = base_r + best_z * a_m
                at = base_t + e_new * b_m
        new_kappa = worst_ratio(z_new)
        if not new_kappa < kappa:
            break
        zeta = z_new
        done = kappa - new_kappa < opts.dinkelbach_tol * kappa
        kappa = new_kappa
        if done:
            break
    return np.clip(zeta, 0.0, 1.0)


# -- initialization -------------------------------------------------------------

def aligned_phases(channels: ChannelSet, side: str = "r") -> np.ndarray:
    """Phases that add the strongest user's cascaded paths coherently."""
    m = channels.n_elements
    rows = channels.h_r if side == "r" else channels.h_t
    if rows.shape[0] == 0 or m == 0:
        return np.ones(m, complex)
    cascades = rows.conj()[:, :, None] * channels.g[None, :, :]
    k = int(np.argmax(np.linalg.norm(cascades, axis=(1, 2))))
    casc = cascades[k]
    direct = channels.h_d[k].conj() if side == "r" else np.zeros(channels.n_tx, complex)
    _, _, vh = np.linalg.svd(casc, full_matrices=False)
    w0 = vh[0].conj()
    path = casc @ w0
    ref = np.angle(direct @ w0) if np.abs(direct @ w0) > 0 else 0.0
    phi = np.exp(1j * (ref - np.angle(path)))
    phi[np.abs(path) == 0] = 1.0
    return phi


def bootstrap_state(channels: ChannelSet, mode: Mode = Mode.UED, spec=None) -> IosState:
    """Aligned phases with the energy split of ``mode``.

    UED starts from the equal split, or from all energy on the only side
    that has users.
    """
    from .modes import ModeSpec, project_mode
    m = channels.n_elements
    split = 2 ** -0.5
    if channels.k_t == 0 or channels.k_r == 0:
        split = 1.0 if channels.k_t == 0 else 0.0
    state = IosState(aligned_phases(channels, "r"), aligned_phases(channels, "t"),
                     np.full(m, split), Mode.UED)
    spec = spec or ModeSpec(Mode(mode))
    return project_mode(state, spec, channels)


def _random_state(rng, template: IosState, split: bool = False) -> IosState:
    m = template.n_elements
    state = template.replace(phi_r=np.exp(2j * np.pi * rng.random(m)),
                             phi_t=np.exp(2j * np.pi * rng.random(m)))
    return state.replace(zeta=rng.random(m)) if split else state


# -- outer loop ---------------------------------------------------------------------

def _descend(channels, ios, w, q, targets, noise, opts, optimize_phases):
    """Block coordinate descent from one feasible start."""
    tune_phases = optimize_phases and ios.mode != Mode.NONE
    tune_split = ios.mode == Mode.UED
    trace = [total_power(w)]
    history = [ios]
    status = Status.MAX_ITERS
    it = 0
    for it in range(1, opts.outer_max_iters + 1):
        cand = ios
        if tune_phases:
            cand = cand.replace(phi_r=design_phase_r(channels, cand, w, targets, noise, opts))
            cand = cand.replace(phi_t=design_phase_t(channels, cand, w, targets, noise, opts))
        if tune_split:
            cand = cand.replace(zeta=design_energy_division_pm(channels, cand, w, targets,
                                                               noise, opts))
        try:
            w_new, q_new = _solve_tx(channels, cand, targets, noise, opts, q)
        except InfeasibleError:
            w_new, q_new = None, q
        p_new = total_power(w_new) if w_new is not None else np.inf
        if p_new > trace[-1]:
            # the previous beams stay feasible, so keep them
            p_new, cand, w_new, q_new = trace[-1], ios, w, q
        ios, w, q = cand, w_new, q_new
        prev = trace[-1]
        trace.append(p_new)
        history.append(ios)
        if prev - p_new <= opts.outer_rel_tol * prev:
            status = Status.CONVERGED
            break
    return trace, w, ios, status, it, history


def power_min_solve(channels: ChannelSet, cfg: SystemConfig, opts: PowerMinOptions | None = None,
                    init: IosState | None = None, mode: Mode | None = None,
                    optimize_phases: bool = True) -> SolveReport:
    """Alternate beamforming, phase and energy-split updates until the power settles.

    ``init`` sets the starting surface; its ``mode`` decides whether the energy
    split is optimized (UED) or held fixed. Without ``init`` the surface starts
    from channel-aligned phases, then random phase draws if that is infeasible.
    """
    opts = opts or PowerMinOptions()
    start = time.perf_counter()
    targets = target_vector(channels, cfg)
    noise = noise_vector(channels, cfg)
    if init is None:
        init = bootstrap_state(channels, mode or Mode.UED)
    elif mode is not None:
        init = init.replace(mode=mode)
    candidates = [init]
    if init.mode != Mode.NONE:
        rng = np.random.default_rng(cfg.seed)
        candidates += [_random_state(rng, init) for _ in range(opts.random_restarts)]
    ios, w = None, None
    for cand in candidates:
        try:
            w, q = _solve_tx(channels, cand, targets, noise, opts)
            ios = cand
            break
        except InfeasibleError:
            continue
    if ios is None:
        return SolveReport([float("inf")], None, init, Status.INFEASIBLE, 0,
                           wall_time=time.perf_counter() - start, kind="power")

    best = _descend(channels, ios, w, q, targets, noise, opts, optimize_phases)
    if ios.mode != Mode.NONE and optimize_phases:
        rng = np.random.default_rng([cfg.seed, 0x57A27])
        for _ in range(opts.multistart):
            cand = _random_state(rng, ios, split=ios.mode == Mode.UED)
            try:
                w0, q0 = _solve_tx(channels, cand, targets, noise, opts)
            except InfeasibleError:
                continue
            run = _descend(channels, cand, w0, q0, targets, noise, opts, optimize_phases)
            if run[0][-1] < best[0][-1]:
                best = run
    trace, w, ios, status, it, history = best
    report = SolveReport(trace, w, ios, status, it,
                         wall_time=time.perf_counter() - start, kind="power")
    report.ios_history = history
    return report
