"""Domain types and the measurable quantities of the IOS-assisted downlink.

Conventions
-----------
Channel vectors are stored as rows: ``h_d[k]`` is the length ``n_tx`` vector
of the k-th reflected user's direct link, ``h_r[k]`` / ``h_t[k]`` the length
``n_elements`` IOS-to-user vectors, and ``g`` the ``(n_elements, n_tx)``
BS-to-IOS matrix. The row channel seen by a reflected user is

    h_r[k]^H diag(zeta * phi_r) G + h_d[k]^H

and by a transmitted user ``h_t[k]^H diag(eta * phi_t) G``.

Users are always indexed reflected-first: ``[0, k_r)`` are reflected users
and ``[k_r, k_r + k_t)`` are transmitted users.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

__all__ = [
    "DimensionError", "Mode", "Status", "Geometry", "SystemConfig",
    "ChannelSet", "IosState", "Beamformers", "SolveReport",
    "effective_channels", "composite_channel", "sinr_all", "sum_rate",
    "total_power", "mse_all", "noise_vector", "target_vector",
]

UNIT_MODULUS_TOL = 1e-12


class DimensionError(ValueError):
    """Raised when array shapes disagree with the system dimensions."""


class Mode(str, enum.Enum):
    UED = "UED"
    EED = "EED"
    SD = "SD"
    TD_REFLECT = "TD-reflect"
    TD_TRANSMIT = "TD-transmit"
    IRS = "IRS"
    NONE = "NONE"


class Status(str, enum.Enum):
    CONVERGED = "Converged"
    MAX_ITERS = "MaxIters"
    INFEASIBLE = "Infeasible"


@dataclass(frozen=True)
class Geometry:
    """Deployment geometry.

    ``angles`` fixes the per-user angle delta (radians, reflected users first);
    when ``None`` the channel generator draws them uniformly on [0, pi/2].
    """

    d_bi: float = 50.0
    d_iu: float = 2.0
    angles: Optional[tuple] = None

    def __post_init__(self):
        if not (self.d_bi > 0 and self.d_iu > 0):
            raise ValueError("distances must be positive")


@dataclass(frozen=True)
class SystemConfig:
    """System parameters, all in linear units (watts, linear SINR)."""

    n_tx: int = 16
    n_elements: int = 128
    k_r: int = 4
    k_t: int = 4
    noise_r: float = 1e-10
    noise_t: float = 1e-10
    sinr_targets_r: Optional[tuple] = None
    sinr_targets_t: Optional[tuple] = None
    sinr_target: float = 100.0
    power_budget: float = 10 ** 0.5
    geometry: Geometry = field(default_factory=Geometry)
    pathloss_bs_ios: float = 2.5
    pathloss_ios_user: float = 2.8
    pathloss_bs_user: float = 3.5
    ref_gain: float = 1e-3
    seed: int = 0

    def __post_init__(self):
        if self.n_tx < 1 or self.n_elements < 0:
            raise ValueError("n_tx must be >= 1 and n_elements >= 0")
        if self.k_r < 0 or self.k_t < 0 or self.k_r + self.k_t < 1:
            raise ValueError("need k_r, k_t >= 0 with k_r + k_t >= 1")
        positive = (self.noise_r, self.noise_t, self.sinr_target,
                    self.power_budget, self.ref_gain)
        if min(positive) <= 0:
            raise ValueError("noise powers, targets, budget and C0 must be > 0")
        for name, n in (("sinr_targets_r", self.k_r), ("sinr_targets_t", self.k_t)):
            val = getattr(self, name)
            if val is not None:
                if len(val) != n:
                    raise ValueError(f"{name} must have {n} entries")
                if min(val, default=1.0) <= 0:
                    raise ValueError(f"{name} must be positive")

    @property
    def n_users(self) -> int:
        return self.k_r + self.k_t

    def targets(self) -> np.ndarray:
        """Per-user SINR targets, reflected users first."""
        tr = self.sinr_targets_r or (self.sinr_target,) * self.k_r
        tt = self.sinr_targets_t or (self.sinr_target,) * self.k_t
        return np.asarray(tuple(tr) + tuple(tt), dtype=float)

    def noises(self) -> np.ndarray:
        return np.r_[np.full(self.k_r, self.noise_r), np.full(self.k_t, self.noise_t)]

    def with_users(self, k_r: int, k_t: int) -> "SystemConfig":
        return replace(self, k_r=k_r, k_t=k_t, sinr_targets_r=None, sinr_targets_t=None)


def _as_matrix(x, ncols, name):
    a = np.asarray(x, dtype=complex)
    if a.size == 0:
        # keep the row count of an empty (K, 0) block, e.g. users of an empty surface
        rows = a.shape[0] if a.ndim == 2 and ncols == 0 else 0
        return np.zeros((rows, ncols), dtype=complex)
    a = np.atleast_2d(a)
    if a.shape[1] != ncols:
        raise DimensionError(f"{name} has {a.shape[1]} columns, expected {ncols}")
    return a


@dataclass(frozen=True, eq=False)
class ChannelSet:
    """One channel realization.

    Parameters
    ----------
    g : (M, N_t) complex
    h_d : (K_r, N_t) complex, direct BS-to-reflected-user vectors
    h_r : (K_r, M) complex
    h_t : (K_t, M) complex
    """

    g: np.ndarray
    h_d: np.ndarray
    h_r: np.ndarray
    h_t: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.g, dtype=complex)
        if g.ndim != 2:
            raise DimensionError("g must be a matrix (M, N_t)")
        m, n_tx = g.shape
        h_d = _as_matrix(self.h_d, n_tx, "h_d")
        h_r = _as_matrix(self.h_r, m, "h_r")
        h_t = _as_matrix(self.h_t, m, "h_t")
        if h_d.shape[0] != h_r.shape[0]:
            raise DimensionError("h_d and h_r must have one row per reflected user")
        for a in (g, h_d, h_r, h_t):
            if not np.all(np.isfinite(a)):
                raise ValueError("channel entries must be finite")
        object.__setattr__(self, "g", g)
        object.__setattr__(self, "h_d", h_d)
        object.__setattr__(self, "h_r", h_r)
        object.__setattr__(self, "h_t", h_t)

    @property
    def n_tx(self) -> int:
        return self.g.shape[1]

    @property
    def n_elements(self) -> int:
        return self.g.shape[0]

    @property
    def k_r(self) -> int:
        return self.h_r.shape[0]

    @property
    def k_t(self) -> int:
        return self.h_t.shape[0]

    @property
    def n_users(self) -> int:
        return self.k_r + self.k_t

    def __eq__(self, other):
        if not isinstance(other, ChannelSet):
            return NotImplemented
        return all(np.array_equal(getattr(self, a), getattr(other, a))
                   for a in ("g", "h_d", "h_r", "h_t"))

    def subset(self, reflected: bool) -> "ChannelSet":
        """Channels of one user group only (used by time-division slots)."""
        m, n = self.g.shape
        if reflected:
            return ChannelSet(self.g, self.h_d, self.h_r, np.zeros((0, m)))
        return ChannelSet(self.g, np.zeros((0, n)), np.zeros((0, m)), self.h_t)


@dataclass(frozen=True, eq=False)
class IosState:
    """Phases and energy split of the surface.

    The transmit amplitude ``eta`` is derived from ``zeta`` and never stored.
    """

    phi_r: np.ndarray
    phi_t: np.ndarray
    zeta: np.ndarray
    mode: Mode = Mode.UED

    def __post_init__(self):
        phi_r = np.asarray(self.phi_r, dtype=complex).ravel()
        phi_t = np.asarray(self.phi_t, dtype=complex).ravel()
        zeta = np.asarray(self.zeta, dtype=float).ravel()
        if not (phi_r.size == phi_t.size == zeta.size):
            raise DimensionError("phi_r, phi_t and zeta must have equal length")
        for phi in (phi_r, phi_t):
            if phi.size and np.max(np.abs(np.abs(phi) - 1.0)) > UNIT_MODULUS_TOL:
                raise ValueError("phases must have unit modulus")
        if zeta.size and (zeta.min() < 0.0 or zeta.max() > 1.0):
            raise ValueError("zeta must lie in [0, 1]")
        object.__setattr__(self, "phi_r", phi_r)
        object.__setattr__(self, "phi_t", phi_t)
        object.__setattr__(self, "zeta", zeta)
        object.__setattr__(self, "mode", Mode(self.mode))

    @classmethod
    def initial(cls, m: int, zeta: float = 2 ** -0.5, mode=Mode.UED) -> "IosState":
        return cls(np.ones(m, complex), np.ones(m, complex), np.full(m, zeta), mode)

    @property
    def eta(self) -> np.ndarray:
        return np.sqrt(np.clip(1.0 - self.zeta ** 2, 0.0, 1.0))

    @property
    def n_elements(self) -> int:
        return self.zeta.size

    @property
    def coef_r(self) -> np.ndarray:
        return self.zeta * self.phi_r

    @property
    def coef_t(self) -> np.ndarray:
        return self.eta * self.phi_t

    def replace(self, **kw) -> "IosState":
        return replace(self, **kw)


@dataclass(frozen=True, eq=False)
class Beamformers:
    w_r: np.ndarray
    w_t: np.ndarray

    def __post_init__(self):
        w_r = np.asarray(self.w_r, dtype=complex)
        w_t = np.asarray(self.w_t, dtype=complex)
        if w_r.ndim != 2 or w_t.ndim != 2 or w_r.shape[0] != w_t.shape[0]:
            raise DimensionError("w_r and w_t must be (N_t, K) matrices")
        if not (np.all(np.isfinite(w_r)) and np.all(np.isfinite(w_t))):
            raise ValueError("beamformers must be finite")
        object.__setattr__(self, "w_r", w_r)
        object.__setattr__(self, "w_t", w_t)

    @classmethod
    def from_matrix(cls, w: np.ndarray, k_r: int) -> "Beamformers":
        w = np.asarray(w, dtype=complex)
        return cls(w[:, :k_r], w[:, k_r:])

    @property
    def matrix(self) -> np.ndarray:
        """``[W_r, W_t]`` as one (N_t, K) matrix."""
        return np.hstack([self.w_r, self.w_t])


@dataclass
class SolveReport:
    """Outcome of one solver run.

    ``objective_trace`` holds the quantity the solver descends (total power,
    or the WMMSE objective); ``rate_trace`` is filled by the sum-rate solver.
    ``slots`` carries the per-slot reports of a time-division run.
    """

    objective_trace: list
    beamformers: Optional[Beamformers]
    ios: Optional[IosState]
    status: Status
    iterations: int
    rate_trace: list = field(default_factory=list)
    wall_time: float = 0.0
    kind: str = "power"
    slots: tuple = ()
    value: Optional[float] = None

    @property
    def solution(self):
        return self.beamformers, self.ios

    @property
    def objective(self) -> float:
        """Paper-facing metric: total power (W) or sum-rate (bit/s/Hz)."""
        if self.value is not None:
            return self.value
        if self.status == Status.INFEASIBLE:
            return float("nan")
        if self.kind == "rate":
            return float(self.rate_trace[-1])
        return float(self.objective_trace[-1])


def _check(channels: ChannelSet, ios: IosState):
    if ios.n_elements != channels.n_elements:
        raise DimensionError(
            f"IOS has {ios.n_elements} elements, channels expect {channels.n_elements}")


def effective_channels(channels: ChannelSet, ios: IosState) -> np.ndarray:
    """Row channels of all users stacked into a (K, N_t) matrix.

    Row k is ``c_k^H`` so that ``effective_channels(...) @ W`` gives the
    received amplitudes of every stream at every user.
    """
    _check(channels, ios)
    rows_r = channels.h_d.conj()
    rows_t = np.zeros((channels.k_t, channels.n_tx), dtype=complex)
    if ios.mode != Mode.NONE and channels.n_elements:
        rows_r = rows_r + (channels.h_r.conj() * ios.coef_r) @ channels.g
        rows_t = (channels.h_t.conj() * ios.coef_t) @ channels.g
    return np.vstack([rows_r, rows_t])


def composite_channel(channels: ChannelSet, ios: IosState, user: int) -> np.ndarray:
    """Composite channel ``c_k`` of one user as a column vector.

    ``c_k.conj() @ w`` is the amplitude user ``k`` receives from beam ``w``.
    """
    if not 0 <= user < channels.n_users:
        raise IndexError(f"user {user} out of range for {channels.n_users} users")
    return effective_channels(channels, ios)[user].conj()


def _per_user(channels: ChannelSet, value) -> np.ndarray:
    # scalar, per-user vector, or a (reflected, transmitted) pair
    value = np.asarray(value, dtype=float)
    if value.ndim == 0:
        return np.full(channels.n_users, float(value))
    if value.size == 2 and channels.n_users != 2:
        return np.r_[np.full(channels.k_r, value[0]), np.full(channels.k_t, value[1])]
    if value.size != channels.n_users:
        raise DimensionError("expected a scalar, a (reflected, transmitted) pair or per-user values")
    return value


def noise_vector(channels: ChannelSet, cfg_or_noise) -> np.ndarray:
    """Per-user noise powers from a SystemConfig or a raw specification."""
    if isinstance(cfg_or_noise, SystemConfig):
        return np.r_[np.full(channels.k_r, cfg_or_noise.noise_r),
                     np.full(channels.k_t, cfg_or_noise.noise_t)]
    return _per_user(channels, cfg_or_noise)


def target_vector(channels: ChannelSet, cfg_or_targets) -> np.ndarray:
    if isinstance(cfg_or_targets, SystemConfig):
        cfg = cfg_or_targets
        tr = cfg.sinr_targets_r if cfg.sinr_targets_r and len(cfg.sinr_targets_r) == channels.k_r \
            else (cfg.sinr_target,) * channels.k_r
        tt = cfg.sinr_targets_t if cfg.sinr_targets_t and len(cfg.sinr_targets_t) == channels.k_t \
            else (cfg.sinr_target,) * channels.k_t
        return np.asarray(tuple(tr) + tuple(tt), dtype=float)
    return _per_user(channels, cfg_or_targets)


def _amplitudes(channels, ios, w) -> np.ndarray:
    wm = w.matrix if isinstance(w, Beamformers) else np.asarray(w, dtype=complex)
    if wm.shape != (channels.n_tx, channels.n_users):
        raise DimensionError(
            f"beamformer matrix is {wm.shape}, expected {(channels.n_tx, channels.n_users)}")
    return effective_channels(channels, ios) @ wm


def sinr_all(channels: ChannelSet, ios: IosState, w, noise) -> np.ndarray:
    """SINR of every user; interference runs over all other streams."""
    amp2 = np.abs(_amplitudes(channels, ios, w)) ** 2
    signal = np.diag(amp2)
    interference = amp2.sum(axis=1) - signal
    return signal / (interference + _per_user(channels, noise))


def sum_rate(channels: ChannelSet, ios: IosState, w, noise) -> float:
    return float(np.sum(np.log2(1.0 + sinr_all(channels, ios, w, noise))))


def total_power(w) -> float:
    wm = w.matrix if isinstance(w, Beamformers) else np.asarray(w)
    return float(np.sum(np.abs(wm) ** 2))


def mse_all(channels: ChannelSet, ios: IosState, w, nu, noise) -> np.ndarray:
    """Mean-square error of every user's linear estimate ``nu_k^* y_k``."""
    amp = _amplitudes(channels, ios, w)
    nu = np.asarray(nu, dtype=complex)
    return (np.abs(nu) ** 2 * (np.sum(np.abs(amp) ** 2, axis=1) + _per_user(channels, noise))
            - 2.0 * np.real(nu.conj() * np.diag(amp)) + 1.0)
