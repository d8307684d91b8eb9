"""Surface control modes and the comparison schemes built on them.

Every mode is a restriction of the energy split: EED, SD, the two
time-division slots and a reflect-only IRS fix ``zeta`` and leave the phases
free, while ``NONE`` removes the surface altogether. The solvers only
optimize ``zeta`` in UED mode, so a fixed-split mode is solved by projecting
the state once and running the same block coordinate descent.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

from .model import ChannelSet, IosState, Mode, SolveReport, Status, SystemConfig, noise_vector

__all__ = ["ModeSpec", "SCHEMES", "project_mode", "sd_partition", "solve_with_mode",
           "random_phase_state"]

# scheme tags accepted by solve_with_mode and the CLI
SCHEMES = ("UED", "EED", "SD", "TD", "IRS", "NONE", "random-EED")


@dataclass(frozen=True)
class ModeSpec:
    """A control mode plus the knobs some modes need.

    Parameters
    ----------
    mode : Mode
    reflect_set : sequence of int, optional
        Reflecting elements in SD mode; the rest transmit. ``None`` uses the
        default split proportional to the user counts.
    tau_r : float
        Fraction of time given to the reflection slot in TD mode.
    """

    mode: Mode = Mode.UED
    reflect_set: Optional[tuple] = None
    tau_r: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode(self.mode))
        if not 0.0 < self.tau_r < 1.0:
            raise ValueError("tau_r must lie in (0, 1)")
        if self.reflect_set is not None:
            rs = tuple(int(i) for i in self.reflect_set)
            if len(set(rs)) != len(rs) or min(rs, default=0) < 0:
                raise ValueError("SD reflect set must hold distinct non-negative indices")
            object.__setattr__(self, "reflect_set", rs)

    @property
    def tau_t(self) -> float:
        return 1.0 - self.tau_r


def sd_partition(m: int, k_r: int, k_t: int) -> np.ndarray:
    """Boolean mask of reflecting elements: the first ``ceil(M K_r / K)``."""
    n_ref = math.ceil(m * k_r / (k_r + k_t))
    mask = np.zeros(m, bool)
    mask[:n_ref] = True
    return mask


def project_mode(ios: IosState, spec: ModeSpec, channels: ChannelSet | None = None) -> IosState:
    """Restrict ``ios`` to the energy split of ``spec.mode``.

    ``channels`` is only needed for the default SD partition.
    """
    m = ios.n_elements
    mode = spec.mode
    if mode == Mode.UED:
        return ios.replace(mode=Mode.UED)
    if mode == Mode.EED:
        zeta = np.full(m, 2 ** -0.5)
    elif mode == Mode.SD:
        if spec.reflect_set is not None:
            if spec.reflect_set and max(spec.reflect_set) >= m:
                raise ValueError("SD reflect set refers to a missing element")
            mask = np.zeros(m, bool)
            mask[list(spec.reflect_set)] = True
        elif channels is not None:
            mask = sd_partition(m, channels.k_r, channels.k_t)
        else:
            raise ValueError("default SD partition needs the user counts")
        zeta = mask.astype(float)
    elif mode in (Mode.TD_REFLECT, Mode.IRS):
        zeta = np.ones(m)
    elif mode == Mode.TD_TRANSMIT:
        zeta = np.zeros(m)
    else:
        zeta = ios.zeta
    return ios.replace(zeta=zeta, mode=mode)


def random_phase_state(m: int, seed: int, mode: Mode = Mode.EED) -> IosState:
    """Uniform random phases on both sides with the split of ``mode``."""
    rng = np.random.default_rng([int(seed), 0x5EED])
    state = IosState(np.exp(2j * np.pi * rng.random(m)), np.exp(2j * np.pi * rng.random(m)),
                     np.full(m, 2 ** -0.5), Mode.UED)
    return project_mode(state, ModeSpec(mode))


def _run(problem, channels, cfg, init, w0=None, optimize_phases=True, opts=None):
    if problem == "power":
        from .powermin import power_min_solve
        return power_min_solve(channels, cfg, opts, init=init, optimize_phases=optimize_phases)
    from .sumrate import sum_rate_solve
    return sum_rate_solve(channels, cfg, opts, init=init, w0=w0, optimize_phases=optimize_phases)


def _better(problem, a: SolveReport, b: Optional[SolveReport]) -> bool:
    """True when ``a`` improves on ``b``."""
    if b is None or b.status == Status.INFEASIBLE:
        return a.status != Status.INFEASIBLE or b is None
    if a.status == Status.INFEASIBLE:
        return False
    if problem == "power":
        return a.objective < b.objective
    return a.objective > b.objective


def _empty_slot(problem) -> SolveReport:
    return SolveReport([0.0], None, None, Status.CONVERGED, 0,
                       rate_trace=[0.0] if problem == "rate" else [],
                       kind=problem, value=0.0)


def _pad(trace, n):
    trace = list(trace)
    return trace + [trace[-1]] * (n - len(trace))


def _solve_td(problem, channels, cfg, spec, opts):
    from .powermin import bootstrap_state
    slots = []
    for reflected, mode in ((True, Mode.TD_REFLECT), (False, Mode.TD_TRANSMIT)):
        sub = channels.subset(reflected)
        if sub.n_users == 0:
            slots.append(_empty_slot(problem))
            continue
        init = bootstrap_state(sub, mode)
        slots.append(_run(problem, sub, cfg, init, opts=opts))
    iters = max(s.iterations for s in slots)
    wall = sum(s.wall_time for s in slots)
    if any(s.status == Status.INFEASIBLE for s in slots):
        return SolveReport([float("inf")], None, None, Status.INFEASIBLE, 0,
                           wall_time=wall, kind=problem, slots=tuple(slots))
    status = (Status.CONVERGED if all(s.status == Status.CONVERGED for s in slots)
              else Status.MAX_ITERS)
    if problem == "power":
        trace = np.max([_pad(s.objective_trace, iters + 1) for s in slots], axis=0).tolist()
        return SolveReport(trace, None, None, status, iters, wall_time=wall, kind="power",
                           slots=tuple(slots), value=float(trace[-1]))
    taus = (spec.tau_r, spec.tau_t)
    rates = sum(t * np.asarray(_pad(s.rate_trace, iters + 1)) for t, s in zip(taus, slots))
    objs = sum(t * np.asarray(_pad(s.objective_trace, iters + 1)) for t, s in zip(taus, slots))
    return SolveReport(objs.tolist(), None, None, status, iters, rate_trace=rates.tolist(),
                       wall_time=wall, kind="rate", slots=tuple(slots), value=float(rates[-1]))


def solve_with_mode(problem: str, channels: ChannelSet, cfg: SystemConfig, spec,
                    warm: Iterable[SolveReport] = (), opts=None) -> SolveReport:
    """Solve ``problem`` ("power" or "rate") for one scheme.

    ``spec`` is a ModeSpec or a scheme tag from ``SCHEMES``. Each report in
    ``warm`` is projected onto this mode and used as an extra starting point;
    the best result over all starts is returned. Warm-starting a mode from the
    solution of a more restricted mode makes it at least as good on the same
    channels, since both solvers are monotone.
    """
    if problem not in ("power", "rate"):
        raise ValueError(f"unknown problem {problem!r}")
    from .powermin import bootstrap_state
    random_phase = False
    if isinstance(spec, str):
        if spec == "random-EED":
            spec, random_phase = ModeSpec(Mode.EED), True
        elif spec == "TD":
            spec = ModeSpec(Mode.TD_REFLECT)
        else:
            spec = ModeSpec(Mode(spec))
    if spec.mode in (Mode.TD_REFLECT, Mode.TD_TRANSMIT):
        return _solve_td(problem, channels, cfg, spec, opts)

    if random_phase:
        init = random_phase_state(channels.n_elements, cfg.seed, Mode.EED)
        return _run(problem, channels, cfg, init, optimize_phases=False, opts=opts)

    best = _run(problem, channels, cfg, bootstrap_state(channels, spec.mode, spec), opts=opts)
    if spec.mode == Mode.NONE:
        return best
    for rep in warm:
        if rep is None or rep.ios is None or rep.status == Status.INFEASIBLE:
            continue
        init = project_mode(rep.ios, spec, channels)
        w0 = rep.beamformers if problem == "rate" else None
        cand = _run(problem, channels, cfg, init, w0=w0, opts=opts)
        if _better(problem, cand, best):
            best = cand
    return best
