"""Riemannian conjugate gradient on the complex circle manifold.

Points are vectors with unit-modulus entries. Gradients follow the convention
that the directional derivative of a real cost along ``d`` is
``Re(grad^H d)``; for ``phi^H B phi + 2 Re(phi^H b)`` this is ``2 (B phi + b)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

__all__ = [
    "ManifoldError", "SmoothedObjective", "RcgOptions", "lse_smooth",
    "smoothing_epsilon", "riemannian_grad", "retract", "rcg_minimize",
    "max_of_quadratics",
]


class ManifoldError(ArithmeticError):
    pass


@dataclass(frozen=True)
class SmoothedObjective:
    evaluate: Callable[[np.ndarray], float]
    euclidean_gradient: Callable[[np.ndarray], np.ndarray]
    epsilon: float = 0.0


@dataclass(frozen=True)
class RcgOptions:
    max_iters: int = 200
    grad_tol: float = 1e-8
    initial_step: float = 1.0
    shrink: float = 0.5
    sufficient_decrease: float = 1e-4
    max_backtracks: int = 50
    pr_plus: bool = True
    # start each line search from a few times the previous accepted step length
    adaptive_step: bool = False
    growth: float = 4.0

    def __post_init__(self):
        if not 0.0 < self.shrink < 1.0:
            raise ValueError("shrink must lie in (0, 1)")
        if min(self.max_iters, self.grad_tol, self.initial_step,
               self.sufficient_decrease, self.max_backtracks) <= 0:
            raise ValueError("RCG options must be positive")


def lse_smooth(values, eps: float) -> float:
    """``eps * log(sum(exp(values / eps)))`` computed without overflow."""
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise ValueError("lse_smooth of an empty vector")
    if not eps > 0:
        raise ValueError("eps must be positive")
    vmax = v.max()
    return float(vmax + eps * np.log(np.sum(np.exp((v - vmax) / eps))))


def smoothing_epsilon(values) -> float:
    v = np.asarray(values, dtype=float)
    return max(1e-6, 0.01 * float(v.max() - v.min()))


def _check_unit(phi):
    if phi.size and np.max(np.abs(np.abs(phi) - 1.0)) > 1e-9:
        raise ManifoldError("point is not on the complex circle manifold")


def riemannian_grad(euclid_grad, phi) -> np.ndarray:
    """Projection of a Euclidean gradient onto the tangent space at ``phi``."""
    g = np.asarray(euclid_grad, dtype=complex)
    phi = np.asarray(phi, dtype=complex)
    _check_unit(phi)
    return g - np.real(g * phi.conj()) * phi


def retract(phi, step) -> np.ndarray:
    """Elementwise renormalization of ``phi + step`` back to unit modulus."""
    z = np.asarray(phi, dtype=complex) + np.asarray(step, dtype=complex)
    mag = np.abs(z)
    if mag.size and mag.min() == 0.0:
        raise ManifoldError("degenerate retraction: phi + step has a zero entry")
    return z / mag


def _inner(a, b) -> float:
    return float(np.real(np.vdot(a, b)))


def rcg_minimize(obj, phi0, opts: Optional[RcgOptions] = None):
    """Minimize ``obj`` over the complex circle manifold.

    Polak-Ribiere+ conjugate directions, projection-based vector transport
    and Armijo backtracking. Returns the final point and the objective trace
    (one entry per accepted iterate, starting with ``obj(phi0)``).
    """
    opts = opts or RcgOptions()
    phi = np.asarray(phi0, dtype=complex).copy()
    _check_unit(phi)
    phi = phi / np.abs(phi)

    def evaluate(x, it):
        f = float(obj.evaluate(x))
        if not np.isfinite(f):
            raise ManifoldError(f"non-finite objective at iteration {it}")
        return f

    def rgrad(x, it):
        g = np.asarray(obj.euclidean_gradient(x), dtype=complex)
        if not np.all(np.isfinite(g)):
            raise ManifoldError(f"non-finite gradient at iteration {it}")
        return g - np.real(g * x.conj()) * x

    f = evaluate(phi, 0)
    trace = [f]
    grad = rgrad(phi, 0)
    direction = -grad
    last_len = None
    for it in range(1, opts.max_iters + 1):
        gnorm = np.linalg.norm(grad)
        if gnorm < opts.grad_tol:
            break
        slope = _inner(grad, direction)
        if slope >= 0:
            direction, slope = -grad, -gnorm ** 2
        step = opts.initial_step / np.linalg.norm(direction)
        if opts.adaptive_step and last_len:
            step = min(step, opts.growth * last_len / np.linalg.norm(direction))
        for _ in range(opts.max_backtracks):
            cand = retract(phi, step * direction)
            f_new = evaluate(cand, it)
            if f_new <= f + opts.sufficient_decrease * step * slope:
                break
            step *= opts.shrink
        else:
            break
        if f_new > f:
            break
        grad_new = rgrad(cand, it)
        # vector transport: project old quantities onto the new tangent space
        grad_old_t = grad - np.real(grad * cand.conj()) * cand
        dir_t = direction - np.real(direction * cand.conj()) * cand
        theta = _inner(grad_new, grad_new - grad_old_t) / gnorm ** 2
        if opts.pr_plus:
            theta = max(0.0, theta)
        last_len = step * np.linalg.norm(direction)
        phi, f, grad = cand, f_new, grad_new
        direction = -grad + theta * dir_t
        trace.append(f)
    return phi, trace


def max_of_quadratics(B, b, c, eps: Optional[float] = None, phi_ref=None) -> SmoothedObjective:
    """Log-sum-exp smoothing of ``max_k phi^H B_k phi + 2 Re(phi^H b_k) + c_k``.

    When ``eps`` is omitted it is chosen from the spread of the quadratics at
    ``phi_ref``.
    """
    B = np.asarray(B, dtype=complex)
    b = np.asarray(b, dtype=complex)
    c = np.asarray(c, dtype=float)

    def values(phi):
        bp = B @ phi
        return np.real(np.einsum("m,km->k", phi.conj(), bp)) + 2 * np.real(b.conj() @ phi) + c, bp

    if eps is None:
        if phi_ref is None:
            raise ValueError("need eps or a reference point")
        eps = smoothing_epsilon(values(np.asarray(phi_ref, complex))[0])

    def evaluate(phi):
        return lse_smooth(values(phi)[0], eps)

    def gradient(phi):
        v, bp = values(phi)
        w = np.exp((v - v.max()) / eps)
        w /= w.sum()
        return 2.0 * (w @ (bp + b))

    return SmoothedObjective(evaluate, gradient, eps)
