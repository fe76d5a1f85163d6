"""Small numerical kernels shared by the equilibrium and continuation code."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


class ConvergenceError(RuntimeError):
    pass


def fd_jacobian(F: Callable[[np.ndarray], np.ndarray], x: np.ndarray, rel_step: float = 1e-6) -> np.ndarray:
    """Central-difference Jacobian with step ``rel_step * max(1, |x_j|)``."""
    x = np.asarray(x, dtype=float)
    n = x.size
    cols = []
    for j in range(n):
        h = rel_step * max(1.0, abs(x[j]))
        e = np.zeros(n)
        e[j] = h
        cols.append((F(x + e) - F(x - e)) / (2.0 * h))
    return np.column_stack(cols)


@dataclass
class NewtonResult:
    x: np.ndarray
    converged: bool
    iterations: int
    residual: float
    message: str = ""


def damped_newton(
    F: Callable[[np.ndarray], np.ndarray],
    x0,
    *,
    step_tol: float = 1e-12,
    res_tol: float = 0.0,
    max_iter: int = 100,
    max_halvings: int = 40,
    jacobian: Callable[[np.ndarray], np.ndarray] | None = None,
) -> NewtonResult:
    """Newton's method with backtracking on the residual norm.

    Converged when the relative update falls below ``step_tol`` (and the
    residual norm is at most ``res_tol`` if that is positive).
    """
    x = np.array(x0, dtype=float)
    fx = F(x)
    norm = float(np.linalg.norm(fx))
    jac = jacobian or (lambda z: fd_jacobian(F, z))
    for it in range(1, max_iter + 1):
        if not np.all(np.isfinite(fx)):
            return NewtonResult(x, False, it, norm, "non-finite residual")
        try:
            dx = np.linalg.solve(jac(x), -fx)
        except np.linalg.LinAlgError:
            return NewtonResult(x, False, it, norm, "singular Jacobian")
        lam = 1.0
        for _ in range(max_halvings + 1):
            x_new = x + lam * dx
            f_new = F(x_new)
            n_new = float(np.linalg.norm(f_new))
            if np.all(np.isfinite(f_new)) and n_new <= (1.0 - 1e-4 * lam) * norm:
                break
            lam *= 0.5
        else:
            # no decrease possible: accept only if already at the noise floor
            small = float(np.linalg.norm(dx)) <= step_tol * max(1.0, float(np.linalg.norm(x))) * 1e3
            return NewtonResult(x, small and (res_tol <= 0 or norm <= res_tol), it, norm,
                                "line search failed")
        step = float(np.linalg.norm(x_new - x))
        x, fx, norm = x_new, f_new, n_new
        if step <= step_tol * max(1.0, float(np.linalg.norm(x))) and (res_tol <= 0 or norm <= res_tol):
            return NewtonResult(x, True, it, norm)
    return NewtonResult(x, False, max_iter, norm, "iteration limit")


def bisect(f: Callable[[float], float], lo: float, hi: float, *, xtol: float = 0.0, max_iter: int = 200) -> float:
    """Root of ``f`` on ``[lo, hi]`` given a sign change; runs to machine resolution by default."""
    flo, fhi = f(lo), f(hi)
    if flo == 0:
        return lo
    if fhi == 0:
        return hi
    if (flo > 0) == (fhi > 0):
        raise ConvergenceError(f"no sign change on [{lo}, {hi}]")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi or hi - lo <= xtol:
            break
        fm = f(mid)
        if fm == 0:
            return mid
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def golden_min(f: Callable[[float], float], a: float, b: float, *, xtol: float = 1e-12, max_iter: int = 200):
    """Minimise a unimodal ``f`` on ``[a, b]``; returns ``(x, f(x))``, endpoints included."""
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if b - a <= xtol * max(1.0, abs(a) + abs(b)):
            break
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = f(d)
    cands = [(a, f(a)), (b, f(b)), (c, fc), (d, fd)]
    return min(cands, key=lambda p: p[1])
