"""Independent reference computations used as test oracles.

None of these call into the package's numerical kernels; they are written
directly from the model equations or use SciPy.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq


def rhs_reference(t, y, p, rate):
    """Two-patch field written out term by term from the model equations."""
    E1, F1, M1, S1, E2, F2, M2, S2 = y
    frac1 = M1 / (M1 + p.gamma * S1) if M1 + p.gamma * S1 > 0 else 0.0
    frac2 = M2 / (M2 + p.gamma * S2) if M2 + p.gamma * S2 > 0 else 0.0
    return [
        p.b * F1 * (1 - E1 / p.K1) - (p.nu_E + p.mu_E) * E1,
        p.r * p.nu_E * E1 * frac1 - p.mu_F * F1 - p.d12 * F1 + p.d21 * F2,
        (1 - p.r) * p.nu_E * E1 - p.mu_M * M1 - p.beta * p.d12 * M1 + p.beta * p.d21 * M2,
        rate - p.mu_s * S1 - p.alpha * p.d12 * S1 + p.alpha * p.d21 * S2,
        p.b * F2 * (1 - E2 / p.K2) - (p.nu_E + p.mu_E) * E2,
        p.r * p.nu_E * E2 * frac2 - p.mu_F * F2 - p.d21 * F2 + p.d12 * F1,
        (1 - p.r) * p.nu_E * E2 - p.mu_M * M2 - p.beta * p.d21 * M2 + p.beta * p.d12 * M1,
        -p.mu_s * S2 - p.alpha * p.d21 * S2 + p.alpha * p.d12 * S1,
    ]


def reference_trajectory(p, rate, y0, t_eval, impulses=None):
    """SciPy DOP853 solution sampled at ``t_eval``.

    ``impulses=(tau, mass)`` adds ``mass`` to M1s at every multiple of
    ``tau`` (including 0); samples at an impulse time are post-impulse.
    """
    t_eval = np.asarray(t_eval, dtype=float)
    t_end = float(t_eval[-1])
    if impulses is None:
        sol = solve_ivp(rhs_reference, (0.0, t_end), y0, method="DOP853", t_eval=t_eval,
                        rtol=1e-12, atol=1e-12, args=(p, rate))
        return sol.y.T
    tau, mass = impulses
    out = np.empty((len(t_eval), 8))
    y = np.array(y0, dtype=float)
    k = 0
    while k * tau <= t_end:
        a, b = k * tau, min((k + 1) * tau, t_end)
        y[3] += mass
        sol = solve_ivp(rhs_reference, (a, max(b, a + 1e-12)), y, method="DOP853", dense_output=True,
                        rtol=1e-12, atol=1e-12, args=(p, rate))
        mask = (t_eval >= a) & ((t_eval < b) | ((b == t_end) & (t_eval <= b)))
        if mask.any():
            out[mask] = sol.sol(t_eval[mask]).T
        y = sol.y[:, -1]
        k += 1
    return out


def expm_taylor(A, t=1.0):
    """Scaling and squaring with a long Taylor series, in plain numpy."""
    M = np.asarray(A, dtype=float) * t
    norm = max(np.abs(M).sum(axis=1).max(), 1e-300)
    s = max(0, int(math.ceil(math.log2(norm))) + 1)
    X = M / (2.0 ** s)
    term = np.eye(M.shape[0])
    acc = term.copy()
    for k in range(1, 30):
        term = term @ X / k
        acc = acc + term
    for _ in range(s):
        acc = acc @ acc
    return acc


def sterile_tau_direct(p):
    """Steady sterile densities per unit release rate: solve the 2x2 linear system."""
    A = np.array([
        [p.mu_s + p.alpha * p.d12, -p.alpha * p.d21],
        [-p.alpha * p.d12, p.mu_s + p.alpha * p.d21],
    ])
    return np.linalg.solve(A, np.array([1.0, 0.0]))


def homogeneous_threshold_discriminant(p):
    """Release rate at which the homogeneous quadratic for E has a double root, found numerically."""
    K = p.K1 + p.K2
    N = p.b * p.r * p.nu_E / (p.mu_F * (p.mu_E + p.nu_E))

    def disc(lam):
        c = p.mu_M * p.gamma * lam / ((1 - p.r) * p.nu_E * p.mu_s)
        return (N - 1) ** 2 - 4 * (N / K) * c

    hi = 1.0
    while disc(hi) > 0:
        hi *= 2
    return brentq(disc, 0.0, hi, xtol=1e-14, rtol=1e-15)


def uncontrolled_equilibrium_reference(p, guess):
    """Positive root of the Λ = 0 field by SciPy's hybrid Powell method."""
    from scipy.optimize import fsolve

    idx = [0, 1, 2, 4, 5, 6]

    def F(w):
        y = np.zeros(8)
        y[idx] = w
        return np.array(rhs_reference(0.0, y, p, 0.0))[idx]

    return fsolve(F, guess, xtol=1e-14)
