"""Frozen reference values and the independent computations that produced them.

Every constant below was obtained outside the package (sympy for closed-form
identities, plain numpy scans for searches) and is re-derived by
``test_oracles.py`` so that a drift in either side is noticed.
"""
import math

import numpy as np

# exact solutions of the model problems
BIEBERBACH_CENTER = 2.0794415416798357  # ln 8


def bieberbach(points):
    """Delta u = e^u on the unit disk: u = ln(8 / (1 - |x|^2)^2)."""
    r2 = (np.asarray(points) ** 2).sum(axis=1)
    return np.log(8.0 / (1.0 - r2) ** 2)


def bieberbach_scaled(points, a):
    """Delta u = e^{a u} on the unit disk: u = ln(8 / (a (1 - |x|^2)^2)) / a."""
    r2 = (np.asarray(points) ** 2).sum(axis=1)
    return np.log(8.0 / (a * (1.0 - r2) ** 2)) / a


def half_plane_cubic(points):
    """u'' = u^3 on x1 > 0: u = sqrt(2)/x1."""
    return math.sqrt(2.0) / np.asarray(points)[:, 0]


def slab_log(points):
    """Delta u = e^u on x1 > 0: u = ln(2 / x1^2)."""
    return np.log(2.0 / np.asarray(points)[:, 0] ** 2)


# closed-form barrier constants
KO_POWER_N0 = {(2, 3.0, 1.0, 1.0, 0.0): math.sqrt(8.0), (2, 3.0, 1.0, 2.0, 0.0): 4.0}
KO_EXP_N2 = {(2, 1.0, 0.0): 8.0, (3, 1.0, 1.0): 24.0}
SINGULAR_N2P2 = {"gamma": 2.0, "gamma0": 4.0, "c0": 2.0, "c1": 2.0 * (1.5**-2 - 0.25)}
FROZEN_CP_N2P2 = 2.0
STENCIL_CONSTANT_N2P2 = 12.0  # 2 * max_theta (|4c^2-1| + |4s^2-1| + 8|cs|) = 2 * 6
EXTERIOR_BALL_M = 5  # n=2, p=2, lam=Lam=1, K=0, delta=1/4


def exterior_ball_margin(m, t, n=2, p=2.0, lam=1.0, Lam=1.0, K=0.0):
    """Profile inequality for v0 = (1-t)^m written with plain derivatives."""
    v0 = (1 - t) ** m
    d1 = -m * (1 - t) ** (m - 1)
    d2 = m * (m - 1) * (1 - t) ** (m - 2)
    return lam * d2 + ((n - 1) * Lam / t) * d1 + K * d1 - K * v0 - v0**p


def exterior_ball_min_m(delta=0.25, n_samples=200_000, **kw):
    t = np.linspace(delta, 1.0, n_samples + 1)[:-1]
    for m in range(2, 10_000):
        if exterior_ball_margin(m, t, **kw).min() >= 0:
            return m
    return None
