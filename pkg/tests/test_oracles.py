"""Re-derive the frozen reference values independently of the package."""
import math

import mpmath as mp
import numpy as np
import pytest
import sympy as sp

import oracles

x, y = sp.symbols("x y", real=True)
r2 = x**2 + y**2


def laplace(u):
    return sp.diff(u, x, 2) + sp.diff(u, y, 2)


@pytest.mark.parametrize("u, f", [
    (sp.log(8 / (1 - r2) ** 2), sp.exp),
    (sp.log(2 / (1 - r2) ** 2) / 4, lambda v: sp.exp(4 * v)),
    (sp.sqrt(2) / x, lambda v: v**3),
    (sp.log(2 / x**2), sp.exp),
])
def test_exact_solutions_symbolically(u, f):
    assert sp.simplify(laplace(u) - f(u)) == 0


def test_numeric_oracles_match_symbolic_forms():
    pts = np.array([[0.1, 0.2], [0.5, -0.3], [0.0, 0.0]])
    sym = sp.lambdify((x, y), sp.log(8 / (1 - r2) ** 2))
    assert np.allclose(oracles.bieberbach(pts), [sym(*p) for p in pts], rtol=1e-14)
    sym4 = sp.lambdify((x, y), sp.log(2 / (1 - r2) ** 2) / 4)
    assert np.allclose(oracles.bieberbach_scaled(pts, 4.0), [sym4(*p) for p in pts], rtol=1e-14)
    assert float(mp.log(8)) == pytest.approx(oracles.BIEBERBACH_CENTER, abs=1e-16)


def test_closed_form_constants():
    # N0 = (2g(n+2g)Lam + 2gK)^{g/2} with g = 2/(p-1)
    for (n, p, lam, Lam, K), val in oracles.KO_POWER_N0.items():
        g = mp.mpf(2) / (p - 1)
        assert float((2 * g * (n + 2 * g) * Lam + 2 * g * K) ** (g / 2)) == pytest.approx(val, rel=1e-15)
    for (n, Lam, K), val in oracles.KO_EXP_N2.items():
        assert 4 * n * (Lam + K) == val
    g = 2.0
    g0 = g * ((g + 1) * 1.0 + (1 - 2) * 1.0)
    assert g0 == oracles.SINGULAR_N2P2["gamma0"]
    assert (g0 / 2) ** (g / 2) == oracles.SINGULAR_N2P2["c0"]
    assert (g * (g + 2 - 2) / 2) ** (g / 2) == oracles.FROZEN_CP_N2P2


def test_stencil_constant_by_dense_angle_scan():
    th = np.linspace(0, 2 * np.pi, 200_001)
    c, s = np.cos(th), np.sin(th)
    val = 2 * (np.abs(4 * c * c - 1) + np.abs(4 * s * s - 1) + 8 * np.abs(c * s))
    assert val.max() == pytest.approx(oracles.STENCIL_CONSTANT_N2P2, rel=1e-9)


def test_exterior_ball_m_by_brute_force():
    assert oracles.exterior_ball_min_m(0.25) == oracles.EXTERIOR_BALL_M


def test_exterior_ball_margin_in_high_precision():
    # the frozen m is feasible and m - 1 is not, checked with mpmath near the inner end
    def margin(m, t):
        t = mp.mpf(t)
        return (m * (m - 1) * (1 - t) ** (m - 2) - m * (1 - t) ** (m - 1) / t - (1 - t) ** (2 * m))

    m = oracles.EXTERIOR_BALL_M
    ts = [mp.mpf(1) / 4 + k * mp.mpf(3) / 4000 for k in range(1000)]
    assert min(margin(m, t) for t in ts) >= 0
    assert min(margin(m - 1, t) for t in ts) < 0
    assert math.isfinite(float(margin(m, 0.25)))
