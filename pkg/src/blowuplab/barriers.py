"""Closed-form sub/supersolutions, searches for their constants, and sampled
certification of the differential inequalities.

All barriers are radial (functions of ``|x - x0|``) or planar (functions of
``x_1``) in ``R^n``.  A profile returns, at each sample, a log-scale ``ls`` and
the normalized quantities ``phi, phi', phi'/rho, phi''`` such that the true
values are ``exp(ls)`` times them; margins are evaluated in these normalized
units so that large exponents never overflow.  Normalization divides by a
positive number, so signs of margins are exact.

Drift bound.  Admissible drifts satisfy ``sum b_i^2 <= K``, i.e. ``|b| <= sqrt K``.
Constant formulas use ``K_b = max(K, sqrt K)`` in the drift slot; this agrees
with the plain ``K`` whenever ``K = 0`` or ``K >= 1``.  Pass ``literal=True`` to
use ``K`` itself.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import OutOfRangeError, ParameterError, SearchError
from .nonlinearity import NonlinearitySpec
from .operators import CoefficientField, OperatorSpec, ScaledField

UPPER, LOWER = "upper", "lower"
RADII_SEARCH = 2.0 ** -np.arange(1, 21)


def drift_bound(K: float, literal: bool = False) -> float:
    return float(K) if literal else float(max(K, np.sqrt(K)))


def power_exponents(p: float) -> tuple[float, float]:
    if not p > 1:
        raise ParameterError(f"power barriers require p > 1, got p={p}")
    gamma = 2.0 / (p - 1.0)
    return gamma, gamma + 2.0


@dataclass(frozen=True, eq=False)
class RadialProfile:
    center: np.ndarray
    terms: Callable  # rho -> (ls, phi, dphi, dphi_over_rho, ddphi)
    inner: float  # validity: inner < rho < outer
    outer: float


@dataclass(frozen=True, eq=False)
class PlanarProfile:
    terms: Callable  # x1 -> (ls, phi, dphi, ddphi)
    lo: float
    hi: float


@dataclass(frozen=True, eq=False)
class BarrierSpec:
    name: str
    role: str
    n: int
    profile: RadialProfile | PlanarProfile
    params: dict
    worst_case: bool = True

    @property
    def radial(self) -> bool:
        return isinstance(self.profile, RadialProfile)

    def _normalized(self, points):
        x = np.atleast_2d(np.asarray(points, float))
        if self.radial:
            rel = x - self.profile.center
            rho = np.linalg.norm(rel, axis=1)
            ls, phi, dphi, dor, ddphi = self.profile.terms(rho)
            with np.errstate(invalid="ignore", divide="ignore"):
                e = rel / rho[:, None]
            return ls, phi, dphi, dor, ddphi, e
        ls, phi, dphi, ddphi = self.profile.terms(x[:, 0])
        e = np.zeros_like(x)
        e[:, 0] = 1.0
        return ls, phi, dphi, np.zeros_like(phi), ddphi, e

    def value(self, points) -> np.ndarray:
        ls, phi, *_ = self._normalized(points)
        with np.errstate(over="ignore"):
            return np.exp(ls) * phi

    def log_value(self, points) -> np.ndarray:
        """``ln w`` where ``w > 0`` (robust for huge exponents)."""
        ls, phi, *_ = self._normalized(points)
        with np.errstate(divide="ignore", invalid="ignore"):
            return ls + np.log(phi)

    def gradient(self, points) -> np.ndarray:
        ls, _, dphi, _, _, e = self._normalized(points)
        return (np.exp(ls) * dphi)[:, None] * e

    def hessian(self, points) -> np.ndarray:
        ls, _, _, dor, ddphi, e = self._normalized(points)
        return np.exp(ls)[:, None, None] * _hessian(self.n, dor, ddphi, e, self.radial)

    def to_dict(self) -> dict:
        return {"name": self.name, "role": self.role, "n": self.n, "worst_case": self.worst_case,
                "params": _jsonable(self.params)}


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    return obj


def _hessian(n, dor, ddphi, e, radial):
    eye = np.eye(n)[None]
    ee = e[:, :, None] * e[:, None, :]
    if radial:
        return ddphi[:, None, None] * ee + dor[:, None, None] * (eye - ee)
    return ddphi[:, None, None] * ee


def radial_hessian_eigs(dphi: float, ddphi: float, r: float, n: int = 2) -> list[tuple[float, int]]:
    """Eigenvalues of the Hessian of ``phi(|x|)`` at ``|x| = r`` with multiplicities."""
    if not r > 0:
        raise ParameterError(f"radius must be positive, got {r}")
    return [(float(ddphi), 1), (float(dphi) / r, n - 1)]


def _center(center, n):
    return np.zeros(n) if center is None else np.asarray(center, float).reshape(n)


# ------------------------------------------------------------ upper barriers


def keller_osserman_power(n: int, p: float, lam: float, Lam: float, K: float, center=None,
                          r: float = 1.0, scale: float = 1.0, literal: bool = False) -> BarrierSpec:
    """``w = N0 r^-g (1 - |x-x0|^2/r^2)^-g`` on ``B_r(x0)``, an upper barrier for ``t_+^p``.

    ``N0 = (2g(n+2g)Lam + 2g K_b)^{g/2}``; ``scale`` multiplies N0 (used to
    build deliberately broken barriers).
    """
    gamma, beta = power_exponents(p)
    _check_ellipticity(lam, Lam, K)
    if not r > 0:
        raise ParameterError(f"radius must be positive, got {r}")
    if K > 0 and r > 1:
        raise ParameterError("with K > 0 the barrier radius must not exceed 1")
    Kb = drift_bound(K, literal)
    base = 2 * gamma * (n + 2 * gamma) * Lam + 2 * gamma * Kb
    logN0 = 0.5 * gamma * np.log(base) + np.log(scale)

    def terms(rho):
        s = 1.0 - (rho / r) ** 2
        ls = logN0 - gamma * np.log(r) - gamma * np.log(s)
        dor = 2 * gamma / (r * r * s)
        return ls, np.ones_like(rho), dor * rho, dor, dor + 4 * gamma * (gamma + 1) * rho**2 / (r**4 * s * s)

    with np.errstate(over="ignore"):
        N0, N2 = np.exp(logN0), np.exp(p * logN0)
    params = {"n": n, "p": p, "lam": lam, "Lam": Lam, "K": K, "center": _center(center, n),
              "r": r, "gamma": gamma, "beta": beta, "N0": N0, "N2": N2, "logN0": logN0,
              "K_drift": Kb, "scale": scale, "center_bound": N0 * r ** (-gamma)}
    return BarrierSpec("keller_osserman_power", UPPER, n,
                       RadialProfile(_center(center, n), terms, 0.0, r), params)


def keller_osserman_exp(n: int, lam: float, Lam: float, K: float, center=None, r: float = 1.0,
                        scale: float = 1.0, literal: bool = False) -> BarrierSpec:
    """``w = ln N2 - 2 ln(1 - |x-x0|^2/r^2) - 2 ln r`` with ``N2 = 4n(Lam + K_b)``."""
    _check_ellipticity(lam, Lam, K)
    if not r > 0:
        raise ParameterError(f"radius must be positive, got {r}")
    if K > 0 and r > 1:
        raise ParameterError("with K > 0 the barrier radius must not exceed 1")
    Kb = drift_bound(K, literal)
    N2 = 4 * n * (Lam + Kb) * scale

    def terms(rho):
        s = 1.0 - (rho / r) ** 2
        phi = np.log(N2) - 2 * np.log(s) - 2 * np.log(r)
        dor = 4.0 / (r * r * s)
        return np.zeros_like(rho), phi, dor * rho, dor, dor + 8 * rho**2 / (r**4 * s * s)

    params = {"n": n, "lam": lam, "Lam": Lam, "K": K, "center": _center(center, n), "r": r,
              "N2": N2, "beta": 2.0, "K_drift": Kb, "scale": scale,
              "center_bound": float(np.log(N2 / r**2))}
    return BarrierSpec("keller_osserman_exp", UPPER, n,
                       RadialProfile(_center(center, n), terms, 0.0, r), params)


# ------------------------------------------------------------ lower barriers


def _growth_rate(lam, K, Kb, target):
    """Smallest root of ``lam*eta^2 - Kb*eta - K = target``."""
    return (Kb + np.sqrt(Kb * Kb + 4 * lam * (K + target))) / (2 * lam)


def power_lower_subsolution(n: int, p: float, lam: float, K: float, D: float,
                            eta: float | None = None, eps: float | None = None,
                            literal: bool = False) -> BarrierSpec:
    """``v = eps * exp(eta x_1)`` on the slab ``0 < x_1 < D``.

    Worst-case ``Lv >= (lam eta^2 - K_b eta - K) v``; ``eps`` is the largest
    amplitude with ``(lam eta^2 - K_b eta - K) >= v^{p-1}`` on the slab.
    Gives ``f(u) >= eps^p =: 1/N1``.
    """
    power_exponents(p)
    if not (lam > 0 and K >= 0 and D > 0):
        raise ParameterError("need lam > 0, K >= 0 and D > 0")
    Kb = drift_bound(K, literal)
    if eta is None:
        eta = _growth_rate(lam, K, Kb, 1.0)
    q = lam * eta**2 - Kb * eta - K
    if not q > 0:
        raise SearchError(f"no admissible amplitude: lam*eta^2 - K*eta - K = {q} <= 0 for eta={eta}",
                          binding={"constraint": "lam*eta^2 - K*eta - K > 0", "eta": eta, "value": q})
    eps_max = q ** (1.0 / (p - 1.0)) * np.exp(-eta * D)
    if eps is None:
        eps = eps_max
    elif eps > eps_max:
        raise SearchError(f"amplitude eps={eps} exceeds the admissible {eps_max}",
                          binding={"constraint": "eps^{p-1} e^{(p-1) eta D} <= q", "x1": D})

    def terms(x1):
        return np.log(eps) + eta * x1, np.ones_like(x1), np.full_like(x1, eta), np.full_like(x1, eta * eta)

    params = {"n": n, "p": p, "lam": lam, "K": K, "D": D, "eta": eta, "eps": eps,
              "eps_max": eps_max, "N1": eps ** (-p), "K_drift": Kb}
    return BarrierSpec("power_lower_subsolution", LOWER, n, PlanarProfile(terms, 0.0, D), params)


def exp_lower_subsolution(n: int, lam: float, K: float, D: float, step: float = 2.0 ** -10,
                          literal: bool = False):
    """``v = exp(eta1 x_1) - eta2`` with ``lam eta1^2 - K eta1 - K >= 1`` and ``eta2 = exp(eta1 D)``.

    ``eta1`` is the smallest multiple of ``step`` satisfying the inequality.
    Returns ``(eta1, eta2, BarrierSpec)``.
    """
    if not (lam > 0 and K >= 0 and D > 0):
        raise ParameterError("need lam > 0, K >= 0 and D > 0")
    Kb = drift_bound(K, literal)
    k = int(np.floor(_growth_rate(lam, K, Kb, 1.0) / step))
    while lam * (k * step) ** 2 - Kb * k * step - K < 1.0:
        k += 1
    while k > 1 and lam * ((k - 1) * step) ** 2 - Kb * (k - 1) * step - K >= 1.0:
        k -= 1
    eta1 = k * step
    eta2 = float(np.exp(eta1 * D))

    def terms(x1):
        ex = np.exp(eta1 * x1)
        return np.zeros_like(x1), ex - eta2, eta1 * ex, eta1 * eta1 * ex

    params = {"n": n, "lam": lam, "K": K, "D": D, "eta1": eta1, "eta2": eta2, "K_drift": Kb}
    return eta1, eta2, BarrierSpec("exp_lower_subsolution", LOWER, n, PlanarProfile(terms, 0.0, D), params)


def exterior_ball_inequality(m, t, n, p, lam, Lam, K, Kb):
    """The profile inequality for ``(1-t)^m`` divided by ``(1-t)^{m-2} > 0``."""
    s = 1.0 - t
    return (lam * m * (m - 1) - ((n - 1) * Lam / t + Kb) * m * s - K * s * s
            - s ** (m * (p - 1) + 2))


@dataclass
class ExteriorBallResult:
    m: int
    N: float
    logN: float
    barrier: BarrierSpec
    min_margin: float
    argmin_t: float
    n_samples: int


def exterior_ball_lower(n: int, p: float, lam: float, Lam: float, K: float, delta: float,
                        r: float = 1.0, center=None, m_max: int = 10**6,
                        n_samples: int = 10**5, literal: bool = False) -> ExteriorBallResult:
    """Minimal integer ``m >= 2`` making ``v0 = (1-t)^m`` a subsolution profile on ``(delta, 1)``.

    The inequality is ``lam v0'' + ((n-1)Lam/t) v0' + K_b v0' - K v0 >= v0^p``
    checked on ``n_samples`` points.  Feasibility is monotone in ``m`` (once it
    holds, ``lam (m-1)`` exceeds the negative first-order coefficient), so the
    minimum is found by doubling and bisection.  The barrier is
    ``r^-g v0(|x - y0|/r)`` on ``delta r < |x - y0| < r`` and ``N = 2^{-g p} v0(1-delta)^p``.
    """
    gamma, _ = power_exponents(p)
    _check_ellipticity(lam, Lam, K)
    if not 0 < delta < 1:
        raise ParameterError(f"delta must lie in (0, 1), got {delta}")
    if not 0 < r <= 1:
        raise ParameterError(f"radius must lie in (0, 1], got {r}")
    Kb = drift_bound(K, literal)
    # the inequality binds at the inner end, so half the samples cluster there
    half = n_samples // 2
    t = np.sort(np.concatenate([
        np.linspace(delta, 1.0, n_samples - half, endpoint=False),
        delta + (1.0 - delta) * np.geomspace(1e-12, 1.0, half, endpoint=False)]))

    def feasible(m):
        return exterior_ball_inequality(m, t, n, p, lam, Lam, K, Kb).min() >= 0

    lo, hi = 1, 2
    while not feasible(hi):
        if hi >= m_max:
            vals = exterior_ball_inequality(m_max, t, n, p, lam, Lam, K, Kb)
            k = int(np.argmin(vals))
            raise SearchError(f"no m <= {m_max} satisfies the profile inequality on ({delta}, 1); "
                              f"worst sample t={t[k]:.6g} with margin {vals[k]:.6g}",
                              binding={"t": float(t[k]), "margin": float(vals[k]), "m": m_max})
        lo, hi = hi, min(2 * hi, m_max)
    while hi - lo > 1:
        mid = (lo + hi) // 2
        lo, hi = (lo, mid) if feasible(mid) else (mid, hi)
    m = hi
    vals = exterior_ball_inequality(m, t, n, p, lam, Lam, K, Kb)
    k = int(np.argmin(vals))
    logN = -gamma * p * np.log(2.0) + m * p * np.log(delta)
    c0 = _center(center, n)

    def terms(rho):
        tt = rho / r
        s = 1.0 - tt
        with np.errstate(divide="ignore"):  # log 0 = -inf on the rim, where the barrier vanishes
            ls = -gamma * np.log(r) + (m - 2) * np.log(s)
        return ls, s * s, -m * s / r, -m * s / (r * rho), m * (m - 1) / r**2 * np.ones_like(rho)

    params = {"n": n, "p": p, "lam": lam, "Lam": Lam, "K": K, "delta": delta, "r": r,
              "center": c0, "m": m, "N": float(np.exp(logN)), "logN": logN, "gamma": gamma,
              "K_drift": Kb}
    spec = BarrierSpec("exterior_ball_lower", LOWER, n, RadialProfile(c0, terms, delta * r, r), params)
    return ExteriorBallResult(m, float(np.exp(logN)), logN, spec, float(vals[k]), float(t[k]), len(t))


def singular_interval(n: int, mu: float) -> tuple[float, float]:
    """Admissible ``p``-interval ``(1, 1 + 2/(mu(n-1) - 1))`` (upper end infinite if ``mu(n-1) <= 1``)."""
    denom = mu * (n - 1) - 1.0
    return (1.0, np.inf) if denom <= 0 else (1.0, 1.0 + 2.0 / denom)


def singular_gamma0(n, p, lam, Lam):
    gamma, _ = power_exponents(p)
    return gamma * ((gamma + 1) * lam + (1 - n) * Lam)


def singular_lower(n: int, p: float, lam: float, Lam: float, K: float, y0=None, r: float | None = None,
                   scale: float = 1.0, literal: bool = False) -> BarrierSpec:
    """``v = c0 |x-y0|^-g - c0 (2r)^-g`` on the punctured ball ``0 < |x-y0| < 2r``.

    ``g0 = g((g+1)lam + (1-n)Lam) > 0`` is required; ``c0 = (g0/2)^{g/2}``.
    The radius must satisfy ``2r <= r0`` where ``2(K r0^2 + K_b g r0) = g0``;
    by default ``r = min(r0, 1)/2``.  Lower bound constant ``c1 = (1.5^-g - 2^-g) c0``.
    """
    gamma, beta = power_exponents(p)
    _check_ellipticity(lam, Lam, K)
    g0 = singular_gamma0(n, p, lam, Lam)
    if not g0 > 0:
        interval = singular_interval(n, Lam / lam)
        raise OutOfRangeError(
            f"singular barrier needs gamma0 > 0, i.e. p in ({interval[0]}, {interval[1]}) "
            f"for n={n}, mu={Lam / lam}; got p={p}", interval=interval)
    Kb = drift_bound(K, literal)
    if K > 0:
        r0 = (-2 * Kb * gamma + np.sqrt(4 * Kb**2 * gamma**2 + 8 * K * g0)) / (4 * K)
    else:
        r0 = np.inf
    r0 = min(r0, 1.0)
    if r is None:
        r = 0.5 * r0
    if not 0 < 2 * r <= r0 * (1 + 1e-12):
        raise ParameterError(f"radius r={r} violates 2r <= r0={r0}")
    logc0 = 0.5 * gamma * np.log(0.5 * g0) + np.log(scale)
    c0 = float(np.exp(logc0))

    def terms(rho):
        ls = logc0 - gamma * np.log(rho)
        return (ls, 1.0 - (rho / (2 * r)) ** gamma, -gamma / rho, -gamma / rho**2,
                gamma * (gamma + 1) / rho**2)

    c1 = (1.5 ** (-gamma) - 2.0 ** (-gamma)) * c0
    params = {"n": n, "p": p, "lam": lam, "Lam": Lam, "K": K, "center": _center(y0, n), "r": r,
              "r0": r0, "gamma": gamma, "beta": beta, "gamma0": g0, "c0": c0, "c1": c1,
              "N1": c1 ** p, "K_drift": Kb, "scale": scale}
    return BarrierSpec("singular_lower", LOWER, n, RadialProfile(_center(y0, n), terms, 0.0, 2 * r), params)


def stencil_constant(n: int, p: float, n_dirs: int = 20_000, seed: int = 0) -> float:
    """``N(n,p) = max_e g sum_ij |(g+2) e_i e_j - delta_ij|`` over unit vectors ``e``.

    Bounds ``sum_ij |D_ij |x|^-g|`` by ``N(n,p) |x|^{-g-2}``; the maximum is
    taken over axis-aligned, diagonal and random directions.
    """
    gamma, _ = power_exponents(p)
    rng = np.random.default_rng(seed)
    e = rng.normal(size=(n_dirs, n))
    special = [np.eye(n)[0], np.ones(n) / np.sqrt(n)]
    if n >= 2:
        special.append(np.r_[1.0, 1.0, np.zeros(n - 2)] / np.sqrt(2))
    e = np.vstack([e, special])
    e /= np.linalg.norm(e, axis=1, keepdims=True)
    M = (gamma + 2) * e[:, :, None] * e[:, None, :] - np.eye(n)[None]
    return float(gamma * np.abs(M).sum(axis=(1, 2)).max())


def frozen_coeff_lower(n: int, p: float, K: float, omega: Callable[[float], float], y0=None,
                       radii=RADII_SEARCH, literal: bool = False):
    """Frozen-coefficient barrier ``v = c_p |x-y0|^-g - c_p r1^-g`` on ``B_{r1}(y0)``.

    ``c_p = (g(g+2-n)/2)^{g/2}``; ``r1`` is the largest radius in ``radii`` with
    ``g(g+2-n) - K_b g r1 - K r1^2 - N(n,p) omega(r1) >= g(g+2-n)/2``.
    Returns ``(r1, BarrierSpec)``; the spec records ``N0 = c_p(1 - 2^-g)`` and ``r0 = r1/2``.
    """
    gamma, beta = power_exponents(p)
    kappa = gamma * (gamma + 2 - n)
    if not kappa > 0:
        raise OutOfRangeError(f"frozen-coefficient barrier needs gamma + 2 - n > 0 "
                              f"(p < n/(n-2) for n >= 3); got n={n}, p={p}",
                              interval=(1.0, n / (n - 2.0) if n > 2 else np.inf))
    Kb = drift_bound(K, literal)
    Nnp = stencil_constant(n, p)
    slack = []
    for r1 in radii:
        terms_ = {"K_drift": Kb * gamma * r1, "K_zero": K * r1 * r1, "modulus": Nnp * omega(r1)}
        value = kappa - sum(terms_.values()) - 0.5 * kappa
        slack.append((r1, value, terms_))
        if value >= 0:
            break
    else:
        r1, value, terms_ = slack[-1]
        binding = max(terms_, key=terms_.get)
        raise SearchError(f"no radius in the search range satisfies the frozen-coefficient "
                          f"inequality; binding term {binding!r} at r1={r1}",
                          binding={"term": binding, "r1": r1, "value": value})
    cp = (0.5 * kappa) ** (0.5 * gamma)
    logcp = np.log(cp)

    def terms(rho):
        return (logcp - gamma * np.log(rho), 1.0 - (rho / r1) ** gamma, -gamma / rho,
                -gamma / rho**2, gamma * (gamma + 1) / rho**2)

    params = {"n": n, "p": p, "K": K, "center": _center(y0, n), "r1": r1, "r0": r1 / 2,
              "gamma": gamma, "beta": beta, "c_p": cp, "N0": cp * (1 - 2.0 ** (-gamma)),
              "N_np": Nnp, "omega_r1": float(omega(r1)), "slack": float(value), "K_drift": Kb}
    spec = BarrierSpec("frozen_coeff_lower", LOWER, n, RadialProfile(_center(y0, n), terms, 0.0, r1),
                       params)
    return r1, spec


def convex_log_lower(n: int, lam: float, K: float, D: float, radii=RADII_SEARCH,
                     n_samples: int = 10**5, literal: bool = False):
    """Subsolution ``w = N v + ln lam - 2 ln x_1`` for ``e^u`` on the slab ``0 < x_1 < D``.

    With ``Lv0 >= 2 lam x^-2 - 2 K_b x^-1 - 2 K |ln x|`` for ``v0 = -2 ln x``,
    ``delta`` is the largest radius in ``radii`` with ``Lv0 >= lam x^-2`` on
    ``(0, delta)`` and ``N >= K |ln lam|`` the smallest value with
    ``N - K|ln lam| + Lv0 >= lam x^-2`` on ``[delta, D)``.  ``v`` comes from
    :func:`exp_lower_subsolution`.  Returns ``(delta, N, BarrierSpec)``; the
    spec records ``N1 = lam exp(-N eta2)``.
    """
    if not (lam > 0 and K >= 0 and D > 0):
        raise ParameterError("need lam > 0, K >= 0 and D > 0")
    Kb = drift_bound(K, literal)

    def lower_Lv0(x):
        return 2 * lam / x**2 - 2 * Kb / x - 2 * K * np.abs(np.log(x))

    delta = None
    for rad in radii:
        if rad >= D:
            continue
        x = rad * np.geomspace(1e-8, 1.0, 2000)
        if np.all(lower_Lv0(x) >= lam / x**2):
            delta = float(rad)
            break
    if delta is None:
        raise SearchError("no delta in the search range makes -2 ln x_1 a subsolution near x_1 = 0",
                          binding={"x1": float(radii[-1])})
    x = np.linspace(delta, D, n_samples)
    need = lam / x**2 - lower_Lv0(x) + K * abs(np.log(lam))
    N = float(max(K * abs(np.log(lam)), need.max(), 0.0))
    eta1, eta2, vspec = exp_lower_subsolution(n, lam, K, D, literal=literal)

    def terms(x1):
        ex = np.exp(eta1 * x1)
        phi = N * (ex - eta2) + np.log(lam) - 2 * np.log(x1)
        return np.zeros_like(x1), phi, N * eta1 * ex - 2 / x1, N * eta1**2 * ex + 2 / x1**2

    params = {"n": n, "lam": lam, "K": K, "D": D, "delta": delta, "N": N, "eta1": eta1,
              "eta2": eta2, "N1": float(lam * np.exp(-N * eta2)), "K_drift": Kb}
    return delta, N, BarrierSpec("convex_log_lower", LOWER, n, PlanarProfile(terms, 0.0, D), params)


def rescale_exponential(a: float, domain=None, operator: OperatorSpec | None = None,
                        points=None, values=None, inverse: bool = False) -> dict:
    """Map the ``e^{au}`` problem on ``Omega`` to the ``e^v`` problem on ``sqrt(a) Omega``.

    ``v(x) = a u(x / sqrt(a))``; drift is divided by ``sqrt(a)``, ``c`` and ``K``
    by ``a``.  ``inverse=True`` maps solutions back (points divided by
    ``sqrt(a)``, values divided by ``a``).  Only the supplied items are returned.
    """
    if not a > 0:
        raise ParameterError(f"a must be positive, got {a}")
    s = np.sqrt(a)
    out = {}
    if domain is not None:
        out["domain"] = domain.scaled(1 / s if inverse else s)
    if operator is not None:
        if inverse:
            fld = operator.field.base if isinstance(operator.field, ScaledField) else ScaledField(operator.field, 1 / a)
            out["operator"] = OperatorSpec(fld, operator.lam, operator.Lam, operator.K * a)
        else:
            out["operator"] = OperatorSpec(ScaledField(operator.field, a), operator.lam,
                                           operator.Lam, operator.K / a)
    if points is not None:
        out["points"] = np.asarray(points, float) * (1 / s if inverse else s)
    if values is not None:
        out["values"] = np.asarray(values, float) * (1 / a if inverse else a)
    return out


def _check_ellipticity(lam, Lam, K):
    if not 0 < lam <= Lam:
        raise ParameterError(f"need 0 < lam <= Lam, got {lam}, {Lam}")
    if not K >= 0:
        raise ParameterError(f"need K >= 0, got {K}")


# ------------------------------------------------------------ certification


@dataclass
class MarginReport:
    barrier: str
    params: dict
    n_samples: int
    min_margin: float
    argmin_point: list
    status: str  # "pass" | "fail" | "inconclusive"
    mode: str = "worst-case"
    skipped: int = 0
    raw_min_margin: float = 0.0

    @property
    def passed(self) -> bool:
        return self.status == "pass"

    def to_dict(self) -> dict:
        return {"barrier": self.barrier, "params": _jsonable(self.params),
                "n_samples": self.n_samples, "min_margin": float(self.min_margin),
                "argmin_point": [float(v) for v in self.argmin_point], "status": self.status}


def sample_validity(spec: BarrierSpec, n_samples: int, rng: np.random.Generator,
                    h_eval: float | None = None) -> np.ndarray:
    """Uniform samples of the validity region kept ``h_eval`` away from its boundary."""
    n = spec.n
    prof = spec.profile
    if spec.radial:
        a, b = prof.inner, prof.outer
        he = 1e-3 * b if h_eval is None else h_eval
        a, b = a + he, b - he
        rho = (a**n + rng.uniform(size=n_samples) * (b**n - a**n)) ** (1.0 / n)
        e = rng.normal(size=(n_samples, n))
        e /= np.linalg.norm(e, axis=1, keepdims=True)
        return prof.center + rho[:, None] * e
    he = 1e-3 * (prof.hi - prof.lo) if h_eval is None else h_eval
    x = rng.uniform(-1.0, 1.0, size=(n_samples, n))
    x[:, 0] = rng.uniform(prof.lo + he, prof.hi - he, n_samples)
    return x


def _normalized_f(nl: NonlinearitySpec, ls, phi):
    with np.errstate(over="ignore", invalid="ignore"):
        if nl.is_power:
            return np.exp((nl.p - 1) * ls) * np.maximum(phi, 0.0) ** nl.p
        return np.exp(nl.a * np.exp(ls) * phi - ls)


def barrier_margins(spec: BarrierSpec, nl: NonlinearitySpec, points, mode: str = "worst-case",
                    lam=None, Lam=None, K=None, field: CoefficientField | None = None,
                    omega: float | None = None, return_scale: bool = False):
    """Margins ``f(w) - Lw`` (upper) or ``Lv - f(v)`` (lower) in normalized units.

    Modes: ``worst-case`` (extremal coefficients with the given bounds, via the
    Hessian eigenvalues), ``specific`` (a 2-D coefficient field), ``frozen``
    (``A = I + E`` with entries ``|E_ij| <= omega``, ``|b|^2 <= K``, ``0 <= c <= K``).
    With ``return_scale`` also returns ``|f| + |Lw|`` per sample.
    """
    pts = np.atleast_2d(np.asarray(points, float))
    ls, phi, dphi, dor, ddphi, e = spec._normalized(pts)
    upper = spec.role == UPPER
    grad_norm = np.abs(dphi)
    if mode == "worst-case":
        if spec.radial:
            eig = np.column_stack([ddphi] + [dor] * (spec.n - 1))
        else:
            eig = np.column_stack([ddphi] + [np.zeros_like(ddphi)] * (spec.n - 1))
        pick = np.maximum if upper else np.minimum
        trace = pick(lam * eig, Lam * eig).sum(axis=1)
        sqK = np.sqrt(K)
        if upper:
            Lw = trace + sqK * grad_norm + np.maximum(0.0, -K * phi)
        else:
            Lw = trace - sqK * grad_norm + np.minimum(0.0, -K * phi)
    elif mode == "frozen":
        H = _hessian(spec.n, dor, ddphi, e, spec.radial)
        trace = np.trace(H, axis1=1, axis2=2)
        pert = omega * np.abs(H).sum(axis=(1, 2))
        sqK = np.sqrt(K)
        if upper:
            Lw = trace + pert + sqK * grad_norm + np.maximum(0.0, -K * phi)
        else:
            Lw = trace - pert - sqK * grad_norm + np.minimum(0.0, -K * phi)
    elif mode == "specific":
        if spec.n != 2:
            raise ParameterError("specific-operator certification is available in 2-D only")
        A, b, c = field.evaluate(pts)
        H = _hessian(spec.n, dor, ddphi, e, spec.radial)
        g = dphi[:, None] * e
        Lw = np.einsum("kij,kij->k", A, H) + np.einsum("ki,ki->k", b, g) - c * phi
    else:
        raise ParameterError(f"unknown certification mode {mode!r}")
    fw = _normalized_f(nl, ls, phi)
    margin = fw - Lw if upper else Lw - fw
    if return_scale:
        return margin, np.abs(fw) + np.abs(Lw)
    return margin


def verify_barrier(spec: BarrierSpec, nl: NonlinearitySpec, mode: str = "worst-case",
                   lam=None, Lam=None, K=None, field: CoefficientField | None = None,
                   omega: float | None = None, n_samples: int = 10_000, seed: int = 0,
                   h_eval: float | None = None, points=None, rtol: float = 1e-12) -> MarginReport:
    """Sampled certificate of the barrier inequality; passes iff every margin is ``>= 0``.

    Worst-case bounds default to the barrier's own parameters.  Some barriers
    satisfy their inequality with equality (the exponential Keller-Osserman
    barrier for ``n = 2, K = 0`` is an exact solution), so margins smaller in
    magnitude than ``rtol * (|f| + |Lw|)`` are rounding noise and count as 0;
    ``raw_min_margin`` keeps the unrounded value.  Samples where the
    evaluation is not finite are skipped; more than 1% skipped makes the
    result inconclusive.
    """
    prm = spec.params
    lam = prm.get("lam") if lam is None else lam
    Lam = prm.get("Lam", lam) if Lam is None else Lam
    K = prm.get("K", 0.0) if K is None else K
    if mode == "worst-case" and lam is None:
        lam = Lam
    if mode == "frozen" and omega is None:
        omega = prm.get("omega_r1", 0.0)
    rng = np.random.default_rng(seed)
    pts = sample_validity(spec, n_samples, rng, h_eval) if points is None else np.atleast_2d(points)
    with np.errstate(all="ignore"):
        margins, scale = barrier_margins(spec, nl, pts, mode, lam, Lam, K, field, omega,
                                         return_scale=True)
        finite = np.isfinite(margins) | (margins == np.inf)
        skipped = int((~finite).sum())
        raw = np.where(finite, margins, np.inf)
        vals = np.where(np.abs(raw) <= rtol * scale, 0.0, raw)
    k = int(np.argmin(vals))
    min_margin = float(vals[k])
    if skipped > 0.01 * len(pts):
        status = "inconclusive"
    else:
        status = "pass" if min_margin >= 0 else "fail"
    return MarginReport(spec.name, dict(prm), len(pts), min_margin, list(pts[k]), status, mode,
                        skipped, float(raw.min()))
