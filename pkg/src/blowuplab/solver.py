"""Discrete semilinear Dirichlet problems and boundary blow-up solutions.

Finite data: damped Newton on ``F(u) = L_h u - f(u)``.

Blow-up data: the boundary value ``M`` is raised along a ladder.  The solves
use the substitution ``u = v^-g`` (power) or ``u = -(2/a) ln v`` (exponential),
under which the equation becomes

    G(v) = alpha <A grad v, grad v> - beta v (A : D^2 v + b . grad v) + C(v) - kappa = 0

with ``(alpha, beta, kappa) = (g(g+1), g, 1)`` and ``C = -c v^2`` for ``t_+^p``,
``(1, 1, a/2)`` and ``C = c v^2 ln v`` for ``e^{au}``.  Boundary data ``M``
become ``v_B = psi(M)`` and ``M = inf`` becomes ``v_B = 0``, so the limit rung
is an ordinary Dirichlet problem.  The gradient uses centred Shortley-Weller
differences where they keep the scheme monotone and a Godunov upwind choice
elsewhere; rows that flip between the two twice within one solve stay upwind.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConfigError, DivergenceError, InvariantViolation, NonConvergenceError
from .geometry import Grid, Shape, build_grid
from .nonlinearity import NonlinearitySpec
from .operators import DiscreteOperator, OperatorSpec, discretize

EPS = np.finfo(float).eps


@dataclass(eq=False)
class GridFunction:
    """Values on interior rows plus Dirichlet data on the grid's boundary slots."""

    grid: Grid
    values: np.ndarray
    boundary: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        self.boundary = np.asarray(self.boundary, dtype=float)
        if self.values.shape != (self.grid.n_interior,):
            raise ValueError("interior values do not match the grid")
        if self.boundary.shape != (self.grid.n_slots,):
            raise ValueError("boundary values do not match the grid slots")

    @property
    def points(self) -> np.ndarray:
        return self.grid.points

    @property
    def d(self) -> np.ndarray:
        return self.grid.d


@dataclass
class StepReport:
    label: float
    iterations: int
    residuals: list
    converged: bool
    tolerance: float

    def tail_ratios(self) -> list:
        r = self.residuals
        return [r[k] / r[k - 1] for k in range(max(1, len(r) - 2), len(r)) if r[k - 1] > 0]

    def to_dict(self) -> dict:
        return {"label": _num(self.label), "iterations": self.iterations,
                "residuals": [_num(r) for r in self.residuals], "converged": self.converged,
                "tolerance": _num(self.tolerance)}


def _num(x):
    x = float(x)
    return x if np.isfinite(x) else ("inf" if x > 0 else ("-inf" if x < 0 else "nan"))


@dataclass
class SolveReport:
    method: str
    labels: list = field(default_factory=list)
    steps: list = field(default_factory=list)
    compact_deltas: list = field(default_factory=list)
    converged: bool = False
    finalized: bool = False
    monotone_violations: int = 0
    max_violation: float = 0.0
    min_increment: float = np.inf
    rho: float | None = None
    sub_reports: list = field(default_factory=list)

    @property
    def newton_iterations(self) -> int:
        return sum(s.iterations for s in self.steps)

    def to_dict(self) -> dict:
        return {"method": self.method, "labels": [_num(v) for v in self.labels],
                "steps": [s.to_dict() for s in self.steps],
                "compact_deltas": [_num(v) for v in self.compact_deltas],
                "converged": self.converged, "finalized": self.finalized,
                "monotone_violations": self.monotone_violations,
                "max_violation": _num(self.max_violation),
                "min_increment": _num(self.min_increment), "rho": self.rho,
                "newton_iterations": self.newton_iterations,
                "sub_reports": [r.to_dict() for r in self.sub_reports]}


def boundary_values(grid: Grid, g) -> np.ndarray:
    """Dirichlet data on the slots from a scalar, slot array or callable of points."""
    if g is None:
        return np.full(grid.n_slots, np.inf)
    if callable(g):
        return np.asarray(g(grid.slot_points), dtype=float).reshape(grid.n_slots)
    g = np.asarray(g, dtype=float)
    return np.broadcast_to(g, (grid.n_slots,)).copy()


# ------------------------------------------------------------------ finite data


def residual(grid: Grid, dop: DiscreteOperator, nl: NonlinearitySpec, u: GridFunction) -> np.ndarray:
    """``L_h u - f(u)`` on interior rows."""
    return dop.A2 @ u.values + dop.B2 @ u.boundary - dop.c * u.values - nl.f(u.values)


def solve_dirichlet(grid: Grid, dop: DiscreteOperator, nl: NonlinearitySpec, g,
                    u_init: GridFunction | np.ndarray | None = None, tol: float = 1e-9,
                    max_iter: int = 50, source: np.ndarray | None = None):
    """Damped Newton for ``L_h u = f(u) + source`` with Dirichlet data ``g``.

    The step is halved until the max-norm residual decreases.  Returns
    ``(GridFunction, StepReport)``.
    """
    gb = boundary_values(grid, g)
    if not np.all(np.isfinite(gb)):
        raise ConfigError("solve_dirichlet needs finite boundary data")
    if u_init is None:
        u = np.zeros(grid.n_interior)
    else:
        u = np.array(getattr(u_init, "values", u_init), dtype=float)
    src = np.zeros(grid.n_interior) if source is None else np.asarray(source, float)
    A = dop.A.tocsc()
    rhs_b = dop.B2 @ gb

    def F(w):
        return A @ w + rhs_b - nl.f(w) - src

    Fu = F(u)
    norm = float(np.abs(Fu).max()) if len(Fu) else 0.0
    history = [norm]
    it = 0
    while norm > tol:
        if it >= max_iter:
            raise NonConvergenceError(f"Newton did not reach tol={tol} in {max_iter} iterations "
                                      f"(residual {norm:.3e})", iterate=u, history=history)
        J = (A - sp.diags(nl.fprime(u))).tocsc()
        du = spla.splu(J).solve(-Fu)
        t = 1.0
        while True:
            trial = u + t * du
            try:
                Ft = F(trial)
                nt = float(np.abs(Ft).max())
            except DivergenceError:
                nt = np.inf
            if nt < norm:
                break
            t *= 0.5
            if t < 2.0 ** -30:
                raise NonConvergenceError(f"damping failed to reduce the residual {norm:.3e}",
                                          iterate=u, history=history)
        u, Fu, norm = trial, Ft, nt
        history.append(norm)
        it += 1
    return GridFunction(grid, u, gb), StepReport(np.nan, it, history, True, tol)


# ------------------------------------------------------------ transformed scheme


@dataclass(frozen=True)
class Transform:
    """The substitution ``u = phi(v)`` turning blow-up data into ``v_B = 0``."""

    nl: NonlinearitySpec

    @property
    def alpha(self):
        return self.nl.gamma * (self.nl.gamma + 1) if self.nl.is_power else 1.0

    @property
    def beta(self):
        return self.nl.gamma if self.nl.is_power else 1.0

    @property
    def kappa(self):
        return 1.0 if self.nl.is_power else 0.5 * self.nl.a

    def psi(self, u):
        """``v`` from ``u`` (``+inf -> 0``)."""
        u = np.asarray(u, dtype=float)
        with np.errstate(divide="ignore"):
            if self.nl.is_power:
                if np.any(u <= 0):
                    raise ConfigError("power blow-up data must be positive")
                return u ** (-1.0 / self.nl.gamma)
            return np.exp(-0.5 * self.nl.a * u)

    def phi(self, v):
        """``u`` from ``v`` (``0 -> +inf``)."""
        v = np.asarray(v, dtype=float)
        with np.errstate(divide="ignore"):
            if self.nl.is_power:
                return v ** (-self.nl.gamma)
            return -2.0 / self.nl.a * np.log(v)

    def residual_to_u(self, G, v):
        """Convert a residual of ``G`` into ``L_h u - f(u)`` units."""
        if self.nl.is_power:
            return G * v ** (-self.nl.gamma - 2.0)
        return 2.0 * G / (self.nl.a * v * v)


class TransformedScheme:
    """Residual and Jacobian of the discrete ``G(v)`` on a discretized operator."""

    def __init__(self, dop: DiscreteOperator, nl: NonlinearitySpec):
        self.dop = dop
        self.tr = Transform(nl)
        self.nl = nl
        self.h = dop.grid.h
        self.n = dop.grid.n_interior
        self.rows = np.arange(self.n)
        self.absA2 = abs(dop.A2)
        self.absB2 = abs(dop.B2)
        self.reset_switches()

    def reset_switches(self):
        """Forget the centred/upwind history (called at the start of each solve)."""
        self.locked = [np.zeros(self.n, bool), np.zeros(self.n, bool)]
        self._flips = [np.zeros(self.n, int), np.zeros(self.n, int)]
        self._prev_ok = None
        self._last_ok = None

    def _track_switches(self) -> bool:
        """Lock rows whose gradient choice flipped twice to upwind; True if new locks."""
        ok, prev = self._last_ok, self._prev_ok
        self._prev_ok = ok
        if prev is None:
            return False
        changed = False
        for a in range(2):
            self._flips[a] += ok[a] != prev[a]
            new = (self._flips[a] >= 2) & ~self.locked[a]
            if new.any():
                self.locked[a] |= new
                changed = True
        return changed

    def _neighbor(self, v, vB, ref):
        return np.where(ref >= 0, v[np.maximum(ref, 0)], vB[np.maximum(-ref - 1, 0)])

    def _gradients(self, v, vB):
        """Per axis: switched derivative and its weights on (self, minus, plus)."""
        h = self.h
        alpha, beta = self.tr.alpha, self.tr.beta
        out, oks = [], []
        for axis, (ap, am) in enumerate(((0, 1), (2, 3))):
            tp, tm = self.dop.arm_theta[:, ap], self.dop.arm_theta[:, am]
            rp, rm = self.dop.ref[:, ap], self.dop.ref[:, am]
            vp, vm = self._neighbor(v, vB, rp), self._neighbor(v, vB, rm)
            cm = -tp / (tm * (tm + tp) * h)
            cp = tm / (tp * (tm + tp) * h)
            c0 = (tp - tm) / (tm * tp * h)
            Dc = cm * vm + c0 * v + cp * vp
            back = (v - vm) / (tm * h)
            fwd = (vp - v) / (tp * h)
            # centred is monotone while the opposite-arm weight stays nonnegative
            ok = np.where(Dc > 0, alpha * Dc * tm * h <= beta * v, -alpha * Dc * tp * h <= beta * v)
            oks.append(ok)
            ok = ok & ~self.locked[axis]
            use_b = ~ok & (back > 0) & (back >= -fwd)
            use_f = ~ok & ~use_b & (fwd < 0)
            D = np.where(ok, Dc, np.where(use_b, back, np.where(use_f, fwd, 0.0)))
            w0 = np.where(ok, c0, np.where(use_b, 1 / (tm * h), np.where(use_f, -1 / (tp * h), 0.0)))
            wm = np.where(ok, cm, np.where(use_b, -1 / (tm * h), 0.0))
            wp = np.where(ok, cp, np.where(use_f, 1 / (tp * h), 0.0))
            out.append((D, w0, wm, wp, rm, rp))
        self._last_ok = oks
        return out

    def residual(self, v, vB, with_scale=False):
        dop, tr = self.dop, self.tr
        a11, a22, a12 = dop.coeffs[:, 0], dop.coeffs[:, 1], dop.coeffs[:, 2]
        (D1, *_), (D2, *_) = self._gradients(v, vB)
        grad = tr.alpha * (a11 * D1 * D1 + 2 * a12 * D1 * D2 + a22 * D2 * D2)
        Lv = dop.A2 @ v + dop.B2 @ vB
        C = self._zeroth(v)
        G = grad - tr.beta * v * Lv + C - tr.kappa
        if not with_scale:
            return G
        scale = (np.abs(grad) + tr.beta * v * (self.absA2 @ v + self.absB2 @ vB)
                 + np.abs(C) + tr.kappa)
        return G, scale

    def _zeroth(self, v):
        c = self.dop.c
        if self.nl.is_power:
            return -c * v * v
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(c != 0, c * v * v * np.log(v), 0.0)

    def _zeroth_prime(self, v):
        c = self.dop.c
        if self.nl.is_power:
            return -2 * c * v
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(c != 0, c * (2 * v * np.log(v) + v), 0.0)

    def jacobian(self, v, vB):
        dop, tr = self.dop, self.tr
        a11, a22, a12 = dop.coeffs[:, 0], dop.coeffs[:, 1], dop.coeffs[:, 2]
        g1, g2 = self._gradients(v, vB)
        D = (g1[0], g2[0])
        # d/dD_k of alpha (a11 D1^2 + 2 a12 D1 D2 + a22 D2^2)
        dgrad = (2 * tr.alpha * (a11 * D[0] + a12 * D[1]), 2 * tr.alpha * (a22 * D[1] + a12 * D[0]))
        Lv = dop.A2 @ v + dop.B2 @ vB
        diag = -tr.beta * Lv + self._zeroth_prime(v)
        rows, cols, vals = [], [], []
        for (Dk, w0, wm, wp, rm, rp), s in zip((g1, g2), dgrad):
            diag = diag + s * w0
            for ref, w in ((rm, wm), (rp, wp)):
                keep = (ref >= 0) & (w != 0)
                rows.append(self.rows[keep])
                cols.append(ref[keep])
                vals.append((s * w)[keep])
        rows.append(self.rows)
        cols.append(self.rows)
        vals.append(diag)
        J = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(self.n, self.n))
        return (J - tr.beta * sp.diags(v) @ dop.A2).tocsc()

    def newton(self, v, vB, tol=1e-10, max_iter=50, label=np.nan):
        """Newton iteration keeping ``v > 0``; stops at ``tol`` or the rounding floor."""
        history = []
        self.reset_switches()
        for it in range(max_iter + 1):
            G, scale = self.residual(v, vB, with_scale=True)
            if self._track_switches():
                G, scale = self.residual(v, vB, with_scale=True)
            norm = float(np.abs(G).max())
            history.append(norm)
            floor = max(tol, 32 * EPS * float(scale.max()))
            if not np.isfinite(norm):
                raise DivergenceError("transformed residual is not finite", iterate=v, history=history)
            if norm <= floor:
                return v, StepReport(label, it, history, True, floor)
            if it == max_iter:
                break
            dv = spla.splu(self.jacobian(v, vB)).solve(-G)
            neg = dv < 0
            t = min(1.0, 0.9 * float((v[neg] / -dv[neg]).min())) if neg.any() else 1.0
            if not t > 1e-14:
                raise NonConvergenceError("damping could not keep the iterate positive",
                                          iterate=v, history=history)
            v = v + t * dv
        raise NonConvergenceError(f"Newton did not converge in {max_iter} iterations "
                                  f"(residual {history[-1]:.3e}, tolerance {floor:.3e})",
                                  iterate=v, history=history,
                                  report=StepReport(label, max_iter, history, False, floor))


class _Predictor:
    """Warm start for the next rung: add the operator-harmonic extension of the
    change in boundary data (a uniform shift when the change is constant)."""

    def __init__(self, dop: DiscreteOperator):
        self.dop = dop
        self._lu = None

    def __call__(self, v, dvB):
        if not np.any(dvB):
            return v
        if self._lu is None:
            self._lu = spla.splu(self.dop.A2.tocsc())
        ext = self._lu.solve(-(self.dop.B2 @ dvB))
        if np.all(v + ext > 0):
            return v + ext
        shift = float(dvB.min())
        return v + shift if np.all(v + shift > 0) else v


def transformed_residual_u(dop: DiscreteOperator, nl: NonlinearitySpec, u: GridFunction) -> np.ndarray:
    """Residual of the transformed equations at ``u``, expressed as ``L_h u - f(u)``."""
    scheme = TransformedScheme(dop, nl)
    v = scheme.tr.psi(u.values)
    vB = scheme.tr.psi(u.boundary)
    return scheme.tr.residual_to_u(scheme.residual(v, vB), v)


# ------------------------------------------------------------------ blow-up


def _audit(u_new, u_old, tol, sign=1.0):
    """Count nodes where ``sign*(u_new - u_old)`` drops below ``-tol*max(1,|u_old|)``."""
    inc = sign * (u_new - u_old)
    scale = np.maximum(1.0, np.abs(u_old))
    bad = inc < -tol * scale
    rel = np.where(bad, -inc / scale, 0.0)
    return int(bad.sum()), float(rel.max(initial=0.0)), float(inc.min(initial=np.inf))


def initial_iterate(grid: Grid, nl: NonlinearitySpec, data) -> GridFunction:
    """Default first ladder iterate: in the transformed variable, the mean
    boundary value plus the one-dimensional profile ``sqrt(kappa/alpha) d``."""
    tr = Transform(nl)
    data = boundary_values(grid, data)
    v = tr.psi(data).mean() + np.sqrt(tr.kappa / tr.alpha) * grid.d
    return GridFunction(grid, tr.phi(v), data)


def solve_blowup_ladder(grid: Grid, dop: DiscreteOperator, nl: NonlinearitySpec,
                        M0: float = 1.0, factor: float = 2.0, cap: int = 40,
                        stop_tol: float = 1e-4, rho: float | None = None, g=None,
                        finalize: bool = False, u_init: GridFunction | np.ndarray | None = None,
                        tol: float = 1e-10, max_iter: int = 50, method: str = "transformed",
                        audit_tol: float = 1e-12, callback: Callable | None = None):
    """Raise constant boundary data ``M_k = M0 factor^k`` (``k = 0..cap``) until the
    change on ``{d >= rho}`` drops below ``stop_tol``.

    ``g`` optionally gives finite data on part of the boundary (``inf`` marks
    the blow-up part); rung ``k`` uses ``min(g, M_k)``.  Each rung is warm
    started from the previous one.  With ``finalize`` a last solve with the
    limit data ``M = inf`` is appended (transformed method only).  Iterates are
    audited for ``u_{k+1} >= u_k`` with relative tolerance ``audit_tol``.

    Raises :class:`NonConvergenceError` carrying the report when the cap is
    reached while compact values are still rising.
    """
    if not M0 > 0 or not factor > 1:
        raise ConfigError("ladder needs M0 > 0 and factor > 1")
    if rho is None:
        rho = 4 * grid.h
    if rho < 4 * grid.h * (1 - 1e-12):
        raise ConfigError(f"compact margin rho={rho} must be at least 4h={4 * grid.h}")
    compact = grid.d >= rho
    if not compact.any():
        raise ConfigError(f"no interior node has d >= rho={rho}")
    if method not in ("transformed", "direct"):
        raise ConfigError(f"unknown ladder method {method!r}")
    g_full = boundary_values(grid, g)
    report = SolveReport(method, rho=float(rho))
    tr = Transform(nl)

    if method == "transformed":
        scheme = TransformedScheme(dop, nl)
        if u_init is None:
            v = tr.psi(initial_iterate(grid, nl, np.minimum(g_full, M0)).values)
        else:
            v = tr.psi(getattr(u_init, "values", u_init))
        predictor = _Predictor(dop)

    def rungs():
        for k in range(cap + 1):
            yield k, M0 * factor**k
            if report.converged:
                break
        if finalize and report.converged and method == "transformed":
            yield cap + 1, np.inf

    u_prev = None
    vB_prev = None
    result = None
    for k, M in rungs():
        data = np.minimum(g_full, M)
        if method == "transformed":
            vB = tr.psi(data)
            if vB_prev is not None:
                v = predictor(v, vB - vB_prev)
            v, step = scheme.newton(v, vB, tol=tol, max_iter=max_iter, label=M)
            vB_prev = vB
            u = tr.phi(v)
        else:
            init = u_prev if u_prev is not None else u_init
            gf, step = solve_dirichlet(grid, dop, nl, data, init, tol=tol, max_iter=max_iter)
            step.label = M
            u = gf.values
        report.steps.append(step)
        report.labels.append(M)
        result = GridFunction(grid, u, data)
        if np.isinf(M):
            report.finalized = True
        if u_prev is None:
            if not np.isfinite(stop_tol):
                report.converged = True
        else:
            n_bad, worst, inc_min = _audit(u, u_prev, audit_tol)
            report.monotone_violations += n_bad
            report.max_violation = max(report.max_violation, worst)
            report.min_increment = min(report.min_increment, inc_min)
            delta = float(np.abs(u - u_prev)[compact].max())
            report.compact_deltas.append(delta)
            if callback is not None:
                callback(k, M, result, delta)
            if delta < stop_tol:
                report.converged = True
        u_prev = u
    if not report.converged:
        raise NonConvergenceError(
            f"ladder cap {cap} reached while compact values still rise "
            f"(last delta {report.compact_deltas[-1] if report.compact_deltas else float('nan'):.3e}"
            f" >= stop_tol {stop_tol})", iterate=result, report=report)
    return result, report


def solve_blowup_exhaustion(domain: Shape, op: OperatorSpec, nl: NonlinearitySpec, h: float,
                            offsets, ladder: dict | None = None, rho: float | None = None,
                            audit_tol: float = 1e-12, hard_tol: float = 1e-8,
                            require_resolved: bool = False):
    """Blow-up solutions on ``Omega_m = {d > s_m}`` for decreasing offsets ``s_m``.

    All ``Omega_m`` share the lattice of spacing ``h``; the arms resolve the
    eroded boundaries to sub-cell accuracy, so offsets below ``4h`` are allowed
    unless ``require_resolved``.  Successive solutions are audited for
    ``u_{m+1} <= u_m`` on shared nodes; a violation above ``hard_tol`` on a
    monotone operator raises :class:`InvariantViolation`.  Compact deltas are
    measured on ``{d >= rho}`` with ``d`` the distance to the original boundary.
    Returns the solution on the last ``Omega_m`` and a report.
    """
    offsets = [float(s) for s in offsets]
    if not offsets:
        raise ConfigError("exhaustion needs at least one offset")
    if any(s <= 0 for s in offsets) or any(b >= a for a, b in zip(offsets, offsets[1:])):
        raise ConfigError("exhaustion offsets must be positive and strictly decreasing")
    if require_resolved and offsets[-1] < 4 * h:
        raise ConfigError(f"offset {offsets[-1]} below 4h={4 * h}")
    params = dict(ladder or {})
    report = SolveReport("exhaustion")
    prev = None
    for s in offsets:
        grid = build_grid(domain, h, offset=s)
        dop = discretize(op, grid)
        sub_rho = params.get("rho")
        if sub_rho is None or sub_rho < 4 * h:
            sub_rho = 4 * h
        kw = {k: v for k, v in params.items() if k != "rho"}
        sol, sub = solve_blowup_ladder(grid, dop, nl, rho=sub_rho, **kw)
        report.sub_reports.append(sub)
        report.steps.extend(sub.steps)
        report.labels.append(s)
        keys = grid.lattice_keys()
        if prev is not None:
            pgrid, pu = prev
            lookup = {tuple(k): i for i, k in enumerate(pgrid.lattice_keys())}
            idx_new, idx_old = [], []
            for i, key in enumerate(map(tuple, keys)):
                j = lookup.get(key)
                if j is not None:
                    idx_new.append(i)
                    idx_old.append(j)
            idx_new, idx_old = np.array(idx_new), np.array(idx_old)
            un, uo = sol.values[idx_new], pu[idx_old]
            n_bad, worst, inc_min = _audit(un, uo, audit_tol, sign=-1.0)
            report.monotone_violations += n_bad
            report.max_violation = max(report.max_violation, worst)
            report.min_increment = min(report.min_increment, inc_min)
            if worst > hard_tol and dop.monotone:
                raise InvariantViolation(
                    f"exhaustion iterates increased by {worst:.3e} (relative) between offsets",
                    witness={"offset": s})
            if rho is not None:
                dd = grid.d[idx_new] + s
                sel = dd >= rho
                report.compact_deltas.append(float(np.abs(un - uo)[sel].max()) if sel.any() else np.nan)
        prev = (grid, sol.values)
    report.converged = True
    report.rho = rho
    return sol, report


def solve_problem_ladder(domain: Shape, op: OperatorSpec, nl: NonlinearitySpec, h: float, **ladder):
    """Convenience wrapper: grid, discretization and ladder in one call."""
    grid = build_grid(domain, h)
    dop = discretize(op, grid)
    sol, rep = solve_blowup_ladder(grid, dop, nl, **ladder)
    return sol, rep, dop
