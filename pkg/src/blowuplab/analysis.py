"""Checks of computed solutions against the theory: boundary blow-up rates,
two-sided bounds on ``f(u) d^beta``, cross-method uniqueness and randomized
discrete comparison tests."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.linalg as spla
from scipy import stats
from scipy.sparse.csgraph import connected_components

from .errors import BlowupLabError, ConfigError, NonConvergenceError
from .geometry import Disk, Rectangle, Shape, build_grid
from .nonlinearity import NonlinearitySpec
from .operators import (CheckerboardField, ConstantField, DiscreteOperator, OperatorSpec,
                        RotatingField, corrupt_stencil, discretize, laplacian)
from .solver import (GridFunction, Transform, initial_iterate, solve_blowup_exhaustion,
                     solve_blowup_ladder, solve_dirichlet)


class FitError(BlowupLabError):
    """The data in the fit window cannot be regressed (e.g. ``u <= 0``)."""

    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness


def diameter(domain: Shape, n: int = 512, seed: int = 0) -> float:
    pts = domain.sample_boundary(n, np.random.default_rng(seed))
    diff = pts[:, None, :] - pts[None, :, :]
    return float(np.sqrt((diff**2).sum(-1)).max())


def _unpack(u, d, h):
    if isinstance(u, GridFunction):
        return u.values, (u.d if d is None else np.asarray(d, float)), (u.grid.h if h is None else h), u
    if d is None:
        raise ConfigError("distances are required when u is a plain array")
    return np.asarray(u, float), np.asarray(getattr(d, "values", d), float), h, None


# ------------------------------------------------------------------ rate fit


@dataclass
class RateFit:
    """Least-squares blow-up rate.  ``exponent`` is ``gamma_hat`` in the power
    case and the slope of ``u`` against ``-ln d`` in the exponential case."""

    mode: str
    exponent: float
    amplitude: float
    r2: float
    window: tuple
    n_nodes: int
    expected: float

    @property
    def gamma_hat(self) -> float:
        return self.exponent

    @property
    def relative_error(self) -> float:
        return abs(self.exponent - self.expected) / abs(self.expected)

    def to_dict(self) -> dict:
        return {"mode": self.mode, "exponent": self.exponent, "amplitude": self.amplitude,
                "r2": self.r2, "window": list(self.window), "n_nodes": self.n_nodes,
                "expected": self.expected}


def fit_boundary_rate(u, d=None, nl: NonlinearitySpec | None = None, window=None,
                      h: float | None = None, diam: float | None = None,
                      min_nodes: int = 30) -> RateFit:
    """Regress ``ln u`` on ``ln d`` (power) or ``u`` on ``-ln d`` (exponential).

    ``u`` is a :class:`GridFunction` or an array with matching distances ``d``.
    The default window is ``[4h, 0.1 diam]``; its lower end must be at least
    ``2h`` and its upper end at most ``diam/4`` when those are known.
    """
    if nl is None:
        raise ConfigError("a nonlinearity is required to choose the fit mode")
    values, dist, h, gf = _unpack(u, d, h)
    if diam is None and gf is not None:
        diam = diameter(gf.grid.domain)
    if window is None:
        if h is None or diam is None:
            raise ConfigError("default window needs h and the domain diameter")
        window = (4 * h, 0.1 * diam)
    lo, hi = map(float, window)
    if h is not None and lo < 2 * h * (1 - 1e-12):
        raise ConfigError(f"fit window starts at {lo} < 2h = {2 * h}")
    if diam is not None and hi > diam / 4 * (1 + 1e-12):
        raise ConfigError(f"fit window ends at {hi} > diam/4 = {diam / 4}")
    if not 0 < lo < hi:
        raise ConfigError(f"invalid fit window {window}")
    sel = (dist >= lo) & (dist <= hi)
    n = int(sel.sum())
    if n < min_nodes:
        raise ConfigError(f"only {n} nodes in the fit window {window}; at least {min_nodes} needed")
    uw, dw = values[sel], dist[sel]
    if nl.is_power:
        if np.any(uw <= 0):
            k = int(np.nonzero(sel)[0][np.argmin(uw)])
            raise FitError(f"nonpositive u={values[k]:.6g} in the fit window at node {k}",
                           witness={"node": k, "u": float(values[k]), "d": float(dist[k])})
        res = stats.linregress(np.log(dw), np.log(uw))
        exponent, amplitude, expected = -res.slope, float(np.exp(res.intercept)), nl.gamma
    else:
        res = stats.linregress(-np.log(dw), uw)
        exponent, amplitude, expected = res.slope, float(res.intercept), 2.0 / nl.a
    return RateFit(nl.kind, float(exponent), amplitude, float(res.rvalue**2), (lo, hi), n, expected)


# ------------------------------------------------------------ two-sided bound


@dataclass
class BoundCertificate:
    N1: float
    N2: float
    beta: float
    rho: float
    slack: float
    min_ratio: float
    max_ratio: float
    argmin_point: tuple | None
    argmax_point: tuple | None
    lower_pass: bool
    upper_pass: bool
    n_nodes: int

    @property
    def passed(self) -> bool:
        return self.lower_pass and self.upper_pass

    def to_dict(self) -> dict:
        return {"N1": self.N1, "N2": self.N2, "beta": self.beta, "rho": self.rho, "slack": self.slack,
                "min_ratio": self.min_ratio, "max_ratio": self.max_ratio,
                "argmin_point": self.argmin_point, "argmax_point": self.argmax_point,
                "lower_pass": self.lower_pass, "upper_pass": self.upper_pass,
                "passed": self.passed, "n_nodes": self.n_nodes}


def log_f(nl: NonlinearitySpec, u) -> np.ndarray:
    u = np.asarray(u, float)
    if nl.is_power:
        with np.errstate(divide="ignore"):
            return np.where(u > 0, nl.p * np.log(np.where(u > 0, u, 1.0)), -np.inf)
    return nl.a * u


def check_two_sided(u, d=None, nl: NonlinearitySpec | None = None, N1: float | None = None,
                    N2: float | None = None, rho: float = 0.1, slack: float = 1.0,
                    h: float | None = None, points=None, rtol: float = 1e-12) -> BoundCertificate:
    """Certificate for ``N1/slack <= f(u) d^beta <= N2 slack`` on ``{0 < d < rho}``.

    A missing ``N1`` or ``N2`` leaves that side unchecked.  Ratios are formed in
    logarithms so that huge ``f(u)`` never overflows; ``rtol`` absorbs the last
    bits of rounding in the comparison.
    """
    if nl is None:
        raise ConfigError("a nonlinearity is required")
    if not slack >= 1:
        raise ConfigError(f"slack must be at least 1, got {slack}")
    values, dist, h, gf = _unpack(u, d, h)
    if h is not None and not rho > 2 * h:
        raise ConfigError(f"strip width rho={rho} must exceed 2h={2 * h}")
    if points is None and gf is not None:
        points = gf.points
    sel = (dist > 0) & (dist < rho)
    idx = np.nonzero(sel)[0]
    if not len(idx):
        raise ConfigError(f"no nodes with 0 < d < {rho}")
    with np.errstate(over="ignore"):
        ratio = np.exp(log_f(nl, values[idx]) + nl.beta * np.log(dist[idx]))
    kmin, kmax = idx[np.argmin(ratio)], idx[np.argmax(ratio)]

    def where(k):
        return None if points is None else tuple(float(x) for x in np.asarray(points)[k])

    lo_ok = N1 is None or ratio.min() >= N1 / slack * (1 - rtol)
    hi_ok = N2 is None or ratio.max() <= N2 * slack * (1 + rtol)
    return BoundCertificate(None if N1 is None else float(N1), None if N2 is None else float(N2),
                            float(nl.beta), float(rho), float(slack), float(ratio.min()),
                            float(ratio.max()), where(kmin), where(kmax), bool(lo_ok), bool(hi_ok),
                            len(idx))


# ------------------------------------------------------------------ uniqueness


@dataclass
class BlowupProblem:
    """Everything needed to compute the blow-up solution by several paths."""

    domain: Shape
    operator: OperatorSpec
    nl: NonlinearitySpec
    h: float
    ladder: dict = field(default_factory=dict)
    offsets: tuple = ()
    exhaustion_ladder: dict | None = None
    perturbation: float = 0.25
    perturbed_M0: float | None = None
    seed: int = 0


@dataclass
class UniquenessResult:
    paths: list
    matrix: np.ndarray
    rho: float
    n_nodes: int
    reports: dict

    @property
    def max_difference(self) -> float:
        return float(self.matrix.max())

    def pairs(self) -> list:
        k = len(self.paths)
        return [{"a": self.paths[i], "b": self.paths[j], "difference": float(self.matrix[i, j])}
                for i in range(k) for j in range(i + 1, k)]

    def to_dict(self) -> dict:
        return {"paths": list(self.paths), "rho": self.rho, "n_nodes": self.n_nodes,
                "pairs": self.pairs(), "matrix": self.matrix.tolist()}


def relative_difference(ua, ub) -> float:
    """``sup |ua - ub| / max(1, min(|ua|, |ub|))``; symmetric in its arguments."""
    ua, ub = np.asarray(ua, float), np.asarray(ub, float)
    if not len(ua):
        return 0.0
    den = np.maximum(1.0, np.minimum(np.abs(ua), np.abs(ub)))
    return float((np.abs(ua - ub) / den).max())


def _run_path(problem: BlowupProblem, name: str):
    grid = build_grid(problem.domain, problem.h)
    if name == "exhaustion":
        if not problem.offsets:
            raise ConfigError("the exhaustion path needs offsets")
        ladder = dict(problem.ladder if problem.exhaustion_ladder is None else problem.exhaustion_ladder)
        sol, rep = solve_blowup_exhaustion(problem.domain, problem.operator, problem.nl, problem.h,
                                           problem.offsets, ladder=ladder)
        offset = problem.offsets[-1]
        return sol.grid.lattice_keys(), sol.values, sol.grid.d + offset, rep
    dop = discretize(problem.operator, grid)
    kw = dict(problem.ladder)
    if name == "perturbed":
        rng = np.random.default_rng(problem.seed)
        M0 = problem.perturbed_M0 or 3.0 * kw.get("M0", 1.0)
        kw["M0"] = M0
        tr = Transform(problem.nl)
        start = initial_iterate(grid, problem.nl, np.minimum(
            np.full(grid.n_slots, np.inf), M0))
        v = tr.psi(start.values) * (1 + problem.perturbation * smooth_noise(grid.points, rng))
        kw["u_init"] = tr.phi(v)
    elif name != "ladder":
        raise ConfigError(f"unknown uniqueness path {name!r}")
    sol, rep = solve_blowup_ladder(grid, dop, problem.nl, **kw)
    return grid.lattice_keys(), sol.values, grid.d, rep


def smooth_noise(points, rng: np.random.Generator, modes: int = 6) -> np.ndarray:
    """Random trigonometric field with low wave numbers, scaled into ``[-1, 1]``."""
    k = rng.uniform(-np.pi, np.pi, (modes, 2)) * 2
    phase = rng.uniform(0, 2 * np.pi, modes)
    s = np.cos(points @ k.T + phase).sum(axis=1)
    return s / max(np.abs(s).max(), 1e-300)


def uniqueness_experiment(problem: BlowupProblem, paths=("ladder", "exhaustion", "perturbed"),
                          rho: float = 0.1) -> UniquenessResult:
    """Solve by each path and compare on ``{d >= rho}`` (``d`` to the original boundary).

    The same path name may appear more than once; reruns are labelled ``name#k``.
    A non-converged path aborts the experiment.
    """
    results, labels = [], []
    for i, name in enumerate(paths):
        seen = list(paths[:i]).count(name)
        label = name if seen == 0 else f"{name}#{seen + 1}"
        try:
            results.append(_run_path(problem, name))
        except NonConvergenceError as exc:
            raise NonConvergenceError(f"uniqueness path {label!r} did not converge: {exc}",
                                      iterate=exc.iterate, history=exc.history,
                                      report=exc.report) from exc
        labels.append(label)
    # nodes present in every path with d >= rho
    maps = []
    common = None
    for keys, vals, d, _ in results:
        keep = d >= rho
        m = {tuple(k): v for k, v in zip(keys[keep], vals[keep])}
        maps.append(m)
        common = set(m) if common is None else common & set(m)
    common = sorted(common)
    arrays = [np.array([m[k] for k in common]) for m in maps]
    k = len(paths)
    matrix = np.zeros((k, k))
    for i in range(k):
        for j in range(i + 1, k):
            matrix[i, j] = matrix[j, i] = relative_difference(arrays[i], arrays[j])
    return UniquenessResult(labels, matrix, float(rho), len(common),
                            {lab: r[3] for lab, r in zip(labels, results)})


# ------------------------------------------------------------------ comparison


@dataclass
class ComparisonReport:
    status: str  # "ok" | "violations" | "inapplicable"
    n_trials: int
    violations: list = field(default_factory=list)
    touching_checks: int = 0
    touching_violations: list = field(default_factory=list)
    solver_failures: int = 0
    min_gap: float = np.inf

    def to_dict(self) -> dict:
        return {"status": self.status, "n_trials": self.n_trials, "violations": self.violations,
                "touching_checks": self.touching_checks,
                "touching_violations": self.touching_violations,
                "solver_failures": self.solver_failures, "min_gap": self.min_gap}


def _sparse_source(rng, n, scale):
    density = rng.uniform(0.01, 1.0)
    return rng.exponential(scale, n) * (rng.uniform(size=n) < density)


def comparison_test(dop: DiscreteOperator, nl: NonlinearitySpec, n_trials: int = 10, seed: int = 0,
                    tol: float = 1e-10, stop_at_first: bool = False,
                    check_monotone: bool = True) -> ComparisonReport:
    """Randomized discrete comparison principle and boundary-touching checks.

    Each trial solves for a subsolution ``u`` (``L_h u - f(u) = s >= 0``) and a
    supersolution ``v`` (``L_h v - f(v) = -t <= 0``) with ``v >= u`` on the
    band and asserts ``v >= u - tol max(1, |u|)``.  It also solves the linear
    problem ``L_h w = s >= 0`` with signed data and checks that every
    component of ``{w > 0}`` reaches a band slot carrying positive data.
    ``check_monotone=False`` runs the harness on operators whose flag is
    cleared (used for mutants).
    """
    if check_monotone and not dop.monotone:
        return ComparisonReport("inapplicable", 0)
    grid = dop.grid
    n, m = grid.n_interior, grid.n_slots
    rng = np.random.default_rng(seed)
    report = ComparisonReport("ok", n_trials)
    lu = spla.splu(dop.A.tocsc())
    adjacency = (dop.A2 != 0).astype(int)
    B2 = dop.B2.tocsr()
    for t in range(n_trials):
        gu = rng.uniform(-1.0, 1.0, m)
        gv = gu + rng.uniform(0.0, 1.0, m) * (rng.uniform(size=m) < 0.5)
        scale = rng.choice([1.0, 10.0, 100.0])
        try:
            u, _ = solve_dirichlet(grid, dop, nl, gu, tol=1e-11, max_iter=60,
                                   source=_sparse_source(rng, n, scale))
            v, _ = solve_dirichlet(grid, dop, nl, gv, tol=1e-11, max_iter=60,
                                   source=-_sparse_source(rng, n, scale))
        except NonConvergenceError:
            report.solver_failures += 1
            continue
        gap = v.values - u.values
        bound = tol * np.maximum(1.0, np.abs(u.values))
        report.min_gap = min(report.min_gap, float(gap.min()))
        bad = np.nonzero(gap < -bound)[0]
        if len(bad):
            k = int(bad[np.argmin(gap[bad])])
            report.violations.append({"trial": t, "seed": seed, "node": k,
                                      "point": tuple(map(float, grid.points[k])),
                                      "u": float(u.values[k]), "v": float(v.values[k])})
            if stop_at_first:
                report.n_trials = t + 1
                break
        # touching the boundary: L_h w = s >= 0 with signed band data
        g = rng.uniform(-1.0, 1.0, m)
        w = lu.solve(_sparse_source(rng, n, 1.0) - B2 @ g)
        report.touching_checks += 1
        report.touching_violations.extend(_touching_failures(adjacency, B2, w, g, t))
    if report.violations or report.touching_violations:
        report.status = "violations"
    return report


def _touching_failures(adjacency, B2, w, g, trial):
    pos = np.nonzero(w > 0)[0]
    if not len(pos):
        return []
    sub = adjacency[pos][:, pos]
    ncomp, labels = connected_components(sub, directed=False)
    reach = (B2[pos].multiply(B2[pos] > 0) @ (g > 0).astype(float)) > 0
    failures = []
    for c in range(ncomp):
        members = labels == c
        if not reach[members].any():
            failures.append({"trial": trial, "component_size": int(members.sum()),
                             "max_w": float(w[pos[members]].max())})
    return failures


@dataclass
class SuiteReport:
    operators: int
    trials: int
    violations: int
    touching_violations: int
    solver_failures: int
    redraws: int
    mutant_caught: bool | None = None
    mutant_trials: int | None = None
    witnesses: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"operators": self.operators, "trials": self.trials, "violations": self.violations,
                "touching_violations": self.touching_violations,
                "solver_failures": self.solver_failures, "redraws": self.redraws,
                "mutant_caught": self.mutant_caught, "mutant_trials": self.mutant_trials,
                "witnesses": self.witnesses[:10]}


def random_operator(rng: np.random.Generator) -> OperatorSpec:
    """A random admissible operator: constant, checkerboard or rotating coefficients
    with random drift and zeroth-order term."""
    K = float(rng.uniform(0, 4))

    def lower_order():
        b = rng.normal(size=2)
        b *= np.sqrt(K) * rng.uniform() / max(np.linalg.norm(b), 1e-300)
        return tuple(b), float(rng.uniform(0, K))

    def constant():
        a11, a22 = rng.uniform(0.5, 3.0, 2)
        a12 = rng.uniform(-0.9, 0.9) * min(a11, a22)
        b, c = lower_order()
        return ConstantField(((a11, a12), (a12, a22)), b, c)

    kind = rng.integers(3)
    if kind == 0:
        fld = constant()
    elif kind == 1:
        fld = CheckerboardField(constant(), constant(), float(rng.uniform(0.1, 0.5)))
    else:
        lam = float(rng.uniform(0.5, 1.5))
        b, c = lower_order()
        fld = RotatingField(lam, lam * float(rng.uniform(1.0, 2.5)), b=b, c=c)
    if kind == 2:
        return OperatorSpec(fld, fld.lam, fld.Lam, K)
    # constant pieces: the spectrum is exact at any point of each piece
    pieces = [fld] if kind == 0 else [fld.first, fld.second]
    eig = np.concatenate([np.linalg.eigvalsh(np.asarray(f.A)) for f in pieces])
    return OperatorSpec(fld, float(eig.min()), float(eig.max()), K)


def random_domain(rng: np.random.Generator) -> tuple[Shape, float]:
    if rng.uniform() < 0.5:
        dom = Disk((float(rng.uniform(-0.3, 0.3)), float(rng.uniform(-0.3, 0.3))), float(rng.uniform(0.6, 1.2)))
    else:
        lo = rng.uniform(-1, 0, 2)
        dom = Rectangle(tuple(lo), tuple(lo + rng.uniform(0.6, 1.5, 2)))
    return dom, float(rng.choice([1 / 8, 1 / 12, 1 / 16]))


def comparison_suite(n_operators: int = 200, nl: NonlinearitySpec | None = None,
                     trials_per_operator: int = 2, seed: int = 0, mutant: bool = True,
                     mutant_trials: int = 200) -> SuiteReport:
    """``comparison_test`` over random monotone operators, plus a mutant self-test.

    Draws whose discretization is not monotone are redrawn (and counted).  The
    mutant flips one positive off-diagonal weight of a Laplacian stencil; the
    suite records whether the harness detects it within ``mutant_trials``.
    """
    nl = nl or NonlinearitySpec.power(2)
    rng = np.random.default_rng(seed)
    rep = SuiteReport(0, 0, 0, 0, 0, 0)
    while rep.operators < n_operators:
        op = random_operator(rng)
        dom, h = random_domain(rng)
        dop = discretize(op, build_grid(dom, h))
        if not dop.monotone:
            rep.redraws += 1
            continue
        sub_seed = int(rng.integers(2**31))
        r = comparison_test(dop, nl, trials_per_operator, seed=sub_seed)
        rep.operators += 1
        rep.trials += r.n_trials
        rep.violations += len(r.violations)
        rep.touching_violations += len(r.touching_violations)
        rep.solver_failures += r.solver_failures
        rep.witnesses.extend({"operator_seed": sub_seed, **v} for v in r.violations)
    if mutant:
        rep.mutant_caught, rep.mutant_trials = mutant_self_test(nl, mutant_trials, seed)
    return rep


def mutant_self_test(nl: NonlinearitySpec, n_trials: int = 200, seed: int = 0) -> tuple[bool, int]:
    """Run the comparison harness on a corrupted Laplacian; returns ``(caught, trials used)``."""
    grid = build_grid(Disk((0.0, 0.0), 1.0), 1 / 8)
    base = discretize(laplacian(), grid)
    mutant = corrupt_stencil(base, kind="offdiagonal", seed=seed)
    r = comparison_test(mutant, nl, n_trials, seed=seed, stop_at_first=True, check_monotone=False)
    return bool(r.violations), r.n_trials
