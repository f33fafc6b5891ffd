"""Non-divergence elliptic operators ``L = a^{ij} D_ij + b^i D_i - c`` and their
monotone finite-difference discretization.

Coefficients are sampled at node centres.  Pure second derivatives and drift
use Shortley-Weller arms (boundary data placed at the true crossing point);
the drift is upwinded; the mixed derivative uses the sign-adaptive 7-point
stencil on the uniform lattice, falling back to band-node data next to the
boundary.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConfigError, InvariantViolation
from .geometry import DIRECTIONS, Grid

# ---------------------------------------------------------------- coefficients


def _as_points(points) -> np.ndarray:
    return np.asarray(points, dtype=float).reshape(-1, 2)


class CoefficientField:
    """Evaluation rule ``x -> (A(x), b(x), c(x))`` for arrays of points."""

    kind = "field"

    def evaluate(self, points) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        raise NotImplementedError


@dataclass(frozen=True)
class ConstantField(CoefficientField):
    A: tuple = ((1.0, 0.0), (0.0, 1.0))
    b: tuple = (0.0, 0.0)
    c: float = 0.0
    kind = "constant"

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        if A.shape != (2, 2) or not np.allclose(A, A.T, atol=0, rtol=1e-14):
            raise ConfigError("constant coefficient matrix must be symmetric 2x2")
        object.__setattr__(self, "A", tuple(map(tuple, A)))
        object.__setattr__(self, "b", tuple(float(v) for v in self.b))
        object.__setattr__(self, "c", float(self.c))

    def evaluate(self, points):
        n = len(_as_points(points))
        return (np.broadcast_to(np.asarray(self.A), (n, 2, 2)).copy(),
                np.broadcast_to(np.asarray(self.b), (n, 2)).copy(),
                np.full(n, self.c))


@dataclass(frozen=True)
class CheckerboardField(CoefficientField):
    """Two constant triples alternating on square cells of side ``cell``."""

    first: ConstantField = field(default_factory=ConstantField)
    second: ConstantField = field(default_factory=ConstantField)
    cell: float = 0.25
    kind = "checkerboard"

    def __post_init__(self):
        if not self.cell > 0:
            raise ConfigError("checkerboard cell size must be positive")

    def parity(self, points) -> np.ndarray:
        p = _as_points(points)
        k = np.floor(p[:, 0] / self.cell) + np.floor(p[:, 1] / self.cell)
        return (k % 2).astype(bool)

    def evaluate(self, points):
        odd = self.parity(points)
        A0, b0, c0 = self.first.evaluate(points)
        A1, b1, c1 = self.second.evaluate(points)
        return (np.where(odd[:, None, None], A1, A0), np.where(odd[:, None], b1, b0),
                np.where(odd, c1, c0))


def polar_angle(points) -> np.ndarray:
    p = _as_points(points)
    return np.arctan2(p[:, 1], p[:, 0])


@dataclass(frozen=True)
class RotatingField(CoefficientField):
    """``A = R(angle) diag(lam, Lam) R(angle)^T`` with a position dependent angle."""

    lam: float = 1.0
    Lam: float = 2.0
    angle: Callable = polar_angle
    b: tuple = (0.0, 0.0)
    c: float = 0.0
    kind = "rotating"

    def __post_init__(self):
        if not 0 < self.lam <= self.Lam:
            raise ConfigError("rotating field needs 0 < lam <= Lam")

    def evaluate(self, points):
        p = _as_points(points)
        t = np.asarray(self.angle(p), dtype=float) * np.ones(len(p))
        cs, sn = np.cos(t), np.sin(t)
        a11 = self.lam * cs**2 + self.Lam * sn**2
        a22 = self.lam * sn**2 + self.Lam * cs**2
        a12 = (self.lam - self.Lam) * cs * sn
        A = np.stack([np.stack([a11, a12], -1), np.stack([a12, a22], -1)], -2)
        n = len(p)
        return A, np.broadcast_to(np.asarray(self.b, float), (n, 2)).copy(), np.full(n, float(self.c))


@dataclass(frozen=True, eq=False)
class TabulatedField(CoefficientField):
    """Piecewise-constant coefficients on a sample lattice (nearest sample wins)."""

    x: np.ndarray
    y: np.ndarray
    A: np.ndarray  # (ny, nx, 2, 2)
    b: np.ndarray  # (ny, nx, 2)
    c: np.ndarray  # (ny, nx)
    kind = "tabulated"

    def __post_init__(self):
        for name in ("x", "y", "A", "b", "c"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        ny, nx = len(self.y), len(self.x)
        if self.A.shape != (ny, nx, 2, 2) or self.b.shape != (ny, nx, 2) or self.c.shape != (ny, nx):
            raise ConfigError("tabulated field arrays do not match the sample lattice")
        if not np.allclose(self.A, np.swapaxes(self.A, -1, -2)):
            raise ConfigError("tabulated coefficient matrices must be symmetric")

    def _nearest(self, values, grid):
        k = np.clip(np.searchsorted(grid, values), 1, len(grid) - 1)
        return np.where(np.abs(values - grid[k - 1]) <= np.abs(grid[k] - values), k - 1, k)

    def evaluate(self, points):
        p = _as_points(points)
        i = self._nearest(p[:, 0], self.x)
        j = self._nearest(p[:, 1], self.y)
        return self.A[j, i].copy(), self.b[j, i].copy(), self.c[j, i].copy()


@dataclass(frozen=True, eq=False)
class ScaledField(CoefficientField):
    """Coefficients of ``x -> L`` after the substitution ``y = x / sqrt(a)``.

    ``A`` is evaluated at the pulled-back point, ``b`` is divided by ``sqrt(a)``
    and ``c`` by ``a``.
    """

    base: CoefficientField
    a: float
    kind = "scaled"

    def evaluate(self, points):
        s = np.sqrt(self.a)
        A, b, c = self.base.evaluate(_as_points(points) / s)
        return A, b / s, c / self.a


@dataclass(frozen=True, eq=False)
class OperatorSpec:
    field: CoefficientField
    lam: float
    Lam: float
    K: float = 0.0

    def __post_init__(self):
        if not 0 < self.lam <= self.Lam:
            raise ConfigError(f"ellipticity bounds need 0 < lam <= Lam, got {self.lam}, {self.Lam}")
        if not self.K >= 0:
            raise ConfigError(f"lower-order bound K must be nonnegative, got {self.K}")

    @property
    def mu(self) -> float:
        return self.Lam / self.lam


def laplacian() -> OperatorSpec:
    return OperatorSpec(ConstantField(), 1.0, 1.0, 0.0)


def _sample_bounds(field: CoefficientField, pts: np.ndarray):
    A, b, c = field.evaluate(pts)
    eig = np.linalg.eigvalsh(A)
    return eig, np.einsum("ij,ij->i", b, b), c


def ellipticity_bounds(field: CoefficientField, n_samples: int = 10_000,
                       region: tuple | None = None, seed: int = 0,
                       declared: OperatorSpec | None = None,
                       points: np.ndarray | None = None, rtol: float = 1e-12):
    """Sampled ``(lam_hat, Lam_hat, K_hat)`` of a coefficient field.

    ``K_hat`` is the larger of ``max |b|^2`` and ``max c``.  With ``declared``
    bounds, any sample outside them raises :class:`InvariantViolation` carrying
    the offending point.
    """
    if points is None:
        lo, hi = region if region is not None else ((-1.0, -1.0), (1.0, 1.0))
        rng = np.random.default_rng(seed)
        points = rng.uniform(lo, hi, size=(n_samples, 2))
    pts = _as_points(points)
    eig, bb, c = _sample_bounds(field, pts)
    lam_hat, Lam_hat = float(eig[:, 0].min()), float(eig[:, 1].max())
    K_hat = float(max(bb.max(), c.max(), 0.0))
    if declared is not None:
        tol = rtol * max(1.0, declared.Lam)
        bad = ((eig[:, 0] < declared.lam - tol) | (eig[:, 1] > declared.Lam + tol)
               | (bb > declared.K + tol) | (c > declared.K + tol) | (c < -tol))
        if bad.any():
            k = int(np.argmax(bad))
            raise InvariantViolation(
                f"coefficients at {tuple(pts[k])} violate the declared bounds "
                f"(eigenvalues {tuple(eig[k])}, |b|^2={bb[k]}, c={c[k]})",
                witness=tuple(pts[k]))
    return lam_hat, Lam_hat, K_hat


# ---------------------------------------------------------------- discretization

KIND_CENTERED, KIND_UPWIND, KIND_CROSS = 0, 1, 2
KIND_NAMES = {KIND_CENTERED: "centered", KIND_UPWIND: "upwinded", KIND_CROSS: "rotated cross-term"}


@dataclass(frozen=True, eq=False)
class DiscreteOperator:
    """Assembled stencils on the interior rows of a grid.

    ``A2``/``B2`` hold the second-order and drift parts (interior columns and
    boundary slots); the zeroth-order term is ``-c`` on the diagonal.
    ``ref[k, a]`` encodes the arm neighbour used for row ``k``: ``>= 0`` an
    interior row, ``< 0`` the boundary slot ``-ref - 1``; ``arm_theta`` is the
    arm length in units of h actually used in that row.
    """

    grid: Grid
    A2: sp.csr_matrix
    B2: sp.csr_matrix
    c: np.ndarray
    coeffs: np.ndarray  # (N, 5): a11, a22, a12, b1, b2
    ref: np.ndarray
    arm_theta: np.ndarray
    kind: np.ndarray
    monotone: bool
    nonmonotone_rows: np.ndarray
    structural_rows: np.ndarray

    @property
    def A(self) -> sp.csr_matrix:
        return (self.A2 - sp.diags(self.c)).tocsr()

    @property
    def B(self) -> sp.csr_matrix:
        return self.B2

    def kind_names(self) -> list[str]:
        return [KIND_NAMES[int(k)] for k in self.kind]


def _lattice_ref(grid: Grid, ij: np.ndarray, di: int, dj: int) -> np.ndarray:
    i, j = ij[:, 0] + di, ij[:, 1] + dj
    col = grid.index[j, i]
    slot = grid.band_slot[j, i]
    if np.any((col < 0) & (slot < 0)):
        raise InvariantViolation("stencil reaches a node outside the boundary band")
    return np.where(col >= 0, col, -slot - 1)


def discretize(op: OperatorSpec, grid: Grid) -> DiscreteOperator:
    """Assemble ``L_h`` with Shortley-Weller arms, upwind drift and a 7-point cross term."""
    h = grid.h
    n = grid.n_interior
    A, b, c = op.field.evaluate(grid.points)
    a11, a22, a12 = A[:, 0, 0], A[:, 1, 1], A[:, 0, 1]
    b1, b2 = b[:, 0], b[:, 1]
    cross = a12 != 0.0
    # cross-term rows touching the boundary use the uniform lattice with band data
    uniform = cross & np.any(grid.theta < 1.0, axis=1)

    ref = np.where(grid.nbr >= 0, grid.nbr, -grid.arm_slot - 1)
    theta = grid.theta.copy()
    if uniform.any():
        for a, (di, dj) in enumerate(DIRECTIONS):
            ref[uniform, a] = _lattice_ref(grid, grid.ij[uniform], di, dj)
        theta[uniform] = 1.0

    rows, cols, vals = [], [], []
    diag = np.zeros(n)
    r = np.arange(n)

    def add(mask, target, w):
        rows.append(r[mask])
        cols.append(target[mask])
        vals.append(w[mask])

    for axis, (ap, am, akk, bk) in enumerate([(0, 1, a11, b1), (2, 3, a22, b2)]):
        tp, tm = theta[:, ap], theta[:, am]
        wp = 2.0 / (tp * (tp + tm) * h * h)
        wm = 2.0 / (tm * (tp + tm) * h * h)
        coef_p = akk * wp + np.where(bk > 0, bk / (tp * h), 0.0)
        coef_m = akk * wm + np.where(bk < 0, -bk / (tm * h), 0.0)
        diag -= coef_p + coef_m
        everyone = np.ones(n, bool)
        add(everyone, ref[:, ap], coef_p)
        add(everyone, ref[:, am], coef_m)

    if cross.any():
        s = np.abs(a12) / (h * h)
        diag += 2 * np.where(cross, s, 0.0)
        for a in range(4):
            add(cross, ref[:, a], -s)
        pos = a12 > 0
        neg = a12 < 0
        for sel, pairs in ((pos, ((1, 1), (-1, -1))), (neg, ((1, -1), (-1, 1)))):
            if sel.any():
                for di, dj in pairs:
                    tgt = np.zeros(n, dtype=np.int64)
                    tgt[sel] = _lattice_ref(grid, grid.ij[sel], di, dj)
                    add(sel, tgt, s)

    rows.append(r)
    cols.append(r)
    vals.append(diag)
    R, C, V = np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)
    interior = C >= 0
    A2 = sp.csr_matrix((V[interior], (R[interior], C[interior])), shape=(n, n))
    B2 = sp.csr_matrix((V[~interior], (R[~interior], -C[~interior] - 1)), shape=(n, grid.n_slots))

    kind = np.where(cross, KIND_CROSS, np.where((b1 != 0) | (b2 != 0), KIND_UPWIND, KIND_CENTERED))
    structural = np.nonzero(np.abs(a12) > np.minimum(a11, a22))[0]
    bad = _nonmonotone_rows(A2, B2, c)
    return DiscreteOperator(grid=grid, A2=A2, B2=B2, c=np.asarray(c, float),
                            coeffs=np.column_stack([a11, a22, a12, b1, b2]), ref=ref,
                            arm_theta=theta, kind=kind, monotone=len(bad) == 0,
                            nonmonotone_rows=bad, structural_rows=structural)


def _nonmonotone_rows(A2: sp.csr_matrix, B2: sp.csr_matrix, c: np.ndarray) -> np.ndarray:
    """Rows violating nonnegative off-diagonals or diagonal dominance."""
    A2 = A2.tocoo()
    off = A2.row != A2.col
    neg = np.zeros(A2.shape[0], bool)
    np.logical_or.at(neg, A2.row[off], A2.data[off] < 0)
    Bc = B2.tocoo()
    np.logical_or.at(neg, Bc.row, Bc.data < 0)
    offsum = np.zeros(A2.shape[0])
    np.add.at(offsum, A2.row[off], A2.data[off])
    np.add.at(offsum, Bc.row, Bc.data)
    d = A2.diagonal() - c
    scale = np.abs(A2.diagonal()) + 1.0
    dominant = d <= -offsum - c + 1e-12 * scale
    return np.nonzero(neg | ~dominant | (c < 0))[0]


def apply(dop: DiscreteOperator, u) -> np.ndarray:
    """``L_h u`` on interior rows; ``u`` is a GridFunction-like object with
    ``values`` (interior) and ``boundary`` (slot data)."""
    values = np.asarray(u.values, dtype=float)
    boundary = np.asarray(u.boundary, dtype=float)
    if values.shape != (dop.grid.n_interior,) or boundary.shape != (dop.grid.n_slots,):
        raise ValueError(f"grid function shape {values.shape}/{boundary.shape} does not match "
                         f"operator ({dop.grid.n_interior}, {dop.grid.n_slots})")
    return dop.A2 @ values + dop.B2 @ boundary - dop.c * values


@dataclass
class MaxPrincipleReport:
    status: str  # "ok" | "violations" | "inapplicable"
    n_trials: int
    violations: list = field(default_factory=list)
    min_value: float = np.inf


def check_discrete_max_principle(dop: DiscreteOperator, n_trials: int = 20, seed: int = 0,
                                 tol: float = 1e-10) -> MaxPrincipleReport:
    """Random ``w`` with ``w >= 0`` on the band and ``L_h w <= 0`` inside must be ``>= 0``."""
    if not dop.monotone:
        return MaxPrincipleReport("inapplicable", 0)
    rng = np.random.default_rng(seed)
    lu = spla.splu(dop.A.tocsc())
    n, m = dop.grid.n_interior, dop.grid.n_slots
    report = MaxPrincipleReport("ok", n_trials)
    for t in range(n_trials):
        g = rng.uniform(0.0, 2.0, m) * (rng.uniform(size=m) < 0.7)
        src = -rng.exponential(1.0, n) * (rng.uniform(size=n) < rng.uniform(0.02, 1.0))
        w = lu.solve(src - dop.B2 @ g)
        report.min_value = min(report.min_value, float(w.min()))
        scale = tol * max(1.0, float(np.abs(w).max()))
        if w.min() < -scale:
            k = int(np.argmin(w))
            report.violations.append({"trial": t, "row": k, "value": float(w[k]),
                                      "point": tuple(map(float, dop.grid.points[k]))})
    if report.violations:
        report.status = "violations"
    return report


def corrupt_stencil(dop: DiscreteOperator, kind: str = "diagonal", row: int | None = None,
                    seed: int = 0) -> DiscreteOperator:
    """Mutant operator for harness self-tests; keeps the (now false) monotone flag.

    ``diagonal`` flips the sign of one diagonal entry; ``offdiagonal`` flips
    the sign of one positive interior off-diagonal weight and scales it up.
    """
    rng = np.random.default_rng(seed)
    A2 = dop.A2.tolil(copy=True)
    n = dop.grid.n_interior
    if row is None:
        row = int(rng.integers(n))
    if kind == "diagonal":
        A2[row, row] = abs(A2[row, row]) + 2 * dop.c[row]
    elif kind == "offdiagonal":
        cols = [j for j in A2.rows[row] if j != row]
        if not cols:
            raise ValueError(f"row {row} has no interior off-diagonal entries")
        j = cols[int(rng.integers(len(cols)))]
        A2[row, j] = -4.0 * A2[row, j]
    else:
        raise ValueError(f"unknown corruption {kind!r}")
    return replace(dop, A2=A2.tocsr())
