"""Quadratic form of the linearization around the ground state and its coercivity."""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg
from scipy.sparse.linalg import LinearOperator, eigsh

from .grid import Field, Grid
from .soliton import GroundStateParams, chi, chi_plus, dchi_plus, eval_Q, eval_dQ


class ConstraintDegeneracyError(ValueError):
    """Constraint vectors are numerically linearly dependent on the grid."""


class Constraints(str, enum.Enum):
    PLAIN = "Plain"
    CUTOFF = "Cutoff"


# names of the three orthogonality directions
PHASE, TRANSLATION, NONLINEAR = "phase", "translation", "nonlinear"
ALL_CONSTRAINTS = (PHASE, TRANSLATION, NONLINEAR)


@dataclass(frozen=True)
class QuadraticFormContext:
    """Form Phi centred on T_y Q (omega = 1); R is the cutoff radius."""

    params: GroundStateParams
    grid: Grid
    y: float = 0.0
    R: float = 10.0

    def __post_init__(self):
        if self.params.omega != 1.0:
            raise ValueError("the quadratic form is defined at omega = 1")
        if self.y < 0:
            raise ValueError(f"y must be non-negative, got {self.y}")
        if not self.R > 0:
            raise ValueError(f"R must be positive, got {self.R}")

    def soliton(self) -> np.ndarray:
        return eval_Q(self.params, self.grid.x - self.y)

    def require_cutoff_regime(self) -> None:
        if not self.y > self.R:
            raise ValueError(f"cutoff coercivity needs y > R (got y={self.y}, R={self.R})")


def phi_form(ctx: QuadraticFormContext, f: Field, g: Field) -> float:
    """Phi(f, g) = int f'g' + fg - Q^{p-1}(p f1 g1 + f2 g2), real inner products."""
    p = ctx.params.p
    q = ctx.soliton()
    fv, gv = f.values, g.values
    df, dg = f.deriv(), g.deriv()
    grad = np.real(df * np.conj(dg))
    mass = np.real(fv * np.conj(gv))
    pot = q ** (p - 1.0) * (p * (fv.real * gv.real) + fv.imag * gv.imag)
    return float(ctx.grid.integrate(grad + mass - pot))


def h1_norm_sq(f: Field) -> float:
    return float(f.grid.integrate(np.abs(f.deriv()) ** 2 + np.abs(f.values) ** 2))


# --- plain constrained minimum ------------------------------------------------------

def _orthonormal(vectors: list[np.ndarray], cond_tol: float = 1e-8) -> np.ndarray:
    if not vectors:
        return np.zeros((0, 0))
    m = np.array(vectors).T
    m = m / np.linalg.norm(m, axis=0)
    u, s, _ = np.linalg.svd(m, full_matrices=False)
    if s.min() < cond_tol * s.max():
        raise ConstraintDegeneracyError(f"constraint Gram singular values {s}")
    return u


def _block_minimum(grid: Grid, potential: np.ndarray, constraints: list[np.ndarray], tol: float) -> float:
    """min <(G - V)h, h>/<G h, h> over h L2-orthogonal to the constraints, G = 1 - d_xx.

    Works in w = G^{1/2} h so the problem is a standard symmetric one:
    A = I - G^{-1/2} V G^{-1/2} restricted to w orthogonal to G^{-1/2} c.
    """
    n = grid.n_points
    ginv_half = 1.0 / np.sqrt(1.0 + grid.k**2)

    def gmh(v):
        return np.fft.ifft(ginv_half * np.fft.fft(v)).real

    basis = _orthonormal([gmh(c) for c in constraints])

    def project(v):
        if basis.size:
            return v - basis @ (basis.T @ v)
        return v

    def matvec(w):
        w = np.asarray(w).ravel()
        pw = project(w)
        t = gmh(pw)
        aw = pw - gmh(potential * t)
        return project(aw) + 2.0 * (w - pw)

    op = LinearOperator((n, n), matvec=matvec, dtype=float)
    v0 = project(np.exp(-(grid.x / 3.0) ** 2) * (1.0 + 0.3 * grid.x))
    vals = eigsh(op, k=1, which="SA", tol=tol, v0=v0, maxiter=20 * n, return_eigenvectors=False)
    return float(vals[0])


def plain_block_minima(
    ctx: QuadraticFormContext, drop: tuple[str, ...] = (), tol: float = 1e-12
) -> dict:
    """Constrained minima of the real (L+) and imaginary (L-) blocks."""
    for d in drop:
        if d not in ALL_CONSTRAINTS:
            raise ValueError(f"unknown constraint {d!r}; expected one of {ALL_CONSTRAINTS}")
    p = ctx.params.p
    x = ctx.grid.x
    q = ctx.soliton()
    dq = eval_dQ(ctx.params, x - ctx.y)
    real_c = []
    if TRANSLATION not in drop:
        real_c.append(dq)
    if NONLINEAR not in drop:
        real_c.append(q**p)
    imag_c = [] if PHASE in drop else [q]
    plus = _block_minimum(ctx.grid, p * q ** (p - 1.0), real_c, tol)
    minus = _block_minimum(ctx.grid, q ** (p - 1.0), imag_c, tol)
    return {"L_plus": plus, "L_minus": minus}


# --- cutoff version -------------------------------------------------------------------

def _spectral_derivative_matrix(grid: Grid) -> np.ndarray:
    return _flush(grid.deriv(np.eye(grid.n_points), 1), 1e-30)


def _odd_extension(grid: Grid) -> tuple[np.ndarray, np.ndarray]:
    """Matrix E with E @ v the odd field whose x > 0 samples are v."""
    n = grid.n_points
    pos = np.arange(grid.origin_index + 1, n)
    neg = n - pos
    e = np.zeros((n, pos.size))
    e[pos, np.arange(pos.size)] = 1.0
    e[neg, np.arange(pos.size)] = -1.0
    return e, pos


def _flush(v: np.ndarray, floor: float = 1e-150) -> np.ndarray:
    """Zero out magnitudes below floor; subnormals stall dense BLAS kernels."""
    return np.where(np.abs(v) < floor, 0.0, v)


def _cutoff_block(
    grid: Grid,
    dmat: np.ndarray,
    ext: np.ndarray,
    cp: np.ndarray,
    cfull: np.ndarray,
    potential: np.ndarray,
    R: float,
    constraints: list[np.ndarray],
) -> float:
    dx = grid.spacing
    cp, cfull, potential = _flush(cp), _flush(cfull), _flush(potential)
    constraints = [_flush(c) for c in constraints]
    h1 = dx * (dmat.T @ dmat + np.eye(grid.n_points))
    a = cp[:, None] * ext
    b = cfull[:, None] * ext
    num = a.T @ (h1 - dx * np.diag(potential)) @ a + (ext.T @ h1 @ ext) / R
    den = b.T @ h1 @ b
    if constraints:
        rows = np.array([ext.T @ (dx * c) for c in constraints])
        _orthonormal(list(rows))
        z = linalg.null_space(rows)
        num = z.T @ num @ z
        den = z.T @ den @ z
    num = 0.5 * (num + num.T)
    den = 0.5 * (den + den.T)
    try:
        mu = linalg.eigh(den, num, eigvals_only=True)
        top = float(mu.max())
        if top <= 0:
            return math.inf
        return 1.0 / top
    except linalg.LinAlgError:
        w = linalg.eigvals(num, den)
        w = w[np.isfinite(w)]
        return float(np.min(w.real))


def cutoff_block_minima(ctx: QuadraticFormContext, drop: tuple[str, ...] = ()) -> dict:
    """min over odd h of [Phi(T_-y(chi_R^+ h)) + |h|^2_{H^1}/R] / |chi_R h|^2_{H^1}."""
    ctx.require_cutoff_regime()
    g = ctx.grid
    x = g.x
    p, R, y = ctx.params.p, ctx.R, ctx.y
    q = ctx.soliton()
    cp = chi_plus(x, R)
    cfull = chi(x, R)
    dmat = _spectral_derivative_matrix(g)
    ext, _ = _odd_extension(g)
    real_c, imag_c = [], []
    cq = cp * q
    if TRANSLATION not in drop:
        real_c.append(dchi_plus(x, R) * q + cp * eval_dQ(ctx.params, x - y))
    if NONLINEAR not in drop:
        real_c.append(cp * q**p)
    if PHASE not in drop:
        imag_c.append(cq)
    plus = _cutoff_block(g, dmat, ext, cp, cfull, p * q ** (p - 1.0), R, real_c)
    minus = _cutoff_block(g, dmat, ext, cp, cfull, q ** (p - 1.0), R, imag_c)
    return {"L_plus": plus, "L_minus": minus}


def coercivity_minimum(
    ctx: QuadraticFormContext, constraints: Constraints | str = Constraints.PLAIN, drop: tuple[str, ...] = ()
) -> float:
    """Constrained minimum of the H^1-normalized form.

    Plain: Phi(T_-y h)/|h|^2_{H^1} with the three orthogonality conditions
    against T_y Q. Cutoff: the localized version with the 1/R |h|^2 term
    added and odd h. `drop` removes named constraints.
    """
    constraints = Constraints(constraints)
    if constraints is Constraints.PLAIN:
        m = plain_block_minima(ctx, drop)
    else:
        m = cutoff_block_minima(ctx, drop)
    return min(m.values())


@dataclass(frozen=True)
class CoercivityRow:
    n_points: int
    half_length: float
    y: float
    R: float
    constraints: str
    dropped: str
    c_min: float


def coercivity_report(
    params: GroundStateParams,
    n_list,
    half_length: float = 40.0,
    y: float = 0.0,
    R: float = 10.0,
    constraints: Constraints | str = Constraints.PLAIN,
    drop_options=((),),
) -> list[CoercivityRow]:
    rows = []
    for n in n_list:
        ctx = QuadraticFormContext(params, Grid(n, half_length), y, R)
        for drop in drop_options:
            c = coercivity_minimum(ctx, constraints, tuple(drop))
            rows.append(
                CoercivityRow(n, half_length, y, R, Constraints(constraints).value, "+".join(drop), c)
            )
    return rows


def write_coercivity_csv(rows: list[CoercivityRow], path) -> None:
    cols = ["n_points", "half_length", "y", "R", "constraints", "dropped", "c_min"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for r in rows:
            w.writerow([getattr(r, c) for c in cols])
