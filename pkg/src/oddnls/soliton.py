"""Closed-form ground state, spatial operators, overlaps and the pair action gap.

The ground state of -Q'' + w Q - Q^p = 0 is

    Q_w(x) = (w (p+1)/2)^(1/(p-1)) * cosh((p-1) sqrt(w) x / 2)^(-2/(p-1)),

evaluated here through log-cosh so that no argument overflows.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate

from .grid import Field, Grid, symmetric_grid_check


class ResolutionWarning(UserWarning):
    """A grid does not resolve the sampled object to the requested tolerance."""


class PrecisionWarning(UserWarning):
    """A quadrature lost relative precision."""


class AsymptoticRegimeWarning(UserWarning):
    """A parameter lies outside the range where an asymptotic sign is guaranteed."""


@dataclass(frozen=True)
class GroundStateParams:
    p: float = 7.0
    omega: float = 1.0

    def __post_init__(self):
        if not self.p > 5:
            raise ValueError(f"nonlinearity power must satisfy p > 5, got {self.p}")
        if not self.omega > 0:
            raise ValueError(f"frequency must be positive, got {self.omega}")
        object.__setattr__(self, "p", float(self.p))
        object.__setattr__(self, "omega", float(self.omega))

    @property
    def sigma(self) -> float:
        """Exponent making E * M**sigma invariant under the NLS scaling."""
        return (self.p + 3.0) / (self.p - 5.0)

    @property
    def decay(self) -> float:
        return math.sqrt(self.omega)

    @property
    def peak(self) -> float:
        return float(eval_Q(self, 0.0))

    def at_omega(self, omega: float) -> "GroundStateParams":
        return GroundStateParams(self.p, omega)

    def to_dict(self) -> dict:
        return {"p": self.p, "omega": self.omega}


def _logcosh(z):
    a = np.abs(z)
    return a + np.log1p(np.exp(-2.0 * a)) - math.log(2.0)


def log_Q(params: GroundStateParams, x):
    p, w = params.p, params.omega
    z = 0.5 * (p - 1.0) * math.sqrt(w) * np.asarray(x, dtype=float)
    return math.log(w * (p + 1.0) / 2.0) / (p - 1.0) - 2.0 / (p - 1.0) * _logcosh(z)


def eval_Q(params: GroundStateParams, x):
    """Q_omega(x); positive, even, decreasing in |x| and never NaN."""
    return np.exp(log_Q(params, x))


def eval_dQ(params: GroundStateParams, x):
    """Q_omega'(x) = -sqrt(w) tanh((p-1) sqrt(w) x / 2) Q_omega(x)."""
    p, w = params.p, params.omega
    x = np.asarray(x, dtype=float)
    z = 0.5 * (p - 1.0) * math.sqrt(w) * x
    return -math.sqrt(w) * np.tanh(z) * eval_Q(params, x)


def eval_d2Q(params: GroundStateParams, x):
    q = eval_Q(params, x)
    return params.omega * q - q**params.p


# --- cutoffs -------------------------------------------------------------

def _bump(t):
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    pos = t > 0
    out[pos] = np.exp(-1.0 / t[pos])
    return out


def _dbump(t):
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    pos = t > 0
    out[pos] = np.exp(-1.0 / t[pos]) / t[pos] ** 2
    return out


def chi1(x):
    """Smooth even cutoff: 0 on |x| <= 1/2, 1 on |x| >= 1."""
    t = 2.0 * np.abs(np.asarray(x, dtype=float)) - 1.0
    a, b = _bump(t), _bump(1.0 - t)
    return a / (a + b)


def dchi1(x):
    x = np.asarray(x, dtype=float)
    t = 2.0 * np.abs(x) - 1.0
    a, b = _bump(t), _bump(1.0 - t)
    da, db = _dbump(t), _dbump(1.0 - t)
    ds = (da * b + a * db) / (a + b) ** 2
    return 2.0 * np.sign(x) * ds


def chi(x, R: float):
    return chi1(np.asarray(x, dtype=float) / R)


def dchi(x, R: float):
    return dchi1(np.asarray(x, dtype=float) / R) / R


def chi_plus(x, R: float):
    x = np.asarray(x, dtype=float)
    return np.where(x > 0, chi(x, R), 0.0)


def chi_minus(x, R: float):
    x = np.asarray(x, dtype=float)
    return np.where(x < 0, chi(x, R), 0.0)


def dchi_plus(x, R: float):
    x = np.asarray(x, dtype=float)
    return np.where(x > 0, dchi(x, R), 0.0)


def chi_complement(x, R: float):
    return 1.0 - chi(x, R)


# --- operators on fields -------------------------------------------------

class OperatorKind(str, enum.Enum):
    TRANSLATE = "Translate"
    REFLECT_ANTISYMMETRIZE = "ReflectAntisymmetrize"
    REFLECT_SYMMETRIZE = "ReflectSymmetrize"
    CUTOFF_PLUS = "CutoffPlus"
    CUTOFF_MINUS = "CutoffMinus"
    CUTOFF_COMPLEMENT = "CutoffComplement"
    GLUED = "Glued"
    GLUED_PLUS = "GluedPlus"


_CUTOFF_KINDS = {
    OperatorKind.CUTOFF_PLUS,
    OperatorKind.CUTOFF_MINUS,
    OperatorKind.CUTOFF_COMPLEMENT,
    OperatorKind.GLUED,
    OperatorKind.GLUED_PLUS,
}


@dataclass(frozen=True)
class SpatialOperatorSpec:
    kind: OperatorKind
    y: float = 0.0
    R: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", OperatorKind(self.kind))
        if self.y < 0:
            raise ValueError(f"translation must be non-negative, got y={self.y}")
        if self.kind in _CUTOFF_KINDS:
            if self.R is None or not self.R > 0:
                raise ValueError(f"{self.kind.value} needs a cutoff radius R > 0")
        if self.kind in (OperatorKind.GLUED, OperatorKind.GLUED_PLUS) and self.y <= self.R:
            raise ValueError(
                f"{self.kind.value} requires y > R (got y={self.y}, R={self.R})"
            )


def apply_operator(spec: SpatialOperatorSpec, f: Field) -> Field:
    """Apply a translation / reflection / cutoff operator to a sampled field.

    Translations are spectral (exact for band-limited periodic data), so
    `y` need not be a multiple of the grid spacing.
    """
    grid = f.grid
    symmetric_grid_check(grid)
    x, v, y, R = grid.x, f.values, spec.y, spec.R
    kind = spec.kind
    if kind is OperatorKind.TRANSLATE:
        return Field(grid, grid.shift(v, y), odd_sector=False)
    if kind is OperatorKind.REFLECT_ANTISYMMETRIZE:
        t = grid.shift(v, y) if y else v.copy()
        return Field(grid, t - grid.reflect(t), odd_sector=True)
    if kind is OperatorKind.REFLECT_SYMMETRIZE:
        t = grid.shift(v, y) if y else v.copy()
        return Field(grid, t + grid.reflect(t), odd_sector=False)
    if kind is OperatorKind.CUTOFF_PLUS:
        return Field(grid, chi_plus(x, R) * v)
    if kind is OperatorKind.CUTOFF_MINUS:
        return Field(grid, chi_minus(x, R) * v)
    if kind is OperatorKind.CUTOFF_COMPLEMENT:
        return Field(grid, chi_complement(x, R) * v, odd_sector=f.odd_sector)
    sign = -1.0 if kind is OperatorKind.GLUED else 1.0
    plus = chi_plus(x, R) * grid.shift(v, y)
    minus = chi_minus(x, R) * grid.shift(v, -y)
    return Field(grid, plus + sign * minus)


# --- closed-form profiles sampled on a grid ---------------------------------

def translated(params: GroundStateParams, x, y: float):
    return eval_Q(params, np.asarray(x) - y)


def pair(params: GroundStateParams, x, y: float, sign: float = -1.0):
    """Q(x - y) + sign * Q(x + y); sign=-1 gives the odd pair R_y Q."""
    x = np.asarray(x, dtype=float)
    return eval_Q(params, x - y) + sign * eval_Q(params, x + y)


def dpair(params: GroundStateParams, x, y: float, sign: float = -1.0):
    x = np.asarray(x, dtype=float)
    return eval_dQ(params, x - y) + sign * eval_dQ(params, x + y)


def glued(params: GroundStateParams, x, R: float, y: float, sign: float = -1.0):
    """chi_R^+ T_y Q + sign * chi_R^- T_{-y} Q (sign=-1: G_{R,y}Q)."""
    x = np.asarray(x, dtype=float)
    return chi_plus(x, R) * eval_Q(params, x - y) + sign * chi_minus(x, R) * eval_Q(params, x + y)


def ground_state_field(params: GroundStateParams, grid: Grid) -> Field:
    return Field(grid, eval_Q(params, grid.x))


def pair_field(params: GroundStateParams, grid: Grid, y: float) -> Field:
    """Samples of R_y Q_omega."""
    return Field(grid, pair(params, grid.x, y), odd_sector=True)


def glued_field(params: GroundStateParams, grid: Grid, R: float, y: float) -> Field:
    if y <= R:
        raise ValueError(f"glued profile requires y > R (got y={y}, R={R})")
    return Field(grid, glued(params, grid.x, R, y), odd_sector=True)


# --- ground state norms ------------------------------------------------------

def _quad(f, a, b, points=None, epsrel=1e-13):
    val, err = integrate.quad(f, a, b, points=points, epsabs=0.0, epsrel=epsrel, limit=400)
    return val, err


def _tail_length(params: GroundStateParams, rate: float = 1.0) -> float:
    return 45.0 / (rate * params.decay)


@lru_cache(maxsize=256)
def ground_state_norms(params: GroundStateParams) -> dict:
    """Mass, kinetic and potential norms of Q_omega by adaptive quadrature."""
    p = params.p
    L = _tail_length(params)

    def q2(x):
        return eval_Q(params, x) ** 2

    def dq2(x):
        return eval_dQ(params, x) ** 2

    def qp(x):
        return eval_Q(params, x) ** (p + 1)

    mass = 2.0 * _quad(q2, 0.0, L)[0]
    kinetic = 2.0 * _quad(dq2, 0.0, L)[0]
    potential = 2.0 * _quad(qp, 0.0, L)[0]
    energy = 0.5 * kinetic - potential / (p + 1.0)
    return {
        "mass": mass,
        "kinetic": kinetic,
        "potential": potential,
        "energy": energy,
        "action": energy + 0.5 * params.omega * mass,
    }


def mass_closed_form(params: GroundStateParams) -> float:
    """M(Q_omega) through the Beta function: int sech^(2a)(kx) dx = B(a, 1/2) / k."""
    from scipy.special import beta

    p, w = params.p, params.omega
    amp2 = (w * (p + 1.0) / 2.0) ** (2.0 / (p - 1.0))
    k = 0.5 * (p - 1.0) * math.sqrt(w)
    return amp2 * beta(2.0 / (p - 1.0), 0.5) / k


def elliptic_residual(params: GroundStateParams, grid: Grid, tol: float = 1e-8) -> float:
    """Discrete L2 norm of -Q'' + w Q - Q^p for the sampled closed form."""
    q = eval_Q(params, grid.x)
    width = 1.0 / params.decay
    if width / grid.spacing < 16:
        warnings.warn(
            f"grid spacing {grid.spacing:.3g} gives fewer than 16 points per soliton width",
            ResolutionWarning,
            stacklevel=2,
        )
    r = -grid.deriv(q, 2) + params.omega * q - q**params.p
    res = math.sqrt(grid.spacing * float(np.sum(r * r)))
    if res > tol:
        warnings.warn(f"elliptic residual {res:.3e} exceeds {tol:.1e}", ResolutionWarning, stacklevel=2)
    return res


# --- overlaps ----------------------------------------------------------------

def log_overlap_integral(
    params: GroundStateParams, alpha: float, beta: float, y: float, half_line: bool = False
) -> float:
    """log of int (T_y Q)^alpha (T_{-y} Q)^beta over R, or over (0, inf).

    The integrand is rescaled by its maximum before quadrature so that very
    small overlaps keep full relative precision.
    """
    if y <= 0:
        raise ValueError(f"y must be positive, got {y}")
    if half_line:
        if alpha < 0 or beta < 0 or (alpha == 0 and beta == 0):
            raise ValueError("half-line overlap needs alpha, beta >= 0, not both zero")
    elif not (alpha > 0 and beta > 0):
        raise ValueError("full-line overlap needs alpha, beta > 0")

    def logf(x):
        return alpha * log_Q(params, x - y) + beta * log_Q(params, x + y)

    lo = 0.0 if half_line else -y - _tail_length(params, max(alpha + beta, 1e-3) / 2)
    hi = y + _tail_length(params, max(alpha + beta, 1e-3) / 2)
    probe = np.linspace(lo, hi, 4001)
    shift = float(np.max(logf(probe)))

    def f(x):
        return math.exp(float(logf(x)) - shift)

    pts = [pt for pt in (-y, 0.0, y) if lo < pt < hi]
    val, err = _quad(f, lo, hi, points=pts, epsrel=1e-12)
    if not val > 0 or err > 1e-6 * val:
        warnings.warn(
            f"overlap quadrature lost precision (value={val:.3e}, err={err:.1e})",
            PrecisionWarning,
            stacklevel=2,
        )
    return math.log(val) + shift


def overlap_integral(
    params: GroundStateParams, alpha: float, beta: float, y: float, half_line: bool = False
) -> float:
    return math.exp(log_overlap_integral(params, alpha, beta, y, half_line))


def overlap_exponent(alpha: float, beta: float, half_line: bool = False) -> float:
    """Leading exponential rate c in overlap ~ exp(-c sqrt(w) y)."""
    if alpha == beta:
        return 2.0 * alpha
    if half_line:
        return min(alpha, beta) + beta
    return 2.0 * min(alpha, beta)


# --- pair action gap ------------------------------------------------------------

def action_gap_terms(params: GroundStateParams, y: float, sign: float = -1.0) -> dict:
    """Cancellation-free pieces of S_w(Q(.-y) + sign Q(.+y)) - 2 S_w(Q).

    Each cross term is integrated directly instead of subtracting two O(1)
    actions, so the gap keeps relative precision for e^{-2y} far below
    machine epsilon.
    """
    p, w = params.p, params.omega
    L = y + _tail_length(params)

    def cross_kin(x):
        return float(eval_dQ(params, x - y) * eval_dQ(params, x + y))

    def cross_mass(x):
        return float(eval_Q(params, x - y) * eval_Q(params, x + y))

    def nonlinear(x):
        la = float(log_Q(params, x - y))
        lb = float(log_Q(params, x + y))
        r = math.exp(lb - la)
        if sign < 0 and r >= 1.0:
            return -2.0 * math.exp((p + 1.0) * la)
        return math.exp((p + 1.0) * la) * math.expm1((p + 1.0) * math.log1p(sign * r)) - math.exp(
            (p + 1.0) * lb
        )

    ck = _quad(cross_kin, -L, L, points=[-y, 0.0, y], epsrel=1e-11)[0]
    cm = _quad(cross_mass, -L, L, points=[-y, 0.0, y], epsrel=1e-11)[0]
    nl = 2.0 * _quad(nonlinear, 0.0, L, points=[y], epsrel=1e-11)[0]
    gap = sign * (ck + w * cm) - nl / (p + 1.0)
    return {"cross_kinetic": ck, "cross_mass": cm, "nonlinear": nl, "gap": gap}


def default_y_min(params: GroundStateParams) -> float:
    return 3.0 / params.decay


def action_gap(params: GroundStateParams, y: float, y_min: float | None = None) -> float:
    """S_w(R_y Q_w) - 2 S_w(Q_w); positive for y above y_min."""
    if y <= 0:
        raise ValueError(f"y must be positive, got {y}")
    y_min = default_y_min(params) if y_min is None else y_min
    if y < y_min:
        warnings.warn(
            f"y={y} is below y_min={y_min}; positivity of the gap is not guaranteed",
            AsymptoticRegimeWarning,
            stacklevel=2,
        )
    return action_gap_terms(params, y, sign=-1.0)["gap"]


def even_pair_action_gap(params: GroundStateParams, y: float) -> float:
    """S_w(Q(.-y) + Q(.+y)) - 2 S_w(Q_w); negative for large y."""
    return action_gap_terms(params, y, sign=+1.0)["gap"]


def fit_log_slope(xs, values) -> float:
    """Least-squares slope of log(values) against xs."""
    xs = np.asarray(xs, dtype=float)
    lv = np.log(np.asarray(values, dtype=float))
    return float(np.polyfit(xs, lv, 1)[0])
