"""Scalar functionals of sampled fields, threshold classification and scaling."""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from .grid import Field, Grid
from .soliton import GroundStateParams, ResolutionWarning, eval_Q, ground_state_norms, pair

REPORT_SCHEMA_VERSION = 1


class InconsistentEquivalenceError(RuntimeError):
    """The equivalent threshold conditions disagree on a sampled field."""


@dataclass(frozen=True)
class FunctionalReport:
    mass: float
    energy: float
    kinetic: float
    potential: float
    virial_K: float
    action_S: float
    mu: float
    sigma: float
    omega: float = 1.0
    flags: tuple[str, ...] = ()

    CSV_COLUMNS = (
        "schema_version", "mass", "energy", "kinetic", "potential",
        "virial_K", "action_S", "mu", "sigma", "omega", "flags",
    )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["flags"] = list(self.flags)
        d["schema_version"] = REPORT_SCHEMA_VERSION
        return d

    def csv_row(self) -> list:
        d = self.to_dict()
        d["flags"] = ";".join(self.flags)
        return [d[c] for c in self.CSV_COLUMNS]


# --- quadrature helpers ------------------------------------------------------

def _weights(f: Field) -> np.ndarray | float:
    return getattr(f, "weights", 1.0)


def field_derivative(f: Field) -> np.ndarray:
    d = getattr(f, "dvalues", None)
    return f.deriv() if d is None else d


def norms(f: Field, p: float) -> tuple[float, float, float]:
    """(||u||_2^2, ||u_x||_2^2, ||u||_{p+1}^{p+1}) by the trapezoidal rule."""
    g, w = f.grid, _weights(f)
    a = np.abs(f.values)
    du = field_derivative(f)
    mass = g.integrate(w * a * a)
    kinetic = g.integrate(w * (du.real**2 + du.imag**2))
    potential = g.integrate(w * a ** (p + 1.0))
    return float(mass), float(kinetic), float(potential)


def resolution_flags(f: Field, tail_tol: float = 1e-8, boundary_tol: float = 1e-12) -> tuple[str, ...]:
    v = f.values
    peak = float(np.max(np.abs(v)))
    if peak == 0.0:
        return ()
    flags = []
    spec = np.abs(np.fft.fft(v)) ** 2
    total = spec.sum()
    high = np.abs(f.grid.k) > (2.0 / 3.0) * f.grid.k_max
    if spec[high].sum() > tail_tol * total:
        flags.append("unresolved")
    edge = max(abs(v[0]), abs(v[1]), abs(v[-1]))
    if edge > boundary_tol * peak:
        flags.append("boundary")
    return tuple(flags)


def compute_functionals(f: Field, params: GroundStateParams, check: bool = True) -> FunctionalReport:
    """Mass, energy, virial K, action S_omega and mu_omega of a sampled field."""
    p, w = params.p, params.omega
    mass, kinetic, potential = norms(f, p)
    energy = 0.5 * kinetic - potential / (p + 1.0)
    virial = kinetic - (p - 1.0) / (2.0 * (p + 1.0)) * potential
    q = ground_state_norms(params)
    flags = resolution_flags(f) if check and not hasattr(f, "weights") else ()
    if "unresolved" in flags:
        warnings.warn("field spectrum is not resolved on the grid", ResolutionWarning, stacklevel=2)
    return FunctionalReport(
        mass=mass,
        energy=energy,
        kinetic=kinetic,
        potential=potential,
        virial_K=virial,
        action_S=energy + 0.5 * w * mass,
        mu=2.0 * q["kinetic"] - kinetic,
        sigma=params.sigma,
        omega=w,
        flags=flags,
    )


def virial_K(f: Field, p: float) -> float:
    _, kin, pot = norms(f, p)
    return kin - (p - 1.0) / (2.0 * (p + 1.0)) * pot


def action(f: Field, params: GroundStateParams) -> float:
    return compute_functionals(f, params, check=False).action_S


# --- threshold -----------------------------------------------------------------

class ThresholdClass(str, enum.Enum):
    BELOW = "BelowThreshold"
    AT_K_POSITIVE = "AtThresholdKPositive"
    AT_K_NEGATIVE = "AtThresholdKNegative"
    ABOVE = "AboveThreshold"
    UNDECIDED_K = "UndecidedK"


def threshold_level(p: float) -> float:
    """2^(1+sigma) E(Q) M(Q)^sigma for the unit-frequency ground state."""
    unit = GroundStateParams(p, 1.0)
    q = ground_state_norms(unit)
    s = unit.sigma
    return 2.0 ** (1.0 + s) * q["energy"] * q["mass"] ** s


def gradient_level(p: float) -> float:
    """2^(1+sigma) ||Q||_2^(2 sigma) ||Q_x||_2^2, the scale-free kinetic bound."""
    unit = GroundStateParams(p, 1.0)
    q = ground_state_norms(unit)
    s = unit.sigma
    return 2.0 ** (1.0 + s) * q["mass"] ** s * q["kinetic"]


@dataclass(frozen=True)
class ThresholdDetail:
    category: ThresholdClass
    level_ratio: float
    omega_star: float
    virial_K: float
    gradient_ratio: float
    mu_star: float
    lemma_identity_defect: float
    report: FunctionalReport = field(repr=False)


def classify_threshold_detail(
    f: Field, params: GroundStateParams, tol: float = 1e-6, k_band: float = 1e-9
) -> ThresholdDetail:
    """Compare E M^sigma with the two-soliton level and resolve the K branch.

    At threshold the three equivalent conditions (K > 0, kinetic bound,
    mu > 0 at the fitted frequency) must agree; a disagreement raises
    InconsistentEquivalenceError. |K| below k_band * kinetic is reported as
    UndecidedK rather than forced to a sign.
    """
    p = params.p
    rep = compute_functionals(f, params)
    if rep.mass == 0.0:
        raise ValueError("threshold classification needs a nonzero field")
    s = params.sigma
    ratio = rep.energy * rep.mass**s / threshold_level(p)
    grad_ratio = rep.mass**s * rep.kinetic / gradient_level(p)
    w_star = _omega_from_mass(rep.mass, p)
    q_star = ground_state_norms(GroundStateParams(p, w_star))
    mu_star = 2.0 * q_star["kinetic"] - rep.kinetic
    defect = rep.virial_K - (p - 5.0) / 4.0 * mu_star

    if ratio < 1.0 - tol:
        cat = ThresholdClass.BELOW
    elif ratio > 1.0 + tol:
        cat = ThresholdClass.ABOVE
    else:
        band = k_band * rep.kinetic
        # (p-1)/2 |E - 2E(Q_w*)| bounds the identity K = (p-5)/4 mu at the sampled level
        allowed = 0.5 * (p - 1.0) * abs(rep.energy - 2.0 * q_star["energy"]) + 1e-9 * rep.kinetic
        if abs(defect) > allowed:
            raise InconsistentEquivalenceError(
                f"K - (p-5)/4 mu = {defect:.3e} exceeds {allowed:.3e} at threshold"
            )
        if abs(rep.virial_K) <= band:
            cat = ThresholdClass.UNDECIDED_K
        else:
            signs = {
                rep.virial_K > 0,
                grad_ratio < 1.0,
                mu_star > 0,
            }
            if len(signs) != 1 and abs(mu_star) > band and abs(grad_ratio - 1.0) > k_band:
                raise InconsistentEquivalenceError(
                    f"K={rep.virial_K:.3e}, gradient ratio={grad_ratio:.12f}, mu={mu_star:.3e} disagree"
                )
            cat = ThresholdClass.AT_K_POSITIVE if rep.virial_K > 0 else ThresholdClass.AT_K_NEGATIVE
    return ThresholdDetail(cat, ratio, w_star, rep.virial_K, grad_ratio, mu_star, defect, rep)


def threshold_classify(
    f: Field, params: GroundStateParams, tol: float = 1e-6, k_band: float = 1e-9
) -> ThresholdClass:
    return classify_threshold_detail(f, params, tol, k_band).category


# --- frequency fitting and rescaling ---------------------------------------------

def _omega_from_mass(mass: float, p: float) -> float:
    mq = ground_state_norms(GroundStateParams(p, 1.0))["mass"]
    return (2.0 * mq / mass) ** (2.0 * (p - 1.0) / (p - 5.0))


def fit_omega(f: Field, params: GroundStateParams) -> float:
    """The frequency w* with M(f) = 2 M(Q_w*)."""
    mass, _, _ = norms(f, params.p)
    if mass == 0.0:
        raise ValueError("cannot fit a frequency to the zero field")
    return _omega_from_mass(mass, params.p)


def rescale_to_unit_omega(f: Field, omega: float, p: float = 7.0) -> Field:
    """x -> omega^(-1/(p-1)) f(omega^(-1/2) x) on the dilated grid.

    The output grid has half-length L sqrt(omega) and the same sample count,
    so the samples map one-to-one and no interpolation is involved. Maps
    Q_omega to Q_1; E and K scale by omega^(-(p+3)/(2(p-1))) and M by
    omega^((p-5)/(2(p-1))).
    """
    if not omega > 0:
        raise ValueError(f"omega must be positive, got {omega}")
    grid = Grid(f.grid.n_points, f.grid.half_length * math.sqrt(omega))
    amp = omega ** (-1.0 / (p - 1.0))
    return Field(grid, amp * f.values, odd_sector=f.odd_sector)


def scaling_exponents(p: float) -> dict:
    """Exponents of omega picked up by M, E, K under rescale_to_unit_omega."""
    return {
        "mass": (p - 5.0) / (2.0 * (p - 1.0)),
        "energy": -(p + 3.0) / (2.0 * (p - 1.0)),
        "virial_K": -(p + 3.0) / (2.0 * (p - 1.0)),
    }


# --- Gagliardo-Nirenberg ---------------------------------------------------------

def gn_ratio(f: Field, p: float = 7.0) -> float:
    """||f||_{p+1}^{p+1} / (||f||_2^{(p+3)/2} ||f_x||_2^{(p-1)/2})."""
    mass, kin, pot = norms(f, p)
    if mass == 0.0 or kin == 0.0:
        raise ValueError("Gagliardo-Nirenberg ratio is undefined for the zero field")
    return pot / (mass ** ((p + 3.0) / 4.0) * kin ** ((p - 1.0) / 4.0))


def gn_constants(params: GroundStateParams) -> tuple[float, float]:
    """(C_GN, C_GN_odd) from the ground-state norms.

    Uses (p-1) C_odd / (2(p+1)) * 2^((p-1)/2) ||Q||^((p+3)/2) ||Q_x||^((p-5)/2) = 1
    and C_odd = 2^(-(p-1)/2) C_GN.
    """
    p = params.p
    q = ground_state_norms(GroundStateParams(p, 1.0))
    m, t = math.sqrt(q["mass"]), math.sqrt(q["kinetic"])
    c_odd = 2.0 * (p + 1.0) / ((p - 1.0) * 2.0 ** ((p - 1.0) / 2.0) * m ** ((p + 3.0) / 2.0) * t ** ((p - 5.0) / 2.0))
    return 2.0 ** ((p - 1.0) / 2.0) * c_odd, c_odd


# --- half-line restriction -----------------------------------------------------------

@dataclass(frozen=True)
class HalfLineField(Field):
    """1_(0,inf) f with derivative 1_(0,inf) f_x and half weight on self-paired samples."""

    dvalues: np.ndarray = field(default=None, repr=False)
    weights: np.ndarray = field(default=None, repr=False)


def restrict_half_line(f: Field) -> HalfLineField:
    if not f.is_odd():
        raise ValueError("half-line restriction requires an odd field")
    g = f.grid
    x = g.x
    pos = (x > 0).astype(float)
    w = pos.copy()
    w[g.origin_index] = 0.5
    w[0] = 0.5
    dmask = pos.copy()
    dmask[g.origin_index] = 1.0
    dmask[0] = 1.0
    return HalfLineField(g, pos * f.values, False, dvalues=dmask * f.deriv(), weights=w)


# --- minimizing sequence ---------------------------------------------------------------

@dataclass(frozen=True)
class MinimizingRow:
    y: float
    lam: float
    action: float
    action_ratio: float
    virial_K: float


def minimizing_sequence_demo(
    params: GroundStateParams, y_list, grid: Grid | None = None
) -> list[MinimizingRow]:
    """Rows (y, lambda, S_w(lambda phi)) for phi = R_y Q_w rescaled onto K = 0."""
    ys = [float(y) for y in y_list]
    if any(b <= a for a, b in zip(ys, ys[1:])):
        raise ValueError("y_list must be strictly increasing")
    p, w = params.p, params.omega
    if grid is None:
        half = max(ys) + 50.0 / params.decay
        n = 1 << int(math.ceil(math.log2(half * 2.0 * params.decay / 0.04)))
        grid = Grid(n, half)
    ref = compute_functionals(Field(grid, eval_Q(params, grid.x)), params, check=False)
    rows = []
    for y in ys:
        phi = Field(grid, pair(params, grid.x, y), odd_sector=True)
        _, kin, pot = norms(phi, p)
        lam = (kin * 2.0 * (p + 1.0) / ((p - 1.0) * pot)) ** (1.0 / (p - 1.0))
        rep = compute_functionals(phi * lam, params, check=False)
        rows.append(MinimizingRow(y, lam, rep.action_S, rep.action_S / (2.0 * ref.action_S), rep.virial_K))
    return rows
