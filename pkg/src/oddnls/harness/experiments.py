"""Threshold data construction, dichotomy classification and lemma-level audits."""

from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from ..evolve import EvolveConfig, Termination, TrajectoryRecord, dispersive_decay_metrics, evolve
from ..functionals import (
    ThresholdClass,
    classify_threshold_detail,
    compute_functionals,
    gn_constants,
    norms,
)
from ..grid import Field, Grid
from ..soliton import GroundStateParams, ground_state_norms, pair, translated
from ..virial import (
    dphi,
    localized_variance,
    localized_variance_derivative,
    localized_virial_A,
    localized_virial_F,
    virial_K,
)


class KSign(str, enum.Enum):
    POSITIVE = "positive"
    NEGATIVE = "negative"


class NoThresholdSolution(RuntimeError):
    pass


class KSignUnavailable(RuntimeError):
    pass


@dataclass(frozen=True)
class ThresholdDataSpec:
    """Target of the (lambda, nu) solve for lambda R_y Q(nu x).

    amplitude_scale multiplies the solved data afterwards (1 keeps it on the
    threshold, values below 1 give sub-threshold data).
    """

    y: float = 8.0
    lambda0: float = 1.0
    nu0: float = 0.95
    k_sign_target: KSign = KSign.POSITIVE
    newton_tol: float = 1e-12
    amplitude_scale: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "k_sign_target", KSign(self.k_sign_target))
        if not self.y > 0:
            raise ValueError("data_spec.y must be positive")
        if not (self.lambda0 > 0 and self.nu0 > 0):
            raise ValueError("data_spec.lambda0 and data_spec.nu0 must be positive")
        if not self.newton_tol > 0:
            raise ValueError("data_spec.newton_tol must be positive")
        if not self.amplitude_scale > 0:
            raise ValueError("data_spec.amplitude_scale must be positive")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["k_sign_target"] = self.k_sign_target.value
        return d


@dataclass(frozen=True)
class ThresholdData:
    field: Field = field(repr=False)
    lam: float
    nu: float
    virial_K: float
    level_ratio: float
    mass_ratio: float
    energy_ratio: float
    newton_iters: int
    category: ThresholdClass


def _scaled_pair(params: GroundStateParams, grid: Grid, y: float, lam: float, nu: float) -> Field:
    return Field(grid, lam * pair(params, nu * grid.x, y), odd_sector=True)


def _solve_branch(params, grid, y, lam, nu, tol, max_iter=60):
    """Damped Newton for M = 2M(Q), E = 2E(Q) with the scaling Jacobian."""
    p = params.p
    gs = ground_state_norms(GroundStateParams(p, 1.0))
    m_t, e_t = 2.0 * gs["mass"], 2.0 * gs["energy"]

    def residual(lam, nu):
        m, t, pot = norms(_scaled_pair(params, grid, y, lam, nu), p)
        e = 0.5 * t - pot / (p + 1.0)
        return np.array([m / m_t - 1.0, e / e_t - 1.0]), (m, t, pot)

    r, (m, t, pot) = residual(lam, nu)
    for it in range(1, max_iter + 1):
        if np.max(np.abs(r)) < tol:
            return lam, nu, it - 1
        jm = np.array([2.0 * m / lam, -m / nu]) / m_t
        jt = np.array([2.0 * t / lam, t / nu])
        jp = np.array([(p + 1.0) * pot / lam, -pot / nu])
        je = (0.5 * jt - jp / (p + 1.0)) / e_t
        step = np.linalg.solve(np.array([jm, je]), r)
        damp = 1.0
        while damp > 1e-4:
            nl, nn = lam - damp * step[0], nu - damp * step[1]
            if nl > 0 and nn > 0:
                rn, parts = residual(nl, nn)
                if np.max(np.abs(rn)) < np.max(np.abs(r)):
                    break
            damp *= 0.5
        else:
            break
        lam, nu, r, (m, t, pot) = nl, nn, rn, parts
    if np.max(np.abs(r)) < tol:
        return lam, nu, max_iter
    raise NoThresholdSolution(f"Newton stalled at residual {np.max(np.abs(r)):.3e}")


def make_threshold_data(spec: ThresholdDataSpec, params: GroundStateParams, grid: Grid) -> ThresholdData:
    """Threshold data lambda R_y Q(nu x) with M = 2M(Q), E = 2E(Q) and the requested K sign."""
    if params.omega != 1.0:
        raise ValueError("threshold data are built at omega = 1")
    guesses = [(spec.lambda0, spec.nu0), (spec.lambda0, 2.0 - spec.nu0)]
    want_pos = spec.k_sign_target is KSign.POSITIVE
    signs, failures = [], []
    for lam0, nu0 in guesses:
        if nu0 <= 0:
            continue
        try:
            lam, nu, its = _solve_branch(params, grid, spec.y, lam0, nu0, spec.newton_tol)
        except (NoThresholdSolution, np.linalg.LinAlgError) as exc:
            failures.append(str(exc))
            continue
        f = _scaled_pair(params, grid, spec.y, lam, nu)
        k = virial_K(f, params.p)
        signs.append(k > 0)
        if (k > 0) == want_pos:
            if spec.amplitude_scale != 1.0:
                f = f * spec.amplitude_scale
                lam *= spec.amplitude_scale
            det = classify_threshold_detail(f, params, tol=max(10 * spec.newton_tol, 1e-9))
            rep = det.report
            gs = ground_state_norms(params)
            return ThresholdData(
                field=f,
                lam=lam,
                nu=nu,
                virial_K=rep.virial_K,
                level_ratio=det.level_ratio,
                mass_ratio=rep.mass / (2.0 * gs["mass"]),
                energy_ratio=rep.energy / (2.0 * gs["energy"]),
                newton_iters=its,
                category=det.category,
            )
    if not signs:
        raise NoThresholdSolution("; ".join(failures) or "no branch converged")
    raise KSignUnavailable(
        f"only K {'> 0' if signs[0] else '< 0'} threshold data found at y={spec.y}"
    )


# --- dichotomy ------------------------------------------------------------------------

class Verdict(str, enum.Enum):
    SCATTERED = "Scattered"
    BLEW_UP = "BlewUp"
    UNDECIDED = "Undecided"


@dataclass(frozen=True)
class ClassifierConfig:
    decay_threshold: float = -0.05
    shrink_factor: float = 0.5
    n_windows: int = 2
    decay_window_start: float = 0.25
    strichartz_window_start: float = 1.0 / 3.0

    def __post_init__(self):
        if self.n_windows < 2:
            raise ValueError("classifier.n_windows must be at least 2")
        if not 0 < self.shrink_factor <= 1:
            raise ValueError("classifier.shrink_factor must lie in (0, 1]")
        if not 0 <= self.decay_window_start < 1:
            raise ValueError("classifier.decay_window_start must lie in [0, 1)")
        if not 0 <= self.strichartz_window_start < 1:
            raise ValueError("classifier.strichartz_window_start must lie in [0, 1)")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class ClassificationResult:
    verdict: Verdict
    termination: Termination
    reason: str
    decay_exponent: float
    window_increments: list[float]
    shrink_ratios: list[float]
    k_initial: float
    k_sign_persistent: bool
    virial_monotone: bool | None
    gradient_growth: float
    t_final: float
    data: ThresholdData | None = field(default=None, repr=False)
    record: TrajectoryRecord | None = field(default=None, repr=False)

    def summary(self) -> dict:
        d = {
            "verdict": self.verdict.value,
            "termination": self.termination.value,
            "reason": self.reason,
            "decay_exponent": self.decay_exponent,
            "window_increments": self.window_increments,
            "shrink_ratios": self.shrink_ratios,
            "k_initial": self.k_initial,
            "k_sign_persistent": self.k_sign_persistent,
            "virial_monotone": self.virial_monotone,
            "gradient_growth": self.gradient_growth,
            "t_final": self.t_final,
        }
        if self.data is not None:
            d.update(
                lam=self.data.lam,
                nu=self.data.nu,
                level_ratio=self.data.level_ratio,
                threshold_category=self.data.category.value,
            )
        return d


def classify_record(
    rec: TrajectoryRecord, cls: ClassifierConfig, t_max: float, energy_tol: float = 1e-3
) -> ClassificationResult:
    """Verdict from a finished trajectory.

    The virial monotonicity check only uses records whose relative energy
    drift is within energy_tol; the step that trips blow-up detection is
    typically already under-resolved.
    """
    ks = rec.series("virial_K")
    k0 = float(ks[0])
    persistent = bool(np.all(np.sign(ks) == np.sign(k0))) if k0 != 0 else False
    growth = rec.final_gradient / rec.initial_gradient if rec.initial_gradient else math.nan
    monotone = None
    if k0 < 0:
        e = rec.series("energy")
        resolved = np.abs(e / e[0] - 1.0) <= energy_tol
        jp = rec.J_prime[resolved]
        # J'' = 8K < 0: J' decreases and J' < 0 for t > 0 (J' > 0 backwards in time)
        monotone = bool(np.all(np.diff(jp) < 0) and np.all(jp[1:] < 0))
    decay, incs, ratios = math.nan, [], []
    if rec.termination is Termination.REACHED_TMAX:
        try:
            decay = dispersive_decay_metrics(rec, (cls.decay_window_start * t_max, t_max)).decay_exponent
        except ValueError:
            decay = math.nan
        edges = np.linspace(cls.strichartz_window_start * t_max, t_max, cls.n_windows + 1)
        cum = rec.strichartz_cumulative
        vals = np.interp(edges, rec.times, cum)
        incs = [float(b - a) for a, b in zip(vals, vals[1:])]
        ratios = [b / a if a > 0 else math.inf for a, b in zip(incs, incs[1:])]
    if rec.termination is Termination.BLOWUP:
        verdict = Verdict.BLEW_UP
    elif (
        rec.termination is Termination.REACHED_TMAX
        and decay < cls.decay_threshold
        and ratios
        and all(r < cls.shrink_factor for r in ratios)
    ):
        verdict = Verdict.SCATTERED
    else:
        verdict = Verdict.UNDECIDED
    reason = rec.termination_reason
    if verdict is Verdict.UNDECIDED and rec.termination is Termination.REACHED_TMAX:
        reason = f"decay exponent {decay:.3f}, window ratios {ratios}"
    return ClassificationResult(
        verdict=verdict,
        termination=rec.termination,
        reason=reason,
        decay_exponent=decay,
        window_increments=incs,
        shrink_ratios=ratios,
        k_initial=k0,
        k_sign_persistent=persistent,
        virial_monotone=monotone,
        gradient_growth=growth,
        t_final=float(rec.times[-1]),
        record=rec,
    )


def run_dichotomy(
    spec: ThresholdDataSpec,
    params: GroundStateParams,
    grid: Grid,
    evolve_cfg: EvolveConfig,
    cls: ClassifierConfig | None = None,
) -> ClassificationResult:
    """Build threshold data, evolve, and classify as Scattered / BlewUp / Undecided."""
    cls = cls or ClassifierConfig()
    data = make_threshold_data(spec, params, grid)
    rec = evolve(data.field, evolve_cfg, params)
    res = classify_record(rec, cls, evolve_cfg.t_max, evolve_cfg.conservation_tol)
    res.data = data
    return res


# --- virial audit ------------------------------------------------------------------------

class SnapshotSpacingError(ValueError):
    pass


@dataclass
class VirialAudit:
    R: float
    times: np.ndarray
    J_R: np.ndarray
    J_R_prime: np.ndarray
    F_R: np.ndarray
    K: np.ndarray
    A_R: np.ndarray
    fd_second: np.ndarray
    localized_rel_error: float
    full_rel_error: float
    static_translate: float
    static_pair: dict
    A_R_by_R: dict

    def rows(self):
        for i, t in enumerate(self.times):
            yield {
                "t": float(t),
                "J_R": float(self.J_R[i]),
                "J_R_prime": float(self.J_R_prime[i]),
                "F_R": float(self.F_R[i]),
                "eight_K": 8.0 * float(self.K[i]),
                "A_R": float(self.A_R[i]),
                "fd_J_R_second": float(self.fd_second[i]),
            }


def full_virial_error(rec: TrajectoryRecord) -> float:
    """max |dJ'/dt - 8K| / max |8K| over interior records (central differences)."""
    t = rec.times
    jp = rec.J_prime
    k8 = 8.0 * rec.series("virial_K")
    d = (jp[2:] - jp[:-2]) / (t[2:] - t[:-2])
    return float(np.max(np.abs(d - k8[1:-1])) / np.max(np.abs(k8[1:-1])))


def virial_audit(
    rec: TrajectoryRecord,
    R: float,
    R_list=(5.0, 10.0, 20.0, 40.0),
    static_y: float = 6.0,
    max_spacing: float = 0.05,
) -> VirialAudit:
    """Localized virial identity J_R'' = 8K + A_R on snapshots plus static checks."""
    snaps = rec.snapshot_fields()
    if len(snaps) < 3:
        raise SnapshotSpacingError("virial audit needs at least 3 snapshots")
    times = np.array([t for t, _ in snaps])
    if np.max(np.diff(times)) > max_spacing:
        raise SnapshotSpacingError(
            f"snapshot spacing {np.max(np.diff(times)):.3g} exceeds {max_spacing} for second differences"
        )
    p = rec.params.p
    jr = np.array([localized_variance(f, R) for _, f in snaps])
    jrp = np.array([localized_variance_derivative(f, R) for _, f in snaps])
    fr = np.array([localized_virial_F(f, R, p) for _, f in snaps])
    kk = np.array([virial_K(f, p) for _, f in snaps])
    ar = fr - 8.0 * kk
    fd = np.full_like(jrp, np.nan)
    fd[1:-1] = (jrp[2:] - jrp[:-2]) / (times[2:] - times[:-2])
    inner = slice(1, -1)
    scale = np.abs(8.0 * kk[inner]) + np.abs(ar[inner]) + 1e-12
    loc_err = float(np.max(np.abs(fd[inner] - fr[inner]) / scale))

    params = rec.params
    g = rec.grid
    t_field = Field(g, np.exp(0.7j) * translated(params, g.x, static_y))
    static_t = localized_virial_F(t_field, R, p)
    ys = [4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0]
    fp = [abs(localized_virial_F(Field(g, pair(params, g.x, y)), max(R, 2 * max(ys)), p)) for y in ys]
    slope = float(np.polyfit(ys, np.log(np.array(fp) / (1.0 + np.array(ys))), 1)[0])
    last = snaps[-1][1]
    by_r = {float(r): float(localized_virial_A(last, r, p)) for r in R_list}
    return VirialAudit(
        R=R,
        times=times,
        J_R=jr,
        J_R_prime=jrp,
        F_R=fr,
        K=kk,
        A_R=ar,
        fd_second=fd,
        localized_rel_error=loc_err,
        full_rel_error=full_virial_error(rec),
        static_translate=static_t,
        static_pair={"y": ys, "abs_F_R": fp, "slope_with_prefactor": slope},
        A_R_by_R=by_r,
    )


# --- discriminant inequality --------------------------------------------------------------

@dataclass(frozen=True)
class Weight:
    """Virial weight for the discriminant inequality: FullX2 (R=None) or localized with radius R."""

    R: float | None = None

    @classmethod
    def full(cls) -> "Weight":
        return cls(None)

    @classmethod
    def localized(cls, R: float) -> "Weight":
        if not R > 0:
            raise ValueError("localized weight needs R > 0")
        return cls(float(R))

    def derivative(self, x: np.ndarray) -> np.ndarray:
        if self.R is None:
            return 2.0 * x
        return self.R * dphi(x / self.R)

    @property
    def name(self) -> str:
        return "FullX2" if self.R is None else f"LocalizedR({self.R:g})"


@dataclass(frozen=True)
class DiscriminantResult:
    lhs_sq: float
    rhs: float
    passed: bool
    margin: float


def blowup_inequality_check(f: Field, weight: Weight, params: GroundStateParams) -> DiscriminantResult:
    """|Im int phi' f' conj(f)|^2 <= |phi' f|^2 (|f'|^2 - (|f|_{p+1}^{p+1} / (C_odd |f|_2^{(p+3)/2}))^{4/(p-1)})."""
    if not f.is_odd(1e-10):
        raise ValueError("discriminant inequality is stated for odd fields; even component present")
    p = params.p
    g = f.grid
    dphi_x = weight.derivative(g.x)
    u = f.values
    du = f.deriv()
    lhs = float(g.integrate(dphi_x * np.imag(du * np.conj(u))))
    wf = float(g.integrate(dphi_x**2 * np.abs(u) ** 2))
    mass, kin, pot = norms(f, p)
    _, c_odd = gn_constants(params)
    gn_term = (pot / (c_odd * mass ** ((p + 3.0) / 4.0))) ** (4.0 / (p - 1.0))
    rhs = wf * (kin - gn_term)
    scale = wf * kin
    lhs_sq = lhs * lhs
    return DiscriminantResult(lhs_sq, rhs, lhs_sq <= rhs + 1e-8 * scale, (rhs - lhs_sq) / scale if scale else 0.0)


def random_odd_field(grid: Grid, rng: np.random.Generator) -> Field:
    """Odd field from random packets: random centres, widths, boosts, chirps and phases,
    or a random band-limited spectrum under a Gaussian envelope."""
    x = grid.x
    if rng.random() < 0.5:
        v = np.zeros_like(x, dtype=complex)
        for _ in range(int(rng.integers(1, 5))):
            c = rng.uniform(0.5, 10.0)
            w = rng.uniform(0.4, 3.0)
            amp = rng.normal() + 1j * rng.normal()
            boost = rng.uniform(-3.0, 3.0)
            chirp = rng.uniform(-0.5, 0.5)
            v += amp * np.exp(-((x - c) / w) ** 2 + 1j * (boost * x + chirp * (x - c) ** 2))
    else:
        kc = rng.uniform(1.0, 6.0)
        spec = (rng.normal(size=x.size) + 1j * rng.normal(size=x.size)) * np.exp(-(grid.k / kc) ** 2)
        v = np.fft.ifft(spec) * np.exp(-(x / rng.uniform(3.0, 12.0)) ** 2)
    v = v * rng.uniform(0.1, 3.0) / max(float(np.max(np.abs(v))), 1e-300)
    return Field(grid, v, odd_sector=True)
