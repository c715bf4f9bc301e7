"""Modulation decomposition f = e^{i theta~}(R_y Q + rho G_{R,y} Q + h) near the soliton pair."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .functionals import compute_functionals
from .grid import Field
from .soliton import (
    GroundStateParams,
    chi_plus,
    dchi_plus,
    eval_d2Q,
    eval_dQ,
    eval_Q,
    glued,
    ground_state_norms,
    pair,
)


class ModulationError(ValueError):
    pass


class NoConvergence(ModulationError):
    pass


class YBelowR(ModulationError):
    pass


class InsufficientSpread(ModulationError):
    pass


class LeavesWindow(ModulationError):
    pass


def default_mu0(params: GroundStateParams) -> float:
    return 0.1 * ground_state_norms(params)["kinetic"]


@dataclass(frozen=True)
class ModulationFit:
    theta_tilde: float
    y: float
    rho: float
    g: Field = field(repr=False)
    h: Field = field(repr=False)
    ortho_residuals: tuple[float, float, float]
    newton_iters: int
    mu_value: float
    R: float

    @property
    def h_H1(self) -> float:
        return _h1(self.h)

    @property
    def g_H1(self) -> float:
        return _h1(self.g)

    @property
    def g_L2(self) -> float:
        return math.sqrt(float(self.g.grid.integrate(np.abs(self.g.values) ** 2)))

    def to_dict(self) -> dict:
        return {
            "theta_tilde": self.theta_tilde,
            "y": self.y,
            "rho": self.rho,
            "R": self.R,
            "mu": self.mu_value,
            "h_H1": self.h_H1,
            "g_H1": self.g_H1,
            "ortho_residuals": list(self.ortho_residuals),
            "newton_iters": self.newton_iters,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _h1(f: Field) -> float:
    return math.sqrt(float(f.grid.integrate(np.abs(f.deriv()) ** 2 + np.abs(f.values) ** 2)))


def initial_guess(f: Field, params: GroundStateParams) -> tuple[float, float]:
    """y0 from the positive-side peak of |f|, theta0 from the phase of int_{x>0} f T_{y0} Q."""
    x = f.grid.x
    pos = x > 0
    a = np.where(pos, np.abs(f.values), 0.0)
    y0 = float(x[int(np.argmax(a))])
    proj = f.grid.integrate(np.where(pos, f.values * eval_Q(params, x - y0), 0.0))
    return float(np.angle(proj)), y0


def _conditions(f: Field, params: GroundStateParams, R: float, theta: float, y: float):
    """(J1, J2) and their Jacobian in (theta, y)."""
    x = f.grid.x
    integ = f.grid.integrate
    c, dc = chi_plus(x, R), dchi_plus(x, R)
    t0, t1, t2 = eval_Q(params, x - y), eval_dQ(params, x - y), eval_d2Q(params, x - y)
    ft = np.exp(-1j * theta) * f.values
    fr, fi = ft.real, ft.imag
    ry = pair(params, x, y)
    w = dc * t0 + c * t1
    dw = -(dc * t1 + c * t2)
    dry = -(t1 + eval_dQ(params, x + y))
    j1 = integ(fi * c * t0)
    j2 = integ((fr - ry) * w)
    jac = np.array(
        [
            [-integ(fr * c * t0), -integ(fi * c * t1)],
            [integ(fi * w), integ(-dry * w + (fr - ry) * dw)],
        ]
    )
    return np.array([j1, j2]), jac


def fit_modulation(
    f: Field,
    R: float,
    params: GroundStateParams,
    guess: tuple[float, float] | None = None,
    tol: float = 1e-10,
    max_iter: int = 50,
) -> ModulationFit:
    """Solve the orthogonality conditions for (theta~, y), then rho and h.

    Newton on (J1, J2) with the exact Jacobian; when that step fails to
    reduce the residual the leading diagonal diag(-|Q|^2, |Q'|^2) is used
    as a preconditioned fallback step.
    """
    if not f.is_odd(1e-10):
        raise ModulationError("fit_modulation needs an odd field")
    if guess is None:
        guess = initial_guess(f, params)
    theta, y = float(guess[0]), float(guess[1])
    gs = ground_state_norms(params)
    lead = np.array([-gs["mass"], gs["kinetic"]])

    res, jac = _conditions(f, params, R, theta, y)
    it = 0
    while np.max(np.abs(res)) >= tol:
        if it >= max_iter:
            raise NoConvergence(f"modulation Newton stalled at |J|={np.max(np.abs(res)):.3e}")
        it += 1
        try:
            delta = np.linalg.solve(jac, res)
        except np.linalg.LinAlgError:
            delta = res / lead
        cand = _conditions(f, params, R, theta - delta[0], y - delta[1])
        if np.max(np.abs(cand[0])) > np.max(np.abs(res)):
            delta = res / lead
            cand = _conditions(f, params, R, theta - delta[0], y - delta[1])
        theta, y = theta - delta[0], y - delta[1]
        res, jac = cand
    if y <= R:
        raise YBelowR(f"fitted y={y:.4f} is not above R={R}")

    g_vals = np.exp(-1j * theta) * f.values - pair(params, f.grid.x, y)
    g = Field(f.grid, g_vals, odd_sector=True)
    x = f.grid.x
    c = chi_plus(x, R)
    ty = eval_Q(params, x - y)
    p = params.p
    rho = float(f.grid.integrate(g_vals.real * c * ty**p) / f.grid.integrate(c**2 * ty ** (p + 1.0)))
    h = Field(f.grid, g_vals - rho * glued(params, x, R, y), odd_sector=True)
    theta = math.remainder(theta, 2.0 * math.pi)
    return ModulationFit(
        theta_tilde=theta,
        y=y,
        rho=rho,
        g=g,
        h=h,
        ortho_residuals=ortho_residuals(h, params, R, y),
        newton_iters=it,
        mu_value=compute_functionals(f, params, check=False).mu,
        R=R,
    )


def ortho_residuals(h: Field, params: GroundStateParams, R: float, y: float) -> tuple[float, float, float]:
    x = h.grid.x
    c = chi_plus(x, R)
    ty = eval_Q(params, x - y)
    w = dchi_plus(x, R) * ty + c * eval_dQ(params, x - y)
    v = h.values
    integ = h.grid.integrate
    return (
        float(integ(v.imag * c * ty)),
        float(integ(v.real * w)),
        float(integ(v.real * c * ty**params.p)),
    )


# --- audits ------------------------------------------------------------------------

@dataclass
class EstimateAudit:
    rows: list[dict]
    rho_mu_slope: float
    C_exp: float
    C_exp_spread: float
    C_h: float
    ladder: dict

    COLUMNS = ("y", "theta", "rho", "mu", "h_H1", "g_H1", "exp_m2y_over_mu2", "h2_over_mu2")

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.COLUMNS)
            for r in self.rows:
                w.writerow([r[c] for c in self.COLUMNS])


def audit_parameter_estimates(fits: list[ModulationFit]) -> EstimateAudit:
    """Scatter data and fitted constants for |rho| ~ |mu| and e^{-2y} + |h|^2 <~ mu^2."""
    mus = np.array([abs(f.mu_value) for f in fits])
    if len(fits) < 2 or not np.all(mus > 0) or mus.max() / mus.min() < 10.0:
        raise InsufficientSpread("mu values must span at least one decade")
    rhos = np.array([abs(f.rho) for f in fits])
    ys = np.array([f.y for f in fits])
    hs = np.array([f.h_H1 for f in fits])
    gs_h1 = np.array([f.g_H1 for f in fits])
    gs_l2 = np.array([f.g_L2 for f in fits])
    slope = float(np.polyfit(np.log(mus), np.log(rhos), 1)[0])
    ce = np.exp(-2.0 * ys) / mus**2
    ch = hs**2 / mus**2
    rows = [
        {
            "y": f.y,
            "theta": f.theta_tilde,
            "rho": f.rho,
            "mu": f.mu_value,
            "h_H1": hs[i],
            "g_H1": gs_h1[i],
            "exp_m2y_over_mu2": ce[i],
            "h2_over_mu2": ch[i],
        }
        for i, f in enumerate(fits)
    ]
    ladder = {
        "rho_over_gL2": float(np.max(rhos / gs_l2)),
        "gH1_over_rho_plus_h": float(np.max(gs_h1 / (rhos + hs))),
        "h_over_gH1": float(np.max(hs / gs_h1)),
    }
    return EstimateAudit(
        rows=rows,
        rho_mu_slope=slope,
        C_exp=float(ce.max()),
        C_exp_spread=float(ce.max() / ce.min()),
        C_h=float(ch.max()),
        ladder=ladder,
    )


@dataclass
class DerivativeAudit:
    times: np.ndarray
    theta: np.ndarray
    y: np.ndarray
    rho: np.ndarray
    mu: np.ndarray
    h_H1: np.ndarray
    rate: np.ndarray
    ratio: np.ndarray
    max_ratio: float
    trend_slope: float
    halving_change: float

    COLUMNS = ("t", "theta", "y", "rho", "mu", "h_H1", "rate", "ratio")

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.COLUMNS)
            for i in range(len(self.times)):
                w.writerow(
                    [self.times[i], self.theta[i], self.y[i], self.rho[i], self.mu[i],
                     self.h_H1[i], self.rate[i], self.ratio[i]]
                )


def _rates(t, theta, y, rho):
    return np.abs(np.gradient(theta, t)) + np.abs(np.gradient(y, t)) + np.abs(np.gradient(rho, t))


def audit_parameter_derivatives(
    times,
    fields: list[Field],
    R: float,
    params: GroundStateParams,
    mu0: float | None = None,
) -> DerivativeAudit:
    """Fit each snapshot, difference theta = theta~ - t, y, rho in time and compare with mu.

    The finite differences are repeated on every other snapshot; the
    relative change of the rates at shared times is reported as the
    step-halving check.
    """
    t = np.asarray(times, dtype=float)
    if len(t) < 5:
        raise ValueError("need at least 5 snapshots for derivative estimates")
    mu0 = default_mu0(params) if mu0 is None else mu0
    fits = []
    guess = None
    for f in fields:
        fit = fit_modulation(f, R, params, guess=guess)
        if abs(fit.mu_value) >= mu0:
            raise LeavesWindow(f"|mu|={abs(fit.mu_value):.3e} exceeds mu0={mu0:.3e}")
        fits.append(fit)
        guess = (fit.theta_tilde, fit.y)
    theta = np.unwrap([f.theta_tilde for f in fits]) - t
    y = np.array([f.y for f in fits])
    rho = np.array([f.rho for f in fits])
    mu = np.array([f.mu_value for f in fits])
    hs = np.array([f.h_H1 for f in fits])
    rate = _rates(t, theta, y, rho)
    ratio = rate / np.abs(mu)
    coarse = _rates(t[::2], theta[::2], y[::2], rho[::2])
    inner = slice(1, -1)
    fine_at = rate[::2][inner]
    scale = np.maximum(np.abs(fine_at), 1e-300)
    halving = float(np.max(np.abs(coarse[inner] - fine_at) / scale)) if len(fine_at) else math.nan
    amu = np.abs(mu)
    if amu.max() > amu.min() * 1.0001:
        trend = float(np.polyfit(np.log(amu), np.log(ratio), 1)[0])
    else:
        trend = 0.0
    return DerivativeAudit(t, theta, y, rho, mu, hs, rate, ratio, float(ratio.max()), trend, halving)


def audit_record_derivatives(rec, R: float, mu0: float | None = None) -> DerivativeAudit:
    """audit_parameter_derivatives on the snapshots stored in a TrajectoryRecord."""
    snaps = rec.snapshot_fields()
    if not snaps:
        raise ValueError("trajectory has no snapshots; set EvolveConfig.snapshot_every")
    times = [t for t, _ in snaps]
    return audit_parameter_derivatives(times, [f for _, f in snaps], R, rec.params, mu0)
