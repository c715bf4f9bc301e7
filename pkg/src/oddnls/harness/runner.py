"""Experiment dispatch: each runner returns rows, a summary and a status code."""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from ..evolve import EvolveConfig, dump_field
from ..functionals import minimizing_sequence_demo
from ..grid import Field, Grid
from ..linearized import (
    ALL_CONSTRAINTS,
    Constraints,
    QuadraticFormContext,
    coercivity_minimum,
)
from ..modulation import (
    InsufficientSpread,
    audit_parameter_estimates,
    fit_modulation,
)
from ..soliton import GroundStateParams, glued, log_overlap_integral, overlap_exponent, pair
from .config import Experiment, ExperimentConfig
from .experiments import (
    KSign,
    KSignUnavailable,
    NoThresholdSolution,
    ThresholdDataSpec,
    Verdict,
    Weight,
    blowup_inequality_check,
    make_threshold_data,
    random_odd_field,
    run_dichotomy,
    virial_audit,
)

EXIT_PASS = 0
EXIT_PROPERTY_FAILURE = 2
EXIT_UNDECIDED = 3
EXIT_CONFIG_ERROR = 4

THREADS_ENV = "ODDNLS_THREADS"


def thread_count() -> int:
    raw = os.environ.get(THREADS_ENV)
    if raw:
        try:
            n = int(raw)
        except ValueError:
            raise ValueError(f"{THREADS_ENV} must be a positive integer, got {raw!r}") from None
        if n < 1:
            raise ValueError(f"{THREADS_ENV} must be a positive integer, got {raw!r}")
        return n
    return os.cpu_count() or 1


def parallel_map(fn, items) -> list:
    """Map over items on the configured worker threads; output order follows input order."""
    items = list(items)
    n = min(thread_count(), max(len(items), 1))
    if n == 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


@dataclass
class RunOutcome:
    experiment: str
    status: int
    rows: list[dict] = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    checks: dict = field(default_factory=dict)
    artifacts: dict = field(default_factory=dict)

    @staticmethod
    def from_checks(experiment: str, rows, summary, checks, undecided: bool = False) -> "RunOutcome":
        if undecided:
            status = EXIT_UNDECIDED
        else:
            status = EXIT_PASS if all(checks.values()) else EXIT_PROPERTY_FAILURE
        return RunOutcome(experiment, status, rows, summary, {k: bool(v) for k, v in checks.items()})


# --- dichotomy ------------------------------------------------------------------------------

def run_dichotomy_experiment(cfg: ExperimentConfig, out_dir=None, dump_fields: bool = False) -> RunOutcome:
    spec = cfg.data_spec
    try:
        res = run_dichotomy(spec, cfg.params, cfg.grid, cfg.evolve, cfg.classifier)
    except (NoThresholdSolution, KSignUnavailable) as exc:
        return RunOutcome("dichotomy", EXIT_UNDECIDED, [], {"error": str(exc)}, {})
    expected = Verdict.SCATTERED if spec.k_sign_target is KSign.POSITIVE else Verdict.BLEW_UP
    summary = res.summary()
    summary["expected_verdict"] = expected.value
    summary["sponge_used"] = res.record.sponge_used
    summary["absorbed_mass"] = res.record.absorbed_mass
    checks = {
        "verdict_matches": res.verdict is expected,
        "k_sign_persistent": res.k_sign_persistent,
    }
    if res.virial_monotone is not None:
        checks["virial_monotone"] = res.virial_monotone
    row = {k: (v if not isinstance(v, list) else ";".join(f"{x:.6e}" for x in v)) for k, v in summary.items()}
    out = RunOutcome.from_checks("dichotomy", [row], summary, checks, undecided=res.verdict is Verdict.UNDECIDED)
    if out_dir is not None:
        res.record.write_csv(os.path.join(out_dir, "trajectory.csv"))
        out.artifacts["trajectory"] = "trajectory.csv"
        if dump_fields:
            dump_field(os.path.join(out_dir, "u0.bin"), res.data.field, 0.0)
            out.artifacts["field_dump"] = "u0.bin"
    out.summary["record_manifest"] = res.record.manifest()
    return out


# --- minimizing sequence ------------------------------------------------------------------------

def run_min_seq(cfg: ExperimentConfig) -> RunOutcome:
    ys = cfg.min_seq.y_list
    rows = minimizing_sequence_demo(cfg.params, ys)
    data = [
        {"y": r.y, "lambda": r.lam, "action": r.action, "action_ratio": r.action_ratio, "virial_K": r.virial_K}
        for r in rows
    ]
    ratios = [r.action_ratio for r in rows]
    checks = {
        "ratio_at_least_one": all(r >= 1.0 - 1e-12 for r in ratios),
        "decreasing_in_y": all(b < a for a, b in zip(ratios, ratios[1:])),
        "K_zero": all(abs(r.virial_K) <= 1e-9 for r in rows),
    }
    if 12.0 in ys:
        checks["ratio_band_y12"] = 1.0 <= ratios[list(ys).index(12.0)] <= 1.0 + 1e-4
    return RunOutcome.from_checks("min-seq", data, {"ratios": ratios}, checks)


# --- overlap asymptotics ---------------------------------------------------------------------------

OVERLAP_PAIRS = (
    (1.0, 1.0, False),
    (2.0, 2.0, False),
    (1.0, 2.0, False),
    (0.5, 1.5, False),
    (1.0, 3.0, False),
    (1.0, 1.0, True),
    (1.0, 2.0, True),
    (2.0, 1.0, True),
    (3.0, 1.0, True),
)


def overlap_slope(params: GroundStateParams, alpha, beta, half_line, ys) -> tuple[float, float, list]:
    """(fitted slope, expected slope, log integrals); equal powers divide out the (1+y) prefactor."""
    logs = [log_overlap_integral(params, alpha, beta, y, half_line) for y in ys]
    adj = np.array(logs)
    if alpha == beta:
        adj = adj - np.log1p(np.asarray(ys))
    slope = float(np.polyfit(ys, adj, 1)[0])
    expected = -overlap_exponent(alpha, beta, half_line) * params.decay
    return slope, expected, logs


def run_overlap(cfg: ExperimentConfig) -> RunOutcome:
    o = cfg.overlap
    ys = np.linspace(o.y_min, o.y_max, o.n_y)
    rows, checks, fits = [], {}, []

    def job(pair_):
        return pair_, overlap_slope(cfg.params, pair_[0], pair_[1], pair_[2], ys)

    for (a, b, half), (slope, expected, logs) in parallel_map(job, OVERLAP_PAIRS):
        rel = abs(slope / expected - 1.0)
        key = f"alpha={a:g},beta={b:g},{'half' if half else 'full'}"
        checks[key] = rel < o.tolerance
        fits.append({"pair": key, "slope": slope, "expected": expected, "rel_error": rel})
        for y, lv in zip(ys, logs):
            rows.append(
                {"alpha": a, "beta": b, "half_line": half, "y": float(y), "integral": math.exp(lv),
                 "fitted_slope": slope, "expected_slope": expected}
            )
    return RunOutcome.from_checks("overlap-asymptotics", rows, {"fits": fits}, checks)


# --- coercivity ------------------------------------------------------------------------------------

def run_coercivity(cfg: ExperimentConfig) -> RunOutcome:
    c = cfg.coercivity
    params = GroundStateParams(cfg.params.p, 1.0)
    rows = []
    values = {}
    for n in (c.n_points, 2 * c.n_points):
        ctx = QuadraticFormContext(params, Grid(n, c.half_length))
        for drop in ((),) + tuple((d,) for d in ALL_CONSTRAINTS):
            if n != c.n_points and drop:
                continue
            v = coercivity_minimum(ctx, Constraints.PLAIN, drop)
            values[(n, drop)] = v
            rows.append({"constraints": "Plain", "n_points": n, "half_length": c.half_length,
                         "y": 0.0, "R": "", "dropped": "+".join(drop), "c_min": v})
    half = max(c.half_length, c.y + 25.0)
    ctx = QuadraticFormContext(params, Grid(c.n_points, half), c.y, c.R)
    cut = coercivity_minimum(ctx, Constraints.CUTOFF)
    rows.append({"constraints": "Cutoff", "n_points": c.n_points, "half_length": half, "y": c.y,
                 "R": c.R, "dropped": "", "c_min": cut})
    base, fine = values[(c.n_points, ())], values[(2 * c.n_points, ())]
    checks = {
        "plain_positive": base > 0,
        "plain_grid_stable": abs(fine - base) / abs(base) < 0.05,
        "cutoff_nonnegative": cut >= -1e-6,
    }
    for d in ALL_CONSTRAINTS:
        checks[f"drop_{d}_degenerate"] = values[(c.n_points, (d,))] <= 1e-6
    summary = {"c_min": base, "c_min_refined": fine, "cutoff_min": cut}
    return RunOutcome.from_checks("coercivity", rows, summary, checks)


# --- modulation audit --------------------------------------------------------------------------------

def modulation_grid(cfg: ExperimentConfig) -> Grid:
    return Grid(4096, 60.0)


def run_modulation(cfg: ExperimentConfig) -> RunOutcome:
    m = cfg.modulation
    params = GroundStateParams(cfg.params.p, 1.0)
    g = modulation_grid(cfg)
    x = g.x
    R = m.R
    y0 = max(9.0, R + 2.0)
    exact = fit_modulation(Field(g, np.exp(0.3j) * pair(params, x, y0), odd_sector=True), R, params)
    planted = Field(g, np.exp(0.3j) * (pair(params, x, y0) + 0.01 * glued(params, x, R, y0)), odd_sector=True)
    pf = fit_modulation(planted, R, params)
    shifted = fit_modulation(planted * np.exp(2.0j), R, params)
    gauge = math.remainder(shifted.theta_tilde - pf.theta_tilde - 2.0, 2.0 * math.pi)

    ys = np.arange(m.y_min, m.y_max + 1e-9, m.y_step)
    specs = [
        ThresholdDataSpec(y=float(y), nu0=nu0, k_sign_target=s)
        for y in ys
        for nu0, s in ((0.95, KSign.POSITIVE), (1.05, KSign.NEGATIVE))
    ]

    def job(spec):
        try:
            data = make_threshold_data(spec, params, g)
        except (NoThresholdSolution, KSignUnavailable):
            return None
        return fit_modulation(data.field, R, params)

    fits = [f for f in parallel_map(job, specs) if f is not None]
    rows = [dict(f.to_dict(), ortho_residuals=";".join(f"{r:.3e}" for r in f.ortho_residuals)) for f in fits]
    checks = {
        "exact_recovery": abs(exact.theta_tilde - 0.3) < 1e-6 and abs(exact.y - y0) < 1e-6 and abs(exact.rho) < 1e-6,
        "planted_rho": abs(pf.rho - 0.01) < 1e-6 and pf.h_H1 < 1e-8,
        "gauge_covariance": abs(gauge) < 1e-9 and abs(shifted.y - pf.y) < 1e-9 and abs(shifted.rho - pf.rho) < 1e-9,
    }
    summary = {"n_fits": len(fits), "gauge_defect": gauge}
    try:
        audit = audit_parameter_estimates(fits)
    except InsufficientSpread as exc:
        summary["audit_error"] = str(exc)
        checks["mu_spread"] = False
        return RunOutcome.from_checks("modulation-audit", rows, summary, checks)
    summary.update(
        rho_mu_slope=audit.rho_mu_slope,
        C_exp=audit.C_exp,
        C_exp_spread=audit.C_exp_spread,
        C_h=audit.C_h,
        ladder=audit.ladder,
    )
    checks["rho_mu_slope"] = abs(audit.rho_mu_slope - 1.0) <= 0.1
    return RunOutcome.from_checks("modulation-audit", rows, summary, checks)


# --- virial audit -----------------------------------------------------------------------------------

def run_virial(cfg: ExperimentConfig) -> RunOutcome:
    v = cfg.virial
    params = GroundStateParams(cfg.params.p, 1.0)
    data = make_threshold_data(replace(cfg.data_spec, amplitude_scale=1.0), params, cfg.grid)
    ecfg = EvolveConfig(
        dt_init=v.dt,
        dt_min=min(1e-9, v.dt / 10),
        t_max=v.t_max,
        record_every=v.snapshot_every,
        snapshot_every=v.snapshot_every,
    )
    from ..evolve import evolve

    rec = evolve(data.field, ecfg, params)
    audit = virial_audit(rec, v.R, v.R_list)
    rows = list(audit.rows())
    checks = {
        "full_virial": audit.full_rel_error < 1e-3,
        "localized_virial": audit.localized_rel_error < 1e-2,
        "static_translate": abs(audit.static_translate) < 1e-8,
        "static_pair_slope": abs(audit.static_pair["slope_with_prefactor"] + 2.0) < 0.1,
    }
    summary = {
        "full_rel_error": audit.full_rel_error,
        "localized_rel_error": audit.localized_rel_error,
        "static_translate": audit.static_translate,
        "static_pair_slope": audit.static_pair["slope_with_prefactor"],
        "A_R_by_R": audit.A_R_by_R,
        "termination": rec.termination.value,
    }
    return RunOutcome.from_checks("virial-audit", rows, summary, checks)


# --- discriminant inequality ---------------------------------------------------------------------------

def run_blowup_ineq(cfg: ExperimentConfig) -> RunOutcome:
    b = cfg.blowup_ineq
    params = cfg.params
    g = Grid(4096, 60.0)
    seeds = np.random.SeedSequence(cfg.seed).spawn(b.n_fields)

    def job(i):
        f = random_odd_field(g, np.random.default_rng(seeds[i]))
        return [
            (i, w.name, blowup_inequality_check(f, w, params))
            for w in (Weight.full(), Weight.localized(b.R))
        ]

    rows = []
    for batch in parallel_map(job, range(b.n_fields)):
        for i, name, r in batch:
            rows.append({"field": i, "weight": name, "lhs_sq": r.lhs_sq, "rhs": r.rhs,
                         "margin": r.margin, "passed": r.passed})
    passed = sum(r["passed"] for r in rows)
    summary = {"n_checks": len(rows), "pass_rate": passed / len(rows), "min_margin": min(r["margin"] for r in rows)}
    return RunOutcome.from_checks("blowup-ineq", rows, summary, {"all_pass": passed == len(rows)})


# --- verify-all -----------------------------------------------------------------------------------------

def run_verify_all(cfg: ExperimentConfig, include_dynamics: bool = True) -> RunOutcome:
    runners = [run_min_seq, run_overlap, run_coercivity, run_modulation, run_virial, run_blowup_ineq]
    outcomes = [r(cfg) for r in runners]
    if include_dynamics:
        for sign, nu0 in ((KSign.POSITIVE, 0.95), (KSign.NEGATIVE, 1.05)):
            sub = replace(cfg, data_spec=replace(cfg.data_spec, k_sign_target=sign, nu0=nu0))
            o = run_dichotomy_experiment(sub)
            o.experiment = f"dichotomy-{sign.value}"
            outcomes.append(o)
    rows, checks = [], {}
    for o in outcomes:
        for k, v in sorted(o.checks.items()):
            rows.append({"experiment": o.experiment, "check": k, "passed": v})
            checks[f"{o.experiment}:{k}"] = v
    status = max((o.status for o in outcomes), default=EXIT_PASS)
    if any(o.status == EXIT_PROPERTY_FAILURE for o in outcomes):
        status = EXIT_PROPERTY_FAILURE
    summary = {o.experiment: o.status for o in outcomes}
    return RunOutcome("verify-all", status, rows, summary, checks)


RUNNERS = {
    Experiment.MINIMIZING_SEQUENCE: run_min_seq,
    Experiment.OVERLAP_ASYMPTOTICS: run_overlap,
    Experiment.COERCIVITY: run_coercivity,
    Experiment.MODULATION_AUDIT: run_modulation,
    Experiment.VIRIAL_AUDIT: run_virial,
    Experiment.BLOWUP_INEQUALITY: run_blowup_ineq,
}
