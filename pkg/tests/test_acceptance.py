"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

The lines are also collected and repeated in the terminal summary.
"""

import math
import warnings
from dataclasses import replace

import numpy as np
import pytest

from oddnls.evolve import EvolveConfig, Termination, evolve, step
from oddnls.functionals import gn_constants, gn_ratio
from oddnls.grid import Field, Grid
from oddnls.harness.config import parse_config
from oddnls.harness.experiments import KSign, Verdict, random_odd_field, run_dichotomy
from oddnls.harness.runner import (
    OVERLAP_PAIRS,
    overlap_slope,
    run_blowup_ineq,
    run_coercivity,
    run_min_seq,
    run_modulation,
    run_virial,
)
from oddnls.soliton import (
    GroundStateParams,
    ResolutionWarning,
    action_gap,
    elliptic_residual,
    even_pair_action_gap,
    fit_log_slope,
    ground_state_norms,
    pair,
)

RESULTS: dict[int, str] = {}


def report(n: int, name: str, ok: bool, detail: str) -> None:
    line = f"criterion {n:2d} [{'PASS' if ok else 'FAIL'}] {name}: {detail}"
    RESULTS[n] = line
    print(line)


P7 = GroundStateParams(7.0, 1.0)
CFG = parse_config({})


def test_c01_pohozaev():
    worst_ratio, worst_me = 0.0, 0.0
    for p in (5.5, 6.0, 7.0, 9.0):
        for w in (0.5, 1.0, 4.0):
            q = ground_state_norms(GroundStateParams(p, w))
            r = np.array([w * q["mass"] / (p + 3), q["kinetic"] / (p - 1), q["potential"] / (2 * (p + 1))])
            worst_ratio = max(worst_ratio, float(np.ptp(r) / r.mean()))
            target = 2 * (p + 3) / (p - 5)
            worst_me = max(worst_me, abs(w * q["mass"] / q["energy"] / target - 1))
    q7 = ground_state_norms(P7)
    at7 = abs(q7["mass"] / q7["energy"] - 10.0)
    ok = worst_ratio < 1e-8 and worst_me < 1e-8 and at7 < 1e-8
    report(1, "Pohozaev suite", ok,
           f"max ratio spread {worst_ratio:.1e}, max |wM/E / target - 1| {worst_me:.1e}, |M/E - 10| at p=7 {at7:.1e}")
    assert ok


def test_c02_elliptic_residual():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ResolutionWarning)
        ladder = {n: elliptic_residual(P7, Grid(n, 50.0)) for n in (512, 1024, 2048, 4096)}
    floor = 1e-11
    res = ladder[4096]
    ns = sorted(ladder)
    decreasing = all(ladder[b] < ladder[a] or ladder[a] < floor for a, b in zip(ns, ns[1:]))
    ok = res < 1e-8 and decreasing
    detail = ", ".join(f"N={n}: {v:.2e}" for n, v in ladder.items())
    report(2, "elliptic residual", ok, f"{detail} (decreasing down to the {floor:g} round-off floor)")
    assert ok


def test_c03_overlap_asymptotics():
    ys = np.linspace(4.0, 10.0, 13)
    good, parts = 0, []
    for a, b, half in OVERLAP_PAIRS:
        slope, expected, _ = overlap_slope(P7, a, b, half, ys)
        rel = abs(slope / expected - 1)
        good += rel < 0.05
        parts.append(f"({a:g},{b:g}{',half' if half else ''}) {rel:.3f}")
    ok = good >= 6
    report(3, "overlap asymptotics", ok, f"{good}/{len(OVERLAP_PAIRS)} pairs within 5%; rel errors " + "; ".join(parts))
    assert ok


def test_c04_action_gap():
    ys = np.linspace(4.0, 12.0, 17)
    gaps = np.array([action_gap(P7, y) for y in ys])
    mirror = np.array([even_pair_action_gap(P7, y) for y in ys])
    slope = fit_log_slope(ys, gaps)
    ok = bool(np.all(gaps > 0) and np.all(mirror < 0) and abs(slope + 2) <= 0.1)
    report(4, "odd-pair action gap", ok,
           f"min gap {gaps.min():.3e}, max mirror gap {mirror.max():.3e}, slope {slope:.4f}")
    assert ok


def test_c05_odd_gn_constant():
    g = Grid(8192, 60.0)
    _, c_odd = gn_constants(P7)
    r12 = gn_ratio(Field(g, pair(P7, g.x, 12.0), odd_sector=True)) / c_odd
    rng = np.random.default_rng(2024)
    grid = Grid(4096, 60.0)
    worst = max(gn_ratio(random_odd_field(grid, rng)) / c_odd for _ in range(100))
    ok = 0.99 <= r12 <= 1.0001 and worst <= 1 + 1e-3
    report(5, "odd GN constant", ok, f"ratio(R_12 Q)/C_odd = {r12:.8f}, max over 100 random odd fields {worst:.4f}")
    assert ok


def test_c06_coercivity():
    out = run_coercivity(CFG)
    s = out.summary
    drops = {k: v for k, v in out.checks.items() if k.startswith("drop_")}
    ok = out.status == 0
    report(6, "coercivity", ok,
           f"c_min {s['c_min']:.4f} (N={CFG.coercivity.n_points}), doubled {s['c_min_refined']:.4f}, "
           f"cutoff {s['cutoff_min']:.2e}, dropped-constraint checks {sum(drops.values())}/{len(drops)}")
    assert ok


def test_c07_conservation_virial_order():
    g = Grid(4096, 60.0)
    u0 = Field(g, np.exp(0.4j) * pair(P7, g.x, 20.0), odd_sector=True)
    rec = evolve(u0, EvolveConfig(t_max=2.0, dt_init=1e-4, record_every=0.1, adaptive=False), P7)
    m, e = rec.series("mass"), rec.series("energy")
    dm = float(np.max(np.abs(m / m[0] - 1)))
    de = float(np.max(np.abs(e / e[0] - 1)))

    vir = run_virial(CFG)

    small = Grid(1024, 30.0)
    v0 = Field(small, pair(P7, small.x, 4.0), odd_sector=True)
    finals = []
    for dt in (4e-3, 2e-3, 1e-3):
        v = v0
        for _ in range(int(round(0.5 / dt))):
            v = step(v, dt, P7)
        finals.append(v.values)
    ratio = float(np.linalg.norm(finals[0] - finals[1]) / np.linalg.norm(finals[1] - finals[2]))

    ok = (
        rec.termination is Termination.REACHED_TMAX
        and dm < 1e-9
        and de < 1e-9
        and vir.checks["full_virial"]
        and vir.checks["localized_virial"]
        and abs(ratio / 4 - 1) <= 0.1
    )
    report(7, "conservation, virial, order", ok,
           f"mass drift {dm:.1e}, energy drift {de:.1e}, full virial {vir.summary['full_rel_error']:.1e}, "
           f"localized virial {vir.summary['localized_rel_error']:.1e}, Strang ratio {ratio:.3f}")
    assert ok


def test_c08_modulation():
    out = run_modulation(CFG)
    s = out.summary
    ok = out.status == 0 and math.isfinite(s["C_exp"])
    report(8, "modulation recovery", ok,
           f"checks {sorted(k for k, v in out.checks.items() if v)}, rho-mu slope {s['rho_mu_slope']:.4f}, "
           f"C_exp {s['C_exp']:.3e} (spread {s['C_exp_spread']:.2f}), gauge defect {s['gauge_defect']:.1e}")
    assert ok


def _dichotomy(sign: KSign, n_points: int):
    spec = replace(CFG.data_spec, y=8.0, k_sign_target=sign, nu0=0.95 if sign is KSign.POSITIVE else 1.05)
    return run_dichotomy(spec, P7, Grid(n_points, 60.0), replace(CFG.evolve, t_max=40.0), CFG.classifier)


def _dichotomy_ok(res, sign: KSign) -> bool:
    if sign is KSign.POSITIVE:
        return res.verdict is Verdict.SCATTERED and res.decay_exponent < -0.05
    ks = res.record.series("virial_K")
    return res.verdict is Verdict.BLEW_UP and res.gradient_growth > 20 and bool(np.all(ks < 0))


def _describe(res) -> str:
    return (f"{res.verdict.value} at t={res.t_final:.3f}, decay {res.decay_exponent:.3f}, "
            f"grad growth {res.gradient_growth:.1f}, K0 {res.k_initial:.3e}")


@pytest.mark.slow
def test_c09_dichotomy():
    parts, ok = [], True
    for sign in (KSign.POSITIVE, KSign.NEGATIVE):
        verdicts = []
        for n in (8192, 16384):
            res = _dichotomy(sign, n)
            good = _dichotomy_ok(res, sign)
            ok &= good
            verdicts.append(res.verdict)
            parts.append(f"K {'>' if sign is KSign.POSITIVE else '<'} 0, N={n}: {_describe(res)}")
        ok &= verdicts[0] is verdicts[1]
    report(9, "threshold dichotomy", ok, "; ".join(parts))
    assert ok


def test_c10_discriminant_inequality():
    out = run_blowup_ineq(CFG)
    s = out.summary
    ok = out.status == 0 and s["pass_rate"] == 1.0
    report(10, "discriminant inequality", ok,
           f"{s['n_checks']} checks over {CFG.blowup_ineq.n_fields} fields, pass rate {s['pass_rate']:.3f}, "
           f"min margin {s['min_margin']:.3e}")
    assert ok


def test_c11_minimizing_sequence():
    out = run_min_seq(CFG)
    ratios = out.summary["ratios"]
    ok = out.status == 0 and out.checks.get("ratio_band_y12", False)
    k_max = max(abs(r["virial_K"]) for r in out.rows)
    report(11, "minimizing sequence", ok,
           f"ratios {', '.join(f'{r:.8f}' for r in ratios)} at y={list(CFG.min_seq.y_list)}, max |K| {k_max:.1e}")
    assert ok
