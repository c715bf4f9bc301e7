"""Strang split-step Fourier integrator for i u_t + u_xx + |u|^(p-1) u = 0."""

from __future__ import annotations

import enum
import json
import math
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .functionals import FunctionalReport, compute_functionals
from .grid import Field, Grid
from .soliton import GroundStateParams
from .virial import variance, variance_derivative


class Termination(str, enum.Enum):
    REACHED_TMAX = "ReachedTmax"
    BLOWUP = "BlowupDetected"
    UNRESOLVED = "Unresolved"


@dataclass(frozen=True)
class SpongeConfig:
    """Smooth absorbing layer on |x| > L - width (damping rate `strength`)."""

    width: float = 10.0
    strength: float = 2.0

    def profile(self, grid: Grid) -> np.ndarray:
        d = (np.abs(grid.x) - (grid.half_length - self.width)) / self.width
        d = np.clip(d, 0.0, 1.0)
        return self.strength * np.sin(0.5 * np.pi * d) ** 2


@dataclass(frozen=True)
class EvolveConfig:
    dt_init: float = 1e-3
    dt_min: float = 1e-9
    t_max: float = 1.0
    cfl_safety: float = 0.01
    blowup_factor: float = 20.0
    conservation_tol: float = 1e-3
    odd_project_every: int = 1
    record_every: float = 0.1
    snapshot_every: float | None = None
    sponge: SpongeConfig | None = None
    adaptive: bool = True

    def __post_init__(self):
        if not self.t_max > 0:
            raise ValueError("evolve.t_max must be positive")
        if not 0 < self.dt_min < self.dt_init:
            raise ValueError("evolve.dt_min must satisfy 0 < dt_min < dt_init")
        if not 0 < self.cfl_safety < 1:
            raise ValueError("evolve.cfl_safety must lie in (0, 1)")
        if not self.blowup_factor > 1:
            raise ValueError("evolve.blowup_factor must exceed 1")
        if not self.conservation_tol > 0:
            raise ValueError("evolve.conservation_tol must be positive")
        if self.odd_project_every < 0:
            raise ValueError("evolve.odd_project_every must be >= 0")
        if not self.record_every > 0:
            raise ValueError("evolve.record_every must be positive")
        if self.snapshot_every is not None and not self.snapshot_every > 0:
            raise ValueError("evolve.snapshot_every must be positive")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TrajectoryRecord:
    grid: Grid
    params: GroundStateParams
    times: np.ndarray
    reports: list[FunctionalReport]
    sup_norms: np.ndarray
    Lp1_norms: np.ndarray
    J: np.ndarray
    J_prime: np.ndarray
    dts: np.ndarray
    strichartz_cumulative: np.ndarray
    termination: Termination
    termination_reason: str = ""
    n_steps: int = 0
    absorbed_mass: float = 0.0
    absorbed_energy: float = 0.0
    initial_gradient: float = 0.0
    final_gradient: float = 0.0
    snapshot_times: np.ndarray = field(default_factory=lambda: np.zeros(0))
    snapshots: list[np.ndarray] = field(default_factory=list)
    sponge_used: bool = False

    @property
    def a_exponent(self) -> float:
        p = self.params.p
        return 2.0 * (p - 1.0) * (p + 1.0) / (p + 3.0)

    @property
    def strichartz_running(self) -> float:
        """Accumulated L^a_t L^r_x norm over the recorded run."""
        if not len(self.strichartz_cumulative):
            return 0.0
        return float(self.strichartz_cumulative[-1]) ** (1.0 / self.a_exponent)

    def series(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.reports])

    def snapshot_fields(self) -> list[tuple[float, Field]]:
        return [(t, Field(self.grid, v, odd_sector=True)) for t, v in zip(self.snapshot_times, self.snapshots)]

    CSV_COLUMNS = (
        "t", "mass", "energy", "kinetic", "potential", "virial_K", "mu",
        "sup_norm", "Lp1_norm", "J", "J_prime", "strichartz_cumulative", "dt",
    )

    def csv_rows(self):
        for i, t in enumerate(self.times):
            r = self.reports[i]
            yield [
                float(t), r.mass, r.energy, r.kinetic, r.potential, r.virial_K, r.mu,
                float(self.sup_norms[i]), float(self.Lp1_norms[i]), float(self.J[i]),
                float(self.J_prime[i]), float(self.strichartz_cumulative[i]), float(self.dts[i]),
            ]

    def write_csv(self, path) -> None:
        import csv

        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.CSV_COLUMNS)
            for row in self.csv_rows():
                w.writerow([repr(v) for v in row])

    def manifest(self) -> dict:
        return {
            "grid": self.grid.to_dict(),
            "grid_checksum": self.grid.checksum(),
            "params": self.params.to_dict(),
            "termination": self.termination.value,
            "termination_reason": self.termination_reason,
            "n_steps": self.n_steps,
            "n_records": len(self.times),
            "t_final": float(self.times[-1]) if len(self.times) else 0.0,
            "sponge_used": self.sponge_used,
            "absorbed_mass": self.absorbed_mass,
            "absorbed_energy": self.absorbed_energy,
            "initial_gradient": self.initial_gradient,
            "final_gradient": self.final_gradient,
            "strichartz_running": self.strichartz_running,
            "diagnostics_checksum": _array_checksum(np.array(list(self.csv_rows()), dtype=float)),
        }

    def write_manifest(self, path, extra: dict | None = None) -> None:
        data = self.manifest()
        if extra:
            data.update(extra)
        Path(path).write_text(json.dumps(data, indent=2, sort_keys=True))


def _array_checksum(a: np.ndarray) -> str:
    import hashlib

    return hashlib.sha256(np.ascontiguousarray(a, dtype="<f8").tobytes()).hexdigest()[:16]


# --- field dumps --------------------------------------------------------------

_DUMP_HEADER = struct.Struct("<qdd")


def dump_field(path, f: Field, time: float) -> None:
    """Header (n_points int64, half_length f64, time f64) then interleaved re/im f64, little-endian."""
    v = np.empty(2 * f.grid.n_points, dtype="<f8")
    v[0::2] = f.values.real
    v[1::2] = f.values.imag
    with open(path, "wb") as fh:
        fh.write(_DUMP_HEADER.pack(f.grid.n_points, f.grid.half_length, time))
        fh.write(v.tobytes())


def load_field(path) -> tuple[Field, float]:
    raw = Path(path).read_bytes()
    n, half, t = _DUMP_HEADER.unpack_from(raw, 0)
    v = np.frombuffer(raw, dtype="<f8", offset=_DUMP_HEADER.size, count=2 * n)
    return Field(Grid(n, half), v[0::2] + 1j * v[1::2]), t


# --- stepping -------------------------------------------------------------------

def _kinetic_half(grid: Grid, dt: float) -> np.ndarray:
    # e^{it d_xx} acts as exp(-i k^2 t) on Fourier modes
    return np.exp(-0.5j * grid.k**2 * dt)


def step(u: Field, dt: float, params: GroundStateParams) -> Field:
    """One Strang step: half free flow, exact nonlinear phase, half free flow."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    g = u.grid
    half = _kinetic_half(g, dt)
    w = np.fft.ifft(half * np.fft.fft(u.values))
    w = w * np.exp(1j * np.abs(w) ** (params.p - 1.0) * dt)
    w = np.fft.ifft(half * np.fft.fft(w))
    if not np.all(np.isfinite(w)):
        raise FloatingPointError("non-finite values after step (blow-up)")
    return Field(g, w, odd_sector=False)


def lp_norm(f: Field, r: float) -> float:
    return float(f.grid.integrate(np.abs(f.values) ** r)) ** (1.0 / r)


def evolve(u0: Field, cfg: EvolveConfig, params: GroundStateParams) -> TrajectoryRecord:
    """Integrate odd data to cfg.t_max, recording diagnostics every record_every.

    Terminates with BlowupDetected once ||u_x|| exceeds blowup_factor times its
    initial value or the nonlinear step bound drops below dt_min, and with
    Unresolved when mass or energy (net of sponge absorption) drifts past
    conservation_tol.
    """
    g = u0.grid
    p = params.p
    k2 = g.k**2
    dx, n = g.spacing, g.n_points
    r_exp = p + 1.0
    a_exp = 2.0 * (p - 1.0) * (p + 1.0) / (p + 3.0)
    damp = cfg.sponge.profile(g) if cfg.sponge is not None else None

    u = np.array(u0.values, dtype=np.complex128)
    if cfg.odd_project_every:
        u = 0.5 * (u - g.reflect(u))
    uh = np.fft.fft(u)

    def grad_norm(vh):
        return math.sqrt(dx / n * float(np.sum(k2 * (vh.real**2 + vh.imag**2))))

    def energy_of(vh, v):
        kin = dx / n * float(np.sum(k2 * (vh.real**2 + vh.imag**2)))
        pot = dx * float(np.sum(np.abs(v) ** (p + 1.0)))
        return 0.5 * kin - pot / (p + 1.0)

    grad0 = grad_norm(uh)
    f0 = Field(g, u)
    rep0 = compute_functionals(f0, params, check=False)
    m0, e0 = rep0.mass, rep0.energy

    times, reports, sups, lps, js, jps, dts, stz = [], [], [], [], [], [], [], []
    snap_t, snaps = [], []
    absorbed_m = absorbed_e = 0.0
    strich = 0.0

    def record(t, v, dt_used):
        f = Field(g, v)
        times.append(t)
        reports.append(compute_functionals(f, params, check=False))
        a = np.abs(v)
        sups.append(float(a.max()))
        lps.append(lp_norm(f, r_exp))
        js.append(variance(f))
        jps.append(variance_derivative(f))
        dts.append(dt_used)
        stz.append(strich)

    def snapshot(t, v):
        snap_t.append(t)
        snaps.append(v.copy())

    record(0.0, u, 0.0)
    if cfg.snapshot_every:
        snapshot(0.0, u)
    t = 0.0
    # targets are k * interval so record times do not accumulate rounding
    n_rec, n_snap = 1, 1
    next_rec = cfg.record_every
    next_snap = cfg.snapshot_every if cfg.snapshot_every else math.inf
    sup = float(np.max(np.abs(u)))
    lr_prev = lp_norm(f0, r_exp) ** a_exp
    termination, reason = Termination.REACHED_TMAX, ""
    nsteps = 0
    dt = cfg.dt_init
    cached_dt, half = None, None
    eps_t = 1e-12 * max(cfg.t_max, 1.0)

    while t < cfg.t_max - eps_t:
        dt = cfg.dt_init
        if cfg.adaptive and sup > 0:
            dt_cfl = cfg.cfl_safety / sup ** (p - 1.0)
            if dt_cfl < cfg.dt_min:
                termination, reason = Termination.BLOWUP, f"time step collapse (dt={dt_cfl:.3e})"
                break
            dt = min(dt, dt_cfl)
        target = min(next_rec, next_snap, cfg.t_max)
        dt = min(dt, target - t)
        if dt != cached_dt:
            half = np.exp(-0.5j * k2 * dt)
            cached_dt = dt
        uh *= half
        u = np.fft.ifft(uh)
        u *= np.exp(1j * dt * np.abs(u) ** (p - 1.0))
        nsteps += 1
        if cfg.odd_project_every and nsteps % cfg.odd_project_every == 0:
            u = 0.5 * (u - g.reflect(u))
        if damp is not None:
            uh_mid = np.fft.fft(u)
            m_before = dx * float(np.sum(np.abs(u) ** 2))
            e_before = energy_of(uh_mid, u)
            u *= np.exp(-damp * dt)
        uh = np.fft.fft(u)
        if damp is not None:
            absorbed_m += m_before - dx * float(np.sum(np.abs(u) ** 2))
            absorbed_e += e_before - energy_of(uh, u)
        uh *= half
        t += dt
        if not np.all(np.isfinite(uh)):
            termination, reason = Termination.BLOWUP, "non-finite field"
            break
        sup = float(np.max(np.abs(u)))
        lr = dx * float(np.sum(np.abs(u) ** r_exp))
        strich += 0.5 * (lr_prev + lr) * dt
        lr_prev = lr
        gn = grad_norm(uh)
        at_record = abs(t - next_rec) <= eps_t or t >= cfg.t_max - eps_t
        at_snap = abs(t - next_snap) <= eps_t
        if at_record or at_snap or gn > cfg.blowup_factor * grad0:
            v = np.fft.ifft(uh)
        if gn > cfg.blowup_factor * grad0:
            record(t, v, dt)
            termination = Termination.BLOWUP
            reason = f"gradient norm grew by {gn / grad0:.1f}x"
            break
        if at_snap:
            n_snap += 1
            snapshot(next_snap, v)
            next_snap = n_snap * cfg.snapshot_every
        if at_record:
            n_rec += 1
            record(min(next_rec, cfg.t_max) if abs(t - next_rec) <= eps_t else t, v, dt)
            next_rec = n_rec * cfg.record_every
            rep = reports[-1]
            m_drift = abs(rep.mass + absorbed_m - m0) / m0
            e_drift = abs(rep.energy + absorbed_e - e0) / max(abs(e0), 1e-300)
            if m_drift > cfg.conservation_tol or e_drift > cfg.conservation_tol:
                termination = Termination.UNRESOLVED
                reason = f"conservation drift (mass {m_drift:.2e}, energy {e_drift:.2e})"
                break

    return TrajectoryRecord(
        grid=g,
        params=params,
        times=np.array(times),
        reports=reports,
        sup_norms=np.array(sups),
        Lp1_norms=np.array(lps),
        J=np.array(js),
        J_prime=np.array(jps),
        dts=np.array(dts),
        strichartz_cumulative=np.array(stz),
        termination=termination,
        termination_reason=reason,
        n_steps=nsteps,
        absorbed_mass=absorbed_m,
        absorbed_energy=absorbed_e,
        initial_gradient=grad0,
        final_gradient=grad_norm(uh) if np.all(np.isfinite(uh)) else math.inf,
        snapshot_times=np.array(snap_t),
        snapshots=snaps,
        sponge_used=damp is not None,
    )


@dataclass(frozen=True)
class DecayMetrics:
    decay_exponent: float
    strichartz_window: float
    n_samples: int


def dispersive_decay_metrics(
    rec: TrajectoryRecord, window: tuple[float, float], norm: str = "Lp1"
) -> DecayMetrics:
    """Log-log decay slope of a spatial norm over a window, and the window's L^a_t L^r_x mass.

    norm is "Lp1" (the L^{p+1} norm, free decay rate -(p-1)/(2(p+1))) or
    "sup" (free decay rate -1/2).
    """
    t1, t2 = window
    sel = (rec.times >= t1) & (rec.times <= t2) & (rec.times > 0)
    if sel.sum() < 10:
        raise ValueError(f"window {window} holds {int(sel.sum())} samples; at least 10 needed")
    vals = rec.Lp1_norms if norm == "Lp1" else rec.sup_norms
    slope = float(np.polyfit(np.log(rec.times[sel]), np.log(vals[sel]), 1)[0])
    cum = rec.strichartz_cumulative
    idx = np.flatnonzero(sel)
    window_mass = float(cum[idx[-1]] - cum[idx[0]])
    return DecayMetrics(slope, window_mass, int(sel.sum()))


def free_evolution(f: Field, t: float) -> Field:
    """Exact linear propagator e^{it d_xx}."""
    g = f.grid
    return Field(g, np.fft.ifft(np.exp(-1j * g.k**2 * t) * np.fft.fft(f.values)), odd_sector=f.odd_sector)
