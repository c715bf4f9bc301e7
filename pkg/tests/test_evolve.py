import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oddnls.evolve import (
    EvolveConfig,
    SpongeConfig,
    Termination,
    TrajectoryRecord,
    dispersive_decay_metrics,
    dump_field,
    evolve,
    free_evolution,
    load_field,
    step,
)
from oddnls.grid import Field, Grid
from oddnls.soliton import eval_Q, pair
from oddnls.virial import variance

SMALL = Grid(1024, 30.0)


def _run(u, dt, T, params):
    for _ in range(int(round(T / dt))):
        u = step(u, dt, params)
    return u


class TestConfig:
    @pytest.mark.parametrize(
        "kw,path",
        [
            ({"t_max": -1.0}, "evolve.t_max"),
            ({"dt_min": 1e-2}, "evolve.dt_min"),
            ({"cfl_safety": 1.5}, "evolve.cfl_safety"),
            ({"blowup_factor": 1.0}, "evolve.blowup_factor"),
            ({"conservation_tol": 0.0}, "evolve.conservation_tol"),
            ({"record_every": 0.0}, "evolve.record_every"),
            ({"snapshot_every": -1.0}, "evolve.snapshot_every"),
        ],
    )
    def test_validation_names_field(self, kw, path):
        with pytest.raises(ValueError, match=path):
            EvolveConfig(**kw)


class TestStep:
    def test_rejects_nonpositive_dt(self, params):
        with pytest.raises(ValueError):
            step(Field.zeros(SMALL), 0.0, params)

    def test_soliton_rotates(self, params):
        q = eval_Q(params, SMALL.x)
        errs = []
        for dt in (1e-2, 5e-3):
            u = _run(Field(SMALL, np.exp(0.2j) * q), dt, 1.0, params)
            errs.append(np.max(np.abs(u.values - np.exp(1.2j) * q)))
        assert errs[1] < 0.02
        assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.1)

    def test_linear_regime_isometry(self, params):
        x = SMALL.x
        u = Field(SMALL, 1e-6 * x * np.exp(-(x**2) / 4), odd_sector=True)
        m0 = SMALL.integrate(np.abs(u.values) ** 2)
        d0 = SMALL.integrate(np.abs(u.deriv()) ** 2)
        u = _run(u, 1e-3, 1.0, params)
        assert abs(SMALL.integrate(np.abs(u.values) ** 2) / m0 - 1) < 1e-12
        assert abs(SMALL.integrate(np.abs(u.deriv()) ** 2) / d0 - 1) < 1e-12

    @given(seed=st.integers(0, 2**31), chirp=st.floats(-0.5, 0.5))
    def test_odd_in_odd_out(self, params, seed, chirp):
        rng = np.random.default_rng(seed)
        v = pair(params, SMALL.x, rng.uniform(2, 6)) * np.exp(1j * chirp * SMALL.x**2)
        out = step(Field(SMALL, v, odd_sector=True), 1e-2, params)
        assert out.odd_defect() < 1e-13

    @pytest.mark.parametrize("amp,y", [(1.0, 4.0), (0.8, 3.0)])
    def test_second_order(self, params, amp, y):
        u0 = Field(SMALL, amp * pair(params, SMALL.x, y), odd_sector=True)
        a, b, c = (_run(u0, dt, 0.5, params).values for dt in (4e-3, 2e-3, 1e-3))
        ratio = np.linalg.norm(a - b) / np.linalg.norm(b - c)
        assert ratio == pytest.approx(4.0, rel=0.1)

    def test_time_reversal(self, params):
        u0 = Field(SMALL, 1.05 * pair(params, SMALL.x, 2.5), odd_sector=True)
        v = _run(u0, 2.5e-3, 0.5, params).conj()
        v = _run(v, 2.5e-3, 0.5, params).conj()
        assert np.max(np.abs(v.values - u0.values)) < 1e-10

    def test_free_evolution_matches_small_data_step(self, params):
        x = SMALL.x
        u0 = Field(SMALL, 1e-8 * x * np.exp(-(x**2)), odd_sector=True)
        a = _run(u0, 0.1, 1.0, params)
        b = free_evolution(u0, 1.0)
        assert np.max(np.abs(a.values - b.values)) < 1e-20


class TestEvolve:
    def test_pair_conservation(self, params):
        g = Grid(4096, 60.0)
        u0 = Field(g, np.exp(0.4j) * pair(params, g.x, 20.0), odd_sector=True)
        rec = evolve(u0, EvolveConfig(t_max=2.0, dt_init=1e-4, record_every=0.1, adaptive=False), params)
        assert rec.termination is Termination.REACHED_TMAX
        m, e = rec.series("mass"), rec.series("energy")
        assert np.max(np.abs(m / m[0] - 1)) < 1e-9
        assert np.max(np.abs(e / e[0] - 1)) < 1e-9

    def test_records_land_on_grid_of_times(self, params):
        u0 = Field(SMALL, pair(params, SMALL.x, 8.0), odd_sector=True)
        rec = evolve(u0, EvolveConfig(t_max=0.5, record_every=0.1, snapshot_every=0.25), params)
        np.testing.assert_allclose(rec.times, np.arange(6) * 0.1, atol=1e-12)
        np.testing.assert_allclose(rec.snapshot_times, [0.0, 0.25, 0.5], atol=1e-12)
        assert np.all(np.diff(rec.times) > 0)
        for _, f in rec.snapshot_fields():
            assert f.odd_defect() == 0.0

    def test_variance_track(self, params):
        u0 = Field(SMALL, pair(params, SMALL.x, 6.0), odd_sector=True)
        rec = evolve(u0, EvolveConfig(t_max=0.2, record_every=0.1), params)
        assert rec.J[0] == pytest.approx(variance(u0))
        assert abs(rec.J_prime[0]) < 1e-13

    def test_blowup_detected(self, params):
        g = Grid(4096, 40.0)
        u0 = Field(g, 1.2 * pair(params, g.x, 4.0), odd_sector=True)
        rec = evolve(u0, EvolveConfig(t_max=5.0), params)
        assert rec.termination is Termination.BLOWUP
        assert rec.final_gradient > 20 * rec.initial_gradient
        grad = np.sqrt(rec.series("kinetic"))
        assert np.all(np.diff(grad[-5:]) > 0)
        assert np.all(rec.series("virial_K") < 0)

    def test_dt_collapse_detected(self, params):
        u0 = Field(SMALL, 1.2 * pair(params, SMALL.x, 4.0), odd_sector=True)
        rec = evolve(u0, EvolveConfig(t_max=5.0, dt_min=1e-5, blowup_factor=1e6), params)
        assert rec.termination is Termination.BLOWUP
        assert "collapse" in rec.termination_reason

    def test_drift_marks_unresolved(self, params):
        u0 = Field(SMALL, pair(params, SMALL.x, 4.0), odd_sector=True)
        cfg = EvolveConfig(t_max=1.0, dt_init=5e-2, adaptive=False, conservation_tol=1e-12)
        rec = evolve(u0, cfg, params)
        assert rec.termination is Termination.UNRESOLVED
        assert "drift" in rec.termination_reason

    def test_sponge_accounts_absorbed_mass(self, params):
        g = Grid(2048, 60.0)
        v = 0.3 * g.x * np.exp(-(g.x**2) / 4) * np.exp(3j * np.abs(g.x))
        u0 = Field(g, v, odd_sector=True)
        cfg = EvolveConfig(t_max=20.0, dt_init=5e-3, record_every=0.5, sponge=SpongeConfig())
        rec = evolve(u0, cfg, params)
        m = rec.series("mass")
        assert rec.sponge_used
        assert m[-1] < 0.05 * m[0]
        assert abs(m[-1] + rec.absorbed_mass - m[0]) < 1e-10
        assert rec.termination is Termination.REACHED_TMAX

    def test_csv_and_manifest(self, params, tmp_path):
        u0 = Field(SMALL, pair(params, SMALL.x, 6.0), odd_sector=True)
        rec = evolve(u0, EvolveConfig(t_max=0.3, record_every=0.1), params)
        rec.write_csv(tmp_path / "traj.csv")
        lines = (tmp_path / "traj.csv").read_text().splitlines()
        assert lines[0].split(",") == list(TrajectoryRecord.CSV_COLUMNS)
        assert len(lines) == 1 + len(rec.times)
        rec.write_manifest(tmp_path / "m.json", extra={"seed": 3})
        man = json.loads((tmp_path / "m.json").read_text())
        assert man["termination"] == "ReachedTmax"
        assert man["grid_checksum"] == SMALL.checksum()
        assert man["seed"] == 3

    def test_reproducible(self, params):
        u0 = Field(SMALL, 1.01 * pair(params, SMALL.x, 5.0), odd_sector=True)
        cfg = EvolveConfig(t_max=0.3, record_every=0.1)
        a = evolve(u0, cfg, params).manifest()["diagnostics_checksum"]
        b = evolve(u0, cfg, params).manifest()["diagnostics_checksum"]
        assert a == b


class TestDecayMetrics:
    def test_free_gaussian_sup_decay(self, params):
        g = Grid(4096, 300.0)
        u0 = Field(g, 1e-4 * g.x * np.exp(-(g.x**2)), odd_sector=True)
        rec = evolve(u0, EvolveConfig(t_max=30.0, dt_init=0.05, record_every=0.5), params)
        m = dispersive_decay_metrics(rec, (5.0, 30.0), norm="sup")
        assert m.decay_exponent == pytest.approx(-0.5, abs=0.05)

    def test_soliton_does_not_decay(self, params):
        # the ground state is linearly unstable for p > 5, so the window stays short
        u0 = Field(SMALL, eval_Q(params, SMALL.x))
        cfg = EvolveConfig(t_max=1.0, dt_init=1e-3, record_every=0.05, odd_project_every=0)
        rec = evolve(u0, cfg, params)
        m = dispersive_decay_metrics(rec, (0.1, 1.0))
        assert m.decay_exponent == pytest.approx(0.0, abs=0.02)
        assert m.strichartz_window > 0

    def test_window_too_short(self, params):
        u0 = Field(SMALL, pair(params, SMALL.x, 6.0), odd_sector=True)
        rec = evolve(u0, EvolveConfig(t_max=0.5, record_every=0.1), params)
        with pytest.raises(ValueError, match="at least 10"):
            dispersive_decay_metrics(rec, (0.0, 0.5))

    def test_strichartz_exponent(self, params):
        u0 = Field(SMALL, pair(params, SMALL.x, 6.0), odd_sector=True)
        rec = evolve(u0, EvolveConfig(t_max=0.1, record_every=0.1), params)
        assert rec.a_exponent == pytest.approx(2 * 6 * 8 / 10)
        assert rec.strichartz_running > 0


class TestDump:
    def test_roundtrip(self, params, tmp_path):
        u0 = Field(SMALL, np.exp(0.3j * SMALL.x) * pair(params, SMALL.x, 4.0))
        dump_field(tmp_path / "u.bin", u0, 1.25)
        f, t = load_field(tmp_path / "u.bin")
        assert t == 1.25
        assert f.grid == SMALL
        assert np.array_equal(f.values, u0.values)

    def test_layout(self, tmp_path):
        g = Grid(64, 2.0)
        v = np.arange(64) + 1j * np.arange(64, 128)
        dump_field(tmp_path / "u.bin", Field(g, v), 0.5)
        raw = (tmp_path / "u.bin").read_bytes()
        assert len(raw) == 8 + 8 + 8 + 64 * 16
        body = np.frombuffer(raw[24:], dtype="<f8")
        assert body[0] == 0.0 and body[1] == 64.0 and body[2] == 1.0
