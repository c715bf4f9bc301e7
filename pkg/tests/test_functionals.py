import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.optimize import brentq

from oddnls.functionals import (
    FunctionalReport,
    InconsistentEquivalenceError,
    ThresholdClass,
    classify_threshold_detail,
    compute_functionals,
    fit_omega,
    gn_constants,
    gn_ratio,
    gradient_level,
    minimizing_sequence_demo,
    norms,
    rescale_to_unit_omega,
    restrict_half_line,
    scaling_exponents,
    threshold_classify,
    threshold_level,
    virial_K,
)
from oddnls.grid import Field, Grid
from oddnls.harness.experiments import KSign, ThresholdDataSpec, make_threshold_data, random_odd_field
from oddnls.soliton import GroundStateParams, eval_Q, ground_state_norms, pair

GRID = Grid(4096, 60.0)


def odd_fields(grid=GRID):
    return st.integers(0, 2**32 - 1).map(lambda s: random_odd_field(grid, np.random.default_rng(s)))


@pytest.fixture(scope="module")
def q_field(params):
    return Field(GRID, eval_Q(params, GRID.x))


@pytest.fixture(scope="module")
def threshold_pos(params):
    return make_threshold_data(ThresholdDataSpec(y=8.0), params, GRID)


@pytest.fixture(scope="module")
def threshold_neg(params):
    return make_threshold_data(ThresholdDataSpec(y=8.0, nu0=1.05, k_sign_target=KSign.NEGATIVE), params, GRID)


class TestComputeFunctionals:
    def test_ground_state(self, params, q_field):
        rep = compute_functionals(q_field, params)
        assert abs(rep.virial_K) < 1e-8
        assert rep.mass / rep.energy == pytest.approx(10.0, abs=1e-6)
        assert abs(rep.mu - rep.kinetic) < 1e-10
        assert rep.flags == ()

    def test_zero_field(self, params):
        rep = compute_functionals(Field.zeros(GRID), params)
        assert rep.mass == rep.energy == rep.kinetic == rep.potential == rep.virial_K == rep.action_S == 0.0
        assert rep.mu == pytest.approx(2 * ground_state_norms(params)["kinetic"])

    @given(f=odd_fields())
    def test_internal_identities(self, f):
        p = 7.0
        rep = compute_functionals(f, GroundStateParams(p))
        scale = rep.kinetic + rep.potential
        assert abs(rep.energy - (rep.kinetic / 2 - rep.potential / (p + 1))) <= 1e-12 * scale
        assert abs(rep.virial_K - (rep.kinetic - (p - 1) / (2 * (p + 1)) * rep.potential)) <= 1e-12 * scale
        assert rep.virial_K == pytest.approx(virial_K(f, p), rel=1e-12, abs=1e-14 * scale)

    def test_unresolved_flag(self, params):
        g = Grid(256, 20.0)
        rng = np.random.default_rng(1)
        noisy = Field(g, rng.normal(size=g.n_points))
        with pytest.warns(Warning):
            rep = compute_functionals(noisy, params)
        assert "unresolved" in rep.flags
        assert "boundary" in rep.flags

    def test_serialization(self, params, q_field):
        rep = compute_functionals(q_field, params)
        d = rep.to_dict()
        assert d["schema_version"] == 1
        row = rep.csv_row()
        assert len(row) == len(FunctionalReport.CSV_COLUMNS)


class TestThreshold:
    def test_below(self, params):
        f = Field(GRID, 0.99 * pair(params, GRID.x, 8.0), odd_sector=True)
        assert threshold_classify(f, params) is ThresholdClass.BELOW

    def test_k_positive_branch(self, params, threshold_pos):
        det = classify_threshold_detail(threshold_pos.field, params)
        assert det.category is ThresholdClass.AT_K_POSITIVE
        assert det.gradient_ratio < 1.0
        assert det.virial_K == pytest.approx((params.p - 5) / 4 * det.mu_star, rel=1e-8)

    def test_k_negative_branch(self, params, threshold_neg):
        det = classify_threshold_detail(threshold_neg.field, params)
        assert det.category is ThresholdClass.AT_K_NEGATIVE
        assert det.mu_star < 0
        assert det.virial_K == pytest.approx((params.p - 5) / 4 * det.mu_star, rel=1e-8)

    def test_above_by_chirp(self, params):
        # a chirp e^{icx^2} keeps the pair odd and raises only the kinetic energy
        base = pair(params, GRID.x, 8.0)
        lvl = threshold_level(params.p)

        def excess(c):
            f = Field(GRID, np.exp(1j * c * GRID.x**2) * base, odd_sector=True)
            rep = compute_functionals(f, params, check=False)
            return rep.energy * rep.mass**params.sigma / lvl - 1.05

        c = brentq(excess, 0.0, 0.1)
        f = Field(GRID, np.exp(1j * c * GRID.x**2) * base, odd_sector=True)
        assert threshold_classify(f, params) is ThresholdClass.ABOVE

    def test_scaling_ray_peaks_near_threshold(self, params):
        # lambda -> E M^sigma of lambda R_y Q is stationary near lambda = 1
        lvl = threshold_level(params.p)
        vals = []
        for lam in (0.97, 1.0, 1.03):
            rep = compute_functionals(Field(GRID, lam * pair(params, GRID.x, 8.0), odd_sector=True), params)
            vals.append(rep.energy * rep.mass**params.sigma / lvl)
        assert vals[1] > vals[0] and vals[1] > vals[2]
        assert vals[1] == pytest.approx(1.0, abs=1e-4)

    def test_zero_field_rejected(self, params):
        with pytest.raises(ValueError):
            threshold_classify(Field.zeros(GRID), params)

    def test_inconsistency_raises(self, params, threshold_pos, monkeypatch):
        import oddnls.functionals as fmod

        real = fmod.ground_state_norms

        def skewed(prm):
            d = dict(real(prm))
            d["kinetic"] *= 0.5
            return d

        monkeypatch.setattr(fmod, "ground_state_norms", skewed)
        with pytest.raises(InconsistentEquivalenceError):
            classify_threshold_detail(threshold_pos.field, params)

    @given(f=odd_fields(), u=st.floats(0.05, 1.0))
    def test_gradient_bound_forces_nonnegative_K(self, f, u):
        p = 7.0
        prm = GroundStateParams(p)
        m, t, _ = norms(f, p)
        s = prm.sigma
        # rescale f so that the scale-dependent gradient bound holds with ratio u
        a = (u * gradient_level(p) / (m**s * t)) ** (1.0 / (2 * s + 2))
        g = f * a
        assert virial_K(g, p) >= -1e-8 * norms(g, p)[1]


class TestOmega:
    def test_identity(self, params):
        q = ground_state_norms(params)
        f = Field(GRID, pair(params, GRID.x, 12.0), odd_sector=True)
        a = math.sqrt(2 * q["mass"] / norms(f, 7.0)[0])
        assert fit_omega(f * a, params) == pytest.approx(1.0, rel=1e-12)

    def test_omega_two(self, params):
        p = params.p
        q = ground_state_norms(params)
        target = 2 * q["mass"] * 2.0 ** (-(p - 5) / (2 * (p - 1)))
        f = Field(GRID, pair(params, GRID.x, 12.0), odd_sector=True)
        a = math.sqrt(target / norms(f, p)[0])
        assert fit_omega(f * a, params) == pytest.approx(2.0, rel=1e-10)

    @pytest.mark.parametrize("w", [0.5, 2.0])
    def test_threshold_energy_matches(self, params, threshold_pos, w):
        p = params.p
        lam, nu = threshold_pos.lam, threshold_pos.nu
        g = Grid(8192, 60.0 / math.sqrt(w) + 20.0)
        f = Field(g, w ** (1 / (p - 1)) * lam * pair(params, nu * math.sqrt(w) * g.x, 8.0), odd_sector=True)
        ws = fit_omega(f, params)
        assert ws == pytest.approx(w, rel=1e-8)
        e = compute_functionals(f, params).energy
        assert abs(e - 2 * ground_state_norms(GroundStateParams(p, ws))["energy"]) / abs(e) < 1e-6

    def test_zero_rejected(self, params):
        with pytest.raises(ValueError):
            fit_omega(Field.zeros(GRID), params)

    def test_rescale_identity(self, params):
        f = Field(GRID, pair(params, GRID.x, 6.0), odd_sector=True)
        out = rescale_to_unit_omega(f, 1.0)
        assert out.grid == f.grid
        assert np.array_equal(out.values, f.values)

    @pytest.mark.parametrize("w", [0.25, 2.0, 4.0])
    def test_rescale_ground_state(self, w):
        prm = GroundStateParams(7.0, w)
        g = Grid(4096, 60.0 / math.sqrt(w))
        out = rescale_to_unit_omega(Field(g, eval_Q(prm, g.x)), w)
        assert np.max(np.abs(out.values - eval_Q(GroundStateParams(7.0), out.grid.x))) < 1e-10

    @pytest.mark.parametrize("w", [0.25, 4.0])
    def test_rescale_scaling_exponents(self, params, w):
        g = Grid(4096, 60.0)
        f = Field(g, pair(params, g.x, 6.0) * np.exp(0.2j * g.x), odd_sector=True)
        a = compute_functionals(f, params)
        b = compute_functionals(rescale_to_unit_omega(f, w), params, check=False)
        ex = scaling_exponents(7.0)
        assert b.mass == pytest.approx(w ** ex["mass"] * a.mass, rel=1e-6)
        assert b.energy == pytest.approx(w ** ex["energy"] * a.energy, rel=1e-6)
        assert b.virial_K == pytest.approx(w ** ex["virial_K"] * a.virial_K, rel=1e-6)

    @pytest.mark.parametrize("seed", range(20))
    @pytest.mark.parametrize("w", [0.25, 4.0])
    def test_rescale_preserves_K_sign(self, seed, w):
        f = random_odd_field(GRID, np.random.default_rng(seed))
        out = rescale_to_unit_omega(f, w)
        assert np.sign(virial_K(out, 7.0)) == np.sign(virial_K(f, 7.0))

    def test_fit_then_rescale_is_idempotent(self, params):
        f = Field(GRID, 0.8 * pair(params, GRID.x, 8.0), odd_sector=True)
        w = fit_omega(f, params)
        assert fit_omega(rescale_to_unit_omega(f, w), params) == pytest.approx(1.0, rel=1e-10)

    def test_rescale_rejects_nonpositive(self, params):
        with pytest.raises(ValueError):
            rescale_to_unit_omega(Field.zeros(GRID), 0.0)


class TestGagliardoNirenberg:
    def test_ground_state_is_extremizer(self, params, q_field):
        c_gn, c_odd = gn_constants(params)
        assert gn_ratio(q_field) == pytest.approx(c_gn, rel=1e-6)
        assert c_odd == pytest.approx(c_gn * 2.0 ** (-3.0))

    def test_separated_pair_approaches_odd_constant(self, params):
        g = Grid(8192, 60.0)
        r = gn_ratio(Field(g, pair(params, g.x, 12.0), odd_sector=True)) / gn_constants(params)[1]
        assert 0.99 <= r <= 1.0001

    @given(f=odd_fields())
    def test_odd_fields_below_odd_constant(self, f):
        _, c_odd = gn_constants(GroundStateParams(7.0))
        assert gn_ratio(f) <= c_odd * (1 + 1e-3)

    @given(seed=st.integers(0, 2**32 - 1), shift=st.floats(-5.0, 5.0))
    def test_any_field_below_full_constant(self, seed, shift):
        f = random_odd_field(GRID, np.random.default_rng(seed))
        g = Field(GRID, f.values + GRID.shift(np.exp(-GRID.x**2), shift))
        c_gn, _ = gn_constants(GroundStateParams(7.0))
        assert gn_ratio(g) <= c_gn * (1 + 1e-3)

    def test_zero_rejected(self):
        with pytest.raises(ValueError):
            gn_ratio(Field.zeros(GRID))


@pytest.fixture(scope="module")
def pair6(params):
    return Field(GRID, pair(params, GRID.x, 6.0), odd_sector=True)


@pytest.fixture(scope="module")
def min_rows(params):
    return minimizing_sequence_demo(params, [4.0, 6.0, 8.0, 10.0, 12.0])


class TestHalfLine:
    def test_mass_halves(self, params, pair6):
        assert norms(restrict_half_line(pair6), 7.0)[0] == pytest.approx(norms(pair6, 7.0)[0] / 2, abs=1e-8)

    def test_virial_and_action_halve(self, params, pair6):
        half = compute_functionals(restrict_half_line(pair6), params)
        full = compute_functionals(pair6, params)
        assert half.virial_K == pytest.approx(full.virial_K / 2, abs=1e-6)
        assert 2 * half.action_S == pytest.approx(full.action_S, rel=1e-12)

    def test_zero(self):
        out = restrict_half_line(Field.zeros(GRID))
        assert np.all(out.values == 0)

    def test_rejects_non_odd(self, params):
        with pytest.raises(ValueError):
            restrict_half_line(Field(GRID, eval_Q(params, GRID.x)))


class TestMinimizingSequence:
    def test_limit_row(self, min_rows):
        last = min_rows[-1]
        assert 1.0 <= last.action_ratio <= 1.0 + 1e-4
        assert last.lam == pytest.approx(1.0, abs=1e-3)

    def test_decreasing(self, min_rows):
        r = [row.action_ratio for row in min_rows]
        assert all(b < a for a, b in zip(r, r[1:]))

    def test_rows_on_nehari(self, min_rows):
        assert all(abs(row.virial_K) <= 1e-9 for row in min_rows)

    def test_requires_increasing(self, params):
        with pytest.raises(ValueError):
            minimizing_sequence_demo(params, [6.0, 4.0])
