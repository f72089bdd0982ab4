"""Horseshoe scale conditionals, coefficient layouts, and the plug-in tau rule."""

import numpy as np
import pytest
from scipy import stats

from ncbayes.rng import sample_inv_gamma
from ncbayes.shrinkage import (
    SCALE_LIMS,
    CoefLayout,
    ShrinkagePrior,
    fixed_tau_value,
    init_horseshoe,
    prior_precision,
    update_global,
    update_group,
    update_local,
)

WIDE = (1e-30, 1e30)  # disables the clip so conditionals can be certified raw


def _local_layout():
    return CoefLayout(local_idx=np.array([0, 1]), beta_idx=2, beta_var=1e3)


def _grouped_layout():
    return CoefLayout(
        local_idx=np.array([], int),
        group_idx=np.array([[0, 1], [2, 3]]),
        beta_idx=4,
    )


class TestCoefLayout:
    def test_sizes(self):
        lay = _local_layout()
        assert lay.n_shrunk == 2
        assert lay.size == 3
        glay = _grouped_layout()
        assert glay.n_shrunk == 4
        assert glay.size == 5

    def test_overlapping_indices_raise(self):
        with pytest.raises(ValueError):
            CoefLayout(local_idx=np.array([0, 1]), beta_idx=1)

    def test_gap_raises(self):
        with pytest.raises(ValueError):
            CoefLayout(local_idx=np.array([0, 2]), beta_idx=3)

    def test_group_idx_must_be_2d(self):
        with pytest.raises(ValueError):
            CoefLayout(local_idx=np.array([], int), group_idx=np.array([0, 1]))

    def test_no_intercept_allowed(self):
        lay = CoefLayout(local_idx=np.arange(4), beta_idx=None)
        assert lay.size == 4


class TestFixedTau:
    def test_hand_values(self):
        # d = 12: p0 = floor(1.7 * 144 + 0.5) = 245, denominator 20 * (288 - 245)
        assert fixed_tau_value(12, 200, 200) == pytest.approx(245.0 / 860.0, rel=1e-12)
        # d = 2: p0 = floor(6.8 + 0.5) = 7, denominator 10 * (8 - 7)
        assert fixed_tau_value(2, 50, 50) == pytest.approx(0.7, rel=1e-12)

    def test_shrinks_with_sample_size(self):
        assert fixed_tau_value(12, 800, 800) == pytest.approx(
            fixed_tau_value(12, 200, 200) / 2.0, rel=1e-12
        )

    def test_d1_unsupported(self):
        with pytest.raises(ValueError):
            fixed_tau_value(1, 100, 100)

    def test_validation(self):
        with pytest.raises(ValueError):
            fixed_tau_value(12, 0, 100)


class TestSampleInvGamma:
    def test_moments(self, rng):
        # IG(3, 2): mean = 1, var = 1
        x = sample_inv_gamma(3.0, 2.0, rng, size=200_000)
        assert x.mean() == pytest.approx(1.0, abs=0.02)
        assert x.var() == pytest.approx(1.0, rel=0.15)

    def test_distribution_ks(self, rng):
        x = sample_inv_gamma(2.5, 1.7, rng, size=4000)
        p = stats.kstest(x, stats.invgamma(2.5, scale=1.7).cdf).pvalue
        assert p > 0.01

    def test_vector_scale_broadcast(self, rng):
        scales = np.array([0.5, 1.0, 2.0, 4.0])
        x = sample_inv_gamma(1.0, scales, rng)
        assert x.shape == scales.shape
        assert np.all(x > 0)


class TestScaleConditionals:
    """Single-site kernels against their closed-form inverse-gamma laws."""

    def test_local_scale_law(self, rng):
        lay = _local_layout()
        state = init_horseshoe(lay, scale_lims=WIDE)
        state.tau2 = 1.0
        phi = np.array([1.0, 1.0])
        draws = []
        for _ in range(4000):
            state.nu = np.ones(2)  # freeze the auxiliary so draws are iid
            update_local(state, phi, rng)
            draws.append(state.lam2[0])
        # lam2 | . ~ IG(1, phi^2 / (2 tau2) + 1 / nu) = IG(1, 1.5)
        p = stats.kstest(np.array(draws), stats.invgamma(1.0, scale=1.5).cdf).pvalue
        assert p > 0.01

    def test_group_scale_law(self, rng):
        lay = CoefLayout(local_idx=np.array([], int), group_idx=np.arange(4)[None, :])
        state = init_horseshoe(lay, scale_lims=WIDE)
        state.tau2 = 1.0
        phi_g = np.ones((1, 4))
        draws = []
        for _ in range(4000):
            state.t = np.ones(1)
            update_group(state, phi_g, rng)
            draws.append(state.u2[0])
        # u2 | . ~ IG((4 + 1)/2, sum phi^2 / (2 tau2) + 1/t) = IG(2.5, 3)
        p = stats.kstest(np.array(draws), stats.invgamma(2.5, scale=3.0).cdf).pvalue
        assert p > 0.01

    def test_global_scale_law(self, rng):
        lay = CoefLayout(local_idx=np.arange(3), beta_idx=3)
        state = init_horseshoe(lay, scale_lims=WIDE)
        phi = np.ones(3)
        draws = []
        for _ in range(4000):
            state.lam2 = np.ones(3)
            state.xi = 1.0
            update_global(state, phi, None, rng)
            draws.append(state.tau2)
        # tau2 | . ~ IG((3 + 1)/2, sum(phi^2/lam2)/2 + 1/xi) = IG(2, 2.5)
        p = stats.kstest(np.array(draws), stats.invgamma(2.0, scale=2.5).cdf).pvalue
        assert p > 0.01

    def test_tau_fixed_is_noop(self, rng):
        lay = _local_layout()
        state = init_horseshoe(lay, tau_fixed=True, tau2=0.25)
        update_global(state, np.ones(2), None, rng)
        assert state.tau2 == 0.25
        assert state.xi == 1.0

    def test_local_rejects_bad_phi(self, rng):
        state = init_horseshoe(_local_layout())
        with pytest.raises(ValueError):
            update_local(state, np.ones(5), rng)
        with pytest.raises(ValueError):
            update_local(state, np.array([1.0, np.nan]), rng)

    def test_group_update_needs_group_state(self, rng):
        state = init_horseshoe(_local_layout())
        with pytest.raises(ValueError):
            update_group(state, np.ones((1, 4)), rng)


class TestScaleBand:
    def test_huge_coefficient_pins_at_upper_limit(self, rng):
        state = init_horseshoe(_local_layout())
        update_local(state, np.array([1e6, 1e6]), rng)
        np.testing.assert_array_equal(state.lam2, [SCALE_LIMS[1], SCALE_LIMS[1]])

    def test_band_holds_under_extreme_inputs(self, rng):
        lay = CoefLayout(
            local_idx=np.array([0, 1]), group_idx=np.array([[2, 3, 4, 5]]), beta_idx=6
        )
        state = init_horseshoe(lay)
        lo, hi = SCALE_LIMS
        for k in range(200):
            phi = np.full(2, 1e8 if k % 2 else 1e-8)
            phi_g = np.full((1, 4), 1e-8 if k % 2 else 1e8)
            update_local(state, phi, rng)
            update_group(state, phi_g, rng)
            update_global(state, phi, phi_g, rng)
            for vals in (state.lam2, state.nu, state.u2, state.t,
                         [state.tau2], [state.xi]):
                assert np.all((lo <= np.asarray(vals)) & (np.asarray(vals) <= hi))


class TestPriorPrecision:
    def test_local_assembly(self):
        lay = _local_layout()
        state = init_horseshoe(lay)
        state.lam2 = np.array([4.0, 0.25])
        state.tau2 = 2.0
        prec, nat = prior_precision(state, lay)
        np.testing.assert_allclose(prec, [0.125, 2.0, 1e-3])
        np.testing.assert_array_equal(nat, np.zeros(3))

    def test_slab_adds_floor(self):
        lay = _local_layout()
        state = init_horseshoe(lay, slab=2.0)
        state.lam2 = np.array([4.0, 0.25])
        state.tau2 = 2.0
        prec, _ = prior_precision(state, lay)
        np.testing.assert_allclose(prec, [0.375, 2.25, 1e-3])

    def test_grouped_assembly(self):
        lay = _grouped_layout()
        state = init_horseshoe(lay)
        state.u2 = np.array([0.5, 2.0])
        state.tau2 = 1.0
        prec, _ = prior_precision(state, lay)
        np.testing.assert_allclose(prec, [2.0, 2.0, 0.5, 0.5, 1e-3])

    def test_layout_state_mismatch_raises(self):
        state = init_horseshoe(_local_layout())
        with pytest.raises(ValueError):
            prior_precision(state, _grouped_layout())


class TestShrinkagePriorAdapter:
    def test_interface(self, rng):
        lay = _local_layout()
        prior = ShrinkagePrior(lay, init_horseshoe(lay), record=True)
        np.testing.assert_array_equal(prior.initial_coef(), np.zeros(3))
        prec, nat = prior.precision_natmean()
        assert prec.shape == (3,) and nat.shape == (3,)

        gamma = np.array([0.5, -1.0, 3.0])
        for _ in range(6):
            prior.gibbs_update(gamma, rng)
        tr = prior.trace()
        assert tr.tau2.shape == (6,)
        assert tr.lam2.shape == (6, 2)
        assert tr.u2 is None

    def test_trace_absent_when_not_recording(self, rng):
        lay = _local_layout()
        prior = ShrinkagePrior(lay, init_horseshoe(lay))
        prior.gibbs_update(np.zeros(3), rng)
        assert prior.trace() is None

    def test_init_validation(self):
        with pytest.raises(ValueError):
            init_horseshoe(_local_layout(), slab=0.0)
        with pytest.raises(ValueError):
            init_horseshoe(_local_layout(), scale_lims=(1.0, 0.5))
