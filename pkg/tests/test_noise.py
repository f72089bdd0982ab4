"""Noise specifications, effective sample size, and tempered resampling."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ncbayes.expfam import Rectangle
from ncbayes.noise import (
    NoiseAdaptConfig,
    NoiseSpec,
    TemperedNoiseState,
    ess,
    log_weight_ess,
    tempered_resample,
    update_gamma_tilde,
)


class TestEss:
    def test_hand_oracles(self):
        assert ess([1.0, 1.0, 1.0, 1.0]) == pytest.approx(4.0)
        assert ess([2.0, 0.0, 0.0]) == pytest.approx(1.0)
        # (1+2+3)^2 / (1+4+9)
        assert ess([1.0, 2.0, 3.0]) == pytest.approx(36.0 / 14.0)

    def test_bounds(self):
        w = np.random.default_rng(0).uniform(0.01, 5.0, 100)
        assert 1.0 <= ess(w) <= 100.0

    @settings(deadline=None, max_examples=100)
    @given(
        weights=st.lists(st.floats(1e-6, 1e6), min_size=1, max_size=30),
        scale=st.floats(1e-6, 1e6),
    )
    def test_scale_invariance(self, weights, scale):
        w = np.array(weights)
        assert ess(scale * w) == pytest.approx(ess(w), rel=1e-9)

    def test_validation(self):
        with pytest.raises(ValueError):
            ess([])
        with pytest.raises(ValueError):
            ess([1.0, -0.5])
        with pytest.raises(ValueError):
            ess([1.0, np.inf])
        with pytest.raises(ValueError):
            ess([0.0, 0.0])

    def test_log_weight_version_matches(self):
        w = np.array([0.2, 1.5, 3.0, 0.7])
        assert log_weight_ess(np.log(w)) == pytest.approx(ess(w), rel=1e-12)

    def test_log_weight_shift_invariance(self):
        log_w = np.array([-1.0, 0.5, 2.0])
        assert log_weight_ess(log_w + 700.0) == pytest.approx(
            log_weight_ess(log_w), rel=1e-9
        )

    def test_log_weight_all_minus_inf_raises(self):
        with pytest.raises(ValueError):
            log_weight_ess(np.full(3, -np.inf))

    def test_log_weight_ignores_minus_inf_entries(self):
        # a zero weight contributes nothing
        assert log_weight_ess(np.array([0.0, -np.inf])) == pytest.approx(1.0)


def test_update_gamma_tilde_is_batch_mean():
    draws = np.array([[1.0, 2.0], [3.0, 6.0]])
    np.testing.assert_allclose(update_gamma_tilde(draws), [2.0, 4.0])
    with pytest.raises(ValueError):
        update_gamma_tilde(np.empty((0, 2)))


class TestNoiseSpec:
    def test_unknown_mode(self):
        with pytest.raises(ValueError):
            NoiseSpec(mode="magic", m=5)

    def test_nonpositive_m(self):
        with pytest.raises(ValueError):
            NoiseSpec(mode="adaptive", m=0)

    def test_fixed_set_requires_points_and_density(self):
        with pytest.raises(ValueError):
            NoiseSpec(mode="fixed-set", m=3, points=np.zeros((3, 1)))
        with pytest.raises(ValueError):
            NoiseSpec(mode="fixed-set", m=3, log_density=lambda X: np.zeros(3))

    def test_generator_requires_sampler_and_density(self):
        with pytest.raises(ValueError):
            NoiseSpec(mode="generator", m=3, sampler=lambda m, g: np.zeros((m, 1)))

    def test_adaptive_needs_only_m(self):
        assert NoiseSpec(mode="adaptive", m=3).m == 3


class TestNoiseAdaptConfig:
    def test_defaults(self):
        cfg = NoiseAdaptConfig()
        assert cfg.alpha == 0.2
        assert cfg.batch == 50
        assert cfg.proposal_factor == 50

    def test_validation(self):
        with pytest.raises(ValueError):
            NoiseAdaptConfig(alpha=0.0)
        with pytest.raises(ValueError):
            NoiseAdaptConfig(alpha=1.5)
        with pytest.raises(ValueError):
            NoiseAdaptConfig(batch=0)
        with pytest.raises(ValueError):
            NoiseAdaptConfig(proposal_factor=0)
        with pytest.raises(ValueError):
            NoiseAdaptConfig(scheme="bootstrap")
        with pytest.raises(ValueError):
            NoiseAdaptConfig(during="never")


def _line_state(gamma, alpha=1.0, M=2000, lo=0.0, hi=1.0):
    return TemperedNoiseState(
        gamma_tilde=np.atleast_1d(np.asarray(gamma, float)),
        alpha=alpha,
        n_proposals=M,
        base=Rectangle((lo,), (hi,)),
    )


def _identity_design(X):
    return np.atleast_2d(X)


class TestTemperedResample:
    def test_flat_tilt_reduces_to_uniform(self, rng):
        # gamma_tilde = 0: every proposal weight is equal
        state = _line_state(0.0, M=500)
        pts, state = tempered_resample(state, 100, _identity_design, rng)
        assert pts.shape == (100, 1)
        assert state.last_ess == pytest.approx(500.0)
        # fitted density equals the uniform reference everywhere
        probe = np.linspace(0.05, 0.95, 7)[:, None]
        np.testing.assert_allclose(
            state.log_density(probe), state.base.log_uniform(), atol=1e-12
        )

    def test_points_stay_inside_base(self, rng):
        state = _line_state(3.0, M=1000)
        pts, _ = tempered_resample(state, 200, _identity_design, rng)
        assert np.all(state.base.contains(pts))

    def test_tilt_shifts_mass_toward_large_psi(self, rng):
        state = _line_state(5.0, M=4000)
        pts, _ = tempered_resample(state, 800, _identity_design, rng)
        # exp(5x) on [0, 1] has mean 0.80; uniform has 0.50
        assert pts.mean() > 0.65

    def test_log_norm_estimates_partition_function(self, rng):
        # q_alpha propto exp(alpha * x) on [0, 1]: Z = (e^alpha - 1) / alpha
        alpha = 0.2
        state = _line_state(1.0, alpha=alpha, M=20_000)
        _, state = tempered_resample(state, 100, _identity_design, rng)
        truth = np.log((np.exp(alpha) - 1.0) / alpha)
        assert state.log_norm == pytest.approx(truth, abs=0.02)

    def test_systematic_scheme(self, rng):
        state = _line_state(2.0, M=1000)
        pts, _ = tempered_resample(state, 300, _identity_design, rng, scheme="systematic")
        assert pts.shape == (300, 1)
        assert np.all(state.base.contains(pts))

    def test_deterministic_under_seed(self):
        a, _ = tempered_resample(
            _line_state(2.0, M=500), 50, _identity_design, np.random.default_rng(12)
        )
        b, _ = tempered_resample(
            _line_state(2.0, M=500), 50, _identity_design, np.random.default_rng(12)
        )
        np.testing.assert_array_equal(a, b)

    def test_m_larger_than_proposals_raises(self, rng):
        with pytest.raises(ValueError):
            tempered_resample(_line_state(1.0, M=10), 11, _identity_design, rng)

    def test_m_below_one_raises(self, rng):
        with pytest.raises(ValueError):
            tempered_resample(_line_state(1.0), 0, _identity_design, rng)

    def test_degenerate_weights_raise(self, rng):
        state = _line_state(np.nan, M=100)
        with pytest.raises(ValueError):
            tempered_resample(state, 10, _identity_design, rng)

    def test_log_density_before_first_resample_raises(self):
        state = _line_state(1.0)
        with pytest.raises(ValueError):
            state.log_density(np.array([[0.5]]))
