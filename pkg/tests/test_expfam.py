"""Domains, labeled samples, and the classification likelihood."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose
from scipy.special import expit

from ncbayes.expfam import (
    CoefVector,
    ExpFamModel,
    LabeledSample,
    Rectangle,
    Torus,
    build_labeled,
    class_likelihood_grad,
    classifier_prob,
    log_class_likelihood,
    stack_samples,
)


def _toy_model():
    return ExpFamModel(
        dim_param=1,
        suff_stat=lambda X: np.asarray(X, float),
        domain=Rectangle(lo=(0.0,), hi=(1.0,)),
    )


class TestRectangle:
    def test_volume(self):
        assert Rectangle(lo=(0.0, -1.0), hi=(2.0, 2.0)).volume == pytest.approx(6.0)

    def test_contains_is_closed(self):
        box = Rectangle(lo=(0.0,), hi=(1.0,))
        got = box.contains(np.array([[0.0], [1.0], [1.0001], [-0.2]]))
        assert got.tolist() == [True, True, False, False]

    def test_sample_inside_and_deterministic(self):
        box = Rectangle(lo=(-1.0, 0.0), hi=(1.0, 3.0))
        a = box.sample(64, np.random.default_rng(5))
        b = box.sample(64, np.random.default_rng(5))
        assert np.array_equal(a, b)
        assert box.contains(a).all()

    def test_log_uniform(self):
        box = Rectangle(lo=(0.0, 0.0), hi=(2.0, 5.0))
        assert box.log_uniform() == pytest.approx(-np.log(10.0))

    def test_expand(self):
        grown = Rectangle(lo=(0.0,), hi=(1.0,)).expand(0.2)
        assert grown.lo == pytest.approx((-0.1,))
        assert grown.hi == pytest.approx((1.1,))

    def test_around_exact_range(self):
        X = np.array([[0.5, -2.0], [3.0, 1.0], [1.0, 0.0]])
        box = Rectangle.around(X)
        assert box.lo == pytest.approx((0.5, -2.0))
        assert box.hi == pytest.approx((3.0, 1.0))

    def test_around_expanded(self):
        box = Rectangle.around(np.array([[0.0], [1.0]]), frac=0.1)
        assert box.lo == pytest.approx((-0.05,))
        assert box.hi == pytest.approx((1.05,))

    def test_degenerate_rejected(self):
        with pytest.raises(ValueError):
            Rectangle(lo=(0.0,), hi=(0.0,))


class TestTorus:
    def test_volume(self):
        assert Torus(3).volume == pytest.approx((2 * np.pi) ** 3)

    def test_contains_half_open(self):
        t = Torus(1)
        got = t.contains(np.array([[0.0], [2 * np.pi - 1e-9], [2 * np.pi]]))
        assert got.tolist() == [True, True, False]

    def test_log_uniform(self):
        assert Torus(2).log_uniform() == pytest.approx(-2 * np.log(2 * np.pi))


def test_design_appends_intercept():
    model = _toy_model()
    Z = model.design(np.array([[0.2], [0.7]]))
    assert Z.shape == (2, 2)
    assert_allclose(Z[:, 1], 1.0)
    assert_allclose(Z[:, 0], [0.2, 0.7])


def test_coef_vector_round_trip():
    cv = CoefVector(theta=np.array([1.0, -2.0]), beta=0.5)
    assert_allclose(cv.flat, [1.0, -2.0, 0.5])
    back = CoefVector.from_flat(cv.flat)
    assert_allclose(back.theta, cv.theta)
    assert back.beta == cv.beta


def test_build_labeled_offset_oracle():
    model = _toy_model()
    logq = lambda X: np.full(np.atleast_2d(X).shape[0], -0.3)
    samples = build_labeled(np.array([[0.4]]), np.array([[0.9]]), model, logq)
    # C = log n - log m + log h - log q with h = 1 on the box
    want = np.log(1) - np.log(1) + 0.0 - (-0.3)
    assert samples[0].offset == pytest.approx(want)
    assert samples[0].label == 1 and samples[1].label == 0


def test_build_labeled_rejects_points_outside_domain():
    model = _toy_model()
    logq = lambda X: np.zeros(np.atleast_2d(X).shape[0])
    with pytest.raises(ValueError):
        build_labeled(np.array([[1.4]]), np.array([[0.5]]), model, logq)


def test_classifier_prob_spec_value():
    s = LabeledSample(x=np.array([0.5]), label=1, z=np.array([0.5, 1.0]), offset=0.3)
    # psi = 1 * 0.5 + 0 * 1 + 0.3
    assert classifier_prob(np.array([1.0, 0.0]), s) == pytest.approx(
        expit(0.8), abs=1e-12
    )


def test_classifier_prob_stays_in_open_interval():
    s_hi = LabeledSample(x=np.array([0.5]), label=1, z=np.array([1.0, 1.0]), offset=750.0)
    s_lo = LabeledSample(x=np.array([0.5]), label=0, z=np.array([1.0, 1.0]), offset=-750.0)
    p_hi = classifier_prob(np.zeros(2), s_hi)
    p_lo = classifier_prob(np.zeros(2), s_lo)
    assert 0.0 < p_lo < p_hi < 1.0


@given(st.floats(-700, 700))
@settings(max_examples=200, deadline=None)
def test_logistic_symmetry(psi):
    s_plus = LabeledSample(x=np.zeros(1), label=1, z=np.array([0.0, 1.0]), offset=psi)
    s_minus = LabeledSample(x=np.zeros(1), label=1, z=np.array([0.0, 1.0]), offset=-psi)
    gamma = np.zeros(2)
    assert classifier_prob(gamma, s_plus) + classifier_prob(gamma, s_minus) == pytest.approx(
        1.0, abs=1e-12
    )


def test_log_likelihood_hand_oracle():
    z = [np.array([0.2, 1.0]), np.array([0.8, 1.0]), np.array([0.5, 1.0])]
    lab = [1, 0, 1]
    samples = [
        LabeledSample(x=np.zeros(1), label=s, z=zi, offset=0.1)
        for s, zi in zip(lab, z)
    ]
    gamma = np.array([1.5, -0.4])
    want = 0.0
    for s, zi in zip(lab, z):
        psi = zi @ gamma + 0.1
        want += s * psi - np.log1p(np.exp(psi))
    assert log_class_likelihood(gamma, samples) == pytest.approx(want, rel=1e-12)


def test_label_flip_negation_invariance(rng):
    model = _toy_model()
    logq = lambda X: np.zeros(np.atleast_2d(X).shape[0])
    X = rng.random((4, 1))
    Y = rng.random((3, 1))
    samples = build_labeled(X, Y, model, logq)
    flipped = [
        LabeledSample(x=s.x, label=1 - s.label, z=s.z, offset=-s.offset)
        for s in samples
    ]
    gamma = np.array([0.7, -0.2])
    assert log_class_likelihood(gamma, samples) == pytest.approx(
        log_class_likelihood(-gamma, flipped), rel=1e-12
    )


def test_gradient_matches_finite_differences(rng):
    model = _toy_model()
    logq = lambda X: np.zeros(np.atleast_2d(X).shape[0])
    samples = build_labeled(rng.random((6, 1)), rng.random((6, 1)), model, logq)
    gamma = np.array([0.9, -1.1])
    g = class_likelihood_grad(gamma, samples)
    h = 1e-6
    for j in range(2):
        e = np.zeros(2)
        e[j] = h
        fd = (
            log_class_likelihood(gamma + e, samples)
            - log_class_likelihood(gamma - e, samples)
        ) / (2 * h)
        assert g[j] == pytest.approx(fd, rel=1e-6, abs=1e-9)


def test_stack_samples_shapes(rng):
    model = _toy_model()
    logq = lambda X: np.zeros(np.atleast_2d(X).shape[0])
    samples = build_labeled(rng.random((4, 1)), rng.random((2, 1)), model, logq)
    Z, C, labels = stack_samples(samples)
    assert Z.shape == (6, 2)
    assert C.shape == (6,)
    assert labels.tolist() == [1, 1, 1, 1, 0, 0]
