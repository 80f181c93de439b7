"""Clipping, privatization, and two-point observation tests."""

import numpy as np
import pytest

from fiberopt import mechanism
from fiberopt.errors import BatchShapeError, ConstraintViolation, InvalidParameter
from fiberopt.mechanism import DpMechanismConfig, TwoPointConfig


def test_clip_inside_ball_is_identity():
    u = np.array([0.3, -0.4])  # norm 0.5
    out = mechanism.clip(u, 1.0)
    np.testing.assert_array_equal(out, u)
    assert out is not u  # defensive copy


def test_clip_outside_ball_scales_onto_sphere():
    rng = np.random.default_rng(0)
    for _ in range(50):
        u = rng.normal(size=7) * rng.uniform(0.1, 20)
        c = rng.uniform(0.1, 5)
        out = mechanism.clip(u, c)
        assert np.linalg.norm(out) <= c * (1 + 1e-12)
        # direction preserved
        cos = out @ u / (np.linalg.norm(out) * np.linalg.norm(u))
        assert cos == pytest.approx(1.0, abs=1e-12)


def test_clip_rejects_bad_norm():
    with pytest.raises(InvalidParameter):
        mechanism.clip(np.ones(3), 0.0)


def test_dp_config_sigma_w():
    dp = DpMechanismConfig(clip_norm=2.0, batch_size=100, noise_multiplier=5.0)
    assert dp.sigma_w == pytest.approx(5.0 * 2.0 / 100)
    with pytest.raises(InvalidParameter):
        DpMechanismConfig(clip_norm=0.0, batch_size=10, noise_multiplier=1.0)
    with pytest.raises(InvalidParameter):
        DpMechanismConfig(clip_norm=1.0, batch_size=0, noise_multiplier=1.0)
    with pytest.raises(InvalidParameter):
        DpMechanismConfig(clip_norm=1.0, batch_size=10, noise_multiplier=-1.0)


def test_two_point_weight_formula_and_convexity():
    cfg = TwoPointConfig(kappa=0.6, gamma=0.7)
    assert cfg.mixing_weight == pytest.approx((1 - 0.6) / (0.6 * 0.7))
    assert 0.0 <= cfg.mixing_weight <= 1.0
    # kappa = 1 turns the lookahead term off entirely
    assert TwoPointConfig(kappa=1.0, gamma=0.7).mixing_weight == 0.0
    # gamma below (1-kappa)/kappa would need weight > 1
    with pytest.raises(ConstraintViolation):
        mechanism.two_point_weight(TwoPointConfig(kappa=0.5, gamma=0.5))


def test_two_point_config_validation():
    with pytest.raises(InvalidParameter):
        TwoPointConfig(kappa=0.0, gamma=1.0)
    with pytest.raises(InvalidParameter):
        TwoPointConfig(kappa=1.1, gamma=1.0)
    with pytest.raises(InvalidParameter):
        TwoPointConfig(kappa=0.5, gamma=0.0)


def test_single_point_noiseless_is_clipped_mean():
    rng = np.random.default_rng(1)
    grads = rng.normal(size=(8, 4)) * 3.0
    dp = DpMechanismConfig(clip_norm=1.0, batch_size=8, noise_multiplier=0.0)
    got = mechanism.observe_single_point(grads, dp, rng)
    want = np.mean([mechanism.clip(g, 1.0) for g in grads], axis=0)
    np.testing.assert_allclose(got, want, rtol=0, atol=1e-15)


def test_single_point_noise_variance():
    dp = DpMechanismConfig(clip_norm=1.0, batch_size=4, noise_multiplier=2.0)
    rng = np.random.default_rng(2)
    grads = np.zeros((4, 3))
    draws = np.array([mechanism.observe_single_point(grads, dp, rng)
                      for _ in range(4000)])
    emp = draws.var(axis=0, ddof=1)
    np.testing.assert_allclose(emp, dp.sigma_w**2, rtol=0.1)


def test_replace_one_sensitivity_bound():
    """Swapping one example moves the clipped mean by at most 2C/B in L2."""
    rng = np.random.default_rng(3)
    dp = DpMechanismConfig(clip_norm=0.7, batch_size=16, noise_multiplier=0.0)
    for _ in range(20):
        grads = rng.normal(size=(16, 5)) * rng.uniform(0.1, 10)
        swapped = grads.copy()
        swapped[0] = rng.normal(size=5) * 50
        a = mechanism.observe_single_point(grads, dp, rng)
        b = mechanism.observe_single_point(swapped, dp, rng)
        assert np.linalg.norm(a - b) <= 2 * 0.7 / 16 + 1e-12


def test_two_point_noiseless_mixture():
    rng = np.random.default_rng(4)
    cfg = TwoPointConfig(kappa=0.6, gamma=0.7)
    a = cfg.mixing_weight
    g0 = rng.normal(size=(6, 3)) * 0.1  # inside the clip ball
    g1 = rng.normal(size=(6, 3)) * 0.1
    dp = DpMechanismConfig(clip_norm=10.0, batch_size=6, noise_multiplier=0.0)
    got = mechanism.observe_two_point(g0, g1, cfg, dp, rng)
    want = (a * g1 + (1 - a) * g0).mean(axis=0)
    np.testing.assert_allclose(got, want, atol=1e-14)


def test_two_point_mixture_clipped_per_example():
    """The convex mixture is clipped per example before averaging."""
    cfg = TwoPointConfig(kappa=0.5, gamma=1.0)  # a = 1
    g0 = np.zeros((2, 2))
    g1 = np.array([[10.0, 0.0], [0.0, 10.0]])
    dp = DpMechanismConfig(clip_norm=1.0, batch_size=2, noise_multiplier=0.0)
    got = mechanism.observe_two_point(g0, g1, cfg, dp, np.random.default_rng(0))
    np.testing.assert_allclose(got, [0.5, 0.5], atol=1e-15)


def test_batch_shape_errors():
    dp = DpMechanismConfig(clip_norm=1.0, batch_size=4, noise_multiplier=0.0)
    cfg = TwoPointConfig(kappa=0.6, gamma=0.7)
    rng = np.random.default_rng(0)
    with pytest.raises(BatchShapeError):
        mechanism.observe_single_point(np.zeros((3, 2)), dp, rng)
    with pytest.raises(BatchShapeError):
        mechanism.observe_two_point(np.zeros((4, 2)), np.zeros((5, 2)), cfg, dp, rng)
