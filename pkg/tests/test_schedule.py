import numpy as np
import pytest

from rollguide.errors import NumericError, ParameterError, ShapeError
from rollguide.schedule import (ddpm_posterior_mean, forward_diffuse,
                                make_linear_schedule, schedule_from_betas,
                                tweedie_x0)


def test_linear_schedule_endpoints_and_identities():
    sched = make_linear_schedule(100, 1e-4, 0.02)
    assert sched.T == 100
    assert sched.beta(1) == pytest.approx(1e-4)
    assert sched.beta(100) == pytest.approx(0.02)
    for t in (1, 7, 50, 100):
        assert sched.alpha(t) == pytest.approx(1.0 - sched.beta(t))
    bars = np.array([sched.alpha_bar(t) for t in range(1, 101)])
    assert np.all(np.diff(bars) < 0)
    assert np.all((bars > 0) & (bars < 1))
    assert sched.alpha_bar(0) == 1.0


def test_alpha_bar_is_cumulative_product():
    sched = make_linear_schedule(20, 1e-3, 0.1)
    prod = 1.0
    for t in range(1, 21):
        prod *= sched.alpha(t)
        assert sched.alpha_bar(t) == pytest.approx(prod, rel=1e-14)


def test_posterior_sigma_matches_closed_form():
    sched = make_linear_schedule(50, 1e-3, 0.2)
    for t in (2, 10, 50):
        expected = np.sqrt((1.0 - sched.alpha_bar(t - 1))
                           / (1.0 - sched.alpha_bar(t)) * sched.beta(t))
        assert sched.sigma(t) == pytest.approx(expected, rel=1e-14)


def test_beta_sigma_mode():
    sched = make_linear_schedule(50, 1e-3, 0.2, sigma_mode="beta")
    for t in (1, 25, 50):
        assert sched.sigma(t) == pytest.approx(np.sqrt(sched.beta(t)))


def test_schedule_validation():
    with pytest.raises(ParameterError):
        make_linear_schedule(0)
    with pytest.raises(ParameterError):
        make_linear_schedule(10, 0.0, 0.1)
    with pytest.raises(ParameterError):
        make_linear_schedule(10, 0.2, 0.1)
    with pytest.raises(ParameterError):
        make_linear_schedule(10, 0.1, 1.0)
    with pytest.raises(ParameterError):
        make_linear_schedule(10, 0.1, 0.2, sigma_mode="nope")
    with pytest.raises(ParameterError):
        schedule_from_betas(np.array([[0.1]]))
    with pytest.raises(ParameterError):
        schedule_from_betas(np.array([0.1, 1.5]))


def test_step_bounds_checked():
    sched = make_linear_schedule(10)
    with pytest.raises(ParameterError):
        sched.beta(0)
    with pytest.raises(ParameterError):
        sched.alpha_bar(11)


def test_forward_diffuse_closed_form():
    sched = make_linear_schedule(30, 1e-3, 0.1)
    rng = np.random.default_rng(0)
    x0 = rng.standard_normal((4, 3))
    eps = rng.standard_normal((4, 3))
    t = 17
    ab = sched.alpha_bar(t)
    got = forward_diffuse(x0, t, eps, sched)
    np.testing.assert_allclose(got, np.sqrt(ab) * x0 + np.sqrt(1 - ab) * eps,
                               rtol=1e-14)
    with pytest.raises(ShapeError):
        forward_diffuse(x0, t, eps[:2], sched)


def test_tweedie_inverts_forward_map():
    sched = make_linear_schedule(30, 1e-3, 0.1)
    rng = np.random.default_rng(1)
    x0 = rng.standard_normal(5)
    eps = rng.standard_normal(5)
    for t in (1, 15, 30):
        x_t = forward_diffuse(x0, t, eps, sched)
        np.testing.assert_allclose(tweedie_x0(x_t, t, eps, sched), x0,
                                   rtol=1e-12, atol=1e-12)
    # t = 0 is the identity
    np.testing.assert_allclose(tweedie_x0(x0, 0, np.zeros(5), sched), x0)
    with pytest.raises(ShapeError):
        tweedie_x0(x0, 1, eps[:2], sched)


def test_posterior_mean_matches_x0_parameterization():
    # Independent oracle: the q(x_{t-1} | x_t, x0) mean written in terms of
    # x0 and x_t must equal the eps-parameterized form.
    sched = make_linear_schedule(40, 1e-3, 0.15)
    rng = np.random.default_rng(2)
    x0 = rng.standard_normal(6)
    eps = rng.standard_normal(6)
    for t in (2, 20, 40):
        x_t = forward_diffuse(x0, t, eps, sched)
        ab = sched.alpha_bar(t)
        ab_prev = sched.alpha_bar(t - 1)
        beta = sched.beta(t)
        alpha = sched.alpha(t)
        oracle = (np.sqrt(ab_prev) * beta / (1.0 - ab)) * x0 \
            + (np.sqrt(alpha) * (1.0 - ab_prev) / (1.0 - ab)) * x_t
        got = ddpm_posterior_mean(x_t, t, eps, sched)
        np.testing.assert_allclose(got, oracle, rtol=1e-11, atol=1e-12)
