import math

import numpy as np
import pytest

from dbnapprox.densities import ParentalDensity, TargetDensity, gaussian_target, uniform_target
from dbnapprox.errors import ConvergenceError, DomainError, UnsupportedError
from dbnapprox.smoothing import convolve, measurement_spec, select_sigma, smoothing_error


def test_closed_form_gaussian_convolution():
    s = convolve(gaussian_target(1.0, 0.5), ParentalDensity.gaussian(1), 0.5)
    assert s.evaluator_mode == "closed_form_gaussian"
    v = 0.5 + 0.25
    assert s.eval([1.0]) == pytest.approx(1 / math.sqrt(2 * math.pi * v))


def test_quadrature_mode_matches_closed_form():
    t, p = gaussian_target(0.0, 1.0), ParentalDensity.gaussian(1)
    exact = convolve(t, p, 0.3)
    quad = convolve(TargetDensity(t.evaluator, 1, ((-12.0,), (12.0,)), t.sampler, name="g"), p, 0.3)
    assert quad.evaluator_mode == "quadrature"
    x = np.linspace(-3, 3, 13)
    assert np.allclose(quad(x), exact(x), atol=1e-10)


def test_uniform_smoothed_by_gaussian():
    s = convolve(uniform_target(0.0, 1.0), ParentalDensity.gaussian(1), 0.1)
    from scipy.stats import norm
    x = np.array([-0.2, 0.0, 0.5, 1.1])
    exact = norm.cdf(x / 0.1) - norm.cdf((x - 1) / 0.1)
    assert np.allclose(s(x), exact, atol=1e-9)


def test_monte_carlo_mode_reports_error():
    t = gaussian_target(0.0, 1.0)
    sampler_only = TargetDensity(t.evaluator, 1, None, t.sampler, name="sampler_only")
    s = convolve(sampler_only, ParentalDensity.gaussian(1), 0.5, mc_samples=20_000, seed=1)
    exact = convolve(t, ParentalDensity.gaussian(1), 0.5)
    se = s.standard_error([0.0])[0]
    assert se > 0
    assert abs(s.eval([0.0]) - exact.eval([0.0])) < 5 * se


def test_convolve_validation():
    with pytest.raises(DomainError):
        convolve(gaussian_target(), ParentalDensity.gaussian(1), 0.0)
    with pytest.raises(DomainError):
        convolve(gaussian_target(), ParentalDensity.gaussian(2), 0.1)
    with pytest.raises(UnsupportedError):
        convolve(TargetDensity(lambda x: x[:, 0], 1), ParentalDensity.gaussian(1), 0.1)


def test_smoothing_error_shrinks_with_sigma():
    t, p = uniform_target(0.0, 1.0), ParentalDensity.gaussian(1)
    errs = [smoothing_error(t, p, s, 2.0).value for s in (0.4, 0.2, 0.1, 0.05)]
    assert all(b < a for a, b in zip(errs, errs[1:]))


def test_select_sigma():
    t, p = gaussian_target(0.0, 1.0), ParentalDensity.gaussian(1)
    sigma = select_sigma(t, p, 2.0, 0.05)
    assert smoothing_error(t, p, sigma, 2.0).value <= 0.05
    assert smoothing_error(t, p, 2 * sigma, 2.0).value > 0.05
    with pytest.raises(ConvergenceError):
        select_sigma(uniform_target(0.0, 1.0), p, math.inf, 0.1, k_max=3)


def test_measurement_spec_includes_jumps():
    t = uniform_target(0.0, 1.0)
    p = ParentalDensity.truncated_exponential([1.0], [1.0])
    spec = measurement_spec(t, p, 0.25)
    assert 0.25 in spec.breakpoints[0] and 1.25 in spec.breakpoints[0]
