import math
from fractions import Fraction

import numpy as np
import pytest

from dbnapprox.densities import (ParentalDensity, ShiftedScaled, as_points, counterexample_constant,
                                 counterexample_constant_exact, counterexample_target, gaussian_mixture_target,
                                 gaussian_target, piecewise_constant_target, truncated_exponential_target,
                                 uniform_target, upsilon, upsilon_printed)
from dbnapprox.errors import DomainError, UnsupportedError
from dbnapprox.metrics import QuadratureSpec, integral, lq_norm


@pytest.mark.parametrize("d", [1, 2, 3])
def test_gaussian_parent_integrates_to_one(d):
    p = ParentalDensity.gaussian(d)
    spec = QuadratureSpec(p.effective_box(), points_per_axis={1: 512, 2: 128, 3: 96}[d])
    assert integral(p, spec).value == pytest.approx(1.0, abs=1e-10)


def test_gaussian_norm_matches_quadrature():
    p = ParentalDensity.gaussian(1)
    spec = QuadratureSpec(p.effective_box(), points_per_axis=2048)
    for q in (1.0, 1.25, 2.0, 3.5):
        assert p.lq_norm(q) == pytest.approx(lq_norm(p, q, spec).value, abs=1e-12)
    assert p.lq_norm(math.inf) == pytest.approx((2 * math.pi) ** -0.5)


def test_truncated_exponential_norms():
    p = ParentalDensity.truncated_exponential([2.0, 0.5], [1.0, 3.0])
    spec = QuadratureSpec(p.effective_box(), points_per_axis=256, breakpoints=p.breakpoints())
    for q in (1.0, 2.0, 4.0):
        assert p.lq_norm(q) == pytest.approx(lq_norm(p, q, spec).value, rel=1e-12)
    assert p.sup_norm() == pytest.approx(p.lq_norm(math.inf))
    assert p(np.array([[-0.1, 1.0]]))[0] == 0.0


def test_parent_validation():
    with pytest.raises(DomainError):
        ParentalDensity.gaussian(4)
    with pytest.raises(DomainError):
        ParentalDensity.truncated_exponential([1.0], [0.0])
    with pytest.raises(DomainError):
        ParentalDensity.gaussian(1).lq_norm(0.5)
    with pytest.raises(DomainError):
        as_points(np.array([[np.nan]]), 1)


def test_custom_parent_needs_quadrature_for_norms():
    p = ParentalDensity.custom(lambda x: np.where(np.abs(x[:, 0]) <= 0.5, 1.0, 0.0), 1, ((-0.5,), (0.5,)), sup=1.0)
    with pytest.raises(UnsupportedError):
        p.lq_norm(2.0)
    assert p.sup_norm() == 1.0


def test_describe_parse_round_trip():
    for p in (ParentalDensity.gaussian(2), ParentalDensity.truncated_exponential([0.1, 3.0], [1.0, 0.25])):
        assert ParentalDensity.parse(p.describe()) == p


def test_samplers_match_moments():
    p = ParentalDensity.truncated_exponential([1.0], [1.0])
    x = p.sample(0, 200_000)[:, 0]
    mean = 1 / 1.0 - 1.0 * math.exp(-1.0) / (1 - math.exp(-1.0))
    assert x.mean() == pytest.approx(mean, abs=5e-3)
    assert 0 <= x.min() and x.max() <= 1
    g = gaussian_mixture_target([0.3, 0.7], [(-2.0,), (1.0,)], [0.5, 1.0])
    assert g.sample(1, 200_000).mean() == pytest.approx(0.3 * -2 + 0.7 * 1, abs=1e-2)


def test_shifted_scaled_norm_scaling():
    p = ParentalDensity.gaussian(2)
    s = ShiftedScaled(p, (1.0, -1.0), 0.25)
    # ||phi_sigma||_q = sigma^{-d(1 - 1/q)} ||phi||_q
    assert s.lq_norm(2.0) == pytest.approx(0.25 ** (-2 * 0.5) * p.lq_norm(2.0))
    assert s.eval([1.0, -1.0]) == pytest.approx(p.eval([0.0, 0.0]) / 0.25 ** 2)


@pytest.mark.parametrize("target", [
    gaussian_target(0.5, 2.0),
    uniform_target(-1.0, 2.0),
    truncated_exponential_target([1.5], [2.0]),
    counterexample_target(3),
    piecewise_constant_target([0.0, 0.2, 1.0], [3.0, 1.0]),
])
def test_targets_integrate_to_one(target):
    lo, hi = target.box()
    spec = QuadratureSpec((lo, hi), points_per_axis=2048, breakpoints=target.axis_breakpoints())
    assert integral(target, spec).value == pytest.approx(1.0, abs=1e-9)


def test_counterexample_constant():
    assert counterexample_constant_exact(2) == Fraction(16, 15)
    for m in (1, 5, 64):
        assert float(counterexample_constant_exact(m)) == pytest.approx(counterexample_constant(m), rel=1e-15)
    f = counterexample_target(4)
    assert f.eval([0.0]) == pytest.approx(counterexample_constant(4) / 2)
    assert f.eval([0.5]) == pytest.approx(counterexample_constant(4))


def test_upsilon_values():
    assert upsilon(1.0) == 1.0 and upsilon(2.0) == 1.0
    assert upsilon(4.0) == pytest.approx(3 ** 0.25, abs=1e-12)
    assert upsilon(3.0) == pytest.approx(upsilon_printed(3.0), abs=1e-12)
    assert upsilon_printed(4.0) - upsilon(4.0) > 0.3
    with pytest.raises(DomainError):
        upsilon(math.inf)
