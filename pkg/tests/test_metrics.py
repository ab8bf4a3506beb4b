import math

import numpy as np
import pytest

from dbnapprox.densities import ParentalDensity, gaussian_target, uniform_target
from dbnapprox.errors import DomainError, PreconditionError, ResourceError
from dbnapprox.metrics import (QuadratureSpec, check_floor, integral, kl_divergence, kl_l2_bound_check,
                               lq_distance, lq_distance_mc, spec_for, sup_distance)


def _gauss(mu, s):
    return lambda x: np.exp(-0.5 * ((x[:, 0] - mu) / s) ** 2) / (s * math.sqrt(2 * math.pi))


def test_gauss_legendre_is_exact_for_polynomials():
    spec = QuadratureSpec(((0.0,), (2.0,)), points_per_axis=16)
    assert integral(lambda x: x[:, 0] ** 7, spec).value == pytest.approx(2 ** 8 / 8, rel=1e-14)


def test_midpoint_rule_converges():
    spec = QuadratureSpec(((0.0,), (1.0,)), rule="midpoint", points_per_axis=1000)
    assert integral(lambda x: x[:, 0] ** 2, spec).value == pytest.approx(1 / 3, abs=1e-6)


def test_breakpoints_make_steps_exact():
    f = uniform_target(0.0, 0.3)
    spec = QuadratureSpec(((-1.0,), (1.0,)), points_per_axis=16, breakpoints=((0.0, 0.3),))
    assert integral(f, spec).value == pytest.approx(1.0, abs=1e-14)


def test_l2_distance_between_gaussians():
    f, g = _gauss(0, 1), _gauss(1, 1)
    spec = QuadratureSpec(((-12.0,), (13.0,)), points_per_axis=1024)
    # ||f - g||_2^2 = 2 (4 pi)^{-1/2} (1 - e^{-1/4})
    exact = math.sqrt(2 / math.sqrt(4 * math.pi) * (1 - math.exp(-0.25)))
    rep = lq_distance(f, g, 2.0, spec)
    assert rep.value == pytest.approx(exact, rel=1e-10)
    assert rep.error_estimate < 1e-8


def test_kl_between_gaussians():
    f, g = _gauss(0, 1), _gauss(0.5, 2)
    spec = QuadratureSpec(((-15.0,), (15.0,)), points_per_axis=2048)
    exact = math.log(2) + (1 + 0.25) / 8 - 0.5
    assert kl_divergence(f, g, spec.domain, spec).value == pytest.approx(exact, abs=1e-10)


def test_kl_infinite_when_support_missing():
    f = uniform_target(0.0, 1.0)
    g = uniform_target(0.0, 0.5)
    spec = QuadratureSpec(((0.0,), (1.0,)), points_per_axis=64, breakpoints=((0.5,),))
    rep = kl_divergence(f, g, spec.domain, spec)
    assert math.isinf(rep.value) and rep.infinite_reason


def test_sup_distance():
    spec = QuadratureSpec(((-3.0,), (3.0,)), points_per_axis=4000)
    rep = sup_distance(_gauss(0, 1), lambda x: np.zeros(len(x)), spec)
    assert rep.value == pytest.approx(1 / math.sqrt(2 * math.pi), abs=1e-6)


def test_monte_carlo_distance_agrees():
    f, g = gaussian_target(0.0, 1.0), _gauss(0.3, 1.2)
    spec = QuadratureSpec(((-12.0,), (12.0,)), points_per_axis=1024)
    exact = lq_distance(f, g, 2.0, spec).value
    mc = lq_distance_mc(f, g, 2.0, f.sample, 200_000, seed=3)
    assert abs(mc.value - exact) < 5 * mc.error_estimate + 1e-3


def test_node_budget():
    with pytest.raises(ResourceError):
        QuadratureSpec(((0.0,) * 3, (1.0,) * 3), points_per_axis=400, node_budget=10_000).nodes()


def test_bad_specs():
    with pytest.raises(DomainError):
        QuadratureSpec(((1.0,), (0.0,)))
    with pytest.raises(DomainError):
        QuadratureSpec(((0.0,), (1.0,)), rule="simpson")


def test_spec_for_covers_union():
    spec = spec_for(gaussian_target(0.0, 1.0), ParentalDensity.truncated_exponential([1.0], [1.0]))
    lo, hi = spec.domain
    assert lo[0] < -5 and hi[0] > 5


def test_floor_and_kl_l2_check():
    f = uniform_target(0.0, 1.0)
    g = lambda x: 0.5 + x[:, 0]  # noqa: E731
    spec = QuadratureSpec(((0.0,), (1.0,)), points_per_axis=256)
    chk = kl_l2_bound_check(f, g, spec.domain, 0.5, spec)
    assert chk.holds and chk.kl <= chk.bound
    with pytest.raises(PreconditionError) as exc:
        check_floor(g, 0.6, spec.nodes()[0], "g")
    assert exc.value.node is not None
