import math

import numpy as np
import pytest

from dbnapprox import dbn as dbn_mod
from dbnapprox.densities import ParentalDensity, gaussian_target, truncated_exponential_target, uniform_target
from dbnapprox.errors import ConvergenceError, DegenerateModelError, DimensionError, DomainError, PreconditionError
from dbnapprox.metrics import QuadratureSpec, integral
from dbnapprox.mixture import MixtureModel
from dbnapprox.rbm import BinaryRBM, DiscreteDistribution, synthesize, unit_vector_rbm

G1 = ParentalDensity.gaussian(1)


def _net(alpha=(0.2, 0.3, 0.5), sharpness=None, parent=G1):
    mix = MixtureModel(list(alpha), [[-1.0], [0.0], [2.0]][:len(alpha)], 0.5, parent)
    if sharpness is None:
        rbm = synthesize(DiscreteDistribution.from_unit_weights(alpha), 1e-8).rbm
    else:
        rbm = unit_vector_rbm(np.asarray(alpha), sharpness)
    return dbn_mod.assemble(mix, rbm), mix


def test_assembled_density_tracks_mixture():
    net, mix = _net()
    x = np.linspace(-4, 5, 50)
    assert np.allclose(net(x), mix(x), atol=1e-7)
    spec = QuadratureSpec(net.quadrature_box(), points_per_axis=1024)
    assert integral(net, spec).value == pytest.approx(1 - net.deficiency, abs=1e-10)
    assert set(net.component_map) == {1, 2, 4}


def test_assemble_checks_layer_sizes():
    mix = MixtureModel([0.5, 0.5], [[0.0], [1.0]], 1.0, G1)
    with pytest.raises(DimensionError):
        dbn_mod.assemble(mix, BinaryRBM.zeros(3, 4))
    with pytest.raises(DimensionError):
        dbn_mod.assemble(mix, BinaryRBM.zeros(2, 2))


def test_sampling_uses_normalised_unit_probs():
    net, _ = _net()
    x = dbn_mod.sample_visible(net, 0, 100_000)
    assert x.mean() == pytest.approx(0.2 * -1 + 0.5 * 2, abs=0.02)
    assert np.array_equal(x, dbn_mod.sample_visible(net, 0, 100_000))


def test_degenerate_network_refuses_to_sample():
    net, _ = _net(sharpness=-30.0)
    assert net.deficiency >= dbn_mod.DEGENERATE_DEFICIENCY
    with pytest.raises(DegenerateModelError):
        dbn_mod.sample_visible(net, 0, 10)


def test_approximate_lq_certificate():
    net, cert = dbn_mod.approximate_lq(gaussian_target(), G1, 2.0, 32, 0.2, seed=1)
    assert cert.audit_holds and cert.measured_error <= cert.audit_bound
    # per-state RBM tolerance is (eps / 4) / (m ||phi_sigma||_2)
    assert cert.rbm_tv <= (0.2 / 4) / (32 * G1.lq_norm(2.0) / math.sqrt(cert.sigma))
    assert net.m == 32 and net.rbm.hidden_count == 33
    with pytest.raises(DomainError):
        dbn_mod.approximate_lq(gaussian_target(), G1, math.inf, 8, 0.1, 0)


def test_refinement_does_not_hurt():
    target = gaussian_target()
    _, plain = dbn_mod.approximate_lq(target, G1, 2.0, 8, 0.2, seed=2)
    _, refined = dbn_mod.approximate_lq(target, G1, 2.0, 8, 0.2, seed=2, refine_iterations=5)
    assert refined.mixture_error <= plain.mixture_error + 1e-12


def test_approximate_sup_uniform_with_flat_parent():
    parent = ParentalDensity.truncated_exponential([0.1], [1.0])
    net, cert = dbn_mod.approximate_sup(uniform_target(0.0, 1.0), parent, 0.1)
    assert cert.measured_error <= 0.1 and cert.audit_holds
    assert math.isinf(cert.q)


def test_approximate_sup_reports_convergence_failure():
    parent = ParentalDensity.truncated_exponential([1.0], [1.0])
    with pytest.raises(ConvergenceError) as exc:
        dbn_mod.approximate_sup(uniform_target(0.0, 1.0), parent, 0.05, m_cap=4)
    assert exc.value.stage == "mixture"


def test_kl_pipeline_small():
    target = truncated_exponential_target([1.0], [1.0])
    parent = ParentalDensity.truncated_exponential([0.5], [1.0])
    setup = dbn_mod.prepare_kl(target, parent, ((0.0,), (1.0,)))
    net, res = dbn_mod.approximate_kl(target, parent, 16, seed=4, setup=setup)
    assert res.kl <= res.theory_bound
    assert res.min_density >= res.eta / 2
    assert res.kl <= res.l2_bound + 1e-9
    again = dbn_mod.approximate_kl(target, parent, 16, seed=4, setup=setup)[1]
    assert again == res


def test_kl_requires_floor():
    with pytest.raises(PreconditionError):
        dbn_mod.prepare_kl(uniform_target(0.0, 1.0), G1, ((0.0,), (1.0,)), eta=0.5)


def test_dbn_text_round_trip():
    parent = ParentalDensity.truncated_exponential([0.3], [2.0])
    net, _ = _net(parent=parent)
    text = dbn_mod.dumps(net)
    back = dbn_mod.loads(text)
    assert back == net and dbn_mod.dumps(back) == text
    with pytest.raises(DomainError):
        dbn_mod.loads(text.replace("components 3", "components 2"))
    with pytest.raises(DomainError):
        dbn_mod.loads("nonsense")
