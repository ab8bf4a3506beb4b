import numpy as np
import pytest

from dbnapprox import _pykernels, kernels

ck = pytest.importorskip("dbnapprox._ckernels")


def _case(family, d, seed):
    rng = np.random.default_rng(seed)
    pts = rng.normal(size=(300, d))
    shifts = rng.normal(size=(7, d))
    w = rng.dirichlet(np.ones(7))
    rates = np.full(d, 1.3)
    bounds = np.full(d, 2.0)
    return pts, shifts, w, 0.4, family, rates, bounds


@pytest.mark.parametrize("family", [kernels.GAUSSIAN, kernels.TRUNCATED_EXPONENTIAL])
@pytest.mark.parametrize("d", [1, 2, 3])
def test_mixture_density_backends_agree(family, d):
    args = _case(family, d, d)
    assert np.allclose(ck.mixture_density(*args), _pykernels.mixture_density(*args), rtol=1e-13, atol=1e-300)


def test_log_esf_backends_agree():
    r = np.random.default_rng(0).normal(size=12) * 3
    assert np.allclose(ck.log_esf(r), _pykernels.log_esf(r), rtol=1e-12)
    # e_k of all-ones is C(n, k)
    from math import comb, log
    assert np.allclose(_pykernels.log_esf(np.zeros(6)), [log(comb(6, k)) for k in range(7)])


def test_visible_log_weights_backends_agree():
    rng = np.random.default_rng(1)
    W, b, c = rng.normal(size=(5, 4)), rng.normal(size=5), rng.normal(size=4)
    assert np.allclose(ck.visible_log_weights(W, b, c), _pykernels.visible_log_weights(W, b, c), rtol=1e-12)


def test_backend_selected():
    assert kernels.BACKEND in ("cython", "python")
