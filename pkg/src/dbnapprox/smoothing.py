"""Convolution of a target with the scaled parental density and choice of the scale."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import kernels
from .densities import ParentalDensity, TargetDensity, as_points
from .errors import ConvergenceError, DomainError, UnsupportedError
from .metrics import QuadratureSpec, lq_distance, sup_distance

log = logging.getLogger(__name__)

SIGMA0 = 1.0
SIGMA_RATIO = 0.5
K_MAX = 20
MC_SAMPLES = 100_000
# nodes per axis used to discretise the target in quadrature mode
CONV_NODES = {1: 1024, 2: 96, 3: 32}


@dataclass(frozen=True)
class SmoothedDensity:
    """``f * phi_sigma`` with an evaluator chosen at construction.

    In quadrature and Monte-Carlo mode the density is itself a (large)
    mixture ``sum_k w_k phi_sigma(x - mu_k)``; ``atoms`` and ``atom_weights``
    hold it and evaluation goes through the mixture kernel.
    """

    target: TargetDensity
    parent: ParentalDensity
    sigma: float
    evaluator_mode: str
    mc_samples: int = 0
    atoms: Optional[np.ndarray] = field(default=None, repr=False, compare=False)
    atom_weights: Optional[np.ndarray] = field(default=None, repr=False, compare=False)
    gaussian_components: Optional[tuple] = None

    @property
    def dim(self) -> int:
        return self.target.dim

    def __call__(self, x) -> np.ndarray:
        pts = as_points(x, self.dim)
        if self.evaluator_mode == "closed_form_gaussian":
            out = np.zeros(pts.shape[0])
            for w, mu, v in self.gaussian_components:
                r2 = ((pts - np.asarray(mu)) ** 2).sum(axis=1)
                out += w * (2 * math.pi * v) ** (-self.dim / 2) * np.exp(-0.5 * r2 / v)
            return out
        return _mixture_eval(self.parent, pts, self.atoms, self.atom_weights, self.sigma)

    def eval(self, x) -> float:
        return float(self(as_points(x, self.dim))[0])

    def standard_error(self, x) -> np.ndarray:
        """Pointwise Monte-Carlo standard error (zero for the other modes)."""
        pts = as_points(x, self.dim)
        if self.evaluator_mode != "monte_carlo":
            return np.zeros(pts.shape[0])
        n = len(self.atoms)
        first = self(pts)
        second = _mixture_eval(self.parent, pts, self.atoms, self.atom_weights, self.sigma, power=2)
        var = np.maximum(second - first ** 2, 0.0)
        return np.sqrt(var / max(n - 1, 1))

    def quadrature_box(self):
        if self.target.support_hint is not None:
            lo, hi = self.target.box()
        else:
            lo, hi = tuple(self.atoms.min(axis=0)), tuple(self.atoms.max(axis=0))
        plo, phi_ = self.parent.effective_box()
        s = self.sigma
        return (tuple(a + s * b for a, b in zip(lo, plo)), tuple(a + s * b for a, b in zip(hi, phi_)))

    def axis_breakpoints(self):
        tb = self.target.axis_breakpoints()
        pb = self.parent.breakpoints()
        return tuple(tuple(t + self.sigma * p for t in tt for p in (pp or (0.0,)))
                     for tt, pp in zip(tb, pb))

    def sample(self, seed, count: int) -> np.ndarray:
        """Exact draws ``mu + sigma * Y`` with ``mu ~ f`` and ``Y ~ phi``."""
        ss = np.random.SeedSequence(_entropy(seed))
        a, b = ss.spawn(2)
        mu = self.target.sample(np.random.default_rng(a), count)
        return mu + self.sigma * self.parent.sample(np.random.default_rng(b), count)


def _entropy(seed):
    if isinstance(seed, np.random.SeedSequence):
        return seed.entropy
    return seed


def _mixture_eval(parent, pts, atoms, weights, sigma, power=1):
    if parent.family == "custom":
        out = np.zeros(pts.shape[0])
        for mu, w in zip(atoms, weights):
            out += w * (sigma ** -parent.dim * parent((pts - mu) / sigma)) ** power
        return out
    if power == 1:
        return kernels.mixture_density(pts, atoms, weights, sigma, parent.kernel_code,
                                       parent.rates, parent.bounds)
    if power != 2:
        raise DomainError("only first and second moments are supported")
    d = parent.dim
    if parent.family == "gaussian":
        # phi_sigma^2 = (4 pi sigma^2)^{-d/2} phi_{sigma / sqrt 2}
        const = (4 * math.pi * sigma ** 2) ** (-d / 2)
        return const * kernels.mixture_density(pts, atoms, weights, sigma / math.sqrt(2),
                                               parent.kernel_code, (), ())
    lam = np.asarray(parent.rates)
    b = np.asarray(parent.bounds)
    # phi^2 with rates lam equals c * phi with rates 2 lam on the same box
    const = float(np.prod((lam / -np.expm1(-lam * b)) ** 2 * -np.expm1(-2 * lam * b) / (2 * lam)))
    return const * sigma ** (-d) * kernels.mixture_density(pts, atoms, weights, sigma, parent.kernel_code,
                                                           tuple(2 * lam), parent.bounds)


def convolve(target: TargetDensity, parent: ParentalDensity, sigma: float,
             mode: Optional[str] = None, mc_samples: int = MC_SAMPLES, seed=0,
             nodes_per_axis: Optional[int] = None) -> SmoothedDensity:
    """Build ``f * phi_sigma``.

    Mode defaults to the closed form for Gaussian targets with a Gaussian
    parent, quadrature when the target has a bounding box, and Monte Carlo
    when it only has a sampler.
    """
    if not (sigma > 0 and math.isfinite(sigma)):
        raise DomainError("sigma must be positive")
    if target.dim != parent.dim:
        raise DomainError("target and parent dimensions differ")
    if mode is None:
        if target.gaussian_components is not None and parent.family == "gaussian":
            mode = "closed_form_gaussian"
        elif target.support_hint is not None:
            mode = "quadrature"
        elif target.has_sampler:
            mode = "monte_carlo"
        else:
            raise UnsupportedError("target has neither a bounding box nor a sampler")
    if mode == "closed_form_gaussian":
        if target.gaussian_components is None or parent.family != "gaussian":
            raise UnsupportedError("closed form needs a Gaussian-mixture target and Gaussian parent")
        comps = tuple((w, mu, v + sigma ** 2) for w, mu, v in target.gaussian_components)
        return SmoothedDensity(target, parent, float(sigma), mode, gaussian_components=comps)
    if mode == "quadrature":
        if target.support_hint is None:
            raise UnsupportedError("quadrature convolution needs a bounding box")
        n = nodes_per_axis or CONV_NODES.get(target.dim, 32)
        qs = QuadratureSpec(target.box(), "gauss_legendre_composite", n,
                            breakpoints=target.axis_breakpoints())
        pts, wts = qs.nodes()
        w = wts * target(pts)
        keep = w > 0
        return SmoothedDensity(target, parent, float(sigma), mode, 0,
                               np.ascontiguousarray(pts[keep]), np.ascontiguousarray(w[keep]))
    if mode == "monte_carlo":
        mu = target.sample(seed, mc_samples)
        return SmoothedDensity(target, parent, float(sigma), mode, int(mc_samples),
                               np.ascontiguousarray(mu), np.full(len(mu), 1.0 / len(mu)))
    raise DomainError(f"unknown evaluator mode {mode!r}")


def measurement_spec(target: TargetDensity, parent: ParentalDensity, sigma: float,
                     points_per_axis: Optional[int] = None, extra=()) -> QuadratureSpec:
    """Quadrature spec fine enough to resolve features of width sigma."""
    tlo, thi = target.box()
    plo, phi_ = parent.effective_box()
    lo = tuple(min(a, a + sigma * b) for a, b in zip(tlo, plo))
    hi = tuple(max(a, a + sigma * b) for a, b in zip(thi, phi_))
    if points_per_axis is None:
        width = max(h - l for l, h in zip(lo, hi))
        per_sigma = 24 if parent.family == "gaussian" else 48
        target_n = int(per_sigma * width / sigma)
        caps = {1: 1 << 16, 2: 1000, 3: 64}
        points_per_axis = int(min(max(target_n, 512 if target.dim == 1 else 64), caps.get(target.dim, 64)))
    bps = tuple(tuple(tb) + tuple(t + sigma * p for t in tb for p in pb)
                for tb, pb in zip(target.axis_breakpoints(), parent.breakpoints()))
    bps = tuple(b + tuple(e) for b, e in zip(bps, extra)) if extra else bps
    return QuadratureSpec((lo, hi), "gauss_legendre_composite", points_per_axis, breakpoints=bps)


def smoothing_error(target, parent, sigma, q, spec: Optional[QuadratureSpec] = None, smoothed=None):
    smoothed = smoothed or convolve(target, parent, sigma)
    spec = spec or measurement_spec(target, parent, sigma)
    if math.isinf(q):
        return sup_distance(target, smoothed, spec)
    return lq_distance(target, smoothed, q, spec)


def select_sigma(target: TargetDensity, parent: ParentalDensity, q: float, tolerance: float,
                 spec: Optional[QuadratureSpec] = None, sigma0: float = SIGMA0,
                 ratio: float = SIGMA_RATIO, k_max: int = K_MAX) -> float:
    """Largest ``sigma0 * ratio^k`` whose smoothing error is at most ``tolerance``.

    For ``q = inf`` the caller asserts the target is uniformly continuous.
    """
    if not tolerance > 0:
        raise DomainError("tolerance must be positive")
    best = (math.inf, None)
    for k in range(k_max + 1):
        sigma = sigma0 * ratio ** k
        err = smoothing_error(target, parent, sigma, q, spec).value
        log.debug("select_sigma k=%d sigma=%.6g error=%.6g", k, sigma, err)
        if err < best[0]:
            best = (err, sigma)
        if err <= tolerance:
            return sigma
    raise ConvergenceError(f"no sigma on the grid reached error {tolerance:g}; best {best[0]:.6g} "
                           f"at sigma={best[1]}", best=best)
