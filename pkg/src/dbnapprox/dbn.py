"""Two-hidden-layer deep belief networks with continuous visible units.

The top two layers form a binary RBM on ``(h1, h2)``.  Given ``h1 = e_i``
the visible vector has density ``phi_{mu_i, sigma}``; for any other ``h1``
the conditional is zero, so the visible density
``p(v) = sum_i pi_1(e_i) phi_{mu_i, sigma}(v)`` integrates to
``1 - deficiency``.
"""
from __future__ import annotations

import io
import logging
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Optional

import numpy as np

from . import rbm as rbm_mod
from .densities import ParentalDensity, ShiftedScaled, TargetDensity, as_points, upsilon
from .errors import (ConvergenceError, DbnApproxError, DegenerateModelError, DimensionError,
                     DomainError, PreconditionError, UnsupportedError)
from .metrics import QuadratureSpec, check_floor, kl_divergence, lq_distance, sup_distance
from .mixture import (MixtureModel, greedy_refine, maurey_sample, representation_fit,
                      sup_fit_mixture)
from .rbm import BinaryRBM, DiscreteDistribution, synthesize
from .smoothing import (K_MAX, SIGMA0, SIGMA_RATIO, _mixture_eval, convolve, measurement_spec,
                        select_sigma)

log = logging.getLogger(__name__)

FORMAT_HEADER = "# dbnapprox-dbn v1"
DEGENERATE_DEFICIENCY = 0.999
M_CAP = 1024
KL_REDRAWS = 20
KL_ATOMS = 129
SUP_FIT_POINTS = {1: 2048, 2: 64, 3: 16}


@dataclass(frozen=True, eq=False)
class DeepBeliefNetwork:
    rbm: BinaryRBM
    shifts: np.ndarray
    sigma: float
    parent: ParentalDensity

    def __post_init__(self):
        mu = np.array(self.shifts, dtype=np.float64).reshape(self.rbm.visible_count, -1)
        if mu.shape[1] != self.parent.dim:
            raise DimensionError("shift dimension does not match the parent")
        mu.setflags(write=False)
        object.__setattr__(self, "shifts", mu)
        object.__setattr__(self, "sigma", float(self.sigma))

    def __eq__(self, other):
        if not isinstance(other, DeepBeliefNetwork):
            return NotImplemented
        return (self.rbm == other.rbm and np.array_equal(self.shifts, other.shifts)
                and self.sigma == other.sigma and self.parent == other.parent)

    __hash__ = None

    @property
    def m(self) -> int:
        return self.rbm.visible_count

    @property
    def dim(self) -> int:
        return self.parent.dim

    @property
    def component_map(self) -> dict:
        """Unit-vector state index ``1 << i`` to the conditional visible density."""
        return {1 << i: ShiftedScaled(self.parent, tuple(self.shifts[i]), self.sigma) for i in range(self.m)}

    @cached_property
    def _summary(self):
        return rbm_mod.unit_vector_summary(self.rbm)

    @property
    def unit_probs(self) -> np.ndarray:
        """``pi_1(e_i)`` from the exact first-layer marginal."""
        return self._summary.unit_probs

    @property
    def deficiency(self) -> float:
        return self._summary.deficiency

    def __call__(self, x) -> np.ndarray:
        return eval_visible(self, x)

    def quadrature_box(self):
        plo, phi_ = self.parent.effective_box()
        lo = self.shifts.min(axis=0) + self.sigma * np.asarray(plo)
        hi = self.shifts.max(axis=0) + self.sigma * np.asarray(phi_)
        return tuple(lo), tuple(hi)

    def axis_breakpoints(self):
        pb = self.parent.breakpoints()
        return tuple(tuple(float(s + self.sigma * p) for s in np.unique(self.shifts[:, k]) for p in pb[k])
                     for k in range(self.dim))


def assemble(mixture: MixtureModel, rbm: BinaryRBM) -> DeepBeliefNetwork:
    if rbm.visible_count != mixture.m:
        raise DimensionError(f"RBM has {rbm.visible_count} first-layer units but the mixture "
                             f"has {mixture.m} components")
    if rbm.hidden_count != mixture.m + 1:
        raise DimensionError(f"second hidden layer must have {mixture.m + 1} units, "
                             f"found {rbm.hidden_count}")
    return DeepBeliefNetwork(rbm, mixture.shifts, mixture.sigma, mixture.parent)


def eval_visible(dbn: DeepBeliefNetwork, x) -> np.ndarray:
    pts = as_points(x, dbn.dim)
    return _mixture_eval(dbn.parent, pts, dbn.shifts, dbn.unit_probs, dbn.sigma)


def sample_visible(dbn: DeepBeliefNetwork, seed, count: int) -> np.ndarray:
    """Draws from the normalised visible density.

    Conditioning ``h1`` on being a unit vector leaves the categorical law
    ``pi_1(e_i) / sum_j pi_1(e_j)``, which is sampled directly instead of
    by rejection.
    """
    if dbn.deficiency >= DEGENERATE_DEFICIENCY:
        raise DegenerateModelError(f"deficiency {dbn.deficiency:.6g} leaves almost no mass on unit vectors")
    probs = dbn.unit_probs / dbn.unit_probs.sum()
    rng = np.random.default_rng(seed)
    comp = rng.choice(dbn.m, size=int(count), p=probs)
    return dbn.shifts[comp] + dbn.sigma * dbn.parent.sample(rng, int(count))


@dataclass(frozen=True)
class ApproximationCertificate:
    q: float
    measured_error: float
    theory_bound: float
    m: int
    sigma: float
    smoothing_error: float
    mixture_error: float
    rbm_tv: float
    deficiency: float
    rbm_error_term: float = 0.0
    quadrature_error: float = 0.0

    @property
    def audit_bound(self) -> float:
        """Right-hand side of the triangle inequality with 3x the quadrature error as slack."""
        return self.smoothing_error + self.mixture_error + self.rbm_error_term + 3 * self.quadrature_error

    @property
    def audit_holds(self) -> bool:
        return self.measured_error <= self.audit_bound


def _stage(name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except ConvergenceError as exc:
        if exc.stage is not None:
            raise
        raise ConvergenceError(str(exc), best=exc.best, stage=name) from exc


def rbm_error_term(dbn: DeepBeliefNetwork, alpha: np.ndarray, component_norm: float) -> float:
    """``sum_i |alpha_i - pi_1(e_i)| ||phi_i|| + deficiency max_i ||phi_i||``."""
    return float(np.abs(alpha - dbn.unit_probs).sum() * component_norm + dbn.deficiency * component_norm)


def _distance(f, g, q, spec):
    return sup_distance(f, g, spec) if math.isinf(q) else lq_distance(f, g, q, spec)


def _certify(target, smoothed, mixture, dbn, synth, q, spec, theory_bound) -> ApproximationCertificate:
    """Measure every term of the triangle audit.

    With ``smoothed=None`` the mixture was fitted to the target directly,
    so the smoothing term is zero and the mixture term is ``||f - mixture||``.
    """
    norm = mixture.component_norm(q)
    measured = _distance(target, dbn, q, spec)
    if smoothed is None:
        smooth_value, smooth_err = 0.0, 0.0
        mix = _distance(target, mixture, q, spec)
    else:
        smooth = _distance(target, smoothed, q, spec)
        smooth_value, smooth_err = smooth.value, smooth.error_estimate
        mix = _distance(smoothed, mixture, q, spec)
    term = rbm_error_term(dbn, mixture.weights, norm)
    quad = measured.error_estimate + smooth_err + mix.error_estimate
    return ApproximationCertificate(float(q), measured.value, theory_bound, mixture.m, mixture.sigma,
                                    smooth_value, mix.value, synth.max_deviation, dbn.deficiency,
                                    term, quad)


def approximate_lq(target: TargetDensity, parent: ParentalDensity, q: float, m: int, epsilon: float,
                   seed, spec: Optional[QuadratureSpec] = None, refine_iterations: int = 0):
    """DBN with ``m`` first-layer units approximating ``target`` in ``L^q``.

    Budget: ``epsilon / 2`` for smoothing, ``epsilon / 4`` for the RBM,
    the rest for the mixture rate and quadrature slack.
    """
    q = float(q)
    if not (1 <= q < math.inf):
        raise DomainError("approximate_lq needs 1 <= q < inf; use approximate_sup for the sup norm")
    if not epsilon > 0:
        raise DomainError("epsilon must be positive")
    sigma = _stage("smoothing", select_sigma, target, parent, q, epsilon / 2)
    smoothed = convolve(target, parent, sigma, seed=seed)
    mixture = _stage("mixture", maurey_sample, smoothed, m, seed)
    if refine_iterations > 0:
        mixture = _stage("mixture", greedy_refine, smoothed, mixture, refine_iterations, seed=seed)
    norm = mixture.component_norm(q)
    synth = _stage("rbm", synthesize, DiscreteDistribution.from_unit_weights(mixture.weights),
                   (epsilon / 4) / (m * norm))
    dbn = assemble(mixture, synth.rbm)
    spec = spec or measurement_spec(target, parent, sigma)
    rate = 1.0 - 1.0 / min(q, 2.0)
    bound = epsilon / 2 + epsilon / 4 + 2 * upsilon(q) * norm / m ** rate
    return dbn, _certify(target, smoothed, mixture, dbn, synth, q, spec, bound)


def _sigma_grid(sigma0=SIGMA0, ratio=SIGMA_RATIO, k_max=K_MAX):
    return [sigma0 * ratio ** k for k in range(k_max + 1)]


def _fit_points(target, parent, sigma):
    spec = measurement_spec(target, parent, sigma)
    n = SUP_FIT_POINTS.get(target.dim, 16)
    return QuadratureSpec(spec.domain, spec.rule, n, breakpoints=spec.breakpoints).grid(1)


def best_sup_fit(target, parent, m: int, budget: float, sigmas=None):
    """Best sup-norm lattice fit with ``m`` components over the sigma grid.

    Scans sigma downward and stops once the fit error has clearly passed
    its minimum.
    """
    best = (math.inf, None)
    for sigma in sigmas or _sigma_grid():
        pts = _fit_points(target, parent, sigma)
        mixture, err = sup_fit_mixture(target, parent, m, sigma, pts)
        log.debug("sup fit m=%d sigma=%.6g error=%.6g", m, sigma, err)
        if err < best[0]:
            best = (err, mixture)
        if best[0] <= budget and err > 2 * best[0]:
            break
        if math.isfinite(best[0]) and err > 4 * best[0]:
            break
    return best


def approximate_sup(target: TargetDensity, parent: ParentalDensity, epsilon: float,
                    spec: Optional[QuadratureSpec] = None, m_cap: int = M_CAP, start_m: int = 1):
    """Doubling search over ``m`` for a DBN within ``epsilon`` in sup norm.

    The target must be uniformly continuous away from a null set of
    breakpoints; sup distances are measured on grids that skip them.
    ``3 epsilon / 4`` goes to the mixture fit and ``epsilon / 4`` to the RBM.
    """
    if not epsilon > 0:
        raise DomainError("epsilon must be positive")
    sup_phi = parent.sup_norm()
    if not math.isfinite(sup_phi):
        raise UnsupportedError("parent must be bounded")
    best = math.inf
    m = max(1, int(start_m))
    while m <= m_cap:
        fit_err, mixture = best_sup_fit(target, parent, m, 0.75 * epsilon)
        if fit_err <= 0.75 * epsilon:
            sigma = mixture.sigma
            norm = sigma ** (-parent.dim) * sup_phi
            synth = _stage("rbm", synthesize, DiscreteDistribution.from_unit_weights(mixture.weights),
                           (epsilon / 4) / (m * norm))
            dbn = assemble(mixture, synth.rbm)
            mspec = spec or measurement_spec(target, parent, sigma)
            measured = sup_distance(target, dbn, mspec).value
            best = min(best, measured)
            if measured <= epsilon:
                return dbn, _certify(target, None, mixture, dbn, synth, math.inf, mspec, epsilon)
        best = min(best, fit_err)
        m *= 2
    raise ConvergenceError(f"no m <= {m_cap} reached sup error {epsilon:g}; best {best:.6g}",
                           best=best, stage="mixture")


@dataclass(frozen=True)
class KLResult:
    kl: float
    theory_bound: float
    m_requested: int
    m_used: int
    M: int
    eta: float
    sigma: float
    l2_squared: float
    min_density: float
    redraws: int
    kl_error_estimate: float = 0.0

    @property
    def l2_bound(self) -> float:
        """``||f - p||^2_{L^2(Omega)} / (eta / 2)``, valid because ``p >= eta / 2`` on the grid."""
        return self.l2_squared / (self.eta / 2)


def _omega_spec(omega, target, points_per_axis=None):
    n = points_per_axis or {1: 4096, 2: 256, 3: 48}.get(len(omega[0]), 32)
    return QuadratureSpec(omega, "gauss_legendre_composite", n)


def _with_breakpoints(spec: QuadratureSpec, *densities) -> QuadratureSpec:
    lo, hi = spec.domain
    bps = []
    for k in range(spec.dim):
        pts = set(spec.breakpoints[k]) if spec.breakpoints else set()
        for dens in densities:
            for b in dens.axis_breakpoints()[k]:
                if lo[k] < b < hi[k]:
                    pts.add(float(b))
        bps.append(tuple(sorted(pts)))
    return QuadratureSpec(spec.domain, spec.rule, spec.points_per_axis, spec.tail_padding,
                          tuple(bps), spec.node_budget)


def kl_rbm_tolerance(parent: ParentalDensity, sigma: float, m: int, eta: float) -> float:
    """Per-state RBM tolerance for the KL pipeline.

    The sup-norm share is ``eta / 4``; the L^2 share is a quarter of the
    ``||phi||_2 / sqrt(m)`` sampling scale so the RBM never dominates the
    ``1/m`` KL rate.  The deficiency share matters because a sub-normalised
    visible density pays about ``delta`` in KL but only ``delta^2`` in
    L^2; since ``delta <= m * tol`` it keeps ``delta <= 1 / (16 m^2)``.
    """
    d = parent.dim
    sup_part = (eta / 4) / (m * sigma ** (-d) * parent.sup_norm())
    l2_scaled = sigma ** (-d / 2) * parent.lq_norm(2.0)
    l2_part = (parent.lq_norm(2.0) / (4 * math.sqrt(m))) / (m * l2_scaled)
    deficiency_part = 1.0 / (16.0 * m ** 3)
    return min(sup_part, l2_part, deficiency_part)


def find_M(target, parent, eta: float, m_cap: int = M_CAP):
    """Smallest doubling ``m`` at which the sup-norm stage reaches ``eta / 2``."""
    _, cert = approximate_sup(target, parent, eta / 2, m_cap=m_cap)
    return cert.m


@dataclass(frozen=True)
class KLSetup:
    """Everything in the KL pipeline that does not depend on ``m`` or the seed."""

    omega: tuple
    spec: QuadratureSpec
    eta: float
    M: int
    representation: MixtureModel
    residual: float
    phi_l2_squared: float
    target_parent_l2_squared: float

    @property
    def sigma(self) -> float:
        return self.representation.sigma


def prepare_kl(target: TargetDensity, parent: ParentalDensity, omega=None, eta: Optional[float] = None,
               spec: Optional[QuadratureSpec] = None, m_cap: int = M_CAP, atoms: int = KL_ATOMS,
               M: Optional[int] = None) -> KLSetup:
    """Verify the floors, find ``M`` and fit the lattice representation.

    The representation is the simplex L^2 fit over ``atoms`` lattice
    shifts with the smallest residual across the sigma grid.
    """
    omega = omega or target.box()
    spec = spec or _omega_spec(omega, target)
    pts, wts = spec.nodes()
    if eta is None:
        eta = float(min(target(pts).min(), parent(pts).min()))
    if not eta > 0:
        raise PreconditionError("target or parent vanishes on omega")
    _stage("precondition", _check_floor_both, target, parent, eta, pts)
    if M is None:
        M = _stage("sup", find_M, target, parent, eta, m_cap)
    best = (math.inf, None)
    for sigma in _sigma_grid(k_max=8):
        rep, resid = representation_fit(target, parent, sigma, pts, wts, atoms)
        if resid < best[0]:
            best = (resid, rep)
    fphi = lq_distance(target, parent, 2.0, _with_breakpoints(spec, target)).value ** 2
    return KLSetup(tuple(map(tuple, omega)), spec, eta, int(M), best[1], best[0],
                   parent.lq_norm(2.0) ** 2, fphi)


def approximate_kl(target: TargetDensity, parent: ParentalDensity, m: int, seed=0,
                   omega=None, eta: Optional[float] = None, spec: Optional[QuadratureSpec] = None,
                   m_cap: int = M_CAP, redraws: int = KL_REDRAWS, atoms: int = KL_ATOMS,
                   M: Optional[int] = None, setup: Optional[KLSetup] = None):
    """DBN approximation in KL on a compact ``omega`` where target and parent are at least ``eta``.

    The mixture is an ``m``-term equal-weight sample from the lattice
    representation of :func:`prepare_kl`.  A draw is kept only if the DBN
    density is at least ``eta / 2`` on every node of ``omega``; after
    ``redraws`` failures ``m`` doubles.  Pass ``setup`` to reuse the
    m-independent work across calls.
    """
    setup = setup or prepare_kl(target, parent, omega, eta, spec, m_cap, atoms, M)
    pts, _ = setup.spec.nodes()
    eta, sigma = setup.eta, setup.sigma
    m_used = int(m)
    tries = 0
    while m_used <= m_cap:
        for r in range(redraws):
            tries += 1
            mixture = maurey_sample(setup.representation, m_used,
                                    np.random.SeedSequence([int(seed), m_used, r]))
            synth = _stage("rbm", synthesize, DiscreteDistribution.from_unit_weights(mixture.weights),
                           kl_rbm_tolerance(parent, sigma, m_used, eta))
            dbn = assemble(mixture, synth.rbm)
            pmin = float(dbn(pts).min())
            if pmin >= eta / 2:
                kspec = _with_breakpoints(setup.spec, dbn)
                kl = kl_divergence(target, dbn, setup.omega, kspec)
                l2 = lq_distance(target, dbn, 2.0, kspec)
                bound = setup.M / (eta * m_used) * (8 * setup.phi_l2_squared + setup.target_parent_l2_squared)
                return dbn, KLResult(kl.value, bound, int(m), m_used, setup.M, eta, sigma, l2.value ** 2,
                                     pmin, tries, kl.error_estimate)
        m_used *= 2
    raise ConvergenceError(f"density floor eta/2 = {eta / 2:g} not reached for m <= {m_cap}",
                           best=None, stage="kl")


def _check_floor_both(target, parent, eta, pts):
    check_floor(target, eta, pts, "target")
    check_floor(parent, eta, pts, "parent")


def dumps(dbn: DeepBeliefNetwork) -> str:
    out = io.StringIO()
    out.write(FORMAT_HEADER + "\n")
    out.write(rbm_mod.dumps(dbn.rbm))
    out.write(f"parent {dbn.parent.describe()}\n")
    out.write(f"sigma {dbn.sigma!r}\n")
    out.write(f"components {dbn.m}\n")
    for i, mu in enumerate(dbn.shifts):
        out.write(f"{i} " + " ".join(repr(float(v)) for v in mu) + "\n")
    return out.getvalue()


def loads(text: str) -> DeepBeliefNetwork:
    lines = text.splitlines()
    if not lines or lines[0].strip() != FORMAT_HEADER:
        raise DomainError("missing DBN header")
    rbm, pos = rbm_mod.read_block(lines, 1)
    try:
        key, rest = lines[pos].split(" ", 1)
        if key != "parent":
            raise DomainError("expected parent line")
        parent = ParentalDensity.parse(rest)
        key, s = lines[pos + 1].split()
        if key != "sigma":
            raise DomainError("expected sigma line")
        key, count = lines[pos + 2].split()
        if key != "components" or int(count) != rbm.visible_count:
            raise DomainError("component count does not match the RBM")
        shifts = []
        for i in range(int(count)):
            parts = lines[pos + 3 + i].split()
            if int(parts[0]) != i or len(parts) != parent.dim + 1:
                raise DomainError(f"bad component row {i}")
            shifts.append([float(v) for v in parts[1:]])
    except (IndexError, ValueError) as exc:
        if isinstance(exc, DbnApproxError):
            raise
        raise DomainError(f"malformed DBN text: {exc}") from exc
    return DeepBeliefNetwork(rbm, np.array(shifts).reshape(int(count), parent.dim), float(s), parent)
