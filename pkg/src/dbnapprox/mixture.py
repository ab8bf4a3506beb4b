"""Finite mixtures of shifted, scaled parental densities.

``maurey_sample`` is the empirical-mean construction: draw shifts i.i.d.
from a mixing law and weight them equally.  ``greedy_refine`` is a
deterministic accept-only-improving pass.  ``fit_rate`` measures how the
error of sampled mixtures decays with the number of components.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import linprog, minimize, nnls

from .densities import ParentalDensity, ShiftedScaled, as_points, upsilon
from .errors import DomainError, UnsupportedError
from .metrics import QuadratureSpec, lq_distance, sup_distance
from .smoothing import SmoothedDensity, _mixture_eval, measurement_spec

log = logging.getLogger(__name__)

POOL_SIZE = 512
BOOTSTRAP_RESAMPLES = 200


@dataclass(frozen=True, eq=False)
class MixtureModel:
    """``sum_i alpha_i sigma^{-d} phi((x - mu_i) / sigma)``."""

    weights: np.ndarray
    shifts: np.ndarray
    sigma: float
    parent: ParentalDensity

    def __post_init__(self):
        w = np.array(self.weights, dtype=np.float64).reshape(-1)
        mu = np.array(self.shifts, dtype=np.float64).reshape(len(w), -1)
        if len(w) < 1:
            raise DomainError("a mixture needs at least one component")
        if mu.shape[1] != self.parent.dim:
            raise DomainError("shift dimension does not match the parent")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise DomainError(f"weights must lie on the simplex (sum {w.sum()!r})")
        if not (self.sigma > 0 and math.isfinite(self.sigma)):
            raise DomainError("sigma must be positive")
        if not np.all(np.isfinite(mu)):
            raise DomainError("shifts must be finite")
        w.setflags(write=False)
        mu.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "shifts", mu)
        object.__setattr__(self, "sigma", float(self.sigma))

    @property
    def m(self) -> int:
        return len(self.weights)

    @property
    def dim(self) -> int:
        return self.parent.dim

    def __call__(self, x) -> np.ndarray:
        return _mixture_eval(self.parent, as_points(x, self.dim), self.shifts, self.weights, self.sigma)

    def eval(self, x) -> float:
        return float(self(as_points(x, self.dim))[0])

    def component(self, i: int) -> ShiftedScaled:
        return ShiftedScaled(self.parent, tuple(self.shifts[i]), self.sigma)

    def component_norm(self, q: float) -> float:
        """``||phi_{mu, sigma}||_q``, the same for every component."""
        return self.component(0).lq_norm(q)

    def sample(self, seed, count: int) -> np.ndarray:
        rng = np.random.default_rng(seed)
        comp = rng.choice(self.m, size=int(count), p=self.weights)
        return self.shifts[comp] + self.sigma * self.parent.sample(rng, int(count))

    def quadrature_box(self):
        plo, phi_ = self.parent.effective_box()
        lo = self.shifts.min(axis=0) + self.sigma * np.asarray(plo)
        hi = self.shifts.max(axis=0) + self.sigma * np.asarray(phi_)
        return tuple(lo), tuple(hi)

    def axis_breakpoints(self):
        pb = self.parent.breakpoints()
        return tuple(tuple(float(s + self.sigma * p) for s in np.unique(self.shifts[:, k]) for p in pb[k])
                     for k in range(self.dim))

    def with_weights(self, weights) -> "MixtureModel":
        return MixtureModel(_to_simplex(weights), self.shifts, self.sigma, self.parent)


def _to_simplex(w) -> np.ndarray:
    w = np.maximum(np.asarray(w, dtype=np.float64), 0.0)
    total = w.sum()
    if not total > 0:
        raise DomainError("cannot normalise an all-zero weight vector")
    w = w / total
    # absorb the last rounding ulp so the sum is 1 to machine precision
    w[np.argmax(w)] += 1.0 - w.sum()
    return w


def maurey_sample(source, m: int, seed) -> MixtureModel:
    """Equal-weight mixture of ``m`` components with shifts drawn from ``source``'s mixing law.

    ``source`` is a :class:`SmoothedDensity` (shifts ~ f, so the mixture is
    an empirical version of ``f * phi_sigma``) or a :class:`MixtureModel`
    (shifts drawn from its components in proportion to their weights).
    """
    m = int(m)
    if m < 1:
        raise DomainError("m must be at least 1")
    if isinstance(source, SmoothedDensity):
        if not source.target.has_sampler:
            raise UnsupportedError("target has no sampler; Maurey sampling needs one")
        shifts = source.target.sample(seed, m)
        parent, sigma = source.parent, source.sigma
    elif isinstance(source, MixtureModel):
        rng = np.random.default_rng(seed)
        idx = rng.choice(source.m, size=m, p=source.weights)
        shifts = source.shifts[idx]
        parent, sigma = source.parent, source.sigma
    else:
        raise UnsupportedError(f"cannot sample shifts from {type(source).__name__}")
    return MixtureModel(np.full(m, 1.0 / m), shifts, sigma, parent)


def design_matrix(parent: ParentalDensity, sigma: float, shifts: np.ndarray, pts: np.ndarray) -> np.ndarray:
    """Column ``i`` holds component ``i`` evaluated at ``pts``."""
    shifts = np.atleast_2d(shifts)
    one = np.ones(1)
    cols = [_mixture_eval(parent, pts, shifts[i:i + 1], one, sigma) for i in range(len(shifts))]
    return np.stack(cols, axis=1) if cols else np.zeros((len(pts), 0))


def simplex_least_squares(A: np.ndarray, y: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Weights on the simplex minimising ``sum_k w_k (y_k - (A alpha)_k)^2``.

    Solved as NNLS with a heavily weighted sum-to-one row, then projected.
    """
    sw = np.sqrt(w)
    M = A * sw[:, None]
    rhs = y * sw
    rho = 1e3 * max(1.0, float(np.abs(M).max()))
    M = np.vstack([M, rho * np.ones((1, A.shape[1]))])
    rhs = np.concatenate([rhs, [rho]])
    alpha, _ = nnls(M, rhs, maxiter=50 * A.shape[1] + 100)
    return _to_simplex(alpha) if alpha.sum() > 0 else np.full(A.shape[1], 1.0 / A.shape[1])


def _l2_error(A, y, w, alpha) -> float:
    r = y - A @ alpha
    return float(np.sqrt(np.sum(w * r * r)))


def candidate_pool(smoothed: SmoothedDensity, spec: QuadratureSpec, size: int = POOL_SIZE, seed=0):
    """Half target draws, half a uniform grid over the target box."""
    half = size // 2
    parts = []
    if smoothed.target.has_sampler:
        parts.append(smoothed.target.sample(np.random.default_rng(seed), half))
    lo, hi = (smoothed.target.box() if smoothed.target.support_hint is not None else spec.domain)
    d = smoothed.dim
    per_axis = max(2, int(round((size - sum(len(p) for p in parts)) ** (1.0 / d))))
    axes = [np.linspace(lo[k], hi[k], per_axis) for k in range(d)]
    grid = np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=1)
    parts.append(grid)
    return np.concatenate(parts, axis=0)


@dataclass
class RefineResult:
    mixture: MixtureModel
    errors: list = field(default_factory=list)


def greedy_refine(smoothed: SmoothedDensity, initial: MixtureModel, iterations: int,
                  spec: Optional[QuadratureSpec] = None, pool_size: int = POOL_SIZE, seed=0,
                  polish: Optional[bool] = None, return_history: bool = False):
    """Deterministic improvement of ``initial`` in L^2 distance to ``smoothed``.

    Each iteration refits the weights on the simplex, swaps the
    lightest component for the pool candidate best correlated with the
    residual, and (for small mixtures) polishes the shifts by L-BFGS with
    the weights re-solved inside the objective.  A step is kept only if
    it lowers the measured error, so the error sequence never increases.
    """
    if iterations <= 0:
        return RefineResult(initial, []) if return_history else initial
    spec = spec or measurement_spec(smoothed.target, smoothed.parent, smoothed.sigma)
    pts, wts = spec.nodes()
    y = smoothed(pts)
    parent, sigma = initial.parent, initial.sigma
    shifts = np.array(initial.shifts)
    alpha = np.array(initial.weights)
    A = design_matrix(parent, sigma, shifts, pts)
    err = _l2_error(A, y, wts, alpha)
    history = [err]
    pool = candidate_pool(smoothed, spec, pool_size, seed)
    P = design_matrix(parent, sigma, pool, pts)
    if polish is None:
        polish = initial.m * initial.dim <= 16

    for _ in range(int(iterations)):
        # weights
        a2 = simplex_least_squares(A, y, wts)
        e2 = _l2_error(A, y, wts, a2)
        if e2 < err:
            alpha, err = a2, e2
        # swap
        resid = (y - A @ alpha) * wts
        score = resid @ P
        j = int(np.argmax(score))
        i = int(np.argmin(alpha))
        s_new = shifts.copy()
        s_new[i] = pool[j]
        A_new = A.copy()
        A_new[:, i] = P[:, j]
        a_new = simplex_least_squares(A_new, y, wts)
        e_new = _l2_error(A_new, y, wts, a_new)
        if e_new < err:
            shifts, A, alpha, err = s_new, A_new, a_new, e_new
        if polish:
            def objective(flat):
                M = design_matrix(parent, sigma, flat.reshape(shifts.shape), pts)
                a = simplex_least_squares(M, y, wts)
                return _l2_error(M, y, wts, a)

            res = minimize(objective, shifts.ravel(), method="L-BFGS-B", options={"maxiter": 50})
            if res.fun < err:
                s_new = res.x.reshape(shifts.shape)
                A_new = design_matrix(parent, sigma, s_new, pts)
                a_new = simplex_least_squares(A_new, y, wts)
                e_new = _l2_error(A_new, y, wts, a_new)
                if e_new < err:
                    shifts, A, alpha, err = s_new, A_new, a_new, e_new
        history.append(err)
    out = MixtureModel(_to_simplex(alpha), shifts, sigma, parent)
    return RefineResult(out, history) if return_history else out


@dataclass(frozen=True)
class RateFit:
    m_values: tuple
    mean_errors: tuple
    slope: float
    slope_ci: tuple
    xi_estimate: float
    q: float
    errors: np.ndarray = field(repr=False, compare=False, default=None)
    bounds: tuple = ()

    @property
    def theoretical_slope(self) -> float:
        return -(1.0 - 1.0 / min(self.q, 2.0))


def trial_seed(seed, m: int, trial: int) -> np.random.SeedSequence:
    """Independent stream keyed by ``(seed, m, trial)``."""
    return np.random.SeedSequence([int(seed), int(m), int(trial)])


def loglog_slope(m_values, errors) -> float:
    x = np.log(np.asarray(m_values, dtype=np.float64))
    y = np.log(np.asarray(errors, dtype=np.float64))
    return float(np.polyfit(x, y, 1)[0])


def _norm_distance(f, g, q, spec):
    if math.isinf(q):
        return sup_distance(f, g, spec)
    return lq_distance(f, g, q, spec)


def xi_estimate(smoothed: SmoothedDensity, shifts: np.ndarray, q: float, spec: QuadratureSpec) -> float:
    """``max_mu ||f * phi_sigma - phi_{mu, sigma}||_q`` over the given shifts."""
    pts, wts = spec.nodes()
    y = smoothed(pts)
    best = 0.0
    one = np.ones(1)
    for mu in np.unique(np.atleast_2d(shifts), axis=0):
        comp = _mixture_eval(smoothed.parent, pts, mu[None, :], one, smoothed.sigma)
        if math.isinf(q):
            val = float(np.max(np.abs(y - comp)))
        else:
            val = float(np.sum(wts * np.abs(y - comp) ** q)) ** (1.0 / q)
        best = max(best, val)
    return best


def rate_trial(smoothed: SmoothedDensity, q: float, m: int, trial: int, seed, pts, wts, y):
    """One Maurey draw; returns ``(L^q error, shifts)``."""
    mix = maurey_sample(smoothed, m, trial_seed(seed, m, trial))
    err = float(np.sum(wts * np.abs(y - mix(pts)) ** q)) ** (1.0 / q)
    return err, mix.shifts


def summarize_rate(m_values, errors_by_m, q: float, xi: float, seed, safety: float = 1.0) -> RateFit:
    """Means, log-log slope and a percentile bootstrap interval from per-m error lists.

    Lists may differ in length when some trials failed.
    """
    m_values = tuple(int(m) for m in m_values)
    samples = [np.asarray(e, dtype=np.float64) for e in errors_by_m]
    if any(len(e) == 0 for e in samples):
        raise DomainError("every m needs at least one successful trial")
    means = np.array([e.mean() for e in samples])
    slope = loglog_slope(m_values, means)
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0xB007]))
    boots = []
    for _ in range(BOOTSTRAP_RESAMPLES):
        boots.append(loglog_slope(m_values, [e[rng.integers(0, len(e), len(e))].mean() for e in samples]))
    ci = (float(np.percentile(boots, 2.5)), float(np.percentile(boots, 97.5)))
    expo = 1.0 - 1.0 / min(q, 2.0)
    ups = upsilon(q)
    bounds = tuple(safety * ups * xi * m ** (-expo) for m in m_values)
    errors = np.array(samples) if len({len(e) for e in samples}) == 1 else None
    return RateFit(m_values, tuple(float(v) for v in means), slope, ci, float(xi), float(q), errors, bounds)


def fit_rate(smoothed: SmoothedDensity, q: float, m_values: Sequence[int], trials: int, seed,
             spec: Optional[QuadratureSpec] = None, threads: int = 1, safety: float = 1.0) -> RateFit:
    """Mean L^q error of Maurey mixtures per m, with a log-log slope fit.

    Per-trial streams are keyed by ``(seed, m, trial)`` and results are
    collected in key order, so the output does not depend on scheduling.
    """
    m_values = tuple(int(m) for m in m_values)
    if len(set(m_values)) < 3:
        raise DomainError("fit_rate needs at least three distinct m values")
    if trials < 10:
        raise DomainError("fit_rate needs at least ten trials")
    spec = spec or measurement_spec(smoothed.target, smoothed.parent, smoothed.sigma)
    pts, wts = spec.nodes()
    y = smoothed(pts)
    keys = [(m, t) for m in m_values for t in range(trials)]

    def job(key):
        return rate_trial(smoothed, q, key[0], key[1], seed, pts, wts, y)

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            results = list(pool.map(job, keys))
    else:
        results = [job(k) for k in keys]
    errors = [[r[0] for r in results[i * trials:(i + 1) * trials]] for i in range(len(m_values))]
    xi = xi_estimate(smoothed, np.concatenate([r[1] for r in results], axis=0), q, spec)
    return summarize_rate(m_values, errors, q, xi, seed, safety)


def shift_range(target, parent: ParentalDensity, sigma: float, mass: float = 1e-4, seed=0):
    """Box of shifts whose components can contribute to the target's bulk.

    The bulk is the target box, tightened to central quantiles when a
    sampler exists; for compactly supported parents the box is moved so
    that component supports line up with its edges.
    """
    lo, hi = (np.array(v, dtype=np.float64) for v in target.box())
    if target.has_sampler and target.gaussian_components is not None:
        draws = target.sample(np.random.default_rng(seed), 200_000)
        lo = np.quantile(draws, mass / 2, axis=0)
        hi = np.quantile(draws, 1 - mass / 2, axis=0)
    supp = parent.support()
    if supp is not None:
        a = lo - sigma * np.asarray(supp[0])
        b = hi - sigma * np.asarray(supp[1])
        lo, hi = np.minimum(a, b), np.maximum(a, b)
    return lo, hi


def shift_grid(lo, hi, m: int) -> np.ndarray:
    """``m`` shifts on a near-cubic lattice over the box (d = 1: ``linspace``)."""
    lo = np.atleast_1d(lo)
    hi = np.atleast_1d(hi)
    d = len(lo)
    if d == 1:
        pts = np.linspace(lo[0], hi[0], m) if m > 1 else np.array([(lo[0] + hi[0]) / 2])
        return pts[:, None]
    per = int(math.ceil(m ** (1.0 / d)))
    axes = [np.linspace(lo[k], hi[k], per) if per > 1 else np.array([(lo[k] + hi[k]) / 2]) for k in range(d)]
    grid = np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=1)
    idx = np.round(np.linspace(0, len(grid) - 1, m)).astype(int)
    return grid[idx]


def fit_sup(target_values: np.ndarray, A: np.ndarray):
    """Simplex weights minimising ``max_k |y_k - (A alpha)_k|`` by linear programming."""
    n, m = A.shape
    c = np.zeros(m + 1)
    c[-1] = 1.0
    ones = np.ones((n, 1))
    A_ub = np.vstack([np.hstack([A, -ones]), np.hstack([-A, -ones])])
    b_ub = np.concatenate([target_values, -target_values])
    A_eq = np.hstack([np.ones((1, m)), np.zeros((1, 1))])
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=[1.0],
                  bounds=[(0, None)] * (m + 1), method="highs")
    if res.status != 0:
        return np.full(m, 1.0 / m), math.inf
    alpha = _to_simplex(res.x[:m])
    return alpha, float(np.max(np.abs(target_values - A @ alpha)))


def sup_fit_mixture(target, parent: ParentalDensity, m: int, sigma: float, pts: np.ndarray) -> tuple:
    """m components on a regular shift lattice, weights fitted in sup norm on ``pts``."""
    lo, hi = shift_range(target, parent, sigma)
    shifts = shift_grid(lo, hi, m)
    A = design_matrix(parent, sigma, shifts, pts)
    alpha, err = fit_sup(target(pts), A)
    return MixtureModel(alpha, shifts, sigma, parent), err


def representation_fit(target, parent: ParentalDensity, sigma: float, pts, wts, atoms: int = 129):
    """Dense L^2 fit of the target by ``atoms`` lattice components; returns (mixture, L^2 residual)."""
    lo, hi = shift_range(target, parent, sigma)
    shifts = shift_grid(lo, hi, atoms)
    A = design_matrix(parent, sigma, shifts, pts)
    y = target(pts)
    alpha = simplex_least_squares(A, y, wts)
    keep = alpha > 0
    mix = MixtureModel(_to_simplex(alpha[keep]), shifts[keep], sigma, parent)
    return mix, _l2_error(A[:, keep], y, wts, mix.weights)
