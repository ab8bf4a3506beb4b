"""Parental and target densities.

Parental densities are the base shapes whose shifted and scaled copies
serve as the DBN's visible conditionals.  Target densities are the things
being approximated; they are black-box evaluators with optional bounding
box, exact sampler, closed-form Gaussian structure and known breakpoints
(points where the density is not smooth, used to align quadrature panels).

Points are passed as arrays of shape ``(N, d)``; for ``d = 1`` a flat
array of length ``N`` is accepted as well.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate, special

from . import kernels
from .errors import DomainError, UnsupportedError

# Box half-width, in standard deviations, outside which Gaussian tail mass
# is below 1e-10 in every dimension we support.
GAUSSIAN_PAD = 12.0
MAX_DIM = 3

Box = tuple  # ((lo_1, ..., lo_d), (hi_1, ..., hi_d))


def as_points(x, dim: int) -> np.ndarray:
    """Coerce ``x`` to a float array of shape ``(N, dim)`` and reject non-finite values."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(-1, 1) if dim == 1 else arr.reshape(1, -1)
    if arr.ndim != 2 or arr.shape[1] != dim:
        raise DomainError(f"expected points of dimension {dim}, got shape {np.shape(x)}")
    if not np.all(np.isfinite(arr)):
        raise DomainError("density evaluated at a non-finite point")
    return arr


def _box(lo, hi) -> Box:
    lo = tuple(float(v) for v in np.atleast_1d(lo))
    hi = tuple(float(v) for v in np.atleast_1d(hi))
    if len(lo) != len(hi) or any(a >= b for a, b in zip(lo, hi)):
        raise DomainError(f"empty box {lo} x {hi}")
    return (lo, hi)


def _check_dim(dim: int, max_dim: int = MAX_DIM) -> int:
    dim = int(dim)
    if dim < 1:
        raise DomainError("dimension must be positive")
    if dim > max_dim:
        raise DomainError(f"dimension {dim} exceeds the configured cap {max_dim}")
    return dim


@dataclass(frozen=True)
class ParentalDensity:
    """A parental density phi on R^d.

    ``family`` is one of ``"gaussian"``, ``"truncated_exponential"`` or
    ``"custom"``.  Truncated exponential parameters are per-coordinate
    ``rates`` (lambda_i) and truncation ``bounds`` (b_i).
    """

    family: str
    dim: int
    rates: tuple = ()
    bounds: tuple = ()
    evaluator: Optional[Callable] = field(default=None, compare=False, repr=False)
    box: Optional[Box] = None
    sampler: Optional[Callable] = field(default=None, compare=False, repr=False)
    sup: Optional[float] = None

    @classmethod
    def gaussian(cls, dim: int = 1, max_dim: int = MAX_DIM) -> "ParentalDensity":
        return cls("gaussian", _check_dim(dim, max_dim))

    @classmethod
    def truncated_exponential(cls, rates, bounds, max_dim: int = MAX_DIM) -> "ParentalDensity":
        rates = tuple(float(v) for v in np.atleast_1d(rates))
        bounds = tuple(float(v) for v in np.atleast_1d(bounds))
        if len(rates) != len(bounds):
            raise DomainError("rates and bounds must have the same length")
        if any(not (v > 0 and math.isfinite(v)) for v in rates + bounds):
            raise DomainError("truncated exponential needs positive finite rates and bounds")
        return cls("truncated_exponential", _check_dim(len(rates), max_dim), rates, bounds)

    @classmethod
    def custom(cls, evaluator, dim, box, sampler=None, sup=None) -> "ParentalDensity":
        """Black-box parent; norms fall back to quadrature over ``box``."""
        return cls("custom", _check_dim(dim), evaluator=evaluator, box=_box(*box),
                   sampler=sampler, sup=sup)

    def __post_init__(self):
        if self.family not in ("gaussian", "truncated_exponential", "custom"):
            raise DomainError(f"unknown parental family {self.family!r}")

    @property
    def kernel_code(self) -> Optional[int]:
        if self.family == "gaussian":
            return kernels.GAUSSIAN
        if self.family == "truncated_exponential":
            return kernels.TRUNCATED_EXPONENTIAL
        return None

    def __call__(self, x) -> np.ndarray:
        pts = as_points(x, self.dim)
        if self.family == "custom":
            return np.asarray(self.evaluator(pts), dtype=np.float64)
        return kernels.mixture_density(pts, np.zeros((1, self.dim)), np.ones(1), 1.0,
                                       self.kernel_code, self.rates, self.bounds)

    def eval(self, x) -> float:
        """Density value at a single point."""
        pts = as_points(x, self.dim)
        if pts.shape[0] != 1:
            raise DomainError("eval takes a single point; call the density for batches")
        return float(self(pts)[0])

    def support(self) -> Optional[Box]:
        """Exact support box, or None for unbounded support."""
        if self.family == "truncated_exponential":
            return ((0.0,) * self.dim, self.bounds)
        if self.family == "custom":
            return self.box
        return None

    def effective_box(self) -> Box:
        """Box holding all but < 1e-10 of the mass."""
        if self.family == "gaussian":
            return ((-GAUSSIAN_PAD,) * self.dim, (GAUSSIAN_PAD,) * self.dim)
        return self.support()

    def breakpoints(self) -> tuple:
        """Per-axis coordinates where the density jumps."""
        if self.family == "truncated_exponential":
            return tuple((0.0, b) for b in self.bounds)
        return tuple(() for _ in range(self.dim))

    def lq_norm(self, q: float) -> float:
        """Closed-form ``||phi||_{L^q}``; ``q = inf`` gives the supremum."""
        q = float(q)
        if not q >= 1:
            raise DomainError("q must be >= 1")
        if self.family == "gaussian":
            d = self.dim
            if math.isinf(q):
                return (2 * math.pi) ** (-d / 2)
            # int phi^q = (2 pi)^{d(1-q)/2} q^{-d/2}
            return (2 * math.pi) ** (d * (1 - q) / (2 * q)) * q ** (-d / (2 * q))
        if self.family == "truncated_exponential":
            out = 1.0
            for lam, b in zip(self.rates, self.bounds):
                mass = -math.expm1(-lam * b)
                if math.isinf(q):
                    out *= lam / mass
                else:
                    out *= lam ** (1 - 1 / q) / (q ** (1 / q) * mass) * (-math.expm1(-q * lam * b)) ** (1 / q)
            return out
        raise UnsupportedError("closed-form norms exist only for gaussian and truncated_exponential; "
                               "use metrics.lq_norm for custom densities")

    def sup_norm(self) -> float:
        if self.family == "custom":
            if self.sup is None:
                raise UnsupportedError("custom parent without a declared supremum")
            return float(self.sup)
        return self.lq_norm(math.inf)

    def sample(self, seed, count: int) -> np.ndarray:
        """``count`` i.i.d. draws as an array of shape ``(count, d)``."""
        rng = np.random.default_rng(seed)
        count = int(count)
        if self.family == "gaussian":
            return rng.standard_normal((count, self.dim))
        if self.family == "truncated_exponential":
            lam = np.asarray(self.rates)
            b = np.asarray(self.bounds)
            u = rng.random((count, self.dim))
            # inverse CDF of lam e^{-lam x} / (1 - e^{-lam b}) on [0, b]
            return -np.log1p(u * np.expm1(-lam * b)) / lam
        if self.sampler is None:
            raise UnsupportedError("custom parent has no sampler")
        return np.asarray(self.sampler(rng, count), dtype=np.float64).reshape(count, self.dim)

    def describe(self) -> str:
        if self.family == "truncated_exponential":
            return (f"truncated_exponential rates={','.join(map(repr, self.rates))} "
                    f"bounds={','.join(map(repr, self.bounds))}")
        if self.family == "gaussian":
            return f"gaussian dim={self.dim}"
        return f"custom dim={self.dim}"

    @classmethod
    def parse(cls, text: str) -> "ParentalDensity":
        """Inverse of :meth:`describe` for the two closed-form families."""
        parts = text.split()
        kv = dict(p.split("=", 1) for p in parts[1:])
        if parts[0] == "gaussian":
            return cls.gaussian(int(kv.get("dim", 1)))
        if parts[0] == "truncated_exponential":
            return cls.truncated_exponential([float(v) for v in kv["rates"].split(",")],
                                             [float(v) for v in kv["bounds"].split(",")])
        raise UnsupportedError(f"cannot parse parent {text!r}")


@dataclass(frozen=True)
class ShiftedScaled:
    """``sigma^{-d} phi((x - mu) / sigma)``."""

    parent: ParentalDensity
    shift: tuple
    scale: float

    def __post_init__(self):
        shift = tuple(float(v) for v in np.atleast_1d(self.shift))
        if len(shift) != self.parent.dim:
            raise DomainError("shift dimension does not match the parent")
        if not (self.scale > 0 and math.isfinite(self.scale)):
            raise DomainError("scale must be positive")
        object.__setattr__(self, "shift", shift)
        object.__setattr__(self, "scale", float(self.scale))

    @property
    def dim(self) -> int:
        return self.parent.dim

    def __call__(self, x) -> np.ndarray:
        pts = as_points(x, self.dim)
        if self.parent.family == "custom":
            y = (pts - np.asarray(self.shift)) / self.scale
            return self.scale ** (-self.dim) * self.parent(y)
        return kernels.mixture_density(pts, np.asarray([self.shift]), np.ones(1), self.scale,
                                       self.parent.kernel_code, self.parent.rates, self.parent.bounds)

    def eval(self, x) -> float:
        return float(self(as_points(x, self.dim))[0])

    def lq_norm(self, q: float) -> float:
        """``sigma^{-d(1 - 1/q)} ||phi||_q`` (translation does not change norms)."""
        expo = self.dim * (1.0 if math.isinf(q) else 1.0 - 1.0 / q)
        return self.scale ** (-expo) * self.parent.lq_norm(q)

    def sample(self, seed, count: int) -> np.ndarray:
        return np.asarray(self.shift) + self.scale * self.parent.sample(seed, count)


def gaussian_abs_moment(q: float) -> float:
    """``E|X|^q`` for X standard normal, by adaptive quadrature of the defining integral."""
    val, _ = integrate.quad(lambda x: x ** q * math.exp(-0.5 * x * x), 0.0, math.inf,
                            epsabs=1e-14, epsrel=1e-13, limit=200)
    return 2.0 * val / math.sqrt(2.0 * math.pi)


def upsilon(q: float) -> float:
    """Sharp constant ``max(1, E|X|^q)^{1/q}`` of the L^q convex-approximation bound."""
    q = float(q)
    if not (q >= 1 and math.isfinite(q)):
        raise DomainError("upsilon needs q in [1, inf)")
    return max(1.0, gaussian_abs_moment(q)) ** (1.0 / q)


def upsilon_printed(q: float) -> float:
    """The q > 2 expression ``sqrt(2) pi^{-1/(2q)} Gamma((q+1)/2)`` exactly as printed.

    Kept only to report its disagreement with :func:`upsilon`.
    """
    if q <= 2:
        return 1.0
    return math.sqrt(2.0) * math.pi ** (-1.0 / (2 * q)) * special.gamma((q + 1) / 2)


@dataclass(frozen=True)
class TargetDensity:
    """A target density f: R^d -> R_+ given as a vectorised evaluator.

    ``gaussian_components`` lists ``(weight, mean, variance)`` triples with
    isotropic variance when f is a Gaussian mixture; smoothing then has a
    closed form.
    """

    evaluator: Callable = field(compare=False, repr=False)
    dim: int
    support_hint: Optional[Box] = None
    sampler: Optional[Callable] = field(default=None, compare=False, repr=False)
    lower_bound_eta: Optional[float] = None
    name: str = "custom"
    gaussian_components: Optional[tuple] = None
    breakpoints: Optional[tuple] = None
    sup: Optional[float] = None

    def __call__(self, x) -> np.ndarray:
        return np.asarray(self.evaluator(as_points(x, self.dim)), dtype=np.float64)

    def eval(self, x) -> float:
        return float(self(as_points(x, self.dim))[0])

    @property
    def has_sampler(self) -> bool:
        return self.sampler is not None

    def sample(self, seed, count: int) -> np.ndarray:
        if self.sampler is None:
            raise UnsupportedError(f"target {self.name!r} has no exact sampler")
        rng = np.random.default_rng(seed)
        return np.asarray(self.sampler(rng, int(count)), dtype=np.float64).reshape(int(count), self.dim)

    def box(self) -> Box:
        if self.support_hint is None:
            raise UnsupportedError(f"target {self.name!r} has no bounding box")
        return self.support_hint

    def axis_breakpoints(self) -> tuple:
        if self.breakpoints is None:
            return tuple(() for _ in range(self.dim))
        return self.breakpoints


def gaussian_target(mean=0.0, var=1.0, dim: int = 1) -> TargetDensity:
    """Isotropic Gaussian N(mean, var I)."""
    return gaussian_mixture_target([1.0], [np.broadcast_to(np.atleast_1d(mean), (dim,))], [var],
                                   name=f"gaussian(mean={mean},var={var})")


def gaussian_mixture_target(weights, means, variances, name="gaussian_mixture") -> TargetDensity:
    weights = np.asarray(weights, dtype=np.float64)
    weights = weights / weights.sum()
    means = np.atleast_2d(np.asarray(means, dtype=np.float64))
    variances = np.asarray(variances, dtype=np.float64)
    dim = means.shape[1]
    _check_dim(dim)

    def evaluate(x):
        out = np.zeros(x.shape[0])
        for w, mu, v in zip(weights, means, variances):
            r2 = ((x - mu) ** 2).sum(axis=1)
            out += w * (2 * math.pi * v) ** (-dim / 2) * np.exp(-0.5 * r2 / v)
        return out

    def sample(rng, count):
        comp = rng.choice(len(weights), size=count, p=weights)
        return means[comp] + np.sqrt(variances[comp])[:, None] * rng.standard_normal((count, dim))

    sd = math.sqrt(variances.max())
    lo = means.min(axis=0) - GAUSSIAN_PAD * sd
    hi = means.max(axis=0) + GAUSSIAN_PAD * sd
    comps = tuple((float(w), tuple(map(float, mu)), float(v))
                  for w, mu, v in zip(weights, means, variances))
    sup = float(evaluate(means).max()) if len(weights) == 1 else None
    return TargetDensity(evaluate, dim, _box(lo, hi), sample, None, name, comps, sup=sup)


def uniform_target(lo=0.0, hi=1.0) -> TargetDensity:
    """Uniform density on the box [lo, hi]."""
    box = _box(lo, hi)
    a = np.asarray(box[0])
    b = np.asarray(box[1])
    height = 1.0 / float(np.prod(b - a))

    def evaluate(x):
        return np.where(np.all((x >= a) & (x <= b), axis=1), height, 0.0)

    def sample(rng, count):
        return a + (b - a) * rng.random((count, len(a)))

    bps = tuple((float(u), float(v)) for u, v in zip(a, b))
    return TargetDensity(evaluate, len(a), box, sample, height, "uniform", None, bps, sup=height)


def truncated_exponential_target(rates, bounds) -> TargetDensity:
    """Target equal to a truncated exponential density (positive on its whole support)."""
    parent = ParentalDensity.truncated_exponential(rates, bounds)
    lam = np.asarray(parent.rates)
    b = np.asarray(parent.bounds)
    eta = float(np.prod(lam * np.exp(-lam * b) / -np.expm1(-lam * b)))
    return TargetDensity(parent, parent.dim, parent.support(), lambda rng, n: parent.sample(rng, n),
                         eta, "truncated_exponential", None, parent.breakpoints(), sup=parent.sup_norm())


def counterexample_constant(m: int) -> float:
    """``C_m = (1 - 1/(8m))^{-1}``."""
    return 1.0 / (1.0 - 1.0 / (8.0 * m))


def counterexample_constant_exact(m: int) -> Fraction:
    """``C_m`` as an exact rational, ``8m / (8m - 1)``."""
    return Fraction(8 * int(m), 8 * int(m) - 1)


def counterexample_target(m: int) -> TargetDensity:
    """``f_m(x) = C_m min(1, m x + 1/2)`` on [0, 1]."""
    m = int(m)
    if m < 1:
        raise DomainError("counterexample index must be a positive integer")
    cm = counterexample_constant(m)

    def evaluate(x):
        t = x[:, 0]
        return np.where((t >= 0) & (t <= 1), cm * np.minimum(1.0, m * t + 0.5), 0.0)

    def sample(rng, count):
        # mixture of the ramp on [0, 1/(2m)] (mass 3/(8m) C_m) and the flat part
        u = rng.random(count)
        ramp_mass = cm * 3.0 / (8.0 * m)
        v = rng.random(count)
        # inverse CDF of density ∝ m t + 1/2 on [0, 1/(2m)]: (m/2) t^2 + t/2 = v * 3/(8m)
        ramp = (-0.5 + np.sqrt(0.25 + 2 * m * v * 3.0 / (8.0 * m))) / m
        flat = 1.0 / (2 * m) + v * (1.0 - 1.0 / (2 * m))
        return np.where(u < ramp_mass, ramp, flat).reshape(count, 1)

    return TargetDensity(evaluate, 1, ((0.0,), (1.0,)), sample, cm / 2, f"counterexample(m={m})",
                         None, ((0.0, 1.0 / (2 * m), 1.0),), sup=cm)


def piecewise_constant_target(edges: Sequence[float], values: Sequence[float],
                              normalize: bool = True) -> TargetDensity:
    """Step density on [edges[0], edges[-1]] with ``values[k]`` on ``[edges[k], edges[k+1])``."""
    edges = np.asarray(edges, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    if len(edges) != len(values) + 1 or np.any(np.diff(edges) <= 0) or np.any(values < 0):
        raise DomainError("piecewise-constant density needs increasing edges and nonnegative values")
    if normalize:
        values = values / float(np.dot(values, np.diff(edges)))
    probs = values * np.diff(edges)

    def evaluate(x):
        t = x[:, 0]
        k = np.clip(np.searchsorted(edges, t, side="right") - 1, 0, len(values) - 1)
        return np.where((t >= edges[0]) & (t <= edges[-1]), values[k], 0.0)

    def sample(rng, count):
        k = rng.choice(len(values), size=count, p=probs / probs.sum())
        return (edges[k] + rng.random(count) * (edges[k + 1] - edges[k])).reshape(count, 1)

    return TargetDensity(evaluate, 1, ((float(edges[0]),), (float(edges[-1]),)), sample,
                         float(values.min()), "piecewise_constant", None,
                         (tuple(float(e) for e in edges),), sup=float(values.max()))


def from_parent(parent: ParentalDensity) -> TargetDensity:
    """Use a parental density as a target."""
    if parent.family == "gaussian":
        return gaussian_target(0.0, 1.0, parent.dim)
    if parent.family == "truncated_exponential":
        return truncated_exponential_target(parent.rates, parent.bounds)
    return TargetDensity(parent, parent.dim, parent.support(), parent.sampler and
                         (lambda rng, n: parent.sample(rng, n)), None, "custom_parent")
