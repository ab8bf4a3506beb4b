"""Distances between densities by tensor quadrature or Monte Carlo.

Every distance returns a :class:`DistanceReport` whose ``error_estimate``
comes from comparing two resolutions (the configured one and half of it).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Callable, Optional, Sequence

import numpy as np

from .densities import GAUSSIAN_PAD, Box, as_points
from .errors import DomainError, PreconditionError, ResourceError

DEFAULT_NODE_BUDGET = 4_000_000
GL_ORDER = 8
# densities below this are treated as zero in the KL support test
KL_FLOOR = 1e-300


@lru_cache(maxsize=16)
def _gauss_legendre(order: int):
    return np.polynomial.legendre.leggauss(order)


@dataclass(frozen=True)
class QuadratureSpec:
    """Integration box, rule and resolution.

    ``points_per_axis`` counts nodes per axis.  For the composite
    Gauss-Legendre rule the axis is cut into ``points_per_axis // 8``
    panels of order 8, with extra panel edges at ``breakpoints``.
    """

    domain: Box
    rule: str = "gauss_legendre_composite"
    points_per_axis: int = 2048
    tail_padding: float = 0.0
    breakpoints: tuple = ()
    node_budget: int = DEFAULT_NODE_BUDGET

    def __post_init__(self):
        lo, hi = self.domain
        lo = tuple(float(v) for v in lo)
        hi = tuple(float(v) for v in hi)
        if len(lo) != len(hi) or not lo or any(not (a < b) for a, b in zip(lo, hi)):
            raise DomainError(f"empty quadrature domain {self.domain}")
        if self.rule not in ("midpoint", "gauss_legendre_composite"):
            raise DomainError(f"unknown quadrature rule {self.rule!r}")
        if int(self.points_per_axis) < 2:
            raise DomainError("points_per_axis must be >= 2")
        if self.tail_padding < 0:
            raise DomainError("tail_padding must be nonnegative")
        object.__setattr__(self, "domain", (lo, hi))
        bps = self.breakpoints or tuple(() for _ in lo)
        object.__setattr__(self, "breakpoints", tuple(tuple(sorted(set(map(float, b)))) for b in bps))
        if len(self.breakpoints) != len(lo):
            raise DomainError("breakpoints must be given per axis")

    @property
    def dim(self) -> int:
        return len(self.domain[0])

    @property
    def box(self) -> Box:
        lo, hi = self.domain
        p = self.tail_padding
        return (tuple(v - p for v in lo), tuple(v + p for v in hi))

    def refined(self, factor: int = 2) -> "QuadratureSpec":
        return replace(self, points_per_axis=int(self.points_per_axis) * factor)

    def coarsened(self) -> "QuadratureSpec":
        return replace(self, points_per_axis=max(2, int(self.points_per_axis) // 2))

    def node_count(self) -> int:
        return self._axis_count() ** self.dim

    def _axis_count(self) -> int:
        n = int(self.points_per_axis)
        if self.rule == "midpoint":
            return n + sum(len(b) for b in self.breakpoints) // max(self.dim, 1)
        panels = max(1, n // GL_ORDER)
        return (panels + max((len(b) for b in self.breakpoints), default=0)) * GL_ORDER

    def _check_budget(self):
        est = self.node_count()
        if est > self.node_budget:
            raise ResourceError(
                f"{est} quadrature nodes exceed the budget {self.node_budget}; "
                "lower points_per_axis or use the monte_carlo estimator")

    def axis_rule(self, axis: int):
        """Nodes and weights on one axis of the padded box."""
        a = self.box[0][axis]
        b = self.box[1][axis]
        n = int(self.points_per_axis)
        inner = [t for t in self.breakpoints[axis] if a < t < b]
        if self.rule == "midpoint":
            edges = np.unique(np.concatenate([np.linspace(a, b, n + 1), inner]))
            return 0.5 * (edges[:-1] + edges[1:]), np.diff(edges)
        panels = max(1, n // GL_ORDER)
        edges = np.unique(np.concatenate([np.linspace(a, b, panels + 1), inner]))
        g, w = _gauss_legendre(GL_ORDER)
        lo, hi = edges[:-1, None], edges[1:, None]
        x = 0.5 * (lo + hi) + 0.5 * (hi - lo) * g[None, :]
        wt = 0.5 * (hi - lo) * w[None, :]
        return x.ravel(), wt.ravel()

    def nodes(self):
        """Tensor-product nodes ``(N, d)`` and weights ``(N,)``."""
        self._check_budget()
        axes = [self.axis_rule(k) for k in range(self.dim)]
        if self.dim == 1:
            return axes[0][0][:, None], axes[0][1]
        grids = np.meshgrid(*[a[0] for a in axes], indexing="ij")
        wgrids = np.meshgrid(*[a[1] for a in axes], indexing="ij")
        pts = np.stack([g.ravel() for g in grids], axis=1)
        wts = np.prod(np.stack([w.ravel() for w in wgrids], axis=1), axis=1)
        return pts, wts

    def grid(self, refine: int = 1, exclude_breakpoints: bool = True) -> np.ndarray:
        """Uniform cell-centre grid used for sup-norm scans.

        Cell centres never coincide with box edges, so breakpoints on the
        edges (where densities are only defined up to a null set) are
        skipped.
        """
        n = int(self.points_per_axis) * refine
        self_check = n ** self.dim
        if self_check > self.node_budget:
            raise ResourceError(f"{self_check} grid points exceed the budget {self.node_budget}")
        axes = []
        for k in range(self.dim):
            a, b = self.box[0][k], self.box[1][k]
            t = a + (np.arange(n) + 0.5) * (b - a) / n
            if exclude_breakpoints and self.breakpoints[k]:
                t = t[~np.isin(t, self.breakpoints[k])]
            axes.append(t)
        if self.dim == 1:
            return axes[0][:, None]
        grids = np.meshgrid(*axes, indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=1)


def spec_for(*densities, points_per_axis: int = 2048, rule: str = "gauss_legendre_composite",
             tail_padding: float = 0.0, extra_breakpoints: Sequence = (), box: Optional[Box] = None,
             node_budget: int = DEFAULT_NODE_BUDGET) -> QuadratureSpec:
    """Quadrature spec covering the union of the densities' boxes.

    Accepts TargetDensity, ParentalDensity, ShiftedScaled and anything with
    ``support_hint``/``effective_box``/``quadrature_box`` methods.
    """
    los, his, bps = [], [], None
    for dens in densities:
        dbox = _density_box(dens)
        if dbox is not None:
            los.append(dbox[0])
            his.append(dbox[1])
        dbps = _density_breakpoints(dens)
        if dbps is not None:
            bps = dbps if bps is None else tuple(a + b for a, b in zip(bps, dbps))
    if box is None:
        if not los:
            raise DomainError("no density supplies a bounding box; pass box=")
        box = (tuple(np.min(los, axis=0)), tuple(np.max(his, axis=0)))
    dim = len(box[0])
    if bps is None:
        bps = tuple(() for _ in range(dim))
    if extra_breakpoints:
        bps = tuple(a + tuple(b) for a, b in zip(bps, extra_breakpoints))
    return QuadratureSpec(box, rule, points_per_axis, tail_padding, bps, node_budget)


def _density_box(dens) -> Optional[Box]:
    for attr in ("quadrature_box", "effective_box"):
        fn = getattr(dens, attr, None)
        if callable(fn):
            return fn()
    hint = getattr(dens, "support_hint", None)
    if hint is not None:
        return hint
    return None


def _density_breakpoints(dens):
    for attr in ("axis_breakpoints", "breakpoints"):
        fn = getattr(dens, attr, None)
        if callable(fn):
            return fn()
    return None


@dataclass(frozen=True)
class DistanceReport:
    value: float
    estimator: str
    error_estimate: float
    nodes_or_samples: int
    infinite_reason: Optional[str] = field(default=None, compare=False)

    def __post_init__(self):
        if self.error_estimate < 0:
            raise ValueError("error_estimate must be nonnegative")

    def __float__(self):
        return float(self.value)


def _evaluate(fn: Callable, pts: np.ndarray) -> np.ndarray:
    vals = np.asarray(fn(pts), dtype=np.float64).reshape(-1)
    if vals.shape[0] != pts.shape[0]:
        raise DomainError("density evaluator returned the wrong number of values")
    if not np.all(np.isfinite(vals)):
        raise DomainError("density evaluator returned non-finite values on the domain")
    return vals


def _lq_once(f, g, q, spec: QuadratureSpec) -> tuple:
    pts, wts = spec.nodes()
    diff = np.abs(_evaluate(f, pts) - _evaluate(g, pts))
    return float(np.sum(wts * diff ** q)) ** (1.0 / q), pts.shape[0]


def lq_distance(f: Callable, g: Callable, q: float, spec: QuadratureSpec) -> DistanceReport:
    """``(int |f - g|^q)^{1/q}`` over the quadrature box."""
    q = float(q)
    if not (q >= 1 and math.isfinite(q)):
        raise DomainError("lq_distance needs q in [1, inf); use sup_distance for q = inf")
    fine, n = _lq_once(f, g, q, spec)
    coarse, _ = _lq_once(f, g, q, spec.coarsened())
    return DistanceReport(fine, "quadrature", abs(fine - coarse), n)


def lq_norm(f: Callable, q: float, spec: QuadratureSpec) -> DistanceReport:
    """Numerical ``||f||_{L^q}`` (``q = inf`` scans the sup grid)."""
    zero = lambda x: np.zeros(len(x))  # noqa: E731
    if math.isinf(q):
        return sup_distance(f, zero, spec)
    return lq_distance(f, zero, q, spec)


def integral(f: Callable, spec: QuadratureSpec) -> DistanceReport:
    """``int f`` over the quadrature box with a two-level error estimate."""
    vals = []
    for s in (spec, spec.coarsened()):
        pts, wts = s.nodes()
        vals.append(float(np.sum(wts * _evaluate(f, pts))))
    return DistanceReport(vals[0], "quadrature", abs(vals[0] - vals[1]), spec.node_count())


def lq_distance_mc(f, g, q: float, sample_f: Callable, count: int, seed) -> DistanceReport:
    """Importance-sampled L^q distance with proposal f.

    Estimates ``int |f - g|^q`` as the mean of ``|f - g|^q / f`` over draws
    from f.  Mass of g where f vanishes is invisible to this estimator.
    The reported error is the delta-method standard error of the q-th root.
    """
    q = float(q)
    x = np.asarray(sample_f(seed, int(count)), dtype=np.float64)
    fx = _evaluate(f, x)
    gx = _evaluate(g, x)
    ratio = np.abs(fx - gx) ** q / np.maximum(fx, KL_FLOOR)
    mean = float(np.mean(ratio))
    se = float(np.std(ratio, ddof=1) / math.sqrt(len(ratio))) if len(ratio) > 1 else math.inf
    value = mean ** (1.0 / q)
    err = (se * value / (q * mean)) if mean > 0 else se ** (1.0 / q)
    return DistanceReport(value, "monte_carlo", err, len(ratio))


def sup_distance(f: Callable, g: Callable, spec: QuadratureSpec) -> DistanceReport:
    """Maximum of ``|f - g|`` over a uniform grid and its 2x refinement."""
    coarse_pts = spec.grid(1)
    fine_pts = spec.grid(2)
    coarse = float(np.max(np.abs(_evaluate(f, coarse_pts) - _evaluate(g, coarse_pts))))
    fine = float(np.max(np.abs(_evaluate(f, fine_pts) - _evaluate(g, fine_pts))))
    return DistanceReport(max(fine, coarse), "quadrature", abs(fine - coarse), len(fine_pts))


def _kl_once(f, g, spec: QuadratureSpec):
    pts, wts = spec.nodes()
    fx = _evaluate(f, pts)
    gx = _evaluate(g, pts)
    bad = (fx > KL_FLOOR) & (gx <= KL_FLOOR)
    if np.any(bad):
        node = tuple(pts[np.argmax(bad)])
        return math.inf, pts.shape[0], node
    pos = fx > KL_FLOOR
    terms = np.zeros_like(fx)
    terms[pos] = fx[pos] * (np.log(fx[pos]) - np.log(gx[pos]))
    return float(np.sum(wts * terms)), pts.shape[0], None


def kl_divergence(f: Callable, g: Callable, omega: Box, spec: QuadratureSpec) -> DistanceReport:
    """``int_omega f log(f / g)``; infinite when g vanishes where f does not."""
    spec = replace(spec, domain=omega, tail_padding=0.0)
    fine, n, node = _kl_once(f, g, spec)
    if math.isinf(fine):
        return DistanceReport(math.inf, "quadrature", 0.0, n, f"g vanishes at {node} where f > 0")
    coarse, _, _ = _kl_once(f, g, spec.coarsened())
    err = abs(fine - coarse) if math.isfinite(coarse) else 0.0
    return DistanceReport(fine, "quadrature", err, n)


@dataclass(frozen=True)
class KLBoundCheck:
    kl: float
    bound: float
    holds: bool
    margin: float


def check_floor(fn: Callable, eta: float, pts: np.ndarray, name: str = "density"):
    """Raise :class:`PreconditionError` at the first grid node where ``fn < eta``."""
    vals = _evaluate(fn, pts)
    low = vals < eta
    if np.any(low):
        k = int(np.argmax(low))
        raise PreconditionError(
            f"{name} = {vals[k]:.6g} < eta = {eta:.6g} at node {tuple(pts[k])}", node=tuple(pts[k]))


def kl_l2_bound_check(f: Callable, g: Callable, omega: Box, eta: float, spec: QuadratureSpec,
                      margin: Optional[float] = None) -> KLBoundCheck:
    """Compare ``KL(f||g)`` with ``||f - g||^2_{L^2(omega)} / eta``.

    Both densities must be at least ``eta`` on every quadrature node of
    ``omega``.  ``holds`` allows the combined quadrature error estimates
    (or the explicit ``margin``) as slack.
    """
    if not eta > 0:
        raise DomainError("eta must be positive")
    local = replace(spec, domain=omega, tail_padding=0.0)
    pts, _ = local.nodes()
    check_floor(f, eta, pts, "f")
    check_floor(g, eta, pts, "g")
    kl = kl_divergence(f, g, omega, local)
    l2 = lq_distance(f, g, 2.0, local)
    bound = l2.value ** 2 / eta
    if margin is None:
        margin = kl.error_estimate + 2 * l2.value * l2.error_estimate / eta + 1e-12
    return KLBoundCheck(kl.value, bound, bool(kl.value <= bound + margin), margin)


def gaussian_padding(sd: float) -> float:
    return GAUSSIAN_PAD * sd


__all__ = [
    "QuadratureSpec",
    "DistanceReport",
    "KLBoundCheck",
    "spec_for",
    "lq_distance",
    "lq_distance_mc",
    "lq_norm",
    "integral",
    "sup_distance",
    "kl_divergence",
    "kl_l2_bound_check",
    "check_floor",
    "as_points",
]
