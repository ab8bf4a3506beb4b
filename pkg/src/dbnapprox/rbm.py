"""Binary-binary restricted Boltzmann machines with exact marginals.

The Gibbs measure is ``pi(v, h) = exp(-H(v, h)) / Z`` with energy
``H(v, h) = <v, W h> + <v, b> + <h, c>``; biases are real-valued.

States of a layer with ``k`` units are indexed by integers ``0 .. 2^k - 1``
where unit ``i`` is bit ``i`` (``(s >> i) & 1``).  The unit vector ``e_i``
therefore has index ``1 << i``.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Mapping, Sequence

import numpy as np
from scipy.special import logsumexp

from . import kernels
from .errors import ConvergenceError, DimensionError, DomainError, ResourceError

ENUMERATION_CAP = 24
FORMAT_HEADER = "# dbnapprox-rbm v1"
SHARPNESS_GRID = tuple(4.0 * 2 ** k for k in range(9))  # 4 .. 1024


def bits(index: int, width: int) -> np.ndarray:
    return (int(index) >> np.arange(width)) & 1


def index_of(vec: Sequence[int]) -> int:
    return int(sum(int(b) << i for i, b in enumerate(vec)))


def _softplus(x):
    return np.logaddexp(0.0, x)


@dataclass(frozen=True, eq=False)
class BinaryRBM:
    weights: np.ndarray
    visible_bias: np.ndarray
    hidden_bias: np.ndarray

    def __post_init__(self):
        W = np.array(self.weights, dtype=np.float64, ndmin=2)
        b = np.array(self.visible_bias, dtype=np.float64).reshape(-1)
        c = np.array(self.hidden_bias, dtype=np.float64).reshape(-1)
        if W.shape != (b.size, c.size):
            raise DimensionError(f"weights {W.shape} do not match biases ({b.size}, {c.size})")
        if not (np.all(np.isfinite(W)) and np.all(np.isfinite(b)) and np.all(np.isfinite(c))):
            raise DomainError("RBM parameters must be finite")
        for arr in (W, b, c):
            arr.setflags(write=False)
        object.__setattr__(self, "weights", W)
        object.__setattr__(self, "visible_bias", b)
        object.__setattr__(self, "hidden_bias", c)

    @classmethod
    def zeros(cls, m: int, n: int) -> "BinaryRBM":
        return cls(np.zeros((m, n)), np.zeros(m), np.zeros(n))

    @property
    def visible_count(self) -> int:
        return self.weights.shape[0]

    @property
    def hidden_count(self) -> int:
        return self.weights.shape[1]

    def __eq__(self, other):
        if not isinstance(other, BinaryRBM):
            return NotImplemented
        return (np.array_equal(self.weights, other.weights)
                and np.array_equal(self.visible_bias, other.visible_bias)
                and np.array_equal(self.hidden_bias, other.hidden_bias))

    def scaled(self, factor: float) -> "BinaryRBM":
        return BinaryRBM(self.weights * factor, self.visible_bias * factor, self.hidden_bias * factor)

    @cached_property
    def _unit_summary(self):
        return _unit_vector_summary(self)


def energy(rbm: BinaryRBM, v, h) -> float:
    """``<v, W h> + <v, b> + <h, c>``."""
    v = np.asarray(v, dtype=np.float64).reshape(-1)
    h = np.asarray(h, dtype=np.float64).reshape(-1)
    if v.size != rbm.visible_count or h.size != rbm.hidden_count:
        raise DimensionError(f"state lengths ({v.size}, {h.size}) do not match the RBM "
                             f"({rbm.visible_count}, {rbm.hidden_count})")
    return float(v @ rbm.weights @ h + v @ rbm.visible_bias + h @ rbm.hidden_bias)


def _check_cap(rbm: BinaryRBM, cap: int):
    size = rbm.visible_count + rbm.hidden_count
    if size > cap:
        raise ResourceError(f"enumeration over {size} units exceeds the cap {cap}")


@dataclass(frozen=True)
class Marginals:
    """Exact enumeration results; ``joint[v, h]`` uses the state indexing above."""

    log_z: float
    joint: np.ndarray = field(repr=False)
    visible_marginal: np.ndarray = field(repr=False)
    hidden_marginal: np.ndarray = field(repr=False)

    @property
    def z(self) -> float:
        return math.exp(self.log_z)


def _state_matrix(width: int) -> np.ndarray:
    idx = np.arange(1 << width)
    return ((idx[:, None] >> np.arange(width)) & 1).astype(np.float64)


def log_joint_table(rbm: BinaryRBM, cap: int = ENUMERATION_CAP) -> np.ndarray:
    """Unnormalised ``-H(v, h)`` for every state pair."""
    _check_cap(rbm, cap)
    V = _state_matrix(rbm.visible_count)
    Hs = _state_matrix(rbm.hidden_count)
    return -((V @ rbm.weights) @ Hs.T + (V @ rbm.visible_bias)[:, None] + (Hs @ rbm.hidden_bias)[None, :])


def partition_and_marginals(rbm: BinaryRBM, cap: int = ENUMERATION_CAP) -> Marginals:
    """Exact ``Z``, joint table and both layer marginals by enumeration."""
    logw = log_joint_table(rbm, cap)
    log_z = float(logsumexp(logw))
    joint = np.exp(logw - log_z)
    return Marginals(log_z, joint, joint.sum(axis=1), joint.sum(axis=0))


def visible_log_marginal(rbm: BinaryRBM, cap: int = ENUMERATION_CAP) -> np.ndarray:
    """``log sum_h pi(v, h)`` for every visible state; hidden units summed analytically."""
    if rbm.visible_count > cap:
        raise ResourceError(f"enumeration over {rbm.visible_count} visible units exceeds the cap {cap}")
    lw = kernels.visible_log_weights(rbm.weights, rbm.visible_bias, rbm.hidden_bias)
    return lw - logsumexp(lw)


def log_partition(rbm: BinaryRBM, cap: int = ENUMERATION_CAP) -> float:
    if rbm.visible_count <= cap:
        return float(logsumexp(kernels.visible_log_weights(rbm.weights, rbm.visible_bias, rbm.hidden_bias)))
    structure = _unit_structure(rbm)
    if structure is None:
        raise ResourceError(f"{rbm.visible_count} visible units exceed the cap {cap} and the RBM "
                            "lacks the unit-vector structure that allows exact summation")
    return _structured_log_terms(rbm, structure)[0]


def _unit_structure(rbm: BinaryRBM):
    """Detect the layout produced by :func:`synthesize`.

    Hidden column ``j < m`` must be constant off row ``j``; every further
    column must be constant.  Then the free energy of a visible state
    depends only on its bit count and on which units are on, and the
    partition function is a sum of elementary symmetric polynomials.
    """
    W = rbm.weights
    m, n = W.shape
    if n < m:
        return None
    diag = np.empty(m)
    off = np.empty(n)
    for j in range(m):
        col = W[:, j]
        others = np.delete(col, j)
        if others.size and not np.all(others == others[0]):
            return None
        diag[j] = col[j]
        off[j] = others[0] if others.size else 0.0
    for j in range(m, n):
        col = W[:, j]
        if not np.all(col == col[0]):
            return None
        off[j] = col[0]
    return diag, off


def _structured_log_terms(rbm: BinaryRBM, structure):
    """Log partition plus per-bit-count pieces for structured RBMs.

    With ``S`` the set of active visible units and ``k = |S|``, the
    unnormalised log marginal is ``C(k) + sum_i B_i(k) + sum_{i in S} r_i(k)``.
    """
    diag, off = structure
    b = rbm.visible_bias
    c = rbm.hidden_bias
    m = rbm.visible_count
    ks = np.arange(m + 1, dtype=np.float64)
    extra = _softplus(-np.outer(ks, off[m:]) - c[m:]).sum(axis=1) if c.size > m else np.zeros(m + 1)
    cm, om = c[:m], off[:m]
    base = _softplus(-np.outer(ks, om) - cm)                                  # unit i off
    on = -b + _softplus(-diag - np.outer(np.maximum(ks - 1, 0), om) - cm)     # unit i on
    r = on - base
    log_terms = np.full(m + 1, -np.inf)
    for k in range(m + 1):
        e = kernels.log_esf(r[k])
        log_terms[k] = extra[k] + base[k].sum() + e[k]
    return float(logsumexp(log_terms)), log_terms, extra, base, r


@dataclass(frozen=True)
class UnitSummary:
    """Mass the visible marginal puts on each unit vector and off them."""

    unit_probs: np.ndarray
    deficiency: float
    max_off_unit: float
    method: str


def _unit_vector_summary(rbm: BinaryRBM, cap: int = ENUMERATION_CAP) -> UnitSummary:
    m = rbm.visible_count
    if m <= cap:
        logp = visible_log_marginal(rbm, cap)
        units = np.array([logp[1 << i] for i in range(m)])
        mask = np.ones(1 << m, dtype=bool)
        mask[[1 << i for i in range(m)]] = False
        probs = np.exp(units)
        off = np.exp(logp[mask])
        deficiency = float(off.sum()) if off.size else 0.0
        return UnitSummary(probs, min(max(deficiency, 0.0), 1.0), float(off.max()) if off.size else 0.0,
                           "enumeration")
    structure = _unit_structure(rbm)
    if structure is None:
        raise ResourceError(f"{m} visible units exceed the cap {cap} and the RBM lacks the "
                            "unit-vector structure that allows exact summation")
    log_z, log_terms, extra, base, r = _structured_log_terms(rbm, structure)
    units = extra[1] + base[1].sum() + r[1] - log_z
    probs = np.exp(units)
    deficiency = float(np.exp(logsumexp(np.delete(log_terms, 1)) - log_z))
    # most likely off-unit state for each bit count: the k largest r_i(k)
    best = -np.inf
    for k in range(m + 1):
        if k == 1:
            continue
        top = np.sort(r[k])[::-1][:k].sum() if k else 0.0
        best = max(best, extra[k] + base[k].sum() + top)
    return UnitSummary(probs, min(deficiency, 1.0), float(np.exp(best - log_z)), "bit-count recursion")


def unit_vector_summary(rbm: BinaryRBM) -> UnitSummary:
    """Unit-vector probabilities, deficiency mass and the largest off-unit probability.

    Exact either way: enumeration within the cap, otherwise the bit-count
    recursion for structured RBMs.
    """
    return rbm._unit_summary


@dataclass(frozen=True)
class DiscreteDistribution:
    """A probability distribution on {0,1}^dim keyed by state index."""

    dim: int
    probabilities: Mapping[int, float]

    def __post_init__(self):
        probs = {int(k): float(v) for k, v in dict(self.probabilities).items()}
        if any(v < 0 for v in probs.values()):
            raise DomainError("probabilities must be nonnegative")
        if any(not 0 <= k < (1 << self.dim) for k in probs):
            raise DomainError("state index out of range")
        if abs(sum(probs.values()) - 1.0) > 1e-12:
            raise DomainError(f"probabilities sum to {sum(probs.values())!r}, not 1")
        object.__setattr__(self, "probabilities", probs)

    @classmethod
    def from_unit_weights(cls, alpha) -> "DiscreteDistribution":
        """``alpha_i`` on ``e_i``, zero elsewhere."""
        alpha = np.asarray(alpha, dtype=np.float64)
        total = alpha.sum()
        if abs(total - 1.0) > 1e-12:
            alpha = alpha / total
        return cls(len(alpha), {1 << i: float(a) for i, a in enumerate(alpha)})

    @property
    def support(self) -> list:
        return sorted(k for k, v in self.probabilities.items() if v > 0)

    @property
    def hidden_units_for_synthesis(self) -> int:
        return len(self.support) + 1

    def unit_weights(self) -> np.ndarray:
        if any(k & (k - 1) for k in self.support):
            raise DomainError("distribution is not supported on unit vectors")
        return np.array([self.probabilities.get(1 << i, 0.0) for i in range(self.dim)])

    def dense(self) -> np.ndarray:
        out = np.zeros(1 << self.dim)
        for k, v in self.probabilities.items():
            out[k] = v
        return out


def max_deviation(target: DiscreteDistribution, rbm: BinaryRBM) -> float:
    """``max_v |target(v) - sum_h pi(v, h)|``."""
    summary = unit_vector_summary(rbm)
    alpha = target.unit_weights()
    dev = float(np.max(np.abs(alpha - summary.unit_probs)))
    return max(dev, summary.max_off_unit)


def unit_vector_rbm(alpha, sharpness: float) -> BinaryRBM:
    """Sharpness-``w`` RBM whose visible marginal concentrates on unit vectors.

    Hidden unit ``i`` is tied to ``e_i``: in the Gibbs weight its input is
    ``w (2 v_i - |v|) - w/2 + log alpha_i``, large only at ``v = e_i``, so
    ``pi(e_i)`` is proportional to ``1 + alpha_i e^{w/2}`` while every
    other state keeps weight of order one.  The extra hidden unit is idle.
    """
    alpha = np.asarray(alpha, dtype=np.float64)
    m = alpha.size
    w = float(sharpness)
    with np.errstate(divide="ignore"):
        la = np.where(alpha > 0, np.log(np.where(alpha > 0, alpha, 1.0)), -w)
    # the Gibbs weight uses -H, so every parameter is negated
    Wneg = w * (2 * np.eye(m) - 1)
    W = np.zeros((m, m + 1))
    W[:, :m] = -Wneg
    c = np.zeros(m + 1)
    c[:m] = -(-w / 2 + la)
    c[m] = w
    return BinaryRBM(W, np.zeros(m), c)


def _kl_gradient_step(target: DiscreteDistribution, rbm: BinaryRBM, cap: int):
    """Exact gradient of ``KL(target || visible marginal)`` by enumeration."""
    m = rbm.visible_count
    t = target.dense()
    V = _state_matrix(m)
    pre = -(V @ rbm.weights) - rbm.hidden_bias              # (2^m, n)
    ph = 1.0 / (1.0 + np.exp(-pre))                         # P(h_j = 1 | v)
    logp = visible_log_marginal(rbm, cap)
    p = np.exp(logp)
    # d log p(v) / d theta = -E[dH/dtheta | v] + E[dH/dtheta]
    def moments(weights_v):
        gW = (V * weights_v[:, None]).T @ ph
        gb = weights_v @ V
        gc = weights_v @ ph
        return gW, gb, gc
    tW, tb, tc = moments(t)
    mW, mb, mc = moments(p)
    # grad KL = -sum_v t(v) d log p(v) = E_t[dH] - E_model[dH]
    return tW - mW, tb - mb, tc - mc


def _refine_by_gradient(target, rbm, epsilon, cap, max_iter=2000):
    step = 1.0
    best = rbm
    best_dev = max_deviation(target, rbm)
    t = target.dense()

    def kl(r):
        lp = visible_log_marginal(r, cap)
        pos = t > 0
        return float(np.sum(t[pos] * (np.log(t[pos]) - lp[pos])))

    current, cur_kl = rbm, kl(rbm)
    for _ in range(max_iter):
        gW, gb, gc = _kl_gradient_step(target, current, cap)
        while step > 1e-8:
            cand = BinaryRBM(current.weights - step * gW, current.visible_bias - step * gb,
                             current.hidden_bias - step * gc)
            cand_kl = kl(cand)
            if cand_kl < cur_kl:
                break
            step *= 0.5
        else:
            break
        current, cur_kl = cand, cand_kl
        step *= 2.0
        dev = max_deviation(target, current)
        if dev < best_dev:
            best, best_dev = current, dev
        if best_dev <= epsilon:
            break
    return best, best_dev


@dataclass(frozen=True)
class SynthesisResult:
    rbm: BinaryRBM
    max_deviation: float
    sharpness: float
    method: str


def synthesize(target: DiscreteDistribution, epsilon: float, cap: int = ENUMERATION_CAP,
               sharpness_grid: Sequence[float] = SHARPNESS_GRID, gradient_iterations: int = 2000,
               ) -> SynthesisResult:
    """RBM with ``m + 1`` hidden units whose visible marginal is within ``epsilon`` of ``target``.

    The returned deviation is measured exactly before returning; the loop
    only accepts a certified candidate.
    """
    if not epsilon > 0:
        raise DomainError("epsilon must be positive")
    alpha = target.unit_weights()
    best = None
    for w in sharpness_grid:
        rbm = unit_vector_rbm(alpha, w)
        dev = max_deviation(target, rbm)
        if best is None or dev < best[1]:
            best = (rbm, dev, w)
        if dev <= epsilon:
            return SynthesisResult(rbm, dev, w, "analytic")
    if target.dim <= cap and gradient_iterations > 0:
        rbm, dev = _refine_by_gradient(target, best[0], epsilon, cap, gradient_iterations)
        if dev <= epsilon:
            return SynthesisResult(rbm, dev, best[2], "gradient")
        if dev < best[1]:
            best = (rbm, dev, best[2])
    raise ConvergenceError(f"sharpness search exhausted; best deviation {best[1]:.3g} > {epsilon:.3g}",
                           best=best[1])


def sample_hidden_pair(rbm: BinaryRBM, seed, count: int, cap: int = ENUMERATION_CAP):
    """Exact i.i.d. draws ``(h1, h2)`` from the joint by inverse CDF over enumerated states.

    In DBN use the RBM's visible layer is the first hidden layer.
    Returns two integer arrays of shapes ``(count, m)`` and ``(count, n)``.
    """
    marg = partition_and_marginals(rbm, cap)
    flat = marg.joint.ravel()
    cdf = np.cumsum(flat)
    cdf /= cdf[-1]
    rng = np.random.default_rng(seed)
    idx = np.minimum(np.searchsorted(cdf, rng.random(int(count)), side="right"), flat.size - 1)
    v_idx, h_idx = np.divmod(idx, 1 << rbm.hidden_count)
    m, n = rbm.visible_count, rbm.hidden_count
    return ((v_idx[:, None] >> np.arange(m)) & 1), ((h_idx[:, None] >> np.arange(n)) & 1)


def _fmt_row(values) -> str:
    return " ".join(repr(float(v)) for v in values)


def dumps(rbm: BinaryRBM) -> str:
    """Flat text: header, dimensions, row-major weights, visible then hidden biases."""
    out = io.StringIO()
    out.write(FORMAT_HEADER + "\n")
    out.write(f"visible {rbm.visible_count}\nhidden {rbm.hidden_count}\nweights\n")
    for row in rbm.weights:
        out.write(_fmt_row(row) + "\n")
    out.write("visible_bias\n" + _fmt_row(rbm.visible_bias) + "\n")
    out.write("hidden_bias\n" + _fmt_row(rbm.hidden_bias) + "\n")
    return out.getvalue()


def _parse_floats(line: str, expected: int, what: str):
    vals = [float(t) for t in line.split()] if line.strip() else []
    if len(vals) != expected:
        raise DomainError(f"{what}: expected {expected} values, found {len(vals)}")
    return vals


def read_block(lines: list, pos: int = 0):
    """Parse an RBM block starting at ``lines[pos]``; returns ``(rbm, next_pos)``."""
    def take(expect=None):
        nonlocal pos
        if pos >= len(lines):
            raise DomainError("truncated RBM block")
        line = lines[pos]
        pos += 1
        if expect is not None and line.strip() != expect:
            raise DomainError(f"expected {expect!r}, found {line.strip()!r}")
        return line

    take(FORMAT_HEADER)
    key, m = take().split()
    if key != "visible":
        raise DomainError("missing visible count")
    key, n = take().split()
    if key != "hidden":
        raise DomainError("missing hidden count")
    m, n = int(m), int(n)
    take("weights")
    W = [_parse_floats(take(), n, "weights row") for _ in range(m)]
    take("visible_bias")
    b = _parse_floats(take(), m, "visible_bias")
    take("hidden_bias")
    c = _parse_floats(take(), n, "hidden_bias")
    return BinaryRBM(np.array(W).reshape(m, n), np.array(b), np.array(c)), pos


def loads(text: str) -> BinaryRBM:
    rbm, _ = read_block(text.splitlines())
    return rbm
