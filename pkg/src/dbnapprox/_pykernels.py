"""Pure numpy implementations of the hot kernels.

These are the reference versions; ``_ckernels`` mirrors them loop for loop.
"""
import numpy as np

GAUSSIAN = 0
TRUNCATED_EXPONENTIAL = 1

_CHUNK = 1 << 20


def mixture_density(points, shifts, weights, sigma, family, rates, bounds):
    """Evaluate ``sum_i w_i sigma^-d phi((x - mu_i) / sigma)`` at every row of ``points``."""
    points = np.ascontiguousarray(points, dtype=np.float64)
    shifts = np.ascontiguousarray(shifts, dtype=np.float64)
    weights = np.ascontiguousarray(weights, dtype=np.float64)
    n, d = points.shape
    m = shifts.shape[0]
    out = np.zeros(n)
    if m == 0 or n == 0:
        return out
    step = max(1, _CHUNK // max(m * d, 1))
    if family == GAUSSIAN:
        norm = (2.0 * np.pi) ** (-0.5 * d) * sigma ** (-d)
        for lo in range(0, n, step):
            y = (points[lo:lo + step, None, :] - shifts[None, :, :]) / sigma
            r2 = np.einsum("nmd,nmd->nm", y, y)
            out[lo:lo + step] = norm * (np.exp(-0.5 * r2) @ weights)
    elif family == TRUNCATED_EXPONENTIAL:
        rates = np.asarray(rates, dtype=np.float64)
        bounds = np.asarray(bounds, dtype=np.float64)
        norm = np.prod(rates / -np.expm1(-rates * bounds)) * sigma ** (-d)
        for lo in range(0, n, step):
            y = (points[lo:lo + step, None, :] - shifts[None, :, :]) / sigma
            inside = np.all((y >= 0.0) & (y <= bounds), axis=2)
            val = np.where(inside, np.exp(-(y * rates).sum(axis=2)), 0.0)
            out[lo:lo + step] = norm * (val @ weights)
    else:
        raise ValueError(f"unknown family code {family}")
    return out


def log_esf(r):
    """Log elementary symmetric polynomials ``log e_k(exp(r))`` for k = 0..len(r)."""
    r = np.asarray(r, dtype=np.float64)
    m = r.shape[0]
    e = np.full(m + 1, -np.inf)
    e[0] = 0.0
    for i in range(m):
        e[1:i + 2] = np.logaddexp(e[1:i + 2], e[0:i + 1] + r[i])
    return e


def visible_log_weights(weights, visible_bias, hidden_bias):
    """Unnormalised log marginal ``log sum_h exp(-H(v, h))`` for every visible state.

    State ``s`` has bit ``i`` equal to ``(s >> i) & 1``.
    """
    W = np.asarray(weights, dtype=np.float64)
    b = np.asarray(visible_bias, dtype=np.float64)
    c = np.asarray(hidden_bias, dtype=np.float64)
    m = W.shape[0]
    total = 1 << m
    out = np.empty(total)
    step = max(1, _CHUNK // max(W.shape[1], 1))
    for lo in range(0, total, step):
        idx = np.arange(lo, min(total, lo + step))
        V = ((idx[:, None] >> np.arange(m)) & 1).astype(np.float64)
        pre = -(V @ W) - c
        out[lo:lo + len(idx)] = -(V @ b) + np.logaddexp(0.0, pre).sum(axis=1)
    return out
