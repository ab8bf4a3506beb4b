"""The experiments behind each CLI subcommand.

Each experiment returns an :class:`Outcome` mapping file names to their
full text; nothing touches the disk until every file is rendered.  Jobs
inside an experiment are pure functions of ``(config, m, trial)`` and
their results are sorted by that key, so outputs do not depend on the
thread count.
"""
from __future__ import annotations

import logging
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .. import dbn as dbn_mod
from .. import rbm as rbm_mod
from ..densities import (ParentalDensity, counterexample_constant, counterexample_constant_exact,
                         counterexample_target, upsilon, upsilon_printed)
from ..errors import ConfigError, DbnApproxError
from ..metrics import QuadratureSpec, integral, kl_divergence, lq_distance, lq_norm, sup_distance
from ..mixture import loglog_slope, rate_trial, summarize_rate, trial_seed, xi_estimate
from ..smoothing import convolve, measurement_spec, select_sigma
from .config import ExperimentConfig
from .output import render_csv
from .plot import bound_slope, render_plot_script

log = logging.getLogger(__name__)

# exceptions turned into failed rows instead of aborting the run
TRIAL_ERRORS = (DbnApproxError, ArithmeticError, ValueError)


@dataclass
class Outcome:
    files: dict = field(default_factory=dict)
    failures: int = 0
    rows: int = 0


@dataclass
class JobResult:
    key: tuple
    value: object = None
    error: str = ""
    ms: float = 0.0


def run_jobs(fn, keys, threads: int):
    """Apply ``fn`` to every key, capturing failures; results come back in key order."""
    def wrapped(key):
        t0 = time.perf_counter()
        try:
            return JobResult(key, fn(key), "", (time.perf_counter() - t0) * 1e3)
        except TRIAL_ERRORS as exc:
            log.warning("job %s failed: %s", key, exc)
            return JobResult(key, None, f"{type(exc).__name__}: {exc}", (time.perf_counter() - t0) * 1e3)

    keys = sorted(keys)
    if threads > 1 and len(keys) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(wrapped, keys))
    return [wrapped(k) for k in keys]


def _status(res: JobResult) -> str:
    return "ok" if not res.error else "failed: " + res.error.replace("\n", " ")


def _timings(cfg: ExperimentConfig, results, stage: str) -> dict:
    if not cfg.timings():
        return {}
    rows = [{"m": r.key[0], "trial": r.key[1], "stage": stage, "ms": round(r.ms, 3)} for r in results]
    return {f"{cfg.name}.timings.csv": render_csv(["m", "trial", "stage", "ms"], rows, cfg.experiment,
                                                  cfg.config_hash)}


def _trial_int_seed(seed: int, m: int, trial: int) -> int:
    return int(trial_seed(seed, m, trial).generate_state(1, dtype=np.uint32)[0])


def _require_distinct(cfg, values, key, minimum):
    if len(set(values)) < minimum:
        raise cfg.error("run", key, f"needs at least {minimum} distinct values")


# ---------------------------------------------------------------- norms

def _norm_parent(family: str, dim: int) -> ParentalDensity:
    if family == "gaussian":
        return ParentalDensity.gaussian(dim)
    if family == "truncated_exponential":
        return ParentalDensity.truncated_exponential([1.0] * dim, [1.0] * dim)
    raise ConfigError(f"norms: unknown family {family!r}")


def norms(cfg: ExperimentConfig, threads: int = 1) -> Outcome:
    """Closed-form parental norms against quadrature, plus the Gaussian-moment constant."""
    families = cfg.words("run", "families", ("gaussian", "truncated_exponential"))
    dims = cfg.ints("run", "dims", (1, 2))
    qs = cfg.floats("run", "q_values", (1.0, 1.5, 2.0, 3.0, 4.0))
    rows = []
    for fam in families:
        for d in dims:
            parent = _norm_parent(fam, d)
            n = cfg.int("quadrature", "points_per_axis", 4096 if d == 1 else 512)
            spec = QuadratureSpec(parent.effective_box(), points_per_axis=n, breakpoints=parent.breakpoints())
            for q in qs:
                closed = parent.lq_norm(q)
                quad = lq_norm(parent, q, spec)
                printed = q ** (-d / (2 * q)) if fam == "gaussian" and math.isfinite(q) else None
                rows.append({"family": fam, "dim": d, "q": float(q), "closed_form": closed,
                             "quadrature": quad.value, "abs_diff": abs(closed - quad.value),
                             "quadrature_error": quad.error_estimate, "printed": printed,
                             "printed_abs_diff": None if printed is None else abs(printed - quad.value)})
    cols = ["family", "dim", "q", "closed_form", "quadrature", "abs_diff", "quadrature_error",
            "printed", "printed_abs_diff"]
    ups = [{"q": float(q), "upsilon": upsilon(q), "upsilon_printed": upsilon_printed(q),
            "difference": upsilon_printed(q) - upsilon(q)} for q in qs if math.isfinite(q)]
    out = Outcome(rows=len(rows))
    out.files[f"{cfg.name}.csv"] = render_csv(cols, rows, cfg.experiment, cfg.config_hash)
    out.files[f"{cfg.name}_upsilon.csv"] = render_csv(["q", "upsilon", "upsilon_printed", "difference"],
                                                      ups, cfg.experiment, cfg.config_hash)
    return out


# ---------------------------------------------------------------- rate

RATE_COLUMNS = ["experiment", "m", "trial", "seed", "q", "sigma", "error", "bound", "status", "config_hash"]
SUMMARY_COLUMNS = ["m", "trials", "failures", "mean_error", "bound", "slope", "slope_ci_low",
                   "slope_ci_high", "theory_slope", "xi_estimate", "config_hash"]


def _smoothed(cfg, target, parent, q):
    if cfg.has("run", "sigma"):
        sigma = cfg.float("run", "sigma")
        if not sigma > 0:
            raise cfg.error("run", "sigma", "must be positive")
    else:
        sigma = select_sigma(target, parent, q, cfg.float("run", "epsilon") / 2)
    return convolve(target, parent, sigma, seed=cfg.seed)


def rate(cfg: ExperimentConfig, threads: int = 1) -> Outcome:
    """Maurey mixtures per ``(m, trial)``; per-m means, slope fit and bound."""
    target, parent = cfg.target(), cfg.parent()
    q = cfg.float("run", "q")
    if not (1 <= q < math.inf):
        raise cfg.error("run", "q", "rate needs 1 <= q < inf")
    m_values = cfg.ints("run", "m_values")
    _require_distinct(cfg, m_values, "m_values", 3)
    trials = cfg.int("run", "trials")
    if trials < 10:
        raise cfg.error("run", "trials", "needs at least 10 trials")
    smoothed = _smoothed(cfg, target, parent, q)
    spec = measurement_spec(target, parent, smoothed.sigma, cfg.int("quadrature", "points_per_axis", None))
    pts, wts = spec.nodes()
    y = smoothed(pts)
    keys = [(m, t) for m in m_values for t in range(trials)]
    results = run_jobs(lambda k: rate_trial(smoothed, q, k[0], k[1], cfg.seed, pts, wts, y), keys, threads)
    ok = [r for r in results if not r.error]
    xi = xi_estimate(smoothed, np.concatenate([r.value[1] for r in ok], axis=0), q, spec) if ok else math.nan
    expo = -bound_slope(q)
    ups = upsilon(q)
    rows = []
    for r in results:
        m, t = r.key
        rows.append({"experiment": cfg.experiment, "m": m, "trial": t, "seed": cfg.seed, "q": q,
                     "sigma": smoothed.sigma, "error": r.value[0] if not r.error else None,
                     "bound": ups * xi * m ** (-expo), "status": _status(r), "config_hash": cfg.config_hash})
    per_m = {m: [r.value[0] for r in ok if r.key[0] == m] for m in sorted(set(m_values))}
    summary = []
    if all(per_m.values()):
        fit = summarize_rate(list(per_m), list(per_m.values()), q, xi, cfg.seed)
        for m, mean, bound in zip(fit.m_values, fit.mean_errors, fit.bounds):
            summary.append({"m": m, "trials": trials, "failures": trials - len(per_m[m]), "mean_error": mean,
                            "bound": bound, "slope": fit.slope, "slope_ci_low": fit.slope_ci[0],
                            "slope_ci_high": fit.slope_ci[1], "theory_slope": bound_slope(q),
                            "xi_estimate": xi, "config_hash": cfg.config_hash})
    out = Outcome(rows=len(rows), failures=len(results) - len(ok))
    out.files[f"{cfg.name}.csv"] = render_csv(RATE_COLUMNS, rows, cfg.experiment, cfg.config_hash)
    summary_name = f"{cfg.name}_summary.csv"
    out.files[summary_name] = render_csv(SUMMARY_COLUMNS, summary, cfg.experiment, cfg.config_hash)
    if summary:
        out.files[f"{cfg.name}_summary.gp"] = render_plot_script(
            summary_name, [{k: str(v) for k, v in s.items()} for s in summary], q)
    out.files.update(_timings(cfg, results, "maurey"))
    return out


# ---------------------------------------------------------------- kl_rate

KL_COLUMNS = ["experiment", "m", "trial", "seed", "sigma", "kl", "bound", "l2_bound", "l2_squared",
              "m_used", "M", "eta", "min_density", "redraws", "status", "config_hash"]


def _omega(cfg, target):
    if cfg.has("run", "omega_lo") or cfg.has("run", "omega_hi"):
        return (cfg.floats("run", "omega_lo"), cfg.floats("run", "omega_hi"))
    return target.box()


def kl_rate(cfg: ExperimentConfig, threads: int = 1) -> Outcome:
    """KL of the DBN pipeline per ``(m, trial)`` with its theoretical bound."""
    target, parent = cfg.target(), cfg.parent()
    m_values = cfg.ints("run", "m_values")
    trials = cfg.int("run", "trials", 1)
    if trials < 1:
        raise cfg.error("run", "trials", "must be positive")
    setup = dbn_mod.prepare_kl(target, parent, _omega(cfg, target), cfg.float("run", "eta", None),
                               m_cap=cfg.int("run", "m_cap", dbn_mod.M_CAP))
    keys = [(m, t) for m in m_values for t in range(trials)]

    def job(k):
        return dbn_mod.approximate_kl(target, parent, k[0], seed=_trial_int_seed(cfg.seed, *k), setup=setup,
                                      m_cap=cfg.int("run", "m_cap", dbn_mod.M_CAP))[1]

    results = run_jobs(job, keys, threads)
    rows = []
    for r in results:
        m, t = r.key
        row = {"experiment": cfg.experiment, "m": m, "trial": t, "seed": cfg.seed, "sigma": setup.sigma,
               "M": setup.M, "eta": setup.eta, "status": _status(r), "config_hash": cfg.config_hash}
        if not r.error:
            v = r.value
            row.update(kl=v.kl, bound=v.theory_bound, l2_bound=v.l2_bound, l2_squared=v.l2_squared,
                       m_used=v.m_used, min_density=v.min_density, redraws=v.redraws)
        rows.append(row)
    ok = [r for r in results if not r.error]
    summary = []
    per_m = {m: [r.value for r in ok if r.key[0] == m] for m in sorted(set(m_values))}
    slope = math.nan
    if all(per_m.values()) and len(per_m) >= 2:
        slope = loglog_slope(list(per_m), [np.mean([v.kl for v in vs]) for vs in per_m.values()])
    for m, vs in per_m.items():
        summary.append({"m": m, "trials": trials, "failures": trials - len(vs),
                        "mean_kl": float(np.mean([v.kl for v in vs])) if vs else None,
                        "max_kl": max(v.kl for v in vs) if vs else None,
                        "bound": min(v.theory_bound for v in vs) if vs else None,
                        "all_below_bound": all(v.kl <= v.theory_bound for v in vs) if vs else None,
                        "slope": slope, "config_hash": cfg.config_hash})
    out = Outcome(rows=len(rows), failures=len(results) - len(ok))
    out.files[f"{cfg.name}.csv"] = render_csv(KL_COLUMNS, rows, cfg.experiment, cfg.config_hash)
    out.files[f"{cfg.name}_summary.csv"] = render_csv(
        ["m", "trials", "failures", "mean_kl", "max_kl", "bound", "all_below_bound", "slope", "config_hash"],
        summary, cfg.experiment, cfg.config_hash)
    out.files.update(_timings(cfg, results, "kl"))
    return out


# ---------------------------------------------------------------- approximate

APPROX_COLUMNS = ["experiment", "m", "seed", "q", "sigma", "measured_error", "theory_bound", "smoothing_error",
                  "mixture_error", "rbm_tv", "deficiency", "rbm_error_term", "quadrature_error", "audit_bound",
                  "audit_holds", "status", "config_hash"]


def approximate(cfg: ExperimentConfig, threads: int = 1) -> Outcome:
    """One pipeline run; writes the certificate row and the serialized DBN."""
    target, parent = cfg.target(), cfg.parent()
    q = cfg.float("run", "q")
    eps = cfg.float("run", "epsilon")
    row = {"experiment": cfg.experiment, "seed": cfg.seed, "q": q, "config_hash": cfg.config_hash}
    out = Outcome(rows=1)
    try:
        if math.isinf(q):
            net, cert = dbn_mod.approximate_sup(target, parent, eps, m_cap=cfg.int("run", "m_cap", dbn_mod.M_CAP))
        else:
            net, cert = dbn_mod.approximate_lq(target, parent, q, cfg.int("run", "m"), eps, cfg.seed,
                                               refine_iterations=cfg.int("run", "refine_iterations", 0))
        row.update(m=cert.m, sigma=cert.sigma, measured_error=cert.measured_error, theory_bound=cert.theory_bound,
                   smoothing_error=cert.smoothing_error, mixture_error=cert.mixture_error, rbm_tv=cert.rbm_tv,
                   deficiency=cert.deficiency, rbm_error_term=cert.rbm_error_term,
                   quadrature_error=cert.quadrature_error, audit_bound=cert.audit_bound,
                   audit_holds=cert.audit_holds, status="ok")
        out.files[f"{cfg.name}.dbn"] = dbn_mod.dumps(net)
    except TRIAL_ERRORS as exc:
        row.update(m=cfg.int("run", "m", None), status=f"failed: {type(exc).__name__}: {exc}")
        out.failures = 1
    out.files[f"{cfg.name}.csv"] = render_csv(APPROX_COLUMNS, [row], cfg.experiment, cfg.config_hash)
    return out


# ---------------------------------------------------------------- synthesize_rbm

SYNTH_COLUMNS = ["experiment", "m", "trial", "seed", "epsilon", "max_deviation", "enumeration_tv", "sharpness",
                 "method", "hidden_units", "status", "config_hash"]


def enumeration_tv(target: rbm_mod.DiscreteDistribution, rbm: rbm_mod.BinaryRBM) -> float:
    """``max_v |target(v) - marginal(v)|`` from the full joint table."""
    marg = rbm_mod.partition_and_marginals(rbm)
    return float(np.max(np.abs(target.dense() - marg.visible_marginal)))


def synthesis_trial(seed: int, m: int, trial: int, epsilon: float):
    rng = np.random.default_rng(trial_seed(seed, m, trial))
    alpha = rng.dirichlet(np.ones(m))
    target = rbm_mod.DiscreteDistribution.from_unit_weights(alpha)
    res = rbm_mod.synthesize(target, epsilon)
    return res, enumeration_tv(target, res.rbm)


def synthesize_rbm(cfg: ExperimentConfig, threads: int = 1) -> Outcome:
    """Random unit-vector targets per ``(m, trial)``, synthesized and checked by enumeration."""
    m_values = cfg.ints("run", "m_values")
    trials = cfg.int("run", "trials", 10)
    eps = cfg.float("run", "epsilon", 1e-3)
    for m in m_values:
        if not 1 <= m or 2 * m + 1 > rbm_mod.ENUMERATION_CAP:
            raise cfg.error("run", "m_values", f"m = {m} outside 1..{(rbm_mod.ENUMERATION_CAP - 1) // 2}")
    keys = [(m, t) for m in m_values for t in range(trials)]
    results = run_jobs(lambda k: synthesis_trial(cfg.seed, k[0], k[1], eps), keys, threads)
    rows = []
    for r in results:
        row = {"experiment": cfg.experiment, "m": r.key[0], "trial": r.key[1], "seed": cfg.seed, "epsilon": eps,
               "status": _status(r), "config_hash": cfg.config_hash}
        if not r.error:
            res, tv = r.value
            row.update(max_deviation=res.max_deviation, enumeration_tv=tv, sharpness=res.sharpness,
                       method=res.method, hidden_units=res.rbm.hidden_count)
        rows.append(row)
    out = Outcome(rows=len(rows), failures=sum(1 for r in results if r.error))
    out.files[f"{cfg.name}.csv"] = render_csv(SYNTH_COLUMNS, rows, cfg.experiment, cfg.config_hash)
    out.files.update(_timings(cfg, results, "synthesize"))
    return out


# ---------------------------------------------------------------- counterexample

COUNTER_COLUMNS = ["m", "c_m", "c_m_exact", "integral", "l2_gap", "kl", "sup_gap", "config_hash"]
DEFAULT_COUNTER_M = (1, 2, 4, 8, 16, 32, 64)


def counterexample_row(m: int, points_per_axis: int = 4096) -> dict:
    """Quadrature diagnostics of ``f_m`` against the uniform density on [0, 1]."""
    f = counterexample_target(m)
    one = lambda x: np.ones(len(x))  # noqa: E731
    omega = ((0.0,), (1.0,))
    spec = QuadratureSpec(omega, points_per_axis=points_per_axis, breakpoints=f.axis_breakpoints())
    return {"m": m, "c_m": counterexample_constant(m), "c_m_exact": str(counterexample_constant_exact(m)),
            "integral": integral(f, spec).value, "l2_gap": lq_distance(f, one, 2.0, spec).value,
            "kl": kl_divergence(f, one, omega, spec).value, "sup_gap": sup_distance(f, one, spec).value}


def counterexample_demo(m_values=DEFAULT_COUNTER_M, points_per_axis: int = 4096) -> list:
    """Per m: C_m, the integral check, L^2 gap, KL and sup gap to the uniform density."""
    if any(int(m) < 1 for m in m_values):
        raise ConfigError("counterexample m values must be positive integers")
    return [counterexample_row(int(m), points_per_axis) for m in m_values]


def counterexample(cfg: ExperimentConfig, threads: int = 1) -> Outcome:
    rows = counterexample_demo(cfg.ints("run", "m_values", DEFAULT_COUNTER_M),
                               cfg.int("quadrature", "points_per_axis", 4096))
    for r in rows:
        r["config_hash"] = cfg.config_hash
    return Outcome({f"{cfg.name}.csv": render_csv(COUNTER_COLUMNS, rows, cfg.experiment, cfg.config_hash)},
                   0, len(rows))


# ---------------------------------------------------------------- eval

def eval_dbn(cfg: ExperimentConfig, threads: int = 1) -> Outcome:
    """Evaluate a serialized DBN on a grid and optionally draw samples."""
    path = cfg.raw("run", "dbn")
    if not os.path.isabs(path) and cfg.path:
        path = os.path.join(os.path.dirname(os.path.abspath(cfg.path)), path)
    try:
        with open(path, encoding="utf-8") as fh:
            net = dbn_mod.loads(fh.read())
    except OSError as exc:
        raise cfg.error("run", "dbn", f"cannot read {path}: {exc.strerror}") from None
    except DbnApproxError as exc:
        raise cfg.error("run", "dbn", f"cannot parse {path}: {exc}") from None
    d = net.dim
    lo = cfg.floats("run", "grid_lo")
    hi = cfg.floats("run", "grid_hi")
    n = cfg.int("run", "grid_points", 101)
    if len(lo) != d or len(hi) != d:
        raise cfg.error("run", "grid_lo", f"grid corners need {d} coordinates")
    axes = [np.linspace(lo[k], hi[k], n) for k in range(d)]
    pts = np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=1)
    dens = net(pts)
    xcols = [f"x{k + 1}" for k in range(d)]
    rows = [dict({"index": i, "density": float(dens[i])}, **{c: float(pts[i, k]) for k, c in enumerate(xcols)})
            for i in range(len(pts))]
    out = Outcome(rows=len(rows))
    out.files[f"{cfg.name}.csv"] = render_csv(["index"] + xcols + ["density"], rows, cfg.experiment,
                                              cfg.config_hash)
    count = cfg.int("run", "samples", 0)
    if count > 0:
        draws = dbn_mod.sample_visible(net, cfg.seed, count)
        srows = [dict({"index": i}, **{c: float(draws[i, k]) for k, c in enumerate(xcols)})
                 for i in range(count)]
        out.files[f"{cfg.name}_samples.csv"] = render_csv(["index"] + xcols, srows, cfg.experiment,
                                                          cfg.config_hash)
    return out


EXPERIMENT_FUNCTIONS = {
    "norms": norms,
    "rate": rate,
    "kl_rate": kl_rate,
    "approximate": approximate,
    "synthesize_rbm": synthesize_rbm,
    "counterexample": counterexample,
    "eval": eval_dbn,
}


def run_experiment(cfg: ExperimentConfig, threads: int = 1) -> Outcome:
    return EXPERIMENT_FUNCTIONS[cfg.experiment](cfg, threads)
