"""Acceptance checks, one test per criterion.

Each test prints a single PASS/FAIL line through the ``report`` fixture and
the lines are repeated in the terminal summary.  Tolerances and runtime
limits are pinned as module constants.
"""
import glob
import math
import os
import time
from fractions import Fraction

import numpy as np
import pytest

from dbnapprox import dbn as dbn_mod
from dbnapprox import rbm as rbm_mod
from dbnapprox.densities import (ParentalDensity, counterexample_constant_exact, gaussian_target,
                                 piecewise_constant_target, truncated_exponential_target, upsilon,
                                 upsilon_printed)
from dbnapprox.harness.config import load_config, parse_config
from dbnapprox.harness.experiments import counterexample_demo, run_experiment, synthesis_trial
from dbnapprox.metrics import QuadratureSpec, kl_l2_bound_check, lq_norm
from dbnapprox.mixture import fit_rate, loglog_slope
from dbnapprox.smoothing import convolve, measurement_spec

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
SEED = 0

NORM_TOL, NORM_RUNTIME = 1e-6, 10.0
UPS_EXACT_TOL, UPS_Q4_TOL, UPS_RUNTIME = 1e-8, 1e-6, 1.0
RATE_Q2_SLOPE, RATE_SAFETY, RATE_RUNTIME = (-0.65, -0.35), 3.0, 300.0
RATE_Q15_SLOPE = (-0.48, -0.18)
RATE_M, RATE_TRIALS, RATE_SIGMA = (4, 16, 64, 256), 50, 0.1
SYNTH_M, SYNTH_TRIALS, SYNTH_TV, SYNTH_RUNTIME = (2, 3, 4, 5, 6), 10, 1e-3, 120.0
L2_M, L2_EPS, L2_ABS, L2_RUNTIME = 64, 0.1, 0.25, 180.0
KL_M, KL_TRIALS, KL_SLOPE, KL_RUNTIME = (8, 16, 32, 64), 40, (-1.4, -0.6), 300.0
PAIR_PAIRS, PAIR_FLOOR, PAIR_MARGIN, PAIR_RUNTIME = 100, 0.1, 1e-6, 30.0
CE_M, CE_INT_TOL, CE_L2_FINAL, CE_KL_FINAL, CE_SUP_MIN, CE_RUNTIME = (1, 2, 4, 8, 16, 32, 64), 1e-8, 0.05, 0.01, 0.4, 30.0
DET_RUNTIME = 60.0


def _within(x, interval):
    return interval[0] <= x <= interval[1]


def test_criterion_01_closed_form_norms(report):
    t0 = time.perf_counter()
    worst_literal = worst_te = worst_correct = 0.0
    for d in (1, 2):
        n = 4096 if d == 1 else 512
        for parent in (ParentalDensity.gaussian(d),
                       ParentalDensity.truncated_exponential([1.0] * d, [1.0] * d)):
            spec = QuadratureSpec(parent.effective_box(), points_per_axis=n, breakpoints=parent.breakpoints())
            for q in (1.0, 1.5, 2.0, 3.0, 4.0):
                quad = lq_norm(parent, q, spec).value
                if parent.family == "gaussian":
                    worst_literal = max(worst_literal, abs(q ** (-d / (2 * q)) - quad))
                    worst_correct = max(worst_correct, abs(parent.lq_norm(q) - quad))
                else:
                    worst_te = max(worst_te, abs(parent.lq_norm(q) - quad))
    elapsed = time.perf_counter() - t0
    ok = worst_literal <= NORM_TOL and worst_te <= NORM_TOL and elapsed < NORM_RUNTIME
    report(1, ok, f"gaussian |q^(-d/2q) - quad| max {worst_literal:.3g} (tol {NORM_TOL:g}); "
                  f"truncated exponential max {worst_te:.3g}; (2pi)-corrected gaussian form max "
                  f"{worst_correct:.3g}; {elapsed:.2f}s")
    assert worst_te <= NORM_TOL
    assert worst_correct <= NORM_TOL
    assert elapsed < NORM_RUNTIME
    assert worst_literal <= NORM_TOL, "the q^(-d/(2q)) closed form omits the (2pi)^(d(1-q)/(2q)) factor"


def test_criterion_02_upsilon(report):
    t0 = time.perf_counter()
    u1, u2, u4 = upsilon(1.0), upsilon(2.0), upsilon(4.0)
    elapsed = time.perf_counter() - t0
    printed = upsilon_printed(4.0)
    ok = (abs(u1 - 1) <= UPS_EXACT_TOL and abs(u2 - 1) <= UPS_EXACT_TOL
          and abs(u4 - 3 ** 0.25) <= UPS_Q4_TOL and elapsed < UPS_RUNTIME)
    report(2, ok, f"U1={u1!r} U2={u2!r} U4={u4:.9f} vs 3^(1/4)={3 ** 0.25:.9f}; printed q=4 form "
                  f"{printed:.6f} differs by {printed - u4:+.6f}; {elapsed:.3f}s")
    assert ok


def _rate_fit(q):
    target, parent = gaussian_target(0.0, 1.0), ParentalDensity.gaussian(1)
    smoothed = convolve(target, parent, RATE_SIGMA, seed=SEED)
    spec = measurement_spec(target, parent, RATE_SIGMA)
    return fit_rate(smoothed, q, RATE_M, RATE_TRIALS, SEED, spec, threads=4, safety=RATE_SAFETY)


def test_criterion_03_maurey_rate_q2(report):
    t0 = time.perf_counter()
    fit = _rate_fit(2.0)
    elapsed = time.perf_counter() - t0
    below = all(e < b for e, b in zip(fit.mean_errors, fit.bounds))
    ok = _within(fit.slope, RATE_Q2_SLOPE) and below and elapsed < RATE_RUNTIME
    report(3, ok, f"slope {fit.slope:.4f} in {RATE_Q2_SLOPE} (theory {fit.theoretical_slope}); "
                  f"means {[round(e, 5) for e in fit.mean_errors]} below 3*U*xi*m^-1/2 "
                  f"{[round(b, 5) for b in fit.bounds]}: {below}; {elapsed:.1f}s")
    assert ok


def test_criterion_04_maurey_rate_q15(report):
    t0 = time.perf_counter()
    fit = _rate_fit(1.5)
    elapsed = time.perf_counter() - t0
    ok = _within(fit.slope, RATE_Q15_SLOPE) and elapsed < RATE_RUNTIME
    report(4, ok, f"slope {fit.slope:.4f} (bootstrap CI {fit.slope_ci[0]:.3f}..{fit.slope_ci[1]:.3f}) "
                  f"required in {RATE_Q15_SLOPE}, theory {fit.theoretical_slope:.4f}; {elapsed:.1f}s")
    assert elapsed < RATE_RUNTIME
    assert ok, "overlapping bumps put the mean error in the m^(-1/2) regime, not the worst-case m^(-1/3)"


def test_criterion_05_rbm_synthesis(report):
    t0 = time.perf_counter()
    worst, shapes_ok = 0.0, True
    for m in SYNTH_M:
        for trial in range(SYNTH_TRIALS):
            res, tv = synthesis_trial(SEED, m, trial, SYNTH_TV)
            worst = max(worst, tv)
            shapes_ok &= (res.rbm.visible_count, res.rbm.hidden_count) == (m, m + 1)
    elapsed = time.perf_counter() - t0
    ok = worst <= SYNTH_TV and shapes_ok and elapsed < SYNTH_RUNTIME
    report(5, ok, f"{len(SYNTH_M) * SYNTH_TRIALS} targets, worst enumeration TV {worst:.3g} "
                  f"(tol {SYNTH_TV:g}); shapes (m, m+1): {shapes_ok}; {elapsed:.2f}s")
    assert ok


def test_criterion_06_l2_certificate(report):
    t0 = time.perf_counter()
    _, cert = dbn_mod.approximate_lq(gaussian_target(0.0, 1.0), ParentalDensity.gaussian(1), 2.0, L2_M,
                                     L2_EPS, SEED)
    elapsed = time.perf_counter() - t0
    ok = cert.audit_holds and cert.measured_error <= L2_ABS and elapsed < L2_RUNTIME
    report(6, ok, f"measured {cert.measured_error:.5f} <= audit {cert.audit_bound:.5f}: {cert.audit_holds}; "
                  f"<= {L2_ABS}: {cert.measured_error <= L2_ABS}; {elapsed:.2f}s")
    assert ok


def test_criterion_07_kl_pipeline(report):
    t0 = time.perf_counter()
    target = truncated_exponential_target([1.0], [1.0])
    parent = ParentalDensity.truncated_exponential([0.5], [1.0])
    setup = dbn_mod.prepare_kl(target, parent, ((0.0,), (1.0,)))
    means, all_below, worst_ratio = [], True, 0.0
    for m in KL_M:
        kls = []
        for trial in range(KL_TRIALS):
            _, res = dbn_mod.approximate_kl(target, parent, m, seed=int(np.random.SeedSequence(
                [SEED, m, trial]).generate_state(1)[0]), setup=setup)
            kls.append(res.kl)
            all_below &= res.kl <= res.theory_bound
            worst_ratio = max(worst_ratio, res.kl / res.theory_bound)
        means.append(float(np.mean(kls)))
    slope = loglog_slope(KL_M, means)
    elapsed = time.perf_counter() - t0
    ok = all_below and _within(slope, KL_SLOPE) and elapsed < KL_RUNTIME
    report(7, ok, f"mean KL {[f'{v:.3g}' for v in means]}, slope {slope:.3f} in {KL_SLOPE}; every run below "
                  f"bound: {all_below} (max KL/bound {worst_ratio:.3g}); M={setup.M}; {elapsed:.1f}s")
    assert ok


def _floored_step_density(rng):
    k = int(rng.integers(1, 11))
    inner = np.sort(rng.uniform(0, 1, k - 1))
    edges = np.concatenate([[0.0], inner, [1.0]])
    u = rng.uniform(0, 1, k)
    extra = (1 - PAIR_FLOOR) * u / float(np.dot(u, np.diff(edges)))
    return edges, PAIR_FLOOR + extra


def test_criterion_08_kl_below_l2_over_eta(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(np.random.SeedSequence([SEED, 8]))
    omega = ((0.0,), (1.0,))
    worst_gap, failures = -math.inf, 0
    for _ in range(PAIR_PAIRS):
        ef, vf = _floored_step_density(rng)
        eg, vg = _floored_step_density(rng)
        f = piecewise_constant_target(ef, vf, normalize=False)
        g = piecewise_constant_target(eg, vg, normalize=False)
        spec = QuadratureSpec(omega, points_per_axis=64, breakpoints=(tuple(ef) + tuple(eg),))
        chk = kl_l2_bound_check(f, g, omega, PAIR_FLOOR, spec, margin=PAIR_MARGIN)
        failures += not chk.holds
        worst_gap = max(worst_gap, chk.kl - chk.bound)
    elapsed = time.perf_counter() - t0
    ok = failures == 0 and elapsed < PAIR_RUNTIME
    report(8, ok, f"{PAIR_PAIRS} pairs, {failures} violations, max KL - L2^2/eta {worst_gap:.3g} "
                  f"(margin {PAIR_MARGIN:g}); {elapsed:.2f}s")
    assert ok


def test_criterion_09_counterexample(report):
    t0 = time.perf_counter()
    rows = counterexample_demo(CE_M)
    elapsed = time.perf_counter() - t0
    ints = [abs(r["integral"] - 1) for r in rows]
    l2 = [r["l2_gap"] for r in rows]
    kl = [r["kl"] for r in rows]
    sup = [r["sup_gap"] for r in rows]
    c2 = counterexample_constant_exact(2)
    checks = {
        "integral": max(ints) <= CE_INT_TOL,
        "l2 decreasing": all(b < a for a, b in zip(l2, l2[1:])) and l2[-1] < CE_L2_FINAL,
        "kl decreasing": all(b < a for a, b in zip(kl, kl[1:])) and kl[-1] < CE_KL_FINAL,
        "sup gap": min(sup) >= CE_SUP_MIN,
        "C2": c2 == Fraction(16, 15),
        "runtime": elapsed < CE_RUNTIME,
    }
    ok = all(checks.values())
    report(9, ok, f"max |int-1| {max(ints):.2g}; L2 final {l2[-1]:.4f}; KL final {kl[-1]:.3g}; min sup gap "
                  f"{min(sup):.4f}; C2 = {c2}; failed: {[k for k, v in checks.items() if not v]}; {elapsed:.2f}s")
    assert ok


def _run_all(configs, tmp_dbn, threads):
    out = {}
    for path in configs:
        if os.path.basename(path) == "eval.ini":
            text = open(path, encoding="utf-8").read().replace("../out/approximate_l2.dbn", tmp_dbn)
            cfg = parse_config(text, path)
        else:
            cfg = load_config(path)
        out[os.path.basename(path)] = run_experiment(cfg, threads).files
    return out


def test_criterion_10_determinism_and_round_trip(report, tmp_path):
    t0 = time.perf_counter()
    configs = sorted(glob.glob(os.path.join(ROOT, "configs", "*.ini")))
    first = run_experiment(load_config(os.path.join(ROOT, "configs", "approximate_l2.ini")), 1).files
    dbn_path = tmp_path / "approximate_l2.dbn"
    dbn_path.write_text(first["approximate_l2.dbn"], encoding="utf-8")
    run_a = _run_all(configs, str(dbn_path), threads=1)
    run_b = _run_all(configs, str(dbn_path), threads=4)
    identical = [name for name in run_a if run_a[name] == run_b[name]]

    text = first["approximate_l2.dbn"]
    net = dbn_mod.loads(text)
    dbn_exact = dbn_mod.dumps(net) == text and dbn_mod.loads(dbn_mod.dumps(net)) == net
    rng = np.random.default_rng(SEED)
    rbm = rbm_mod.BinaryRBM(rng.normal(size=(4, 5)) * 1e3, rng.normal(size=4) / 7, rng.normal(size=5) * 1e-9)
    rbm_exact = rbm_mod.loads(rbm_mod.dumps(rbm)) == rbm and rbm_mod.dumps(rbm_mod.loads(rbm_mod.dumps(rbm))) \
        == rbm_mod.dumps(rbm)
    elapsed = time.perf_counter() - t0
    ok = len(identical) == len(configs) and dbn_exact and rbm_exact and elapsed < DET_RUNTIME
    report(10, ok, f"{len(identical)}/{len(configs)} experiments byte-identical across reruns (threads 1 vs 4); "
                   f"RBM round trip exact: {rbm_exact}; DBN round trip exact: {dbn_exact}; {elapsed:.1f}s")
    assert ok


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q", "-s"]))
