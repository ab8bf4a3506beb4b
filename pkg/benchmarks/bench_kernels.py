"""Time the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat N]
"""
import argparse
import timeit

import numpy as np

from dbnapprox import _pykernels

try:
    from dbnapprox import _ckernels
except ImportError:
    _ckernels = None


def cases():
    rng = np.random.default_rng(0)
    for d, n_pts, m in ((1, 20_000, 256), (2, 4_096, 64), (3, 4_096, 16)):
        pts = rng.normal(size=(n_pts, d))
        shifts = rng.normal(size=(m, d))
        w = rng.dirichlet(np.ones(m))
        for fam, name in ((_pykernels.GAUSSIAN, "gaussian"), (_pykernels.TRUNCATED_EXPONENTIAL, "trunc_exp")):
            yield (f"mixture_density d={d} {name} {n_pts}x{m}", "mixture_density",
                   (pts, shifts, w, 0.3, fam, np.ones(d), np.ones(d)))
    yield "log_esf n=64", "log_esf", (rng.normal(size=64),)
    yield "log_esf n=512", "log_esf", (rng.normal(size=512),)
    for m, n in ((10, 11), (14, 15)):
        yield (f"visible_log_weights {m}x{n}", "visible_log_weights",
               (rng.normal(size=(m, n)), rng.normal(size=m), rng.normal(size=n)))


def best_time(fn, args, repeat):
    number = 1
    while timeit.timeit(lambda: fn(*args), number=number) < 0.05:
        number *= 2
    return min(timeit.repeat(lambda: fn(*args), number=number, repeat=repeat)) / number


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=5)
    args = p.parse_args(argv)
    if _ckernels is None:
        print("compiled extension not built; only the fallback is available")
    print(f"{'kernel':<48}{'python ms':>12}{'cython ms':>12}{'speedup':>10}")
    for label, name, fargs in cases():
        py = best_time(getattr(_pykernels, name), fargs, args.repeat)
        if _ckernels is None:
            print(f"{label:<48}{py * 1e3:>12.3f}{'-':>12}{'-':>10}")
            continue
        cy_fn = getattr(_ckernels, name)
        assert np.allclose(cy_fn(*fargs), getattr(_pykernels, name)(*fargs), rtol=1e-10)
        cy = best_time(cy_fn, fargs, args.repeat)
        print(f"{label:<48}{py * 1e3:>12.3f}{cy * 1e3:>12.3f}{py / cy:>9.1f}x")


if __name__ == "__main__":
    main()
