"""Timing of the numba kernels against their pure-numpy fallbacks.

Run ``python benchmarks/bench_kernels.py``. Each kernel is called once to
trigger compilation, then timed over several repeats; the table reports the
best time of each flavour and the speed-up.
"""
import timeit

import numpy as np

from uiprice import kernels
from uiprice._accel import HAVE_NUMBA
from uiprice.mc import monomial_exponents


def _cases(rng):
    n = 401
    lower = rng.uniform(-1, 0, n)
    upper = rng.uniform(-1, 0, n)
    diag = 3.0 + rng.uniform(0, 1, n)
    rhs = rng.normal(size=(161, n))
    q = rng.normal(size=(200000, 2))
    z = rng.normal(size=(100000, 2))
    exps = monomial_exponents(2, 3)
    return {
        "tridiag_solve (161 x 401)": ("tridiag_solve", (lower, diag, upper, rhs)),
        "apply_tridiag (161 x 401)": ("apply_tridiag", (lower, diag, upper, rhs)),
        "hamiltonian_field (2e5 x 2)": ("hamiltonian_field", (q, 0.5, 3.0)),
        "poly_features (1e5, degree 3)": ("poly_features", (z, exps)),
    }


def main(repeat=5, number=3):
    rng = np.random.default_rng(0)
    print(f"numba available: {HAVE_NUMBA}")
    print(f"{'kernel':32s} {'numpy [ms]':>12s} {'numba [ms]':>12s} {'speed-up':>9s}")
    for label, (name, args) in _cases(rng).items():
        slow = getattr(kernels, f"{name}_numpy")
        fast = getattr(kernels, f"{name}_numba")
        a = slow(*args)
        b = fast(*args)
        for x, y in zip(a if isinstance(a, tuple) else (a,), b if isinstance(b, tuple) else (b,)):
            assert np.allclose(x, y, rtol=1e-10, atol=1e-12), label
        t_slow = min(timeit.repeat(lambda: slow(*args), repeat=repeat, number=number)) / number
        t_fast = min(timeit.repeat(lambda: fast(*args), repeat=repeat, number=number)) / number
        print(f"{label:32s} {1e3 * t_slow:12.3f} {1e3 * t_fast:12.3f} {t_slow / t_fast:9.2f}")


if __name__ == "__main__":
    main()
