"""Compiled vs NumPy kernels on workloads taken from the spectral pipelines.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--atoms 2049] [--points 256]

Prints one row per workload with the best-of-N time per backend, the speedup
and the max relative disagreement between the two backends.
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from toepweyl import _pykernels
from toepweyl.tauberian import build_mollifier
from toepweyl.weyl_spectra import BUMP_CUTOFF, AutocorrelatedBump

try:
    from toepweyl import _ckernels
except ImportError:  # pragma: no cover - benchmark needs the build
    _ckernels = None


def workloads(n_atoms: int, n_points: int, rng: np.random.Generator):
    # sphere-like ladder: atoms on a lattice of spacing ~2 with smooth weights
    loc = np.sort(rng.uniform(-n_atoms, n_atoms, n_atoms))
    w = np.exp(-(loc / (0.3 * n_atoms)) ** 2)
    x = np.linspace(-3.0, 3.0, n_points)
    bump = AutocorrelatedBump(5 * np.pi)
    s, c = bump.cosine_rule(BUMP_CUTOFF)
    mol = build_mollifier(20.0)
    t, ct = mol.cdf_rule
    big = rng.normal(size=1_000_000) * 10.0 ** rng.integers(-8, 8, size=1_000_000)
    return {
        "neumaier_sum[1e6]": lambda m: m.neumaier_sum(big),
        "neumaier_dot[1e6]": lambda m: m.neumaier_dot(big, big[::-1].copy()),
        "bump_convolution": lambda m: m.atom_convolution(x, loc, w, s, c, bump.eps, BUMP_CUTOFF, 1),
        "cdf_convolution": lambda m: m.atom_convolution(x, loc, w, t, ct, 1.0, 600.0 / mol.T, 2),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--atoms", type=int, default=2049)
    ap.add_argument("--points", type=int, default=256)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    if _ckernels is None:
        raise SystemExit("compiled kernels are not built; run `pip install -e . --no-build-isolation`")
    rng = np.random.default_rng(args.seed)
    print(f"{'workload':<20} {'python [s]':>11} {'cython [s]':>11} {'speedup':>8} {'max rel diff':>13}")
    for name, fn in workloads(args.atoms, args.points, rng).items():
        py = min(timeit.repeat(lambda: fn(_pykernels), number=1, repeat=args.repeat))
        cy = min(timeit.repeat(lambda: fn(_ckernels), number=1, repeat=args.repeat))
        a, b = np.atleast_1d(fn(_pykernels)), np.atleast_1d(fn(_ckernels))
        diff = float(np.max(np.abs(a - b) / np.maximum(np.abs(a), 1e-300)))
        print(f"{name:<20} {py:>11.4f} {cy:>11.4f} {py / cy:>7.1f}x {diff:>13.2e}")


if __name__ == "__main__":
    main()
