#!/usr/bin/env python3
"""Wall-clock comparison of the numba and numpy stepping backends.

Runs the same coupled ensemble (linear model, gamma = sqrt(30)) through both
backends and reports pair-steps per second plus the largest difference in the
recorded states. The first numba call includes JIT compilation and is timed
separately.

    python benchmarks/bench_backends.py --pairs 256 2048 --steps 2000
"""
import argparse
import math
import time

import numpy as np

from kinetic_coupler import CouplingControls, ModelParams, PotentialSpec, build_bundle, make_potential
from kinetic_coupler.coupling import run_pairs


def setup(n, seed=0):
    pot = make_potential(PotentialSpec("quadratic", L=1.0, R=1.0))
    params = ModelParams(1, 1.0, math.sqrt(30))
    bundle = build_bundle(pot, params)
    controls = CouplingControls.from_geometry(bundle.geometry)
    rng = np.random.default_rng(seed)
    state = [rng.normal(size=(n, 1)) for _ in range(4)]
    return pot, params, controls, state


def timed(backend, pot, params, controls, state, steps, dt=1e-3):
    t0 = time.perf_counter()
    _, rec = run_pairs(*state, pot, params, controls, dt, steps, max(1, steps // 10), 7, backend=backend)
    return time.perf_counter() - t0, rec


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--pairs", type=int, nargs="+", default=[256, 2048])
    ap.add_argument("--steps", type=int, default=2000)
    args = ap.parse_args()

    pot, params, controls, state = setup(4)
    t_jit, _ = timed("numba", pot, params, controls, state, 10)
    print(f"numba first call (includes compile or cache load): {t_jit:.2f} s")
    print(f"{'pairs':>7} {'steps':>7} {'numpy s':>9} {'numba s':>9} {'speedup':>8} {'max |diff|':>11}")
    for n in args.pairs:
        pot, params, controls, state = setup(n)
        t_np, rec_np = timed("numpy", pot, params, controls, state, args.steps)
        t_nb, rec_nb = timed("numba", pot, params, controls, state, args.steps)
        diff = float(np.max(np.abs(rec_np - rec_nb)))
        print(f"{n:>7} {args.steps:>7} {t_np:>9.3f} {t_nb:>9.3f} {t_np / t_nb:>8.1f} {diff:>11.2e}")
    print("pathwise differences come from libm rounding amplified inside the switching band")


if __name__ == "__main__":
    main()
