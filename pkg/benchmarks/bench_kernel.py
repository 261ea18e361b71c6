"""Compare the compiled and the pure-NumPy propagation kernels.

    python benchmarks/bench_kernel.py [--batch 100] [--duration-ns 600] [--repeat 3]
"""
import argparse
import time

import numpy as np

from rydsim import _kernel_py
from rydsim.core import PulseShape, SystemParams, _hamiltonian_parts, decay_rates, default_step
from rydsim.core import half_step_envelope, time_grid
from rydsim.noise import FluctuationSpec, draw_ensemble, initial_state

try:
    from rydsim import _kernel as _kernel_c
except ImportError:
    _kernel_c = None


def inputs(batch, duration):
    spec = FluctuationSpec(n_trajectories=batch)
    members = draw_ensemble(SystemParams(delta_small=-36.8), spec)
    step = min(default_step(p) for p in members)
    times = np.linspace(0.0, duration, 61)
    dts, idx, nodes = time_grid(times, step)
    env = half_step_envelope(PulseShape(duration), dts, nodes)
    h0 = np.array([_hamiltonian_parts(p)[0] for p in members])
    hred = np.array([_hamiltonian_parts(p)[1] for p in members])
    gb, gs = np.array([decay_rates(p) for p in members]).T.copy()
    rho0 = np.broadcast_to(initial_state(spec), (batch, 5, 5))
    return (rho0, h0, hred, gb, gs, env, dts, idx), dts.size


def timed(fn, args, repeat):
    best = np.inf
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--batch", type=int, default=100)
    ap.add_argument("--duration-ns", type=float, default=600.0)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    kernel_args, steps = inputs(args.batch, args.duration_ns * 1e-3)
    print(f"batch {args.batch} x {steps} RK4 steps")
    t_py, ref = timed(_kernel_py.propagate, kernel_args, args.repeat)
    print(f"numpy   : {t_py:8.3f} s  ({args.batch * steps / t_py:,.0f} steps/s)")
    if _kernel_c is None:
        print("cython  : not built")
        return
    t_c, out = timed(_kernel_c.propagate, kernel_args, args.repeat)
    print(f"cython  : {t_c:8.3f} s  ({args.batch * steps / t_c:,.0f} steps/s)")
    print(f"speedup : {t_py / t_c:6.1f}x   max |difference| = {np.max(np.abs(out - ref)):.2e}")


if __name__ == "__main__":
    main()
