"""
Compiled against pure-Python trajectory kernel.

    python benchmarks/bench_kernel.py [--duration-us 20000] [--repeat 3]

Both kernels run the same atom with the same seed; the script checks that
their outputs agree bit for bit and reports the wall time per simulated ms.
"""

import argparse
import time

import numpy as np

from fbcool import dynamics, model
from fbcool.controller import FeedbackConfig, Schedule


def run(backend, duration, seed):
    cavity, drive = model.CavityParams(), model.DriveParams()
    dyn, fb = dynamics.DynamicsConfig(), FeedbackConfig()
    rng = dynamics.make_rng(seed)
    init = dynamics.sample_initial(dyn.t_init, fb.u_high, rng, cavity)
    return dynamics.simulate_trajectory(init, fb, Schedule.constant("feedback"), duration, drive,
                                        cavity, dyn, rng, record="full", backend=backend)


def best_time(backend, duration, seed, repeat):
    times, rec = [], None
    for _ in range(repeat):
        t0 = time.perf_counter()
        rec = run(backend, duration, seed)
        times.append(time.perf_counter() - t0)
    return min(times), rec


def main():
    ap = argparse.ArgumentParser(description=__doc__.strip().splitlines()[0])
    ap.add_argument("--duration-us", type=float, default=20000.0)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args()

    if dynamics._run_compiled is None:
        raise SystemExit("compiled kernel not built; run `pip install -e . --no-build-isolation`")
    t_c, rec_c = best_time("compiled", args.duration_us, args.seed, args.repeat)
    t_p, rec_p = best_time("python", args.duration_us, args.seed, args.repeat)
    same = (rec_c.final_state == rec_p.final_state
            and np.array_equal(rec_c.intensity_bins, rec_p.intensity_bins))
    ms = rec_c.duration / 1000.0
    print(f"simulated {ms:g} ms ({rec_c.duration:.0f} bins)")
    print(f"compiled  {t_c:9.4f} s  {1e3 * t_c / ms:8.3f} ms per simulated ms")
    print(f"python    {t_p:9.4f} s  {1e3 * t_p / ms:8.3f} ms per simulated ms")
    print(f"speed-up  {t_p / t_c:9.1f}x   identical output: {same}")


if __name__ == "__main__":
    main()
