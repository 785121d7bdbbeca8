"""Compare the compiled kernels with the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat N]

Kernel timings run in-process against both backends; the end-to-end
timing runs one WPD enhancement per backend in a fresh interpreter so
that ``CONVBF_BACKEND`` decides the import.
"""
import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from convbf.kernels import BACKENDS

PIPELINE = """
import time
from convbf import kernels
from convbf.steering import noise_mask_from_margins
from convbf.stft import StftConfig, analyze
from convbf.synth import make_scenario
from convbf.wpd import WpdConfig, enhance
scn = make_scenario(seed=0, num_mics=8, duration_s=6.0)
cfg = StftConfig()
spec = analyze(scn.mix, cfg)
mask = noise_mask_from_margins(spec.num_frames, cfg, 0.225, 0.075, num_samples=len(scn.mix))
best = float("inf")
for _ in range(3):
    start = time.perf_counter()
    enhance(spec, "wpd_wpe", WpdConfig(), mask, threads=1)
    best = min(best, time.perf_counter() - start)
print(kernels.BACKEND, best)
"""


def kernel_cases(rng):
    T, M = 750, 8
    x = rng.standard_normal((T, M)) + 1j * rng.standard_normal((T, M))
    weights = rng.uniform(0.1, 1.0, T)
    lags = np.array([0, 4, 5, 6, 7, 8, 9, 10, 11, 12])
    w = rng.standard_normal((M * len(lags), 1)) + 0j
    G = rng.standard_normal((M * (len(lags) - 1), M)) + 0j
    frames = rng.standard_normal((600, 400))
    r = np.stack([np.correlate(f, f, "full")[399:410] for f in frames])

    def lpc(impl):
        a, _ = impl.levinson(r)
        return impl.lpc_cepstrum(a, 10)

    return {
        "weighted_covariance (T=750, D=80)": lambda impl: impl.weighted_covariance(x, weights, lags),
        "apply_filter (T=750, D=80, K=1)": lambda impl: impl.apply_filter(x, w, lags),
        "apply_filter (T=750, D=72, K=8)": lambda impl: impl.apply_filter(x, G, lags[1:]),
        "levinson + cepstrum (600 frames)": lpc,
    }


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=20)
    parser.add_argument("--skip-pipeline", action="store_true")
    args = parser.parse_args()

    if "compiled" not in BACKENDS:
        print("compiled extension not built; only the fallback is available")
    cases = kernel_cases(np.random.default_rng(0))
    print(f"{'kernel':38s}" + "".join(f"{name:>12s}" for name in BACKENDS) + "     speedup")
    for label, fn in cases.items():
        times = {name: min(timeit.repeat(lambda: fn(impl), number=1, repeat=args.repeat))
                 for name, impl in BACKENDS.items()}
        row = "".join(f"{times[name] * 1e3:10.3f}ms" for name in BACKENDS)
        speedup = times["python"] / times["compiled"] if "compiled" in times else float("nan")
        print(f"{label:38s}{row}  {speedup:8.2f}x")

    if args.skip_pipeline:
        return
    print("\nend-to-end wpd_wpe, 8 channels, 6 s, one thread (best of 3):")
    for name in BACKENDS:
        env = dict(os.environ, CONVBF_BACKEND=name)
        out = subprocess.run([sys.executable, "-c", PIPELINE], env=env, check=True,
                             capture_output=True, text=True).stdout.split()
        print(f"  {out[0]:10s}{float(out[1]):8.2f} s")


if __name__ == "__main__":
    main()
