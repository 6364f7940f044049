"""Compare the compiled kernels with the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat N]

Prints one row per kernel with the best-of-N wall time of each backend and
the speed-up.  Inputs are fixed-seed and sized like a training batch
(CRF), a long test sequence (Viterbi), a 64x64x64 response volume
(non-maximum suppression) and a batch of 200 tracks (median flow).
"""
import argparse
import timeit

import numpy as np

from mvladdm import kernels


def cases(rng):
    un = rng.normal(size=(20, 16, 4))
    tr = rng.normal(size=(4, 4))
    seq = rng.normal(size=(2000, 6))
    tr6 = rng.normal(size=(6, 6))
    resp = rng.random((64, 64, 64))
    flows = rng.normal(scale=0.5, size=(16, 48, 48, 2))
    starts = rng.uniform(8, 40, size=(200, 2))

    def track(mod):
        for x, y in starts:
            mod.median_flow_track(flows, float(x), float(y), 15, 8.0)

    return [
        ("crf_forward_backward T=20 B=16 N=4", lambda m: m.crf_forward_backward(un, tr)),
        ("viterbi T=2000 N=6", lambda m: m.viterbi(seq, tr6)),
        ("nonmax3d 64^3", lambda m: m.nonmax3d(resp, 0.5)),
        ("median_flow_track 200 x L=15", track),
    ]


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    mods = kernels.backends()
    if "cython" not in mods:
        print("compiled kernels not built; only the numpy fallback is available")
    rng = np.random.default_rng(0)
    names = list(mods)
    print(f"{'kernel':40s}" + "".join(f"{n + ' [ms]':>14s}" for n in names) + f"{'speed-up':>10s}")
    for label, fn in cases(rng):
        times = {}
        for n in names:
            m = mods[n]
            times[n] = min(timeit.repeat(lambda: fn(m), number=1, repeat=args.repeat)) * 1e3
        speed = times["python"] / times["cython"] if "cython" in times else float("nan")
        print(f"{label:40s}" + "".join(f"{times[n]:14.3f}" for n in names) + f"{speed:10.1f}x")


if __name__ == "__main__":
    main()
