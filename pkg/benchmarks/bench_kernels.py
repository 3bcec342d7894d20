"""Time one coupled replication (main path + B replicas) on each backend.

    python benchmarks/bench_kernels.py [--n 4000] [--b 200] [--repeat 3]
"""

import argparse
import time

import numpy as np

from sgdinfer.harness import ExperimentConfig, draw_inputs, prepare
from sgdinfer.kernels import HAVE_COMPILED, run_coupled


def bench(cfg, backend, track, repeat):
    prep = prepare(cfg)
    inputs = draw_inputs(cfg, prep, 0)
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = run_coupled(prep.model, *inputs, track_sigma=track, backend=backend)
        best = min(best, time.perf_counter() - t0)
    return best, out


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--n", type=int, default=4000)
    p.add_argument("--b", type=int, default=200)
    p.add_argument("--repeat", type=int, default=3)
    args = p.parse_args(argv)

    backends = ["python"] + (["compiled"] if HAVE_COMPILED else [])
    if not HAVE_COMPILED:
        print("compiled extension not available; timing the numpy fallback only")
    print(f"{'model':<10} {'sigma':<6} " + " ".join(f"{b:>10}" for b in backends) + "   speedup  max|diff|")
    for kind in ("gmm", "logistic"):
        cfg = ExperimentConfig(model={"kind": kind}, N=args.n, B=args.b, MC=1, oracle_n_mc=10_000)
        for track in (False, True):
            times, outs = [], []
            for b in backends:
                t, out = bench(cfg, b, track, args.repeat)
                times.append(t)
                outs.append(out)
            row = f"{kind:<10} {str(track):<6} " + " ".join(f"{t:>9.3f}s" for t in times)
            if len(times) == 2:
                diff = max(np.max(np.abs(outs[0][1].thetas - outs[1][1].thetas)),
                           np.max(np.abs(outs[0][0].theta_bar - outs[1][0].theta_bar)))
                row += f"   {times[0] / times[1]:>6.1f}x  {diff:.1e}"
            print(row)


if __name__ == "__main__":
    main()
