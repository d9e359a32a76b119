"""Time the numpy and numba kernel paths on workloads shaped like a real run.

    python benchmarks/bench_kernels.py [--repeat N] [--json] [--no-pipeline]

The first numba call compiles (or loads the on-disk cache); it is done once
before timing and reported separately.
"""
import argparse
import json
import time

import numpy as np

from fedteach import kernels
from fedteach.config import ExperimentConfig
from fedteach.numerics import init_mlp
from fedteach.pipeline import run_stages
from fedteach.training import epoch_orders


def workloads(rng):
    params = init_mlp((16, 16, 16, 10), rng, ["relu", "linear", "linear"])
    sizes, relu, flat = params._sizes_arr, params._relu_arr, params.flat
    X = rng.normal(size=(300, 16))
    y = rng.integers(10, size=300)
    Q = rng.normal(size=(300, 10))
    Q0 = np.zeros_like(Q)
    dout = rng.normal(size=(300, 10))
    orders = epoch_orders(rng, 300, 1)
    return {
        "forward 300x16": lambda: kernels.forward(flat, sizes, relu, X),
        "backward 300x16": lambda: kernels.backward(flat, sizes, relu, X, dout),
        # one client's local epoch at batch 32
        "sgd epoch, CE": lambda: kernels.sgd_train(flat.copy(), sizes, relu, X, y, Q0, 0.0,
                                                  orders, 0.05, 32),
        "sgd epoch, CE+KL": lambda: kernels.sgd_train(flat.copy(), sizes, relu, X, y, Q, 1.0,
                                                     orders, 0.05, 32),
    }


def best_of(fn, repeat, number):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        for _ in range(number):
            fn()
        times.append((time.perf_counter() - t0) / number)
    return min(times)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__,
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--number", type=int, default=20)
    ap.add_argument("--json", action="store_true")
    ap.add_argument("--no-pipeline", action="store_true",
                    help="skip the end-to-end run with the default config")
    args = ap.parse_args(argv)

    results = {}
    for backend in kernels.available_backends():
        with kernels.use_backend(backend):
            jobs = workloads(np.random.default_rng(0))
            t0 = time.perf_counter()
            for fn in jobs.values():
                fn()
            warmup = time.perf_counter() - t0
            results[backend] = {"warmup_s": warmup}
            for name, fn in jobs.items():
                results[backend][name] = best_of(fn, args.repeat, args.number)
            if not args.no_pipeline:
                results[backend]["full pipeline"] = best_of(
                    lambda: run_stages(ExperimentConfig(seed=0)), 2, 1)

    if args.json:
        print(json.dumps(results, indent=1))
        return
    names = [k for k in results["numpy"] if k != "warmup_s"]
    have_numba = "numba" in results
    print(f"{'workload':<20}{'numpy':>12}" + (f"{'numba':>12}{'speedup':>10}" if have_numba else ""))
    for name in names:
        line = f"{name:<20}{results['numpy'][name] * 1e3:>10.4g}ms"
        if have_numba:
            nb = results["numba"][name]
            line += f"{nb * 1e3:>10.4g}ms{results['numpy'][name] / nb:>9.1f}x"
        print(line)
    if have_numba:
        print(f"numba warm-up (compile or cache load): {results['numba']['warmup_s']:.2f}s")
    else:
        print("numba not installed; only the numpy path was timed")


if __name__ == "__main__":
    main()
