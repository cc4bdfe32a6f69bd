"""Time each numba kernel against its numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat N]

Also times one full tracker run on a synthetic scene under the active backend
(set INSTRACK_DISABLE_NUMBA=1 to time the fallback end to end).
"""
import argparse
import time

import numpy as np

from instrack import kernels
from instrack._accel import HAS_NUMBA


def best_of(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def cases(rng):
    a = np.column_stack([rng.uniform(0, 800, (300, 2)), rng.uniform(10, 80, (300, 2))])
    b = np.column_stack([rng.uniform(0, 800, (300, 2)), rng.uniform(10, 80, (300, 2))])
    cost = rng.random((100, 100))
    frame = rng.integers(0, 256, (480, 640, 3), dtype=np.uint8)
    X = rng.normal(size=(800, 64))
    y = (rng.random(800) < 0.5).astype(float)
    sw = np.ones(800)
    perms = np.stack([rng.permutation(800) for _ in range(20)])
    keys = rng.integers(0, 10_000, (256, 5)).astype(np.int64)
    return {
        "iou_matrix 300x300": lambda k: k["iou_matrix"](a, b),
        "lap_min_cost 100x100": lambda k: k["lap_min_cost"](cost),
        "rgb_histogram 200x300 px": lambda k: k["rgb_histogram"](frame, 100, 50, 400, 250),
        "logistic_sgd 800x64, 20 passes": lambda k: k["logistic_sgd"](np.zeros(64), 0.0, X, y, sw, perms,
                                                                       0.1, 32, 1e-4),
        "hashed_normals 256x64": lambda k: k["hashed_normals"](np.uint64(7), keys, 64),
    }


def backend(suffix):
    names = ("iou_matrix", "lap_min_cost", "rgb_histogram", "logistic_sgd", "hashed_normals")
    return {n: getattr(kernels, f"{n}_{suffix}") for n in names}


def tracker_run():
    from instrack.cli import scenario_pruner
    from instrack.core import TrackerParams
    from instrack.simulator import ScenarioSpec, generate
    from instrack.tracker import TrackerEngine, run_sequence

    spec = ScenarioSpec(num_targets=5, frames=100, miss_rate=0.05, fp_rate=0.1, det_noise=1.0)
    world = generate(spec, 0)
    params = TrackerParams()
    engine = TrackerEngine(params, scenario_pruner(spec, 0, params), world.source)
    t0 = time.perf_counter()
    run_sequence(engine, world.detections, range(1, spec.frames + 1))
    return time.perf_counter() - t0


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    rng = np.random.default_rng(0)
    fallback = backend("numpy")
    compiled = backend("numba") if HAS_NUMBA else None
    print(f"{'kernel':<34}{'numpy [ms]':>12}{'numba [ms]':>12}{'speedup':>10}")
    for name, call in cases(rng).items():
        t_np = best_of(lambda: call(fallback), args.repeat)
        if compiled is None:
            print(f"{name:<34}{1e3 * t_np:>12.3f}{'n/a':>12}{'':>10}")
            continue
        call(compiled)  # compile
        t_nb = best_of(lambda: call(compiled), args.repeat)
        print(f"{name:<34}{1e3 * t_np:>12.3f}{1e3 * t_nb:>12.3f}{t_np / t_nb:>9.1f}x")
    tracker_run()
    print(f"\ntracker, 5 targets x 100 frames ({kernels.BACKEND} backend): {tracker_run():.2f}s")


if __name__ == "__main__":
    main()
