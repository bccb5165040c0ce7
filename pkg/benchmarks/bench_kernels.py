"""Time the numba kernels against their numpy twins on simulator-sized inputs.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Results are checked for equality before timing.
"""
import argparse
import timeit

import numpy as np

from gossicrypt import _kernels as K


def inputs(seed=0, n_nodes=100, n_events=11000):
    rng = np.random.default_rng(seed)
    kinds = (rng.random(n_events) < 0.6).astype(np.int8)
    targets = rng.integers(n_nodes, size=n_events).astype(np.int64)
    initial = np.ones(n_nodes, dtype=np.bool_)
    snaps = np.arange(1000, n_events, 10, dtype=np.int64)
    epochs = np.arange(1000, n_events, 500, dtype=np.int64)
    masks = K.masks_at_np(kinds, targets, initial, snaps)
    pick = np.sort(rng.integers(len(snaps), size=2000))
    relays = rng.integers(n_nodes, size=(2000, 6)).astype(np.int64)
    heads = rng.random((2000, 6)) < 0.7
    emasks = K.masks_at_np(kinds, targets, initial, epochs)
    eheads = rng.random((2000, len(epochs), 3)) < 0.5
    rel3 = np.array([1, 2, 3], dtype=np.int64)
    return {
        "count_trace": ((kinds, targets, initial), K.count_trace_np, K.count_trace_nb),
        "masks_at": ((kinds, targets, initial, snaps), K.masks_at_np, K.masks_at_nb),
        "success_trials": ((masks, pick, relays, heads), K.success_trials_np, K.success_trials_nb),
        "breach_windows": ((emasks, 0, rel3, eheads, 5), K.breach_windows_np, K.breach_windows_nb),
    }


def same(a, b):
    if isinstance(a, tuple):
        return all(np.array_equal(x, y) for x, y in zip(a, b))
    return np.array_equal(a, b)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--number", type=int, default=3)
    args = ap.parse_args(argv)
    if not K.HAVE_NUMBA:
        print("numba not installed; nothing to compare")
        return
    print(f"{'kernel':16s} {'numpy ms':>10s} {'numba ms':>10s} {'speedup':>8s}")
    for name, (a, f_np, f_nb) in inputs().items():
        assert same(f_np(*a), f_nb(*a)), name   # also triggers compilation
        t_np = min(timeit.repeat(lambda: f_np(*a), number=args.number, repeat=args.repeat)) / args.number
        t_nb = min(timeit.repeat(lambda: f_nb(*a), number=args.number, repeat=args.repeat)) / args.number
        print(f"{name:16s} {t_np * 1e3:10.3f} {t_nb * 1e3:10.3f} {t_np / t_nb:7.1f}x")


if __name__ == "__main__":
    main()
