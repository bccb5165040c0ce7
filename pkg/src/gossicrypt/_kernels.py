"""Hot loops of the simulator.

Every kernel has a numba ``@njit`` implementation and a pure-numpy twin.
Randomness is drawn by the caller, so both produce identical results.
Set ``GOSSICRYPT_NUMBA=0`` to force the numpy path.
"""
from __future__ import annotations

import os

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and os.environ.get("GOSSICRYPT_NUMBA", "1").lower() not in ("0", "false", "no", "off")


# -- numpy --------------------------------------------------------------------


def count_trace_np(kinds, targets, initial):
    """Correct-node count after each event.

    ``kinds[e]`` is 1 for a refresh and 0 for a compromise of ``targets[e]``.
    """
    kinds = np.asarray(kinds, dtype=np.int8)
    targets = np.asarray(targets, dtype=np.int64)
    initial = np.asarray(initial, dtype=np.bool_)
    if len(kinds) == 0:
        return np.zeros(0, dtype=np.int64)
    order = np.argsort(targets, kind="stable")
    t_sorted = targets[order]
    k_sorted = kinds[order]
    prev = np.empty_like(k_sorted)
    first = np.ones(len(order), dtype=bool)
    first[1:] = t_sorted[1:] != t_sorted[:-1]
    prev[first] = initial[t_sorted[first]]
    prev[~first] = k_sorted[:-1][~first[1:]]
    delta = np.empty(len(kinds), dtype=np.int64)
    delta[order] = k_sorted.astype(np.int64) - prev
    return int(initial.sum()) + np.cumsum(delta)


def masks_at_np(kinds, targets, initial, indices):
    """Correct-node masks right after each event in ``indices``."""
    kinds = np.asarray(kinds, dtype=np.bool_)
    targets = np.asarray(targets, dtype=np.int64)
    initial = np.asarray(initial, dtype=np.bool_)
    indices = np.asarray(indices, dtype=np.int64)
    n = len(initial)
    last = np.full((len(kinds), n), -1, dtype=np.int64)
    last[np.arange(len(kinds)), targets] = np.arange(len(kinds))
    np.maximum.accumulate(last, axis=0, out=last)
    rows = last[indices]
    return np.where(rows >= 0, kinds[np.maximum(rows, 0)], initial[None, :])


def success_trials_np(masks, snap_idx, relays, heads):
    """``Y > 0`` per trial: some relay flipped heads and is still correct."""
    correct = masks[np.asarray(snap_idx)[:, None], relays]
    return np.any(correct & heads, axis=1)


def breach_windows_np(masks, source, relays, heads, kmax):
    """Count runs of ``k`` consecutive breached epochs for ``k = 1..kmax``.

    ``heads`` has shape (replicates, epochs, relays). An epoch is breached when
    the source is compromised and no correct relay re-encrypted.
    Returns ``(hits, windows)`` arrays of length ``kmax``.
    """
    src_bad = ~masks[:, source]
    relay_ok = masks[:, relays]
    protected = np.any(heads & relay_ok[None, :, :], axis=2)
    breach = src_bad[None, :] & ~protected
    reps, epochs = breach.shape
    hits = np.zeros(kmax, dtype=np.int64)
    windows = np.zeros(kmax, dtype=np.int64)
    run = breach.copy()
    for k in range(1, kmax + 1):
        if k > 1:
            run = run[:, :-1] & breach[:, k - 1:]
        hits[k - 1] = int(run.sum())
        windows[k - 1] = run.size
    return hits, windows


# -- numba --------------------------------------------------------------------

if HAVE_NUMBA:

    @njit(cache=True)
    def count_trace_nb(kinds, targets, initial):
        state = initial.copy()
        c = 0
        for i in range(state.shape[0]):
            if state[i]:
                c += 1
        out = np.empty(kinds.shape[0], dtype=np.int64)
        for e in range(kinds.shape[0]):
            t = targets[e]
            new = kinds[e] == 1
            if new and not state[t]:
                c += 1
            elif state[t] and not new:
                c -= 1
            state[t] = new
            out[e] = c
        return out

    @njit(cache=True)
    def masks_at_nb(kinds, targets, initial, indices):
        n = initial.shape[0]
        out = np.empty((indices.shape[0], n), dtype=np.bool_)
        state = initial.copy()
        j = 0
        for e in range(kinds.shape[0]):
            state[targets[e]] = kinds[e] == 1
            while j < indices.shape[0] and indices[j] == e:
                out[j, :] = state
                j += 1
        return out

    @njit(cache=True)
    def success_trials_nb(masks, snap_idx, relays, heads):
        out = np.zeros(relays.shape[0], dtype=np.bool_)
        for t in range(relays.shape[0]):
            row = masks[snap_idx[t]]
            for j in range(relays.shape[1]):
                if heads[t, j] and row[relays[t, j]]:
                    out[t] = True
                    break
        return out

    @njit(cache=True)
    def breach_windows_nb(masks, source, relays, heads, kmax):
        reps, epochs, nrel = heads.shape
        hits = np.zeros(kmax, dtype=np.int64)
        windows = np.zeros(kmax, dtype=np.int64)
        breach = np.zeros(epochs, dtype=np.bool_)
        for r in range(reps):
            for e in range(epochs):
                b = not masks[e, source]
                if b:
                    for j in range(nrel):
                        if heads[r, e, j] and masks[e, relays[j]]:
                            b = False
                            break
                breach[e] = b
            streak = 0
            for e in range(epochs):
                streak = streak + 1 if breach[e] else 0
                for k in range(1, kmax + 1):
                    if e + 1 >= k:
                        windows[k - 1] += 1
                        if streak >= k:
                            hits[k - 1] += 1
        return hits, windows


def _sorted_indices(indices):
    indices = np.asarray(indices, dtype=np.int64)
    if len(indices) and np.any(np.diff(indices) < 0):
        raise ValueError("snapshot indices must be non-decreasing")
    return indices


def count_trace(kinds, targets, initial):
    if USE_NUMBA:
        return count_trace_nb(np.asarray(kinds, np.int8), np.asarray(targets, np.int64),
                              np.asarray(initial, np.bool_))
    return count_trace_np(kinds, targets, initial)


def masks_at(kinds, targets, initial, indices):
    indices = _sorted_indices(indices)
    if USE_NUMBA:
        return masks_at_nb(np.asarray(kinds, np.int8), np.asarray(targets, np.int64),
                           np.asarray(initial, np.bool_), indices)
    return masks_at_np(kinds, targets, initial, indices)


def success_trials(masks, snap_idx, relays, heads):
    fn = success_trials_nb if USE_NUMBA else success_trials_np
    return fn(np.asarray(masks, np.bool_), np.asarray(snap_idx, np.int64),
              np.asarray(relays, np.int64), np.asarray(heads, np.bool_))


def breach_windows(masks, source, relays, heads, kmax):
    fn = breach_windows_nb if USE_NUMBA else breach_windows_np
    return fn(np.asarray(masks, np.bool_), int(source), np.asarray(relays, np.int64),
              np.asarray(heads, np.bool_), int(kmax))
