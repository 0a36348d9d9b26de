"""Compiled kernels with pure-numpy fallbacks.

Numba is used when importable unless the environment variable
``TNSKETCH_DISABLE_NUMBA`` is set to a truthy value. Both code paths
agree up to floating-point summation order; the numpy path is the
reference.
"""
import os

import numpy as np

_disabled = os.environ.get("TNSKETCH_DISABLE_NUMBA", "").strip().lower() in (
    "1", "true", "yes", "on")

try:
    if _disabled:
        raise ImportError
    from numba import njit
    HAS_NUMBA = True
except ImportError:  # pragma: no cover - depends on environment
    HAS_NUMBA = False


def _perm_min_row_log_numpy(perms, eu, ev, logw, out_logw):
    perms = np.asarray(perms, dtype=np.int64)
    n_perm, n = perms.shape
    pos = np.empty_like(perms)
    rows = np.arange(n_perm)[:, None]
    pos[rows, perms] = np.arange(n)[None, :]
    row = np.tile(np.asarray(out_logw, dtype=np.float64), (n_perm, 1))
    for k in range(len(eu)):
        u, v = eu[k], ev[k]
        u_first = pos[:, u] < pos[:, v]
        row[u_first, u] += logw[k]
        row[~u_first, v] += logw[k]
    return row.min(axis=1)


def _subset_cuts_numpy(tail_masks, head_masks, dangling, logw, subsets):
    tm = np.asarray(tail_masks, dtype=np.int64)[None, :]
    hm = np.asarray(head_masks, dtype=np.int64)[None, :]
    sub = np.asarray(subsets, dtype=np.int64)[:, None]
    touches = (tm & sub) != 0
    leaves = ((hm & ~sub) != 0) | np.asarray(dangling, dtype=bool)[None, :]
    return (touches & leaves).astype(np.float64) @ np.asarray(logw, dtype=np.float64)


if HAS_NUMBA:

    @njit(cache=True)
    def _perm_min_row_log_jit(perms, eu, ev, logw, out_logw):
        n_perm, n = perms.shape
        best = np.empty(n_perm)
        pos = np.empty(n, dtype=np.int64)
        row = np.empty(n)
        for p in range(n_perm):
            for i in range(n):
                pos[perms[p, i]] = i
                row[i] = out_logw[i]
            for k in range(eu.shape[0]):
                if pos[eu[k]] < pos[ev[k]]:
                    row[eu[k]] += logw[k]
                else:
                    row[ev[k]] += logw[k]
            lo = row[0]
            for i in range(1, n):
                if row[i] < lo:
                    lo = row[i]
            best[p] = lo
        return best

    @njit(cache=True)
    def _subset_cuts_jit(tail_masks, head_masks, dangling, logw, subsets):
        out = np.zeros(subsets.shape[0])
        for a in range(subsets.shape[0]):
            s = subsets[a]
            acc = 0.0
            for e in range(tail_masks.shape[0]):
                if (tail_masks[e] & s) != 0 and (
                        (head_masks[e] & ~s) != 0 or dangling[e]):
                    acc += logw[e]
            out[a] = acc
        return out


def perm_min_row_log(perms, eu, ev, logw, out_logw, use_numba=None):
    """Smallest log row size of a linearized embedding, per vertex ordering.

    Parameters
    ----------
    perms : ndarray of int, shape (P, n)
        Each row is an ordering of the embedding vertices ``0..n-1``.
    eu, ev : ndarray of int, shape (E,)
        Endpoints of the edges joining two embedding vertices.
    logw : ndarray, shape (E,)
        Log sizes of those edges.
    out_logw : ndarray, shape (n,)
        Per vertex, the summed log size of its output (free) edges.
    use_numba : bool, optional
        Force a code path. Defaults to the module setting.

    Returns
    -------
    ndarray, shape (P,)
        ``min_v log(row size of v)`` for each ordering, where an edge adds to
        the row size of whichever endpoint comes first.
    """
    use = HAS_NUMBA if use_numba is None else (use_numba and HAS_NUMBA)
    args = (np.ascontiguousarray(perms, dtype=np.int64),
            np.ascontiguousarray(eu, dtype=np.int64),
            np.ascontiguousarray(ev, dtype=np.int64),
            np.ascontiguousarray(logw, dtype=np.float64),
            np.ascontiguousarray(out_logw, dtype=np.float64))
    if use:
        return _perm_min_row_log_jit(*args)
    return _perm_min_row_log_numpy(*args)


def subset_cuts(tail_masks, head_masks, dangling, logw, subsets, use_numba=None):
    """Weighted cut of many vertex subsets given as bitmasks.

    An edge counts toward ``cut(A)`` when its tail set meets ``A`` and its
    head set leaves ``A`` (or it has a free end). Undirected hyperedges pass
    the same mask as tail and head; a directed edge ``u -> v`` passes
    ``1 << u`` and ``1 << v``.
    """
    use = HAS_NUMBA if use_numba is None else (use_numba and HAS_NUMBA)
    args = (np.ascontiguousarray(tail_masks, dtype=np.int64),
            np.ascontiguousarray(head_masks, dtype=np.int64),
            np.ascontiguousarray(dangling, dtype=np.bool_),
            np.ascontiguousarray(logw, dtype=np.float64),
            np.ascontiguousarray(subsets, dtype=np.int64))
    if use:
        return _subset_cuts_jit(*args)
    return _subset_cuts_numpy(*args)
