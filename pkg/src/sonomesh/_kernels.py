"""Hot numeric kernels, compiled with numba when available.

Set ``SONOMESH_NO_NUMBA=1`` to force the pure-numpy fallbacks (the numba
and numpy paths are asserted equivalent in tests/test_kernels.py and
compared in benchmarks/bench_kernels.py).
"""

from __future__ import annotations

import os

import numpy as np

NUMBA_ENABLED = False
if os.environ.get("SONOMESH_NO_NUMBA", "") != "1":
    try:
        from numba import njit

        NUMBA_ENABLED = True
    except ImportError:  # pragma: no cover - numba is a declared dependency
        pass

NEG_INF = -1e30


def viterbi_forward_numpy(soft, pred, sign0, sign1):
    """Maximum-correlation Viterbi over a rate-1/2 trellis.

    soft:  (nsteps, 2) float64, soft symbol values in [-1, 1] (positive = bit 1)
    pred:  (nstates, 2) predecessor state per (state, choice)
    sign0/sign1: (nstates, 2) expected symbol signs (+-1) of the transition
    Returns (decoded bits, final path metric).
    """
    nsteps = soft.shape[0]
    nstates = pred.shape[0]
    pm = np.full(nstates, NEG_INF)
    pm[0] = 0.0
    choices = np.empty((nsteps, nstates), dtype=np.uint8)
    for t in range(nsteps):
        s0, s1 = soft[t, 0], soft[t, 1]
        m0 = pm[pred[:, 0]] + s0 * sign0[:, 0] + s1 * sign1[:, 0]
        m1 = pm[pred[:, 1]] + s0 * sign0[:, 1] + s1 * sign1[:, 1]
        take1 = m1 > m0
        pm = np.where(take1, m1, m0)
        choices[t] = take1
    state = int(np.argmax(pm))
    bits = np.empty(nsteps, dtype=np.uint8)
    for t in range(nsteps - 1, -1, -1):
        bits[t] = state & 1
        state = int(pred[state, choices[t, state]])
    return bits, float(pm.max())


def _viterbi_forward_loops(soft, pred, sign0, sign1):
    nsteps = soft.shape[0]
    nstates = pred.shape[0]
    pm = np.full(nstates, NEG_INF)
    pm[0] = 0.0
    pm_next = np.empty(nstates)
    choices = np.empty((nsteps, nstates), dtype=np.uint8)
    for t in range(nsteps):
        s0 = soft[t, 0]
        s1 = soft[t, 1]
        for ns in range(nstates):
            m0 = pm[pred[ns, 0]] + s0 * sign0[ns, 0] + s1 * sign1[ns, 0]
            m1 = pm[pred[ns, 1]] + s0 * sign0[ns, 1] + s1 * sign1[ns, 1]
            if m1 > m0:
                pm_next[ns] = m1
                choices[t, ns] = 1
            else:
                pm_next[ns] = m0
                choices[t, ns] = 0
        pm, pm_next = pm_next, pm
    best = 0
    for ns in range(1, nstates):
        if pm[ns] > pm[best]:
            best = ns
    bits = np.empty(nsteps, dtype=np.uint8)
    state = best
    for t in range(nsteps - 1, -1, -1):
        bits[t] = state & 1
        state = pred[state, choices[t, state]]
    return bits, pm[best]


def xor_pair_scan_numpy(effects, syndrome):
    """All index pairs (i < j) with effects[i] ^ effects[j] == syndrome."""
    x = np.bitwise_xor.outer(effects, effects) == syndrome
    ii, jj = np.nonzero(np.triu(x, k=1))
    return np.stack([ii, jj], axis=1).astype(np.int64)


def _xor_pair_scan_loops(effects, syndrome):
    n = effects.shape[0]
    out = np.empty((n * (n - 1) // 2, 2), dtype=np.int64)
    count = 0
    for i in range(n):
        ei = effects[i]
        for j in range(i + 1, n):
            if ei ^ effects[j] == syndrome:
                out[count, 0] = i
                out[count, 1] = j
                count += 1
    return out[:count]


if NUMBA_ENABLED:
    viterbi_forward_njit = njit(cache=True)(_viterbi_forward_loops)
    xor_pair_scan_njit = njit(cache=True)(_xor_pair_scan_loops)
    viterbi_forward = viterbi_forward_njit
    xor_pair_scan = xor_pair_scan_njit
else:
    viterbi_forward_njit = None
    xor_pair_scan_njit = None
    viterbi_forward = viterbi_forward_numpy
    xor_pair_scan = xor_pair_scan_numpy
