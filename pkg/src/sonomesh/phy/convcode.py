"""Rate-1/2 convolutional code, constraint length 7, generators 171/133 (octal).

The encoder starts in the zero state and is truncated (no tail bits), so a
138-bit packet codes to exactly 276 bits; the decoder picks the best end
state.  Decoding is maximum-likelihood over the trellis via the Viterbi
kernels in :mod:`sonomesh._kernels`.
"""

from __future__ import annotations

import numpy as np

from .. import _kernels

K = 7
G0 = 0o171
G1 = 0o133
NSTATES = 1 << (K - 1)


def _parity(x: int) -> int:
    return bin(x).count("1") & 1


def _build_tables():
    # state = last 6 input bits, newest in the LSB
    out0 = np.empty((NSTATES, 2), dtype=np.int8)
    out1 = np.empty((NSTATES, 2), dtype=np.int8)
    next_state = np.empty((NSTATES, 2), dtype=np.int64)
    for s in range(NSTATES):
        for b in (0, 1):
            reg = ((s << 1) | b) & 0x7F
            out0[s, b] = _parity(reg & G0)
            out1[s, b] = _parity(reg & G1)
            next_state[s, b] = reg & (NSTATES - 1)
    # predecessor view: transitions into ns consume input bit ns & 1
    pred = np.empty((NSTATES, 2), dtype=np.int64)
    sign0 = np.empty((NSTATES, 2), dtype=np.float64)
    sign1 = np.empty((NSTATES, 2), dtype=np.float64)
    for ns in range(NSTATES):
        b = ns & 1
        for c in (0, 1):
            p = (c << (K - 2)) | (ns >> 1)
            pred[ns, c] = p
            sign0[ns, c] = 2.0 * out0[p, b] - 1.0
            sign1[ns, c] = 2.0 * out1[p, b] - 1.0
    return out0, out1, next_state, pred, sign0, sign1


_OUT0, _OUT1, _NEXT, _PRED, _SIGN0, _SIGN1 = _build_tables()


def conv_encode(bits: np.ndarray) -> np.ndarray:
    """Encode hard bits (uint8 array) to 2x coded bits."""
    bits = np.asarray(bits, dtype=np.uint8)
    coded = np.empty(2 * len(bits), dtype=np.uint8)
    s = 0
    for i, b in enumerate(bits):
        coded[2 * i] = _OUT0[s, b]
        coded[2 * i + 1] = _OUT1[s, b]
        s = _NEXT[s, b]
    return coded


def conv_decode(soft: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Viterbi-decode soft symbols.

    ``soft`` has shape (2*n,) or (n, 2), values in [-1, 1] with positive
    meaning coded bit 1.  Returns (n decoded bits, per-bit reliability in
    [0, 1] derived from the symbol magnitudes of each trellis step).
    """
    soft = np.asarray(soft, dtype=np.float64)
    if soft.ndim == 1:
        if len(soft) % 2:
            raise ValueError("soft symbol count must be even for a rate-1/2 code")
        soft = soft.reshape(-1, 2)
    bits, _ = _kernels.viterbi_forward(soft, _PRED, _SIGN0, _SIGN1)
    reliability = np.clip(np.abs(soft).mean(axis=1), 0.0, 1.0)
    return bits, reliability


def conv_decode_hard(coded: np.ndarray) -> np.ndarray:
    """Decode hard coded bits (0/1) by mapping them to +-1 soft symbols."""
    coded = np.asarray(coded, dtype=np.float64)
    return conv_decode(coded * 2.0 - 1.0)[0]
