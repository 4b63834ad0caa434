"""Rate-1/2 constraint-length-7 convolutional code with hard-decision Viterbi
decoding, plus the row-column block interleaver spanning one coded frame.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ConfigError, FramingError


@dataclass(frozen=True)
class CodeParams:
    constraint_length: int = 7
    generators: tuple[int, int] = (0o133, 0o171)
    interleave_span: int = 20

    @property
    def rate(self) -> float:
        return 0.5

    @property
    def tail_bits(self) -> int:
        return self.constraint_length - 1


def _taps(generator: int, constraint_length: int) -> np.ndarray:
    """Polynomial coefficients by delay, delay 0 first (octal MSB = current input)."""
    k = constraint_length
    return np.array([(generator >> (k - 1 - d)) & 1 for d in range(k)], dtype=np.int64)


def conv_encode(bits, params: CodeParams = CodeParams()) -> np.ndarray:
    """Zero-terminated codeword of length 2 * (len(bits) + tail)."""
    bits = np.asarray(bits, dtype=np.int64).ravel()
    padded = np.concatenate([bits, np.zeros(params.tail_bits, dtype=np.int64)])
    streams = [
        np.convolve(padded, _taps(g, params.constraint_length))[: padded.size] % 2
        for g in params.generators
    ]
    out = np.empty(2 * padded.size, dtype=np.int8)
    out[0::2] = streams[0]
    out[1::2] = streams[1]
    return out


@lru_cache(maxsize=None)
def _trellis(generators: tuple[int, int], constraint_length: int):
    """Predecessor-form trellis tables for the vectorized Viterbi recursion."""
    k = constraint_length
    n_states = 1 << (k - 1)
    taps = [_taps(g, k) for g in generators]

    def branch_output(state: int, bit: int) -> int:
        # state packs (u[n-1] ... u[n-k+1]) with u[n-1] in the MSB
        word = 0
        for t in taps:
            acc = t[0] & bit
            for d in range(1, k):
                acc ^= t[d] & ((state >> (k - 1 - d)) & 1)
            word = (word << 1) | int(acc)
        return word

    pred = np.empty((n_states, 2), dtype=np.int64)
    pred_out = np.empty((n_states, 2), dtype=np.int64)
    input_bit = np.empty(n_states, dtype=np.int8)
    for new in range(n_states):
        b = new >> (k - 2)
        input_bit[new] = b
        for t in range(2):
            old = ((new << 1) & (n_states - 1)) | t
            pred[new, t] = old
            pred_out[new, t] = branch_output(old, b)
    return pred, pred_out, input_bit


_HAMMING2 = np.array(
    [[0, 1, 1, 2], [1, 0, 2, 1], [1, 2, 0, 1], [2, 1, 1, 0]], dtype=np.int64
)


def viterbi_decode(coded, params: CodeParams = CodeParams()) -> np.ndarray:
    """Maximum-likelihood sequence under the Hamming metric for a terminated codeword."""
    coded = np.asarray(coded, dtype=np.int64).ravel()
    if coded.size % 2:
        raise FramingError("codeword length must be even")
    n_steps = coded.size // 2
    if n_steps <= params.tail_bits:
        raise FramingError("codeword too short for a terminated block")
    rx = 2 * coded[0::2] + coded[1::2]
    pred, pred_out, input_bit = _trellis(params.generators, params.constraint_length)
    n_states = pred.shape[0]

    inf = np.int64(1 << 40)
    pm = np.full(n_states, inf, dtype=np.int64)
    pm[0] = 0
    choice = np.empty((n_steps, n_states), dtype=np.int8)
    for t in range(n_steps):
        d = _HAMMING2[:, rx[t]]
        cand0 = pm[pred[:, 0]] + d[pred_out[:, 0]]
        cand1 = pm[pred[:, 1]] + d[pred_out[:, 1]]
        take1 = cand1 < cand0
        choice[t] = take1
        pm = np.where(take1, cand1, cand0)

    state = 0  # zero-terminated
    bits = np.empty(n_steps, dtype=np.int8)
    for t in range(n_steps - 1, -1, -1):
        bits[t] = input_bit[state]
        state = pred[state, choice[t, state]]
    return bits[: n_steps - params.tail_bits]


def interleave(bits, span: int) -> np.ndarray:
    """Row-column block permutation: write span rows, read columns."""
    bits = np.asarray(bits).ravel()
    if span < 1 or bits.size % span:
        raise FramingError(f"length {bits.size} does not fill {span} rows")
    return bits.reshape(span, -1).T.ravel()


def deinterleave(bits, span: int) -> np.ndarray:
    """Inverse of `interleave`."""
    bits = np.asarray(bits).ravel()
    if span < 1 or bits.size % span:
        raise FramingError(f"length {bits.size} does not fill {span} rows")
    return bits.reshape(-1, span).T.ravel()


def frame_bit_budget(n_data_bins: int, bits_per_symbol: int, params: CodeParams) -> int:
    """Information bits that exactly fill one interleaver span of OFDM symbols."""
    coded_capacity = params.interleave_span * n_data_bins * bits_per_symbol
    if coded_capacity % 2:
        raise ConfigError("coded capacity must be even for the rate-1/2 code")
    n_info = coded_capacity // 2 - params.tail_bits
    if n_info < 1:
        raise ConfigError("frame too small to carry information bits")
    return n_info
