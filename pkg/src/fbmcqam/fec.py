"""Rate-1/2 convolutional coding with a batched Viterbi decoder.

Constraint length 7, generators octal 133 and 171 (first output stream from
133), zero-terminated with six flush bits. The decoder runs the 64-state
trellis over a whole batch of codewords at once; soft mode consumes per-bit
log-likelihood ratios (positive = bit 0 likelier), hard mode consumes bits.
A global scaling of the LLRs cannot change the decoded path.
"""

from __future__ import annotations

import numpy as np

__all__ = ["conv_encode", "viterbi_decode", "CONSTRAINT_LENGTH", "GENERATORS"]

CONSTRAINT_LENGTH = 7
GENERATORS = (0o133, 0o171)
_MEMORY = CONSTRAINT_LENGTH - 1
_NSTATES = 1 << _MEMORY


def _parity(x: np.ndarray) -> np.ndarray:
    x = x ^ (x >> 4)
    x = x ^ (x >> 2)
    x = x ^ (x >> 1)
    return x & 1


def _transitions():
    """Per next-state predecessor table and the transition output bits.

    Returns pred (64, 2) previous states, out0/out1 (64, 2) coded bits of the
    transition from pred[s', j] into s'.
    """
    nxt = np.arange(_NSTATES)
    inp = nxt >> (_MEMORY - 1)
    base = (nxt & ((_NSTATES >> 1) - 1)) << 1
    pred = np.stack([base, base + 1], axis=1)
    word = (inp[:, None] << _MEMORY) | pred
    out0 = _parity(word & GENERATORS[0])
    out1 = _parity(word & GENERATORS[1])
    return pred, out0, out1


_PRED, _OUT0, _OUT1 = _transitions()


def conv_encode(bits: np.ndarray) -> np.ndarray:
    """Encode one message (L,) or a batch (B, L); output length 2*(L+6)."""
    bits = np.asarray(bits).astype(np.int64)
    squeeze = bits.ndim == 1
    if squeeze:
        bits = bits[None, :]
    if np.any((bits != 0) & (bits != 1)):
        raise ValueError("message bits must be 0/1")
    b, length = bits.shape
    padded = np.concatenate([bits, np.zeros((b, _MEMORY), dtype=np.int64)], axis=1)
    out = np.empty((b, 2 * (length + _MEMORY)), dtype=np.int64)
    state = np.zeros(b, dtype=np.int64)
    for t in range(length + _MEMORY):
        word = (padded[:, t] << _MEMORY) | state
        out[:, 2 * t] = _parity(word & GENERATORS[0])
        out[:, 2 * t + 1] = _parity(word & GENERATORS[1])
        state = (padded[:, t] << (_MEMORY - 1)) | (state >> 1)
    return out[0] if squeeze else out


def viterbi_decode(llrs_or_bits: np.ndarray, mode: str = "soft") -> np.ndarray:
    """Maximum-likelihood decode of zero-terminated codewords.

    ``mode='soft'`` expects LLRs (positive favors bit 0); ``mode='hard'``
    expects 0/1 bits and applies the Hamming metric. Input shape (2*(L+6),)
    or (B, 2*(L+6)); returns the L message bits per codeword.
    """
    obs = np.asarray(llrs_or_bits, dtype=float)
    squeeze = obs.ndim == 1
    if squeeze:
        obs = obs[None, :]
    b, total = obs.shape
    if total % 2 or total < 2 * (_MEMORY + 1):
        raise ValueError(f"coded length {total} malformed: need even length >= "
                         f"{2 * (_MEMORY + 1)}")
    if mode == "hard":
        if np.any((obs != 0) & (obs != 1)):
            raise ValueError("hard mode expects 0/1 inputs")
        obs = 1.0 - 2.0 * obs
    elif mode != "soft":
        raise ValueError(f"unknown decoding mode {mode!r}")

    steps = total // 2
    length = steps - _MEMORY
    # path cost of hypothesizing coded bit c against LLR lam is lam * c
    metrics = np.full((b, _NSTATES), np.inf)
    metrics[:, 0] = 0.0
    choices = np.empty((steps, b, _NSTATES), dtype=np.uint8)
    for t in range(steps):
        lam0 = obs[:, 2 * t, None]
        lam1 = obs[:, 2 * t + 1, None]
        cost0 = metrics[:, _PRED[:, 0]] + lam0 * _OUT0[:, 0] + lam1 * _OUT1[:, 0]
        cost1 = metrics[:, _PRED[:, 1]] + lam0 * _OUT0[:, 1] + lam1 * _OUT1[:, 1]
        take1 = cost1 < cost0
        choices[t] = take1
        metrics = np.where(take1, cost1, cost0)

    decoded = np.empty((b, steps), dtype=np.int64)
    state = np.zeros(b, dtype=np.int64)
    rows = np.arange(b)
    for t in range(steps - 1, -1, -1):
        decoded[:, t] = state >> (_MEMORY - 1)
        state = _PRED[state, choices[t, rows, state]]
    out = decoded[:, :length]
    return out[0] if squeeze else out
