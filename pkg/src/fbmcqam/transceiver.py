"""End-to-end chains: filter-bank transmit/receive and the CP-OFDM baseline.

Both receivers apply one-tap frequency-domain equalization with genie channel
knowledge. The OFDM baseline charges itself the cyclic-prefix energy overhead
by scaling its noise variance by (N + cp) / N, so the two systems compare at
equal transmit energy per information symbol.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import dft_segments, idft_block
from .filterbank import MultiplyCounter, apply_adjoint, apply_filter, apply_inverse

__all__ = [
    "Equalizer",
    "make_equalizer",
    "fbmc_transmit",
    "fbmc_receive",
    "ofdm_modulate",
    "ofdm_demodulate",
    "ofdm_roundtrip",
]


@dataclass(frozen=True)
class Equalizer:
    """One-tap frequency-domain equalizer: estimates = E * observations."""

    kind: str                 # "zf" or "mmse"
    coeffs: np.ndarray        # E, complex (N,)
    beta: np.ndarray          # E * C, real in [0, 1]; exactly 1 for ZF


def make_equalizer(c: np.ndarray, kind: str, sigma2: float,
                   delta2: float = 1.0) -> Equalizer:
    """Build the per-subcarrier equalizer from the channel frequency response.

    ZF refuses exact spectral nulls rather than regularizing them.
    """
    c = np.asarray(c)
    if kind == "zf":
        zero = np.abs(c) == 0
        if np.any(zero):
            bad = int(np.argmax(zero))
            raise ValueError(f"zero-forcing impossible: C[{bad}] = 0")
        e = 1.0 / c
        beta = np.ones(c.shape)
    elif kind == "mmse":
        load = sigma2 / delta2
        denom = np.abs(c) ** 2 + load
        e = np.conj(c) / denom
        beta = np.abs(c) ** 2 / denom
    else:
        raise ValueError(f"unknown equalizer kind {kind!r}")
    return Equalizer(kind, e, beta)


def fbmc_transmit(S: np.ndarray, segs: np.ndarray,
                  counter: MultiplyCounter | None = None) -> np.ndarray:
    """Filter-bank modulate an N x M (x batch) symbol grid into (K+M-1)N samples."""
    if S.shape[0] != segs.shape[1]:
        raise ValueError(f"grid has {S.shape[0]} subcarriers, filter expects {segs.shape[1]}")
    return apply_filter(segs, idft_block(S), counter)


def fbmc_receive(r: np.ndarray, segs: np.ndarray, eq: Equalizer,
                 inv: np.ndarray | None = None,
                 counter: MultiplyCounter | None = None) -> np.ndarray:
    """Matched filter, optional inverse filter, per-symbol DFT, equalize.

    ``inv`` is the (N, M, M) inverse stack; passing None selects the
    matched-filter-only receiver.
    """
    n = segs.shape[1]
    x = apply_adjoint(segs, r, counter)
    if inv is not None:
        x = apply_inverse(inv, x, counter)
    y = dft_segments(x, n)
    e = eq.coeffs.reshape((n,) + (1,) * (y.ndim - 1))
    return e * y


# ---------------------------------------------------------------------------
# CP-OFDM baseline
# ---------------------------------------------------------------------------

def ofdm_modulate(S: np.ndarray, cp_len: int) -> np.ndarray:
    """Serialize an N x nsym (x batch) grid into a CP-OFDM sample train."""
    if cp_len < 0:
        raise ValueError("cp_len must be >= 0")
    n, nsym = S.shape[0], S.shape[1]
    body = np.fft.ifft(S, axis=0, norm="ortho")
    sym = np.concatenate([body[n - cp_len:], body], axis=0) if cp_len else body
    return np.moveaxis(sym, 1, 0).reshape((nsym * (n + cp_len),) + S.shape[2:])


def ofdm_demodulate(y: np.ndarray, n: int, cp_len: int) -> np.ndarray:
    """Strip prefixes and DFT each symbol; inverse of :func:`ofdm_modulate`
    over an ideal channel."""
    step = n + cp_len
    nsym = y.shape[0] // step
    if nsym * step != y.shape[0]:
        raise ValueError(f"stream length {y.shape[0]} not a multiple of {step}")
    sym = y.reshape((nsym, step) + y.shape[1:])
    return np.moveaxis(np.fft.fft(sym[:, cp_len:], axis=1, norm="ortho"), 0, 1)


def ofdm_roundtrip(S: np.ndarray, h: np.ndarray, sigma2: float, cp_len: int,
                   kind: str, rng: np.random.Generator,
                   delta2: float = 1.0) -> np.ndarray:
    """Single-user CP-OFDM chain at sample level, returning symbol estimates.

    Noise is drawn at variance sigma2 * (N + cp) / N to account for the
    prefix energy overhead.
    """
    from .channel import apply_taps, complex_noise, freq_response

    n = S.shape[0]
    if cp_len < h.shape[-1] - 1:
        raise ValueError(f"cp_len {cp_len} shorter than channel memory {h.shape[-1] - 1}")
    tx = ofdm_modulate(S, cp_len)
    rx = apply_taps(h, tx)
    if sigma2 > 0:
        rx = rx + complex_noise(rng, rx.shape, sigma2 * (n + cp_len) / n)
    grid = ofdm_demodulate(rx, n, cp_len)
    c = freq_response(h, n)
    eq = make_equalizer(c, kind, sigma2 * (n + cp_len) / n, delta2)
    e = eq.coeffs.reshape((n,) + (1,) * (grid.ndim - 1))
    return e * grid
