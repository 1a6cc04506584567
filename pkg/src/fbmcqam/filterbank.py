"""Banded filter-bank matrices: P, G = P^H P, R = G^(-1), and displacements.

The transmit matrix P is block-banded: block (i, j) is nonzero only for
0 <= i - j <= K-1 and equals a diagonal N x N block carrying tap segment
i - j. Everything here exploits that structure; nothing is materialized
densely except on request through scipy sparse conversions.

Per-subcarrier decoupling: because every block of G is diagonal, G splits
into N independent M x M symmetric banded Toeplitz systems, one per
subcarrier. ``gram_stack``/``inverse_stack`` work on that (N, M, M) stack.

All taps are at matrix scale (``PrototypeFilter.matrix_taps``), so the
matched-filter main band averages to exactly 1 per subcarrier and the K=1
rectangular filter gives G = I.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .core import PrototypeFilter

__all__ = [
    "MultiplyCounter",
    "tap_segments",
    "window_length",
    "apply_filter",
    "apply_adjoint",
    "apply_inverse",
    "sparse_filter_matrix",
    "autocorr_bands",
    "gram_stack",
    "inverse_stack",
    "kept_mask",
    "sparsify_inverse",
    "inverse_nonzeros",
    "displacement_matrix",
    "tail_matrix",
    "displaced_summaries",
]


class MultiplyCounter:
    """Accumulates real-multiplication counts from instrumented operations."""

    def __init__(self):
        self.count = 0

    def add(self, n: int):
        self.count += int(n)


def tap_segments(filt: PrototypeFilter) -> np.ndarray:
    """Matrix-scale taps split into K rows of N: segs[i, v] = u[i*N + v]."""
    return filt.matrix_taps.reshape(filt.overlap, filt.n_subcarriers)


def window_length(n: int, m: int, k: int) -> int:
    """Samples in one transmitted block: (K + M - 1) * N."""
    return (k + m - 1) * n


def _promote(x: np.ndarray):
    x = np.asarray(x)
    if x.ndim == 1:
        return x[:, None], True
    return x, False


def apply_filter(segs: np.ndarray, b: np.ndarray,
                 counter: MultiplyCounter | None = None) -> np.ndarray:
    """o = P b for stacked time-domain segments b of shape (M*N,) or (M*N, B)."""
    k, n = segs.shape
    b2, squeeze = _promote(b)
    m = b2.shape[0] // n
    if m * n != b2.shape[0]:
        raise ValueError(f"input length {b2.shape[0]} not a multiple of N={n}")
    bb = b2.reshape(m, n, -1)
    out = np.zeros((k + m - 1, n, bb.shape[2]), dtype=np.result_type(b2, float))
    for i in range(k):
        out[i:i + m] += segs[i][None, :, None] * bb
    if counter is not None:
        counter.add(2 * k * m * n * bb.shape[2])
    o = out.reshape((k + m - 1) * n, -1)
    return o[:, 0] if squeeze else o


def apply_adjoint(segs: np.ndarray, r: np.ndarray,
                  counter: MultiplyCounter | None = None) -> np.ndarray:
    """x = P^H r for a received window of shape ((K+M-1)*N,) or (..., B)."""
    k, n = segs.shape
    r2, squeeze = _promote(r)
    km = r2.shape[0] // n
    if km * n != r2.shape[0] or km < k:
        raise ValueError(f"window length {r2.shape[0]} inconsistent with N={n}, K={k}")
    m = km - k + 1
    rr = r2.reshape(km, n, -1)
    out = np.zeros((m, n, rr.shape[2]), dtype=r2.dtype)
    for i in range(k):
        out += segs[i][None, :, None] * rr[i:i + m]
    if counter is not None:
        counter.add(2 * k * m * n * rr.shape[2])
    x = out.reshape(m * n, -1)
    return x[:, 0] if squeeze else x


def sparse_filter_matrix(segs: np.ndarray, m: int) -> sp.csr_matrix:
    """P as a scipy CSR matrix of shape ((K+M-1)N, MN)."""
    k, n = segs.shape
    rows, cols, vals = [], [], []
    v = np.arange(n)
    for j in range(m):
        for i in range(k):
            rows.append((j + i) * n + v)
            cols.append(j * n + v)
            vals.append(segs[i])
    return sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=((k + m - 1) * n, m * n))


def autocorr_bands(segs: np.ndarray) -> np.ndarray:
    """Band vectors of G: g[d, v] = sum_i segs[i, v] * segs[i-d, v], d in [0, K)."""
    k, n = segs.shape
    g = np.zeros((k, n))
    for d in range(k):
        for i in range(d, k):
            g[d] += segs[i] * segs[i - d]
    return g


def gram_stack(bands: np.ndarray, m: int) -> np.ndarray:
    """Per-subcarrier M x M Toeplitz systems: out[v, a, b] = g[|a-b|, v]."""
    k, n = bands.shape
    out = np.zeros((n, m, m))
    idx = np.arange(m)
    dist = np.abs(idx[:, None] - idx[None, :])
    for d in range(min(k, m)):
        mask = dist == d
        out[:, mask] = bands[d][:, None]
    return out


def inverse_stack(gram: np.ndarray, max_cond: float = 1e12) -> np.ndarray:
    """Invert each per-subcarrier system; reject ill-conditioned ones."""
    conds = np.linalg.cond(gram)
    worst = int(np.argmax(conds))
    if not np.all(np.isfinite(conds)) or conds[worst] > max_cond:
        raise ValueError(
            f"autocorrelation system ill-conditioned at subcarrier {worst} "
            f"(condition number {conds[worst]:.3e})")
    return np.linalg.inv(gram)


def kept_mask(n: int, eta: float) -> np.ndarray:
    """Boolean keep-mask over subcarrier indices for off-diagonal blocks of R.

    The candidate region is the middle half [N/4, 3N/4); ceil(eta*N/2) of its
    entries are zeroed symmetrically from the region's edges inward, keeping a
    centered run (eta=0.5, N=64 keeps exactly [24, 40)). Half-open ranges.
    """
    if not (0.0 <= eta <= 1.0):
        raise ValueError(f"eta {eta} outside [0, 1]")
    mask = np.ones(n, dtype=bool)
    zeroed = int(np.ceil(eta * n / 2.0))
    lo, hi = n // 4, 3 * n // 4
    zl = (zeroed + 1) // 2
    zr = zeroed // 2
    mask[lo:lo + zl] = False
    mask[hi - zr:hi] = False
    return mask


def sparsify_inverse(inv: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Zero the masked subcarrier entries of every off-diagonal block of R."""
    n, m, _ = inv.shape
    out = inv.copy()
    off = ~np.eye(m, dtype=bool)
    out[~mask] = np.where(off, 0.0, out[~mask])
    return out


def inverse_nonzeros(inv: np.ndarray) -> int:
    """Exact nonzero entry count of the (N, M, M) inverse stack."""
    return int(np.count_nonzero(inv))


def apply_inverse(inv: np.ndarray, x: np.ndarray,
                  counter: MultiplyCounter | None = None) -> np.ndarray:
    """v = R x on stacked matched-filter outputs x of shape (M*N,) or (M*N, B)."""
    n, m, _ = inv.shape
    x2, squeeze = _promote(x)
    if x2.shape[0] != m * n:
        raise ValueError(f"input length {x2.shape[0]} != M*N = {m * n}")
    xb = x2.reshape(m, n, -1)
    v = np.einsum("nmi,inb->mnb", inv, xb)
    if counter is not None:
        counter.add(2 * inverse_nonzeros(inv) * xb.shape[2])
    v = v.reshape(m * n, -1)
    return v[:, 0] if squeeze else v


# ---------------------------------------------------------------------------
# Channel-displaced variants
# ---------------------------------------------------------------------------

def _row_shifted(spm: sp.csr_matrix, l: int) -> sp.csr_matrix:
    """Shift all rows down by l samples; rows pushed past the window are lost."""
    if l == 0:
        return spm.copy()
    coo = spm.tocoo()
    keep = coo.row + l < spm.shape[0]
    return sp.csr_matrix((coo.data[keep], (coo.row[keep] + l, coo.col[keep])),
                         shape=spm.shape)


def _block_rolled(spm: sp.csr_matrix, n: int, l: int) -> sp.csr_matrix:
    """P with its input cyclically delayed by l within each length-N segment."""
    cols = spm.shape[1]
    j = np.arange(cols) // n
    v = np.arange(cols) % n
    perm = j * n + (v + l) % n
    return spm[:, perm].tocsr()


def displacement_matrix(segs: np.ndarray, m: int, l: int) -> sp.csr_matrix:
    """Delay-l filter perturbation: true delayed P minus its per-block
    circular equivalent. Zero for l = 0."""
    spm = sparse_filter_matrix(segs, m)
    return (_row_shifted(spm, l) - _block_rolled(spm, segs.shape[1], l)).tocsr()


def tail_matrix(segs: np.ndarray, m: int, l: int) -> sp.csr_matrix:
    """Rows of the previous block's P that leak into the current window:
    the last l rows, landing at the top of the window."""
    k, n = segs.shape
    t = (k + m - 1) * n
    spm = sparse_filter_matrix(segs, m)
    if l == 0:
        return sp.csr_matrix(spm.shape)
    tail = spm[t - l:, :]
    return sp.vstack([tail, sp.csr_matrix((t - l, spm.shape[1]))]).tocsr()


def displaced_summaries(segs: np.ndarray, m: int, n_taps: int) -> dict:
    """Scalar summaries of the displaced filter matrices for delays 0..L-1.

    Returns ``t_down`` (squared Frobenius norm of each delay perturbation),
    ``pcorr`` (energy of the previous block's leaking rows, exact trace), and
    ``pcorr_tail`` (the tail-tap approximation of the same quantity; equal to
    ``pcorr`` whenever the delay does not exceed N).
    """
    k, n = segs.shape
    t = (k + m - 1) * n
    spm = sparse_filter_matrix(segs, m)
    taps = segs.reshape(-1)
    t_down = np.zeros(n_taps)
    pcorr = np.zeros(n_taps)
    pcorr_tail = np.zeros(n_taps)
    for l in range(n_taps):
        if l == 0:
            continue
        a = _row_shifted(spm, l) - _block_rolled(spm, n, l)
        t_down[l] = float(a.multiply(a).sum())
        pcorr[l] = float(spm[t - l:, :].multiply(spm[t - l:, :]).sum())
        pcorr_tail[l] = float(np.sum(taps[k * n - l:] ** 2))
    return {"t_down": t_down, "pcorr": pcorr, "pcorr_tail": pcorr_tail}
