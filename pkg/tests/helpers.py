"""Dense first-principles constructions shared by the structural tests.

Everything here is built by explicit loops from the definitions, never from
the package's banded/stacked representations, so agreement is meaningful.
"""

import numpy as np


def dense_filter_matrix(segs, m):
    """P from its definition: o[t] = sum_m u[t - mN] b[mN + (t mod N)]."""
    k, n = segs.shape
    taps = segs.reshape(-1)
    p = np.zeros(((k + m - 1) * n, m * n))
    for t in range(p.shape[0]):
        for mm in range(m):
            d = t - mm * n
            if 0 <= d < k * n:
                p[t, mm * n + (t % n)] = taps[d]
    return p


def dense_gram_blocks(p, n, m):
    """G = P^T P regrouped as (N, M, M): block nu couples entries {mN + nu}."""
    g = p.T @ p
    out = np.zeros((n, m, m))
    for nu in range(n):
        idx = nu + n * np.arange(m)
        out[nu] = g[np.ix_(idx, idx)]
    return out


def stack_to_dense(blocks):
    """Expand an (N, M, M) per-subcarrier stack to the full MN x MN matrix."""
    n, m, _ = blocks.shape
    full = np.zeros((m * n, m * n), dtype=blocks.dtype)
    for nu in range(n):
        idx = nu + n * np.arange(m)
        full[np.ix_(idx, idx)] = blocks[nu]
    return full


def unitary_dft(n):
    grid = np.arange(n)
    return np.exp(-2j * np.pi * np.outer(grid, grid) / n) / np.sqrt(n)


def dense_displacement(p, n, l):
    """Delay-l perturbation: the true delayed response minus the response to
    per-segment circularly delayed inputs. Derived here from o[t] directly."""
    delayed = np.zeros_like(p)
    if l:
        delayed[l:] = p[:-l]
    else:
        delayed[:] = p
    circ = np.zeros_like(p)
    m = p.shape[1] // n
    cols = (np.arange(n) + l) % n
    for mm in range(m):
        circ[:, mm * n:(mm + 1) * n] = p[:, mm * n + cols]
    return delayed - circ


def dense_tail(p, l):
    """The previous block's last l output rows, landing at the window start."""
    out = np.zeros_like(p)
    if l:
        out[:l] = p[p.shape[0] - l:]
    return out
