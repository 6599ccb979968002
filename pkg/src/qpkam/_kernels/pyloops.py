"""Pure-numpy fallback for the transfer-matrix growth kernel.

Same contract as the compiled extension: feed a stack of cocycle factors
(ordered so that ``mats[0]`` acts first) and get back the accumulated
log-growth of each orthogonalized direction, i.e. the QR-renormalized
estimate of ``ln sigma_k`` of the ordered product.
"""

from __future__ import annotations

import numpy as np

IMPL = "python"

_TINY = 1e-300


def qr_growth(mats: np.ndarray, chunk: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Accumulated log singular-value growth of an ordered matrix product.

    Parameters
    ----------
    mats : (n, m, m) complex array, factor ``mats[i]`` applied at step i.
    chunk : steps between QR renormalizations.  ``None`` picks a chunk from
        a cheap growth probe so that intermediate products stay well
        conditioned; ``chunk=1`` renormalizes every step (matches the
        compiled kernel step for step).

    Returns
    -------
    logs : (m,) accumulated ``ln |R_kk|`` sums, in frame order.
    Q : (m, m) final orthonormal frame.
    """
    mats = np.ascontiguousarray(mats, dtype=np.complex128)
    n, m, _ = mats.shape
    if chunk is None:
        chunk = _auto_chunk(mats)
    logs = np.zeros(m)
    q = np.eye(m, dtype=np.complex128)
    for start in range(0, n, chunk):
        block = mats[start : start + chunk]
        prod, shift = _scaled_product(block)
        q, r = np.linalg.qr(prod @ q)
        diag = np.abs(np.diagonal(r))
        logs += np.log(np.maximum(diag, _TINY)) + shift
    return logs, q


def _scaled_product(block: np.ndarray) -> tuple[np.ndarray, float]:
    """Ordered product of a factor block via pairwise reduction.

    Every level rescales by the largest entry magnitude and returns the
    accumulated log-scale, so the caller never sees overflow.
    """
    work = block
    shift = 0.0
    while work.shape[0] > 1:
        k = work.shape[0]
        if k % 2:
            # odd leftover factor is folded into the last pair product
            tail = work[-1]
            work = np.matmul(work[1:-1:2], work[:-1:2])
            work[-1] = tail @ work[-1]
        else:
            work = np.matmul(work[1::2], work[::2])
        scale = np.max(np.abs(work), axis=(1, 2))
        scale = np.where(scale > 0, scale, 1.0)
        work = work / scale[:, None, None]
        shift += float(np.sum(np.log(scale)))
    return work[0], shift


def _auto_chunk(mats: np.ndarray, cap: int = 64) -> int:
    probe = mats[: min(len(mats), 32)]
    growth = max(np.max(np.abs(p)) for p in probe)
    growth = max(float(growth), 1.0 + 1e-9)
    # keep the condition number of one chunk product below ~1e8
    return int(np.clip(9.0 / np.log(growth), 1, cap))
