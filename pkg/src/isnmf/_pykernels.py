"""Numpy fallback for the per-sample kernels.

Contract shared with the compiled ``_ckernels`` module:

``fit_block(V, W, H, iters, eps, pa=None, pb=None, div=None)``
    Runs ``iters`` multiplicative h-updates on every column of ``H`` (in
    place) with ``W`` frozen, then optionally adds the per-sample auxiliary
    statistics into ``pa``/``pb`` and writes each column's smoothed
    divergence into ``div``.

``commit(W, A, B, pa, pb, rho, scales) -> (delta, status)``
    ``A = rho*A + pa``, ``B = rho*B + pb``, ``W = sqrt(A/B)`` (entries with
    ``A = B = 0`` keep their old value), unit-sum column rescaling with the
    matching ``A``/``B`` compensation, pending sums zeroed.  Everything is
    in place; ``scales`` receives the column sums.  ``status`` is 0, or 1
    for inconsistent statistics, or 2 for an all-zero column.
"""
import numpy as np

STATUS_OK = 0
STATUS_INCONSISTENT = 1
STATUS_ZERO_COLUMN = 2

# Frames handled per vectorized step; bounds the F x K x CHUNK temporaries.
CHUNK = 64

# Every sum below runs in a fixed sequential order per frame (reductions over
# the leading axis of a C-ordered array, which numpy accumulates row by row),
# matching the compiled kernel.  A frame's result therefore does not depend
# on which other frames share the call, so a mini-batch split across a
# checkpoint is processed bit-for-bit like an unsplit one.  Matrix products
# would not give that guarantee: BLAS rounds differently for one column and
# for many.


def _seqsum(terms):
    """Sum over the leading axis, one row after another."""
    terms = np.ascontiguousarray(terms)
    if terms[0].size == 1:
        # a single output would be summed pairwise as a 1-D array; a
        # second (zero) column keeps the row-by-row order
        padded = np.zeros((terms.shape[0], 2))
        padded[:, 0] = terms.reshape(-1)
        return np.add.reduce(padded, axis=0)[:1].reshape(terms.shape[1:])
    return np.add.reduce(terms, axis=0)


def _reconstruct(W, H, eps):
    x = np.full((W.shape[0], H.shape[1]), eps)
    for k in range(W.shape[1]):
        x += W[:, k:k + 1] * H[k:k + 1, :]
    return x


def _project(W, r):
    """``W.T @ r`` summed over features in order."""
    return _seqsum(W[:, :, None] * r[:, None, :])


def _fit_chunk(y, W, H, iters, eps):
    for _ in range(iters):
        r2 = 1.0 / _reconstruct(W, H, eps)
        r1 = y * r2 * r2
        H *= np.sqrt(_project(W, r1) / _project(W, r2))


def fit_block(V, W, H, iters, eps, pa=None, pb=None, div=None):
    for j in range(0, V.shape[1], CHUNK):
        cols = slice(j, j + CHUNK)
        y = eps + V[:, cols]
        h = np.ascontiguousarray(H[:, cols])
        _fit_chunk(y, W, h, iters, eps)
        H[:, cols] = h
        if pa is None and div is None:
            continue
        x = _reconstruct(W, h, eps)
        if div is not None:
            u = (y - x) / x
            near = np.abs(u) < 0.5
            terms = u - np.where(near, np.log1p(np.where(near, u, 0.0)), np.log(y / x))
            div[cols] = _seqsum(terms)
        if pa is not None:
            r2 = 1.0 / x
            r1 = y * r2 * r2
            ht = h.T[:, None, :]
            # frame contributions stacked behind the running sums, then
            # accumulated frame by frame
            pa[:] = _seqsum(np.concatenate([pa[None], r1.T[:, :, None] * ht * (W * W)]))
            pb[:] = _seqsum(np.concatenate([pb[None], ht * r2.T[:, :, None]]))


def commit(W, A, B, pa, pb, rho, scales):
    A *= rho
    A += pa
    B *= rho
    B += pb
    pa[:] = 0.0
    pb[:] = 0.0
    live = B > 0
    if np.any(~live & (A > 0)):
        return 0.0, STATUS_INCONSISTENT
    w_new = np.where(live, np.sqrt(np.divide(A, B, out=np.zeros_like(A), where=live)), W)
    scales[:] = _seqsum(w_new)
    if np.any(scales <= 0):
        return 0.0, STATUS_ZERO_COLUMN
    w_new /= scales
    diff = w_new - W
    delta = float(np.sqrt(_seqsum((diff * diff).reshape(-1, order="F"))))
    W[:] = w_new
    A /= scales
    B *= scales
    return delta, STATUS_OK
