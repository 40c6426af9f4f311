"""Numerical kernels for epsilon-smoothed Itakura-Saito NMF.

Every routine takes the smoothing floor ``epsilon`` explicitly: the
divergence is always evaluated as ``d(eps + y, eps + x)``.

The per-sample hot loops live in a compiled extension when available and
in a numpy fallback otherwise.  Set ``ISNMF_BACKEND=python`` to force the
fallback; :data:`BACKEND` names the one in use.
"""
from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from . import _pykernels
from .core import as_nonneg
from .errors import InconsistentStats, NonPositiveInit, ShapeMismatch, ZeroColumn


def _select_backend():
    choice = os.environ.get("ISNMF_BACKEND", "auto").lower()
    if choice not in ("auto", "c", "python"):
        raise ImportError(f"ISNMF_BACKEND must be auto, c or python, not {choice!r}")
    if choice != "python":
        try:
            from . import _ckernels
        except ImportError:
            if choice == "c":
                raise
        else:
            return _ckernels, "c"
    return _pykernels, "python"


impl, BACKEND = _select_backend()

STATUS_OK = 0
STATUS_INCONSISTENT = 1
STATUS_ZERO_COLUMN = 2


@dataclass
class SampleStats:
    a: np.ndarray
    b: np.ndarray


def _vector(x, name):
    return as_nonneg(x, name, ndim=1)


def is_divergence(y, x, epsilon: float) -> float:
    """Smoothed Itakura-Saito divergence ``sum(p/q - log(p/q) - 1)`` with
    ``p = eps + y`` and ``q = eps + x``.

    Evaluated term by term with :func:`divergence_terms`.
    """
    y = _vector(y, "y")
    x = _vector(x, "x")
    if y.shape != x.shape:
        raise ShapeMismatch(f"lengths differ: {y.shape[0]} vs {x.shape[0]}")
    if not epsilon > 0:
        raise ValueError("epsilon must be > 0")
    return float(np.sum(divergence_terms(epsilon + y, epsilon + x)))


def divergence_terms(p, q):
    """Elementwise ``p/q - log(p/q) - 1`` without catastrophic cancellation.

    Near ``p = q`` the term is ``u - log1p(u)`` with ``u = (p - q) / q``;
    elsewhere ``log(p / q)`` is used directly because ``1 + u`` would lose
    the digits of ``p / q`` when it is close to 0.
    """
    u = (p - q) / q
    near = np.abs(u) < 0.5
    return u - np.where(near, np.log1p(np.where(near, u, 0.0)), np.log(p / q))


def _check_w(w, n_features=None):
    w = as_nonneg(w, "w", ndim=2)
    if n_features is not None and w.shape[0] != n_features:
        raise ShapeMismatch(f"w has {w.shape[0]} rows, data has {n_features}")
    return w


def solve_h(v, w, h0, iters: int, epsilon: float) -> np.ndarray:
    """Fit the activations of one frame with ``w`` held fixed.

    Each of the ``iters`` majorization-minimization steps multiplies
    ``h_k`` by ``sqrt(sum_f w_fk p_f / q_f**2 / sum_f w_fk / q_f)`` where
    ``p = eps + v`` and ``q = eps + w @ h``.  The smoothed divergence never
    increases along the way.
    """
    v = _vector(v, "v")
    w = _check_w(w, v.shape[0])
    h0 = np.asarray(h0, dtype=np.float64)
    if h0.shape != (w.shape[1],):
        raise ShapeMismatch(f"h0 has shape {h0.shape}, expected ({w.shape[1]},)")
    if not np.all(h0 > 0):
        raise NonPositiveInit("h0 must be strictly positive")
    if np.any(w.sum(axis=0) <= 0):
        raise ZeroColumn("w has an all-zero column")
    H = np.asfortranarray(h0.reshape(-1, 1)).copy()
    impl.fit_block(np.asfortranarray(v.reshape(-1, 1)), w, H, int(iters), float(epsilon))
    return H[:, 0]


def sample_stats(v, w, h, epsilon: float) -> SampleStats:
    """Auxiliary statistics contributed by one frame:
    ``a_fk = p_f / q_f**2 * h_k * w_fk**2`` and ``b_fk = h_k / q_f``.
    """
    v = _vector(v, "v")
    w = _check_w(w, v.shape[0])
    h = _vector(h, "h")
    if h.shape[0] != w.shape[1]:
        raise ShapeMismatch(f"h has {h.shape[0]} entries, w has {w.shape[1]} columns")
    q = epsilon + w @ h
    ratio = (epsilon + v) / q**2
    a = np.asfortranarray(np.outer(ratio, h) * w**2)
    b = np.asfortranarray(np.outer(1.0 / q, h))
    return SampleStats(a, b)


def _check_factors(v, w, h):
    v = as_nonneg(v, "v", ndim=2)
    w = _check_w(w, v.shape[0])
    h = as_nonneg(h, "h", ndim=2)
    if h.shape != (w.shape[1], v.shape[1]):
        raise ShapeMismatch(f"h has shape {h.shape}, expected {(w.shape[1], v.shape[1])}")
    return v, w, h


def batch_stats(v, w, h, epsilon: float) -> SampleStats:
    """Sum of :func:`sample_stats` over all columns, as two matrix products."""
    v, w, h = _check_factors(v, w, h)
    q = epsilon + w @ h
    r2 = 1.0 / q
    r1 = (epsilon + v) * r2 * r2
    a = np.asfortranarray((r1 @ h.T) * w**2)
    b = np.asfortranarray(r2 @ h.T)
    return SampleStats(a, b)


def update_w(a, b, w_prev=None) -> np.ndarray:
    """Closed-form minimiser ``sqrt(a / b)`` of ``sum(a / w + b * w)``.

    Entries with ``a = b = 0`` carry no information; they take the value
    from ``w_prev`` when given and 0 otherwise.
    """
    a = as_nonneg(a, "a", ndim=2)
    b = as_nonneg(b, "b", ndim=2)
    if a.shape != b.shape:
        raise ShapeMismatch(f"a and b shapes differ: {a.shape} vs {b.shape}")
    live = b > 0
    if np.any(~live & (a > 0)):
        raise InconsistentStats("b is zero where a is positive")
    w = np.sqrt(np.divide(a, b, out=np.zeros_like(a), where=live))
    if w_prev is not None:
        w_prev = np.asarray(w_prev, dtype=np.float64)
        if w_prev.shape != a.shape:
            raise ShapeMismatch(f"w_prev has shape {w_prev.shape}, expected {a.shape}")
        w = np.where(live, w, w_prev)
    return np.asfortranarray(w)


def aux_value(a, b, w) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    if not (a.shape == b.shape == w.shape):
        raise ShapeMismatch(f"shapes differ: {a.shape}, {b.shape}, {w.shape}")
    if np.any(w <= 0):
        raise ValueError("aux_value needs strictly positive w")
    return float(np.sum(a / w + b * w))


def aux_constant(v, w_anchor, h, epsilon: float) -> float:
    """Additive constant making ``aux_value(a, b, w) + c`` a tight upper bound
    of the total (not averaged) smoothed divergence, with ``a, b`` from
    :func:`batch_stats` at ``w_anchor``.

    With ``p = eps + v`` and ``q = eps + w_anchor @ h`` it is
    ``sum(log(q / p) + eps * (p / q**2 + 1 / q) - 2)``; the ``eps`` terms
    come from the floor acting as an extra fixed atom.  Diagnostic only: it
    does not depend on ``w``.
    """
    v, w_anchor, h = _check_factors(v, w_anchor, h)
    p = epsilon + v
    q = epsilon + w_anchor @ h
    return float(np.sum(np.log(q / p) + epsilon * (p / q**2 + 1.0 / q) - 2.0))


def divergence_matrix(v, x, epsilon: float) -> np.ndarray:
    """Per-column smoothed divergences between ``v`` and a reconstruction ``x``."""
    return np.sum(divergence_terms(epsilon + v, epsilon + x), axis=0)


def objective(v, w, h, epsilon: float) -> float:
    """Mean over frames of the smoothed divergence between ``v`` and ``w @ h``."""
    v, w, h = _check_factors(v, w, h)
    if v.shape[1] == 0:
        raise ShapeMismatch("objective of an empty data set")
    return float(np.mean(divergence_matrix(v, w @ h, epsilon)))


def fit_block(v, w, h, iters: int, epsilon: float, pa=None, pb=None, div=None) -> None:
    """Backend dispatch for the fused per-block solve (all arrays in place).

    ``v``, ``w``, ``h``, ``pa`` and ``pb`` must be column-major float64.
    """
    impl.fit_block(v, w, h, int(iters), float(epsilon), pa, pb, div)


def commit(w, a, b, pa, pb, rho: float, scales) -> float:
    """Backend dispatch for the in-place dictionary commit; returns the
    Frobenius change of ``w``."""
    delta, status = impl.commit(w, a, b, pa, pb, float(rho), scales)
    if status == STATUS_INCONSISTENT:
        raise InconsistentStats("b is zero where a is positive")
    if status == STATUS_ZERO_COLUMN:
        raise ZeroColumn(f"dictionary columns {np.flatnonzero(np.asarray(scales) <= 0).tolist()} sum to zero")
    return float(delta)
