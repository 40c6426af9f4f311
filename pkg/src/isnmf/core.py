"""Shared numeric types: nonnegative matrices, the dictionary bundle and
solver configuration, plus the column-rescaling step applied after every
dictionary update.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .errors import NegativeInput, NonFiniteEntry, ShapeMismatch, ZeroColumn

RESTART_MODES = ("warm", "fresh")


def as_nonneg(x, name: str = "matrix", ndim: Optional[int] = None) -> np.ndarray:
    """Return ``x`` as a column-major float64 array, validating entries.

    Column-major keeps each frame (column) contiguous, which is the access
    pattern of every per-sample kernel.
    """
    arr = np.asarray(x, dtype=np.float64)
    if ndim is not None and arr.ndim != ndim:
        raise ShapeMismatch(f"{name}: expected {ndim}-d array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NonFiniteEntry(f"{name} has NaN or infinite entries")
    if arr.size and arr.min() < 0:
        raise NegativeInput(f"{name} has negative entries")
    if arr.ndim == 2:
        arr = np.asfortranarray(arr)
    return arr


@dataclass
class Dictionary:
    """Dictionary ``w`` (F x K) with its paired auxiliary statistics."""

    w: np.ndarray
    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        self.w = as_nonneg(self.w, "w", ndim=2)
        self.a = as_nonneg(self.a, "a", ndim=2)
        self.b = as_nonneg(self.b, "b", ndim=2)
        if not (self.w.shape == self.a.shape == self.b.shape):
            raise ShapeMismatch(
                f"w, a, b shapes differ: {self.w.shape}, {self.a.shape}, {self.b.shape}"
            )

    @property
    def shape(self) -> tuple[int, int]:
        return self.w.shape

    @classmethod
    def from_w(cls, w0, delta: float = 1.0) -> "Dictionary":
        """Statistics initialised so that ``w0`` is the exact fixed point of
        ``w = sqrt(a / b)``: ``a = delta * w0**2``, ``b = delta``.
        """
        w0 = as_nonneg(w0, "w0", ndim=2)
        return cls(w0.copy(), delta * w0**2, np.full(w0.shape, float(delta), order="F"))

    def copy(self) -> "Dictionary":
        return Dictionary(self.w.copy(), self.a.copy(), self.b.copy())


@dataclass
class SolverConfig:
    """Hyper-parameters shared by the batch and online trainers.

    ``budget`` counts epochs for the batch trainer and samples for the
    online trainer; ``None`` picks the trainer's default.  ``eta=None``
    selects the scale-aware default ``1e-6 * sqrt(F * K)`` and
    ``inner_iters=None`` selects 1 (warm restarts) or 100 (fresh restarts).
    """

    k: int
    epsilon: float = 1e-12
    eta: Optional[float] = None
    beta: int = 1000
    r: float = 0.7
    inner_iters: Optional[int] = None
    restart_mode: str = "warm"
    seed: int = 0
    n_seeds: int = 5
    budget: Optional[int] = None
    stats_scale: float = 1.0

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be > 0")
        if self.beta < 1:
            raise ValueError("beta must be >= 1")
        if not 0.0 <= self.r <= 1.0:
            raise ValueError("r must lie in [0, 1]")
        if self.inner_iters is not None and self.inner_iters < 1:
            raise ValueError("inner_iters must be >= 1")
        if self.restart_mode not in RESTART_MODES:
            raise ValueError(f"restart_mode must be one of {RESTART_MODES}")
        if self.n_seeds < 1:
            raise ValueError("n_seeds must be >= 1")
        if self.eta is not None and self.eta < 0:
            raise ValueError("eta must be >= 0")
        if self.budget is not None and self.budget < 0:
            raise ValueError("budget must be >= 0")
        if self.stats_scale < 0:
            raise ValueError("stats_scale must be >= 0")

    def resolved_eta(self, n_features: int) -> float:
        if self.eta is not None:
            return self.eta
        return default_eta(n_features, self.k)

    def resolved_inner_iters(self) -> int:
        if self.inner_iters is not None:
            return self.inner_iters
        return 1 if self.restart_mode == "warm" else 100

    def to_dict(self) -> dict:
        return asdict(self)


def default_eta(n_features: int, k: int) -> float:
    return 1e-6 * math.sqrt(n_features * k)


def rescale_dictionary(d: Dictionary, warm_h: Optional[np.ndarray] = None):
    """Normalise every column of ``d.w`` to unit sum.

    Column ``k`` with sum ``s`` gets ``w /= s``, ``a /= s`` and ``b *= s``,
    which keeps ``w == sqrt(a / b)`` whenever it held before.  If ``warm_h``
    is given its row ``k`` is multiplied by ``s`` so that ``w @ h`` is
    unchanged.  Returns ``(new_dictionary, new_h)``; ``new_h`` is ``None``
    when no activations were passed.
    """
    s = d.w.sum(axis=0)
    if np.any(s <= 0):
        dead = np.flatnonzero(s <= 0).tolist()
        raise ZeroColumn(f"dictionary columns {dead} sum to zero")
    out = Dictionary(d.w / s, d.a / s, d.b * s)
    h = None
    if warm_h is not None:
        warm_h = np.asarray(warm_h, dtype=np.float64)
        if warm_h.shape[0] != s.shape[0]:
            raise ShapeMismatch(f"warm_h has {warm_h.shape[0]} rows, dictionary has {s.shape[0]} columns")
        h = np.asfortranarray(warm_h * s[:, None])
    return out, h


def frobenius_delta(w_new, w_old) -> float:
    w_new = np.asarray(w_new, dtype=np.float64)
    w_old = np.asarray(w_old, dtype=np.float64)
    if w_new.shape != w_old.shape:
        raise ShapeMismatch(f"shapes differ: {w_new.shape} vs {w_old.shape}")
    return float(np.sqrt(np.sum((w_new - w_old) ** 2)))
