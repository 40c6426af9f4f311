"""Full-data IS-NMF by alternating multiplicative updates.

One epoch visits every frame once: a single multiplicative pass over all
of ``H`` with ``W`` fixed, then the auxiliary statistics are rebuilt from
scratch and ``W`` jumps to their minimiser.  With exactly one h-pass per
epoch this matches the online trainer run with one commit per cycle and no
memory of past statistics.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import kernels
from .core import Dictionary, SolverConfig, as_nonneg, frobenius_delta, rescale_dictionary
from .errors import DivergedObjective, EmptyDataset, NonPositiveInit, ShapeMismatch
from .report import Stopwatch, TrainReport

log = logging.getLogger(__name__)

DEFAULT_EPOCHS = 500
DIVERGENCE_TOL = 1e-6
# absolute slack for objectives at rounding level (exact factorizations)
DIVERGENCE_FLOOR = 1e-12


@dataclass
class BatchState:
    w: np.ndarray
    h: np.ndarray
    epoch: int
    trace: TrainReport
    delta: float = float("inf")
    converged: bool = False


def init_from_samples(v, k: int, seed, epsilon: float = 1e-12) -> np.ndarray:
    """Dictionary whose columns are frames of ``v`` drawn uniformly with
    replacement, floored at ``epsilon`` and scaled to unit sum."""
    v = as_nonneg(v, "v", ndim=2)
    if v.shape[1] == 0:
        raise EmptyDataset("cannot initialise a dictionary from zero frames")
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, v.shape[1], size=k)
    w = np.maximum(v[:, idx], epsilon)
    return np.asfortranarray(w / w.sum(axis=0))


def default_h0(v, w, n_frames: Optional[int] = None) -> np.ndarray:
    """Flat activations sized so that ``w @ h`` matches the data's mean level."""
    k = w.shape[1]
    n = v.shape[1] if n_frames is None else n_frames
    scale = float(np.mean(v)) / (k * float(np.mean(w)))
    if not scale > 0:
        scale = 1.0
    return np.full((k, n), scale, order="F")


def h_pass(v, w, h, epsilon: float) -> np.ndarray:
    """One multiplicative update of every column of ``h`` (returns a new array)."""
    x = epsilon + w @ h
    r2 = 1.0 / x
    r1 = (epsilon + v) * r2 * r2
    return np.asfortranarray(h * np.sqrt((w.T @ r1) / (w.T @ r2)))


def batch_train(
    v,
    config: SolverConfig,
    w0,
    h0=None,
    callback: Optional[Callable[[BatchState], Optional[bool]]] = None,
    clock: Callable[[], float] = time.perf_counter,
    stage: str = "batch",
) -> BatchState:
    """Train until the dictionary moves less than ``eta`` in one epoch or the
    epoch budget runs out.

    ``callback(state)`` runs after every epoch with the training clock
    stopped; returning a truthy value ends training.  The trace holds one
    point per epoch (plus the starting point), indexed by samples seen.
    """
    v = as_nonneg(v, "v", ndim=2)
    F, N = v.shape
    if N == 0:
        raise EmptyDataset("training set has no frames")
    w = as_nonneg(w0, "w0", ndim=2).copy(order="F")
    if w.shape != (F, config.k):
        raise ShapeMismatch(f"w0 has shape {w.shape}, expected {(F, config.k)}")
    h = default_h0(v, w) if h0 is None else as_nonneg(h0, "h0", ndim=2).copy(order="F")
    if h.shape != (config.k, N):
        raise ShapeMismatch(f"h0 has shape {h.shape}, expected {(config.k, N)}")
    if not (np.all(w.sum(axis=0) > 0) and np.all(h > 0)):
        raise NonPositiveInit("w0 columns and h0 entries must be positive")

    eps = config.epsilon
    eta = config.resolved_eta(F)
    budget = DEFAULT_EPOCHS if config.budget is None else config.budget
    trace = TrainReport(stage, config=config.to_dict(), seed=config.seed)
    watch = Stopwatch(clock)
    prev_obj = kernels.objective(v, w, h, eps)
    trace.add(0, 0.0, prev_obj)
    state = BatchState(w, h, 0, trace)
    if callback is not None and callback(state):
        return state

    for epoch in range(1, budget + 1):
        watch.start()
        h = h_pass(v, w, h, eps)
        stats = kernels.batch_stats(v, w, h, eps)
        w_raw = kernels.update_w(stats.a, stats.b, w_prev=w)
        d, h = rescale_dictionary(Dictionary(w_raw, stats.a, stats.b), warm_h=h)
        delta = frobenius_delta(d.w, w)
        w = d.w
        watch.stop()

        obj = kernels.objective(v, w, h, eps)
        if obj > prev_obj * (1.0 + DIVERGENCE_TOL) + DIVERGENCE_FLOOR:
            raise DivergedObjective(f"objective rose from {prev_obj!r} to {obj!r} at epoch {epoch}")
        prev_obj = obj
        trace.add(epoch * N, watch.elapsed, obj)
        state = BatchState(w, h, epoch, trace, delta, delta < eta)
        log.debug("epoch %d: objective %.6g, delta %.3g", epoch, obj, delta)
        if callback is not None and callback(state):
            break
        if state.converged:
            break
    return state
