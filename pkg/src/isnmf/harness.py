"""Held-out evaluation and batch-versus-online experiments."""
from __future__ import annotations

import time
from dataclasses import dataclass, replace
from typing import Callable, Optional, Sequence

import numpy as np

from . import kernels
from .batch import batch_train, init_from_samples
from .core import SolverConfig, as_nonneg
from .errors import ShapeMismatch, ZeroColumn
from .online import TRACE_EVERY, FiniteSource, online_train

EVAL_BLOCK = 4096


def evaluate_heldout(w, test, epsilon: float = 1e-12, inner_iters: int = 100) -> float:
    """Mean smoothed divergence over ``test`` frames after fitting each
    frame's activations for ``inner_iters`` iterations with ``w`` frozen.

    Every frame starts from the same flat activation vector sized to the
    frame's mean level, so the result is deterministic.  ``w`` is never
    modified.
    """
    w = np.array(as_nonneg(w, "w", ndim=2), order="F", copy=True)
    test = as_nonneg(test, "test", ndim=2)
    if test.shape[0] != w.shape[0]:
        raise ShapeMismatch(f"test frames have {test.shape[0]} bins, dictionary has {w.shape[0]}")
    n = test.shape[1]
    if n == 0:
        raise ShapeMismatch("empty test set")
    if not np.all(w.sum(axis=0) > 0):
        raise ZeroColumn("dictionary has an all-zero column")
    k = w.shape[1]
    total = 0.0
    for start in range(0, n, EVAL_BLOCK):
        v = np.asfortranarray(test[:, start:start + EVAL_BLOCK])
        level = (epsilon + v.mean(axis=0)) / (k * float(np.mean(w)))
        h = np.asfortranarray(np.ones((k, v.shape[1])) * level)
        div = np.empty(v.shape[1])
        kernels.fit_block(v, w, h, inner_iters, epsilon, None, None, div)
        total += float(div.sum())
    return total / n


@dataclass
class RunResult:
    report: object
    w: np.ndarray


def _label(mode: str, cfg: SolverConfig) -> str:
    if mode == "batch":
        return f"batch:seed={cfg.seed}"
    return f"online:r={cfg.r!r}:beta={cfg.beta}:restart={cfg.restart_mode}:seed={cfg.seed}"


def train_one(train, config: SolverConfig, mode: str, test=None, w0=None,
              clock: Callable[[], float] = time.perf_counter, eval_iters: int = 100,
              trace_every: int = TRACE_EVERY, on_trace=None) -> RunResult:
    """Train a single model, attaching held-out values to its trace points
    (evaluated with the training clock stopped)."""
    train = as_nonneg(train, "train", ndim=2)
    if w0 is None:
        w0 = init_from_samples(train, config.k, config.seed, config.epsilon)
    label = _label(mode, config)

    def annotate(state):
        if test is not None:
            state.trace.points[-1].heldout_obj = evaluate_heldout(state.w, test, config.epsilon, eval_iters)
        if on_trace is not None:
            return on_trace(state)
        return False

    if mode == "batch":
        state = batch_train(train, config, w0, callback=annotate, clock=clock, stage=label)
    elif mode == "online":
        source = FiniteSource(train, seed=config.seed)
        state = online_train(source, config, w0, callback=annotate, clock=clock,
                             trace_every=trace_every, stage=label)
    else:
        raise ValueError(f"mode must be 'batch' or 'online', not {mode!r}")
    return RunResult(state.trace, np.array(state.w, order="F", copy=True))


def run_experiment(train, test, config: SolverConfig, mode: str,
                   grid: Optional[Sequence[tuple]] = None,
                   clock: Callable[[], float] = time.perf_counter,
                   eval_iters: int = 100, trace_every: int = TRACE_EVERY,
                   keep_all: bool = False) -> list:
    """Train every grid point ``(r, beta)`` with ``config.n_seeds`` seeds
    (``config.seed``, ``config.seed + 1``, ...) and keep, per grid point, the
    run with the lowest final training objective.

    The batch trainer ignores ``r`` and ``beta``; its grid is a single
    point.  Returns a list of :class:`RunResult`; with ``keep_all`` every
    run is returned instead of the per-point winners.
    """
    if mode == "batch" or not grid:
        grid = [(config.r, config.beta)]
    out = []
    for r, beta in grid:
        runs = []
        for s in range(config.n_seeds):
            cfg = replace(config, r=float(r), beta=int(beta), seed=config.seed + s)
            runs.append(train_one(train, cfg, mode, test, clock=clock, eval_iters=eval_iters,
                                  trace_every=trace_every))
        if keep_all:
            out.extend(runs)
        else:
            out.append(min(runs, key=lambda run: _final_objective(run.report)))
    return out


def _final_objective(report) -> float:
    val = report.final.train_obj
    return val if np.isfinite(val) else float("inf")
