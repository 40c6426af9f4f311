"""Streaming IS-NMF with mini-batches and a forgetting factor.

Every frame gets its activations fitted against the current dictionary and
adds its auxiliary statistics to a pending mini-batch sum.  After ``beta``
frames the dictionary commits::

    A <- rho * A + sum(a)      B <- rho * B + sum(b)      W <- sqrt(A / B)

followed by unit-sum column rescaling.  The discount ``rho = r**(beta/N)``
multiplies the *past* statistics, so the frame from ``s`` commits ago is
weighted ``rho**s``; ``rho = 0`` with ``beta = N`` reduces to one batch
epoch per cycle.  A dictionary commit costs O(FK) whatever the length of
the stream.

Warm restarts keep every frame's last activations (finite data only) and
start the inner solver from them.  Fresh restarts draw a new positive
starting point per visit from a counter-based generator keyed on
``(seed, t)``, so the state carries no per-frame memory and a resumed run
replays the same draws.
"""
from __future__ import annotations

import json
import logging
import math
import struct
import time
from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator, Optional

import numpy as np

from . import kernels
from .batch import DEFAULT_EPOCHS, default_h0
from .core import Dictionary, SolverConfig, as_nonneg
from .errors import BadMagic, EmptyDataset, ShapeMismatch, TruncatedPayload, UnsupportedFormat
from .matrixio import encode_matrix, read_matrix
from .report import Stopwatch, TrainReport

log = logging.getLogger(__name__)

STREAM_BUFFER = 4096
TRACE_EVERY = 10
_SCALE_LIMIT = 1e100


# -- sample sources ---------------------------------------------------------

class FiniteSource:
    """Cycles over a fixed set of frames, each cycle in a fresh random order.

    The order of cycle ``c`` depends only on ``(seed, c)``, so any position
    can be reached again without replaying earlier cycles.
    """

    mode = "finite_cycling"

    def __init__(self, frames, seed: int = 0):
        self.frames = as_nonneg(frames, "frames", ndim=2)
        self.seed = int(seed)
        self._cycle = -1
        self._perm = None

    @property
    def n_features(self) -> int:
        return self.frames.shape[0]

    @property
    def n_frames(self) -> int:
        return self.frames.shape[1]

    def permutation(self, cycle: int) -> np.ndarray:
        if cycle != self._cycle:
            self._perm = np.random.default_rng([self.seed, cycle]).permutation(self.n_frames)
            self._cycle = cycle
        return self._perm

    def take(self, position: int, count: int):
        """Frames for positions ``position .. position+count-1``, cut short at
        the end of the current cycle.  Returns ``(frames, indices)``."""
        n = self.n_frames
        cycle, offset = divmod(position, n)
        stop = min(offset + count, n)
        idx = self.permutation(cycle)[offset:stop]
        return np.asfortranarray(self.frames[:, idx]), idx


class StreamSource:
    """Frames pulled from an iterable of ``F x m`` blocks.

    Frames are regrouped into buffers of ``buffer_size`` and each buffer is
    shuffled with an order keyed on ``(seed, buffer_index)``.  The stream
    can only move forward; :meth:`take` at a later position discards the
    frames in between, which is how a resumed run finds its place in a
    replayed stream.
    """

    mode = "stream"
    n_frames = None

    def __init__(self, blocks: Iterable, n_features: int, seed: int = 0,
                 buffer_size: int = STREAM_BUFFER):
        self._blocks: Iterator = iter(blocks)
        self._n_features = int(n_features)
        self.seed = int(seed)
        self.buffer_size = int(buffer_size)
        self._carry = np.empty((self._n_features, 0), order="F")
        self._buf = None
        self._buf_index = -1
        self._consumed = 0

    @property
    def n_features(self) -> int:
        return self._n_features

    def _pull(self, count: int) -> np.ndarray:
        parts, have = [self._carry], self._carry.shape[1]
        while have < count:
            block = next(self._blocks, None)
            if block is None:
                break
            block = np.asarray(block, dtype=np.float64)
            if block.ndim != 2 or block.shape[0] != self._n_features:
                raise ShapeMismatch(f"stream block has shape {block.shape}, expected ({self._n_features}, m)")
            parts.append(block)
            have += block.shape[1]
        data = np.concatenate(parts, axis=1) if len(parts) > 1 else parts[0]
        self._carry = data[:, count:]
        out = data[:, :count]
        self._consumed += out.shape[1]
        return out

    def _load(self, index: int) -> None:
        target = index * self.buffer_size
        while self._consumed < target:
            if self._pull(min(target - self._consumed, self.buffer_size)).shape[1] == 0:
                break
        raw = self._pull(self.buffer_size)
        perm = np.random.default_rng([self.seed, index]).permutation(raw.shape[1])
        self._buf = np.asfortranarray(as_nonneg(raw[:, perm], "stream frames"))
        self._buf_index = index

    def take(self, position: int, count: int):
        index, offset = divmod(position, self.buffer_size)
        if index != self._buf_index:
            if index < self._buf_index:
                raise ValueError("stream sources cannot move backwards")
            self._load(index)
        stop = min(offset + count, self._buf.shape[1])
        if offset >= stop:
            return np.empty((self._n_features, 0), order="F"), np.empty(0, dtype=np.intp)
        return np.asfortranarray(self._buf[:, offset:stop]), np.arange(position, position + stop - offset)


def forgetting_factor(r: float, beta: int, n_frames: Optional[int]) -> float:
    """``r ** (beta / N)``; an unbounded stream (``N = None``) gives 1."""
    if n_frames is None:
        return 1.0
    return float(r) ** (beta / n_frames)


# -- fresh-restart initial points ------------------------------------------

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


def _mix(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def fresh_uniform(seed: int, t0: int, count: int, k: int) -> np.ndarray:
    """``k x count`` uniforms in (0, 1] for samples ``t0 .. t0+count-1``."""
    with np.errstate(over="ignore"):
        base = _mix(np.array([seed & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64))[0]
        t = np.arange(t0, t0 + count, dtype=np.uint64)
        ctr = t[None, :] * np.uint64(k) + np.arange(k, dtype=np.uint64)[:, None]
        z = _mix(base + (ctr + np.uint64(1)) * _GOLDEN)
    return np.asfortranarray(((z >> np.uint64(11)).astype(np.float64) + 1.0) / 2.0**53)


# -- state ------------------------------------------------------------------

@dataclass
class OnlineState:
    """Everything needed to continue training.

    In warm mode the activations are stored as ``h_store`` with a pending
    per-row scale ``h_scale`` (true activations are ``h_scale[:, None] *
    h_store``); rescaling the dictionary then only touches ``h_scale``,
    keeping each commit O(FK).
    """

    dict: Dictionary
    t: int
    pending_a: np.ndarray
    pending_b: np.ndarray
    rho: float
    seed: int
    h_store: Optional[np.ndarray] = None
    h_scale: Optional[np.ndarray] = None
    div_sum: float = 0.0
    div_count: int = 0
    last_delta: float = float("inf")
    commits: int = 0
    converged: bool = False
    trace: TrainReport = field(default_factory=lambda: TrainReport("online"))

    @property
    def w(self) -> np.ndarray:
        return self.dict.w

    @property
    def warm_h(self) -> Optional[np.ndarray]:
        if self.h_store is None:
            return None
        return np.asfortranarray(self.h_scale[:, None] * self.h_store)

    def array_nbytes(self) -> int:
        arrs = [self.dict.w, self.dict.a, self.dict.b, self.pending_a, self.pending_b]
        if self.h_store is not None:
            arrs += [self.h_store, self.h_scale]
        return sum(a.nbytes for a in arrs)


def init_state(w0, config: SolverConfig, n_frames: Optional[int]) -> OnlineState:
    """State at ``t = 0``: statistics ``a = delta * w0**2``, ``b = delta``."""
    w0 = as_nonneg(w0, "w0", ndim=2)
    if w0.shape[1] != config.k:
        raise ShapeMismatch(f"w0 has {w0.shape[1]} columns, config.k = {config.k}")
    F, K = w0.shape
    d = Dictionary.from_w(w0.copy(order="F"), config.stats_scale)
    rho = forgetting_factor(config.r, config.beta, n_frames)
    return OnlineState(d, 0, np.zeros((F, K), order="F"), np.zeros((F, K), order="F"), rho, config.seed)


def _fold_scale(state: OnlineState) -> None:
    state.h_store *= state.h_scale[:, None]
    state.h_scale[:] = 1.0


def _advance(state: OnlineState, frames: np.ndarray, idx, config: SolverConfig) -> bool:
    """Process frames that all fall inside the current mini-batch.

    Returns True when the last frame completed the mini-batch and the
    dictionary was committed.
    """
    m = frames.shape[1]
    w = state.dict.w
    K = w.shape[1]
    eps = config.epsilon
    iters = config.resolved_inner_iters()
    if config.restart_mode == "warm":
        h = np.asfortranarray(state.h_store[:, idx] * state.h_scale[:, None])
    else:
        level = (eps + frames.mean(axis=0)) / (K * float(np.mean(w)))
        h = fresh_uniform(state.seed, state.t, m, K) * level
    div = np.empty(m)
    kernels.fit_block(frames, w, h, iters, eps, state.pending_a, state.pending_b, div)
    if config.restart_mode == "warm":
        state.h_store[:, idx] = h / state.h_scale[:, None]
    state.div_sum += float(div.sum())
    state.div_count += m
    state.t += m
    if state.t % config.beta == 0:
        dictionary_commit(state)
        return True
    return False


def online_step(state: OnlineState, v_t, config: SolverConfig, index: Optional[int] = None) -> OnlineState:
    """Feed one frame.  ``index`` names the frame's slot in ``warm_h`` and is
    required in warm mode."""
    v_t = as_nonneg(v_t, "v_t", ndim=1)
    if v_t.shape[0] != state.dict.w.shape[0]:
        raise ShapeMismatch(f"frame has {v_t.shape[0]} bins, dictionary has {state.dict.w.shape[0]}")
    if config.restart_mode == "warm":
        if index is None or state.h_store is None:
            raise ValueError("warm restarts need activation storage and a frame index")
        idx = np.array([index])
    else:
        idx = None
    _advance(state, np.asfortranarray(v_t.reshape(-1, 1)), idx, config)
    return state


def dictionary_commit(state: OnlineState) -> OnlineState:
    """Fold the pending mini-batch into the statistics and update ``W``."""
    K = state.dict.w.shape[1]
    scales = np.empty(K)
    state.last_delta = kernels.commit(state.dict.w, state.dict.a, state.dict.b,
                                      state.pending_a, state.pending_b, state.rho, scales)
    if state.h_scale is not None:
        state.h_scale *= scales
        if np.any(state.h_scale > _SCALE_LIMIT) or np.any(state.h_scale < 1.0 / _SCALE_LIMIT):
            _fold_scale(state)
    state.commits += 1
    return state


# -- training loop ------------------------------------------------------------

def _streamed_objective(state: OnlineState) -> float:
    if state.div_count == 0:
        return float("nan")
    val = state.div_sum / state.div_count
    state.div_sum = 0.0
    state.div_count = 0
    return val


def online_train(
    source,
    config: SolverConfig,
    w0=None,
    callback: Optional[Callable[[OnlineState], Optional[bool]]] = None,
    state: Optional[OnlineState] = None,
    clock: Callable[[], float] = time.perf_counter,
    trace_every: int = TRACE_EVERY,
    stage: str = "online",
) -> OnlineState:
    """Run the online algorithm over ``source`` (a :class:`FiniteSource` or
    :class:`StreamSource`).

    Stops when a commit moves the dictionary by less than ``eta`` (Frobenius
    norm), when ``config.budget`` samples have been processed, or when the
    stream runs dry.  Pass ``state`` to resume from a checkpoint instead of
    starting from ``w0``.

    A trace point is recorded at the start, every ``trace_every`` commits
    and at the end.  Its training objective is the full-data objective with
    the stored activations in warm mode, and the mean divergence of the
    frames seen since the previous point otherwise.  ``callback(state)``
    runs at every trace point with the training clock stopped; a truthy
    return value stops training.
    """
    finite = source.n_frames is not None
    if finite and source.n_frames == 0:
        raise EmptyDataset("training set has no frames")
    warm = config.restart_mode == "warm"
    if warm and not finite:
        raise ValueError("warm restarts need a finite training set")
    F = source.n_features
    if state is None:
        if w0 is None:
            raise ValueError("need w0 or a state to resume")
        state = init_state(w0, config, source.n_frames)
        if warm:
            state.h_store = default_h0(source.frames, state.dict.w)
            state.h_scale = np.ones(config.k)
    if state.dict.w.shape[0] != F:
        raise ShapeMismatch(f"dictionary has {state.dict.w.shape[0]} rows, data has {F}")
    state.trace = TrainReport(stage, config=config.to_dict(), seed=state.seed)

    if config.budget is not None:
        budget = config.budget
    elif finite:
        budget = DEFAULT_EPOCHS * source.n_frames
    else:
        budget = None
    eta = config.resolved_eta(F)
    watch = Stopwatch(clock)
    t_start = state.t

    def record() -> bool:
        if warm:
            obj = kernels.objective(source.frames, state.dict.w, state.warm_h, config.epsilon)
        else:
            obj = _streamed_objective(state)
        state.trace.add(state.t, watch.elapsed, obj)
        return bool(callback is not None and callback(state))

    if record():
        return state
    last_traced = state.t
    stop = False
    while not stop:
        remaining = None if budget is None else budget - (state.t - t_start)
        if remaining is not None and remaining <= 0:
            break
        want = config.beta - state.t % config.beta
        if remaining is not None:
            want = min(want, remaining)
        watch.start()
        frames, idx = source.take(state.t, want)
        if frames.shape[1] == 0:
            watch.stop()
            if state.t == 0:
                raise EmptyDataset("stream yielded no frames")
            break
        committed = _advance(state, frames, idx, config)
        watch.stop()
        if committed:
            state.converged = state.last_delta < eta
            if state.converged or state.commits % trace_every == 0:
                stop = record() or state.converged
                last_traced = state.t
    if state.t != last_traced:
        record()
    return state


# -- checkpoints --------------------------------------------------------------

CHECKPOINT_MAGIC = b"ISCK"
CHECKPOINT_VERSION = 1
_HEADER_BYTES = 4096
_CK = struct.Struct("<4sII")


def save_checkpoint(path, state: OnlineState, config: SolverConfig) -> None:
    """Write ``(W, A, B, pending sums, t, seed, ...)`` to ``path``.

    The JSON header is padded to a fixed width so that, in fresh mode, the
    file size never depends on how far training has progressed.
    """
    header = {
        "t": state.t,
        "seed": state.seed,
        "rho": state.rho,
        "commits": state.commits,
        "div_sum": state.div_sum,
        "div_count": state.div_count,
        "config": config.to_dict(),
        "warm": state.h_store is not None,
    }
    raw = json.dumps(header, sort_keys=True).encode()
    if len(raw) > _HEADER_BYTES:
        raise ValueError("checkpoint header too large")
    blobs = [_CK.pack(CHECKPOINT_MAGIC, CHECKPOINT_VERSION, _HEADER_BYTES), raw.ljust(_HEADER_BYTES, b" ")]
    mats = [state.dict.w, state.dict.a, state.dict.b, state.pending_a, state.pending_b]
    if state.h_store is not None:
        mats += [state.warm_h]
    blobs += [encode_matrix(m) for m in mats]
    with open(path, "wb") as fh:
        fh.write(b"".join(blobs))


def load_checkpoint(path):
    """Returns ``(state, config)``."""
    with open(path, "rb") as fh:
        head = fh.read(_CK.size)
        if len(head) < _CK.size or head[:4] != CHECKPOINT_MAGIC:
            raise BadMagic(f"{path}: not a checkpoint file")
        _, version, nbytes = _CK.unpack(head)
        if version != CHECKPOINT_VERSION:
            raise UnsupportedFormat(f"unsupported checkpoint version {version}")
        raw = fh.read(nbytes)
        if len(raw) != nbytes:
            raise TruncatedPayload(f"{path}: checkpoint header cut short")
        header = json.loads(raw.decode())
        w, a, b, pa, pb = (read_matrix(fh) for _ in range(5))
        h = read_matrix(fh) if header["warm"] else None
    cfg = header["config"]
    config = SolverConfig(**cfg)
    state = OnlineState(
        Dictionary(w, a, b), int(header["t"]),
        np.asfortranarray(pa), np.asfortranarray(pb), float(header["rho"]), int(header["seed"]),
        div_sum=float(header["div_sum"]), div_count=int(header["div_count"]),
        commits=int(header["commits"]),
    )
    if h is not None:
        state.h_store = np.asfortranarray(h)
        state.h_scale = np.ones(h.shape[0])
    return state, config
