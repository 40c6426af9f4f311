"""Synthetic spectrogram-like data with a known generating dictionary."""
from __future__ import annotations

import numpy as np


def random_dictionary(n_features: int, k: int, rng) -> np.ndarray:
    w = rng.gamma(1.0, 1.0, size=(n_features, k)) + 1e-3
    return np.asfortranarray(w / w.sum(axis=0))


def random_activations(k: int, n: int, rng) -> np.ndarray:
    return np.asfortranarray(rng.gamma(0.5, 1.0, size=(k, n)) + 1e-3)


def make_dataset(n_features: int, n_frames: int, k: int, noise: float = 0.01, seed=0, w_true=None):
    """``V = (W* H*) * exp(noise * z)``: exact low-rank spectra perturbed by
    multiplicative log-normal noise of relative size ``noise``.

    Returns ``(V, W*, H*)``; pass ``w_true`` to share a dictionary between
    train and test sets.
    """
    rng = np.random.default_rng(seed)
    w = random_dictionary(n_features, k, rng) if w_true is None else np.asfortranarray(w_true)
    h = random_activations(k, n_frames, rng)
    v = w @ h
    if noise:
        v = v * np.exp(noise * rng.standard_normal(v.shape))
    return np.asfortranarray(v), w, h


def stream_blocks(w_true, n_frames: int, block: int = 4096, noise: float = 0.01, seed=0):
    """Yield ``F x block`` chunks of fresh synthetic frames until ``n_frames``
    have been produced; nothing proportional to ``n_frames`` is kept."""
    rng = np.random.default_rng(seed)
    k = w_true.shape[1]
    done = 0
    while done < n_frames:
        m = min(block, n_frames - done)
        v = w_true @ random_activations(k, m, rng)
        if noise:
            v = v * np.exp(noise * rng.standard_normal(v.shape))
        done += m
        yield np.asfortranarray(v)
