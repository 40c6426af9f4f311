"""Audio front end: WAV decoding, power spectrograms and silence removal."""
from __future__ import annotations

import os
import struct
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import as_nonneg
from .errors import AllSilent, ShapeMismatch, TooShort, UnsupportedFormat
from .matrixio import load_matrix, save_matrix

WAVE_FORMAT_PCM = 1
WAVE_FORMAT_IEEE_FLOAT = 3
WAVE_FORMAT_EXTENSIBLE = 0xFFFE


@dataclass
class SpectrogramDataset:
    """Power spectra (F x N) with, per frame, ``(file index, frame index)``."""

    frames: np.ndarray
    sample_rate: int
    frame_meta: np.ndarray = None
    discarded_count: int = 0
    sources: list = field(default_factory=list)

    def __post_init__(self):
        self.frames = as_nonneg(self.frames, "frames", ndim=2)
        n = self.frames.shape[1]
        if self.frame_meta is None:
            self.frame_meta = np.column_stack([np.zeros(n, dtype=np.int64), np.arange(n, dtype=np.int64)])
        self.frame_meta = np.asarray(self.frame_meta, dtype=np.int64).reshape(n, 2)

    @property
    def n_frames(self) -> int:
        return self.frames.shape[1]


def load_audio(path):
    """Decode a RIFF/WAVE file to mono float64 in [-1, 1].

    Accepts 16-bit PCM and 32-bit IEEE float with one or two channels; two
    channels are averaged.  Returns ``(samples, sample_rate)``.
    """
    with open(path, "rb") as fh:
        blob = fh.read()
    return decode_wav(blob)


def decode_wav(blob: bytes):
    if len(blob) < 12 or blob[:4] != b"RIFF" or blob[8:12] != b"WAVE":
        raise UnsupportedFormat("not a RIFF/WAVE file")
    pos, fmt, data = 12, None, None
    while pos + 8 <= len(blob):
        cid, size = struct.unpack_from("<4sI", blob, pos)
        body = blob[pos + 8: pos + 8 + size]
        if cid == b"fmt ":
            if len(body) < 16:
                raise UnsupportedFormat("fmt chunk too short")
            fmt = struct.unpack_from("<HHIIHH", body)
            if fmt[0] == WAVE_FORMAT_EXTENSIBLE:
                if len(body) < 26:
                    raise UnsupportedFormat("extensible fmt chunk too short")
                fmt = (struct.unpack_from("<H", body, 24)[0],) + fmt[1:]
        elif cid == b"data":
            if len(body) < size:
                raise UnsupportedFormat("data chunk cut short")
            data = body
        pos += 8 + size + (size & 1)
    if fmt is None or data is None:
        raise UnsupportedFormat("missing fmt or data chunk")
    tag, channels, rate, _, _, bits = fmt
    if channels not in (1, 2):
        raise UnsupportedFormat(f"{channels} channels not supported")
    if tag == WAVE_FORMAT_PCM and bits == 16:
        x = np.frombuffer(data[: len(data) // 2 * 2], dtype="<i2").astype(np.float64) / 32768.0
    elif tag == WAVE_FORMAT_IEEE_FLOAT and bits == 32:
        x = np.frombuffer(data[: len(data) // 4 * 4], dtype="<f4").astype(np.float64)
    else:
        raise UnsupportedFormat(f"format tag {tag} with {bits} bits not supported")
    x = x[: len(x) // channels * channels].reshape(-1, channels).mean(axis=1)
    return x, int(rate)


def write_wav(path, samples, sample_rate: int, float32: bool = False) -> None:
    """Write mono or ``(n, channels)`` samples as 16-bit PCM or float32 WAV."""
    x = np.asarray(samples, dtype=np.float64)
    channels = 1 if x.ndim == 1 else x.shape[1]
    if float32:
        payload, tag, bits = x.astype("<f4").tobytes(), WAVE_FORMAT_IEEE_FLOAT, 32
    else:
        q = np.clip(np.round(x * 32768.0), -32768, 32767).astype("<i2")
        payload, tag, bits = q.tobytes(), WAVE_FORMAT_PCM, 16
    block = channels * bits // 8
    fmt = struct.pack("<HHIIHH", tag, channels, sample_rate, sample_rate * block, block, bits)
    with open(path, "wb") as fh:
        fh.write(b"RIFF" + struct.pack("<I", 4 + 8 + len(fmt) + 8 + len(payload)) + b"WAVE")
        fh.write(b"fmt " + struct.pack("<I", len(fmt)) + fmt)
        fh.write(b"data" + struct.pack("<I", len(payload)) + payload)


def sine_window(n: int) -> np.ndarray:
    return np.sin(np.pi * (np.arange(n) + 0.5) / n)


def frame_count(length: int, window: int, hop: int) -> int:
    return (length - window) // hop + 1


def stft_power(samples, window: int = 512, hop: int = 256) -> np.ndarray:
    """One-sided power spectrogram, ``window // 2 + 1`` bins per frame.

    Frames start every ``hop`` samples, only complete frames are kept, and
    each is weighted by a sine window before the FFT.
    """
    x = np.asarray(samples, dtype=np.float64)
    if window < 2 or window % 2:
        raise ValueError("window must be a positive even number")
    if not 1 <= hop <= window:
        raise ValueError("hop must lie in [1, window]")
    if x.ndim != 1 or x.shape[0] < window:
        raise TooShort(f"need at least {window} samples, got {x.shape[0] if x.ndim == 1 else x.shape}")
    frames = np.lib.stride_tricks.sliding_window_view(x, window)[::hop]
    spec = np.fft.rfft(frames * sine_window(window), axis=1)
    return np.asfortranarray((spec.real**2 + spec.imag**2).T)


def discard_silence(spec, threshold_db: float = -60.0, frame_meta=None, sample_rate: int = 0,
                    sources: Sequence[str] = ()) -> SpectrogramDataset:
    """Drop frames whose total power sits more than ``|threshold_db|`` dB
    below the loudest frame, keeping the rest in order."""
    spec = as_nonneg(spec, "spectrogram", ndim=2)
    n = spec.shape[1]
    if frame_meta is None:
        frame_meta = np.column_stack([np.zeros(n, dtype=np.int64), np.arange(n, dtype=np.int64)])
    frame_meta = np.asarray(frame_meta, dtype=np.int64)
    if frame_meta.shape != (n, 2):
        raise ShapeMismatch(f"frame_meta has shape {frame_meta.shape}, expected {(n, 2)}")
    power = spec.sum(axis=0)
    peak = power.max() if n else 0.0
    if not peak > 0:
        raise AllSilent("every frame is silent")
    keep = power >= peak * 10.0 ** (-abs(threshold_db) / 10.0)
    return SpectrogramDataset(np.asfortranarray(spec[:, keep]), sample_rate, frame_meta[keep],
                              int(n - keep.sum()), list(sources))


def build_dataset(paths: Sequence, window: int = 512, hop: int = 256,
                  silence_db: float = -60.0) -> SpectrogramDataset:
    """Spectrograms of several files, concatenated in input order, with the
    silence rule applied relative to the loudest frame overall."""
    specs, metas, rate = [], [], None
    for i, path in enumerate(paths):
        samples, sr = load_audio(path)
        if rate is None:
            rate = sr
        elif sr != rate:
            raise UnsupportedFormat(f"{path}: sample rate {sr} differs from {rate}")
        s = stft_power(samples, window, hop)
        specs.append(s)
        metas.append(np.column_stack([np.full(s.shape[1], i), np.arange(s.shape[1])]))
    if not specs:
        raise ValueError("no input files")
    return discard_silence(np.concatenate(specs, axis=1), silence_db, np.concatenate(metas),
                           rate, [os.fspath(p) for p in paths])


def meta_path(path) -> str:
    return os.fspath(path) + ".meta"


def save_dataset(path, ds: SpectrogramDataset) -> None:
    save_matrix(path, ds.frames)
    with open(meta_path(path), "w") as fh:
        fh.write(f"# sample_rate={ds.sample_rate} discarded_count={ds.discarded_count}\n")
        for i, src in enumerate(ds.sources):
            fh.write(f"# source {i} {src}\n")
        for f_idx, n_idx in ds.frame_meta:
            fh.write(f"{f_idx} {n_idx}\n")


def load_dataset(path) -> SpectrogramDataset:
    """Load frames and, when present, the ``.meta`` sidecar."""
    frames = load_matrix(path)
    side = meta_path(path)
    if not os.path.exists(side):
        return SpectrogramDataset(frames, 0)
    rate, discarded, sources, rows = 0, 0, [], []
    with open(side) as fh:
        for line in fh:
            line = line.rstrip("\n")
            if line.startswith("# source "):
                sources.append(line.split(" ", 3)[3])
            elif line.startswith("#"):
                fields = dict(tok.split("=", 1) for tok in line[1:].split())
                rate = int(fields.get("sample_rate", 0))
                discarded = int(fields.get("discarded_count", 0))
            elif line:
                rows.append([int(tok) for tok in line.split()])
    meta = np.asarray(rows, dtype=np.int64).reshape(-1, 2)
    if meta.shape[0] != frames.shape[1]:
        raise ShapeMismatch(f"{side} lists {meta.shape[0]} frames, matrix has {frames.shape[1]}")
    return SpectrogramDataset(frames, rate, meta, discarded, sources)
