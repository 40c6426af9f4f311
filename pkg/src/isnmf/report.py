"""Training traces: time-stamped objective values and their CSV/JSON forms."""
from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional

CSV_HEADER = ["stage", "samples", "seconds", "train_obj", "heldout_obj"]


class Stopwatch:
    """Accumulates time only while running, so evaluation and logging done
    with the watch stopped are not billed to training."""

    def __init__(self, clock: Callable[[], float] = time.perf_counter):
        self._clock = clock
        self._total = 0.0
        self._since: Optional[float] = None

    def start(self) -> None:
        if self._since is None:
            self._since = self._clock()

    def stop(self) -> None:
        if self._since is not None:
            self._total += self._clock() - self._since
            self._since = None

    @property
    def elapsed(self) -> float:
        if self._since is None:
            return self._total
        return self._total + self._clock() - self._since


@dataclass
class TracePoint:
    samples: int
    seconds: float
    train_obj: float
    heldout_obj: Optional[float] = None


@dataclass
class TrainReport:
    stage: str
    points: list = field(default_factory=list)
    config: dict = field(default_factory=dict)
    seed: Optional[int] = None
    model_path: Optional[str] = None

    def add(self, samples: int, seconds: float, train_obj: float) -> TracePoint:
        p = TracePoint(int(samples), float(seconds), float(train_obj))
        self.points.append(p)
        return p

    @property
    def final(self) -> TracePoint:
        return self.points[-1]

    def to_dict(self) -> dict:
        return {
            "stage": self.stage,
            "seed": self.seed,
            "model_path": self.model_path,
            "config": self.config,
            "points": [[p.samples, p.seconds, p.train_obj, p.heldout_obj] for p in self.points],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainReport":
        pts = [TracePoint(int(s), float(t), float(o), None if h is None else float(h))
               for s, t, o, h in d["points"]]
        return cls(d["stage"], pts, dict(d.get("config") or {}), d.get("seed"), d.get("model_path"))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "TrainReport":
        return cls.from_dict(json.loads(text))


def _fmt(x: Optional[float]) -> str:
    return "" if x is None else repr(float(x))


def write_trace_csv(reports: Iterable[TrainReport], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for rep in reports:
            for p in rep.points:
                w.writerow([rep.stage, p.samples, _fmt(p.seconds), _fmt(p.train_obj), _fmt(p.heldout_obj)])


def read_trace_csv(path) -> list:
    reports: dict[str, TrainReport] = {}
    with open(path, newline="") as fh:
        rows = csv.reader(fh)
        header = next(rows, None)
        if header != CSV_HEADER:
            raise ValueError(f"{path}: expected header {','.join(CSV_HEADER)}")
        for stage, samples, seconds, train_obj, heldout in rows:
            rep = reports.setdefault(stage, TrainReport(stage))
            rep.points.append(TracePoint(int(samples), float(seconds), float(train_obj),
                                         float(heldout) if heldout else None))
    return list(reports.values())


def time_to_target(report: TrainReport, target: float, use_heldout: bool = True) -> Optional[float]:
    """First recorded training time at which the objective is <= ``target``."""
    for p in report.points:
        val = p.heldout_obj if use_heldout else p.train_obj
        if val is not None and math.isfinite(val) and val <= target:
            return p.seconds
    return None
