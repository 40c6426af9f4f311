"""Command-line driver.

    isnmf spectrogram a.wav b.wav --out train.isnm
    isnmf train-batch train.isnm --k 8 --test test.isnm --out batch.isnm
    isnmf train-online train.isnm --k 8 --r 0.7 --beta 1000 --out online.isnm
    isnmf evaluate online.isnm test.isnm
    isnmf report online.isnm.trace.csv

Exit codes: 0 success, 2 bad arguments, 3 data error, 4 numerical failure.
"""
from __future__ import annotations

import argparse
import itertools
import logging
import math
import sys

import numpy as np

from . import audio
from .batch import init_from_samples
from .core import SolverConfig
from .errors import DataError, IsnmfError, NumericalError
from .harness import evaluate_heldout, run_experiment
from .matrixio import iter_chunks, load_matrix, save_matrix
from .online import (FiniteSource, StreamSource, load_checkpoint, online_train,
                     save_checkpoint, STREAM_BUFFER)
from .report import read_trace_csv, time_to_target, write_trace_csv

log = logging.getLogger("isnmf")

EXIT_OK, EXIT_ARGS, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4


def _common_train_args(p):
    p.add_argument("--k", type=int, required=True, help="number of basis spectra")
    p.add_argument("--eta", type=float, default=None, help="stopping threshold (default 1e-6*sqrt(F*K))")
    p.add_argument("--epsilon", type=float, default=1e-12)
    p.add_argument("--seeds", type=int, default=5, help="seeds tried; the best final objective wins")
    p.add_argument("--seed", type=int, default=0, help="first seed")
    p.add_argument("--out", default="model.isnm", help="dictionary output path")
    p.add_argument("--test", default=None, help="held-out dataset evaluated along the trace")
    p.add_argument("--trace", default=None, help="trace CSV path (default <out>.trace.csv)")
    p.add_argument("--eval-iters", type=int, default=100)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="isnmf", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("spectrogram", help="WAV files to a power-spectrogram dataset")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--out", required=True)
    p.add_argument("--window", type=int, default=512)
    p.add_argument("--hop", type=int, default=256)
    p.add_argument("--silence-db", type=float, default=-60.0)

    p = sub.add_parser("train-batch", help="full-data multiplicative updates")
    p.add_argument("dataset")
    _common_train_args(p)
    p.add_argument("--max-epochs", type=int, default=500)

    p = sub.add_parser("train-online", help="mini-batch online training ('-' reads a frame stream from stdin)")
    p.add_argument("dataset")
    _common_train_args(p)
    p.add_argument("--r", type=float, default=0.7)
    p.add_argument("--beta", type=int, default=1000)
    p.add_argument("--restart", choices=("warm", "fresh"), default="warm")
    p.add_argument("--inner-iters", type=int, default=None)
    p.add_argument("--budget", type=int, default=None, help="maximum number of samples")
    p.add_argument("--trace-every", type=int, default=10, help="commits between trace points")
    p.add_argument("--checkpoint", default=None, help="checkpoint written at every trace point")
    p.add_argument("--resume", action="store_true", help="continue from --checkpoint")
    p.add_argument("--dim", type=int, default=257, help="frame length of a stdin stream")

    p = sub.add_parser("evaluate", help="held-out fit of a dictionary")
    p.add_argument("model")
    p.add_argument("test")
    p.add_argument("--inner-iters", type=int, default=100)
    p.add_argument("--epsilon", type=float, default=1e-12)

    p = sub.add_parser("report", help="summarise a trace CSV")
    p.add_argument("trace")
    p.add_argument("--tolerance", type=float, default=0.01,
                   help="time-to-target is measured to within this relative gap of the best final value")
    return parser


def cmd_spectrogram(args) -> int:
    ds = audio.build_dataset(args.inputs, args.window, args.hop, args.silence_db)
    audio.save_dataset(args.out, ds)
    print(f"{ds.n_frames} frames x {ds.frames.shape[0]} bins, {ds.discarded_count} silent frames "
          f"discarded, sample rate {ds.sample_rate} -> {args.out}")
    return EXIT_OK


def _trace_path(args) -> str:
    return args.trace or args.out + ".trace.csv"


def _finish(args, runs) -> int:
    best = min(runs, key=lambda run: run.report.final.train_obj)
    save_matrix(args.out, best.w)
    for run in runs:
        run.report.model_path = args.out if run is best else None
    write_trace_csv([run.report for run in runs], _trace_path(args))
    p = best.report.final
    held = "" if p.heldout_obj is None else f", held-out {p.heldout_obj:.6g}"
    print(f"{best.report.stage}: objective {p.train_obj:.6g}{held} after {p.samples} samples, "
          f"{p.seconds:.3f}s -> {args.out}")
    return EXIT_OK


def cmd_train_batch(args) -> int:
    train = audio.load_dataset(args.dataset).frames
    test = audio.load_dataset(args.test).frames if args.test else None
    cfg = SolverConfig(k=args.k, epsilon=args.epsilon, eta=args.eta, seed=args.seed,
                       n_seeds=args.seeds, budget=args.max_epochs)
    runs = run_experiment(train, test, cfg, "batch", eval_iters=args.eval_iters, keep_all=True)
    return _finish(args, runs)


def _stdin_source(args, seed):
    blocks = iter_chunks(sys.stdin.buffer, args.dim)
    first = next(blocks, None)
    if first is None:
        raise DataError("empty frame stream on stdin")
    return first, StreamSource(itertools.chain([first], blocks), args.dim, seed=seed,
                               buffer_size=max(args.beta, STREAM_BUFFER))


def cmd_train_online(args) -> int:
    stream = args.dataset == "-"
    if stream and args.restart == "warm":
        raise ValueError("warm restarts need a finite dataset; use --restart fresh with '-'")
    if args.resume and not args.checkpoint:
        raise ValueError("--resume needs --checkpoint")
    cfg = SolverConfig(k=args.k, epsilon=args.epsilon, eta=args.eta, beta=args.beta, r=args.r,
                       inner_iters=args.inner_iters, restart_mode=args.restart, seed=args.seed,
                       n_seeds=args.seeds, budget=args.budget)
    test = audio.load_dataset(args.test).frames if args.test else None

    if not stream and not args.resume and not args.checkpoint:
        train = audio.load_dataset(args.dataset).frames
        grid = [(cfg.r, cfg.beta)]
        runs = run_experiment(train, test, cfg, "online", grid, eval_iters=args.eval_iters,
                              trace_every=args.trace_every, keep_all=True)
        return _finish(args, runs)

    if stream and args.seeds > 1:
        raise ValueError("a stdin stream can be read once; use --seeds 1")
    state = None
    if args.resume:
        state, saved = load_checkpoint(args.checkpoint)
        cfg = SolverConfig(**{**saved.to_dict(), "budget": args.budget, "eta": args.eta})
    seed = state.seed if state is not None else cfg.seed
    if stream:
        first, source = _stdin_source(args, seed)
        pool = first
    else:
        source = FiniteSource(audio.load_dataset(args.dataset).frames, seed=seed)
        pool = source.frames
    w0 = None if state is not None else init_from_samples(pool, cfg.k, cfg.seed, cfg.epsilon)

    def on_trace(st):
        if test is not None:
            st.trace.points[-1].heldout_obj = evaluate_heldout(st.w, test, cfg.epsilon, args.eval_iters)
        if args.checkpoint:
            save_checkpoint(args.checkpoint, st, cfg)
        return False

    label = f"online:r={cfg.r!r}:beta={cfg.beta}:restart={cfg.restart_mode}:seed={seed}"
    state = online_train(source, cfg, w0, callback=on_trace, state=state,
                         trace_every=args.trace_every, stage=label)
    if args.checkpoint:
        save_checkpoint(args.checkpoint, state, cfg)

    class _Run:
        report = state.trace
        w = state.w
    return _finish(args, [_Run])


def cmd_evaluate(args) -> int:
    w = load_matrix(args.model)
    test = audio.load_dataset(args.test).frames
    val = evaluate_heldout(w, test, args.epsilon, args.inner_iters)
    print(f"mean per-frame IS divergence (eps={args.epsilon:g}, {args.inner_iters} iterations): {val!r}")
    return EXIT_OK


def cmd_report(args) -> int:
    reports = [r for r in read_trace_csv(args.trace) if r.points]
    if not reports:
        raise DataError(f"{args.trace}: no trace points")
    use_held = all(r.final.heldout_obj is not None for r in reports)
    metric = "heldout_obj" if use_held else "train_obj"

    def final(r):
        return r.final.heldout_obj if use_held else r.final.train_obj

    best = min(final(r) for r in reports if math.isfinite(final(r)))
    target = best * (1.0 + args.tolerance)
    print(f"# metric: {metric} (mean per-frame IS divergence); target = best final "
          f"{best:.6g} * (1 + {args.tolerance:g}) = {target:.6g}")
    print(f"{'stage':<48} {'samples':>10} {'seconds':>10} {'train_obj':>12} {'heldout_obj':>12} {'t_target':>10}")
    for r in reports:
        p = r.final
        held = "-" if p.heldout_obj is None else f"{p.heldout_obj:.6g}"
        ttt = time_to_target(r, target, use_heldout=use_held)
        print(f"{r.stage:<48} {p.samples:>10d} {p.seconds:>10.3f} {p.train_obj:>12.6g} {held:>12} "
              f"{'-' if ttt is None else f'{ttt:.3f}':>10}")
    return EXIT_OK


COMMANDS = {
    "spectrogram": cmd_spectrogram,
    "train-batch": cmd_train_batch,
    "train-online": cmd_train_online,
    "evaluate": cmd_evaluate,
    "report": cmd_report,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except NumericalError as exc:
        print(f"isnmf: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, OSError) as exc:
        print(f"isnmf: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except IsnmfError as exc:
        print(f"isnmf: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"isnmf: bad arguments: {exc}", file=sys.stderr)
        return EXIT_ARGS


if __name__ == "__main__":
    sys.exit(main())
