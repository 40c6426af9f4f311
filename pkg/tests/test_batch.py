import numpy as np
import pytest

from isnmf import kernels
from isnmf.batch import batch_train, default_h0, init_from_samples
from isnmf.core import SolverConfig
from isnmf.errors import EmptyDataset, NonPositiveInit, ShapeMismatch
from isnmf.synthetic import make_dataset

from conftest import random_problem


def test_exact_factorization_is_a_fixed_point(rng):
    v, w, h = random_problem(rng, 8, 3, 20, noise=0.0)
    state = batch_train(v, SolverConfig(k=3, epsilon=1e-300), w, h)
    assert state.epoch == 1
    assert state.delta < 1e-12
    assert state.converged


def test_objective_non_increasing():
    v, _, _ = make_dataset(50, 200, 5, noise=0.1, seed=4)
    objs = []
    state = batch_train(v, SolverConfig(k=5, eta=0.0, budget=100), init_from_samples(v, 5, 0),
                        callback=lambda s: objs.append(kernels.objective(v, s.w, s.h, 1e-12)))
    assert state.epoch == 100
    trace = [p.train_obj for p in state.trace.points]
    np.testing.assert_allclose(trace, objs, rtol=1e-14)
    for prev, cur in zip(trace, trace[1:]):
        assert cur <= prev * (1 + 1e-9)


def test_rank_one_recovered():
    rng = np.random.default_rng(5)
    w = rng.random((10, 1)) + 0.1
    h = rng.random((1, 30)) + 0.1
    v = w @ h
    state = batch_train(v, SolverConfig(k=1, eta=0.0, budget=200), init_from_samples(v, 1, 1))
    assert kernels.objective(v, state.w, state.h, 1e-12) < 1e-8


def test_epoch_bookkeeping(rng):
    v, _, _ = random_problem(rng, 12, 3, 40)
    state = batch_train(v, SolverConfig(k=3, eta=0.0, budget=7), init_from_samples(v, 3, 2))
    pts = state.trace.points
    assert [p.samples for p in pts] == [40 * e for e in range(8)]
    assert all(b.seconds > a.seconds for a, b in zip(pts, pts[1:]))
    np.testing.assert_allclose(state.w.sum(axis=0), 1.0, atol=1e-12)


def test_callback_can_stop(rng):
    v, _, _ = random_problem(rng, 6, 2, 10)
    state = batch_train(v, SolverConfig(k=2, eta=0.0, budget=50), init_from_samples(v, 2, 0),
                        callback=lambda s: s.epoch == 3)
    assert state.epoch == 3


def test_stops_on_eta(rng):
    v, _, _ = random_problem(rng, 6, 2, 10)
    state = batch_train(v, SolverConfig(k=2, eta=1e-3, budget=10_000), init_from_samples(v, 2, 0))
    assert state.converged and state.delta < 1e-3 and state.epoch < 10_000


def test_init_from_samples():
    v = np.array([[1.0], [3.0]])
    w = init_from_samples(v, 4, seed=0)
    np.testing.assert_array_equal(w, np.tile([[0.25], [0.75]], (1, 4)))
    rng = np.random.default_rng(0)
    big = rng.random((5, 1000))
    a, b = init_from_samples(big, 3, 11), init_from_samples(big, 3, 11)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, init_from_samples(big, 3, 12))
    with pytest.raises(EmptyDataset):
        init_from_samples(np.zeros((3, 0)), 2, 0)


def test_init_floors_at_epsilon():
    w = init_from_samples(np.zeros((4, 1)), 1, 0, epsilon=1e-12)
    np.testing.assert_allclose(w, 0.25)


def test_default_h0_matches_data_level(rng):
    v, w, _ = random_problem(rng, 9, 3, 12)
    h0 = default_h0(v, w)
    assert np.mean(w @ h0) == pytest.approx(np.mean(v))


def test_input_validation(rng):
    v, w, h = random_problem(rng, 6, 2, 5)
    cfg = SolverConfig(k=2)
    with pytest.raises(ShapeMismatch):
        batch_train(v, cfg, w[:, :1])
    with pytest.raises(NonPositiveInit):
        batch_train(v, cfg, w, np.zeros_like(h))
    with pytest.raises(EmptyDataset):
        batch_train(np.zeros((6, 0)), cfg, w)


def test_epoch_time_linear_in_n():
    # F is kept small so that every size stays in cache; the check is about
    # flop scaling, not memory-hierarchy cliffs.
    rng = np.random.default_rng(9)
    w = rng.random((16, 4)) + 0.1
    per_epoch = {}
    for n in (500, 1000, 2000):
        v = w @ (rng.random((4, n)) + 0.1)
        runs = [batch_train(v, SolverConfig(k=4, eta=0.0, budget=20), init_from_samples(v, 4, 0))
                for _ in range(5)]
        per_epoch[n] = float(np.median([s.trace.final.seconds / s.epoch for s in runs]))
    for small, big in ((500, 1000), (1000, 2000)):
        ratio = per_epoch[big] / per_epoch[small]
        assert 1.0 <= ratio <= 3.0, per_epoch


def test_seeds_pick_different_frames():
    v, _, _ = make_dataset(12, 1000, 3, seed=5)
    a = batch_train(v, SolverConfig(k=3, budget=5), init_from_samples(v, 3, 1))
    b = batch_train(v, SolverConfig(k=3, budget=5), init_from_samples(v, 3, 2))
    assert not np.array_equal(init_from_samples(v, 3, 1), init_from_samples(v, 3, 2))
    assert [p.train_obj for p in a.trace.points] != [p.train_obj for p in b.trace.points]
