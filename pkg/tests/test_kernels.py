import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from isnmf import kernels
from isnmf.errors import (InconsistentStats, NegativeInput, NonPositiveInit, ShapeMismatch,
                          ZeroColumn)

from conftest import random_problem

EPS = 1e-12


def naive_divergence(y, x, eps):
    p, q = eps + np.asarray(y, float), eps + np.asarray(x, float)
    return float(np.sum(p / q - np.log(p / q) - 1))


# -- divergence ---------------------------------------------------------------

def test_divergence_identical_is_zero(rng):
    y = rng.random(7)
    assert kernels.is_divergence(y, y, EPS) == 0.0


def test_divergence_hand_value():
    # 2 * (1/2 - log(1/2) - 1)
    assert kernels.is_divergence([1, 1], [2, 2], 1e-300) == pytest.approx(0.3862943611198906, rel=1e-14)


def test_divergence_matches_textbook_form(rng):
    y, x = rng.random(50) + 0.1, rng.random(50) + 0.1
    assert kernels.is_divergence(y, x, 1e-3) == pytest.approx(naive_divergence(y, x, 1e-3), rel=1e-12)


def test_divergence_errors():
    with pytest.raises(ShapeMismatch):
        kernels.is_divergence([1, 2], [1], EPS)
    with pytest.raises(NegativeInput):
        kernels.is_divergence([1, -2], [1, 1], EPS)
    with pytest.raises(ValueError):
        kernels.is_divergence([1], [1], 0.0)


vec = arrays(np.float64, 8, elements=st.floats(0, 1e6))


@settings(max_examples=200, deadline=None)
@given(vec, vec, st.floats(1e-3, 1e3))
def test_divergence_properties(y, x, lam):
    d = kernels.is_divergence(y, x, 1e-6)
    assert d >= 0
    if np.array_equal(y, x):
        assert d == 0
    scaled = kernels.is_divergence(lam * y, lam * x, lam * 1e-6)
    assert scaled == pytest.approx(d, rel=1e-10, abs=1e-10)


# -- h solver -------------------------------------------------------------------

def test_solve_h_fixed_point(backend, rng):
    w = rng.random((6, 3)) + 0.1
    h_star = np.array([0.5, 2.0, 1.0])
    h = kernels.solve_h(w @ h_star, w, h_star, 10, 1e-300)
    np.testing.assert_allclose(h, h_star, rtol=1e-13)


def test_solve_h_scalar(backend):
    h = kernels.solve_h([4.0], [[2.0]], [0.3], 100, EPS)
    assert h[0] == pytest.approx(2.0, abs=1e-6)


# Frozen output of a brute-force oracle: a 401x401 log grid over
# [1e-3, 1e3]^2 refined eight times around the best cell.
ORACLE_W = np.array([[0.72509547, 0.9972138], [0.87568569, 0.32520719], [0.40016628, 0.97355345],
                     [0.1052653, 0.92122842], [0.89706943, 0.56793495]])
ORACLE_V = np.array([3.07499973, 1.45167236, 2.72834249, 2.26871468, 2.0447931])
ORACLE_MIN = 0.001010345972945137


def grid_oracle(v, w, eps):
    lo, hi = np.array([-3.0, -3.0]), np.array([3.0, 3.0])
    for _ in range(8):
        g1, g2 = np.linspace(lo[0], hi[0], 401), np.linspace(lo[1], hi[1], 401)
        h1, h2 = np.meshgrid(10**g1, 10**g2, indexing="ij")
        x = eps + h1[..., None] * w[:, 0] + h2[..., None] * w[:, 1]
        p = eps + v
        d = np.sum(p / x - np.log(p / x) - 1, axis=-1)
        i, j = np.unravel_index(np.argmin(d), d.shape)
        c, span = np.array([g1[i], g2[j]]), (hi - lo) / 20
        lo, hi, best = c - span, c + span, d[i, j]
    return best


def test_grid_oracle_reproduces_frozen_value():
    assert grid_oracle(ORACLE_V, ORACLE_W, EPS) == pytest.approx(ORACLE_MIN, rel=1e-6)


def test_solve_h_against_grid_oracle(backend):
    h = kernels.solve_h(ORACLE_V, ORACLE_W, np.ones(2), 100, EPS)
    d = kernels.is_divergence(ORACLE_V, ORACLE_W @ h, EPS)
    assert abs(d - ORACLE_MIN) < 1e-4


def test_solve_h_monotone(backend, rng):
    v, w, _ = random_problem(rng, 30, 4, 1, noise=0.3)
    h = np.full(4, 0.7)
    prev = kernels.is_divergence(v[:, 0], w @ h, EPS)
    for _ in range(200):
        h = kernels.solve_h(v[:, 0], w, h, 1, EPS)
        cur = kernels.is_divergence(v[:, 0], w @ h, EPS)
        assert cur <= prev + 1e-10
        prev = cur


def test_solve_h_errors():
    with pytest.raises(NonPositiveInit):
        kernels.solve_h([1.0, 2.0], np.ones((2, 2)), [1.0, 0.0], 5, EPS)
    with pytest.raises(ZeroColumn):
        kernels.solve_h([1.0, 2.0], [[1.0, 0.0], [1.0, 0.0]], [1.0, 1.0], 5, EPS)
    with pytest.raises(ShapeMismatch):
        kernels.solve_h([1.0, 2.0], np.ones((2, 2)), [1.0], 5, EPS)


# -- statistics -------------------------------------------------------------------

def test_sample_stats_hand_values():
    s = kernels.sample_stats([8.0], [[2.0]], [1.0], 1e-300)
    assert s.a[0, 0] == pytest.approx(8.0, rel=1e-15)
    assert s.b[0, 0] == pytest.approx(0.5, rel=1e-15)
    assert np.sqrt(s.a / s.b)[0, 0] == pytest.approx(4.0, rel=1e-15)
    s = kernels.sample_stats([0.0], [[1.0]], [1.0], 1.0)
    assert (s.a[0, 0], s.b[0, 0]) == (0.25, 0.5)


def test_sample_stats_fixed_point(rng):
    w = rng.random((5, 3)) + 0.1
    h = np.array([1.0, 0.0, 2.0])
    s = kernels.sample_stats(w @ h, w, h, 1e-300)
    live = h > 0
    np.testing.assert_allclose(np.sqrt(s.a[:, live] / s.b[:, live]), w[:, live], rtol=1e-14)
    assert np.all(s.a[:, ~live] == 0) and np.all(s.b[:, ~live] == 0)


def test_batch_stats_is_sum_of_sample_stats(rng):
    v, w, h = random_problem(rng, 7, 3, 9)
    bs = kernels.batch_stats(v, w, h, 1e-3)
    a = sum(kernels.sample_stats(v[:, n], w, h[:, n], 1e-3).a for n in range(9))
    b = sum(kernels.sample_stats(v[:, n], w, h[:, n], 1e-3).b for n in range(9))
    np.testing.assert_allclose(bs.a, a, rtol=1e-10)
    np.testing.assert_allclose(bs.b, b, rtol=1e-10)
    one = kernels.batch_stats(v[:, :1], w, h[:, :1], 1e-3)
    s = kernels.sample_stats(v[:, 0], w, h[:, 0], 1e-3)
    np.testing.assert_allclose(one.a, s.a, rtol=1e-14)


def test_batch_stats_fixed_point(rng):
    _, w, h = random_problem(rng, 8, 3, 20)
    s = kernels.batch_stats(w @ h, w, h, 1e-300)
    np.testing.assert_allclose(np.sqrt(s.a / s.b), w, rtol=1e-12)


def test_block_kernel_accumulates_like_batch_stats(backend, rng):
    v, w, h = random_problem(rng, 12, 3, 40)
    pa, pb = np.zeros((12, 3), order="F"), np.zeros((12, 3), order="F")
    hh = h.copy(order="F")
    div = np.empty(40)
    kernels.fit_block(v, w, hh, 0, 1e-6, pa, pb, div)
    ref = kernels.batch_stats(v, w, h, 1e-6)
    np.testing.assert_allclose(pa, ref.a, rtol=1e-12)
    np.testing.assert_allclose(pb, ref.b, rtol=1e-12)
    assert div.mean() == pytest.approx(kernels.objective(v, w, h, 1e-6), rel=1e-12)


@pytest.mark.parametrize("F,K,m", [(20, 4, 30), (257, 8, 70), (7, 1, 1), (1, 1, 5)])
def test_backends_agree(rng, F, K, m):
    # Both backends sum in the same order, so everything except the
    # logarithms inside the divergence agrees bit for bit.
    from conftest import BACKENDS
    if len(BACKENDS) < 2:
        pytest.skip("compiled backend not built")
    v, w, h0 = random_problem(rng, F, K, m)
    out = []
    for mod in BACKENDS.values():
        h = h0.copy(order="F")
        pa, pb = np.zeros((F, K), order="F"), np.zeros((F, K), order="F")
        div = np.empty(m)
        mod.fit_block(v, w, h, 7, 1e-9, pa, pb, div)
        W, A, B = w.copy(order="F"), np.ones((F, K), order="F"), np.ones((F, K), order="F")
        scales = np.empty(K)
        delta, status = mod.commit(W, A, B, pa.copy(order="F"), pb.copy(order="F"), 0.6, scales)
        assert status == 0
        out.append((h, pa, pb, W, A, B, scales, delta, div))
    for x, y in zip(out[0][:-1], out[1][:-1]):
        assert np.array_equal(x, y)
    np.testing.assert_allclose(out[0][-1], out[1][-1], rtol=1e-12)


@pytest.mark.parametrize("m", [1, 3, 4, 9, 70])
def test_block_split_is_invisible(backend, rng, m):
    # Frames give the same activations and statistics however a mini-batch
    # is cut into calls; checkpoint resume relies on it.
    v, w, h0 = random_problem(rng, 19, 3, m)
    whole = h0.copy(order="F")
    pa, pb = np.zeros((19, 3), order="F"), np.zeros((19, 3), order="F")
    kernels.fit_block(v, w, whole, 5, 1e-12, pa, pb)
    split = h0.copy(order="F")
    qa, qb = np.zeros((19, 3), order="F"), np.zeros((19, 3), order="F")
    cuts = sorted({0, m, *rng.integers(0, m + 1, 3).tolist()})
    for a, b in zip(cuts, cuts[1:]):
        part = np.asfortranarray(split[:, a:b])
        kernels.fit_block(np.asfortranarray(v[:, a:b]), w, part, 5, 1e-12, qa, qb)
        split[:, a:b] = part
    assert split.tobytes() == whole.tobytes()
    assert qa.tobytes() == pa.tobytes() and qb.tobytes() == pb.tobytes()


# -- dictionary update ------------------------------------------------------------------

def test_update_w_examples():
    np.testing.assert_array_equal(kernels.update_w(np.full((2, 2), 3.0), np.full((2, 2), 3.0)), 1.0)
    assert kernels.update_w([[4.0]], [[1.0]])[0, 0] == 2.0


def test_update_w_dead_entries():
    a = np.array([[0.0, 4.0]])
    b = np.array([[0.0, 1.0]])
    np.testing.assert_array_equal(kernels.update_w(a, b, w_prev=[[0.3, 9.0]]), [[0.3, 2.0]])
    with pytest.raises(InconsistentStats):
        kernels.update_w([[1.0]], [[0.0]])


def test_update_w_minimises_aux(rng):
    a, b = rng.random((4, 3)) + 0.01, rng.random((4, 3)) + 0.01
    w = kernels.update_w(a, b)
    base = kernels.aux_value(a, b, w)
    for idx in np.ndindex(w.shape):
        for f in (0.99, 1.01):
            wp = w.copy()
            wp[idx] *= f
            assert kernels.aux_value(a, b, wp) > base


def test_commit_backend_matches_composition(backend, rng):
    from isnmf.core import Dictionary, rescale_dictionary
    W = rng.random((6, 2)) + 0.1
    W /= W.sum(axis=0)
    A, B = rng.random((6, 2)), rng.random((6, 2)) + 0.1
    pa, pb = rng.random((6, 2)), rng.random((6, 2))
    A_new, B_new = 0.5 * A + pa, 0.5 * B + pb
    ref, _ = rescale_dictionary(Dictionary(kernels.update_w(A_new, B_new), A_new, B_new))
    Wc, Ac, Bc = (np.asfortranarray(x.copy()) for x in (W, A, B))
    pac, pbc = np.asfortranarray(pa.copy()), np.asfortranarray(pb.copy())
    delta = kernels.commit(Wc, Ac, Bc, pac, pbc, 0.5, np.empty(2))
    np.testing.assert_allclose(Wc, ref.w, rtol=1e-14)
    np.testing.assert_allclose(Ac, ref.a, rtol=1e-14)
    np.testing.assert_allclose(Bc, ref.b, rtol=1e-14)
    assert delta == pytest.approx(np.linalg.norm(ref.w - W), rel=1e-12)
    assert not pac.any() and not pbc.any()


def test_commit_errors(backend):
    W = np.asfortranarray(np.ones((2, 1)))
    z = lambda: np.zeros((2, 1), order="F")  # noqa: E731
    with pytest.raises(InconsistentStats):
        kernels.commit(W.copy(order="F"), np.asfortranarray([[1.0], [0.0]]), z(), z(), z(), 1.0, np.empty(1))
    with pytest.raises(ZeroColumn):
        kernels.commit(np.zeros((2, 1), order="F"), z(), z(), z(), z(), 1.0, np.empty(1))


# -- objective and auxiliary function ------------------------------------------------------

def test_aux_value_and_objective_trivial(rng):
    assert kernels.aux_value([[1.0]], [[1.0]], [[1.0]]) == 2.0
    _, w, h = random_problem(rng, 5, 2, 4)
    assert kernels.objective(w @ h, w, h, 1e-300) == pytest.approx(0.0, abs=1e-13)


@pytest.mark.parametrize("eps", [1e-12, 0.05])
def test_majorization(rng, eps):
    v, w_anchor, h = random_problem(rng, 10, 3, 8, noise=0.3)
    s = kernels.batch_stats(v, w_anchor, h, eps)
    c = kernels.aux_constant(v, w_anchor, h, eps)
    n = v.shape[1]
    tight = kernels.aux_value(s.a, s.b, w_anchor) + c
    assert tight == pytest.approx(n * kernels.objective(v, w_anchor, h, eps), rel=1e-8)
    for _ in range(50):
        w = w_anchor * np.exp(rng.normal(0, 0.5, w_anchor.shape))
        assert kernels.aux_value(s.a, s.b, w) + c >= n * kernels.objective(v, w, h, eps) * (1 - 1e-12)
