import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pspo.perturbation import (
    build_perturbations,
    flip_column,
    matrix_rank,
    sample_delta0,
    scheme_block,
    spans_space,
)


def test_sample_delta0_p1():
    v = sample_delta0(1, 3)
    assert v.shape == (1,) and abs(v[0]) == 1


def test_sample_delta0_deterministic():
    assert np.array_equal(sample_delta0(5, 42), sample_delta0(5, 42))


def test_sample_delta0_balanced():
    draws = np.array([sample_delta0(10, s) for s in range(10**4)])
    assert np.all(np.abs(draws.mean(axis=0)) <= 0.05)


def test_sample_delta0_rejects_p0():
    with pytest.raises(ValueError):
        sample_delta0(0, 1)


def test_flip_column_examples():
    assert np.array_equal(flip_column([1, 1, 1], 1), [-1, 1, 1])
    assert np.array_equal(flip_column([-1, 1], 2), [-1, -1])


@pytest.mark.parametrize("j", [0, 4, -1])
def test_flip_column_out_of_range(j):
    with pytest.raises(IndexError):
        flip_column([1, 1, 1], j)


@given(st.integers(1, 12).flatmap(lambda p: st.tuples(st.lists(st.sampled_from([-1.0, 1.0]), min_size=p, max_size=p), st.integers(1, p))))
def test_flip_column_involution_and_locality(args):
    v, j = args
    w = flip_column(v, j)
    assert np.array_equal(flip_column(w, j), v)
    diff = np.flatnonzero(np.asarray(v) != w)
    assert list(diff) == [j - 1]


def test_build_forced_base_p3():
    D = build_perturbations(3, 3, 0, base=[1, 1, 1]).matrix
    assert np.array_equal(D, [[-1, 1, 1], [1, -1, 1], [1, 1, -1]])
    assert np.linalg.det(D) == pytest.approx(4.0)


def test_build_p1_two_columns():
    D = build_perturbations(1, 2, 5)
    assert D.matrix.shape == (1, 2)
    assert np.all(np.abs(D.matrix) == 1)
    assert matrix_rank(D) == 1


def test_build_block_structure_p5_m12():
    D = build_perturbations(5, 12, 99).matrix
    for b, cols in enumerate([range(0, 5), range(5, 10), range(10, 12)]):
        base = sample_delta0(5, __import__("pspo").derive_seed(99, b))
        for i in cols:
            # column i (0-based) flips coordinate i mod p of its block's base
            assert np.array_equal(D[:, i], flip_column(base, (i % 5) + 1))


@settings(max_examples=50)
@given(st.integers(1, 15), st.integers(1, 40), st.integers(0, 2**32))
def test_build_entries_are_signs_and_deterministic(p, M, seed):
    D = build_perturbations(p, M, seed)
    assert D.matrix.shape == (p, M)
    assert set(np.unique(D.matrix)) <= {-1.0, 1.0}
    assert np.array_equal(D.matrix, build_perturbations(p, M, seed).matrix)


@settings(max_examples=50)
@given(st.sampled_from([1] + list(range(3, 16))), st.integers(1, 40), st.integers(0, 2**32))
def test_window_within_block_independent(p, M, seed):
    D = build_perturbations(p, M, seed).matrix
    for start in range(0, M, p):
        window = D[:, start:start + min(p, M - start)]
        assert matrix_rank(window) == window.shape[1]


@pytest.mark.parametrize("M", [1, 2, 3, 7])
def test_p2_rejection_sampling_full_rank(M):
    for seed in range(50):
        D = build_perturbations(2, M, seed).matrix
        assert matrix_rank(D) == min(2, M)


def test_spans_space_examples():
    assert spans_space(scheme_block([1, 1, 1]))
    a = np.array([1.0, -1.0])
    assert not spans_space(np.column_stack([[-a[0], a[1]], [a[0], -a[1]]]))
    assert spans_space(np.array([[-1.0]]))


def test_p2_literal_block_singular():
    for seed in range(20):
        assert not spans_space(scheme_block(sample_delta0(2, seed)))


def test_trace_invariant_under_base_signs():
    ones = build_perturbations(6, 10, 0, base=np.ones(6)).matrix
    d0 = sample_delta0(6, 17)
    signed = build_perturbations(6, 10, 0, base=d0).matrix
    t1 = np.trace(np.linalg.inv(ones @ ones.T))
    t2 = np.trace(np.linalg.inv(signed @ signed.T))
    assert t1 == pytest.approx(t2, rel=1e-12)
