import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import quadratic_objective
from pspo.gradient import ToleranceSpec, psp_gradient, rounds_for_tolerance
from pspo.hessian import curvature_along, full_hessian_estimate, reduced_hessian


def sym(rng, p):
    B = rng.standard_normal((p, p))
    return 0.5 * (B + B.T)


def test_identity_quadratic_curvature(rng):
    x, d = rng.normal(size=4), rng.normal(size=4)
    h = reduced_hessian(2 * (x + d), 2 * (x - d), d)
    assert curvature_along(h, d) == pytest.approx(2 * d @ d, rel=1e-12)


def test_equal_gradients_give_zero():
    h = reduced_hessian(np.ones(3), np.ones(3), np.array([1.0, 0.0, 0.0]))
    assert np.all(h.matrix == 0)
    assert curvature_along(h, np.array([0.2, 1.0, 3.0])) == 0


def test_random_symmetric_quadratic(rng):
    A = sym(rng, 4)
    x, d = rng.normal(size=4), rng.normal(size=4)
    h = reduced_hessian(2 * A @ (x + d), 2 * A @ (x - d), d)
    assert abs(curvature_along(h, d) - 2 * d @ A @ d) <= 1e-10


def test_curvature_along_direction_is_half_inner_product(rng):
    gp, gm, d = rng.normal(size=5), rng.normal(size=5), rng.normal(size=5)
    h = reduced_hessian(gp, gm, d)
    assert curvature_along(h, d) == pytest.approx((gp - gm) @ d / 2, rel=1e-12)


def test_orthogonal_vector_has_zero_curvature():
    d = np.array([1.0, 0.0, 0.0, 0.0])
    dG = np.array([0.0, 2.0, 0.0, 0.0])
    h = reduced_hessian(dG, np.zeros(4), d)
    assert curvature_along(h, np.array([0.0, 0.0, 1.0, -2.0])) == 0


def test_zero_direction_rejected():
    with pytest.raises(ValueError):
        reduced_hessian(np.ones(2), np.zeros(2), np.zeros(2))


def test_curvature_dimension_mismatch():
    h = reduced_hessian(np.ones(2), np.zeros(2), np.ones(2))
    with pytest.raises(ValueError):
        curvature_along(h, np.ones(3))


@settings(max_examples=60)
@given(st.integers(2, 8), st.integers(0, 2**32))
def test_symmetric_rank_two_and_quad_matches_matrix(p, seed):
    r = np.random.default_rng(seed)
    h = reduced_hessian(r.normal(size=p), r.normal(size=p), r.normal(size=p))
    H = h.matrix
    assert np.allclose(H, H.T, rtol=0, atol=1e-12 * max(1, np.abs(H).max()))
    sv = np.linalg.svd(H, compute_uv=False)
    if p > 2:
        assert sv[2] < 1e-10 * sv[0]
    v = r.normal(size=p)
    assert h.quad(v) == pytest.approx(v @ H @ v, rel=1e-9, abs=1e-12)


@settings(max_examples=60)
@given(st.integers(2, 8), st.integers(0, 2**32))
def test_theorem_identity_random_quadratics(p, seed):
    r = np.random.default_rng(seed)
    A = sym(r, p)
    x, d = r.normal(size=p), r.normal(size=p)
    h = reduced_hessian(2 * A @ (x + d), 2 * A @ (x - d), d)
    truth = d @ (2 * A) @ d
    assert abs(curvature_along(h, d) - truth) <= 1e-8 * max(abs(truth), 1e-12)
    H_full = full_hessian_estimate(lambda y: 2 * A @ y, x, np.eye(p) * 0.1)
    assert abs(curvature_along(h, d) - d @ H_full @ d) <= 1e-8 * max(1.0, abs(truth))


def test_full_hessian_axis_probes(rng):
    A = sym(rng, 5)
    H = full_hessian_estimate(lambda y: 2 * A @ y, rng.normal(size=5), 0.01 * np.eye(5))
    assert np.allclose(H, 2 * A, atol=1e-9)


def test_full_hessian_linear_zero(rng):
    a = rng.normal(size=3)
    Q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
    H = full_hessian_estimate(lambda y: a, np.zeros(3), Q.T)
    assert np.all(H == 0)


def test_full_hessian_rotated_identity(rng):
    Q, _ = np.linalg.qr(rng.normal(size=(6, 6)))
    H = full_hessian_estimate(lambda y: 2 * y, rng.normal(size=6), 1e-3 * Q.T)
    assert np.allclose(H, 2 * np.eye(6), atol=1e-9)


def test_full_hessian_rejects_non_orthogonal():
    with pytest.raises(ValueError, match="orthogonal"):
        full_hessian_estimate(lambda y: y, np.zeros(2), [[1.0, 0.0], [1.0, 1e-3]])


def test_noisy_curvature_consistency():
    # PSP probe gradients on a noisy quadratic, independent noise on the two sides
    p, sigma, c, ct = 3, 0.5, 0.5, 0.5
    A = np.diag([1.0, 2.0, 0.5])
    obj = quadratic_objective(A, sigma)
    M = rounds_for_tolerance(ToleranceSpec(1.0, sigma**2, c), p)
    x = np.array([0.3, -0.2, 0.1])
    d = np.array([1.0, 1.0, -1.0]) / np.sqrt(3) * ct
    vals = []
    for r in range(1000):
        gp = psp_gradient(obj, x + d, c, M, 2 * r).g_hat
        gm = psp_gradient(obj, x - d, c, M, 2 * r + 1).g_hat
        vals.append(curvature_along(reduced_hessian(gp, gm, d), d))
    vals = np.array(vals)
    truth = d @ (2 * A) @ d
    se = vals.std(ddof=1) / np.sqrt(vals.size)
    assert abs(vals.mean() - truth) <= 3 * se
