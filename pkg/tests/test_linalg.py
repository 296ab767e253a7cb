import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ustatbound import linalg as L
from ustatbound.checks import check_linalg, random_spd


def test_jacobi_identity():
    Q, lam = L.jacobi_eigen(np.eye(3))
    assert np.array_equal(lam, np.ones(3)) and np.allclose(Q, np.eye(3))


def test_jacobi_diagonal():
    Q, lam = L.jacobi_eigen(np.diag([4.0, 1.0]))
    assert np.allclose(lam, [4, 1])
    assert np.allclose(np.abs(Q), np.eye(2))


def test_jacobi_two_by_two():
    _, lam = L.jacobi_eigen([[2.0, 1.0], [1.0, 2.0]])
    assert np.allclose(lam, [3, 1], atol=1e-14)


def test_jacobi_rejects_asymmetric():
    with pytest.raises(L.NotSymmetric):
        L.jacobi_eigen([[1.0, 2.0], [0.0, 1.0]])


def test_sqrt_examples():
    assert np.allclose(L.sqrt_pd(np.diag([4.0, 9.0])), np.diag([2.0, 3.0]), atol=1e-14)
    assert np.allclose(L.sqrt_pd(np.eye(3)), np.eye(3))
    A = np.array([[2.0, 1.0], [1.0, 2.0]])
    S = L.sqrt_pd(A)
    assert np.max(np.abs(S @ S - A)) <= 1e-10


def test_sqrt_rejects_indefinite():
    with pytest.raises(L.NotPositiveDefinite):
        L.sqrt_pd(np.diag([1.0, -1.0]))


def test_sqrt_similarity_examples():
    S = np.array([[3.0, 1.0], [1.0, 2.0]])
    assert np.allclose(L.sqrt_similarity(S, S), np.eye(2), atol=1e-12)
    assert np.allclose(L.sqrt_similarity(np.eye(2), np.diag([4.0, 9.0])), np.diag([0.5, 1 / 3]), atol=1e-14)


def test_operator_norm_examples():
    assert L.operator_norm(np.diag([3.0, -5.0])) == pytest.approx(5.0)
    assert L.operator_norm(np.eye(4)) == pytest.approx(1.0)
    assert L.operator_norm([[0.0, 2.0], [0.0, 0.0]]) == pytest.approx(2.0)


def test_small_helpers():
    assert L.frobenius_norm([[1.0, 2.0], [3.0, 4.0]]) == pytest.approx(math.sqrt(30))
    assert L.trace(np.diag([2.0, 5.0])) == 7.0
    assert np.allclose(L.inverse_pd(np.diag([2.0, 4.0])), np.diag([0.5, 0.25]))


def test_condition_number():
    assert L.condition_number(np.diag([10.0, 0.1])) == pytest.approx(100.0)


def test_seeded_battery():
    res = check_linalg(100, seed=0)
    assert res.passed, res.details


@given(st.integers(1, 6), st.integers(0, 2 ** 32 - 1))
@settings(max_examples=50, deadline=None)
def test_eigen_reconstruction(d, seed):
    A = random_spd(np.random.default_rng(seed), d)
    Q, lam = L.jacobi_eigen(A)
    assert np.max(np.abs((Q * lam) @ Q.T - A)) <= 1e-10 * np.max(np.abs(A))
    assert np.max(np.abs(Q.T @ Q - np.eye(d))) <= 1e-12
    assert np.all(np.diff(lam) <= 0)
    assert np.allclose(lam, np.sort(np.linalg.eigvalsh(A))[::-1], rtol=1e-10, atol=1e-12)


@given(st.integers(1, 6), st.integers(0, 2 ** 32 - 1))
@settings(max_examples=50, deadline=None)
def test_trace_inequality(d, seed):
    gen = np.random.default_rng(seed)
    A, B = random_spd(gen, d), random_spd(gen, d)
    assert L.trace(A @ B) <= L.trace(A) * L.trace(B)
