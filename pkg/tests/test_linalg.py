import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from invkern.errors import ValidationError
from invkern.linalg import jacobi_eigenvalues, min_eigenvalue


def test_examples():
    assert min_eigenvalue(np.eye(3)) == pytest.approx(1.0, abs=1e-14)
    assert min_eigenvalue(np.full((2, 2), 0.5)) == pytest.approx(0.0, abs=1e-14)
    assert min_eigenvalue(np.array([[0.0, 1.0], [1.0, 0.0]])) == pytest.approx(-1.0, abs=1e-14)


def test_rejects_asymmetric_and_oversized():
    with pytest.raises(ValidationError):
        min_eigenvalue(np.array([[1.0, 0.1], [0.0, 1.0]]))
    with pytest.raises(ValidationError):
        min_eigenvalue(np.eye(5), cap=4)
    with pytest.raises(ValidationError):
        min_eigenvalue(np.ones((2, 3)))


def test_tiny_asymmetry_is_symmetrized():
    M = np.array([[2.0, 1.0], [1.0 + 1e-12, 2.0]])
    assert min_eigenvalue(M) == pytest.approx(1.0, abs=1e-10)


def test_one_by_one_and_diagonal():
    assert min_eigenvalue(np.array([[-3.5]])) == -3.5
    assert np.array_equal(jacobi_eigenvalues(np.diag([3.0, -1.0, 2.0])), [-1, 2, 3])


@given(st.integers(1, 24), st.integers(0, 2**32 - 1))
def test_matches_lapack_on_random_symmetric(n, seed):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((n, n))
    M = (A + A.T) / 2
    ours = jacobi_eigenvalues(M)
    ref = np.linalg.eigvalsh(M)  # oracle only
    assert np.max(np.abs(ours - ref)) <= 1e-12 * max(1.0, np.max(np.abs(ref)))


@given(st.integers(2, 16), st.integers(1, 4), st.integers(0, 2**32 - 1))
def test_low_rank_psd_has_zero_floor(n, r, seed):
    rng = np.random.default_rng(seed)
    B = rng.standard_normal((n, r))
    M = B @ B.T
    lam = min_eigenvalue(M)
    scale = np.max(np.abs(M))
    if r < n:
        assert abs(lam) <= 1e-12 * scale
    else:
        assert lam >= -1e-12 * scale


def test_accuracy_at_moderate_size():
    rng = np.random.default_rng(0)
    A = rng.standard_normal((120, 120))
    M = A @ A.T / 120 - 0.5 * np.eye(120)
    ref = np.linalg.eigvalsh(M)
    assert abs(min_eigenvalue(M) - ref[0]) <= 1e-8 * np.max(np.abs(ref))
