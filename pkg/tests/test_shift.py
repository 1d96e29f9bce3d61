import numpy as np
import pytest

from oracles import bisection_min_eigenvalue
from sawtooth_qp.shift import (
    ShiftVector,
    eigen_shift,
    jacobi_eigenvalues,
    load_shift_file,
    min_eigenvalue,
    validate_psd,
    write_shift_file,
)


def test_min_eigenvalue_examples():
    assert min_eigenvalue([[0, 1], [1, 0]]) == pytest.approx(-1.0, abs=1e-12)
    assert min_eigenvalue([[2, 0], [0, 3]]) == pytest.approx(2.0, abs=1e-12)


@pytest.mark.parametrize("seed", range(10))
def test_min_eigenvalue_matches_inertia_bisection(seed):
    rng = np.random.default_rng(seed)
    A = rng.uniform(-5, 5, (8, 8))
    A = A + A.T
    assert abs(min_eigenvalue(A) - bisection_min_eigenvalue(A)) < 1e-8


@pytest.mark.parametrize("n", [1, 2, 5, 12, 30])
def test_jacobi_spectrum_matches_reference(n):
    rng = np.random.default_rng(n)
    A = rng.normal(size=(n, n))
    A = A + A.T
    assert np.allclose(jacobi_eigenvalues(A), np.linalg.eigvalsh(A), atol=1e-9)


def test_jacobi_handles_repeated_and_tiny_entries():
    A = np.eye(4) * 3.0
    A[0, 1] = A[1, 0] = 1e-20
    assert np.allclose(jacobi_eigenvalues(A), [3, 3, 3, 3])
    B = np.ones((5, 5))
    assert np.allclose(jacobi_eigenvalues(B), [0, 0, 0, 0, 5], atol=1e-12)


def test_asymmetric_input_rejected():
    with pytest.raises(ValueError):
        min_eigenvalue([[0, 1], [0.5, 0]])


def test_eigen_shift_examples():
    assert np.allclose(eigen_shift([[0, 1], [1, 0]]).delta, [1, 1])
    assert np.allclose(eigen_shift([[2, 0], [0, 3]]).delta, [0, 0])
    assert np.allclose(eigen_shift([[-3]]).delta, [3])


@pytest.mark.parametrize("seed", range(20))
def test_eigen_shift_always_validates(seed):
    rng = np.random.default_rng(100 + seed)
    n = int(rng.integers(1, 10))
    A = rng.uniform(-5, 5, (n, n))
    A = A + A.T
    assert validate_psd(A, eigen_shift(A))


def test_validate_psd_examples():
    Q = [[0, 1], [1, 0]]
    assert validate_psd(Q, [1, 1])
    assert not validate_psd(Q, [0.5, 0.5])
    assert validate_psd([[2, 0], [0, 3]], [0, 0])
    assert validate_psd(np.zeros((3, 3)), [0, 0, 0])
    with pytest.raises(ValueError):
        validate_psd(Q, [1, 1, 1])


def test_validate_psd_agrees_with_eigenvalues():
    rng = np.random.default_rng(5)
    for _ in range(200):
        n = int(rng.integers(1, 7))
        A = rng.normal(size=(n, n))
        A = A + A.T
        d = rng.uniform(0, 4, n)
        lam = np.linalg.eigvalsh(A + np.diag(d))[0]
        if abs(lam) > 1e-6:
            assert validate_psd(A, d) == (lam > 0)


def test_shift_vector_rejects_negative_entries():
    with pytest.raises(ValueError):
        ShiftVector(np.array([1.0, -0.1]))


def test_shift_file_round_trip(tmp_path):
    path = tmp_path / "shift.txt"
    write_shift_file(path, ShiftVector(np.array([0.5, 1.25])))
    loaded = load_shift_file(path, 2)
    assert loaded.source == "external" and np.array_equal(loaded.delta, [0.5, 1.25])
    with pytest.raises(ValueError):
        load_shift_file(path, 3)
    (tmp_path / "bad.txt").write_text("1\nx\n")
    with pytest.raises(ValueError, match="bad.txt:2"):
        load_shift_file(tmp_path / "bad.txt")
