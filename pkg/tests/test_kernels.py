"""Backend parity: compiled and NumPy Jacobi kernels agree with each other
and with numpy.linalg.eigh on random symmetric matrices."""

import numpy as np
import pytest

from tracelab._kernels import backend_name, jacobi_eigh, jacobi_eigh_python


def random_symmetric(n, seed):
    rng = np.random.default_rng(seed)
    m = rng.normal(size=(n, n))
    return 0.5 * (m + m.T)


@pytest.mark.parametrize("n,seed", [(5, 0), (24, 1), (60, 2)])
def test_against_numpy_eigh(n, seed):
    a = random_symmetric(n, seed)
    diag, v, sweeps, off = jacobi_eigh(a)
    order = np.argsort(diag)
    w = np.asarray(diag)[order]
    v = v[:, order]
    w_np = np.linalg.eigvalsh(a)
    assert np.abs(w - w_np).max() < 1e-10 * max(1.0, np.abs(w_np).max())
    assert np.abs(v.T @ v - np.eye(n)).max() < 1e-12
    resid = a @ v - v * w
    assert np.abs(resid).max() < 1e-10 * max(1.0, np.abs(w_np).max())


def test_backends_agree():
    a = random_symmetric(30, 9)
    d1, v1, *_ = jacobi_eigh(a)
    d2, v2, *_ = jacobi_eigh_python(a)
    assert np.abs(np.sort(d1) - np.sort(d2)).max() < 1e-11
    # eigenspaces agree: |V1^T V2| is a permutation up to sign
    overlap = np.abs(v1[:, np.argsort(d1)].T @ v2[:, np.argsort(d2)])
    assert np.allclose(np.abs(np.diag(overlap)), 1.0, atol=1e-8)


def test_zero_and_diagonal_matrices():
    d, v, sweeps, off = jacobi_eigh(np.zeros((4, 4)))
    assert np.all(d == 0) and off == 0.0
    a = np.diag([3.0, -1.0, 2.0])
    d, v, sweeps, off = jacobi_eigh(a)
    assert np.array_equal(np.sort(d), [-1.0, 2.0, 3.0])
    assert np.array_equal(v, np.eye(3))


def test_backend_name_reports():
    assert backend_name() in ("compiled", "python")
