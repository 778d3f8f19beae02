import numpy as np
import pytest
from hypothesis import given, strategies as st

from thznoma.errors import OutOfRange, RankDeficient
from thznoma.numerics import hermitian, qr_decompose, trailing_submatrix, wr_decompose

from conftest import crandn


def _rel(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)


def test_identity():
    f = qr_decompose(np.eye(4))
    assert np.allclose(f.Q, np.eye(4))
    assert np.allclose(f.R, np.eye(4))


def test_column_swap():
    H = np.array([[0, 1], [1, 0]])
    f = qr_decompose(H)
    assert np.allclose(f.Q, H)
    assert np.allclose(f.R, np.eye(2))


@pytest.mark.parametrize("N", [2, 4, 8, 16])
def test_qr_reconstruction_and_structure(rng, N):
    H = crandn(rng, 50, N, N)
    f = qr_decompose(H)
    assert np.max(np.linalg.norm(f.Q @ f.R - H, axis=(-2, -1)) / np.linalg.norm(H, axis=(-2, -1))) < 1e-10
    assert np.max(np.linalg.norm(hermitian(f.Q) @ f.Q - np.eye(N), axis=(-2, -1))) < 1e-10
    d = np.diagonal(f.R, axis1=-2, axis2=-1)
    assert np.all(d.real > 0) and np.all(d.imag == 0)
    assert np.all(np.tril(f.R, -1) == 0)


def test_tall_matrix(rng):
    H = crandn(rng, 6, 3)
    f = qr_decompose(H)
    assert f.Q.shape == (6, 3) and f.R.shape == (3, 3)
    assert _rel(f.Q @ f.R, H) < 1e-12


def test_rank_deficient():
    H = np.ones((3, 3))
    with pytest.raises(RankDeficient):
        qr_decompose(H)
    with pytest.raises(ValueError):
        qr_decompose(np.ones((2, 3)))


def test_wr_diagonal_channel():
    H = np.diag([2.0, 0.5, 3.0, 1.0])
    f = wr_decompose(H)
    assert np.allclose(np.abs(f.W), np.eye(4))
    assert np.allclose(f.Rp, H)


def test_wr_equals_qr_for_two_columns(rng):
    H = crandn(rng, 2, 2)
    q, w = qr_decompose(H), wr_decompose(H)
    assert np.array_equal(q.Q, w.W) and np.array_equal(q.R, w.Rp)


@pytest.mark.parametrize("N", [3, 4, 8, 16])
def test_wr_structure(rng, N):
    H = crandn(rng, 40, N, N)
    f = wr_decompose(H)
    WH = hermitian(f.W) @ H
    off = np.ones((N, N), dtype=bool)
    off[np.arange(N), np.arange(N)] = False
    off[:, N - 1] = False
    assert np.max(np.abs(WH[..., off])) <= 1e-10
    assert np.max(np.linalg.norm(WH - f.Rp, axis=(-2, -1)) / np.linalg.norm(f.Rp, axis=(-2, -1))) < 1e-9
    assert np.max(np.abs(np.linalg.norm(f.W, axis=-2) - 1)) < 1e-12
    d = np.diagonal(WH, axis1=-2, axis2=-1)
    assert np.all(d.real > 0)
    assert np.max(np.abs(d.imag)) < 1e-10


def test_wr_column_is_projection(rng):
    # independent oracle: least-squares projection off the other non-root columns
    H = crandn(rng, 4, 4)
    f = wr_decompose(H)
    for u in range(3):
        others = H[:, [v for v in range(3) if v != u]]
        coef, *_ = np.linalg.lstsq(others, H[:, u], rcond=None)
        p = H[:, u] - others @ coef
        assert np.allclose(f.W[:, u], p / np.linalg.norm(p), atol=1e-10)


def test_wr_last_column_from_q(rng):
    H = crandn(rng, 5, 4)
    assert np.allclose(wr_decompose(H).W[:, -1], qr_decompose(H).Q[:, -1])


@given(st.integers(0, 2**32 - 1), st.integers(1, 6))
def test_decompositions_deterministic(seed, N):
    H = crandn(np.random.default_rng(seed), N, N)
    a, b = wr_decompose(H), wr_decompose(H.copy())
    assert np.array_equal(a.W, b.W) and np.array_equal(a.Rp, b.Rp)


def test_trailing_submatrix():
    R = np.triu(np.arange(1, 17).reshape(4, 4).astype(float))
    assert np.array_equal(trailing_submatrix(R, 4), R)
    assert np.array_equal(trailing_submatrix(R, 1), [[16.0]])
    sub = trailing_submatrix(R, 2)
    assert np.array_equal(sub, [[11.0, 12.0], [0.0, 16.0]])
    with pytest.raises(OutOfRange):
        trailing_submatrix(R, 0)
    with pytest.raises(OutOfRange):
        trailing_submatrix(R, 5)
