"""Channel decompositions used by every detector.

Two factorizations of a tall channel matrix ``H`` (``M x N``, ``M >= N``):

* QR:  ``H = Q R`` with orthonormal ``Q`` and upper-triangular ``R`` whose
  diagonal is real and positive.
* WR (punctured QR):  ``W^H H = Rp`` where ``Rp`` keeps only its diagonal and
  its last column above the diagonal.  Every layer except the last is then
  coupled to the last layer only.

All functions accept stacks of matrices (leading batch axes) and operate
matrix-by-matrix along the trailing two axes.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import OutOfRange, RankDeficient

RANK_TOL = 1e-10


def hermitian(a: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(a, -1, -2))


@dataclass(frozen=True)
class QrFactors:
    Q: np.ndarray
    R: np.ndarray


@dataclass(frozen=True)
class WrFactors:
    W: np.ndarray
    Rp: np.ndarray


def _check_shape(H: np.ndarray) -> tuple[int, int]:
    if H.ndim < 2:
        raise ValueError("channel must be at least two-dimensional")
    M, N = H.shape[-2:]
    if N < 1 or M < N:
        raise ValueError(f"need M >= N >= 1, got {M}x{N}")
    return M, N


def _frob(H: np.ndarray) -> np.ndarray:
    return np.sqrt(np.sum(np.abs(H) ** 2, axis=(-2, -1)))


def _householder_qr(A: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Reduced QR with the diagonal of R rotated onto the positive real axis."""
    Q, R = np.linalg.qr(A, mode="reduced")
    d = np.diagonal(R, axis1=-2, axis2=-1)
    mag = np.abs(d)
    phase = np.where(mag > 0, d / np.where(mag > 0, mag, 1.0), 1.0)
    Q = Q * phase[..., None, :]
    R = np.conj(phase)[..., :, None] * R
    n = R.shape[-1]
    idx = np.arange(n)
    R[..., idx, idx] = mag
    # below-diagonal entries are exact zeros from LAPACK; keep them so
    return Q, np.triu(R)


def qr_decompose(H, rank_tol: float = RANK_TOL) -> QrFactors:
    """QR factorization with real positive diagonal.

    ``rank_tol`` is relative to the Frobenius norm of each matrix; a diagonal
    pivot below ``rank_tol * ||H||_F`` raises :class:`RankDeficient`.
    """
    H = np.asarray(H, dtype=complex)
    _check_shape(H)
    Q, R = _householder_qr(H)
    diag = np.diagonal(R, axis1=-2, axis2=-1)
    floor = rank_tol * _frob(H)
    if np.any(diag.min(axis=-1) <= floor):
        raise RankDeficient("channel is rank deficient: QR pivot below tolerance")
    return QrFactors(Q, R)


def wr_decompose(H, rank_tol: float = RANK_TOL, qr: QrFactors | None = None) -> WrFactors:
    """Punctured decomposition ``W^H H = Rp``.

    Column ``u < N`` of ``W`` is the normalized projection of ``h_u`` onto the
    orthogonal complement of every other column except the last one, so it
    annihilates all columns but ``u`` and ``N``.  Column ``N`` of ``W`` is the
    last column of ``Q``.  For ``N <= 2`` nothing is punctured and the QR
    factors are returned unchanged.
    """
    H = np.asarray(H, dtype=complex)
    M, N = _check_shape(H)
    if qr is None:
        qr = qr_decompose(H, rank_tol)
    if N <= 2:
        return WrFactors(qr.Q.copy(), qr.R.copy())

    floor = rank_tol * _frob(H)
    R = qr.R
    W = np.empty(H.shape[:-2] + (M, N), dtype=complex)
    W[..., :, N - 1] = qr.Q[..., :, N - 1]
    for u in range(N - 1):
        others = [v for v in range(N - 1) if v != u]
        # work in the N-dim coordinates of R: Q is an isometry onto range(H)
        Qu, Ru = _householder_qr(R[..., :, others + [u]])
        if np.any(Ru[..., N - 2, N - 2] <= floor):
            raise RankDeficient(f"puncturing failed: column {u + 1} has no component "
                                "outside the span of the other non-root columns")
        W[..., :, u] = np.einsum("...ij,...j->...i", qr.Q, Qu[..., :, N - 2])

    Rp = hermitian(W) @ H
    mask = np.zeros((N, N), dtype=bool)
    mask[np.arange(N), np.arange(N)] = True
    mask[:, N - 1] = True
    mask = np.triu(mask)
    Rp = np.where(mask, Rp, 0.0)
    idx = np.arange(N)
    Rp[..., idx, idx] = np.real(Rp[..., idx, idx])
    return WrFactors(W, Rp)


def trailing_submatrix(R, S: int) -> np.ndarray:
    """Bottom-right ``S x S`` block of an (optionally batched) square matrix."""
    R = np.asarray(R)
    N = R.shape[-1]
    if not 1 <= S <= N:
        raise OutOfRange(f"submatrix size {S} outside 1..{N}")
    return R[..., N - S:, N - S:]
