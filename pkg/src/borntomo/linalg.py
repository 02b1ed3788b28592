"""Dense complex linear-algebra kernel: contraction and factorizations.

Thin, validated wrappers around LAPACK-backed numpy routines with the
conventions the tensor-network layers rely on: descending singular values
and eigenvalues, rank-at-least-one truncation, explicit shape checks.
"""

from __future__ import annotations

import numpy as np
from numpy.typing import NDArray


class FactorizationError(RuntimeError):
    """Underlying matrix factorization failed to converge."""


def contract(a: NDArray, b: NDArray, pairs: list[tuple[int, int]]) -> NDArray:
    """Contract tensors a and b over the given (axis-of-a, axis-of-b) pairs.

    Result axes are the unpaired axes of a followed by those of b, in
    their original order.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    seen_a: set[int] = set()
    seen_b: set[int] = set()
    for ax_a, ax_b in pairs:
        if not (-a.ndim <= ax_a < a.ndim) or not (-b.ndim <= ax_b < b.ndim):
            raise ValueError(f"contract: axis pair ({ax_a}, {ax_b}) out of range "
                             f"for shapes {a.shape} x {b.shape}")
        ax_a %= a.ndim
        ax_b %= b.ndim
        if ax_a in seen_a or ax_b in seen_b:
            raise ValueError(f"contract: axis pair ({ax_a}, {ax_b}) repeats an axis")
        seen_a.add(ax_a)
        seen_b.add(ax_b)
        if a.shape[ax_a] != b.shape[ax_b]:
            raise ValueError(
                f"contract: axis pair ({ax_a}, {ax_b}) has mismatched dimensions "
                f"{a.shape[ax_a]} != {b.shape[ax_b]}")
    axes_a = [p[0] % a.ndim for p in pairs]
    axes_b = [p[1] % b.ndim for p in pairs]
    return np.tensordot(a, b, axes=(axes_a, axes_b))


def svd_truncated(m: NDArray, max_rank: int, cutoff: float = 0.0,
                  ) -> tuple[NDArray, NDArray, NDArray]:
    """Truncated SVD of a matrix.

    Keeps min(max_rank, number of singular values with s/s_max > cutoff),
    but never fewer than one, so a valid (if lossy) factorization always
    comes back.

    Returns:
        (U, S, Vh) with S real and non-increasing.
    """
    m = np.asarray(m)
    if m.ndim != 2:
        raise ValueError(f"svd_truncated: expected a matrix, got shape {m.shape}")
    if max_rank < 1:
        raise ValueError("svd_truncated: max_rank must be >= 1")
    if cutoff < 0:
        raise ValueError("svd_truncated: cutoff must be >= 0")
    try:
        u, s, vh = np.linalg.svd(m, full_matrices=False)
    except np.linalg.LinAlgError:
        # gesdd occasionally fails to converge; gesvd is slower but sturdier.
        import scipy.linalg
        try:
            u, s, vh = scipy.linalg.svd(m, full_matrices=False,
                                        lapack_driver="gesvd")
        except Exception as exc:  # pragma: no cover - pathological inputs
            raise FactorizationError(f"SVD failed: {exc}") from exc
    keep = int(np.count_nonzero(s > cutoff * s[0])) if s.size and s[0] > 0 else 0
    keep = max(1, min(max_rank, keep)) if s.size else 1
    return u[:, :keep], s[:keep], vh[:keep, :]


def qr_decompose(m: NDArray) -> tuple[NDArray, NDArray]:
    """Reduced QR of a tall (rows >= columns) matrix."""
    m = np.asarray(m)
    if m.ndim != 2:
        raise ValueError(f"qr_decompose: expected a matrix, got shape {m.shape}")
    if m.shape[0] < m.shape[1]:
        raise ValueError(f"qr_decompose: need rows >= columns, got {m.shape}")
    q, r = np.linalg.qr(m)
    return q, r


def eigh(m: NDArray) -> tuple[NDArray, NDArray]:
    """Hermitian eigendecomposition with non-increasing eigenvalues.

    Returns:
        (eigenvalues, eigenvectors) with eigenvectors as columns, ordered
        to match the eigenvalues.
    """
    m = np.asarray(m)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"eigh: expected a square matrix, got shape {m.shape}")
    scale = max(np.abs(m).max(), 1.0)
    defect = np.abs(m - m.conj().T).max()
    if defect > 1e-10 * scale:
        raise ValueError(f"eigh: input not Hermitian (max deviation {defect:.3e})")
    vals, vecs = np.linalg.eigh((m + m.conj().T) / 2.0)
    return vals[::-1], vecs[:, ::-1]
