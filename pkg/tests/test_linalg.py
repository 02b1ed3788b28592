from __future__ import annotations

import numpy as np
import pytest

from borntomo.linalg import contract, eigh, qr_decompose, svd_truncated


def _rand_c(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


@pytest.mark.parametrize("shape_a,shape_b,pairs", [
    ((3, 4), (4, 5), [(1, 0)]),
    ((2, 3, 4), (4, 3, 5), [(2, 0), (1, 1)]),
    ((5, 2, 2), (2, 2), [(1, 0), (2, 1)]),
    ((4, 3), (3, 4), [(-1, 0)]),
])
def test_contract_matches_tensordot(shape_a, shape_b, pairs):
    rng = np.random.default_rng(0)
    a = _rand_c(rng, *shape_a)
    b = _rand_c(rng, *shape_b)
    axes_a = [p % a.ndim for p, _ in pairs]
    axes_b = [q % b.ndim for _, q in pairs]
    expect = np.tensordot(a, b, axes=(axes_a, axes_b))
    np.testing.assert_allclose(contract(a, b, pairs), expect, atol=1e-13)


def test_contract_rejects_bad_axes():
    a = np.zeros((2, 3))
    b = np.zeros((3, 2))
    with pytest.raises(ValueError, match="out of range"):
        contract(a, b, [(2, 0)])
    with pytest.raises(ValueError, match="repeats"):
        contract(a, b, [(1, 0), (1, 1)])
    with pytest.raises(ValueError, match="mismatched"):
        contract(a, b, [(0, 0)])


def test_svd_exact_when_rank_allows():
    rng = np.random.default_rng(1)
    m = _rand_c(rng, 6, 4)
    u, s, vh = svd_truncated(m, max_rank=4)
    np.testing.assert_allclose(u @ np.diag(s) @ vh, m, atol=1e-12)
    np.testing.assert_allclose(u.conj().T @ u, np.eye(4), atol=1e-12)
    assert np.all(np.diff(s) <= 1e-15)
    assert np.all(s >= 0)


def test_svd_truncation_error_is_tail_of_spectrum():
    rng = np.random.default_rng(2)
    m = _rand_c(rng, 8, 8)
    s_full = np.linalg.svd(m, compute_uv=False)
    for k in (1, 3, 5):
        u, s, vh = svd_truncated(m, max_rank=k)
        assert s.shape == (k,)
        np.testing.assert_allclose(s, s_full[:k], rtol=1e-12)
        err = np.linalg.norm(m - u @ np.diag(s) @ vh)
        np.testing.assert_allclose(err, np.linalg.norm(s_full[k:]), rtol=1e-10)


def test_svd_cutoff_drops_relative_tail():
    # singular values 1, 0.5, 1e-9: a 1e-6 relative cutoff keeps two
    u0, _ = np.linalg.qr(np.random.default_rng(3).standard_normal((5, 3)))
    v0, _ = np.linalg.qr(np.random.default_rng(4).standard_normal((4, 3)))
    m = u0 @ np.diag([1.0, 0.5, 1e-9]) @ v0.T
    _, s, _ = svd_truncated(m, max_rank=3, cutoff=1e-6)
    assert s.shape == (2,)


def test_svd_zero_matrix_keeps_one():
    u, s, vh = svd_truncated(np.zeros((3, 3)), max_rank=2)
    assert s.shape == (1,)
    assert s[0] == 0.0
    assert u.shape == (3, 1) and vh.shape == (1, 3)


def test_svd_validates_arguments():
    with pytest.raises(ValueError):
        svd_truncated(np.zeros(3), max_rank=1)
    with pytest.raises(ValueError):
        svd_truncated(np.zeros((2, 2)), max_rank=0)
    with pytest.raises(ValueError):
        svd_truncated(np.zeros((2, 2)), max_rank=1, cutoff=-0.1)


def test_qr_reconstructs_with_orthonormal_columns():
    rng = np.random.default_rng(5)
    m = _rand_c(rng, 7, 4)
    q, r = qr_decompose(m)
    np.testing.assert_allclose(q @ r, m, atol=1e-12)
    np.testing.assert_allclose(q.conj().T @ q, np.eye(4), atol=1e-12)
    np.testing.assert_allclose(r, np.triu(r), atol=1e-14)


def test_qr_rejects_wide_matrix():
    with pytest.raises(ValueError, match="rows >= columns"):
        qr_decompose(np.zeros((2, 5)))


def test_eigh_descending_and_matches_numpy():
    rng = np.random.default_rng(6)
    a = _rand_c(rng, 6, 6)
    h = a + a.conj().T
    vals, vecs = eigh(h)
    np.testing.assert_allclose(vals, np.sort(np.linalg.eigvalsh(h))[::-1], atol=1e-12)
    np.testing.assert_allclose(h @ vecs, vecs * vals[None, :], atol=1e-11)


def test_eigh_rejects_non_hermitian():
    with pytest.raises(ValueError, match="not Hermitian"):
        eigh(np.array([[0.0, 1.0], [0.0, 0.0]]))
