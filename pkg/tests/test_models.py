"""Hamiltonian builders against explicit Kronecker-product oracles."""

from __future__ import annotations

import numpy as np
import pytest

from borntomo.models import (DENSE_SITE_LIMIT, MatrixProductOperator,
                             RydbergParams, XYParams, mpo_expectation,
                             rydberg_dense, rydberg_mpo, rydberg_sparse,
                             xy_dense, xy_mpo, xy_sparse)
from borntomo.mps import product_state, random_mps
from borntomo.rng import derive_rng

from conftest import ID2, NUM, SX, SY, SZ, bits_of, dense_vector, kron_chain


def _rydberg_oracle(p: RydbergParams, n: int) -> np.ndarray:
    st = SX if p.transverse_axis == "x" else SY
    h = np.zeros((2 ** n, 2 ** n), dtype=np.complex128)
    for i in range(n):
        h += 0.5 * p.omega * kron_chain([st if k == i else ID2 for k in range(n)])
        h -= p.delta * kron_chain([NUM if k == i else ID2 for k in range(n)])
    for i in range(n):
        for j in range(i + 1, n):
            if j - i > p.truncation_range:
                continue
            ops = [NUM if k in (i, j) else ID2 for k in range(n)]
            h += p.c6 / (p.spacing * (j - i)) ** 6 * kron_chain(ops)
    return h


def _xy_oracle(p: XYParams, n: int) -> np.ndarray:
    h = np.zeros((2 ** n, 2 ** n), dtype=np.complex128)
    for i in range(n - 1):
        for op, w in ((SX, (1 + p.gamma) / 4), (SY, (1 - p.gamma) / 4)):
            ops = [op if k in (i, i + 1) else ID2 for k in range(n)]
            h -= p.coupling * w * kron_chain(ops)
    for i in range(n):
        h -= 0.5 * p.field * kron_chain([SZ if k == i else ID2 for k in range(n)])
    return h


# ------------------------------------------------------------------- params

def test_rydberg_params_dimensionless_round_trip():
    p = RydbergParams.dimensionless(1.2, 1.5)
    assert p.delta_over_omega == pytest.approx(1.2)
    assert p.rb_over_a == pytest.approx(1.5)
    assert p.blockade_radius == pytest.approx(1.5)
    assert p.interaction(2) == pytest.approx(1.5 ** 6 / 2 ** 6)


def test_rydberg_params_validation():
    with pytest.raises(ValueError):
        RydbergParams(omega=-1.0)
    with pytest.raises(ValueError):
        RydbergParams(spacing=0.0)
    with pytest.raises(ValueError):
        RydbergParams(c6=-2.0)
    with pytest.raises(ValueError):
        RydbergParams(truncation_range=0)
    with pytest.raises(ValueError):
        RydbergParams(transverse_axis="z")
    assert RydbergParams(omega=0.0).blockade_radius == np.inf


def test_xy_params_validation():
    with pytest.raises(ValueError, match="finite"):
        XYParams(field=np.nan)
    with pytest.raises(ValueError, match="finite"):
        XYParams(gamma=np.inf)


# ------------------------------------------------------------ dense builders

@pytest.mark.parametrize("axis", ["x", "y"])
def test_rydberg_dense_matches_kron_oracle(axis):
    p = RydbergParams.dimensionless(0.8, 1.4, transverse_axis=axis)
    for n in (2, 4, 6):
        h = rydberg_dense(p, n)
        np.testing.assert_allclose(h, _rydberg_oracle(p, n), atol=1e-12)
        np.testing.assert_allclose(h, h.conj().T, atol=1e-12)


def test_rydberg_truncation_range_drops_far_pairs():
    near = RydbergParams.dimensionless(0.5, 1.6, truncation_range=2)
    h = rydberg_dense(near, 7)
    np.testing.assert_allclose(h, _rydberg_oracle(near, 7), atol=1e-12)
    # an explicitly truncated oracle differs from the full-range one
    full = RydbergParams.dimensionless(0.5, 1.6, truncation_range=6)
    assert np.abs(h - _rydberg_oracle(full, 7)).max() > 1e-3


def test_rydberg_y_variant_spectrum_matches_x_variant():
    # sigma_y = R sigma_x R^dag with R = diag(1, i); all other terms are
    # diagonal, so the two variants are unitarily equivalent
    px = RydbergParams.dimensionless(0.7, 1.5)
    py = RydbergParams.dimensionless(0.7, 1.5, transverse_axis="y")
    ex = np.linalg.eigvalsh(rydberg_dense(px, 5))
    ey = np.linalg.eigvalsh(rydberg_dense(py, 5))
    np.testing.assert_allclose(ex, ey, atol=1e-10)


def test_rydberg_diagonal_is_classical_energy():
    p = RydbergParams.dimensionless(1.1, 1.3)
    n = 5
    h = rydberg_dense(p, n)
    for v in (0, 7, 21, 31):
        bits = bits_of(v, n)
        e = -p.delta * sum(bits)
        for i in range(n):
            for j in range(i + 1, n):
                if j - i <= p.truncation_range:
                    e += p.interaction(j - i) * bits[i] * bits[j]
        assert h[v, v].real == pytest.approx(e, abs=1e-12)


@pytest.mark.parametrize("params", [
    XYParams(),
    XYParams(coupling=1.3, gamma=0.7, field=0.9),
    XYParams(gamma=2.0, field=0.5),
    XYParams(gamma=0.5, field=0.5),
])
def test_xy_dense_matches_kron_oracle(params):
    for n in (2, 4, 6):
        h = xy_dense(params, n)
        np.testing.assert_allclose(h, _xy_oracle(params, n), atol=1e-12)
        np.testing.assert_allclose(h, h.conj().T, atol=1e-12)


def test_dense_guard_rejects_large_chains():
    n = DENSE_SITE_LIMIT + 1
    with pytest.raises(ValueError, match="dense limit"):
        rydberg_dense(RydbergParams(), n)
    with pytest.raises(ValueError, match="dense limit"):
        xy_dense(XYParams(), n)


# ------------------------------------------------------------------- sparse

def test_sparse_equals_dense():
    pr = RydbergParams.dimensionless(0.9, 1.7, transverse_axis="y")
    np.testing.assert_allclose(rydberg_sparse(pr, 6).toarray(),
                               rydberg_dense(pr, 6), atol=1e-12)
    pxy = XYParams(gamma=1.5, field=0.5)
    np.testing.assert_allclose(xy_sparse(pxy, 6).toarray(),
                               xy_dense(pxy, 6), atol=1e-12)


# --------------------------------------------------------------------- MPOs

@pytest.mark.parametrize("n", [2, 3, 6, 9])
def test_rydberg_mpo_matches_dense(n):
    p = RydbergParams.dimensionless(0.75, 1.5)
    np.testing.assert_allclose(rydberg_mpo(p, n).to_dense(),
                               rydberg_dense(p, n), atol=1e-12)


def test_rydberg_mpo_y_variant_and_truncation():
    p = RydbergParams.dimensionless(0.6, 1.2, truncation_range=3,
                                    transverse_axis="y")
    np.testing.assert_allclose(rydberg_mpo(p, 7).to_dense(),
                               rydberg_dense(p, 7), atol=1e-12)
    assert max(rydberg_mpo(p, 7).bond_dims) == p.truncation_range + 2


@pytest.mark.parametrize("params", [XYParams(), XYParams(gamma=0.3, field=2.0)])
def test_xy_mpo_matches_dense(params):
    for n in (2, 5, 8):
        np.testing.assert_allclose(xy_mpo(params, n).to_dense(),
                                   xy_dense(params, n), atol=1e-12)
    assert max(xy_mpo(params, 8).bond_dims) == 4


def test_mpo_needs_two_sites():
    with pytest.raises(ValueError):
        rydberg_mpo(RydbergParams(), 1)
    with pytest.raises(ValueError):
        xy_mpo(XYParams(), 1)


def test_mpo_validation():
    with pytest.raises(ValueError, match="at least one"):
        MatrixProductOperator([])
    with pytest.raises(ValueError, match=r"expected \(D, 2, 2, D\)"):
        MatrixProductOperator([np.zeros((1, 2, 3, 1))])
    with pytest.raises(ValueError, match="bond mismatch"):
        MatrixProductOperator([np.zeros((1, 2, 2, 2)), np.zeros((3, 2, 2, 1))])
    with pytest.raises(ValueError, match="right bond"):
        MatrixProductOperator([np.zeros((1, 2, 2, 2))])


def test_mpo_to_dense_guard():
    p = RydbergParams()
    mpo = rydberg_mpo(p, DENSE_SITE_LIMIT + 1)
    with pytest.raises(ValueError, match="dense limit"):
        mpo.to_dense()


# -------------------------------------------------------------- expectation

def test_mpo_expectation_matches_dense_quadratic_form():
    n = 6
    p = RydbergParams.dimensionless(1.0, 1.5)
    psi = random_mps(n, 4, derive_rng(0, "mpo-exp"))
    vec = dense_vector(psi.sites)
    h = rydberg_dense(p, n)
    expect = (np.vdot(vec, h @ vec) / np.vdot(vec, vec)).real
    assert mpo_expectation(rydberg_mpo(p, n), psi) == pytest.approx(expect, rel=1e-10)

    pxy = XYParams(gamma=0.8, field=1.1)
    hxy = xy_dense(pxy, n)
    expect = (np.vdot(vec, hxy @ vec) / np.vdot(vec, vec)).real
    assert mpo_expectation(xy_mpo(pxy, n), psi) == pytest.approx(expect, rel=1e-10)


def test_mpo_expectation_validates_sites():
    with pytest.raises(ValueError, match="mismatch"):
        mpo_expectation(xy_mpo(XYParams(), 4),
                        random_mps(5, 2, derive_rng(0, "x")))


def test_diagonal_mpo_gives_classical_energy_on_bitstrings():
    # omega = 0 removes the only off-diagonal term
    p = RydbergParams(omega=0.0, delta=0.9, c6=2.0)
    n = 6
    mpo = rydberg_mpo(p, n)
    dense = mpo.to_dense()
    assert np.abs(dense - np.diag(np.diag(dense))).max() < 1e-14
    for v in (0, 9, 27, 63):
        bits = bits_of(v, n)
        e = -p.delta * sum(bits)
        for i in range(n):
            for j in range(i + 1, min(i + p.truncation_range, n - 1) + 1):
                e += p.interaction(j - i) * bits[i] * bits[j]
        got = mpo_expectation(mpo, product_state(bits))
        assert got == pytest.approx(e, abs=1e-12)
