"""Rydberg-chain and anisotropic-XY Hamiltonians.

Dense matrices for small chains, finite-state-automaton MPOs for DMRG, and
sparse matrices for iterative diagonalization at sizes where dense storage
is wasteful. Conventions: site 0 is the most significant bit of a basis
index, |g> = |0> (sigma_z eigenvalue +1), n = diag(0, 1).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse
from numpy.typing import NDArray

from .mps import MatrixProductState

SIGMA_X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=np.complex128)
SIGMA_Y = np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=np.complex128)
SIGMA_Z = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=np.complex128)
IDENTITY = np.eye(2, dtype=np.complex128)
NUMBER_OP = np.array([[0.0, 0.0], [0.0, 1.0]], dtype=np.complex128)

# Above this the dense matrix alone exceeds a desktop memory budget
# (2^14 squared complex doubles is ~4 GB); use the MPO or sparse path.
DENSE_SITE_LIMIT = 13


@dataclass(frozen=True)
class RydbergParams:
    """Homogeneous Rydberg-chain parameters.

    Units are caller's choice as long as they are consistent; the
    dimensionless constructor fixes omega = spacing = 1 so the physics
    depends only on delta/omega and R_b/a.
    """

    omega: float = 1.0
    delta: float = 0.0
    spacing: float = 1.0
    c6: float = 1.0
    truncation_range: int = 5
    transverse_axis: str = "x"

    def __post_init__(self):
        if self.omega < 0:
            raise ValueError("RydbergParams: omega must be >= 0")
        if self.spacing <= 0:
            raise ValueError("RydbergParams: spacing must be > 0")
        if self.c6 <= 0:
            raise ValueError("RydbergParams: c6 must be > 0")
        if self.truncation_range < 1:
            raise ValueError("RydbergParams: truncation_range must be >= 1")
        if self.transverse_axis not in ("x", "y"):
            raise ValueError("RydbergParams: transverse_axis must be 'x' or 'y'")

    @classmethod
    def dimensionless(cls, delta_over_omega: float, rb_over_a: float,
                      truncation_range: int = 5,
                      transverse_axis: str = "x") -> "RydbergParams":
        """Parameters in units of omega and the lattice constant."""
        return cls(omega=1.0, delta=delta_over_omega, spacing=1.0,
                   c6=rb_over_a ** 6, truncation_range=truncation_range,
                   transverse_axis=transverse_axis)

    @property
    def blockade_radius(self) -> float:
        if self.omega == 0.0:
            return float("inf")
        return (self.c6 / self.omega) ** (1.0 / 6.0)

    @property
    def rb_over_a(self) -> float:
        return self.blockade_radius / self.spacing

    @property
    def delta_over_omega(self) -> float:
        return self.delta / self.omega

    def interaction(self, distance: int) -> float:
        """Pair energy C6 / (a * distance)^6 for sites distance apart."""
        return self.c6 / (self.spacing * distance) ** 6


@dataclass(frozen=True)
class XYParams:
    """Anisotropic XY chain in a transverse field; coupling J is 1 throughout."""

    coupling: float = 1.0
    gamma: float = 1.0
    field: float = 1.0

    def __post_init__(self):
        for name in ("coupling", "gamma", "field"):
            if not np.isfinite(getattr(self, name)):
                raise ValueError(f"XYParams: {name} must be finite")


@dataclass
class MatrixProductOperator:
    """Operator tensors (left bond, phys out 2, phys in 2, right bond)."""

    sites: list[NDArray]

    def __post_init__(self):
        if not self.sites:
            raise ValueError("MatrixProductOperator: needs at least one site")
        self.sites = [np.ascontiguousarray(t, dtype=np.complex128) for t in self.sites]
        prev = 1
        for k, t in enumerate(self.sites):
            if t.ndim != 4 or t.shape[1] != 2 or t.shape[2] != 2:
                raise ValueError(f"MPO site {k}: expected (D, 2, 2, D), got {t.shape}")
            if t.shape[0] != prev:
                raise ValueError(f"MPO site {k}: bond mismatch {t.shape[0]} != {prev}")
            prev = t.shape[3]
        if prev != 1:
            raise ValueError(f"MPO last site: right bond must be 1, got {prev}")

    @property
    def n_sites(self) -> int:
        return len(self.sites)

    @property
    def bond_dims(self) -> list[int]:
        return [1] + [t.shape[3] for t in self.sites]

    def to_dense(self) -> NDArray:
        """Dense 2^N x 2^N matrix; guarded to the dense site limit."""
        n = self.n_sites
        if n > DENSE_SITE_LIMIT:
            raise ValueError(f"to_dense: {n} sites exceeds the dense limit "
                             f"of {DENSE_SITE_LIMIT}")
        acc = np.ones((1, 1, 1), dtype=np.complex128)   # (out, in, bond)
        for t in self.sites:
            acc = np.einsum("abk,kstl->asbtl", acc, t, optimize=True)
            acc = acc.reshape(acc.shape[0] * 2, acc.shape[2] * 2, -1)
        return acc[:, :, 0]


def mpo_expectation(op: MatrixProductOperator, psi: MatrixProductState) -> float:
    """Normalized expectation <psi|O|psi> / <psi|psi>."""
    if op.n_sites != psi.n_sites:
        raise ValueError("mpo_expectation: site-count mismatch")
    env = np.ones((1, 1, 1), dtype=np.complex128)       # (bra, mpo, ket)
    nrm = np.ones((1, 1), dtype=np.complex128)
    for w, a in zip(op.sites, psi.sites):
        env = np.einsum("awb,asx,wstv,bty->xvy", env, a.conj(), w, a, optimize=True)
        nrm = np.einsum("ab,asx,bsy->xy", nrm, a.conj(), a, optimize=True)
    z = nrm[0, 0].real
    if z <= 0.0:
        raise ValueError("mpo_expectation: zero-norm state")
    return float((env[0, 0, 0] / z).real)


def _site_bits(n: int) -> NDArray:
    """bits[k, j] = value of site k in basis index j (site 0 most significant)."""
    idx = np.arange(2 ** n, dtype=np.int64)
    return np.stack([(idx >> (n - 1 - k)) & 1 for k in range(n)])


def _rydberg_terms(p: RydbergParams, n: int):
    """Diagonal vector plus single-site flip terms (site, complex amplitudes)."""
    bits = _site_bits(n)
    diag = -p.delta * bits.sum(axis=0).astype(np.float64)
    for i in range(n):
        for j in range(i + 1, min(i + p.truncation_range, n - 1) + 1):
            diag = diag + p.interaction(j - i) * (bits[i] * bits[j])
    flips = []
    half_omega = 0.5 * p.omega
    for k in range(n):
        if p.transverse_axis == "x":
            vals = np.full(2 ** n, half_omega, dtype=np.complex128)
        else:
            # <j^mask|sigma_y|j> = +i when the site bit of j is 0, -i when 1
            vals = half_omega * 1j * (1.0 - 2.0 * bits[k]).astype(np.complex128)
        flips.append((k, vals))
    return diag, flips


def _xy_terms(p: XYParams, n: int):
    """Diagonal vector plus two-site flip terms ((i, i+1), complex amplitudes)."""
    bits = _site_bits(n)
    signs = 1.0 - 2.0 * bits
    diag = -0.5 * p.field * signs.sum(axis=0).astype(np.float64)
    flips = []
    cx = -p.coupling * (1.0 + p.gamma) / 4.0
    cy = -p.coupling * (1.0 - p.gamma) / 4.0
    for i in range(n - 1):
        # sigma_x sigma_x flips both bits with weight cx; sigma_y sigma_y
        # flips both with weight cy * (i s_i)(i s_j) = -cy * s_i s_j
        vals = (cx - cy * signs[i] * signs[i + 1]).astype(np.complex128)
        flips.append((i, vals))
    return diag, flips


def _assemble_dense(n: int, diag: NDArray, flips, pair: bool) -> NDArray:
    dim = 2 ** n
    h = np.zeros((dim, dim), dtype=np.complex128)
    h[np.arange(dim), np.arange(dim)] = diag
    idx = np.arange(dim)
    for site, vals in flips:
        mask = (1 << (n - 1 - site)) | ((1 << (n - 2 - site)) if pair else 0)
        h[idx ^ mask, idx] += vals
    return h


def _assemble_sparse(n: int, diag: NDArray, flips, pair: bool) -> scipy.sparse.csr_matrix:
    dim = 2 ** n
    idx = np.arange(dim)
    rows = [idx]
    cols = [idx]
    vals = [diag.astype(np.complex128)]
    for site, v in flips:
        mask = (1 << (n - 1 - site)) | ((1 << (n - 2 - site)) if pair else 0)
        rows.append(idx ^ mask)
        cols.append(idx)
        vals.append(v)
    mat = scipy.sparse.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(dim, dim))
    return mat.tocsr()


def _check_dense_limit(n: int, what: str) -> None:
    if n > DENSE_SITE_LIMIT:
        raise ValueError(f"{what}: {n} sites exceeds the dense limit of "
                         f"{DENSE_SITE_LIMIT}; use the MPO (or sparse) path")


def rydberg_dense(p: RydbergParams, n: int) -> NDArray:
    """Dense Rydberg Hamiltonian
    H = sum_i (omega/2) sigma_t^i - delta sum_i n_i
        + sum_{i<j, j-i<=range} C6/(a(j-i))^6 n_i n_j.
    """
    _check_dense_limit(n, "rydberg_dense")
    diag, flips = _rydberg_terms(p, n)
    return _assemble_dense(n, diag, flips, pair=False)


def rydberg_sparse(p: RydbergParams, n: int) -> scipy.sparse.csr_matrix:
    """Sparse CSR version of rydberg_dense for iterative eigensolvers."""
    diag, flips = _rydberg_terms(p, n)
    return _assemble_sparse(n, diag, flips, pair=False)


def xy_dense(p: XYParams, n: int) -> NDArray:
    """Dense anisotropic-XY Hamiltonian
    H = -J sum_i [(1+gamma)/4 sx sx + (1-gamma)/4 sy sy] - (h/2) sum_i sz.
    """
    _check_dense_limit(n, "xy_dense")
    diag, flips = _xy_terms(p, n)
    return _assemble_dense(n, diag, flips, pair=True)


def xy_sparse(p: XYParams, n: int) -> scipy.sparse.csr_matrix:
    """Sparse CSR version of xy_dense."""
    diag, flips = _xy_terms(p, n)
    return _assemble_sparse(n, diag, flips, pair=True)


def rydberg_mpo(p: RydbergParams, n: int) -> MatrixProductOperator:
    """Finite-state-automaton MPO for the truncated-range Rydberg chain.

    Bond dimension truncation_range + 2: state 0 carries identity, states
    1..range carry an open n_i awaiting its partner, the last state is final.
    """
    if n < 2:
        raise ValueError("rydberg_mpo: need at least 2 sites")
    r = p.truncation_range
    b = r + 2
    sigma_t = SIGMA_X if p.transverse_axis == "x" else SIGMA_Y
    local = 0.5 * p.omega * sigma_t - p.delta * NUMBER_OP
    w = np.zeros((b, 2, 2, b), dtype=np.complex128)
    w[0, :, :, 0] = IDENTITY
    w[0, :, :, b - 1] = local
    w[0, :, :, 1] = NUMBER_OP
    for d in range(1, r):
        w[d, :, :, d + 1] = IDENTITY
    for d in range(1, r + 1):
        w[d, :, :, b - 1] = p.interaction(d) * NUMBER_OP
    w[b - 1, :, :, b - 1] = IDENTITY
    sites = [w[0:1]] + [w.copy() for _ in range(n - 2)] + [w[:, :, :, b - 1 : b]]
    return MatrixProductOperator(sites)


def xy_mpo(p: XYParams, n: int) -> MatrixProductOperator:
    """Nearest-neighbor automaton MPO for the anisotropic XY chain, bond 4."""
    if n < 2:
        raise ValueError("xy_mpo: need at least 2 sites")
    w = np.zeros((4, 2, 2, 4), dtype=np.complex128)
    w[0, :, :, 0] = IDENTITY
    w[0, :, :, 1] = SIGMA_X
    w[0, :, :, 2] = SIGMA_Y
    w[0, :, :, 3] = -0.5 * p.field * SIGMA_Z
    w[1, :, :, 3] = -p.coupling * (1.0 + p.gamma) / 4.0 * SIGMA_X
    w[2, :, :, 3] = -p.coupling * (1.0 - p.gamma) / 4.0 * SIGMA_Y
    w[3, :, :, 3] = IDENTITY
    sites = [w[0:1]] + [w.copy() for _ in range(n - 2)] + [w[:, :, :, 3:4]]
    return MatrixProductOperator(sites)
