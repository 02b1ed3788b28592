"""Matrix-product-state engine.

One rank-3 tensor per site, shape (left bond, physical 2, right bond),
boundary bonds of dimension 1. The same representation carries ground-truth
states and trainable Born-machine wavefunctions; amplitudes are in general
unnormalized, with Born probabilities |psi(v)|^2 / Z.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .linalg import eigh, qr_decompose, svd_truncated

# Measurement-basis rotations applied to every physical index. Measuring the
# rotated state in the computational basis realizes a projective measurement
# of the original state along the chosen Pauli axis, with bit 1 recording the
# -1 eigenvalue outcome.
HADAMARD = np.array([[1.0, 1.0], [1.0, -1.0]], dtype=np.complex128) / np.sqrt(2.0)
Y_ROTATION = np.array([[1.0, -1.0j], [1.0, 1.0j]], dtype=np.complex128) / np.sqrt(2.0)

_MAGIC = b"BORNTOMO-MPS\x00\x00\x00\x00"  # exactly 16 bytes
_FORMAT_VERSION = 1


@dataclass(frozen=True)
class PauliBasis:
    """A global measurement axis: the same Pauli basis on every site."""

    axis: str

    def __post_init__(self):
        object.__setattr__(self, "axis", self.axis.lower())
        if self.axis not in ("x", "y", "z"):
            raise ValueError(f"PauliBasis: axis must be x, y or z, got {self.axis!r}")

    def rotation_gate(self) -> NDArray | None:
        """Single-site unitary mapping this basis onto the computational one."""
        if self.axis == "x":
            return HADAMARD
        if self.axis == "y":
            return Y_ROTATION
        return None


@dataclass
class MatrixProductState:
    """Open-boundary MPS with per-site tensors (D_left, 2, D_right).

    norm_scale records any global factor divided out during a normalizing
    canonicalization sweep; amplitudes of the stored tensors do not include
    it, so Born probabilities are unaffected.
    """

    sites: list[NDArray]
    complex_valued: bool = True
    canonical_center: int | None = None
    norm_scale: float = 1.0

    def __post_init__(self):
        if not self.sites:
            raise ValueError("MatrixProductState: needs at least one site")
        self.sites = [np.ascontiguousarray(t, dtype=np.complex128) for t in self.sites]
        prev = 1
        for k, t in enumerate(self.sites):
            if t.ndim != 3 or t.shape[1] != 2:
                raise ValueError(f"site {k}: expected (D, 2, D) tensor, got {t.shape}")
            if t.shape[0] != prev:
                raise ValueError(f"site {k}: left bond {t.shape[0]} != previous right bond {prev}")
            prev = t.shape[2]
            if not np.all(np.isfinite(t)):
                raise ValueError(f"site {k}: non-finite entries")
        if prev != 1:
            raise ValueError(f"last site: right bond must be 1, got {prev}")
        if not self.complex_valued and any(np.abs(t.imag).max() > 0 for t in self.sites):
            raise ValueError("complex_valued=False but tensors carry imaginary parts")
        if self.canonical_center is not None and not (0 <= self.canonical_center < len(self.sites)):
            raise ValueError(f"canonical_center {self.canonical_center} out of range")

    @property
    def n_sites(self) -> int:
        return len(self.sites)

    @property
    def bond_dims(self) -> list[int]:
        """Bond dimensions including the two trivial boundary bonds."""
        return [1] + [t.shape[2] for t in self.sites]

    def copy(self) -> "MatrixProductState":
        return MatrixProductState([t.copy() for t in self.sites], self.complex_valued,
                                  self.canonical_center, self.norm_scale)


def _as_bits(v, n: int) -> NDArray:
    if isinstance(v, str):
        if len(v) != n:
            raise ValueError(f"bitstring length {len(v)} != {n} sites")
        if set(v) - {"0", "1"}:
            raise ValueError(f"bitstring contains characters other than 0/1: {v!r}")
        return np.frombuffer(v.encode("ascii"), dtype=np.uint8) - ord("0")
    bits = np.asarray(v, dtype=np.int64)
    if bits.shape != (n,):
        raise ValueError(f"bit array shape {bits.shape} != ({n},)")
    if np.any((bits != 0) & (bits != 1)):
        raise ValueError("bit array contains values other than 0/1")
    return bits


def product_state(bits) -> MatrixProductState:
    """Computational-basis product state |v> as a bond-1 MPS."""
    bits = np.asarray(bits, dtype=np.int64)
    sites = []
    for b in bits:
        t = np.zeros((1, 2, 1), dtype=np.complex128)
        t[0, int(b), 0] = 1.0
        sites.append(t)
    return MatrixProductState(sites, complex_valued=True, canonical_center=0)


def random_mps(n_sites: int, bond_dim: int, rng: np.random.Generator,
               complex_valued: bool = True) -> MatrixProductState:
    """Uniform-bond random MPS with entries uniform in [0, 1) per component."""
    sites = []
    for k in range(n_sites):
        dl = 1 if k == 0 else bond_dim
        dr = 1 if k == n_sites - 1 else bond_dim
        t = rng.random((dl, 2, dr))
        if complex_valued:
            t = t + 1j * rng.random((dl, 2, dr))
        sites.append(t.astype(np.complex128))
    return MatrixProductState(sites, complex_valued=complex_valued)


def amplitude(psi: MatrixProductState, v) -> complex:
    """Unnormalized wavefunction amplitude psi(v) for one bitstring."""
    bits = _as_bits(v, psi.n_sites)
    vec = np.ones((1,), dtype=np.complex128)
    for k, b in enumerate(bits):
        vec = vec @ psi.sites[k][:, int(b), :]
    return complex(vec[0])


def batch_amplitudes(psi: MatrixProductState, bits: NDArray) -> NDArray:
    """Amplitudes for a (batch, N) array of bits, vectorized over the batch."""
    bits = np.asarray(bits)
    if bits.ndim != 2 or bits.shape[1] != psi.n_sites:
        raise ValueError(f"expected (batch, {psi.n_sites}) bit array, got {bits.shape}")
    vec = np.ones((bits.shape[0], 1), dtype=np.complex128)
    for k in range(psi.n_sites):
        picked = psi.sites[k][:, bits[:, k], :]          # (Dl, B, Dr)
        vec = np.einsum("bl,lbr->br", vec, picked, optimize=True)
    return vec[:, 0]


def norm_squared(psi: MatrixProductState) -> float:
    """Z = sum_v |psi(v)|^2 by transfer-matrix contraction, O(N D^3)."""
    env = np.ones((1, 1), dtype=np.complex128)
    for t in psi.sites:
        env = np.einsum("ab,asx,bsy->xy", env, t.conj(), t, optimize=True)
    z = float(env[0, 0].real)
    if z <= 0.0:
        raise ValueError("norm_squared: state has zero norm (degenerate model)")
    return z


def inner_product(a: MatrixProductState, b: MatrixProductState) -> complex:
    """<a|b> = sum_v conj(a(v)) b(v) via zipper contraction."""
    if a.n_sites != b.n_sites:
        raise ValueError(f"inner_product: size mismatch {a.n_sites} != {b.n_sites}")
    env = np.ones((1, 1), dtype=np.complex128)
    for ta, tb in zip(a.sites, b.sites):
        env = np.einsum("ab,asx,bsy->xy", env, ta.conj(), tb, optimize=True)
    return complex(env[0, 0])


def rotate_basis(psi: MatrixProductState, basis: PauliBasis) -> MatrixProductState:
    """Apply the basis rotation gate to every physical index.

    Z leaves the state untouched; X applies a Hadamard per site; Y applies
    U_y = [[1, -i], [1, i]]/sqrt(2). Unitarity preserves canonical form.
    """
    gate = basis.rotation_gate()
    if gate is None:
        return psi.copy()
    sites = [np.einsum("st,ltr->lsr", gate, t) for t in psi.sites]
    # U_y introduces imaginary parts even on a real state; H does not.
    return MatrixProductState(sites,
                              complex_valued=psi.complex_valued or basis.axis == "y",
                              canonical_center=psi.canonical_center,
                              norm_scale=psi.norm_scale)


def _split_left(mat: NDArray) -> tuple[NDArray, NDArray]:
    """mat = Q R with orthonormal Q columns; SVD fallback for wide matrices."""
    if mat.shape[0] >= mat.shape[1]:
        return qr_decompose(mat)
    u, s, vh = svd_truncated(mat, max_rank=min(mat.shape), cutoff=0.0)
    return u, s[:, None] * vh


def _split_right(mat: NDArray) -> tuple[NDArray, NDArray]:
    """mat = L Q with orthonormal Q rows; returns (L, Q)."""
    if mat.shape[1] >= mat.shape[0]:
        q, r = qr_decompose(mat.conj().T)
        return r.conj().T, q.conj().T
    u, s, vh = svd_truncated(mat, max_rank=min(mat.shape), cutoff=0.0)
    return u * s[None, :], vh


def canonicalize(psi: MatrixProductState, center: int,
                 normalize: bool = False) -> MatrixProductState:
    """Gauge-fix to mixed-canonical form about the given center site.

    Amplitudes are preserved exactly; with normalize=True the center tensor
    is rescaled to unit norm and the removed factor accumulated into
    norm_scale.
    """
    n = psi.n_sites
    if not 0 <= center < n:
        raise ValueError(f"canonicalize: center {center} out of range for {n} sites")
    sites = [t.copy() for t in psi.sites]
    for k in range(center):
        dl, _, dr = sites[k].shape
        q, r = _split_left(sites[k].reshape(dl * 2, dr))
        sites[k] = q.reshape(dl, 2, -1)
        sites[k + 1] = np.einsum("pb,bsr->psr", r, sites[k + 1])
    for k in range(n - 1, center, -1):
        dl, _, dr = sites[k].shape
        l, q = _split_right(sites[k].reshape(dl, 2 * dr))
        sites[k] = q.reshape(-1, 2, dr)
        sites[k - 1] = np.einsum("lsb,bp->lsp", sites[k - 1], l)
    scale = psi.norm_scale
    if normalize:
        nrm = float(np.linalg.norm(sites[center]))
        if nrm == 0.0:
            raise ValueError("canonicalize: state has zero norm")
        sites[center] = sites[center] / nrm
        scale = scale * nrm
    return MatrixProductState(sites, complex_valued=psi.complex_valued,
                              canonical_center=center, norm_scale=scale)


def sample(psi: MatrixProductState, n: int, rng: np.random.Generator) -> NDArray:
    """Draw n independent bitstrings from P(v) = |psi(v)|^2 / Z.

    Ancestral sampling left to right on a right-canonical copy; O(N D^2) per
    sample. Returns a (n, N) uint8 array, one bitstring per row.
    """
    if n < 1:
        raise ValueError("sample: need n >= 1")
    canon = canonicalize(psi, 0, normalize=True)
    out = np.empty((n, canon.n_sites), dtype=np.uint8)
    left = np.ones((n, 1), dtype=np.complex128)
    for k, t in enumerate(canon.sites):
        branch = np.einsum("bl,lsr->bsr", left, t, optimize=True)   # (n, 2, Dr)
        weights = np.einsum("bsr,bsr->bs", branch, branch.conj()).real
        p0 = weights[:, 0] / (weights[:, 0] + weights[:, 1])
        bits = (rng.random(n) >= p0).astype(np.uint8)
        out[:, k] = bits
        left = branch[np.arange(n), bits, :]
        # renormalize the conditional to absorb floating-point drift
        left = left / np.linalg.norm(left, axis=1, keepdims=True)
    return out


def entanglement_spectrum(psi: MatrixProductState, cut: int) -> NDArray:
    """Squared Schmidt coefficients across the bond between sites cut-1 and cut.

    Non-increasing, non-negative, summing to one; length equals the bond
    dimension at the cut.
    """
    n = psi.n_sites
    if not 1 <= cut <= n - 1:
        raise ValueError(f"entanglement_spectrum: cut must be in [1, {n - 1}], got {cut}")
    canon = canonicalize(psi, cut, normalize=True)
    center = canon.sites[cut]
    gram = np.einsum("asr,bsr->ab", center, center.conj(), optimize=True)
    vals, _ = eigh(gram)
    vals = np.clip(vals.real, 0.0, None)
    return vals / vals.sum()


def bipartite_entropy(psi: MatrixProductState, cut: int) -> float:
    """Von Neumann entropy -sum(lam ln lam) across the cut, with 0 ln 0 = 0."""
    lam = entanglement_spectrum(psi, cut)
    lam = lam[lam > 0]
    return float(-np.sum(lam * np.log(lam)))


def expectation_local(psi: MatrixProductState, op: NDArray, site: int) -> float:
    """Normalized expectation <psi|op_site|psi> / <psi|psi> of a 1-site operator."""
    if not 0 <= site < psi.n_sites:
        raise ValueError(f"site {site} out of range")
    return _expectation(psi, {site: np.asarray(op, dtype=np.complex128)})


def expectation_pair(psi: MatrixProductState, op_i: NDArray, i: int,
                     op_j: NDArray, j: int) -> float:
    """Normalized two-site expectation of op_i at site i and op_j at site j."""
    if i == j:
        return _expectation(psi, {i: np.asarray(op_i) @ np.asarray(op_j)})
    return _expectation(psi, {i: np.asarray(op_i, dtype=np.complex128),
                              j: np.asarray(op_j, dtype=np.complex128)})


def _expectation(psi: MatrixProductState, ops: dict[int, NDArray]) -> float:
    num = np.ones((1, 1), dtype=np.complex128)
    den = np.ones((1, 1), dtype=np.complex128)
    for k, t in enumerate(psi.sites):
        if k in ops:
            tk = np.einsum("st,ltr->lsr", ops[k], t)
        else:
            tk = t
        num = np.einsum("ab,asx,bsy->xy", num, t.conj(), tk, optimize=True)
        den = np.einsum("ab,asx,bsy->xy", den, t.conj(), t, optimize=True)
    z = den[0, 0].real
    if z <= 0.0:
        raise ValueError("expectation: zero-norm state")
    return float((num[0, 0] / z).real)


def full_distribution(psi: MatrixProductState) -> NDArray:
    """All 2^N Born probabilities, ordered with site 0 as the most
    significant bit. Intended for N small enough that 2^N fits in memory."""
    n = psi.n_sites
    if n > 20:
        raise ValueError(f"full_distribution: 2^{n} outcomes is too large")
    amps = np.ones((1, 1), dtype=np.complex128)
    for t in psi.sites:
        amps = np.einsum("ml,lsr->msr", amps, t, optimize=True)
        amps = amps.reshape(amps.shape[0] * 2, -1)
    p = np.abs(amps[:, 0]) ** 2
    total = p.sum()
    if total <= 0.0:
        raise ValueError("full_distribution: zero-norm state")
    return p / total


def to_statevector(psi: MatrixProductState) -> NDArray:
    """Dense 2^N statevector (site 0 = most significant bit), unnormalized."""
    n = psi.n_sites
    if n > 20:
        raise ValueError(f"to_statevector: 2^{n} amplitudes is too large")
    amps = np.ones((1, 1), dtype=np.complex128)
    for t in psi.sites:
        amps = np.einsum("ml,lsr->msr", amps, t, optimize=True)
        amps = amps.reshape(amps.shape[0] * 2, -1)
    return amps[:, 0]


def from_statevector(vec: NDArray, n_sites: int, max_bond: int | None = None,
                     cutoff: float = 0.0) -> MatrixProductState:
    """Decompose a dense statevector into an MPS by sequential SVD splits.

    Site 0 is the most significant bit of the statevector index. With
    max_bond=None the decomposition is exact up to floating point.
    """
    vec = np.asarray(vec, dtype=np.complex128)
    if vec.shape != (2 ** n_sites,):
        raise ValueError(f"statevector length {vec.shape} != 2^{n_sites}")
    cap = max_bond if max_bond is not None else 2 ** n_sites
    sites = []
    rest = vec.reshape(1, -1)
    for _ in range(n_sites - 1):
        dl = rest.shape[0]
        mat = rest.reshape(dl * 2, -1)
        u, s, vh = svd_truncated(mat, max_rank=cap, cutoff=cutoff)
        sites.append(u.reshape(dl, 2, -1))
        rest = s[:, None] * vh
    sites.append(rest.reshape(rest.shape[0], 2, 1))
    return MatrixProductState(sites, complex_valued=True, canonical_center=n_sites - 1)


def save_mps(psi: MatrixProductState, path: str) -> None:
    """Write an MPS checkpoint: 16-byte magic, version, flags, shapes, then
    little-endian (re, im) float64 pairs per tensor entry. Atomic."""
    parts = [_MAGIC]
    flags = (1 if psi.complex_valued else 0) | (2 if psi.canonical_center is not None else 0)
    center = psi.canonical_center if psi.canonical_center is not None else -1
    parts.append(struct.pack("<IIid", _FORMAT_VERSION, flags, center, psi.norm_scale))
    parts.append(struct.pack("<I", psi.n_sites))
    for t in psi.sites:
        parts.append(struct.pack("<III", *t.shape))
    for t in psi.sites:
        flat = np.ascontiguousarray(t, dtype="<c16")
        parts.append(flat.tobytes())
    blob = b"".join(parts)
    tmp = path + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(blob)
    os.replace(tmp, path)


def load_mps(path: str) -> MatrixProductState:
    """Read an MPS checkpoint written by save_mps."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 16 or blob[:16] != _MAGIC:
        raise ValueError(f"{path}: not an MPS checkpoint (bad magic)")
    off = 16
    try:
        version, flags, center, norm_scale = struct.unpack_from("<IIid", blob, off)
        off += struct.calcsize("<IIid")
        if version != _FORMAT_VERSION:
            raise ValueError(f"{path}: unsupported format version {version}")
        (n,) = struct.unpack_from("<I", blob, off)
        off += 4
        shapes = []
        for _ in range(n):
            shapes.append(struct.unpack_from("<III", blob, off))
            off += 12
        sites = []
        for shape in shapes:
            count = shape[0] * shape[1] * shape[2]
            arr = np.frombuffer(blob, dtype="<c16", count=count, offset=off)
            off += count * 16
            sites.append(arr.reshape(shape).astype(np.complex128))
    except struct.error as exc:
        raise ValueError(f"{path}: truncated MPS checkpoint") from exc
    if off != len(blob):
        raise ValueError(f"{path}: trailing bytes in MPS checkpoint")
    return MatrixProductState(sites, complex_valued=bool(flags & 1),
                              canonical_center=center if flags & 2 else None,
                              norm_scale=norm_scale)
