"""Shared brute-force oracles: dense statevectors and Kronecker products.

Every helper here works on plain numpy arrays and never calls back into the
package's contraction code, so disagreements point at the implementation.
"""

from __future__ import annotations

import numpy as np

SX = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=np.complex128)
SY = np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=np.complex128)
SZ = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=np.complex128)
ID2 = np.eye(2, dtype=np.complex128)
NUM = np.array([[0.0, 0.0], [0.0, 1.0]], dtype=np.complex128)  # |1><1|


def dense_vector(sites) -> np.ndarray:
    """Contract a list of (Dl, 2, Dr) tensors into the full 2^N vector.

    Site 0 is the most significant bit of the result index.
    """
    acc = np.ones((1, 1), dtype=np.complex128)
    for t in sites:
        acc = np.einsum("vl,lsr->vsr", acc, np.asarray(t, dtype=np.complex128))
        acc = acc.reshape(-1, acc.shape[2])
    return acc[:, 0]


def kron_chain(mats) -> np.ndarray:
    acc = np.ones((1, 1), dtype=np.complex128)
    for m in mats:
        acc = np.kron(acc, np.asarray(m, dtype=np.complex128))
    return acc


def one_site_operator(n: int, op, site: int) -> np.ndarray:
    return kron_chain([op if k == site else ID2 for k in range(n)])


_H = np.array([[1.0, 1.0], [1.0, -1.0]], dtype=np.complex128) / np.sqrt(2.0)
_K = np.array([[1.0, -1.0j], [1.0, 1.0j]], dtype=np.complex128) / np.sqrt(2.0)

# maps the statevector into the measurement eigenbasis of each Pauli axis
HADAMARD_GATES = {
    "x": lambda n: kron_chain([_H] * n),
    "y": lambda n: kron_chain([_K] * n),
    "z": lambda n: np.eye(1 << n, dtype=np.complex128),
}


def bits_of(v: int, n: int) -> list[int]:
    """Big-endian bit list of an integer outcome index."""
    return [(v >> (n - 1 - k)) & 1 for k in range(n)]


def numeric_nll_gradient(model, batches) -> np.ndarray:
    """Central differences with one Richardson refinement per parameter."""
    from borntomo.training import _pack_params, _unpack_params, nll_loss

    base = _pack_params(model).copy()

    def loss_at(flat):
        _unpack_params(model, flat)
        return nll_loss(model, batches)

    def diff(i, step):
        plus, minus = base.copy(), base.copy()
        plus[i] += step
        minus[i] -= step
        return (loss_at(plus) - loss_at(minus)) / (2.0 * step)

    out = np.empty_like(base)
    for i in range(base.size):
        h = 1e-4 * max(1.0, abs(base[i]))
        out[i] = (4.0 * diff(i, h / 2) - diff(i, h)) / 3.0
    _unpack_params(model, base)
    return out
