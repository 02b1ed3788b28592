"""Reference ground states and phase-diagram structure.

Exact diagonalization for small chains, a two-site DMRG for anything
larger, adiabatic parameter sweeps with warm starts, a critical-point
locator driven by the entanglement-entropy maximum, and ordered-phase
overlaps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse
import scipy.sparse.linalg
from numpy.typing import NDArray

from . import linalg
from .models import (NUMBER_OP, MatrixProductOperator, RydbergParams, XYParams,
                     rydberg_mpo, rydberg_sparse, xy_mpo, xy_sparse)
from .mps import (MatrixProductState, amplitude, bipartite_entropy, canonicalize,
                  expectation_local, from_statevector, norm_squared, random_mps)
from .rng import derive_rng

# Below this dimension a full dense eigendecomposition is cheaper than ARPACK.
_FULL_EIGH_DIM = 2048


@dataclass
class GroundStateResult:
    state: MatrixProductState
    energy: float
    gap: float | None = None
    converged: bool = True
    sweep_log: list[float] = field(default_factory=list)


@dataclass
class SweepPoint:
    value: float
    energy: float
    gap: float | None
    svn: float
    magnetization: float
    overlaps: dict[int, float]
    converged: bool


@dataclass
class SweepLine:
    """Observables along one scanned-parameter line at fixed everything else."""

    grid_name: str
    values: list[float]
    points: list[SweepPoint]
    states: list[MatrixProductState]
    n_sites: int
    rb_over_a: float | None = None


@dataclass
class CriticalPointEstimate:
    found: bool
    value: float | None = None
    svn_max_index: int | None = None
    gap_min_index: int | None = None
    slope_extremum_index: float | None = None
    spread_steps: float | None = None
    consistent: bool = False
    note: str = ""


def _phase_fix(vec: NDArray) -> NDArray:
    """Rotate a state so its largest-magnitude entry is real positive."""
    k = int(np.argmax(np.abs(vec)))
    phase = vec[k] / abs(vec[k])
    return vec / phase


def exact_ground_state(h, k: int = 1) -> GroundStateResult:
    """Lowest-k eigenpairs of a Hermitian matrix (dense or sparse).

    The ground vector is converted to an exact MPS; gap = E1 - E0 when
    k >= 2.
    """
    dim = h.shape[0]
    if dim > 2 ** 16:
        raise ValueError(f"exact_ground_state: dimension {dim} exceeds 2^16")
    n = int(round(math.log2(dim)))
    if 2 ** n != dim:
        raise ValueError(f"exact_ground_state: dimension {dim} is not a power of 2")
    if k < 1:
        raise ValueError("exact_ground_state: k must be >= 1")
    sparse_input = scipy.sparse.issparse(h)
    if dim <= _FULL_EIGH_DIM:
        mat = h.toarray() if sparse_input else np.asarray(h)
        vals_desc, vecs = linalg.eigh(mat)
        vals = vals_desc[::-1]
        vecs = vecs[:, ::-1]
        energies = vals[:k]
        ground = vecs[:, 0]
    else:
        v0 = derive_rng(0, "ed-start", dim).standard_normal(dim)
        vals, vecs = scipy.sparse.linalg.eigsh(h, k=max(k, 2), which="SA", v0=v0)
        order = np.argsort(vals)
        energies = vals[order][:k]
        ground = vecs[:, order[0]]
    state = from_statevector(_phase_fix(ground), n)
    gap = float(energies[1] - energies[0]) if k >= 2 else None
    return GroundStateResult(state=state, energy=float(energies[0]), gap=gap)


class _PenaltyTerm:
    """Rank-one energy penalty w |g><g| tracked in the sweeping gauge."""

    def __init__(self, g: MatrixProductState, weight: float, n: int):
        self.g = canonicalize(g, 0, normalize=True)
        self.weight = weight
        self.left = [None] * (n + 1)
        self.right = [None] * (n + 1)
        self.left[0] = np.ones((1, 1), dtype=np.complex128)
        self.right[n] = np.ones((1, 1), dtype=np.complex128)

    def update_left(self, k: int, a: NDArray) -> None:
        self.left[k + 1] = np.einsum("gm,gsx,msy->xy", self.left[k],
                                     self.g.sites[k].conj(), a, optimize=True)

    def update_right(self, k: int, a: NDArray) -> None:
        self.right[k] = np.einsum("gsx,msy,xy->gm", self.g.sites[k].conj(), a,
                                  self.right[k + 1], optimize=True)

    def theta_vector(self, k: int) -> NDArray:
        """<g| expressed in the current two-site theta coordinates."""
        return np.einsum("gm,gsh,htr,rq->mstq", self.left[k],
                         self.g.sites[k].conj(), self.g.sites[k + 1].conj(),
                         self.right[k + 2], optimize=True)


def _local_matvec(left, w1, w2, right, x):
    t = np.tensordot(left, x, axes=([2], [0]))          # a w si ti d
    t = np.tensordot(t, w1, axes=([1, 2], [0, 2]))      # a ti d so v
    t = np.tensordot(t, w2, axes=([4, 1], [0, 2]))      # a d so to u
    return np.tensordot(t, right, axes=([4, 1], [1, 2]))  # a so to c


def _solve_local(left, w1, w2, right, theta, penalties, k):
    """Lowest eigenpair of the two-site effective Hamiltonian."""
    shape = theta.shape
    dim = theta.size
    pen = [(p.weight, p.theta_vector(k)) for p in penalties]

    def apply(x):
        x = x.reshape(shape)
        y = _local_matvec(left, w1, w2, right, x)
        for weight, vg in pen:
            y = y + weight * np.sum(vg * x) * vg.conj()
        return y.ravel()

    if dim <= 128:
        basis = np.eye(dim, dtype=np.complex128)
        heff = np.column_stack([apply(basis[:, i]) for i in range(dim)])
        heff = (heff + heff.conj().T) / 2.0
        vals_desc, vecs = linalg.eigh(heff)
        return float(vals_desc[-1]), vecs[:, -1].reshape(shape)
    op = scipy.sparse.linalg.LinearOperator((dim, dim), matvec=apply,
                                            dtype=np.complex128)
    vals, vecs = scipy.sparse.linalg.eigsh(op, k=1, which="SA",
                                           v0=theta.ravel(), tol=1e-12)
    return float(vals[0]), vecs[:, 0].reshape(shape)


def dmrg_ground_state(h: MatrixProductOperator, d_max: int, sweeps: int = 30,
                      init: MatrixProductState | None = None,
                      cutoff: float = 1e-10, rtol: float = 1e-10,
                      penalty_states: list[MatrixProductState] | None = None,
                      penalty_weight: float = 0.0) -> GroundStateResult:
    """Two-site variational ground-state search.

    Warm starts come in through init. With penalty_states the search runs in
    the (energetically) shifted space H + w sum |g><g|, which targets the
    lowest state orthogonal to the supplied ones.
    """
    if d_max < 2:
        raise ValueError("dmrg_ground_state: d_max must be >= 2")
    if sweeps < 1:
        raise ValueError("dmrg_ground_state: sweeps must be >= 1")
    n = h.n_sites
    if init is None:
        init = random_mps(n, min(d_max, 8), derive_rng(0, "dmrg-init", n))
    psi = canonicalize(init, 0, normalize=True)
    sites = psi.sites
    ws = h.sites
    penalties = [_PenaltyTerm(g, penalty_weight, n) for g in (penalty_states or [])]

    left = [None] * (n + 1)
    right = [None] * (n + 1)
    left[0] = np.ones((1, 1, 1), dtype=np.complex128)
    right[n] = np.ones((1, 1, 1), dtype=np.complex128)
    for k in range(n - 1, 0, -1):
        right[k] = np.einsum("asx,wstv,bty,xvy->awb", sites[k].conj(), ws[k],
                             sites[k], right[k + 1], optimize=True)
        for p in penalties:
            p.update_right(k, sites[k])

    energy = math.inf
    sweep_log: list[float] = []
    converged = False
    for _ in range(sweeps):
        for k in range(n - 1):          # left to right
            theta = np.einsum("lsm,mtr->lstr", sites[k], sites[k + 1])
            energy, theta = _solve_local(left[k], ws[k], ws[k + 1],
                                         right[k + 2], theta, penalties, k)
            dl, _, _, dr = theta.shape
            u, s, vh = linalg.svd_truncated(theta.reshape(dl * 2, 2 * dr),
                                            max_rank=d_max, cutoff=cutoff)
            s = s / np.linalg.norm(s)
            sites[k] = u.reshape(dl, 2, -1)
            sites[k + 1] = (s[:, None] * vh).reshape(-1, 2, dr)
            left[k + 1] = np.einsum("awb,asx,wstv,bty->xvy", left[k],
                                    sites[k].conj(), ws[k], sites[k],
                                    optimize=True)
            for p in penalties:
                p.update_left(k, sites[k])
        for k in range(n - 2, -1, -1):  # right to left
            theta = np.einsum("lsm,mtr->lstr", sites[k], sites[k + 1])
            energy, theta = _solve_local(left[k], ws[k], ws[k + 1],
                                         right[k + 2], theta, penalties, k)
            dl, _, _, dr = theta.shape
            u, s, vh = linalg.svd_truncated(theta.reshape(dl * 2, 2 * dr),
                                            max_rank=d_max, cutoff=cutoff)
            s = s / np.linalg.norm(s)
            sites[k + 1] = vh.reshape(-1, 2, dr)
            sites[k] = (u * s[None, :]).reshape(dl, 2, -1)
            right[k + 1] = np.einsum("asx,wstv,bty,xvy->awb",
                                     sites[k + 1].conj(), ws[k + 1],
                                     sites[k + 1], right[k + 2], optimize=True)
            for p in penalties:
                p.update_right(k + 1, sites[k + 1])
        sweep_log.append(energy)
        if len(sweep_log) >= 2:
            prev = sweep_log[-2]
            if abs(prev - energy) < rtol * max(abs(energy), 1e-12):
                converged = True
                break
    out = canonicalize(MatrixProductState(sites), 0, normalize=True)
    return GroundStateResult(state=out, energy=energy, converged=converged,
                             sweep_log=sweep_log)


def _inject_noise(psi: MatrixProductState, magnitude: float,
                  rng: np.random.Generator) -> MatrixProductState:
    """Small random perturbation to break symmetry locks in warm starts."""
    sites = []
    for t in psi.sites:
        scale = magnitude * max(np.abs(t).max(), 1.0)
        noise = rng.standard_normal(t.shape) + 1j * rng.standard_normal(t.shape)
        sites.append(t + scale * noise)
    return MatrixProductState(sites, complex_valued=True)


def _sparse_gap(h_sparse, d_max: int, mpo: MatrixProductOperator,
                ground: GroundStateResult) -> float:
    """Energy gap E1 - E0; dense/sparse ED when feasible, else penalty DMRG."""
    dim = h_sparse.shape[0]
    if dim <= 2 ** 14:
        if dim <= _FULL_EIGH_DIM:
            vals_desc, _ = linalg.eigh(h_sparse.toarray())
            vals = np.sort(vals_desc)
        else:
            v0 = derive_rng(0, "gap-start", dim).standard_normal(dim)
            vals = np.sort(scipy.sparse.linalg.eigsh(
                h_sparse, k=2, which="SA", v0=v0, return_eigenvectors=False))
        return float(vals[1] - vals[0])
    excited = dmrg_ground_state(mpo, d_max, penalty_states=[ground.state],
                                penalty_weight=10.0 * abs(ground.energy) + 1.0)
    return float(excited.energy - ground.energy)


def _magnetization(state: MatrixProductState) -> float:
    vals = [expectation_local(state, NUMBER_OP, i) for i in range(state.n_sites)]
    return float(np.mean([0.5 - v for v in vals]))


def _sweep(builders, values, grid_name, n_sites, d_max, sweeps, compute_gap,
           overlap_orders, rb_over_a=None, seed: int = 0) -> SweepLine:
    """Shared warm-started scan driver; builders yields (mpo, sparse_h)."""
    points: list[SweepPoint] = []
    states: list[MatrixProductState] = []
    rng = derive_rng(seed, "sweep-noise", grid_name, n_sites)
    prev: MatrixProductState | None = None
    for value in values:
        mpo, h_sparse = builders(value)
        init = _inject_noise(prev, 1e-8, rng) if prev is not None else None
        res = dmrg_ground_state(mpo, d_max=d_max, sweeps=sweeps, init=init)
        prev = res.state
        gap = _sparse_gap(h_sparse, d_max, mpo, res) if compute_gap else None
        overlaps = {}
        for k in overlap_orders:
            if (n_sites - 1) % k == 0:
                overlaps[k] = phase_overlap(res.state, k)
        points.append(SweepPoint(value=value, energy=res.energy, gap=gap,
                                 svn=bipartite_entropy(res.state, n_sites // 2),
                                 magnetization=_magnetization(res.state),
                                 overlaps=overlaps, converged=res.converged))
        states.append(res.state)
    return SweepLine(grid_name=grid_name, values=list(values), points=points,
                     states=states, n_sites=n_sites, rb_over_a=rb_over_a)


def adiabatic_sweep(params_template: RydbergParams, n_sites: int,
                    rb_over_a: float, delta_grid, d_max: int = 64,
                    sweeps: int = 30, compute_gap: bool = True,
                    overlap_orders=(2, 3, 4), seed: int = 0) -> SweepLine:
    """Scan delta/omega left to right at fixed R_b/a, warm-starting each
    DMRG run from the previous solution (plus 1e-8 symmetry-breaking noise)."""
    delta_grid = list(delta_grid)
    if not delta_grid:
        raise ValueError("adiabatic_sweep: empty grid")
    if any(b <= a for a, b in zip(delta_grid, delta_grid[1:])):
        raise ValueError("adiabatic_sweep: grid must be strictly increasing")

    def build(delta_over_omega):
        p = RydbergParams.dimensionless(
            delta_over_omega, rb_over_a,
            truncation_range=params_template.truncation_range,
            transverse_axis=params_template.transverse_axis)
        return rydberg_mpo(p, n_sites), rydberg_sparse(p, n_sites)

    return _sweep(build, delta_grid, "delta_over_omega", n_sites, d_max,
                  sweeps, compute_gap, overlap_orders, rb_over_a=rb_over_a,
                  seed=seed)


def xy_field_sweep(params_template: XYParams, n_sites: int, h_grid,
                   d_max: int = 64, sweeps: int = 30,
                   compute_gap: bool = True, seed: int = 0) -> SweepLine:
    """Scan the transverse field h at fixed anisotropy, warm-started."""
    h_grid = list(h_grid)
    if not h_grid:
        raise ValueError("xy_field_sweep: empty grid")
    if any(b <= a for a, b in zip(h_grid, h_grid[1:])):
        raise ValueError("xy_field_sweep: grid must be strictly increasing")

    def build(field):
        p = XYParams(coupling=params_template.coupling,
                     gamma=params_template.gamma, field=field)
        return xy_mpo(p, n_sites), xy_sparse(p, n_sites)

    return _sweep(build, h_grid, "field", n_sites, d_max, sweeps, compute_gap,
                  overlap_orders=(), seed=seed)


def locate_critical_point(line: SweepLine) -> CriticalPointEstimate:
    """Transition estimate from the interior entanglement-entropy maximum.

    Diagnostics report where the gap is smallest and where the
    magnetization slope is steepest, plus the spread between the three
    locations in grid steps.
    """
    svn = np.array([p.svn for p in line.points])
    if len(svn) < 3:
        return CriticalPointEstimate(found=False, note="grid too short")
    i_svn = int(np.argmax(svn))
    if i_svn in (0, len(svn) - 1):
        return CriticalPointEstimate(found=False, svn_max_index=i_svn,
                                     note="entropy maximum on grid boundary")
    gaps = [p.gap for p in line.points]
    i_gap = int(np.argmin(gaps)) if all(g is not None for g in gaps) else None
    mags = np.array([p.magnetization for p in line.points])
    vals = np.array(line.values)
    slopes = np.abs(np.diff(mags) / np.diff(vals))
    i_slope = float(np.argmax(slopes)) + 0.5    # midpoint between grid points
    locations = [float(i_svn), i_slope] + ([float(i_gap)] if i_gap is not None else [])
    spread = max(locations) - min(locations)
    return CriticalPointEstimate(found=True, value=float(vals[i_svn]),
                                 svn_max_index=i_svn, gap_min_index=i_gap,
                                 slope_extremum_index=i_slope,
                                 spread_steps=spread, consistent=spread <= 2.0)


def ordered_pattern_bits(n_sites: int, k: int) -> NDArray:
    """Excitation every k sites with both chain ends excited."""
    if k not in (2, 3, 4):
        raise ValueError(f"ordered pattern: k must be 2, 3 or 4, got {k}")
    if (n_sites - 1) % k != 0:
        raise ValueError(f"ordered pattern: {n_sites} sites cannot pin both ends "
                         f"with period {k}")
    bits = np.zeros(n_sites, dtype=np.uint8)
    bits[::k] = 1
    return bits


def phase_overlap(state: MatrixProductState, order: int) -> float:
    """|<pattern|Psi>|^2 against the end-pinned Z_k crystal product state."""
    bits = ordered_pattern_bits(state.n_sites, order)
    amp = amplitude(state, bits)
    val = abs(amp) ** 2 / norm_squared(state)
    return float(min(max(val, 0.0), 1.0))
