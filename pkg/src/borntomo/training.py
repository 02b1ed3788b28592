"""Born-machine training.

The model is an unnormalized MPS wavefunction; Born probabilities are
P(v) = |psi_b(v)|^2 / Z with psi_b the basis-rotated amplitude and Z the
shared norm. The loss is the summed per-basis negative log likelihood.
Gradients are analytic: per-sample environment contractions for the
log-amplitude term plus the exact normalization term, packaged so that the
real and imaginary components of the returned arrays are the partial
derivatives with respect to the real and imaginary parts of each tensor
entry.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from .dataset import (MeasurementDataset, empirical_distribution,
                      shannon_entropy, validate_balanced)
from .mps import (MatrixProductState, PauliBasis, entanglement_spectrum,
                  inner_product, norm_squared)
from .rng import derive_rng

PROBABILITY_FLOOR = 1e-300


class InfiniteLossError(RuntimeError):
    """A training configuration was assigned exactly zero probability."""


class TrainingDiverged(RuntimeError):
    """Loss became non-finite; carries a snapshot of the failing step."""

    def __init__(self, message: str, epoch: int, step: int, batches=None):
        super().__init__(message)
        self.epoch = epoch
        self.step = step
        self.batches = batches


@dataclass
class BornMachine:
    """Trainable MPS wavefunction with uniform interior bond dimension."""

    psi: MatrixProductState
    complex_valued: bool
    bond_dim: int

    def __post_init__(self):
        n = self.psi.n_sites
        for k, t in enumerate(self.psi.sites):
            dl = 1 if k == 0 else self.bond_dim
            dr = 1 if k == n - 1 else self.bond_dim
            if t.shape != (dl, 2, dr):
                raise ValueError(f"BornMachine: site {k} has shape {t.shape}, "
                                 f"expected ({dl}, 2, {dr})")
        if self.complex_valued != self.psi.complex_valued:
            raise ValueError("BornMachine: complex_valued flag disagrees with MPS")

    @property
    def n_sites(self) -> int:
        return self.psi.n_sites

    @property
    def n_parameters(self) -> int:
        scale = 2 if self.complex_valued else 1
        return scale * sum(t.size for t in self.psi.sites)


@dataclass(frozen=True)
class TrainConfig:
    bases: tuple[str, ...] = ("z",)
    learning_rate: float = 1e-3
    batch_size: int = 500
    epochs: int = 100
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    grad_clip: float | None = None
    plateau_window: int = 10          # <= 0 disables early stopping
    plateau_tol: float = 1e-5
    track_spectrum_cut: int | None = None

    def __post_init__(self):
        axes = tuple(str(b).lower() for b in self.bases)
        object.__setattr__(self, "bases", axes)
        if not axes or len(set(axes)) != len(axes) or set(axes) - {"x", "y", "z"}:
            raise ValueError(f"TrainConfig: bases must be distinct Pauli axes, got {axes}")
        if self.learning_rate < 0:
            raise ValueError("TrainConfig: learning_rate must be >= 0")
        if self.batch_size < 1:
            raise ValueError("TrainConfig: batch_size must be >= 1")
        if self.epochs < 1:
            raise ValueError("TrainConfig: epochs must be >= 1")


@dataclass
class EpochRecord:
    epoch: int
    loss: float
    loss_minus_entropy: float
    fidelity: float | None
    spectrum: NDArray | None
    wall_time: float


@dataclass
class TrainHistory:
    records: list[EpochRecord] = field(default_factory=list)
    entropy_sum: float = 0.0
    stopped_early: bool = False

    @property
    def losses(self) -> list[float]:
        return [r.loss for r in self.records]

    def to_csv(self) -> str:
        """Per-epoch trace; wall time stays out so reruns are byte-identical."""
        lines = ["epoch,loss,loss_minus_entropy,fidelity,lambda1,lambda2"]
        for r in self.records:
            fid = f"{r.fidelity:.12g}" if r.fidelity is not None else ""
            l1 = l2 = ""
            if r.spectrum is not None and len(r.spectrum) >= 1:
                l1 = f"{r.spectrum[0]:.12g}"
                l2 = f"{r.spectrum[1]:.12g}" if len(r.spectrum) >= 2 else "0"
            lines.append(f"{r.epoch},{r.loss:.12g},{r.loss_minus_entropy:.12g},"
                         f"{fid},{l1},{l2}")
        return "\n".join(lines) + "\n"


def init_model(n_sites: int, bond_dim: int, complex_valued: bool,
               seed: int = 0) -> BornMachine:
    """Random model with every real (and imaginary) part uniform in [0, 1)."""
    if n_sites < 2:
        raise ValueError("init_model: need n_sites >= 2")
    if bond_dim < 1:
        raise ValueError("init_model: need bond_dim >= 1")
    rng = derive_rng(seed, "init")
    sites = []
    for k in range(n_sites):
        dl = 1 if k == 0 else bond_dim
        dr = 1 if k == n_sites - 1 else bond_dim
        t = rng.random((dl, 2, dr)).astype(np.complex128)
        if complex_valued:
            t = t + 1j * rng.random((dl, 2, dr))
        sites.append(t)
    psi = MatrixProductState(sites, complex_valued=complex_valued)
    return BornMachine(psi=psi, complex_valued=complex_valued, bond_dim=bond_dim)


def _normalize_batches(model: BornMachine, batches) -> dict[str, NDArray]:
    """Accept {axis: bits} with bits as (B, N) arrays or bitstring lists."""
    out = {}
    for key in batches:
        axis = key.axis if isinstance(key, PauliBasis) else str(key).lower()
        if axis not in ("x", "y", "z"):
            raise ValueError(f"unknown basis {key!r}")
        raw = batches[key]
        if isinstance(raw, np.ndarray):
            arr = raw
        else:
            rows = [np.frombuffer(s.encode("ascii"), dtype=np.uint8) - ord("0")
                    if isinstance(s, str) else np.asarray(s, dtype=np.uint8)
                    for s in raw]
            arr = np.array(rows, dtype=np.uint8)
        arr = np.asarray(arr, dtype=np.int64)
        if arr.ndim != 2 or arr.shape[1] != model.n_sites or arr.shape[0] == 0:
            raise ValueError(f"basis {axis}: batch shape {arr.shape} invalid for "
                             f"{model.n_sites} sites")
        out[axis] = arr
    if not out:
        raise ValueError("nll: need at least one basis batch")
    return out


def _rotated_sites(sites: list[NDArray], axis: str) -> tuple[list[NDArray], NDArray]:
    """Basis-rotated site tensors in (2, D_left, D_right) layout.

    The physical index comes first so a measured bit column selects a
    (batch, D_left, D_right) stack with a single fancy index.
    """
    gate = PauliBasis(axis).rotation_gate()
    out = []
    for t in sites:
        dl, _, dr = t.shape
        st = t.transpose(1, 0, 2)
        if gate is None:
            out.append(np.ascontiguousarray(st))
        else:
            out.append((gate @ st.reshape(2, dl * dr)).reshape(2, dl, dr))
    return out, (np.eye(2, dtype=np.complex128) if gate is None else gate)


def _loss_and_grad(model: BornMachine, batches: dict[str, NDArray],
                   want_grad: bool):
    """Shared evaluation of the multi-basis NLL and its analytic gradient.

    All contractions are phrased as reshaped matrix products; at these
    tensor sizes einsum's per-call path search would dominate the runtime.
    """
    sites = model.psi.sites
    n = model.n_sites

    # Norm and its environments from the unrotated tensors.
    lefts = [np.ones((1, 1), dtype=np.complex128)]
    for t in sites:
        dl, _, dr = t.shape
        u = (lefts[-1] @ t.reshape(dl, 2 * dr)).reshape(dl * 2, dr)
        lefts.append(t.conj().reshape(dl * 2, dr).T @ u)
    z = lefts[-1][0, 0].real
    if z <= 0.0 or not np.isfinite(z):
        if z == 0.0:
            raise InfiniteLossError("model norm is exactly zero")
        return np.nan, None
    rights = [None] * (n + 1)
    grads = None
    if want_grad:
        rights[n] = np.ones((1, 1), dtype=np.complex128)
        for k in range(n - 1, -1, -1):
            t = sites[k]
            dl, _, dr = t.shape
            v = t.reshape(dl * 2, dr) @ rights[k + 1].T
            rights[k] = t.conj().reshape(dl, 2 * dr) @ v.reshape(dl, 2 * dr).T
        grads = [np.zeros_like(t) for t in sites]

    loss = 0.0
    norm_weight = 0.0
    for axis in sorted(batches):
        bits = batches[axis]
        b = bits.shape[0]
        rs, gate = _rotated_sites(sites, axis)
        picked = [rs[k][bits[:, k]] for k in range(n)]

        lp = [np.ones((b, 1), dtype=np.complex128)]
        for k in range(n):
            lp.append((lp[-1][:, None, :] @ picked[k])[:, 0, :])
        psi_v = lp[-1][:, 0]
        p = np.abs(psi_v) ** 2 / z
        if np.any(p == 0.0):
            raise InfiniteLossError(
                f"basis {axis}: {int(np.sum(p == 0.0))} configurations have "
                f"exactly zero probability")
        floored = p < PROBABILITY_FLOOR
        if np.any(floored):
            warnings.warn(f"basis {axis}: {int(floored.sum())} probabilities "
                          f"floored at {PROBABILITY_FLOOR:g}", RuntimeWarning)
            p = np.maximum(p, PROBABILITY_FLOOR)
        loss += float(-np.mean(np.log(p)))
        live = float(np.mean(~floored))   # floored terms are constants
        norm_weight += live

        if not want_grad:
            continue
        rp = [None] * (n + 1)
        rp[n] = np.ones((b, 1), dtype=np.complex128)
        for k in range(n - 1, -1, -1):
            rp[k] = (picked[k] @ rp[k + 1][:, :, None])[:, :, 0]
        coef = np.where(floored, 0.0, -(2.0 / b) / psi_v)
        for k in range(n):
            gk = gate[bits[:, k], :]
            for s in (0, 1):
                w = coef * gk[:, s]
                grads[k][:, s, :] += (lp[k].T @ (w[:, None] * rp[k + 1])).conj()

    if want_grad:
        for k in range(n):
            t = sites[k]
            dl, _, dr = t.shape
            u = (lefts[k] @ t.reshape(dl, 2 * dr)).reshape(dl * 2, dr)
            env = (u @ rights[k + 1].T).reshape(dl, 2, dr)
            grads[k] += (2.0 * norm_weight / z) * env
        if not model.complex_valued:
            grads = [g.real.copy() for g in grads]
    return loss, grads


def nll_loss(model: BornMachine, batches) -> float:
    """Summed per-basis NLL, each term including the shared ln Z."""
    loss, _ = _loss_and_grad(model, _normalize_batches(model, batches),
                             want_grad=False)
    if not np.isfinite(loss):
        raise InfiniteLossError("loss is non-finite")
    return loss


def nll_gradient(model: BornMachine, batches) -> list[NDArray]:
    """Analytic loss gradient, one array per site tensor.

    For complex models the real/imaginary components are the derivatives
    with respect to the real/imaginary parts of each entry (the conjugate
    steepest-descent packaging); real models get plain real arrays.
    """
    loss, grads = _loss_and_grad(model, _normalize_batches(model, batches),
                                 want_grad=True)
    if not np.isfinite(loss):
        raise InfiniteLossError("loss is non-finite")
    return grads


@dataclass
class AdamState:
    step: int
    m: NDArray
    v: NDArray

    @classmethod
    def zeros(cls, n: int) -> "AdamState":
        return cls(step=0, m=np.zeros(n), v=np.zeros(n))


def adam_step(params: NDArray, grads: NDArray, state: AdamState,
              learning_rate: float, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> tuple[NDArray, AdamState]:
    """One bias-corrected Adam update on flat real parameter vectors."""
    if params.shape != grads.shape or params.shape != state.m.shape:
        raise ValueError("adam_step: shape mismatch between params/grads/state")
    t = state.step + 1
    m = beta1 * state.m + (1.0 - beta1) * grads
    v = beta2 * state.v + (1.0 - beta2) * grads * grads
    m_hat = m / (1.0 - beta1 ** t)
    v_hat = v / (1.0 - beta2 ** t)
    new = params - learning_rate * m_hat / (np.sqrt(v_hat) + eps)
    return new, AdamState(step=t, m=m, v=v)


def _pack_params(model: BornMachine) -> NDArray:
    if model.complex_valued:
        return np.concatenate([t.view(np.float64).ravel() for t in model.psi.sites])
    return np.concatenate([t.real.ravel() for t in model.psi.sites])


def _pack_grads(model: BornMachine, grads: list[NDArray]) -> NDArray:
    if model.complex_valued:
        return np.concatenate(
            [np.ascontiguousarray(g, dtype=np.complex128).view(np.float64).ravel()
             for g in grads])
    return np.concatenate([np.asarray(g).real.ravel() for g in grads])


def _unpack_params(model: BornMachine, flat: NDArray) -> None:
    off = 0
    for t in model.psi.sites:
        size = t.size
        if model.complex_valued:
            chunk = flat[off:off + 2 * size]
            t[...] = (chunk[0::2] + 1j * chunk[1::2]).reshape(t.shape)
            off += 2 * size
        else:
            t[...] = flat[off:off + size].reshape(t.shape)
            off += size


def batches_from_datasets(datasets: list[MeasurementDataset]) -> dict[str, NDArray]:
    return {d.basis.axis: d.shots.astype(np.int64) for d in datasets}


def train(model: BornMachine, datasets: list[MeasurementDataset],
          config: TrainConfig, reference: MatrixProductState | None = None,
          ) -> tuple[BornMachine, TrainHistory]:
    """Epochs of lockstep per-basis mini-batches with Adam updates.

    Records the full-dataset loss (and loss minus the summed data
    entropies) each epoch, plus quantum fidelity against the reference and
    the half-chain entanglement spectrum when requested.
    """
    data_axes = {d.basis.axis for d in datasets}
    if data_axes != set(config.bases):
        raise ValueError(f"train: dataset bases {sorted(data_axes)} do not match "
                         f"config bases {sorted(config.bases)}")
    if any(d.n_sites != model.n_sites for d in datasets):
        raise ValueError("train: dataset size does not match model sites")
    validate_balanced(datasets)

    shots = {d.basis.axis: d.shots.astype(np.int64) for d in datasets}
    full_batches = dict(shots)
    entropy_sum = float(sum(shannon_entropy(empirical_distribution(d))
                            for d in datasets))
    n_per_basis = next(iter(shots.values())).shape[0]
    batch = min(config.batch_size, n_per_basis)
    steps = max(1, n_per_basis // batch)
    axes = sorted(shots)

    ref_z = norm_squared(reference) if reference is not None else None
    rng = derive_rng(config.seed, "train")
    params = _pack_params(model)
    adam = AdamState.zeros(params.size)
    history = TrainHistory(entropy_sum=entropy_sum)

    for epoch in range(config.epochs):
        tic = time.perf_counter()
        perms = {axis: rng.permutation(n_per_basis) for axis in axes}
        for step in range(steps):
            sel = slice(step * batch, (step + 1) * batch)
            batches = {axis: shots[axis][perms[axis][sel]] for axis in axes}
            step_loss, grads = _loss_and_grad(model, batches, want_grad=True)
            if not np.isfinite(step_loss):
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch}, step {step}",
                    epoch=epoch, step=step, batches=batches)
            flat_g = _pack_grads(model, grads)
            if config.grad_clip is not None:
                gnorm = float(np.linalg.norm(flat_g))
                if gnorm > config.grad_clip:
                    flat_g = flat_g * (config.grad_clip / gnorm)
            params, adam = adam_step(params, flat_g, adam, config.learning_rate,
                                     config.beta1, config.beta2, config.eps)
            _unpack_params(model, params)

        full_loss, _ = _loss_and_grad(model, full_batches, want_grad=False)
        if not np.isfinite(full_loss):
            raise TrainingDiverged(f"non-finite loss at epoch {epoch} evaluation",
                                   epoch=epoch, step=steps - 1)
        fid = None
        if reference is not None:
            z = norm_squared(model.psi)
            fid = abs(inner_product(reference, model.psi)) ** 2 / (ref_z * z)
        spectrum = None
        if config.track_spectrum_cut is not None:
            spectrum = entanglement_spectrum(model.psi, config.track_spectrum_cut)
        history.records.append(EpochRecord(
            epoch=epoch, loss=full_loss,
            loss_minus_entropy=full_loss - entropy_sum, fidelity=fid,
            spectrum=spectrum, wall_time=time.perf_counter() - tic))

        if config.plateau_window > 0 and epoch >= config.plateau_window:
            then = history.records[-1 - config.plateau_window].loss
            if then - full_loss < config.plateau_tol:
                history.stopped_early = True
                break
    return model, history
