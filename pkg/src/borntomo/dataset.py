"""Projective-measurement datasets.

Simulates computational-basis measurements of a basis-rotated state, holds
the resulting bitstring collections, computes empirical entropies, and runs
the sample-size convergence study. Bit value '1' is the excited / -1
eigenvalue outcome.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from .mps import (MatrixProductState, PauliBasis, expectation_local,
                  full_distribution, rotate_basis, sample)
from .rng import derive_rng

DEFAULT_SHOTS = 30_000

_NUMBER_OP = np.array([[0.0, 0.0], [0.0, 1.0]], dtype=np.complex128)


@dataclass
class MeasurementDataset:
    """Shots from one global Pauli basis, one bitstring per row."""

    n_sites: int
    basis: PauliBasis
    shots: NDArray                      # (n_shots, n_sites) uint8
    seed: int

    def __post_init__(self):
        self.shots = np.ascontiguousarray(self.shots, dtype=np.uint8)
        if self.shots.ndim != 2 or self.shots.shape[1] != self.n_sites:
            raise ValueError(f"shots shape {self.shots.shape} does not match "
                             f"{self.n_sites} sites")
        if self.shots.shape[0] == 0:
            raise ValueError("MeasurementDataset: needs at least one shot")
        if np.any(self.shots > 1):
            raise ValueError("MeasurementDataset: shots must be 0/1")

    @property
    def n_shots(self) -> int:
        return self.shots.shape[0]

    def bitstrings(self) -> list[str]:
        return ["".join("1" if b else "0" for b in row) for row in self.shots]


@dataclass
class EmpiricalDistribution:
    """Relative frequencies over observed bitstrings."""

    probs: dict[str, float]
    n_sites: int

    def __post_init__(self):
        if not self.probs:
            raise ValueError("EmpiricalDistribution: empty support")
        total = sum(self.probs.values())
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"EmpiricalDistribution: probabilities sum to {total}")
        if any(p <= 0 for p in self.probs.values()):
            raise ValueError("EmpiricalDistribution: probabilities must be > 0")

    @property
    def support_size(self) -> int:
        return len(self.probs)


def simulate_measurements(state: MatrixProductState, basis: PauliBasis,
                          n: int = DEFAULT_SHOTS, seed: int = 0) -> MeasurementDataset:
    """Rotate into the basis, then draw n computational-basis shots."""
    if n < 1:
        raise ValueError("simulate_measurements: need n >= 1")
    rng = derive_rng(seed, "measure", basis.axis)
    rotated = rotate_basis(state, basis)
    shots = sample(rotated, n, rng)
    return MeasurementDataset(n_sites=state.n_sites, basis=basis, shots=shots,
                              seed=seed)


def empirical_distribution(d: MeasurementDataset) -> EmpiricalDistribution:
    rows, counts = np.unique(d.shots, axis=0, return_counts=True)
    total = counts.sum()
    probs = {"".join("1" if b else "0" for b in row): c / total
             for row, c in zip(rows, counts)}
    return EmpiricalDistribution(probs=probs, n_sites=d.n_sites)


def shannon_entropy(p: EmpiricalDistribution) -> float:
    """S = -sum p ln p (natural log)."""
    vals = np.fromiter(p.probs.values(), dtype=np.float64)
    return float(-np.sum(vals * np.log(vals)))


def renyi_entropy(p: EmpiricalDistribution, alpha: float) -> float:
    """H_alpha = ln(sum p^alpha) / (1 - alpha); alpha=1 is the Shannon limit."""
    if alpha <= 0:
        raise ValueError("renyi_entropy: alpha must be > 0")
    if alpha == 1.0:
        return shannon_entropy(p)
    vals = np.fromiter(p.probs.values(), dtype=np.float64)
    return float(np.log(np.sum(vals ** alpha)) / (1.0 - alpha))


def _entropy_from_probs(vals: NDArray, alpha: float) -> float:
    vals = vals[vals > 0]
    if alpha == 1.0:
        return float(-np.sum(vals * np.log(vals)))
    return float(np.log(np.sum(vals ** alpha)) / (1.0 - alpha))


@dataclass
class ConvergenceReport:
    """Cumulative observable traces for the sample-size study."""

    checkpoints: NDArray                         # shot counts
    traces: dict[str, NDArray]                   # observable -> (trajectories, checkpoints)
    targets: dict[str, float]
    tolerance: float
    converged_at: dict[str, int | None] = field(default_factory=dict)
    overall_converged_at: int | None = None


_MC_OBSERVABLES = ("magnetization", "renyi1", "renyi2")


def monte_carlo_convergence(state: MatrixProductState,
                            observables=_MC_OBSERVABLES,
                            total: int = 100_000, checkpoint: int = 1_000,
                            trajectories: int = 50, tolerance: float = 0.01,
                            seed: int = 0) -> ConvergenceReport:
    """Track cumulative Z-basis estimates against exact targets.

    Reports, per observable, the first checkpoint from which every
    trajectory stays within +-tolerance (relative) of the exact value for
    the rest of the run.
    """
    if total % checkpoint != 0:
        raise ValueError("monte_carlo_convergence: checkpoint must divide total")
    unknown = set(observables) - set(_MC_OBSERVABLES)
    if unknown:
        raise ValueError(f"monte_carlo_convergence: unknown observables {unknown}")
    n = state.n_sites
    exact_p = full_distribution(state)
    targets = {}
    if "magnetization" in observables:
        ns = [expectation_local(state, _NUMBER_OP, i) for i in range(n)]
        targets["magnetization"] = float(np.mean([0.5 - v for v in ns]))
    if "renyi1" in observables:
        targets["renyi1"] = _entropy_from_probs(exact_p, 1.0)
    if "renyi2" in observables:
        targets["renyi2"] = _entropy_from_probs(exact_p, 2.0)

    n_checks = total // checkpoint
    checkpoints = checkpoint * np.arange(1, n_checks + 1)
    traces = {obs: np.zeros((trajectories, n_checks)) for obs in observables}
    weights = 1 << np.arange(n - 1, -1, -1, dtype=np.int64)
    for t in range(trajectories):
        rng = derive_rng(seed, "mc-trajectory", t)
        shots = sample(state, total, rng)
        packed = shots.astype(np.int64) @ weights
        counts = np.zeros(2 ** n, dtype=np.int64)
        mag_sum = 0.0
        for c in range(n_checks):
            chunk = slice(c * checkpoint, (c + 1) * checkpoint)
            np.add.at(counts, packed[chunk], 1)
            mag_sum += np.sum(0.5 - shots[chunk].mean(axis=1))
            seen = c * checkpoint + checkpoint
            freqs = counts / seen
            if "magnetization" in traces:
                traces["magnetization"][t, c] = mag_sum / seen
            if "renyi1" in traces:
                traces["renyi1"][t, c] = _entropy_from_probs(freqs, 1.0)
            if "renyi2" in traces:
                traces["renyi2"][t, c] = _entropy_from_probs(freqs, 2.0)

    converged_at: dict[str, int | None] = {}
    for obs in observables:
        target = targets[obs]
        band = tolerance * max(abs(target), 1e-12)
        ok = np.abs(traces[obs] - target) <= band       # (T, C)
        stays = np.logical_and.accumulate(ok[:, ::-1], axis=1)[:, ::-1]
        all_traj = stays.all(axis=0)
        idx = np.flatnonzero(all_traj)
        converged_at[obs] = int(checkpoints[idx[0]]) if idx.size else None
    overall = None
    if all(v is not None for v in converged_at.values()):
        overall = max(converged_at.values())
    return ConvergenceReport(checkpoints=checkpoints, traces=traces,
                             targets=targets, tolerance=tolerance,
                             converged_at=converged_at,
                             overall_converged_at=overall)


def write_convergence_csv(report: ConvergenceReport, path: str) -> None:
    """One row per (trajectory, checkpoint, observable)."""
    lines = ["trajectory,checkpoint,observable,value"]
    for obs in sorted(report.traces):
        arr = report.traces[obs]
        for t in range(arr.shape[0]):
            for c, shots in enumerate(report.checkpoints):
                lines.append(f"{t},{int(shots)},{obs},{arr[t, c]:.12g}")
    atomic_write_text(path, "\n".join(lines) + "\n")


def atomic_write_text(path: str, text: str) -> None:
    """Write-then-rename so partial output never lands on the final path."""
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)


def write_dataset(d: MeasurementDataset, path: str) -> None:
    """Text format: one header line, then one '0'/'1' bitstring per line."""
    header = f"# n_sites={d.n_sites} basis={d.basis.axis} seed={d.seed}"
    body = "\n".join(d.bitstrings())
    atomic_write_text(path, header + "\n" + body + "\n")


def read_dataset(path: str) -> MeasurementDataset:
    """Parse a dataset file written by write_dataset."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or not lines[0].startswith("# "):
        raise ValueError(f"{path}: line 1: missing dataset header")
    fields = {}
    for token in lines[0][2:].split():
        if "=" not in token:
            raise ValueError(f"{path}: line 1: malformed header token {token!r}")
        key, value = token.split("=", 1)
        fields[key] = value
    try:
        n_sites = int(fields["n_sites"])
        axis = fields["basis"]
        seed = int(fields["seed"])
    except (KeyError, ValueError) as exc:
        raise ValueError(f"{path}: line 1: malformed header ({exc})") from exc
    if seed < 0:
        raise ValueError(f"{path}: line 1: seed must be non-negative")
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line:
            continue
        if len(line) != n_sites:
            raise ValueError(f"{path}: line {lineno}: expected {n_sites} bits, "
                             f"got {len(line)}")
        bad = set(line) - {"0", "1"}
        if bad:
            raise ValueError(f"{path}: line {lineno}: illegal character "
                             f"{sorted(bad)[0]!r}")
        rows.append(np.frombuffer(line.encode("ascii"), dtype=np.uint8) - ord("0"))
    if not rows:
        raise ValueError(f"{path}: no shots found")
    return MeasurementDataset(n_sites=n_sites, basis=PauliBasis(axis),
                              shots=np.array(rows, dtype=np.uint8), seed=seed)


def validate_balanced(datasets: list[MeasurementDataset]) -> None:
    """Multi-basis training inputs must have equal per-basis sizes."""
    sizes = {d.basis.axis: d.n_shots for d in datasets}
    if len({d.basis.axis for d in datasets}) != len(datasets):
        raise ValueError("validate_balanced: duplicate basis in dataset list")
    if len(set(sizes.values())) > 1:
        raise ValueError(f"validate_balanced: dataset sizes differ across bases: {sizes}")
