"""Basis-enhanced Born machines for pure-state tomography of 1D chains.

Complex-valued MPS generative models trained on projective-measurement
bitstrings from one or more global Pauli bases, together with the
ground-truth solvers (exact diagonalization, two-site DMRG), measurement
simulators, evaluation metrics, and a batch CLI.
"""

from .dataset import (EmpiricalDistribution, MeasurementDataset,
                      empirical_distribution, monte_carlo_convergence,
                      read_dataset, renyi_entropy, shannon_entropy,
                      simulate_measurements, write_dataset)
from .groundtruth import (CriticalPointEstimate, GroundStateResult, SweepLine,
                          adiabatic_sweep, dmrg_ground_state,
                          exact_ground_state, locate_critical_point,
                          phase_overlap, xy_field_sweep)
from .metrics import (MetricsReport, classical_fidelity, correlation_function,
                      correlation_table, evaluate, magnetization,
                      quantum_fidelity)
from .models import (MatrixProductOperator, RydbergParams, XYParams,
                     mpo_expectation, rydberg_dense, rydberg_mpo, xy_dense,
                     xy_mpo)
from .mps import (MatrixProductState, PauliBasis, amplitude,
                  bipartite_entropy, canonicalize, entanglement_spectrum,
                  from_statevector, inner_product, load_mps, norm_squared,
                  product_state, random_mps, rotate_basis, sample, save_mps)
from .training import (AdamState, BornMachine, InfiniteLossError, TrainConfig,
                       TrainHistory, TrainingDiverged, adam_step, init_model,
                       nll_gradient, nll_loss, train)

__version__ = "0.1.0"

__all__ = [
    "AdamState", "BornMachine", "CriticalPointEstimate",
    "EmpiricalDistribution", "GroundStateResult", "InfiniteLossError",
    "MatrixProductOperator", "MatrixProductState", "MeasurementDataset",
    "MetricsReport", "PauliBasis", "RydbergParams", "SweepLine",
    "TrainConfig", "TrainHistory", "TrainingDiverged", "XYParams",
    "adam_step", "adiabatic_sweep", "amplitude", "bipartite_entropy",
    "canonicalize", "classical_fidelity", "correlation_function",
    "correlation_table", "dmrg_ground_state", "empirical_distribution",
    "entanglement_spectrum", "evaluate", "exact_ground_state",
    "from_statevector", "init_model", "inner_product", "load_mps",
    "locate_critical_point", "magnetization", "monte_carlo_convergence",
    "mpo_expectation", "nll_gradient", "nll_loss", "norm_squared",
    "phase_overlap", "product_state", "quantum_fidelity", "random_mps",
    "read_dataset", "renyi_entropy", "rotate_basis", "rydberg_dense",
    "rydberg_mpo", "sample", "save_mps", "shannon_entropy",
    "simulate_measurements", "train", "write_dataset", "xy_dense",
    "xy_field_sweep", "xy_mpo",
]
