"""NLL loss/gradient against dense brute force and finite differences."""

from __future__ import annotations

import numpy as np
import pytest

from borntomo.dataset import simulate_measurements
from borntomo.mps import PauliBasis, product_state, random_mps
from borntomo.rng import derive_rng
from borntomo.training import (AdamState, BornMachine, InfiniteLossError,
                               TrainConfig, TrainHistory, TrainingDiverged,
                               _pack_grads, _pack_params, _unpack_params,
                               adam_step, batches_from_datasets, init_model,
                               nll_gradient, nll_loss, train)

from conftest import HADAMARD_GATES, dense_vector, numeric_nll_gradient

ALL_SUBSETS = (("z",), ("x",), ("y",), ("x", "z"), ("y", "z"), ("x", "y"))


def _brute_loss(model: BornMachine, batches: dict[str, np.ndarray]) -> float:
    """NLL from the full rotated distributions, computed densely."""
    n = model.n_sites
    vec = dense_vector(model.psi.sites)
    z = np.vdot(vec, vec).real
    weights = 1 << np.arange(n - 1, -1, -1)
    total = 0.0
    for axis, bits in batches.items():
        rotated = HADAMARD_GATES[axis](n) @ vec
        probs = np.abs(rotated) ** 2 / z
        idx = np.asarray(bits) @ weights
        total += float(-np.mean(np.log(probs[idx])))
    return total


def _random_batches(model, axes, rng, size=64):
    return {a: rng.integers(0, 2, size=(size, model.n_sites)) for a in axes}


# ---------------------------------------------------------- model and config

def test_init_model_is_deterministic_and_bounded():
    a = init_model(5, 3, True, seed=7)
    b = init_model(5, 3, True, seed=7)
    c = init_model(5, 3, True, seed=8)
    assert a.n_parameters == 2 * sum(t.size for t in a.psi.sites)
    for ta, tb in zip(a.psi.sites, b.psi.sites):
        np.testing.assert_array_equal(ta, tb)
    assert any(not np.array_equal(ta, tc)
               for ta, tc in zip(a.psi.sites, c.psi.sites))
    for t in a.psi.sites:
        assert np.all((t.real >= 0) & (t.real < 1))
        assert np.all((t.imag >= 0) & (t.imag < 1))
    real = init_model(4, 2, False, seed=0)
    assert real.n_parameters == sum(t.size for t in real.psi.sites)
    assert not real.psi.complex_valued


def test_init_model_validation():
    with pytest.raises(ValueError):
        init_model(1, 2, True)
    with pytest.raises(ValueError):
        init_model(4, 0, True)


def test_born_machine_validation():
    psi = random_mps(4, 3, derive_rng(0, "bm"))
    with pytest.raises(ValueError, match="site 0"):
        BornMachine(psi=psi, complex_valued=True, bond_dim=2)
    with pytest.raises(ValueError, match="disagrees"):
        BornMachine(psi=psi, complex_valued=False, bond_dim=3)


def test_train_config_validation():
    with pytest.raises(ValueError, match="distinct Pauli axes"):
        TrainConfig(bases=())
    with pytest.raises(ValueError, match="distinct Pauli axes"):
        TrainConfig(bases=("z", "z"))
    with pytest.raises(ValueError, match="distinct Pauli axes"):
        TrainConfig(bases=("q",))
    with pytest.raises(ValueError, match="learning_rate"):
        TrainConfig(learning_rate=-0.1)
    with pytest.raises(ValueError, match="batch_size"):
        TrainConfig(batch_size=0)
    with pytest.raises(ValueError, match="epochs"):
        TrainConfig(epochs=0)
    assert TrainConfig(bases=("X", "Z")).bases == ("x", "z")


# ----------------------------------------------------------------- the loss

@pytest.mark.parametrize("axes", ALL_SUBSETS)
@pytest.mark.parametrize("complex_valued", [False, True])
def test_nll_matches_dense_oracle(axes, complex_valued):
    model = init_model(5, 3, complex_valued, seed=len(axes))
    rng = derive_rng(11, "loss-batches", *axes)
    batches = _random_batches(model, axes, rng)
    assert nll_loss(model, batches) == pytest.approx(
        _brute_loss(model, batches), rel=1e-10)


def test_nll_accepts_bitstring_lists_and_basis_keys():
    model = init_model(4, 2, True, seed=3)
    arr = derive_rng(4, "mixed").integers(0, 2, size=(10, 4))
    as_strings = ["".join(str(b) for b in row) for row in arr]
    a = nll_loss(model, {"z": arr})
    b = nll_loss(model, {PauliBasis("z"): as_strings})
    assert a == pytest.approx(b, rel=1e-14)


def test_nll_input_validation():
    model = init_model(4, 2, True, seed=0)
    with pytest.raises(ValueError, match="unknown basis"):
        nll_loss(model, {"w": np.zeros((2, 4), dtype=np.int64)})
    with pytest.raises(ValueError, match="invalid"):
        nll_loss(model, {"z": np.zeros((2, 3), dtype=np.int64)})
    with pytest.raises(ValueError, match="at least one"):
        nll_loss(model, {})


def test_nll_bounded_below_by_empirical_entropy():
    # cross-entropy >= entropy of the data's empirical distribution
    from borntomo.dataset import empirical_distribution, shannon_entropy
    ref = random_mps(5, 4, derive_rng(21, "ref"))
    entropy = 0.0
    batches = {}
    for axis in ("x", "z"):
        d = simulate_measurements(ref, PauliBasis(axis), 800, seed=5)
        entropy += shannon_entropy(empirical_distribution(d))
        batches[axis] = d.shots.astype(np.int64)
    for seed in range(4):
        model = init_model(5, 3, True, seed=seed)
        assert nll_loss(model, batches) >= entropy - 1e-9


def test_nll_perfect_model_hits_zero_loss_and_gradient():
    bits = [0, 1, 1, 0]
    model = BornMachine(psi=product_state(bits), complex_valued=True, bond_dim=1)
    batch = {"z": np.tile(bits, (16, 1))}
    assert nll_loss(model, batch) == pytest.approx(0.0, abs=1e-12)
    flat = _pack_grads(model, nll_gradient(model, batch))
    assert np.abs(flat).max() < 1e-12


def test_nll_floors_tiny_probabilities():
    # below PROBABILITY_FLOOR but nonzero: clamped with a warning
    psi = product_state([0, 0, 0])
    for t in psi.sites:
        t[0, 1, 0] = 2e-51       # p(111) ~ 6e-305
    model = BornMachine(psi=psi, complex_valued=True, bond_dim=1)
    with pytest.warns(RuntimeWarning, match="floored"):
        loss = nll_loss(model, {"z": np.array([[1, 1, 1]])})
    assert loss == pytest.approx(-np.log(1e-300), rel=1e-9)


def test_nll_zero_probability_raises():
    model = BornMachine(psi=product_state([0, 0, 0]), complex_valued=True,
                        bond_dim=1)
    with pytest.raises(InfiniteLossError, match="zero probability"):
        nll_loss(model, {"z": np.array([[1, 1, 1]])})


# ------------------------------------------------------------- the gradient

@pytest.mark.parametrize("axes", ALL_SUBSETS)
@pytest.mark.parametrize("complex_valued", [False, True])
def test_gradient_matches_finite_differences(axes, complex_valued):
    model = init_model(4, 3, complex_valued, seed=29 + len(axes))
    rng = derive_rng(31, "grad-batches", *axes, complex_valued)
    batches = _random_batches(model, axes, rng, size=48)
    analytic = _pack_grads(model, nll_gradient(model, batches))
    numeric = numeric_nll_gradient(model, batches)
    np.testing.assert_allclose(analytic, numeric, rtol=1e-6, atol=1e-8)


def test_real_model_gradient_is_real():
    model = init_model(4, 2, False, seed=2)
    batches = _random_batches(model, ("x", "z"), derive_rng(1, "rg"))
    for g in nll_gradient(model, batches):
        assert np.abs(np.asarray(g).imag).max() == 0.0


# --------------------------------------------------------------------- Adam

def test_adam_step_matches_reference_recurrence():
    rng = derive_rng(5, "adam")
    params = rng.standard_normal(12)
    state = AdamState.zeros(12)
    m = np.zeros(12)
    v = np.zeros(12)
    lr, b1, b2, eps = 0.01, 0.9, 0.999, 1e-8
    for t in range(1, 6):
        g = rng.standard_normal(12)
        params_new, state = adam_step(params, g, state, lr, b1, b2, eps)
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        expect = params - lr * (m / (1 - b1**t)) / (np.sqrt(v / (1 - b2**t)) + eps)
        np.testing.assert_allclose(params_new, expect, atol=1e-15)
        assert state.step == t
        params = params_new


def test_adam_first_step_is_learning_rate_sized():
    params = np.zeros(4)
    g = np.array([100.0, -5.0, 0.3, -0.001])
    new, _ = adam_step(params, g, AdamState.zeros(4), 0.001)
    np.testing.assert_allclose(new, -0.001 * np.sign(g), rtol=1e-4)


def test_adam_shape_validation():
    with pytest.raises(ValueError, match="shape"):
        adam_step(np.zeros(3), np.zeros(4), AdamState.zeros(3), 0.1)


def test_pack_unpack_round_trip():
    for complex_valued in (False, True):
        model = init_model(5, 3, complex_valued, seed=6)
        before = [t.copy() for t in model.psi.sites]
        flat = _pack_params(model)
        _unpack_params(model, flat * 2.0)
        _unpack_params(model, flat)
        for t, orig in zip(model.psi.sites, before):
            np.testing.assert_array_equal(t, orig)


# ----------------------------------------------------------------- training

def _training_setup(n=5, shots=1500, axes=("x", "z"), seed=0):
    ref = random_mps(n, 3, derive_rng(seed, "train-ref"))
    datasets = [simulate_measurements(ref, PauliBasis(a), shots, seed=seed + i)
                for i, a in enumerate(axes)]
    return ref, datasets


def test_train_reduces_loss_and_tracks_fidelity():
    ref, datasets = _training_setup()
    model = init_model(5, 3, True, seed=1)
    cfg = TrainConfig(bases=("x", "z"), learning_rate=3e-3, batch_size=250,
                      epochs=40, seed=1, plateau_window=0,
                      track_spectrum_cut=2)
    model, hist = train(model, datasets, cfg, reference=ref)
    assert len(hist.records) == 40
    first, last = hist.records[0], hist.records[-1]
    assert last.loss < first.loss
    assert last.fidelity > first.fidelity
    assert 0.0 <= last.fidelity <= 1.0 + 1e-12
    assert last.loss_minus_entropy == pytest.approx(last.loss - hist.entropy_sum)
    assert last.loss_minus_entropy > -1e-9     # entropy lower bound
    assert last.spectrum is not None and abs(last.spectrum.sum() - 1.0) < 1e-9
    assert not hist.stopped_early


def test_train_plateau_stopping():
    ref, datasets = _training_setup()
    model = init_model(5, 2, True, seed=2)
    cfg = TrainConfig(bases=("x", "z"), epochs=50, seed=2,
                      plateau_window=1, plateau_tol=1e9)
    model, hist = train(model, datasets, cfg)
    assert hist.stopped_early
    assert len(hist.records) == 2
    assert hist.records[-1].fidelity is None


def test_train_validation():
    ref, datasets = _training_setup()
    model = init_model(5, 2, True, seed=0)
    with pytest.raises(ValueError, match="do not match"):
        train(model, datasets, TrainConfig(bases=("z",), epochs=1))
    small = init_model(4, 2, True, seed=0)
    with pytest.raises(ValueError, match="does not match model"):
        train(small, datasets, TrainConfig(bases=("x", "z"), epochs=1))
    unbalanced = [datasets[0],
                  simulate_measurements(ref, PauliBasis("z"), 700, seed=9)]
    with pytest.raises(ValueError, match="sizes differ"):
        train(model, unbalanced, TrainConfig(bases=("x", "z"), epochs=1))


def test_train_divergence_raises():
    ref, datasets = _training_setup(n=8)
    model = init_model(8, 3, True, seed=3)
    cfg = TrainConfig(bases=("x", "z"), learning_rate=1e25, epochs=50,
                      seed=3, plateau_window=0)
    with pytest.raises(TrainingDiverged) as err, \
            np.errstate(over="ignore", invalid="ignore"):
        train(model, datasets, cfg)
    assert err.value.epoch >= 0


def test_batches_from_datasets():
    _, datasets = _training_setup(shots=100)
    batches = batches_from_datasets(datasets)
    assert set(batches) == {"x", "z"}
    assert batches["z"].dtype == np.int64
    assert batches["z"].shape == (100, 5)


def test_history_csv_layout():
    ref, datasets = _training_setup(shots=400)
    model = init_model(5, 2, True, seed=4)
    cfg = TrainConfig(bases=("x", "z"), epochs=3, seed=4, plateau_window=0,
                      track_spectrum_cut=2)
    _, hist = train(model, datasets, cfg, reference=ref)
    lines = hist.to_csv().splitlines()
    assert lines[0] == "epoch,loss,loss_minus_entropy,fidelity,lambda1,lambda2"
    assert len(lines) == 4
    cells = lines[1].split(",")
    assert cells[0] == "0"
    assert float(cells[1]) - float(cells[2]) == pytest.approx(hist.entropy_sum, rel=1e-9)
    assert 0.0 <= float(cells[3]) <= 1.0
    assert float(cells[4]) >= float(cells[5]) >= 0.0
