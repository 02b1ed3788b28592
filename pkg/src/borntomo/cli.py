"""Batch experiment driver.

Every pipeline stage is a subcommand reading a JSON recipe: ground-truth
generation, phase maps, critical-point location, measurement sampling,
training, evaluation, full basis-by-parameterization matrices, and
training-set-size scaling sweeps. Outputs are CSV/JSON (plus optional SVG
charts) written atomically under content-addressed names, so reruns with
the same recipe and master seed reproduce files byte for byte. Exit codes:
0 success, 1 runtime failure, 2 usage or recipe error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .dataset import atomic_write_text, read_dataset, simulate_measurements, write_dataset
from .groundtruth import (SweepLine, adiabatic_sweep, dmrg_ground_state,
                          locate_critical_point, xy_field_sweep)
from .metrics import CSV_HEADER, correlation_table, evaluate, quantum_fidelity
from .models import RydbergParams, XYParams, rydberg_mpo, xy_mpo
from .mps import PauliBasis, load_mps, save_mps
from .plots import bar_chart, line_chart
from .training import TrainConfig, TrainingDiverged, init_model, train

SCHEMA_VERSION = 1
_ALL_SUBSETS = (("z",), ("x",), ("y",), ("x", "z"), ("y", "z"), ("x", "y"))


class RecipeError(ValueError):
    """Malformed or missing recipe content; maps to exit code 2."""


def _fmt(x) -> str:
    return f"{float(x):.12g}"


def _content_key(payload) -> str:
    text = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.blake2b(text.encode("utf-8"), digest_size=8).hexdigest()


def _child_seed(master: int, *tags) -> int:
    text = repr((int(master),) + tuple(str(t) for t in tags))
    digest = hashlib.blake2b(text.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little") >> 1


def _load_recipe(args) -> dict:
    if args.recipe is None:
        raise RecipeError("this command needs --recipe <file.json>")
    try:
        with open(args.recipe, "r", encoding="utf-8") as fh:
            recipe = json.load(fh)
    except OSError as exc:
        raise RecipeError(f"cannot read recipe: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise RecipeError(f"recipe is not valid JSON: {exc}") from exc
    if not isinstance(recipe, dict):
        raise RecipeError("recipe must be a JSON object")
    if recipe.get("schema_version") != SCHEMA_VERSION:
        raise RecipeError(f"recipe schema_version must be {SCHEMA_VERSION}, "
                          f"got {recipe.get('schema_version')!r}")
    return recipe


def _out_dir(args, recipe: dict) -> str:
    out = args.out or recipe.get("output_dir") or os.environ.get("BORNTOMO_OUT")
    out = out or "borntomo-out"
    os.makedirs(out, exist_ok=True)
    return out


def _master_seed(args, recipe: dict) -> int:
    if args.seed is not None:
        return int(args.seed)
    seed = recipe.get("seed", 0)
    if not isinstance(seed, int) or seed < 0:
        raise RecipeError(f"recipe seed must be a non-negative integer, got {seed!r}")
    return seed


def _hamiltonian(recipe: dict) -> dict:
    ham = recipe.get("hamiltonian")
    if not isinstance(ham, dict):
        raise RecipeError("recipe needs a 'hamiltonian' object")
    kind = ham.get("kind")
    if kind not in ("rydberg", "xy"):
        raise RecipeError(f"hamiltonian.kind must be 'rydberg' or 'xy', got {kind!r}")
    n = ham.get("n_sites")
    if not isinstance(n, int) or n < 2:
        raise RecipeError(f"hamiltonian.n_sites must be an integer >= 2, got {n!r}")
    out = {"kind": kind, "n_sites": n}
    if kind == "rydberg":
        out["delta_over_omega"] = float(ham.get("delta_over_omega", 0.0))
        rb = float(ham.get("rb_over_a", 1.0))
        if rb <= 0:
            raise RecipeError(f"hamiltonian.rb_over_a must be positive, got {rb}")
        out["rb_over_a"] = rb
        out["truncation_range"] = int(ham.get("truncation_range", 5))
        axis = str(ham.get("transverse_axis", "x")).lower()
        if axis not in ("x", "y"):
            raise RecipeError(f"hamiltonian.transverse_axis must be x or y, got {axis!r}")
        out["transverse_axis"] = axis
    else:
        out["coupling"] = float(ham.get("coupling", 1.0))
        out["gamma"] = float(ham.get("gamma", 1.0))
        out["field"] = float(ham.get("field", 1.0))
    return out


def _build_mpo(ham: dict):
    if ham["kind"] == "rydberg":
        p = RydbergParams.dimensionless(
            ham["delta_over_omega"], ham["rb_over_a"],
            truncation_range=ham["truncation_range"],
            transverse_axis=ham["transverse_axis"])
        return rydberg_mpo(p, ham["n_sites"])
    p = XYParams(coupling=ham["coupling"], gamma=ham["gamma"], field=ham["field"])
    return xy_mpo(p, ham["n_sites"])


def _grid_values(spec, what: str) -> list[float]:
    if not isinstance(spec, dict):
        raise RecipeError(f"{what} must be an object with values or start/stop/num")
    if "values" in spec:
        values = [float(v) for v in spec["values"]]
    else:
        try:
            start, stop = float(spec["start"]), float(spec["stop"])
            num = int(spec["num"])
        except (KeyError, TypeError, ValueError) as exc:
            raise RecipeError(f"{what} needs numeric start/stop/num") from exc
        if num < 0:
            raise RecipeError(f"{what}: num must be >= 0")
        values = [start] if num == 1 else list(np.linspace(start, stop, num))
    if not values:
        raise RecipeError(f"{what} is empty")
    if any(b <= a for a, b in zip(values, values[1:])):
        raise RecipeError(f"{what} must be strictly increasing")
    return values


def _basis_axes(raw, what: str) -> tuple[str, ...]:
    axes = tuple(str(a).lower() for a in raw)
    if not axes or len(set(axes)) != len(axes) or set(axes) - {"x", "y", "z"}:
        raise RecipeError(f"{what} must list distinct Pauli axes, got {list(raw)!r}")
    return axes


def _train_config(recipe: dict, bases: tuple[str, ...], seed: int) -> TrainConfig:
    spec = recipe.get("training", {})
    if not isinstance(spec, dict):
        raise RecipeError("'training' must be an object")
    known = {"learning_rate", "batch_size", "epochs", "beta1", "beta2", "eps",
             "grad_clip", "plateau_window", "plateau_tol", "track_spectrum_cut"}
    unknown = set(spec) - known
    if unknown:
        raise RecipeError(f"unknown training fields: {sorted(unknown)}")
    try:
        return TrainConfig(bases=bases, seed=seed, **spec)
    except (TypeError, ValueError) as exc:
        raise RecipeError(f"bad training config: {exc}") from exc


def _run_jobs(fn, payloads: list, jobs: int | None) -> list:
    jobs = 1 if jobs is None else int(jobs)
    if jobs <= 1 or len(payloads) <= 1:
        return [fn(p) for p in payloads]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, payloads))


def _write_json(path: str, payload) -> None:
    atomic_write_text(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# ground truth, phase map, critical point


def _sweep_csv_text(line: SweepLine) -> str:
    rows = [f"{line.grid_name},energy,gap,svn,magnetization,"
            f"overlap_z2,overlap_z3,overlap_z4,converged"]
    for value, p in zip(line.values, line.points):
        gap = _fmt(p.gap) if p.gap is not None else ""
        over = {k: _fmt(v) for k, v in p.overlaps.items()}
        rows.append(",".join([
            _fmt(value), _fmt(p.energy), gap, _fmt(p.svn),
            _fmt(p.magnetization), over.get(2, ""), over.get(3, ""),
            over.get(4, ""), "1" if p.converged else "0"]))
    return "\n".join(rows) + "\n"


def _solve_line(recipe: dict, master: int) -> tuple[SweepLine, dict]:
    """Run the (possibly length-one) warm-started scan a recipe describes."""
    ham = _hamiltonian(recipe)
    d_max = int(recipe.get("bond_dim_truth", 32))
    sweeps = int(recipe.get("dmrg_sweeps", 30))
    compute_gap = bool(recipe.get("compute_gap", True))
    if "grid" in recipe:
        values = _grid_values(recipe["grid"], "grid")
    else:
        values = [ham["delta_over_omega"] if ham["kind"] == "rydberg"
                  else ham["field"]]
    if ham["kind"] == "rydberg":
        template = RydbergParams(truncation_range=ham["truncation_range"],
                                 transverse_axis=ham["transverse_axis"])
        line = adiabatic_sweep(template, ham["n_sites"], ham["rb_over_a"],
                               values, d_max=d_max, sweeps=sweeps,
                               compute_gap=compute_gap, seed=master)
    else:
        template = XYParams(coupling=ham["coupling"], gamma=ham["gamma"])
        line = xy_field_sweep(template, ham["n_sites"], values, d_max=d_max,
                              sweeps=sweeps, compute_gap=compute_gap,
                              seed=master)
    meta = {"hamiltonian": ham, "bond_dim_truth": d_max, "dmrg_sweeps": sweeps,
            "compute_gap": compute_gap, "grid": [float(v) for v in values],
            "seed": master}
    return line, meta


def cmd_ground_truth(args) -> int:
    recipe = _load_recipe(args)
    master = _master_seed(args, recipe)
    out = _out_dir(args, recipe)
    line, meta = _solve_line(recipe, master)
    key = _content_key({"cmd": "ground-truth", **meta})
    csv_path = os.path.join(out, f"gt-{key}.csv")
    atomic_write_text(csv_path, _sweep_csv_text(line))
    checkpoints = []
    for i, state in enumerate(line.states):
        ckpt = os.path.join(out, f"gt-{key}-p{i:03d}.mps")
        save_mps(state, ckpt)
        checkpoints.append(os.path.basename(ckpt))
    meta.update(checkpoints=checkpoints,
                energies=[float(p.energy) for p in line.points],
                converged=[bool(p.converged) for p in line.points])
    _write_json(os.path.join(out, f"gt-{key}.json"), meta)
    if args.emit_plots:
        xs = line.values
        line_chart(os.path.join(out, f"gt-{key}.svg"),
                   [("half-chain SvN", xs, [p.svn for p in line.points]),
                    ("magnetization", xs, [p.magnetization for p in line.points])],
                   title="ground-truth scan", xlabel=line.grid_name)
    print(f"wrote {csv_path} and {len(checkpoints)} checkpoint(s)")
    for v, p in zip(line.values, line.points):
        flag = "" if p.converged else "  [not converged]"
        print(f"  {line.grid_name}={_fmt(v)}  energy={_fmt(p.energy)}{flag}")
    return 0


def cmd_locate_critical(args) -> int:
    recipe = _load_recipe(args)
    master = _master_seed(args, recipe)
    out = _out_dir(args, recipe)
    if "grid" not in recipe:
        raise RecipeError("locate-critical needs a 'grid' to scan")
    line, meta = _solve_line(recipe, master)
    estimate = locate_critical_point(line)
    key = _content_key({"cmd": "locate-critical", **meta})
    csv_path = os.path.join(out, f"critical-{key}.csv")
    atomic_write_text(csv_path, _sweep_csv_text(line))
    payload = dict(meta)
    payload.update(
        found=estimate.found, value=estimate.value,
        svn_max_index=estimate.svn_max_index,
        gap_min_index=estimate.gap_min_index,
        slope_extremum_index=estimate.slope_extremum_index,
        spread_steps=estimate.spread_steps, consistent=estimate.consistent,
        note=estimate.note)
    json_path = os.path.join(out, f"critical-{key}.json")
    _write_json(json_path, payload)
    if args.emit_plots:
        line_chart(os.path.join(out, f"critical-{key}.svg"),
                   [("half-chain SvN", line.values,
                     [p.svn for p in line.points])],
                   title="critical-point scan", xlabel=line.grid_name,
                   ylabel="SvN")
    if estimate.found:
        print(f"critical point estimate: {line.grid_name} = {_fmt(estimate.value)} "
              f"(spread {estimate.spread_steps:.1f} grid steps, "
              f"{'consistent' if estimate.consistent else 'inconsistent'})")
    else:
        print(f"no critical point found: {estimate.note}")
    print(f"wrote {json_path}")
    return 0


def cmd_phase_map(args) -> int:
    recipe = _load_recipe(args)
    master = _master_seed(args, recipe)
    out = _out_dir(args, recipe)
    ham = _hamiltonian(recipe)
    if ham["kind"] != "rydberg":
        raise RecipeError("phase-map is defined for the rydberg hamiltonian")
    grid = recipe.get("phase_grid")
    if not isinstance(grid, dict):
        raise RecipeError("phase-map needs a 'phase_grid' object")
    deltas = _grid_values(grid.get("delta_over_omega"), "phase_grid.delta_over_omega")
    rbs = _grid_values(grid.get("rb_over_a"), "phase_grid.rb_over_a")
    d_max = int(recipe.get("bond_dim_truth", 32))
    sweeps = int(recipe.get("dmrg_sweeps", 30))
    payloads = [{"ham": ham, "rb": rb, "deltas": deltas, "d_max": d_max,
                 "sweeps": sweeps, "seed": _child_seed(master, "phase", i)}
                for i, rb in enumerate(rbs)]
    lines = _run_jobs(_phase_line_job, payloads, args.jobs)

    key = _content_key({"cmd": "phase-map", "ham": ham, "deltas": deltas,
                        "rbs": rbs, "d_max": d_max, "sweeps": sweeps,
                        "seed": master})
    rows = ["rb_over_a,delta_over_omega,energy,svn,magnetization,"
            "overlap_z2,overlap_z3,overlap_z4,converged"]
    for rb, cells in zip(rbs, lines):
        for cell in cells:
            over = cell["overlaps"]
            rows.append(",".join([
                _fmt(rb), _fmt(cell["delta"]), _fmt(cell["energy"]),
                _fmt(cell["svn"]), _fmt(cell["magnetization"]),
                _fmt(over["2"]) if "2" in over else "",
                _fmt(over["3"]) if "3" in over else "",
                _fmt(over["4"]) if "4" in over else "",
                "1" if cell["converged"] else "0"]))
    csv_path = os.path.join(out, f"phasemap-{key}.csv")
    atomic_write_text(csv_path, "\n".join(rows) + "\n")
    if args.emit_plots:
        series = [(f"Rb/a={rb:.3g}", deltas,
                   [c["overlaps"].get("2", float("nan")) for c in cells])
                  for rb, cells in zip(rbs, lines)]
        line_chart(os.path.join(out, f"phasemap-{key}.svg"), series,
                   title="Z2 ordered-phase overlap", xlabel="delta/omega",
                   ylabel="overlap")
    print(f"wrote {csv_path} ({len(rows) - 1} grid points)")
    return 0


def _phase_line_job(payload: dict) -> list[dict]:
    ham = payload["ham"]
    template = RydbergParams(truncation_range=ham["truncation_range"],
                             transverse_axis=ham["transverse_axis"])
    line = adiabatic_sweep(template, ham["n_sites"], payload["rb"],
                           payload["deltas"], d_max=payload["d_max"],
                           sweeps=payload["sweeps"], compute_gap=False,
                           seed=payload["seed"])
    return [{"delta": float(v), "energy": float(p.energy), "svn": float(p.svn),
             "magnetization": float(p.magnetization),
             "overlaps": {str(k): float(o) for k, o in p.overlaps.items()},
             "converged": bool(p.converged)}
            for v, p in zip(line.values, line.points)]


def _ensure_ground_truth(ham: dict, d_max: int, sweeps: int, out: str):
    """Solve one point with DMRG, caching checkpoint + sidecar by content."""
    key = _content_key({"cmd": "gt-point", "ham": ham, "d_max": d_max,
                        "sweeps": sweeps})
    path = os.path.join(out, f"gt-{key}.mps")
    meta_path = os.path.join(out, f"gt-{key}.json")
    if os.path.exists(path) and os.path.exists(meta_path):
        with open(meta_path, "r", encoding="utf-8") as fh:
            return path, json.load(fh)
    res = dmrg_ground_state(_build_mpo(ham), d_max=d_max, sweeps=sweeps)
    save_mps(res.state, path)
    meta = {"hamiltonian": ham, "bond_dim_truth": d_max,
            "energy": float(res.energy), "converged": bool(res.converged)}
    _write_json(meta_path, meta)
    return path, meta


# ---------------------------------------------------------------------------
# sample / train / evaluate


def cmd_sample(args) -> int:
    recipe = _load_recipe(args)
    master = _master_seed(args, recipe)
    out = _out_dir(args, recipe)
    bases = _basis_axes(recipe.get("bases", ()), "'bases'")
    shots = int(recipe.get("shots_per_basis", 30_000))
    if shots < 1:
        raise RecipeError("shots_per_basis must be >= 1")
    ckpt = recipe.get("model_checkpoint")
    if ckpt is not None:
        state = load_mps(ckpt)
        source = {"checkpoint": os.path.basename(str(ckpt))}
    else:
        ham = _hamiltonian(recipe)
        path, _ = _ensure_ground_truth(ham, int(recipe.get("bond_dim_truth", 32)),
                                       int(recipe.get("dmrg_sweeps", 30)), out)
        state = load_mps(path)
        source = {"hamiltonian": ham}
    key = _content_key({"cmd": "sample", "source": source, "shots": shots,
                        "bases": list(bases), "seed": master})
    paths = []
    for axis in bases:
        ds = simulate_measurements(state, PauliBasis(axis), shots, seed=master)
        path = os.path.join(out, f"data-{key}-{axis}.txt")
        write_dataset(ds, path)
        paths.append(path)
        print(f"wrote {path} ({shots} shots, basis {axis})")
    return 0


def _model_spec(recipe: dict) -> tuple[bool, int]:
    spec = recipe.get("model", {})
    if not isinstance(spec, dict):
        raise RecipeError("'model' must be an object")
    complex_valued = bool(spec.get("complex", True))
    bond_dim = spec.get("bond_dim", 4)
    if not isinstance(bond_dim, int) or bond_dim < 1:
        raise RecipeError(f"model.bond_dim must be a positive integer, got {bond_dim!r}")
    return complex_valued, bond_dim


def cmd_train(args) -> int:
    recipe = _load_recipe(args)
    master = _master_seed(args, recipe)
    out = _out_dir(args, recipe)
    paths = recipe.get("datasets")
    if not isinstance(paths, list) or not paths:
        raise RecipeError("train needs 'datasets': a non-empty list of files")
    datasets = [read_dataset(str(p)) for p in paths]
    axes = tuple(sorted({d.basis.axis for d in datasets}))
    complex_valued, bond_dim = _model_spec(recipe)
    config = _train_config(recipe, axes, master)
    model = init_model(datasets[0].n_sites, bond_dim, complex_valued, seed=master)
    reference = None
    if recipe.get("reference_checkpoint"):
        reference = load_mps(str(recipe["reference_checkpoint"]))
    model, history = train(model, datasets, config, reference=reference)

    key = _content_key({"cmd": "train", "datasets": [str(p) for p in paths],
                        "model": {"complex": complex_valued, "bond_dim": bond_dim},
                        "training": recipe.get("training", {}), "seed": master})
    ckpt = os.path.join(out, f"model-{key}.mps")
    save_mps(model.psi, ckpt)
    hist_path = os.path.join(out, f"history-{key}.csv")
    atomic_write_text(hist_path, history.to_csv())
    last = history.records[-1]
    sidecar = {
        "bases": list(axes), "complex": complex_valued, "bond_dim": bond_dim,
        "n_sites": model.n_sites, "seed": master,
        "shots_per_basis": datasets[0].n_shots,
        "epochs_run": len(history.records),
        "stopped_early": history.stopped_early,
        "entropy_sum": history.entropy_sum,
        "final_loss": last.loss,
        "loss_minus_entropy": last.loss_minus_entropy,
        "final_fidelity": last.fidelity,
        "training": recipe.get("training", {}),
    }
    _write_json(os.path.join(out, f"model-{key}.json"), sidecar)
    if args.emit_plots:
        epochs = [r.epoch for r in history.records]
        series = [("loss - entropy", epochs,
                   [r.loss_minus_entropy for r in history.records])]
        if reference is not None:
            series.append(("fidelity", epochs,
                           [r.fidelity for r in history.records]))
        line_chart(os.path.join(out, f"history-{key}.svg"), series,
                   title="training trace", xlabel="epoch")
        if config.track_spectrum_cut is not None:
            spectra = [r.spectrum for r in history.records]
            line_chart(os.path.join(out, f"spectrum-{key}.svg"),
                       [("lambda1", epochs, [s[0] for s in spectra]),
                        ("lambda2", epochs,
                         [s[1] if len(s) > 1 else 0.0 for s in spectra])],
                       title="entanglement spectrum", xlabel="epoch",
                       ylabel="eigenvalue")
    fid = f"  fidelity={last.fidelity:.6f}" if last.fidelity is not None else ""
    print(f"wrote {ckpt}")
    print(f"epochs={len(history.records)}  loss-S={last.loss_minus_entropy:.6f}{fid}")
    return 0


def cmd_evaluate(args) -> int:
    recipe = _load_recipe(args)
    master = _master_seed(args, recipe)
    out = _out_dir(args, recipe)
    model_path = recipe.get("model_checkpoint")
    ref_path = recipe.get("reference_checkpoint")
    if not model_path or not ref_path:
        raise RecipeError("evaluate needs 'model_checkpoint' and "
                          "'reference_checkpoint'")
    model = load_mps(str(model_path))
    reference = load_mps(str(ref_path))
    if model.n_sites != reference.n_sites:
        raise RecipeError(f"model has {model.n_sites} sites but the reference "
                          f"has {reference.n_sites}")
    shots = int(recipe.get("eval_shots", 30_000))
    sidecar_path = str(model_path)[: -len(".mps")] + ".json"
    lme = recipe.get("loss_minus_entropy")
    bases_label = recipe.get("bases_label", "")
    complex_valued = bool(recipe.get("complex", True))
    if os.path.exists(sidecar_path):
        with open(sidecar_path, "r", encoding="utf-8") as fh:
            sidecar = json.load(fh)
        lme = sidecar.get("loss_minus_entropy") if lme is None else lme
        bases_label = bases_label or "".join(sidecar.get("bases", []))
        complex_valued = bool(sidecar.get("complex", complex_valued))
    report = evaluate(model, reference, shots=shots, seed=master,
                      loss_minus_entropy=lme)
    key = _content_key({"cmd": "evaluate", "model": str(model_path),
                        "reference": str(ref_path), "shots": shots,
                        "seed": master})
    json_path = os.path.join(out, f"metrics-{key}.json")
    atomic_write_text(json_path, report.to_json())
    csv_path = os.path.join(out, f"metrics-{key}.csv")
    atomic_write_text(csv_path, CSV_HEADER + "\n" +
                      report.csv_row(bases_label, complex_valued,
                                     int(recipe.get("trial", 0))) + "\n")
    if args.emit_plots:
        rs = list(range(1, model.n_sites))
        line_chart(os.path.join(out, f"metrics-{key}.svg"),
                   [("model", rs, report.correlations),
                    ("reference", rs, correlation_table(reference))],
                   title="density-density correlations", xlabel="r",
                   ylabel="G(r)")
    print(f"wrote {json_path}")
    print(f"F={report.quantum_fidelity:.6f}  "
          f"Cx={report.classical['x']:.4f}  Cy={report.classical['y']:.4f}  "
          f"Cz={report.classical['z']:.4f}")
    return 0


# ---------------------------------------------------------------------------
# experiment matrix


def _matrix_job(payload: dict) -> dict:
    """One (basis subset, parameterization, trial) cell: data, train, metrics."""
    warnings.simplefilter("ignore", RuntimeWarning)
    reference = load_mps(payload["gt"])
    axes = tuple(payload["axes"])
    seed = payload["seed"]
    row = {"bases": "".join(axes),
           "parameters": "complex" if payload["complex"] else "real",
           "trial": payload["trial"], "failed": False, "error": ""}
    try:
        datasets = [simulate_measurements(reference, PauliBasis(a),
                                          payload["shots"], seed=seed)
                    for a in axes]
        model = init_model(reference.n_sites, payload["bond_dim"],
                           payload["complex"], seed=seed)
        config = TrainConfig(bases=axes, seed=seed, **payload["training"])
        model, history = train(model, datasets, config, reference=reference)
        report = evaluate(model, reference, shots=payload["eval_shots"],
                          seed=seed,
                          loss_minus_entropy=history.records[-1].loss_minus_entropy)
        tail = [r.fidelity for r in history.records[-10:]]
        row.update(
            c_x=report.classical["x"], c_y=report.classical["y"],
            c_z=report.classical["z"], fidelity=report.quantum_fidelity,
            loss_minus_entropy=history.records[-1].loss_minus_entropy,
            epochs_run=len(history.records),
            fidelity_epoch_std=float(np.std(tail)),
            report_json=report.to_json())
    except (TrainingDiverged, ValueError, FloatingPointError) as exc:
        row.update(failed=True, error=str(exc), c_x=float("nan"),
                   c_y=float("nan"), c_z=float("nan"), fidelity=float("nan"),
                   loss_minus_entropy=float("nan"), epochs_run=0,
                   fidelity_epoch_std=float("nan"), report_json="")
    return row


def _cells(recipe: dict) -> tuple[list[tuple[str, ...]], list[bool], int]:
    grid = recipe.get("model_grid", {})
    if not isinstance(grid, dict):
        raise RecipeError("'model_grid' must be an object")
    subsets = [_basis_axes(s, "model_grid.bases_subsets entry")
               for s in grid.get("bases_subsets", _ALL_SUBSETS)]
    params = grid.get("parameters", ["real", "complex"])
    if (not isinstance(params, list) or not params
            or set(params) - {"real", "complex"}):
        raise RecipeError("model_grid.parameters must be a non-empty subset "
                          "of ['real', 'complex']")
    flags = [p == "complex" for p in params]
    bond_dim = grid.get("bond_dim", 4)
    if not isinstance(bond_dim, int) or bond_dim < 1:
        raise RecipeError("model_grid.bond_dim must be a positive integer")
    return subsets, flags, bond_dim


def cmd_matrix(args) -> int:
    recipe = _load_recipe(args)
    master = _master_seed(args, recipe)
    out = _out_dir(args, recipe)
    ham = _hamiltonian(recipe)
    subsets, flags, bond_dim = _cells(recipe)
    trials = int(recipe.get("trials", 1))
    if trials < 1:
        raise RecipeError("trials must be >= 1")
    shots = int(recipe.get("shots_per_basis", 30_000))
    eval_shots = int(recipe.get("eval_shots", 30_000))
    training = recipe.get("training", {})
    _train_config(recipe, ("z",), 0)   # validate field names and values early

    gt_path, gt_meta = _ensure_ground_truth(
        ham, int(recipe.get("bond_dim_truth", 32)),
        int(recipe.get("dmrg_sweeps", 30)), out)
    payloads = []
    for axes in subsets:
        for complex_valued in flags:
            label = "".join(axes) + ("-complex" if complex_valued else "-real")
            for trial in range(trials):
                payloads.append({
                    "gt": gt_path, "axes": list(axes),
                    "complex": complex_valued, "bond_dim": bond_dim,
                    "training": training, "shots": shots,
                    "eval_shots": eval_shots, "trial": trial,
                    "seed": _child_seed(master, "matrix", label, trial)})
    rows = _run_jobs(_matrix_job, payloads, args.jobs)

    key = _content_key({"cmd": "matrix", "ham": ham, "grid": gt_meta,
                        "subsets": ["".join(s) for s in subsets],
                        "parameters": ["complex" if f else "real" for f in flags],
                        "bond_dim": bond_dim, "training": training,
                        "shots": shots, "trials": trials, "seed": master})
    lines = [CSV_HEADER]
    for row in rows:
        lines.append(",".join([
            row["bases"], row["parameters"], str(row["trial"]),
            _fmt(row["c_x"]), _fmt(row["c_y"]), _fmt(row["c_z"]),
            _fmt(row["loss_minus_entropy"]), _fmt(row["fidelity"])]))
        if row["report_json"]:
            cell = f"{row['bases']}-{row['parameters']}-t{row['trial']}"
            atomic_write_text(os.path.join(out, f"matrix-{key}-{cell}.json"),
                              row["report_json"])
    summary_cells = []
    for axes in subsets:
        for complex_valued in flags:
            label = "".join(axes)
            pname = "complex" if complex_valued else "real"
            cell = [r for r in rows
                    if r["bases"] == label and r["parameters"] == pname]
            ok = [r for r in cell if not r["failed"]]
            for agg, reducer in (("mean", np.mean), ("std", np.std)):
                if ok:
                    lines.append(",".join([
                        label, pname, agg,
                        _fmt(reducer([r["c_x"] for r in ok])),
                        _fmt(reducer([r["c_y"] for r in ok])),
                        _fmt(reducer([r["c_z"] for r in ok])),
                        _fmt(reducer([r["loss_minus_entropy"] for r in ok])),
                        _fmt(reducer([r["fidelity"] for r in ok]))]))
            summary_cells.append({
                "bases": label, "parameters": pname,
                "trials": len(cell), "failed": len(cell) - len(ok),
                "mean_fidelity": float(np.mean([r["fidelity"] for r in ok]))
                if ok else None,
                "std_fidelity": float(np.std([r["fidelity"] for r in ok]))
                if ok else None,
                "mean_epoch_std": float(np.mean([r["fidelity_epoch_std"]
                                                 for r in ok])) if ok else None,
                "mean_loss_minus_entropy": float(
                    np.mean([r["loss_minus_entropy"] for r in ok]))
                if ok else None,
                "errors": [r["error"] for r in cell if r["failed"]]})
    csv_path = os.path.join(out, f"matrix-{key}.csv")
    atomic_write_text(csv_path, "\n".join(lines) + "\n")
    _write_json(os.path.join(out, f"matrix-{key}.json"),
                {"ground_truth": gt_meta, "cells": summary_cells,
                 "seed": master})
    if args.emit_plots:
        labels = [f"{c['bases']}/{c['parameters'][0].upper()}"
                  for c in summary_cells]
        values = [c["mean_fidelity"] if c["mean_fidelity"] is not None else 0.0
                  for c in summary_cells]
        bar_chart(os.path.join(out, f"matrix-{key}.svg"), labels, values,
                  title="mean quantum fidelity by cell", ylabel="F")
    print(f"wrote {csv_path}")
    for c in summary_cells:
        mean = "failed" if c["mean_fidelity"] is None else f"{c['mean_fidelity']:.4f}"
        print(f"  {c['bases']:>3}/{c['parameters']:<7} F={mean}")
    return 0


# ---------------------------------------------------------------------------
# scaling sweep


def _scaling_job(payload: dict) -> dict:
    warnings.simplefilter("ignore", RuntimeWarning)
    reference = load_mps(payload["gt"])
    axes = tuple(payload["axes"])
    seed = payload["seed"]
    row = {"n_sites": reference.n_sites, "train_size": payload["train_size"],
           "per_basis": payload["per_basis"], "trial": payload["trial"],
           "failed": False, "error": ""}
    try:
        datasets = [simulate_measurements(reference, PauliBasis(a),
                                          payload["per_basis"], seed=seed)
                    for a in axes]
        model = init_model(reference.n_sites, payload["bond_dim"],
                           payload["complex"], seed=seed)
        config = TrainConfig(bases=axes, seed=seed, **payload["training"])
        model, history = train(model, datasets, config)
        fid = quantum_fidelity(reference, model.psi)
        row.update(fidelity=fid, infidelity=1.0 - fid,
                   epochs_run=len(history.records))
    except (TrainingDiverged, ValueError, FloatingPointError) as exc:
        row.update(failed=True, error=str(exc), fidelity=float("nan"),
                   infidelity=float("nan"), epochs_run=0)
    return row


def _fit_line(x, y) -> tuple[float, float, float]:
    """Least-squares slope/intercept/R^2 for y against x."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    a = np.stack([x, np.ones_like(x)], axis=1)
    (slope, intercept), *_ = np.linalg.lstsq(a, y, rcond=None)
    resid = y - (slope * x + intercept)
    ss_res = float(np.sum(resid ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0.0 and ss_res == 0.0 else 1.0 - ss_res / ss_tot
    return float(slope), float(intercept), float(r2)


def cmd_scaling(args) -> int:
    recipe = _load_recipe(args)
    master = _master_seed(args, recipe)
    out = _out_dir(args, recipe)
    ham = _hamiltonian(recipe)
    spec = recipe.get("scaling")
    if not isinstance(spec, dict):
        raise RecipeError("scaling needs a 'scaling' object")
    n_values = spec.get("n_values")
    sizes = spec.get("train_sizes")
    if not isinstance(n_values, list) or not n_values or any(
            not isinstance(n, int) or n < 2 for n in n_values):
        raise RecipeError("scaling.n_values must list integers >= 2")
    if (not isinstance(sizes, list) or len(set(sizes)) < 2
            or any(not isinstance(t, int) or t < 2 for t in sizes)):
        raise RecipeError("scaling.train_sizes needs at least two distinct "
                          "sizes (a single size cannot support a fit)")
    trials = int(spec.get("trials", 10))
    if trials < 1:
        raise RecipeError("scaling.trials must be >= 1")
    model_spec = recipe.get("model", {})
    axes = _basis_axes(model_spec.get("bases", ("x", "z")), "model.bases")
    complex_valued, bond_dim = _model_spec(recipe)
    training = recipe.get("training", {})
    _train_config(recipe, axes, 0)

    payloads = []
    for n in sorted(n_values):
        ham_n = dict(ham, n_sites=n)
        gt_path, _ = _ensure_ground_truth(
            ham_n, int(recipe.get("bond_dim_truth", 32)),
            int(recipe.get("dmrg_sweeps", 30)), out)
        for size in sorted(sizes):
            per_basis = size // len(axes)
            if per_basis < 1:
                raise RecipeError(f"train size {size} is too small for "
                                  f"{len(axes)} bases")
            for trial in range(trials):
                payloads.append({
                    "gt": gt_path, "axes": list(axes),
                    "complex": complex_valued, "bond_dim": bond_dim,
                    "training": training, "train_size": size,
                    "per_basis": per_basis, "trial": trial,
                    "seed": _child_seed(master, "scaling", n, size, trial)})
    rows = _run_jobs(_scaling_job, payloads, args.jobs)

    key = _content_key({"cmd": "scaling", "ham": ham, "n_values": sorted(n_values),
                        "sizes": sorted(sizes), "trials": trials,
                        "model": {"bases": list(axes), "complex": complex_valued,
                                  "bond_dim": bond_dim},
                        "training": training, "seed": master})
    lines = ["n_sites,train_size,per_basis,trial,fidelity,infidelity"]
    for row in rows:
        lines.append(",".join([
            str(row["n_sites"]), str(row["train_size"]), str(row["per_basis"]),
            str(row["trial"]), _fmt(row["fidelity"]), _fmt(row["infidelity"])]))
    csv_path = os.path.join(out, f"scaling-{key}.csv")
    atomic_write_text(csv_path, "\n".join(lines) + "\n")

    per_n = []
    for n in sorted(n_values):
        xs, ys = [], []
        for size in sorted(sizes):
            cell = [r["infidelity"] for r in rows
                    if r["n_sites"] == n and r["train_size"] == size
                    and not r["failed"]]
            if cell:
                xs.append(size ** -0.5)
                ys.append(float(np.mean(cell)))
        if len(xs) >= 2:
            slope, intercept, r2 = _fit_line(xs, ys)
        else:
            slope = intercept = r2 = float("nan")
        per_n.append({"n_sites": n, "slope": slope, "intercept": intercept,
                      "r_squared": r2, "points_x": xs, "points_y": ys})
    fit_ns = [p["n_sites"] for p in per_n if np.isfinite(p["slope"])]
    fit_slopes = [p["slope"] for p in per_n if np.isfinite(p["slope"])]
    if len(fit_ns) >= 2:
        c, c_intercept, r2_slopes = _fit_line(fit_ns, fit_slopes)
    else:
        c = c_intercept = r2_slopes = float("nan")
    fit = {"per_n": per_n, "c": c, "c_intercept": c_intercept,
           "r_squared_slopes": r2_slopes, "seed": master}
    fit_path = os.path.join(out, f"scaling-fit-{key}.json")
    _write_json(fit_path, fit)
    if args.emit_plots:
        series = []
        for p in per_n:
            series.append((f"N={p['n_sites']}", p["points_x"], p["points_y"]))
        line_chart(os.path.join(out, f"scaling-{key}.svg"), series,
                   title="infidelity vs |T|^(-1/2)", xlabel="|T|^(-1/2)",
                   ylabel="1 - F")
    print(f"wrote {csv_path}")
    for p in per_n:
        print(f"  N={p['n_sites']}: slope={p['slope']:.4f} "
              f"R2={p['r_squared']:.3f}")
    print(f"slope-vs-N fit: c={c:.4f}  R2={r2_slopes:.3f}")
    return 0


# ---------------------------------------------------------------------------
# parser / entry point


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--recipe", default=argparse.SUPPRESS,
                        help="path to a JSON experiment recipe")
    parser.add_argument("--seed", type=int, default=argparse.SUPPRESS,
                        help="master seed (overrides the recipe seed)")
    parser.add_argument("--jobs", type=int, default=argparse.SUPPRESS,
                        help="parallel worker processes (default 1)")
    parser.add_argument("--out", default=argparse.SUPPRESS,
                        help="output directory (default $BORNTOMO_OUT "
                             "or ./borntomo-out)")
    parser.add_argument("--emit-plots", action="store_const", const=True,
                        default=argparse.SUPPRESS,
                        help="also write SVG charts")


_DISPATCH = {
    "ground-truth": cmd_ground_truth,
    "phase-map": cmd_phase_map,
    "locate-critical": cmd_locate_critical,
    "sample": cmd_sample,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "matrix": cmd_matrix,
    "scaling": cmd_scaling,
}

_HELP = {
    "ground-truth": "solve ground states (single point or warm-started scan)",
    "phase-map": "ordered-phase overlaps over a (delta/omega, Rb/a) grid",
    "locate-critical": "scan a line and estimate the transition point",
    "sample": "draw projective-measurement datasets from a checkpoint",
    "train": "fit a Born machine to measurement datasets",
    "evaluate": "score a trained model against a reference checkpoint",
    "matrix": "train/evaluate every (basis subset, real/complex) cell",
    "scaling": "infidelity vs training-set size with linear fits",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="borntomo",
        description="Born-machine state reconstruction experiments")
    _add_common(parser)
    parser.set_defaults(recipe=None, seed=None, jobs=1, out=None,
                        emit_plots=False)
    subs = parser.add_subparsers(dest="command", required=True,
                                 metavar="command")
    for name in _DISPATCH:
        sub = subs.add_parser(name, help=_HELP[name])
        _add_common(sub)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _DISPATCH[args.command](args)
    except RecipeError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
