"""Batch front-end: ``dsim <command> --config SCENARIO``.

Exit codes: 0 success, 1 configuration or circuit-syntax error, 2 an
acceptance threshold of the scenario was violated, 3 integration failure.
``SCENARIO`` is a TOML path or the name of a bundled scenario.  Sweeps run
up to ``DSIM_THREADS`` grid points in parallel processes (default 1).
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import itertools
import json
import math
import os
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .compiler import CompileOptions, compile_circuit, ideal_matrix, simulate_program
from .darkstate import analytic_connection, analytic_frame, compare_dark_space, track_dark_state
from .errors import ConfigurationError, DsimError, IntegrationError
from .hilbert import MediumLevel, QubitState, TwoQubitState, fidelity_vectors
from .protocols import (
    GateMatrix,
    cphase_matrix,
    execute_plan,
    gate_fidelity,
    matrix_from_plan,
    one_qubit_matrix,
    plan_cphase,
    plan_one_qubit,
    plan_storage,
    run_cphase,
    run_one_qubit_gate,
    run_storage,
    run_storage_roundtrip,
)
from .pulses import Coupling, TransitionLabel, active_mask
from .scenario import ScenarioConfig, bundled_scenarios, load_config

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_THRESHOLD = 2
EXIT_INTEGRATION = 3

SIG_DIGITS = 12
PROJECTOR_DISTANCE_LIMIT = 1e-8
VALIDATE_GRID = 2001

# --------------------------------------------------------------------------
# output helpers


def _fmt(x: float) -> str:
    return format(float(x), f".{SIG_DIGITS}g")


def _clean(obj):
    """JSON-ready copy: numpy scalars unwrapped, complex as [re, im], NaN as null."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return [_clean(obj.real), _clean(obj.imag)]
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return float(_fmt(x)) if math.isfinite(x) else None
    return obj


def write_json(path: Path, data: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_clean(data), indent=2, sort_keys=True) + "\n")


def write_csv(path: Path, header: list[str], rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(x) if isinstance(x, (float, int, np.floating, np.integer)) else x for x in row])


def _state_name(label: str) -> str:
    return label.strip("|>").replace(",", ".")


def write_trajectory(path: Path, trajectory, stride: int = 1) -> None:
    """Time, populations, then real/imaginary amplitude pairs of every basis state."""
    basis = trajectory.basis
    names = [_state_name(basis.label(i)) for i in range(basis.dimension)]
    header = ["time_ns"] + [f"pop_{n}" for n in names]
    header += [f"{part}_{n}" for n in names for part in ("re", "im")]
    idx = slice(None, None, max(1, int(stride)))
    amps = trajectory.amplitudes[idx]
    parts = np.empty((amps.shape[0], 2 * amps.shape[1]))
    parts[:, 0::2] = amps.real
    parts[:, 1::2] = amps.imag
    table = np.column_stack([trajectory.times[idx], np.abs(amps) ** 2, parts])
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savetxt(path, table, fmt=f"%.{SIG_DIGITS}g", delimiter=",", header=",".join(header), comments="")


def _settings(cfg: ScenarioConfig) -> dict:
    return {
        "kind": cfg.kind,
        "protocol": cfg.protocol,
        "seed": cfg.seed,
        "tol": cfg.tol,
        "decay": cfg.decay,
        "n_samples": cfg.n_samples,
        "timing": dataclasses.asdict(cfg.timing_obj()),
        "couplings": dataclasses.asdict(cfg.couplings_obj()),
        "gate": dataclasses.asdict(cfg.gate_obj()),
        "units": {"time": "ns", "rabi_frequency": "rad/ns"},
    }


class Checks:
    """Threshold bookkeeping; ``passed`` is False once any check fails."""

    def __init__(self):
        self.items: list[dict] = []

    def upper(self, name: str, value, limit) -> None:
        ok = value is not None and math.isfinite(value) and value <= limit
        self.items.append({"name": name, "value": value, "limit": limit, "kind": "max", "pass": ok})

    def lower(self, name: str, value, limit) -> None:
        ok = value is not None and math.isfinite(value) and value >= limit
        self.items.append({"name": name, "value": value, "limit": limit, "kind": "min", "pass": ok})

    def flag(self, name: str, ok: bool, detail=None) -> None:
        self.items.append({"name": name, "value": detail, "limit": None, "kind": "flag", "pass": bool(ok)})

    @property
    def passed(self) -> bool:
        return all(item["pass"] for item in self.items)

    def report(self) -> None:
        for item in self.items:
            status = "PASS" if item["pass"] else "FAIL"
            print(f"  [{status}] {item['name']}: {item['value']} ({item['kind']} {item['limit']})")


def _check_diagnostics(checks: Checks, thresholds: dict, diag: dict) -> None:
    pairs = {
        "max_excited_pop": "max_excited_pop",
        "max_norm_loss": "norm_loss",
        "max_leakage": "leakage",
        "max_cavity_n2": "cavity_n2_leakage",
    }
    for key, field_ in pairs.items():
        if key in thresholds:
            checks.upper(key, diag.get(field_), thresholds[key])
    if "min_dark_projection" in thresholds:
        checks.lower("min_dark_projection", diag.get("min_dark_projection"), thresholds["min_dark_projection"])


def _captured(fn, *args, **kwargs):
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        value = fn(*args, **kwargs)
    messages = sorted({f"{w.category.__name__}: {w.message}" for w in caught})
    return value, messages


def _finish(checks: Checks, messages: list[str]) -> int:
    for m in messages:
        print(f"warning: {m}", file=sys.stderr)
    checks.report()
    return EXIT_OK if checks.passed else EXIT_THRESHOLD


# --------------------------------------------------------------------------
# plans shared by tomography, sweep and validation


def _storage_ideal(gate) -> np.ndarray:
    return np.diag(
        [np.exp(1j * (gate.phi_minus - gate.phi_minus_prime)), np.exp(1j * (gate.phi_plus - gate.phi_plus_prime))]
    )


def plan_for(cfg: ScenarioConfig):
    """``(plan, couplings, ideal_matrix)`` of the scenario's protocol."""
    timing, couplings, gate = cfg.timing_obj(), cfg.couplings_obj(), cfg.gate_obj()
    if cfg.protocol == "storage":
        return plan_storage(gate, couplings, timing, roundtrip=True), couplings, _storage_ideal(gate)
    if cfg.protocol == "one_qubit":
        return plan_one_qubit(gate, couplings, timing), couplings, one_qubit_matrix(gate)
    if cfg.protocol == "cphase":
        if couplings.cavity_n_max < 1 or min(couplings.g(1), couplings.g(2)) <= 0:
            raise ConfigurationError("Cphase needs cavity_n_max >= 1 and nonzero cavity couplings")
        return plan_cphase(gate, couplings, timing, cfg.shelved), couplings, cphase_matrix(gate.zeta)
    circuit = cfg.circuit_ir()
    program = compile_circuit(circuit, couplings, CompileOptions(timing=timing))
    return program.plan, couplings, ideal_matrix(program.circuit)


def tomography(cfg: ScenarioConfig) -> tuple[GateMatrix, np.ndarray]:
    plan, couplings, ideal = plan_for(cfg)
    return matrix_from_plan(plan, couplings, **cfg.run_kwargs()), ideal


# --------------------------------------------------------------------------
# simulate


def _run_protocol(cfg: ScenarioConfig, track: bool = True):
    timing, couplings, gate = cfg.timing_obj(), cfg.couplings_obj(), cfg.gate_obj()
    v = cfg.input_vector()
    kw = dict(cfg.run_kwargs(), track=track)
    if cfg.protocol == "storage":
        q = QubitState.from_vector(v)
        if cfg.roundtrip:
            return run_storage_roundtrip(q, gate, couplings, timing, **kw)
        return run_storage(q, gate, couplings, timing, **kw)
    if cfg.protocol == "one_qubit":
        return run_one_qubit_gate(QubitState.from_vector(v), gate, couplings, timing, **kw)
    if cfg.protocol == "cphase":
        return run_cphase(TwoQubitState.from_vector(v), gate, couplings, timing, shelved=cfg.shelved, **kw)
    plan, couplings, ideal = plan_for(cfg)
    result, _ = execute_plan(plan, v, couplings, **kw)
    predicted = ideal @ v
    fid = fidelity_vectors(result.output.vector, predicted) if result.output is not None else None
    return dataclasses.replace(result, predicted=predicted, fidelity=fid)


def _vector(x):
    if x is None:
        return None
    return np.asarray(getattr(x, "vector", x))


def cmd_simulate(cfg: ScenarioConfig, out: Path) -> int:
    if cfg.kind not in ("storage", "one_qubit", "cphase", "circuit"):
        raise ConfigurationError(f"'simulate' runs protocol scenarios; use 'dsim {_COMMAND_OF.get(cfg.kind)}'")
    result, messages = _captured(_run_protocol, cfg)
    amps = np.asarray(result.amplitudes)
    summary = {
        "scenario": cfg.name,
        "settings": _settings(cfg),
        "input": cfg.input_vector(),
        "final_state": {
            "amplitudes": amps,
            "populations": np.abs(amps) ** 2,
            "normalised": _vector(result.output),
        },
        "predicted": _vector(result.predicted),
        "fidelity_vs_prediction": result.fidelity,
        "diagnostics": result.diagnostics,
        "warnings": messages,
    }
    checks = Checks()
    th = cfg.thresholds
    if cfg.convergence:
        fine, _ = _captured(_run_protocol, cfg.with_(tol=cfg.tol / 2), track=False)
        delta = abs((fine.fidelity or 0.0) - (result.fidelity or 0.0))
        summary["convergence"] = {"tol": cfg.tol / 2, "fidelity": fine.fidelity, "delta": delta}
        if "max_convergence_delta" in th:
            checks.upper("max_convergence_delta", delta, th["max_convergence_delta"])
    if "min_fidelity" in th:
        checks.lower("fidelity_vs_prediction", result.fidelity, th["min_fidelity"])
    if "populations" in th:
        target = np.asarray(th["populations"], dtype=float)
        pops = np.abs(amps) ** 2
        if target.shape != pops.shape:
            raise ConfigurationError(f"thresholds.populations needs {pops.size} entries")
        checks.upper("populations", float(np.max(np.abs(pops - target))), th.get("population_tol", 0.02))
    _check_diagnostics(checks, th, result.diagnostics)
    summary["thresholds"] = checks.items
    summary["passed"] = checks.passed

    write_trajectory(out / cfg.output["trajectory"], result.trajectory, cfg.output["trajectory_stride"])
    write_json(out / cfg.output["summary"], summary)
    pops = ", ".join(f"{p:.4f}" for p in np.abs(amps) ** 2)
    fid = "n/a" if result.fidelity is None else f"{result.fidelity:.6f}"
    print(f"{cfg.name or cfg.kind}: populations [{pops}], fidelity vs prediction {fid}")
    return _finish(checks, messages)


# --------------------------------------------------------------------------
# tomography


def cmd_tomography(cfg: ScenarioConfig, out: Path) -> int:
    if cfg.protocol not in ("storage", "one_qubit", "cphase", "circuit") or cfg.kind == "sweep":
        raise ConfigurationError("tomography needs a storage, one_qubit, cphase or circuit scenario")
    (gm, ideal), messages = _captured(tomography, cfg)
    fid = gate_fidelity(gm.matrix, ideal)
    d = gm.matrix.shape[0]
    rows = [(i, j, gm.matrix[i, j].real, gm.matrix[i, j].imag) for i in range(d) for j in range(d)]
    write_csv(out / cfg.output["matrix"], ["row", "col", "re", "im"], rows)
    checks = Checks()
    th = cfg.thresholds
    if "min_fidelity" in th:
        checks.lower("gate_fidelity", fid, th["min_fidelity"])
    if "max_unitarity_residual" in th:
        checks.upper("unitarity_residual", gm.unitarity_residual, th["max_unitarity_residual"])
    if "max_leakage" in th:
        checks.upper("max_leakage", float(gm.leakage.max()), th["max_leakage"])
    summary = {
        "scenario": cfg.name,
        "settings": _settings(cfg),
        "matrix": gm.matrix,
        "ideal": ideal,
        "gate_fidelity": fid,
        "leakage": gm.leakage,
        "unitary": gm.unitary,
        "unitarity_residual": gm.unitarity_residual,
        "max_excited_pop": gm.max_diagnostic("max_excited_pop"),
        "max_cavity_pop": gm.max_diagnostic("max_cavity_pop"),
        "warnings": messages,
        "thresholds": checks.items,
        "passed": checks.passed,
    }
    write_json(out / cfg.output["summary"], summary)
    print(f"{cfg.name or cfg.kind}: gate fidelity {fid:.6f}, unitarity residual {gm.unitarity_residual:.3g}")
    with np.printoptions(precision=4, suppress=True):
        print(gm.matrix)
    return _finish(checks, messages)


# --------------------------------------------------------------------------
# sweep

SWEEP_COLUMNS = ("gate_fidelity", "max_excited_pop", "max_cavity_pop", "norm_loss", "max_leakage")


def sweep_point(cfg: ScenarioConfig) -> dict:
    """Tomography at one grid point; diagnostics are maxima over the basis runs."""
    (gm, ideal), messages = _captured(tomography, cfg)
    return {
        "gate_fidelity": gate_fidelity(gm.matrix, ideal),
        "max_excited_pop": gm.max_diagnostic("max_excited_pop"),
        "max_cavity_pop": gm.max_diagnostic("max_cavity_pop"),
        "norm_loss": gm.max_diagnostic("norm_loss"),
        "max_leakage": float(gm.leakage.max()),
        "warnings": messages,
    }


def _workers() -> int:
    raw = os.environ.get("DSIM_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigurationError(f"DSIM_THREADS must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise ConfigurationError("DSIM_THREADS must be >= 1")
    return n


def _monotonic(values, order: str) -> bool:
    d = np.diff(np.asarray(values, dtype=float))
    return bool(
        {
            "strictly_decreasing": np.all(d < 0),
            "strictly_increasing": np.all(d > 0),
            "nonincreasing": np.all(d <= 0),
            "nondecreasing": np.all(d >= 0),
        }[order]
    )


def cmd_sweep(cfg: ScenarioConfig, out: Path) -> int:
    if cfg.kind != "sweep":
        raise ConfigurationError("'sweep' needs a scenario of kind 'sweep'")
    names = [ax.parameter for ax in cfg.sweep]
    grid = list(itertools.product(*(ax.values for ax in cfg.sweep)))
    points = []
    for values in grid:
        point = cfg
        for name, value in zip(names, values):
            point = point.with_parameter(name, value)
        point.timing_obj()
        points.append(point)
    workers = min(_workers(), len(points))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(sweep_point, points))
    else:
        results = [sweep_point(p) for p in points]

    write_csv(
        out / cfg.output["table"],
        names + list(SWEEP_COLUMNS),
        [list(values) + [res[c] for c in SWEEP_COLUMNS] for values, res in zip(grid, results)],
    )
    checks = Checks()
    th = cfg.thresholds
    if "min_fidelity" in th:
        checks.lower("min gate_fidelity", min(r["gate_fidelity"] for r in results), th["min_fidelity"])
    for key, col in (("max_excited_pop", "max_excited_pop"), ("max_norm_loss", "norm_loss"), ("max_leakage", "max_leakage")):
        if key in th:
            checks.upper(key, max(r[col] for r in results), th[key])
    mono = th.get("monotonic")
    if mono:
        column = mono["column"]
        if column not in SWEEP_COLUMNS:
            raise ConfigurationError(f"monotonic column must be one of {SWEEP_COLUMNS}")
        series = [r[column] for r in results]
        checks.flag(f"{column} {mono['order']}", _monotonic(series, mono["order"]), series)
    messages = sorted({m for r in results for m in r["warnings"]})
    summary = {
        "scenario": cfg.name,
        "settings": _settings(cfg),
        "axes": {ax.parameter: ax.values for ax in cfg.sweep},
        "rows": [dict(zip(names, values), **{c: r[c] for c in SWEEP_COLUMNS}) for values, r in zip(grid, results)],
        "warnings": messages,
        "thresholds": checks.items,
        "passed": checks.passed,
    }
    write_json(out / cfg.output["summary"], summary)
    for values, r in zip(grid, results):
        point = ", ".join(f"{n}={v:g}" for n, v in zip(names, values))
        print(f"{point}: fidelity {r['gate_fidelity']:.6f}, max cavity pop {r['max_cavity_pop']:.3g}")
    return _finish(checks, messages)


# --------------------------------------------------------------------------
# dark-state validation


def _phase_checks(step, media_count: int, shelved: int):
    """``(kind, frame kwargs, transitions that must be on)`` for one protocol step."""
    out = []
    two = media_count == 2
    if step.kind in ("storage", "release"):
        for m in step.media:
            kw = {"medium": m, "spectator": MediumLevel.D} if two else {}
            out.append(("storage-", kw, [TransitionLabel(Coupling.OmegaMinus, m)]))
            out.append(("storage+", kw, [TransitionLabel(Coupling.OmegaPlus, m)]))
    elif step.kind == "tripod":
        m = step.media[0]
        kw = {"medium": m, "spectator": MediumLevel.CMinus} if two else {}
        trs = [TransitionLabel(c, m) for c in (Coupling.OmegaCMinus, Coupling.OmegaCPlus, Coupling.OmegaD)]
        trs = [tr for tr in trs if step.schedule.for_transition(tr)]
        out.append(("tripod", kw, trs))
    elif step.kind == "shelving":
        trs = [TransitionLabel(Coupling.OmegaPlus, shelved), TransitionLabel(Coupling.OmegaAPlus, shelved)]
        out.append(("shelving", {"medium": shelved, "spectator": MediumLevel.CPlus}, trs))
    elif step.kind == "cavity":
        out.append(("cavity_a", {}, [TransitionLabel(Coupling.OmegaCPlus, 1)]))
        out.append(("cavity_b", {}, [TransitionLabel(Coupling.OmegaCPlus, 1), TransitionLabel(Coupling.OmegaCPlus, 2)]))
    return out


def _nanmax(x) -> float | None:
    x = np.asarray(x, dtype=float)
    return float(np.nanmax(x)) if np.any(np.isfinite(x)) else None


def validate_darkstates(cfg: ScenarioConfig) -> dict:
    plan, couplings, _ = plan_for(cfg)
    model = plan.model(couplings, decay=False)
    rng = np.random.default_rng(cfg.seed)
    samples = int(cfg.validate.get("samples", 50))
    fraction = float(cfg.validate.get("fraction", 1e-2))
    phases = []
    for step in plan.steps:
        grid = np.linspace(*step.schedule.window, VALIDATE_GRID)
        for kind, kw, transitions in _phase_checks(step, plan.media_count, cfg.shelved):
            mask = active_mask(model.schedule, grid, transitions, fraction) if transitions else np.zeros(grid.size, bool)
            candidates = grid[mask]
            entry = {"step": step.name, "kind": kind, "medium": kw.get("medium", step.media[0]), "samples": 0}
            if candidates.size:
                times = np.sort(rng.choice(candidates, size=min(samples, candidates.size), replace=False))
                dist, resid = [], []
                for t in times:
                    dist.append(compare_dark_space(kind, model, float(t), **kw))
                    _, vecs = analytic_frame(kind, model, float(t), **kw)
                    H = model.hermitian(float(t))
                    scale = np.linalg.norm(H, 2)
                    resid.append(max(np.linalg.norm(H @ v.amplitudes) / scale for v in vecs))
                entry.update(
                    samples=int(times.size),
                    dimension=len(vecs),
                    max_projector_distance=max(dist),
                    max_annihilation_residual=max(resid),
                )
                diag, off = analytic_connection(model, grid, kind, **kw)
                entry["analytic_connection"] = {"max_diagonal": _nanmax(diag), "max_off_diagonal": _nanmax(off)}
            phases.append(entry)

    result, _ = execute_plan(plan, cfg.input_vector(), couplings, track=False, **cfg.run_kwargs())
    stride = int(cfg.validate.get("track_stride", 1 if plan.media_count == 1 else 20))
    track = track_dark_state(result.trajectory, model, stride)
    integrand = max((p["analytic_connection"]["max_diagonal"] or 0.0 for p in phases if p["samples"]), default=0.0)
    rate = track.max_angle_rate
    return {
        "phases": phases,
        "geometric": {
            "max_integrand": integrand,
            "max_angle_rate": rate,
            "ratio": integrand / rate if rate > 0 else 0.0,
        },
        "tracking": {
            "stride": stride,
            "min_projection": track.min_projection,
            "max_geometric_phase_integrand": track.max_geometric_phase,
            "max_cross_term": track.max_cross_term,
            "max_angle_rate": track.max_angle_rate,
            "dimension_changes": list(track.dimension_changes),
        },
    }


def cmd_validate(cfg: ScenarioConfig, out: Path) -> int:
    report, messages = _captured(validate_darkstates, cfg)
    limit = cfg.thresholds.get("max_projector_distance", PROJECTOR_DISTANCE_LIMIT)
    checks = Checks()
    sampled = [p for p in report["phases"] if p["samples"]]
    checks.flag("every phase sampled", len(sampled) == len(report["phases"]), len(sampled))
    for p in sampled:
        checks.upper(f"{p['step']}/{p['kind']} projector distance", p["max_projector_distance"], limit)
    if "max_geometric_ratio" in cfg.thresholds:
        checks.upper("geometric integrand / angle rate", report["geometric"]["ratio"], cfg.thresholds["max_geometric_ratio"])
    if "min_dark_projection" in cfg.thresholds:
        checks.lower("min_dark_projection", report["tracking"]["min_projection"], cfg.thresholds["min_dark_projection"])
    report.update(scenario=cfg.name, settings=_settings(cfg), warnings=messages, thresholds=checks.items, passed=checks.passed)
    write_json(out / cfg.output["report"], report)
    for p in sampled:
        print(
            f"{p['step']:>18s} m{p['medium']} {p['kind']:<9s} dim {p['dimension']}  "
            f"distance {p['max_projector_distance']:.2e}  residual {p['max_annihilation_residual']:.2e}"
        )
    return _finish(checks, messages)


# --------------------------------------------------------------------------
# compile


def cmd_compile(cfg: ScenarioConfig, out: Path, simulate: bool = False) -> int:
    circuit = cfg.circuit_ir()
    timing, couplings = cfg.timing_obj(), cfg.couplings_obj()
    options = CompileOptions(timing=timing, empty="empty")
    program = compile_circuit(circuit, couplings, options)
    write_json(out / cfg.output["schedule"], program.to_dict())
    summary = {
        "scenario": cfg.name,
        "qubit_count": circuit.qubit_count,
        "empty": program.plan is None,
        "expansion": list(program.expansion),
        "pulse_count": program.pulse_count(),
        "steps": program.metadata,
    }
    checks = Checks()
    messages: list[str] = []
    if program.plan is None:
        print("empty program: the circuit has no gates, nothing to compile")
    else:
        print(f"compiled {len(circuit.gates)} gate(s) into {program.pulse_count()} pulses")
        for line in program.expansion:
            print(f"  {line}")
        if simulate or "min_fidelity" in cfg.thresholds:
            gm, messages = _captured(simulate_program, program, couplings, **cfg.run_kwargs())
            fid = gate_fidelity(gm.matrix, ideal_matrix(program.circuit))
            summary["simulation"] = {
                "matrix": gm.matrix,
                "gate_fidelity": fid,
                "leakage": gm.leakage,
                "unitarity_residual": gm.unitarity_residual,
            }
            print(f"  simulated gate fidelity {fid:.6f}")
            if "min_fidelity" in cfg.thresholds:
                checks.lower("gate_fidelity", fid, cfg.thresholds["min_fidelity"])
    summary.update(warnings=messages, thresholds=checks.items, passed=checks.passed)
    write_json(out / cfg.output["summary"], summary)
    return _finish(checks, messages)


# --------------------------------------------------------------------------
# entry point

_COMMAND_OF = {"validate_darkstates": "validate", "sweep": "sweep"}


def _apply_overrides(cfg: ScenarioConfig, args) -> ScenarioConfig:
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.tol is not None:
        changes["tol"] = args.tol
    if args.decay is not None:
        changes["decay"] = args.decay == "on"
    return cfg.with_(**changes) if changes else cfg


def _compile_config(args) -> ScenarioConfig:
    base = {"kind": "circuit"}
    if args.config:
        cfg = load_config(args.config)
        if cfg.protocol != "circuit":
            raise ConfigurationError("compile needs a circuit scenario")
        if args.circuit is None:
            return cfg
        text = Path(args.circuit).read_text()
        return cfg.with_(circuit=text)
    if args.circuit is None:
        raise ConfigurationError("compile needs a circuit file or a circuit scenario")
    try:
        text = Path(args.circuit).read_text()
    except OSError as exc:
        raise ConfigurationError(f"cannot read {args.circuit}: {exc}") from None
    base["circuit"] = {"text": text}
    if args.merge_c:
        base["merge_c"] = True
    return ScenarioConfig.from_dict(base, source=str(args.circuit))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dsim", description="Dark-state photonic gate simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        p.add_argument("--config", required=config_required, help="scenario TOML file or bundled scenario name")
        p.add_argument("--out", default="dsim_out", help="output directory (default: dsim_out)")
        p.add_argument("--seed", type=int, help="override the scenario seed")
        p.add_argument("--tol", type=float, help="override the integrator tolerance")
        p.add_argument("--decay", choices=("on", "off"), help="switch spontaneous decay on or off")

    for name, text in (
        ("simulate", "run one protocol and write its trajectory and summary"),
        ("tomography", "reconstruct the gate matrix from basis-state runs"),
        ("sweep", "tabulate gate fidelity over a parameter grid"),
        ("validate", "compare numeric and closed-form dark states"),
    ):
        common(sub.add_parser(name, help=text))
    p = sub.add_parser("compile", help="compile a circuit file into a pulse schedule")
    p.add_argument("circuit", nargs="?", help="circuit text file")
    common(p, config_required=False)
    p.add_argument("--simulate", action="store_true", help="also simulate the compiled program")
    p.add_argument("--merge-c", action="store_true", help="use the merged-pulse tripod sequence")
    sub.add_parser("scenarios", help="list bundled scenarios")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "scenarios":
        for name in bundled_scenarios():
            print(name)
        return EXIT_OK
    try:
        out = Path(args.out)
        if args.command == "compile":
            cfg = _apply_overrides(_compile_config(args), args)
            if args.merge_c and not cfg.merge_c:
                cfg = cfg.with_(merge_c=True)
            return cmd_compile(cfg, out, simulate=args.simulate)
        cfg = _apply_overrides(load_config(args.config), args)
        cfg.input_vector()
        command = {
            "simulate": cmd_simulate,
            "tomography": cmd_tomography,
            "sweep": cmd_sweep,
            "validate": cmd_validate,
        }[args.command]
        if args.command == "validate" and cfg.seed is None:
            raise ConfigurationError("dark-state validation samples random times and needs a seed")
        return command(cfg, out)
    except IntegrationError as exc:
        print(f"integration failed: {exc}", file=sys.stderr)
        return EXIT_INTEGRATION
    except (DsimError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
