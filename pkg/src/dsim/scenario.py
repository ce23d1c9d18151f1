"""Scenario files for the batch front-end.

A scenario is a TOML document.  Top-level keys::

    kind        storage | one_qubit | cphase | circuit | validate_darkstates | sweep
    protocol    protocol run by sweep / validate_darkstates scenarios
                (storage | one_qubit | cphase | circuit)
    name, description, seed, tol, decay, n_samples, roundtrip, shelved,
    merge_c, convergence

Tables: ``[couplings]``, ``[timing]`` (any :class:`ProtocolTiming` field),
``[gate]``, ``[input]``, ``[circuit]``, ``[sweep]`` with ``[[sweep.axes]]``,
``[validate]``, ``[thresholds]`` and ``[output]``.  Unknown keys are errors.
Times are in ns and Rabi frequencies in rad/ns.
"""

from __future__ import annotations

import dataclasses
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .compiler import CircuitIR, parse_angle, parse_circuit
from .dynamics import CouplingConstants
from .errors import ConfigurationError
from .protocols import ADIABATIC_TIMING, DEFAULT_GN, DEFAULT_TIMING, REGISTER_TIMING, GateParameters, ProtocolTiming

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

KINDS = ("storage", "one_qubit", "cphase", "circuit", "validate_darkstates", "sweep")
PROTOCOLS = ("storage", "one_qubit", "cphase", "circuit")
SCENARIO_DIR = Path(__file__).parent / "scenarios"

_TOP_KEYS = {
    "kind", "protocol", "name", "description", "seed", "tol", "decay", "n_samples", "roundtrip",
    "shelved", "merge_c", "convergence", "couplings", "timing", "gate", "input", "circuit", "sweep",
    "validate", "thresholds", "output",
}
_COUPLING_KEYS = {"gN", "gN_minus", "gN_plus", "g_ratio", "g_cav", "cavity_n_max", "gamma_a", "gamma_e", "kappa"}
_TIMING_KEYS = {f.name for f in dataclasses.fields(ProtocolTiming)}
_PHASE_KEYS = {
    f.name for f in dataclasses.fields(GateParameters) if f.name.startswith("phi_")
}
_GATE_KEYS = {
    "storage": _PHASE_KEYS,
    "one_qubit": _PHASE_KEYS | {"xi", "eta", "delta"},
    "cphase": _PHASE_KEYS | {"zeta"},
    "circuit": set(),
}
_THRESHOLD_KEYS = {
    "min_fidelity", "max_excited_pop", "max_norm_loss", "max_leakage", "max_cavity_n2", "populations",
    "population_tol", "max_projector_distance", "max_unitarity_residual", "min_dark_projection",
    "max_convergence_delta", "max_geometric_ratio", "monotonic",
}
_MONOTONIC_ORDERS = ("strictly_decreasing", "strictly_increasing", "nonincreasing", "nondecreasing")
_OUTPUT_KEYS = {"trajectory", "summary", "matrix", "table", "schedule", "report", "trajectory_stride"}
_DEFAULT_OUTPUT = {
    "trajectory": "trajectory.csv",
    "summary": "summary.json",
    "matrix": "matrix.csv",
    "table": "sweep.csv",
    "schedule": "schedule.json",
    "report": "validate.json",
    "trajectory_stride": 1,
}
_VALIDATE_KEYS = {"samples", "fraction", "track_stride"}
_RATE_KEYS = ("gamma_a", "gamma_e", "kappa")


def _check_keys(table: dict, allowed: set, where: str) -> None:
    unknown = sorted(set(table) - allowed)
    if unknown:
        raise ConfigurationError(f"unknown key(s) in {where}: {', '.join(unknown)}")


def _number(value, where: str) -> float:
    if isinstance(value, bool):
        raise ConfigurationError(f"{where} must be a number")
    if isinstance(value, str):
        try:
            return parse_angle(value)
        except ValueError:
            raise ConfigurationError(f"{where}: cannot read {value!r} as a number") from None
    if not isinstance(value, (int, float)) or not math.isfinite(value):
        raise ConfigurationError(f"{where} must be a finite number")
    return float(value)


def _complex(value, where: str) -> complex:
    if isinstance(value, list):
        if len(value) != 2:
            raise ConfigurationError(f"{where}: complex pairs are [re, im]")
        return complex(_number(value[0], where), _number(value[1], where))
    if isinstance(value, str):
        try:
            return complex(value.replace(" ", ""))
        except ValueError:
            raise ConfigurationError(f"{where}: cannot read {value!r} as a complex number") from None
    return complex(_number(value, where))


@dataclass(frozen=True)
class SweepAxis:
    """One swept parameter and its grid values."""

    parameter: str
    values: tuple[float, ...]


@dataclass(frozen=True)
class ScenarioConfig:
    """Validated scenario.

    ``protocol`` is the physical protocol behind the run; for the simulation
    kinds it equals ``kind``.
    """

    kind: str
    protocol: str
    name: str = ""
    seed: int | None = None
    tol: float = 1e-10
    decay: bool = False
    n_samples: int = 2001
    roundtrip: bool = True
    shelved: int = 2
    merge_c: bool = False
    convergence: bool = False
    couplings: dict = field(default_factory=dict)
    timing: dict = field(default_factory=dict)
    gate: dict = field(default_factory=dict)
    input: dict = field(default_factory=dict)
    circuit: str | None = None
    sweep: tuple[SweepAxis, ...] = ()
    validate: dict = field(default_factory=dict)
    thresholds: dict = field(default_factory=dict)
    output: dict = field(default_factory=lambda: dict(_DEFAULT_OUTPUT))
    source: str | None = None

    # construction

    @classmethod
    def from_dict(cls, data: dict, source: str | None = None, base_dir: Path | None = None) -> "ScenarioConfig":
        _check_keys(data, _TOP_KEYS, "scenario")
        kind = data.get("kind")
        if kind not in KINDS:
            raise ConfigurationError(f"kind must be one of {', '.join(KINDS)}; got {kind!r}")
        if kind in PROTOCOLS:
            protocol = data.get("protocol", kind)
            if protocol != kind:
                raise ConfigurationError("'protocol' must match 'kind' for simulation scenarios")
        else:
            protocol = data.get("protocol", "one_qubit")
            if protocol not in PROTOCOLS:
                raise ConfigurationError(f"protocol must be one of {', '.join(PROTOCOLS)}; got {protocol!r}")

        seed = data.get("seed")
        if seed is not None and (isinstance(seed, bool) or not isinstance(seed, int) or seed < 0):
            raise ConfigurationError("seed must be a non-negative integer")
        tol = _number(data.get("tol", 1e-10), "tol")
        if not 0 < tol < 1e-2:
            raise ConfigurationError("tol must lie in (0, 1e-2)")
        n_samples = data.get("n_samples", 2001)
        if not isinstance(n_samples, int) or n_samples < 3:
            raise ConfigurationError("n_samples must be an integer >= 3")
        shelved = data.get("shelved", 2)
        if shelved not in (1, 2):
            raise ConfigurationError("shelved must be 1 or 2")
        flags = {}
        for key, default in (("decay", False), ("roundtrip", True), ("merge_c", False), ("convergence", False)):
            value = data.get(key, default)
            if not isinstance(value, bool):
                raise ConfigurationError(f"{key} must be true or false")
            flags[key] = value

        couplings = dict(data.get("couplings", {}))
        _check_keys(couplings, _COUPLING_KEYS, "[couplings]")
        for key, value in couplings.items():
            if key == "cavity_n_max":
                if not isinstance(value, int) or value < 0:
                    raise ConfigurationError("cavity_n_max must be a non-negative integer")
            elif key in ("gN_minus", "gN_plus", "g_cav") and isinstance(value, list):
                couplings[key] = [_number(v, f"couplings.{key}") for v in value]
            else:
                couplings[key] = _number(value, f"couplings.{key}")
                if couplings[key] < 0:
                    raise ConfigurationError(f"couplings.{key} must be >= 0")

        timing = dict(data.get("timing", {}))
        _check_keys(timing, _TIMING_KEYS, "[timing]")
        for key, value in timing.items():
            timing[key] = value if key == "merge_c" else _number(value, f"timing.{key}")

        gate = dict(data.get("gate", {}))
        _check_keys(gate, _GATE_KEYS[protocol], f"[gate] of a {protocol} scenario")
        gate = {k: _number(v, f"gate.{k}") for k, v in gate.items()}

        inp = dict(data.get("input", {}))
        _check_keys(inp, {"state", "random"}, "[input]")
        if inp.get("random") and seed is None:
            raise ConfigurationError("a random input state needs a seed")
        if "state" in inp and inp.get("random"):
            raise ConfigurationError("[input] takes either 'state' or 'random = true'")

        circuit = None
        if "circuit" in data:
            if protocol != "circuit":
                raise ConfigurationError("[circuit] is only valid for circuit scenarios")
            ctab = data["circuit"]
            _check_keys(ctab, {"text", "file"}, "[circuit]")
            if ("text" in ctab) == ("file" in ctab):
                raise ConfigurationError("[circuit] needs exactly one of 'text' or 'file'")
            if "file" in ctab:
                path = Path(ctab["file"])
                if not path.is_absolute() and base_dir is not None:
                    path = base_dir / path
                try:
                    circuit = path.read_text()
                except OSError as exc:
                    raise ConfigurationError(f"cannot read circuit file {path}: {exc}") from None
            else:
                circuit = str(ctab["text"])

        sweep = ()
        if kind == "sweep":
            stab = data.get("sweep")
            if not stab or "axes" not in stab:
                raise ConfigurationError("a sweep scenario needs [[sweep.axes]]")
            _check_keys(stab, {"axes"}, "[sweep]")
            sweep = tuple(_parse_axis(ax, protocol) for ax in stab["axes"])
            if len({ax.parameter for ax in sweep}) != len(sweep):
                raise ConfigurationError("a parameter may be swept on one axis only")
        elif "sweep" in data:
            raise ConfigurationError("[sweep] is only valid for sweep scenarios")

        validate = dict(data.get("validate", {}))
        _check_keys(validate, _VALIDATE_KEYS, "[validate]")
        if kind == "validate_darkstates" and validate.get("samples", 50) > 0 and seed is None:
            raise ConfigurationError("dark-state validation samples random times and needs a seed")

        thresholds = dict(data.get("thresholds", {}))
        _check_keys(thresholds, _THRESHOLD_KEYS, "[thresholds]")
        mono = thresholds.get("monotonic")
        if mono is not None:
            if not isinstance(mono, dict) or set(mono) != {"column", "order"} or mono["order"] not in _MONOTONIC_ORDERS:
                raise ConfigurationError(f"thresholds.monotonic needs column and order in {_MONOTONIC_ORDERS}")

        output = dict(_DEFAULT_OUTPUT)
        out_tab = data.get("output", {})
        _check_keys(out_tab, _OUTPUT_KEYS, "[output]")
        output.update(out_tab)

        cfg = cls(
            kind=kind,
            protocol=protocol,
            name=str(data.get("name", "")),
            seed=seed,
            tol=tol,
            decay=flags["decay"],
            n_samples=n_samples,
            roundtrip=flags["roundtrip"],
            shelved=shelved,
            merge_c=flags["merge_c"],
            convergence=flags["convergence"],
            couplings=couplings,
            timing=timing,
            gate=gate,
            input=inp,
            circuit=circuit,
            sweep=sweep,
            validate=validate,
            thresholds=thresholds,
            output=output,
            source=source,
        )
        cfg.timing_obj()
        cfg.gate_obj()
        if protocol == "circuit":
            cfg.circuit_ir()
        cfg.input_vector()
        return cfg

    def with_(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)

    def with_parameter(self, name: str, value: float) -> "ScenarioConfig":
        """Copy with one sweep parameter set, routed to its table."""
        if name in _TIMING_KEYS:
            return self.with_(timing={**self.timing, name: value})
        if name in _COUPLING_KEYS:
            return self.with_(couplings={**self.couplings, name: value})
        return self.with_(gate={**self.gate, name: value})

    # physics objects

    @property
    def media_count(self) -> int:
        if self.protocol == "cphase":
            return 2
        if self.protocol == "circuit":
            return self.circuit_ir().qubit_count
        return 1

    def timing_obj(self) -> ProtocolTiming:
        if self.media_count == 2:
            base = REGISTER_TIMING
        elif self.protocol == "circuit":
            base = ADIABATIC_TIMING
        else:
            base = DEFAULT_TIMING
        try:
            timing = base.with_(**self.timing)
        except TypeError as exc:
            raise ConfigurationError(str(exc)) from None
        return timing.with_(merge_c=True) if self.merge_c else timing

    def couplings_obj(self) -> CouplingConstants:
        media = self.media_count
        c = self.couplings
        gN = c.get("gN", DEFAULT_GN)
        minus = c.get("gN_minus", gN)
        plus = c.get("gN_plus", gN)
        rates = {k: c[k] for k in _RATE_KEYS if k in c}
        if media == 1:
            return CouplingConstants(gN_minus=minus, gN_plus=plus, **rates)
        g = c.get("g_cav", c.get("g_ratio", 10.0) * self.timing_obj().cavity_peak)
        return CouplingConstants(
            gN_minus=minus if isinstance(minus, list) else (minus, minus),
            gN_plus=plus if isinstance(plus, list) else (plus, plus),
            g_cav=g if isinstance(g, list) else (g, g),
            cavity_n_max=int(c.get("cavity_n_max", 2)),
            **rates,
        )

    def gate_obj(self) -> GateParameters:
        g = dict(self.gate)
        try:
            if self.protocol == "one_qubit":
                return GateParameters.rotation(g.pop("xi", 0.0), g.pop("eta", 0.0), g.pop("delta", 0.0), **g)
            if self.protocol == "cphase":
                return GateParameters.cphase(g.pop("zeta", math.pi), **g)
            return GateParameters(**g)
        except TypeError as exc:
            raise ConfigurationError(str(exc)) from None

    def circuit_ir(self) -> CircuitIR:
        if self.circuit is None:
            raise ConfigurationError("a circuit scenario needs [circuit] text or file")
        return parse_circuit(self.circuit)

    @property
    def input_dim(self) -> int:
        return 2**self.media_count

    def input_vector(self) -> np.ndarray:
        """Normalised input amplitudes (photonic basis)."""
        d = self.input_dim
        if self.input.get("random"):
            rng = np.random.default_rng(self.seed)
            z = rng.normal(size=d) + 1j * rng.normal(size=d)
            return z / np.linalg.norm(z)
        if "state" not in self.input:
            v = np.zeros(d, dtype=complex)
            if self.protocol == "cphase":
                v[:] = 0.5
            else:
                v[0] = 1.0
            return v
        raw = self.input["state"]
        if not isinstance(raw, list) or len(raw) != d:
            raise ConfigurationError(f"input.state needs {d} amplitudes for this protocol")
        v = np.array([_complex(x, "input.state") for x in raw])
        norm = np.linalg.norm(v)
        if norm == 0:
            raise ConfigurationError("input.state is the zero vector")
        return v / norm

    def run_kwargs(self) -> dict:
        return {"decay": self.decay, "tol": self.tol, "n_samples": self.n_samples}


def _parse_axis(ax: dict, protocol: str) -> SweepAxis:
    _check_keys(ax, {"parameter", "values", "start", "stop", "steps"}, "[[sweep.axes]]")
    name = ax.get("parameter")
    allowed = _TIMING_KEYS | _COUPLING_KEYS | _GATE_KEYS[protocol]
    if name not in allowed or name in ("merge_c", "cavity_n_max"):
        raise ConfigurationError(f"cannot sweep {name!r} for a {protocol} protocol")
    if "values" in ax:
        if any(k in ax for k in ("start", "stop", "steps")):
            raise ConfigurationError("a sweep axis takes 'values' or 'start/stop/steps', not both")
        values = tuple(_number(v, f"sweep {name}") for v in ax["values"])
    else:
        try:
            start, stop, steps = ax["start"], ax["stop"], ax["steps"]
        except KeyError as exc:
            raise ConfigurationError(f"sweep axis {name!r} is missing {exc.args[0]}") from None
        if not isinstance(steps, int) or steps < 1:
            raise ConfigurationError("sweep steps must be a positive integer")
        values = tuple(float(x) for x in np.linspace(_number(start, "start"), _number(stop, "stop"), steps))
    if not values:
        raise ConfigurationError(f"sweep axis {name!r} has no values")
    return SweepAxis(name, values)


def resolve_path(name: str | Path) -> Path:
    """A path on disk, or the name of a bundled scenario (with or without ``.toml``)."""
    path = Path(name)
    if path.exists():
        return path
    bundled = SCENARIO_DIR / (path.name if path.suffix == ".toml" else f"{path.name}.toml")
    if bundled.exists():
        return bundled
    raise ConfigurationError(f"no scenario file {name}")


def bundled_scenarios() -> list[str]:
    return sorted(p.stem for p in SCENARIO_DIR.glob("*.toml"))


def load_config(name: str | Path) -> ScenarioConfig:
    path = resolve_path(name)
    try:
        data = tomllib.loads(path.read_text())
    except tomllib.TOMLDecodeError as exc:
        raise ConfigurationError(f"{path}: {exc}") from None
    except OSError as exc:
        raise ConfigurationError(f"cannot read {path}: {exc}") from None
    return ScenarioConfig.from_dict(data, source=str(path), base_dir=path.parent)
