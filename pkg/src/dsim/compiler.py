"""Gate-level circuits compiled into pulse schedules.

Circuit text format
-------------------
One statement per line; ``#`` starts a comment; keywords are case-insensitive::

    QUBITS 2                              # optional register size
    ROT q0 xi=0.7854 eta=1.5708 delta=1.5708
    H q1
    CPHASE q0 q1 zeta=3.14159
    CNOT q0 q1

``ROT`` needs all three keys, in any order.  Angles are floats or multiples
of ``pi`` written as ``pi``, ``-pi/2``, ``3*pi/4`` or ``0.5pi``.  Without a
``QUBITS`` line the register size is one more than the largest qubit index.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field, replace
from typing import Union

import numpy as np

from .dynamics import CouplingConstants
from .errors import ConfigurationError
from .protocols import (
    ADIABATIC_TIMING,
    GateMatrix,
    GateParameters,
    ProtocolPlan,
    ProtocolTiming,
    chain_steps,
    cphase_matrix,
    cphase_steps,
    default_couplings,
    matrix_from_plan,
    one_qubit_matrix,
    storage_step,
    tripod_steps,
)

MAX_QUBITS = 2
UNITARY_TOL = 1e-8


@dataclass(frozen=True)
class Rotation:
    target: int
    xi: float
    eta: float
    delta: float

    def parameters(self) -> GateParameters:
        return GateParameters.rotation(self.xi, self.eta, self.delta)


@dataclass(frozen=True)
class Hadamard:
    target: int


@dataclass(frozen=True)
class Cphase:
    control: int
    target: int
    zeta: float


@dataclass(frozen=True)
class CNOT:
    control: int
    target: int


Gate = Union[Rotation, Hadamard, Cphase, CNOT]


def _qubits(gate: Gate) -> tuple[int, ...]:
    if isinstance(gate, (Rotation, Hadamard)):
        return (gate.target,)
    return (gate.control, gate.target)


@dataclass(frozen=True)
class CircuitIR:
    qubit_count: int
    gates: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "gates", tuple(self.gates))
        if self.qubit_count < 1:
            raise ConfigurationError("a circuit needs at least one qubit")
        for gate in self.gates:
            qs = _qubits(gate)
            if any(q < 0 or q >= self.qubit_count for q in qs):
                raise ConfigurationError(f"{gate} addresses a qubit outside 0..{self.qubit_count - 1}")
            if len(qs) == 2 and qs[0] == qs[1]:
                raise ConfigurationError(f"{gate}: control and target must differ")


class CircuitSyntaxError(ConfigurationError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


# --------------------------------------------------------------------------
# parsing

_PI_RE = re.compile(r"^([+-]?(?:\d+\.?\d*|\.\d+)?)\s*\*?\s*pi(?:\s*/\s*(\d+\.?\d*))?$", re.IGNORECASE)
_QUBIT_RE = re.compile(r"^q(\d+)$", re.IGNORECASE)


def parse_angle(text: str) -> float:
    m = _PI_RE.match(text.strip())
    if m:
        coef = m.group(1)
        k = 1.0 if coef in ("", "+") else -1.0 if coef == "-" else float(coef)
        den = float(m.group(2)) if m.group(2) else 1.0
        return k * math.pi / den
    value = float(text)
    if not math.isfinite(value):
        raise ValueError(f"angle {text!r} is not finite")
    return value


def _qubit(token: str, line: int) -> int:
    m = _QUBIT_RE.match(token)
    if not m:
        raise CircuitSyntaxError(line, f"expected a qubit like q0, got {token!r}")
    return int(m.group(1))


def _keys(tokens, required, line: int) -> dict:
    out = {}
    for tok in tokens:
        if "=" not in tok:
            raise CircuitSyntaxError(line, f"expected key=value, got {tok!r}")
        key, value = tok.split("=", 1)
        key = key.strip().lower()
        if key not in required:
            raise CircuitSyntaxError(line, f"unknown key {key!r}")
        if key in out:
            raise CircuitSyntaxError(line, f"duplicate key {key!r}")
        try:
            out[key] = parse_angle(value)
        except ValueError:
            raise CircuitSyntaxError(line, f"bad angle {value!r}") from None
    missing = [k for k in required if k not in out]
    if missing:
        raise CircuitSyntaxError(line, f"missing {', '.join(missing)}")
    return out


def parse_circuit(text: str) -> CircuitIR:
    gates: list[Gate] = []
    declared = None
    highest = -1
    for lineno, raw in enumerate(text.splitlines(), start=1):
        body = raw.split("#", 1)[0].strip()
        if not body:
            continue
        op, *args = body.split()
        op = op.upper()
        if op == "QUBITS":
            if len(args) != 1 or not args[0].isdigit():
                raise CircuitSyntaxError(lineno, "QUBITS takes one positive integer")
            declared = int(args[0])
            continue
        if op == "ROT":
            if not args:
                raise CircuitSyntaxError(lineno, "ROT needs a qubit")
            q = _qubit(args[0], lineno)
            kv = _keys(args[1:], ("xi", "eta", "delta"), lineno)
            gate: Gate = Rotation(q, kv["xi"], kv["eta"], kv["delta"])
        elif op == "H":
            if len(args) != 1:
                raise CircuitSyntaxError(lineno, "H takes exactly one qubit")
            gate = Hadamard(_qubit(args[0], lineno))
        elif op == "CPHASE":
            if len(args) != 3:
                raise CircuitSyntaxError(lineno, "CPHASE takes two qubits and zeta=...")
            c, t = _qubit(args[0], lineno), _qubit(args[1], lineno)
            gate = Cphase(c, t, _keys(args[2:], ("zeta",), lineno)["zeta"])
        elif op == "CNOT":
            if len(args) != 2:
                raise CircuitSyntaxError(lineno, "CNOT takes exactly two qubits")
            gate = CNOT(_qubit(args[0], lineno), _qubit(args[1], lineno))
        else:
            raise CircuitSyntaxError(lineno, f"unknown gate {op!r}")
        qs = _qubits(gate)
        if len(qs) == 2 and qs[0] == qs[1]:
            raise CircuitSyntaxError(lineno, "control and target must differ")
        highest = max(highest, *qs)
        gates.append(gate)
    count = declared if declared is not None else max(1, highest + 1)
    if highest >= count:
        raise ConfigurationError(f"circuit uses q{highest} but declares {count} qubits")
    return CircuitIR(count, tuple(gates))


def format_gate(g: Gate) -> str:
    """One circuit-text line for ``g``; parses back to the same gate."""
    if isinstance(g, Rotation):
        return f"ROT q{g.target} xi={g.xi!r} eta={g.eta!r} delta={g.delta!r}"
    if isinstance(g, Hadamard):
        return f"H q{g.target}"
    if isinstance(g, Cphase):
        return f"CPHASE q{g.control} q{g.target} zeta={g.zeta!r}"
    return f"CNOT q{g.control} q{g.target}"


def format_circuit(circuit: CircuitIR) -> str:
    lines = [f"QUBITS {circuit.qubit_count}"] + [format_gate(g) for g in circuit.gates]
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# SU(2) decomposition and macros


def decompose_rotation(U) -> tuple[float, float, float]:
    """``(xi, eta, delta)`` with ``exp(-i (delta/2) n.sigma) = U``.

    ``U`` must be unitary; a determinant other than 1 is divided out with the
    principal square root.  Ranges: ``delta`` in ``[0, 2 pi)``, ``2 xi`` in
    ``[0, pi]``, ``eta`` in ``(-pi, pi]``.  For ``U = +-1`` the axis is
    ``(0, 0, 1)`` and ``delta`` is 0 or ``2 pi``.
    """
    U = np.asarray(U, dtype=complex)
    if U.shape != (2, 2):
        raise ConfigurationError("decompose_rotation needs a 2x2 matrix")
    if np.linalg.norm(U.conj().T @ U - np.eye(2)) > UNITARY_TOL:
        raise ConfigurationError("matrix is not unitary")
    U = U / np.sqrt(np.linalg.det(U))
    c = 0.5 * (U[0, 0] + U[1, 1]).real
    v = np.array(
        [
            (0.5j * (U[0, 1] + U[1, 0])).real,
            (0.5 * (U[1, 0] - U[0, 1])).real,
            (0.5j * (U[0, 0] - U[1, 1])).real,
        ]
    )
    s = float(np.linalg.norm(v))
    half = math.atan2(s, c)
    if s < 1e-14:
        return 0.0, 0.0, (0.0 if c > 0 else 2 * math.pi)
    n = v / s
    two_xi = math.acos(max(-1.0, min(1.0, n[2])))
    eta = math.atan2(n[1], n[0]) if math.hypot(n[0], n[1]) > 1e-14 else 0.0
    if eta <= -math.pi:
        eta += 2 * math.pi
    return two_xi / 2, eta, 2 * half


HADAMARD = np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2)


def hadamard_rotation(target: int) -> Rotation:
    xi, eta, delta = decompose_rotation(HADAMARD)
    return Rotation(target, xi, eta, delta)


def expand_macros(circuit: CircuitIR, lower_hadamard: bool = False) -> CircuitIR:
    """``CNOT(c, t)`` becomes ``H(t), Cphase(c, t, pi), H(t)``.

    With ``lower_hadamard`` every Hadamard is further replaced by its
    rotation parameters.  Macro-free circuits are returned unchanged.
    """
    out: list[Gate] = []
    for g in circuit.gates:
        if isinstance(g, CNOT):
            out += [Hadamard(g.target), Cphase(g.control, g.target, math.pi), Hadamard(g.target)]
        else:
            out.append(g)
    if lower_hadamard:
        out = [hadamard_rotation(g.target) if isinstance(g, Hadamard) else g for g in out]
    return CircuitIR(circuit.qubit_count, tuple(out))


# --------------------------------------------------------------------------
# ideal matrices


def gate_matrix(gate: Gate, qubit_count: int) -> np.ndarray:
    """Ideal photonic matrix of one gate; qubit 0 is the left tensor factor."""
    if isinstance(gate, CNOT):
        return _product([gate_matrix(g, qubit_count) for g in expand_macros(CircuitIR(qubit_count, (gate,))).gates])
    if isinstance(gate, Hadamard):
        gate = hadamard_rotation(gate.target)
    if isinstance(gate, Rotation):
        u = one_qubit_matrix(gate.parameters())
        if qubit_count == 1:
            return u
        return np.kron(u, np.eye(2)) if gate.target == 0 else np.kron(np.eye(2), u)
    return cphase_matrix(gate.zeta)


def _product(mats) -> np.ndarray:
    out = np.eye(mats[0].shape[0], dtype=complex)
    for m in mats:
        out = m @ out
    return out


def ideal_matrix(circuit: CircuitIR) -> np.ndarray:
    d = 2**circuit.qubit_count
    if not circuit.gates:
        return np.eye(d, dtype=complex)
    return _product([gate_matrix(g, circuit.qubit_count) for g in circuit.gates])


# --------------------------------------------------------------------------
# compilation


@dataclass(frozen=True)
class CompileOptions:
    """Compilation switches.

    ``timing=None`` picks :data:`ADIABATIC_TIMING`, whose storage is slow
    enough to hold a photon through several gates.  ``merge_c`` replaces each double STIRAP
    by the shorter merged-pulse tripod sequence (fewer pulses, lower
    fidelity).  ``empty`` is ``"identity"`` (store and release) or
    ``"empty"`` (no schedule) for gate-free circuits.
    """

    timing: ProtocolTiming | None = None
    merge_c: bool = False
    empty: str = "identity"

    def timing_for(self, qubit_count: int) -> ProtocolTiming:
        base = self.timing if self.timing is not None else ADIABATIC_TIMING
        return base.with_(merge_c=True) if self.merge_c else base


@dataclass(frozen=True)
class CompiledProgram:
    circuit: CircuitIR
    plan: ProtocolPlan | None
    metadata: list = field(default_factory=list)
    expansion: tuple = ()

    @property
    def media_count(self) -> int:
        return self.circuit.qubit_count

    def pulse_count(self) -> int:
        return len(self.plan.schedule.labels()) if self.plan else 0

    def to_dict(self) -> dict:
        return {
            "qubit_count": self.circuit.qubit_count,
            "circuit": format_circuit(self.circuit),
            "expansion": list(self.expansion),
            "steps": self.metadata,
            "cavity_windows": [list(w) for w in (self.plan.cavity_windows or ())] if self.plan else [],
            "schedule": self.plan.schedule.to_dict() if self.plan else None,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _relabel(step, prefix: str):
    envs = tuple(replace(env, label=f"{prefix}{env.label}") for env in step.schedule.envelopes)
    return replace(step, name=f"{prefix}{step.name}", schedule=replace(step.schedule, envelopes=envs))


def compile_circuit(
    circuit: CircuitIR,
    couplings: CouplingConstants | None = None,
    options: CompileOptions = CompileOptions(),
) -> CompiledProgram:
    """Lower a circuit to one pulse schedule: store, gate bodies in order, release.

    Rotations become a tripod double STIRAP on the target's medium; Cphase
    shelves the target's medium.  Qubit ``k`` lives in medium ``k + 1``.
    """
    if circuit.qubit_count > MAX_QUBITS:
        raise ConfigurationError(f"circuits on more than {MAX_QUBITS} qubits need several cavities; not supported")
    if options.empty not in ("identity", "empty"):
        raise ConfigurationError("options.empty must be 'identity' or 'empty'")
    expansion = tuple(format_gate(g) for g in expand_macros(circuit).gates)
    expanded = expand_macros(circuit, lower_hadamard=True)
    media = tuple(range(1, circuit.qubit_count + 1))
    timing = options.timing_for(circuit.qubit_count)
    couplings = couplings or default_couplings(circuit.qubit_count, timing)
    if not expanded.gates and options.empty == "empty":
        return CompiledProgram(expanded, None, [], expansion)

    base = GateParameters()
    steps = [storage_step("store", base, couplings, timing, media)]
    owner = [None]
    for k, gate in enumerate(expanded.gates):
        if isinstance(gate, Rotation):
            body = tripod_steps(gate.parameters(), timing, medium=gate.target + 1)
        elif isinstance(gate, Cphase):
            if circuit.qubit_count != 2:
                raise ConfigurationError("Cphase needs a two-qubit register")
            body = cphase_steps(GateParameters.cphase(gate.zeta), timing, shelved=gate.target + 1)
        else:
            raise ConfigurationError(f"unsupported gate {gate!r}")
        steps += [_relabel(s, f"g{k}.") for s in body]
        owner += [k] * len(body)
    steps.append(storage_step("release", base, couplings, timing, media))
    owner.append(None)
    plan = chain_steps(steps, circuit.qubit_count)

    metadata = []
    for step, k in zip(plan.steps, owner):
        metadata.append(
            {
                "gate_index": k,
                "gate": None if k is None else repr(expanded.gates[k]),
                "step": step.name,
                "kind": step.kind,
                "media": list(step.media),
                "window": list(step.schedule.window),
                "pulses": step.schedule.labels(),
            }
        )
    return CompiledProgram(expanded, plan, metadata, expansion)


def simulate_program(
    program: CompiledProgram,
    couplings: CouplingConstants | None = None,
    **run_kw,
) -> GateMatrix:
    """Tomography of a compiled program with basis-state runs."""
    if program.plan is None:
        raise ConfigurationError("empty program has no schedule to simulate")
    couplings = couplings or default_couplings(program.media_count, ADIABATIC_TIMING)
    return matrix_from_plan(program.plan, couplings, **run_kw)
