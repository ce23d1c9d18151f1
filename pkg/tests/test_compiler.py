import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm

from dsim.compiler import (
    CNOT,
    HADAMARD,
    CircuitIR,
    CircuitSyntaxError,
    CompileOptions,
    Cphase,
    Hadamard,
    Rotation,
    compile_circuit,
    decompose_rotation,
    expand_macros,
    format_circuit,
    gate_matrix,
    ideal_matrix,
    parse_angle,
    parse_circuit,
    simulate_program,
)
from dsim.errors import ConfigurationError
from dsim.protocols import gate_fidelity

SX = np.array([[0, 1], [1, 0]], complex)
SY = np.array([[0, -1j], [1j, 0]], complex)
SZ = np.diag([1, -1]).astype(complex)
CNOT_MATRIX = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], complex)


def su2(xi, eta, delta):
    n = (math.sin(2 * xi) * math.cos(eta), math.sin(2 * xi) * math.sin(eta), math.cos(2 * xi))
    return expm(-0.5j * delta * (n[0] * SX + n[1] * SY + n[2] * SZ))


@pytest.mark.parametrize(
    "text, value",
    [("0.5", 0.5), ("pi", math.pi), ("-pi/2", -math.pi / 2), ("3*pi/4", 0.75 * math.pi), ("0.5pi", 0.5 * math.pi),
     ("PI", math.pi), ("-pi", -math.pi), ("1e-3", 1e-3)],
)
def test_parse_angle(text, value):
    assert parse_angle(text) == pytest.approx(value)


@pytest.mark.parametrize("text", ["pie", "nan", "inf", "", "2pi/"])
def test_parse_angle_rejects(text):
    with pytest.raises(ValueError):
        parse_angle(text)


def test_parse_full_grammar():
    text = """
    # demo
    QUBITS 2
    rot q0 delta=pi xi=0.1 eta=-0.2   # keys in any order
    H q1
    CPHASE q0 q1 zeta=pi/2
    CNOT q1 q0
    """
    c = parse_circuit(text)
    assert c.qubit_count == 2
    assert c.gates == (
        Rotation(0, 0.1, -0.2, math.pi),
        Hadamard(1),
        Cphase(0, 1, math.pi / 2),
        CNOT(1, 0),
    )


def test_register_size_inferred():
    assert parse_circuit("H q1\n").qubit_count == 2
    assert parse_circuit("").qubit_count == 1


@pytest.mark.parametrize(
    "text, line, fragment",
    [
        ("H q0\nFOO q0\n", 2, "unknown gate"),
        ("ROT q0 xi=1 eta=2\n", 1, "missing delta"),
        ("ROT q0 xi=1 eta=2 delta=3 zeta=1\n", 1, "unknown key"),
        ("ROT q0 xi=1 xi=2 eta=2 delta=3\n", 1, "duplicate"),
        ("\n\nH x0\n", 3, "expected a qubit"),
        ("CNOT q0 q0\n", 1, "differ"),
        ("CPHASE q0 q1 zeta=abc\n", 1, "bad angle"),
        ("QUBITS two\n", 1, "QUBITS"),
        ("H q0 q1\n", 1, "exactly one"),
    ],
)
def test_syntax_errors_carry_line_numbers(text, line, fragment):
    with pytest.raises(CircuitSyntaxError) as err:
        parse_circuit(text)
    assert err.value.line == line
    assert str(err.value).startswith(f"line {line}:")
    assert fragment in str(err.value)


def test_declared_size_too_small():
    with pytest.raises(ConfigurationError):
        parse_circuit("QUBITS 1\nCNOT q0 q1\n")


def test_circuit_validation():
    with pytest.raises(ConfigurationError):
        CircuitIR(0)
    with pytest.raises(ConfigurationError):
        CircuitIR(1, (Hadamard(1),))


def test_format_parse_roundtrip():
    c = CircuitIR(2, (Rotation(1, 0.3, -1.2, 2.5), Hadamard(0), Cphase(1, 0, 0.7), CNOT(0, 1)))
    assert parse_circuit(format_circuit(c)) == c


@settings(max_examples=60, deadline=None)
@given(
    xi=st.floats(0.0, math.pi / 2),
    eta=st.floats(-math.pi + 1e-9, math.pi),
    delta=st.floats(1e-3, 2 * math.pi - 1e-3),
    phase=st.floats(-math.pi, math.pi),
)
def test_decompose_rotation_roundtrip(xi, eta, delta, phase):
    U = np.exp(1j * phase) * su2(xi, eta, delta)
    x, e, d = decompose_rotation(U)
    assert 0 <= d < 2 * math.pi
    assert 0 <= 2 * x <= math.pi + 1e-12
    V = su2(x, e, d)
    assert abs(np.trace(V.conj().T @ U)) / 2 == pytest.approx(1.0, abs=1e-9)


def test_decompose_special_cases():
    assert decompose_rotation(np.eye(2)) == (0.0, 0.0, 0.0)
    assert decompose_rotation(np.diag([1j, 1j]))[2] in (0.0, 2 * math.pi)
    with pytest.raises(ConfigurationError):
        decompose_rotation(np.ones((2, 2)))
    with pytest.raises(ConfigurationError):
        decompose_rotation(np.eye(3))


def test_hadamard_rotation_parameters():
    x, e, d = decompose_rotation(HADAMARD)
    assert 2 * x == pytest.approx(math.pi / 4)
    assert e == pytest.approx(0.0)
    assert d == pytest.approx(math.pi)


def test_cnot_expansion():
    c = expand_macros(CircuitIR(2, (CNOT(0, 1),)))
    assert c.gates == (Hadamard(1), Cphase(0, 1, math.pi), Hadamard(1))
    lowered = expand_macros(CircuitIR(2, (CNOT(0, 1),)), lower_hadamard=True)
    assert all(isinstance(g, (Rotation, Cphase)) for g in lowered.gates)
    plain = CircuitIR(1, (Rotation(0, 0.1, 0.2, 0.3),))
    assert expand_macros(plain) == plain


def test_ideal_matrices():
    assert gate_fidelity(ideal_matrix(CircuitIR(2, (CNOT(0, 1),))), CNOT_MATRIX) == pytest.approx(1.0)
    assert gate_fidelity(gate_matrix(Hadamard(0), 1), HADAMARD) == pytest.approx(1.0)
    # qubit 0 is the left tensor factor
    X0 = gate_matrix(Rotation(0, math.pi / 4, 0.0, math.pi), 2)
    assert gate_fidelity(X0, np.kron(SX, np.eye(2))) == pytest.approx(1.0)
    assert gate_fidelity(gate_matrix(Cphase(0, 1, math.pi), 2), np.diag([1, 1, 1, -1])) == pytest.approx(1.0)
    assert np.allclose(ideal_matrix(CircuitIR(2)), np.eye(4))


def test_compile_rotation_pulse_counts():
    c = parse_circuit("ROT q0 xi=0.7854 eta=1.5708 delta=1.5708\n")
    merged = compile_circuit(c, options=CompileOptions(merge_c=True))
    assert merged.pulse_count() == 5
    assert merged.plan.schedule.labels() == ["store", "g0.d", "g0.c", "g0.d_prime", "release"]
    plain = compile_circuit(c)
    assert plain.pulse_count() == 6
    kinds = [s.kind for s in plain.plan.steps]
    assert kinds == ["storage", "tripod", "tripod", "release"]


def test_compile_cnot_metadata():
    p = compile_circuit(parse_circuit("CNOT q0 q1\n"))
    assert p.expansion == ("H q1", f"CPHASE q0 q1 zeta={math.pi!r}", "H q1")
    d = p.to_dict()
    assert d["expansion"] == list(p.expansion)
    steps = [m["step"] for m in d["steps"]]
    assert steps[0] == "store" and steps[-1] == "release"
    assert {m["gate_index"] for m in d["steps"]} == {None, 0, 1, 2}
    assert len(p.plan.cavity_windows) == 1
    assert p.to_json() == compile_circuit(parse_circuit("CNOT q0 q1\n")).to_json()


def test_compile_empty_circuit():
    empty = compile_circuit(CircuitIR(1), options=CompileOptions(empty="empty"))
    assert empty.plan is None and empty.pulse_count() == 0
    with pytest.raises(ConfigurationError):
        simulate_program(empty)
    identity = compile_circuit(CircuitIR(1))
    assert [s.kind for s in identity.plan.steps] == ["storage", "release"]


def test_compile_rejects_bad_requests():
    with pytest.raises(ConfigurationError):
        compile_circuit(CircuitIR(3, (Hadamard(2),)))
    with pytest.raises(ConfigurationError):
        compile_circuit(CircuitIR(1), options=CompileOptions(empty="nothing"))


def test_steps_never_overlap():
    p = compile_circuit(parse_circuit("H q0\nCPHASE q0 q1 zeta=1\nROT q1 xi=0.2 eta=0 delta=1\n"))
    windows = [s.schedule.window for s in p.plan.steps]
    for (a0, a1), (b0, b1) in zip(windows, windows[1:]):
        assert b0 > a1


@pytest.mark.slow
def test_simulated_hadamard():
    p = compile_circuit(parse_circuit("H q0\n"))
    gm = simulate_program(p)
    assert gate_fidelity(gm.matrix, HADAMARD) >= 0.999
