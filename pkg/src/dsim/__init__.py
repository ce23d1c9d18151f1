"""Dark-state photonic quantum gates: pulse schedules, dynamics and compilation.

Photonic polarisation qubits are stored as atomic coherences by EIT,
rotated by tripod STIRAP and entangled through a shared cavity mode.  Times
are in ns and Rabi frequencies in rad/ns.
"""

from .compiler import (
    CNOT,
    CircuitIR,
    CircuitSyntaxError,
    CompiledProgram,
    CompileOptions,
    Cphase,
    Hadamard,
    Rotation,
    compile_circuit,
    decompose_rotation,
    expand_macros,
    ideal_matrix,
    parse_circuit,
    simulate_program,
)
from .darkstate import DarkSpace, compare_dark_space, dark_space, track_dark_state
from .dynamics import CouplingConstants, HamiltonianModel, Trajectory, propagate
from .errors import (
    AdiabaticityWarning,
    CavityLeakageWarning,
    ConfigurationError,
    DsimError,
    IntegrationError,
    NotReleasedError,
    UndefinedAngleError,
)
from .hilbert import CompositeBasis, MediumLevel, QubitState, StateVector, TwoQubitState, make_basis
from .protocols import (
    DEFAULT_TIMING,
    ADIABATIC_TIMING,
    REGISTER_TIMING,
    GateMatrix,
    GateParameters,
    ProtocolResult,
    ProtocolTiming,
    assemble_gate_matrix,
    default_couplings,
    gate_fidelity,
    run_cphase,
    run_one_qubit_gate,
    run_release,
    run_storage,
    run_storage_roundtrip,
)
from .pulses import Coupling, Gaussian, PulseEnvelope, PulseSchedule, Ramp, SampledTable, TransitionLabel
from .scenario import ScenarioConfig, load_config

__version__ = "0.1.0"
