"""Pulse-level protocols: storage, tripod one-qubit gates and the cavity Cphase.

Every protocol is a list of :class:`ProtocolStep` objects, each carrying its
own pulse schedule.  :func:`chain_steps` lays the steps end to end with a
guard gap of one pulse width and produces a :class:`ProtocolPlan` that can be
turned into a Hamiltonian model and propagated.

Conventions
-----------
* Qubit value 0 is the sigma_- photon, 1 the sigma_+ photon.  In a two-media
  register qubit 0 lives in medium 1 and qubit 1 in medium 2.
* The input photon enters as the dark polariton of the storage fields at the
  start of the run, and the output qubit is read as overlaps with the dark
  polaritons of the release fields at the end.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .darkstate import track_dark_state
from .dynamics import CouplingConstants, HamiltonianModel, Trajectory, propagate
from .errors import AdiabaticityWarning, CavityLeakageWarning, ConfigurationError
from .hilbert import (
    MediumLevel,
    QubitState,
    StateVector,
    TwoQubitState,
    fidelity_vectors,
)
from .pulses import (
    Coupling,
    Gaussian,
    PulseEnvelope,
    PulseSchedule,
    Ramp,
    TransitionLabel,
    adiabaticity_profile,
)

L = MediumLevel
ADIABATIC_WARN = 0.2
CAVITY_N2_WARN = 1e-3
LEAKAGE_THRESHOLD = 1e-3
# fraction of a step's peak coupling below which the margin is not evaluated
MARGIN_ACTIVE_FRACTION = 1e-2

SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
SZ = np.array([[1, 0], [0, -1]], dtype=complex)


# --------------------------------------------------------------------------
# parameters


@dataclass(frozen=True)
class GateParameters:
    """Gate angles and laser phases (radians).

    The derived angles are properties so they always equal their defining
    phase differences: ``eta = phi_c_plus - phi_c_minus``,
    ``delta = phi_d_prime - phi_d`` and ``zeta = phi_c2 - phi_c2_prime``.
    ``phi_shelve_a`` defaults to ``phi_shelve + pi``.
    """

    xi: float = 0.0
    phi_c_minus: float = 0.0
    phi_c_plus: float = 0.0
    phi_d: float = 0.0
    phi_d_prime: float = 0.0
    phi_minus: float = 0.0
    phi_plus: float = 0.0
    phi_minus_prime: float = 0.0
    phi_plus_prime: float = 0.0
    phi_c1: float = 0.0
    phi_c2: float = 0.0
    phi_c1_prime: float = 0.0
    phi_c2_prime: float = 0.0
    phi_shelve: float = 0.0
    phi_shelve_a: float | None = None

    def __post_init__(self):
        for name, value in self.__dict__.items():
            if value is not None and not math.isfinite(value):
                raise ConfigurationError(f"{name} must be finite")
        if self.phi_shelve_a is None:
            object.__setattr__(self, "phi_shelve_a", self.phi_shelve + math.pi)

    @property
    def eta(self) -> float:
        return self.phi_c_plus - self.phi_c_minus

    @property
    def delta(self) -> float:
        return self.phi_d_prime - self.phi_d

    @property
    def zeta(self) -> float:
        return self.phi_c2 - self.phi_c2_prime

    @property
    def axis(self) -> np.ndarray:
        """Rotation axis ``n = (sin 2xi cos eta, sin 2xi sin eta, cos 2xi)``."""
        s = math.sin(2 * self.xi)
        return np.array([s * math.cos(self.eta), s * math.sin(self.eta), math.cos(2 * self.xi)])

    @classmethod
    def rotation(cls, xi: float, eta: float, delta: float, **phases) -> "GateParameters":
        """One-qubit gate with ``phi_c_minus = phi_d = 0`` unless overridden."""
        pcm = phases.pop("phi_c_minus", 0.0)
        pd = phases.pop("phi_d", 0.0)
        return cls(xi=xi, phi_c_minus=pcm, phi_c_plus=pcm + eta, phi_d=pd, phi_d_prime=pd + delta, **phases)

    @classmethod
    def cphase(cls, zeta: float, **phases) -> "GateParameters":
        p2 = phases.pop("phi_c2", 0.0)
        return cls(phi_c2=p2, phi_c2_prime=p2 - zeta, **phases)

    def with_(self, **changes) -> "GateParameters":
        return replace(self, **changes)


@dataclass(frozen=True)
class ProtocolTiming:
    """Pulse widths (ns), areas and delays of every protocol step.

    Delays are fractions of the step's width.  ``duration_scale`` stretches
    every width and delay; ``area_scale`` multiplies every peak Rabi
    frequency.  The defaults reproduce the π/4-rotation run: ``g sqrt(N)
    T_pm = 12``, ``Omega_pm^max / g sqrt(N) = 25``, ``Omega^max T = 12``.
    """

    storage_fwhm: float = 20.0
    storage_ratio: float = 25.0
    tripod_fwhm: float = 5.0
    tripod_area: float = 12.0
    tripod_delay: float = 0.7
    merge_c: bool = False
    merged_c_width: float = 1.2
    merged_d_offset: float = 1.0
    shelving_peak: float = 30.0
    shelving_fwhm: float = 5.0
    shelving_delay: float = 0.8
    cavity_fwhm: float = 5.0
    cavity_area: float = 12.0
    cavity_delay: float = 0.6
    duration_scale: float = 1.0
    area_scale: float = 1.0

    def __post_init__(self):
        for name in ("storage_fwhm", "tripod_fwhm", "shelving_fwhm", "cavity_fwhm", "duration_scale", "area_scale"):
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"{name} must be > 0")

    def width(self, base: float) -> float:
        return base * self.duration_scale

    @property
    def cavity_peak(self) -> float:
        return self.cavity_area / self.cavity_fwhm

    def with_(self, **changes) -> "ProtocolTiming":
        return replace(self, **changes)


DEFAULT_TIMING = ProtocolTiming()
# g sqrt(N) T_pm = 24: storage fully adiabatic, so unstored amplitude cannot
# dephase while the photon is held
ADIABATIC_TIMING = DEFAULT_TIMING.with_(storage_fwhm=40.0)
# two-media runs hold the photons for a long time, so storage must be clean
REGISTER_TIMING = ADIABATIC_TIMING
# g sqrt(N) T_pm = 12 with T_pm = 20 ns
DEFAULT_GN = 0.6


def default_couplings(
    media: int = 1,
    timing: ProtocolTiming = DEFAULT_TIMING,
    g_ratio: float = 10.0,
    cavity_n_max: int = 2,
    **rates,
) -> CouplingConstants:
    """Default couplings: ``g sqrt(N) = 0.6`` rad/ns in every medium and, for two
    media, ``g_cav = g_ratio * Omega_c+^max``."""
    gN = DEFAULT_GN
    if media == 1:
        return CouplingConstants(gN_minus=(gN,), gN_plus=(gN,), **rates)
    g = g_ratio * timing.cavity_peak
    return CouplingConstants(gN_minus=(gN, gN), gN_plus=(gN, gN), g_cav=(g, g), cavity_n_max=cavity_n_max, **rates)


# --------------------------------------------------------------------------
# steps and plans


@dataclass(frozen=True)
class ProtocolStep:
    """One protocol step: ``kind`` is storage, release, tripod, shelving or cavity."""

    name: str
    kind: str
    media: tuple[int, ...]
    schedule: PulseSchedule

    def shifted(self, dt: float) -> "ProtocolStep":
        return replace(self, schedule=self.schedule.shifted(dt))

    @property
    def width(self) -> float:
        return max(getattr(env.shape, "fwhm", 0.0) for env in self.schedule.envelopes)


@dataclass(frozen=True)
class ProtocolPlan:
    steps: tuple[ProtocolStep, ...]
    schedule: PulseSchedule
    media_count: int
    cavity_windows: tuple | None = None

    def model(self, couplings: CouplingConstants, decay: bool = False) -> HamiltonianModel:
        if self.media_count == 1:
            return HamiltonianModel.single(couplings, self.schedule, decay)
        return HamiltonianModel.two_media(couplings, self.schedule, decay, self.cavity_windows)

    def step_metadata(self) -> list[dict]:
        return [
            {
                "name": s.name,
                "kind": s.kind,
                "media": list(s.media),
                "window": list(s.schedule.window),
                "pulses": s.schedule.labels(),
            }
            for s in self.steps
        ]


def chain_steps(steps, media_count: int) -> ProtocolPlan:
    """Concatenate steps with a guard gap of one pulse width between neighbours.

    The gap is the larger of the two neighbouring steps' widths.  The cavity
    coupling is switched on only over cavity steps.
    """
    steps = [s for s in steps if s is not None]
    if not steps:
        raise ConfigurationError("a protocol needs at least one step")
    placed = [steps[0].shifted(-steps[0].schedule.window[0])]
    for step in steps[1:]:
        prev = placed[-1]
        gap = max(prev.width, step.width)
        placed.append(step.shifted(prev.schedule.window[1] + gap - step.schedule.window[0]))
    envelopes = tuple(env for s in placed for env in s.schedule.envelopes)
    schedule = PulseSchedule((placed[0].schedule.window[0], placed[-1].schedule.window[1]), envelopes)
    windows = _cavity_windows(placed) if media_count == 2 else None
    return ProtocolPlan(tuple(placed), schedule, media_count, windows)


def _cavity_windows(steps) -> tuple:
    """One window per run of consecutive cavity steps (gaps inside a run included)."""
    windows: list[tuple[float, float]] = []
    run_start = None
    for k, step in enumerate(steps):
        if step.kind == "cavity" and run_start is None:
            run_start = step.schedule.window[0]
        if run_start is not None and (k + 1 == len(steps) or steps[k + 1].kind != "cavity"):
            if step.kind == "cavity":
                windows.append((run_start, step.schedule.window[1]))
            run_start = None
    return tuple(windows)


def _env(coupling: Coupling, medium: int, shape, phase: float, label: str) -> PulseEnvelope:
    return PulseEnvelope(TransitionLabel(coupling, medium), shape, float(phase), label)


def storage_step(
    direction: str,
    gate: GateParameters,
    couplings: CouplingConstants,
    timing: ProtocolTiming = DEFAULT_TIMING,
    media: tuple[int, ...] = (1,),
) -> ProtocolStep:
    """Storage (``"store"``: fields ramp off) or release (``"release"``: fields ramp on)."""
    if direction not in ("store", "release"):
        raise ConfigurationError(f"direction must be 'store' or 'release', got {direction!r}")
    ramp = "off" if direction == "store" else "on"
    fwhm = timing.width(timing.storage_fwhm)
    if direction == "store":
        phases = {"-": gate.phi_minus, "+": gate.phi_plus}
    else:
        phases = {"-": gate.phi_minus_prime, "+": gate.phi_plus_prime}
    envs = []
    for m in media:
        for coupling, ell in ((Coupling.OmegaMinus, "-"), (Coupling.OmegaPlus, "+")):
            peak = timing.storage_ratio * couplings.gN(ell, m) * timing.area_scale
            envs.append(_env(coupling, m, Ramp(peak, fwhm, 0.0, ramp), phases[ell], direction))
    kind = "storage" if direction == "store" else "release"
    return ProtocolStep(direction, kind, tuple(media), PulseSchedule.from_envelopes(envs))


def _c_pair(gate: GateParameters, medium: int, peak: float, fwhm: float, center: float, label: str):
    out = []
    for coupling, amp, phase in (
        (Coupling.OmegaCMinus, math.cos(gate.xi), gate.phi_c_minus),
        (Coupling.OmegaCPlus, math.sin(gate.xi), gate.phi_c_plus),
    ):
        if peak * abs(amp) > 0:
            out.append(_env(coupling, medium, Gaussian(peak * abs(amp), fwhm, center), phase, label))
    return out


def tripod_steps(gate: GateParameters, timing: ProtocolTiming = DEFAULT_TIMING, medium: int = 1) -> list[ProtocolStep]:
    """The two STIRAPs of a one-qubit gate.

    STIRAP 1 runs ``Omega_d`` then ``Omega_c``; STIRAP 2 runs ``Omega_c`` then
    ``Omega_d`` with phase ``phi_d'``.  With ``timing.merge_c`` the two
    ``Omega_c`` pulses become one longer pulse between the ``Omega_d`` pair.
    """
    if not 0.0 <= gate.xi <= math.pi / 2 + 1e-12:
        raise ConfigurationError(f"xi must lie in [0, pi/2], got {gate.xi}")
    T = timing.width(timing.tripod_fwhm)
    peak = timing.tripod_area / timing.tripod_fwhm * timing.area_scale
    tau = timing.tripod_delay * T
    sfx = "" if medium == 1 else f"_m{medium}"

    def d_pulse(center, phase, label):
        return _env(Coupling.OmegaD, medium, Gaussian(peak, T, center), phase, label)

    if timing.merge_c:
        off = timing.merged_d_offset * T
        envs = [d_pulse(-off, gate.phi_d, "d" + sfx)]
        envs += _c_pair(gate, medium, peak, timing.merged_c_width * T, 0.0, "c" + sfx)
        envs.append(d_pulse(off, gate.phi_d_prime, "d_prime" + sfx))
        return [ProtocolStep("tripod" + sfx, "tripod", (medium,), PulseSchedule.from_envelopes(envs))]
    first = [d_pulse(0.0, gate.phi_d, "d" + sfx)] + _c_pair(gate, medium, peak, T, tau, "c" + sfx)
    second = _c_pair(gate, medium, peak, T, 0.0, "c_prime" + sfx) + [d_pulse(tau, gate.phi_d_prime, "d_prime" + sfx)]
    return [
        ProtocolStep("stirap_1" + sfx, "tripod", (medium,), PulseSchedule.from_envelopes(first)),
        ProtocolStep("stirap_2" + sfx, "tripod", (medium,), PulseSchedule.from_envelopes(second)),
    ]


def cphase_steps(gate: GateParameters, timing: ProtocolTiming = DEFAULT_TIMING, shelved: int = 2) -> list[ProtocolStep]:
    """Shelving, the two cavity-mediated transfers and unshelving.

    ``shelved`` is the medium whose ``c_+`` population is parked in ``d``;
    ``phi_c2``/``phi_c2_prime`` belong to that medium.
    """
    if shelved not in (1, 2):
        raise ConfigurationError("shelved medium must be 1 or 2")
    other = 3 - shelved
    Ts = timing.width(timing.shelving_fwhm)
    ps = timing.shelving_peak * timing.area_scale
    tau_s = timing.shelving_delay * Ts
    Tc = timing.width(timing.cavity_fwhm)
    pc = timing.cavity_peak * timing.area_scale
    tau_c = timing.cavity_delay * Tc

    def sched(envs):
        return PulseSchedule.from_envelopes(envs)

    a_plus, plus = Coupling.OmegaAPlus, Coupling.OmegaPlus
    shelve = sched(
        [
            _env(a_plus, shelved, Gaussian(ps, Ts, 0.0), gate.phi_shelve_a, "shelve_a"),
            _env(plus, shelved, Gaussian(ps, Ts, tau_s), gate.phi_shelve, "shelve_plus"),
        ]
    )
    forward = sched(
        [
            _env(Coupling.OmegaCPlus, shelved, Gaussian(pc, Tc, 0.0), gate.phi_c2, "cavity_c2"),
            _env(Coupling.OmegaCPlus, other, Gaussian(pc, Tc, tau_c), gate.phi_c1, "cavity_c1"),
        ]
    )
    back = sched(
        [
            _env(Coupling.OmegaCPlus, other, Gaussian(pc, Tc, 0.0), gate.phi_c1_prime, "cavity_c1_prime"),
            _env(Coupling.OmegaCPlus, shelved, Gaussian(pc, Tc, tau_c), gate.phi_c2_prime, "cavity_c2_prime"),
        ]
    )
    unshelve = sched(
        [
            _env(plus, shelved, Gaussian(ps, Ts, 0.0), gate.phi_shelve, "unshelve_plus"),
            _env(a_plus, shelved, Gaussian(ps, Ts, tau_s), gate.phi_shelve_a, "unshelve_a"),
        ]
    )
    return [
        ProtocolStep("shelve", "shelving", (shelved,), shelve),
        ProtocolStep("cavity_forward", "cavity", (1, 2), forward),
        ProtocolStep("cavity_back", "cavity", (1, 2), back),
        ProtocolStep("unshelve", "shelving", (shelved,), unshelve),
    ]


def schedule_storage(
    gate: GateParameters | None = None,
    couplings: CouplingConstants | None = None,
    direction: str = "store",
    timing: ProtocolTiming = DEFAULT_TIMING,
) -> PulseSchedule:
    gate = gate or GateParameters()
    couplings = couplings or default_couplings(1, timing)
    return storage_step(direction, gate, couplings, timing).schedule


def plan_storage(gate, couplings, timing=DEFAULT_TIMING, roundtrip: bool = False) -> ProtocolPlan:
    steps = [storage_step("store", gate, couplings, timing)]
    if roundtrip:
        steps.append(storage_step("release", gate, couplings, timing))
    return chain_steps(steps, 1)


def plan_one_qubit(gate, couplings, timing=DEFAULT_TIMING) -> ProtocolPlan:
    steps = [storage_step("store", gate, couplings, timing)]
    steps += tripod_steps(gate, timing)
    steps.append(storage_step("release", gate, couplings, timing))
    return chain_steps(steps, 1)


def plan_cphase(gate, couplings, timing=DEFAULT_TIMING, shelved: int = 2) -> ProtocolPlan:
    steps = [storage_step("store", gate, couplings, timing, media=(1, 2))]
    steps += cphase_steps(gate, timing, shelved)
    steps.append(storage_step("release", gate, couplings, timing, media=(1, 2)))
    return chain_steps(steps, 2)


# --------------------------------------------------------------------------
# input polaritons and readout


def _polariton_pair(model: HamiltonianModel, t: float, medium: int) -> np.ndarray:
    """2 x 8 array: dark polaritons of sigma_-, sigma_+ for one medium at ``t``."""
    rows = np.zeros((2, 8), dtype=complex)
    for k, (coupling, ell, b1, c) in enumerate(
        ((Coupling.OmegaMinus, "-", L.B1Minus, L.CMinus), (Coupling.OmegaPlus, "+", L.B1Plus, L.CPlus))
    ):
        om = complex(model.schedule.coupling(TransitionLabel(coupling, medium), t))
        theta = math.atan2(model.couplings.gN(ell, medium), abs(om)) if om != 0 else 0.0
        rows[k, int(b1)] = math.cos(theta)
        rows[k, int(c)] = -math.sin(theta) * (om / abs(om) if om != 0 else 1.0)
    return rows


def polariton_basis(model: HamiltonianModel, t: float) -> np.ndarray:
    """Columns are the computational polaritons (2 or 4) at time ``t``."""
    if model.basis.media_count == 1:
        return _polariton_pair(model, t, 1).T.copy()
    p1, p2 = _polariton_pair(model, t, 1), _polariton_pair(model, t, 2)
    vac = np.zeros(model.basis.fock_count)
    vac[0] = 1.0
    cols = [np.kron(np.kron(p1[i], p2[j]), vac) for i in (0, 1) for j in (0, 1)]
    return np.column_stack(cols)


def dark_input(q, model: HamiltonianModel) -> StateVector:
    """Embed a qubit register as the dark polariton of the fields at the start of the run."""
    vec = q.vector if hasattr(q, "vector") else np.asarray(q, dtype=complex)
    P = polariton_basis(model, model.schedule.window[0])
    if P.shape[1] != vec.size:
        raise ConfigurationError(f"register of size {vec.size} does not fit a {P.shape[1]}-state model")
    return StateVector(model.basis, P @ vec)


def readout(state: StateVector, model: HamiltonianModel) -> np.ndarray:
    """Unnormalised output amplitudes: overlaps with the final-time polaritons."""
    P = polariton_basis(model, model.schedule.window[1])
    return P.conj().T @ state.amplitudes


# --------------------------------------------------------------------------
# closed-form predictions


def rotation_matrix(delta: float, axis) -> np.ndarray:
    """``exp(-i (delta/2) n.sigma)``."""
    n = np.asarray(axis, dtype=float)
    ns = n[0] * SX + n[1] * SY + n[2] * SZ
    return math.cos(delta / 2) * np.eye(2) - 1j * math.sin(delta / 2) * ns


def one_qubit_matrix(gate: GateParameters) -> np.ndarray:
    """Photon-to-photon matrix of store, double STIRAP and release.

    For equal storage and release phases and ``phi_+ = phi_-`` this is
    ``e^{-i delta/2} exp(-i (delta/2) n.sigma)``.
    """
    t1 = np.array([math.cos(gate.xi) * np.exp(1j * gate.phi_c_minus), math.sin(gate.xi) * np.exp(1j * gate.phi_c_plus)])
    stored = np.eye(2) + (np.exp(-1j * gate.delta) - 1) * np.outer(t1, t1.conj())
    store = np.diag([-np.exp(1j * gate.phi_minus), -np.exp(1j * gate.phi_plus)])
    release = np.diag([-np.exp(-1j * gate.phi_minus_prime), -np.exp(-1j * gate.phi_plus_prime)])
    return release @ stored @ store


def predict_one_qubit(q: QubitState, gate: GateParameters) -> QubitState:
    """Closed-form output qubit, global phase included."""
    return QubitState.from_vector(one_qubit_matrix(gate) @ q.vector)


def cphase_matrix(zeta: float) -> np.ndarray:
    return np.diag([1, 1, 1, np.exp(1j * zeta)])


def predict_cphase(q: TwoQubitState, zeta: float) -> TwoQubitState:
    return TwoQubitState.from_vector(cphase_matrix(zeta) @ q.vector)


def predict_storage(q: QubitState, gate: GateParameters) -> np.ndarray:
    """Stored amplitudes on ``(c_-, c_+)``: ``-(alpha e^{i phi_-}, beta e^{i phi_+})``."""
    return -np.array([q.alpha * np.exp(1j * gate.phi_minus), q.beta * np.exp(1j * gate.phi_plus)])


def gate_fidelity(U, V) -> float:
    """``|Tr(U^H V)| / d``; equals 1 iff ``U = e^{i phi} V`` for unitaries."""
    U = np.asarray(U, dtype=complex)
    V = np.asarray(V, dtype=complex)
    if U.shape != V.shape or U.ndim != 2 or U.shape[0] != U.shape[1]:
        raise ConfigurationError(f"gate_fidelity needs equal square matrices, got {U.shape} and {V.shape}")
    return float(abs(np.trace(U.conj().T @ V)) / U.shape[0])


# --------------------------------------------------------------------------
# running


@dataclass(frozen=True)
class ProtocolResult:
    final_state: StateVector
    trajectory: Trajectory
    diagnostics: dict
    plan: ProtocolPlan
    output: object | None = None
    predicted: object | None = None
    fidelity: float | None = None
    amplitudes: np.ndarray | None = field(default=None, repr=False)


def _step_margins(plan: ProtocolPlan, couplings: CouplingConstants, times: np.ndarray) -> np.ndarray:
    phase_of = {"storage": "storage", "release": "storage", "tripod": "tripod", "shelving": "shelving"}
    values = []
    for step in plan.steps:
        phase = phase_of.get(step.kind)
        if phase is None:
            continue
        t0, t1 = step.schedule.window
        t = times[(times >= t0) & (times <= t1)]
        if t.size == 0:
            continue
        scale = np.sqrt(sum(np.abs(step.schedule.coupling(tr, t)) ** 2 for tr in step.schedule.transitions()))
        active = scale >= MARGIN_ACTIVE_FRACTION * scale.max()
        for m in step.media:
            r = adiabaticity_profile(step.schedule, couplings, t[active], phase, m)
            values.append(r[np.isfinite(r)])
    return np.concatenate(values) if values else np.zeros(0)


def diagnostics_for(
    trajectory: Trajectory,
    model: HamiltonianModel,
    plan: ProtocolPlan,
    track: bool = True,
    dark_stride: int | None = None,
) -> dict:
    pops = trajectory.populations()
    basis = model.basis
    fock = basis.fock_numbers
    margins = _step_margins(plan, model.couplings, trajectory.times)
    final_norm2 = float(np.vdot(trajectory.amplitudes[-1], trajectory.amplitudes[-1]).real)
    diag = {
        "max_excited_pop": float(pops[:, basis.excited_mask].sum(axis=1).max()),
        "max_cavity_pop": float(pops[:, fock > 0].sum(axis=1).max()) if basis.media_count == 2 else 0.0,
        "cavity_n2_leakage": float(pops[:, fock >= 2].sum(axis=1).max()) if basis.cavity_dim >= 2 else 0.0,
        "norm_loss": 1.0 - final_norm2,
        "max_norm_drift": float(np.max(np.abs(trajectory.norms() - trajectory.norms()[0]))),
        "max_adiabatic_margin": float(margins.max()) if margins.size else 0.0,
        "min_adiabatic_margin": float(margins.min()) if margins.size else 0.0,
        "min_dark_projection": None,
        "nfev": int(trajectory.nfev),
    }
    if track:
        stride = dark_stride or (1 if basis.media_count == 1 else 20)
        diag["min_dark_projection"] = track_dark_state(trajectory, model, stride).min_projection
    return diag


def _warn(diag: dict) -> None:
    if diag["max_adiabatic_margin"] > ADIABATIC_WARN:
        warnings.warn(
            f"adiabaticity ratio reaches {diag['max_adiabatic_margin']:.3g} (> {ADIABATIC_WARN})",
            AdiabaticityWarning,
            stacklevel=3,
        )
    if diag["cavity_n2_leakage"] > CAVITY_N2_WARN:
        warnings.warn(
            f"cavity n=2 population reaches {diag['cavity_n2_leakage']:.3g}",
            CavityLeakageWarning,
            stacklevel=3,
        )


def execute_plan(
    plan: ProtocolPlan,
    register,
    couplings: CouplingConstants,
    decay: bool = False,
    tol: float = 1e-10,
    n_samples: int = 2001,
    track: bool = True,
    initial: StateVector | None = None,
) -> tuple[ProtocolResult, HamiltonianModel]:
    """Propagate a plan from a dark-polariton register (or an explicit state)."""
    model = plan.model(couplings, decay)
    psi0 = initial if initial is not None else dark_input(register, model)
    traj = propagate(model, psi0, tol=tol, n_samples=n_samples)
    diag = diagnostics_for(traj, model, plan, track)
    _warn(diag)
    out = None
    amps = None
    if plan.steps[-1].kind == "release":
        amps = readout(traj.final, model)
        diag["leakage"] = max(0.0, 1.0 - float(np.vdot(amps, amps).real))
        if np.vdot(amps, amps).real > 0:
            cls = QubitState if amps.size == 2 else TwoQubitState
            out = cls.from_vector(amps)
    return ProtocolResult(traj.final, traj, diag, plan, out, None, None, amps), model


def _with_prediction(result: ProtocolResult, predicted) -> ProtocolResult:
    fid = fidelity_vectors(result.output.vector, predicted.vector) if result.output is not None else None
    return replace(result, predicted=predicted, fidelity=fid)


def run_storage(
    q: QubitState,
    gate: GateParameters | None = None,
    couplings: CouplingConstants | None = None,
    timing: ProtocolTiming = DEFAULT_TIMING,
    **run_kw,
) -> ProtocolResult:
    """Store a photonic qubit; fidelity is taken against ``-(alpha e^{i phi_-}|c_->, beta e^{i phi_+}|c_+>)``."""
    gate = gate or GateParameters()
    couplings = couplings or default_couplings(1, timing)
    plan = plan_storage(gate, couplings, timing)
    result, _ = execute_plan(plan, q, couplings, **run_kw)
    target = predict_storage(q, gate)
    stored = result.final_state.amplitudes[[int(L.CMinus), int(L.CPlus)]]
    fid = float(abs(np.vdot(target, stored)) ** 2)
    return replace(result, predicted=target, fidelity=fid, amplitudes=stored)


def run_release(
    stored: StateVector,
    gate: GateParameters | None = None,
    couplings: CouplingConstants | None = None,
    timing: ProtocolTiming = DEFAULT_TIMING,
    reference: QubitState | None = None,
    **run_kw,
) -> ProtocolResult:
    """Release a stored state (e.g. ``run_storage(...).final_state``).

    With ``reference`` the output is compared to that qubit.
    """
    gate = gate or GateParameters()
    couplings = couplings or default_couplings(1, timing)
    plan = chain_steps([storage_step("release", gate, couplings, timing)], 1)
    result, _ = execute_plan(plan, None, couplings, initial=stored, **run_kw)
    if reference is not None:
        result = _with_prediction(result, reference)
    return result


def run_storage_roundtrip(
    q: QubitState,
    gate: GateParameters | None = None,
    couplings: CouplingConstants | None = None,
    timing: ProtocolTiming = DEFAULT_TIMING,
    **run_kw,
) -> ProtocolResult:
    """Store and release in one run; compared to the input qubit (phase included up to global)."""
    gate = gate or GateParameters()
    couplings = couplings or default_couplings(1, timing)
    plan = plan_storage(gate, couplings, timing, roundtrip=True)
    result, _ = execute_plan(plan, q, couplings, **run_kw)
    expected = np.diag([np.exp(1j * (gate.phi_minus - gate.phi_minus_prime)), np.exp(1j * (gate.phi_plus - gate.phi_plus_prime))])
    return _with_prediction(result, QubitState.from_vector(expected @ q.vector))


def run_one_qubit_gate(
    q: QubitState,
    gate: GateParameters,
    couplings: CouplingConstants | None = None,
    timing: ProtocolTiming = DEFAULT_TIMING,
    **run_kw,
) -> ProtocolResult:
    """Store, double tripod STIRAP, release; compared to :func:`predict_one_qubit`."""
    couplings = couplings or default_couplings(1, timing)
    plan = plan_one_qubit(gate, couplings, timing)
    result, _ = execute_plan(plan, q, couplings, **run_kw)
    return _with_prediction(result, predict_one_qubit(q, gate))


def run_cphase(
    q: TwoQubitState,
    gate: GateParameters,
    couplings: CouplingConstants | None = None,
    timing: ProtocolTiming = REGISTER_TIMING,
    shelved: int = 2,
    **run_kw,
) -> ProtocolResult:
    """Store both photons, shelve, transfer through the cavity and back, unshelve, release."""
    couplings = couplings or default_couplings(2, timing)
    if couplings.cavity_n_max < 1:
        raise ConfigurationError("Cphase needs cavity_n_max >= 1")
    if min(couplings.g(1), couplings.g(2)) <= 0:
        raise ConfigurationError("Cphase needs a nonzero cavity coupling in both media")
    if gate.phi_c1 != gate.phi_c1_prime:
        raise ConfigurationError("Cphase expects phi_c1 = phi_c1'; the phase is set through phi_c2'")
    plan = plan_cphase(gate, couplings, timing, shelved)
    result, _ = execute_plan(plan, q, couplings, **run_kw)
    return _with_prediction(result, predict_cphase(q, gate.zeta))


# --------------------------------------------------------------------------
# tomography


@dataclass(frozen=True)
class GateMatrix:
    """Simulated gate in the photonic basis.

    ``matrix`` columns are unnormalised outputs for basis inputs, normalised
    so that the largest-magnitude entry is real and positive.
    """

    matrix: np.ndarray
    leakage: np.ndarray
    unitary: bool
    unitarity_residual: float
    diagnostics: tuple = field(default=(), repr=False)

    def max_diagnostic(self, key: str) -> float:
        """Largest value of one diagnostic over the basis-state runs."""
        values = [d[key] for d in self.diagnostics if d.get(key) is not None]
        return float(max(values)) if values else float("nan")


def _normalise_global_phase(M: np.ndarray) -> np.ndarray:
    k = np.unravel_index(np.argmax(np.abs(M)), M.shape)
    pivot = M[k]
    return M * (abs(pivot) / pivot) if pivot != 0 else M


def matrix_from_plan(
    plan: ProtocolPlan,
    couplings: CouplingConstants,
    threshold: float = LEAKAGE_THRESHOLD,
    **run_kw,
) -> GateMatrix:
    d = 2 if plan.media_count == 1 else 4
    run_kw.setdefault("track", False)
    cols, diags = [], []
    for j in range(d):
        e = np.zeros(d, dtype=complex)
        e[j] = 1.0
        result, _ = execute_plan(plan, e, couplings, **run_kw)
        cols.append(result.amplitudes)
        diags.append(result.diagnostics)
    M = _normalise_global_phase(np.column_stack(cols))
    leakage = np.clip(1.0 - np.sum(np.abs(M) ** 2, axis=0), 0.0, None)
    residual = float(np.linalg.norm(M.conj().T @ M - np.eye(d), ord=2))
    return GateMatrix(M, leakage, bool(leakage.max() <= threshold), residual, tuple(diags))


def assemble_gate_matrix(
    protocol: str,
    gate: GateParameters,
    couplings: CouplingConstants | None = None,
    timing: ProtocolTiming | None = None,
    threshold: float = LEAKAGE_THRESHOLD,
    **run_kw,
) -> GateMatrix:
    """Gate tomography by basis-state runs.

    ``protocol`` is ``one_qubit``, ``cphase`` or ``identity`` (store and
    release only).  Two-media runs default to :data:`REGISTER_TIMING`.
    """
    if timing is None:
        timing = REGISTER_TIMING if protocol == "cphase" else DEFAULT_TIMING
    if protocol == "one_qubit":
        couplings = couplings or default_couplings(1, timing)
        plan = plan_one_qubit(gate, couplings, timing)
    elif protocol == "cphase":
        couplings = couplings or default_couplings(2, timing)
        plan = plan_cphase(gate, couplings, timing)
    elif protocol == "identity":
        couplings = couplings or default_couplings(1, timing)
        plan = plan_storage(gate, couplings, timing, roundtrip=True)
    else:
        raise ConfigurationError(f"unknown protocol {protocol!r}")
    return matrix_from_plan(plan, couplings, threshold, **run_kw)
