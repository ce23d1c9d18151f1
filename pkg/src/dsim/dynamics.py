"""Time-dependent Hamiltonians of one medium or two media in a cavity, and propagation.

Matrix-element conventions (hbar = 1, interaction picture, resonant RWA)::

    <a_l|H|c_l>  = Omega_l exp(-i phi_l)       l = -, +
    <a_l|H|b,1_l> = g_l sqrt(N)
    <k|H|e>      = Omega_k exp(+i phi_k)       k = c_-, c_+, d
    <a_+|H|d>    = Omega_{a+} exp(-i phi_{a+})
    <e, n-1|H|d, n> = g_cav sqrt(n)            (two media only)

The two-media model also accepts the tripod couplings (``OmegaCMinus``,
``OmegaD``) so that one-qubit gates can run inside a register; the cavity
coupling can be gated to time windows, which stands in for the Stark pulse
that brings the cavity into resonance.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp
from scipy.integrate import solve_ivp

from .errors import ConfigurationError, IntegrationError
from .hilbert import CompositeBasis, MediumLevel, StateVector, make_basis
from .pulses import Coupling, PulseSchedule, TransitionLabel

L = MediumLevel
EXCITED_LIFETIME_NS = 18.0

# (upper, lower, sign of phase in the coefficient of |upper><lower|)
_TRANSITIONS = {
    Coupling.OmegaMinus: (L.AMinus, L.CMinus, -1),
    Coupling.OmegaPlus: (L.APlus, L.CPlus, -1),
    Coupling.OmegaCMinus: (L.CMinus, L.E, +1),
    Coupling.OmegaCPlus: (L.CPlus, L.E, +1),
    Coupling.OmegaD: (L.D, L.E, +1),
    Coupling.OmegaAPlus: (L.APlus, L.D, -1),
}
_SINGLE_MEDIUM_COUPLINGS = frozenset(_TRANSITIONS) - {Coupling.OmegaAPlus}


def _per_medium(value, n: int) -> tuple:
    if np.isscalar(value):
        return (float(value),) * n
    value = tuple(float(v) for v in value)
    if len(value) == 1:
        return value * n
    return value


@dataclass(frozen=True)
class CouplingConstants:
    """Static coupling constants and decay rates.

    ``gN_minus``/``gN_plus`` are the collective couplings ``g_l sqrt(N)`` per
    medium, ``g_cav`` the single-atom cavity couplings ``g^(p)``.  Rates are in
    1/ns; the excited-state default is the 18 ns neon lifetime.
    """

    gN_minus: tuple = (0.6,)
    gN_plus: tuple = (0.6,)
    g_cav: tuple = (0.0,)
    gamma_a: float = 1.0 / EXCITED_LIFETIME_NS
    gamma_e: float = 1.0 / EXCITED_LIFETIME_NS
    kappa: float = 1.0 / EXCITED_LIFETIME_NS
    cavity_n_max: int = 0

    def __post_init__(self):
        n = max(len(np.atleast_1d(x)) for x in (self.gN_minus, self.gN_plus, self.g_cav))
        for name in ("gN_minus", "gN_plus", "g_cav"):
            object.__setattr__(self, name, _per_medium(getattr(self, name), n))
        values = self.gN_minus + self.gN_plus + self.g_cav + (self.gamma_a, self.gamma_e, self.kappa)
        if min(values) < 0:
            raise ConfigurationError("coupling constants and decay rates must be >= 0")
        if self.cavity_n_max < 0:
            raise ConfigurationError("cavity_n_max must be >= 0")

    def gN(self, ell: str, medium: int = 1) -> float:
        seq = self.gN_minus if ell == "-" else self.gN_plus
        return seq[min(medium, len(seq)) - 1]

    def g(self, medium: int) -> float:
        return self.g_cav[min(medium, len(self.g_cav)) - 1]

    def with_(self, **changes) -> "CouplingConstants":
        from dataclasses import replace

        return replace(self, **changes)


class ModelKind(str, enum.Enum):
    SingleMedium = "SingleMedium"
    TwoMediaCavity = "TwoMediaCavity"


def _local_op(basis: CompositeBasis, medium: int, upper: MediumLevel, lower: MediumLevel) -> sp.csr_matrix:
    """``|upper><lower|`` acting on one medium, identity elsewhere."""
    m = sp.csr_matrix(([1.0], ([int(upper)], [int(lower)])), shape=(8, 8), dtype=complex)
    if basis.media_count == 1:
        return m
    eye8 = sp.identity(8, dtype=complex, format="csr")
    eye_c = sp.identity(basis.fock_count, dtype=complex, format="csr")
    pair = sp.kron(m, eye8) if medium == 1 else sp.kron(eye8, m)
    return sp.kron(pair, eye_c, format="csr")


def _cavity_op(basis: CompositeBasis, medium: int) -> sp.csr_matrix:
    """``a_cav |e><d|`` on one medium."""
    nf = basis.fock_count
    a = sp.diags(np.sqrt(np.arange(1, nf)), offsets=1, shape=(nf, nf), dtype=complex, format="csr")
    e_d = sp.csr_matrix(([1.0], ([int(L.E)], [int(L.D)])), shape=(8, 8), dtype=complex)
    eye8 = sp.identity(8, dtype=complex, format="csr")
    pair = sp.kron(e_d, eye8) if medium == 1 else sp.kron(eye8, e_d)
    return sp.kron(pair, a, format="csr")


@dataclass(frozen=True)
class HamiltonianModel:
    kind: ModelKind
    basis: CompositeBasis
    couplings: CouplingConstants
    schedule: PulseSchedule
    decay_enabled: bool = False
    cavity_windows: tuple | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", ModelKind(self.kind))
        if self.kind is ModelKind.SingleMedium:
            if self.basis.media_count != 1:
                raise ConfigurationError("single-medium model needs a single-medium basis")
            bad = [t for t in self.schedule.transitions() if t.coupling not in _SINGLE_MEDIUM_COUPLINGS or t.medium != 1]
            if bad:
                raise ConfigurationError(f"transition(s) {', '.join(map(str, bad))} absent from the single-medium model")
        else:
            if self.basis.media_count != 2:
                raise ConfigurationError("two-media model needs a two-media basis")
            if self.basis.cavity_dim < 1:
                raise ConfigurationError("two-media model needs cavity_n_max >= 1")
        if self.cavity_windows is not None:
            wins = tuple(sorted((float(a), float(b)) for a, b in self.cavity_windows))
            object.__setattr__(self, "cavity_windows", wins)

    @classmethod
    def single(cls, couplings: CouplingConstants, schedule: PulseSchedule, decay: bool = False) -> "HamiltonianModel":
        return cls(ModelKind.SingleMedium, make_basis(1, 0), couplings, schedule, decay)

    @classmethod
    def two_media(
        cls,
        couplings: CouplingConstants,
        schedule: PulseSchedule,
        decay: bool = False,
        cavity_windows=None,
    ) -> "HamiltonianModel":
        n_max = couplings.cavity_n_max or 2
        return cls(ModelKind.TwoMediaCavity, make_basis(2, n_max), couplings, schedule, decay, cavity_windows)

    @property
    def media(self) -> tuple[int, ...]:
        return (1,) if self.basis.media_count == 1 else (1, 2)

    # -- static pieces ---------------------------------------------------

    @cached_property
    def _static(self) -> sp.csr_matrix:
        h = sp.csr_matrix((self.basis.dimension,) * 2, dtype=complex)
        for p in self.media:
            for ell, (a, b1) in {"-": (L.AMinus, L.B1Minus), "+": (L.APlus, L.B1Plus)}.items():
                op = _local_op(self.basis, p, a, b1)
                h = h + self.couplings.gN(ell, p) * (op + op.getH())
        return h.tocsr()

    @cached_property
    def _cavity(self) -> sp.csr_matrix:
        h = sp.csr_matrix((self.basis.dimension,) * 2, dtype=complex)
        if self.basis.media_count == 2:
            for p in self.media:
                op = _cavity_op(self.basis, p)
                h = h + self.couplings.g(p) * (op + op.getH())
        return h.tocsr()

    @cached_property
    def _decay_diag(self) -> np.ndarray:
        return decay_diagonal(self.basis, self.couplings)

    @cached_property
    def _drives(self):
        """Per transition: (transition, phase sign, |upper><lower| operator)."""
        out = []
        for tr in sorted(self.schedule.transitions()):
            upper, lower, sign = _TRANSITIONS[tr.coupling]
            out.append((tr, sign, _local_op(self.basis, tr.medium, upper, lower)))
        return out

    @cached_property
    def _stacked(self) -> sp.csr_matrix:
        blocks = []
        for _, _, op in self._drives:
            blocks.extend([op, op.getH().tocsr()])
        if not blocks:
            return sp.csr_matrix((0, self.basis.dimension), dtype=complex)
        return sp.vstack(blocks, format="csr")

    def _envelope_index(self):
        idx = {tr: k for k, (tr, _, _) in enumerate(self._drives)}
        return [(idx[env.transition], env) for env in self.schedule.envelopes]

    @cached_property
    def _envs(self):
        return self._envelope_index()

    def drive_coefficients(self, t: float) -> np.ndarray:
        """Coefficients multiplying ``|upper><lower|`` and its adjoint, interleaved."""
        k = len(self._drives)
        c = np.zeros(k, dtype=complex)
        for i, env in self._envs:
            c[i] += float(env.shape.value(t)) * np.exp(1j * env.phase)
        signs = np.array([s for _, s, _ in self._drives])
        c = np.where(signs > 0, c, np.conj(c))
        w = np.empty(2 * k, dtype=complex)
        w[0::2] = c
        w[1::2] = np.conj(c)
        return w

    def cavity_on(self, t: float) -> bool:
        if self.cavity_windows is None:
            return True
        return any(a <= t <= b for a, b in self.cavity_windows)

    # -- public -----------------------------------------------------------

    def hermitian(self, t: float) -> np.ndarray:
        """Dense Hermitian part of H(t)."""
        h = self._static.toarray()
        if self.basis.media_count == 2 and self.cavity_on(t):
            h = h + self._cavity.toarray()
        w = self.drive_coefficients(t)
        for k, (_, _, op) in enumerate(self._drives):
            h = h + w[2 * k] * op.toarray() + w[2 * k + 1] * op.getH().toarray()
        return h

    def hamiltonian(self, t: float) -> np.ndarray:
        h = self.hermitian(t)
        if self.decay_enabled:
            h = h + np.diag(self._decay_diag)
        return h

    def rhs(self, t: float, psi: np.ndarray) -> np.ndarray:
        out = self._static @ psi
        if self.basis.media_count == 2 and self.cavity_on(t):
            out = out + self._cavity @ psi
        if self._drives:
            y = (self._stacked @ psi).reshape(-1, psi.shape[0])
            out = out + self.drive_coefficients(t) @ y
        if self.decay_enabled:
            out = out + self._decay_diag * psi
        return -1j * out

    def breakpoints(self, t0: float, t1: float) -> list[float]:
        pts = {t0, t1}
        if self.cavity_windows is not None:
            for a, b in self.cavity_windows:
                pts.update(x for x in (a, b) if t0 < x < t1)
        return sorted(pts)

    def max_step(self) -> float:
        widths = [getattr(env.shape, "fwhm", None) for env in self.schedule.envelopes]
        widths = [w for w in widths if w]
        return 0.25 * min(widths) if widths else np.inf


def build_h_single(model: HamiltonianModel, t: float) -> np.ndarray:
    if model.kind is not ModelKind.SingleMedium:
        raise ConfigurationError("build_h_single needs a single-medium model")
    return model.hermitian(t)


def build_h_two(model: HamiltonianModel, t: float) -> np.ndarray:
    if model.kind is not ModelKind.TwoMediaCavity:
        raise ConfigurationError("build_h_two needs a two-media model")
    return model.hermitian(t)


def decay_diagonal(basis: CompositeBasis, couplings: CouplingConstants) -> np.ndarray:
    """Diagonal of ``-(i/2)(gamma_a P_a + gamma_e P_e + kappa n_cav)``."""
    rates = np.zeros(basis.dimension)
    for i, tup in enumerate(basis.tuples):
        for lvl in tup[: basis.media_count]:
            if lvl in (L.AMinus, L.APlus):
                rates[i] += couplings.gamma_a
            elif lvl is L.E:
                rates[i] += couplings.gamma_e
    rates = rates + couplings.kappa * basis.fock_numbers
    return -0.5j * rates


def add_decay(H: np.ndarray, couplings: CouplingConstants, basis: CompositeBasis) -> np.ndarray:
    return np.asarray(H, dtype=complex) + np.diag(decay_diagonal(basis, couplings))


@dataclass(frozen=True)
class Trajectory:
    basis: CompositeBasis
    times: np.ndarray = field(repr=False)
    amplitudes: np.ndarray = field(repr=False)
    nfev: int = 0

    def state(self, k: int) -> StateVector:
        return StateVector(self.basis, self.amplitudes[k])

    @property
    def final(self) -> StateVector:
        return self.state(-1)

    def norms(self) -> np.ndarray:
        return np.linalg.norm(self.amplitudes, axis=1)

    def populations(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2


def propagate(
    model: HamiltonianModel,
    psi0: StateVector,
    t0: float | None = None,
    t1: float | None = None,
    tol: float = 1e-10,
    n_samples: int = 2001,
) -> Trajectory:
    """Integrate ``i dpsi/dt = H(t) psi`` with adaptive Dormand-Prince 8(5,3) steps.

    No renormalisation is applied.  The trajectory is sampled on ``n_samples``
    uniform times (dense output) over ``[t0, t1]``, which default to the
    schedule window.
    """
    if psi0.basis != model.basis:
        raise ConfigurationError("initial state and model use different bases")
    t0 = model.schedule.window[0] if t0 is None else float(t0)
    t1 = model.schedule.window[1] if t1 is None else float(t1)
    if not t1 > t0:
        raise ConfigurationError("propagate needs t0 < t1")
    if tol <= 0:
        raise ConfigurationError("tol must be > 0")
    samples = np.linspace(t0, t1, n_samples)
    out = np.empty((n_samples, model.basis.dimension), dtype=complex)
    y = np.array(psi0.amplitudes, dtype=complex)
    nfev = 0
    edges = model.breakpoints(t0, t1)
    max_step = model.max_step()
    for a, b in zip(edges, edges[1:]):
        # closed on the left for the first piece only
        sel = (samples >= a) & (samples <= b) if a == t0 else (samples > a) & (samples <= b)
        t_eval = samples[sel]
        n_sel = t_eval.size
        if n_sel == 0 or t_eval[-1] != b:
            t_eval = np.append(t_eval, b)
        sol = solve_ivp(
            model.rhs,
            (a, b),
            y,
            method="DOP853",
            rtol=tol,
            atol=tol,
            t_eval=t_eval,
            max_step=max_step,
        )
        nfev += sol.nfev
        if sol.status != 0:
            raise IntegrationError(f"integration failed: {sol.message}", float(sol.t[-1]) if sol.t.size else a)
        out[sel] = sol.y[:, :n_sel].T
        y = sol.y[:, -1]
    return Trajectory(model.basis, samples, out, nfev)
