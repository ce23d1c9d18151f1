"""Numeric dark spaces, closed-form dark states and dark-state tracking.

A dark state is a null eigenvector of the Hermitian part of ``H(t)`` with no
amplitude on excited levels.  Degenerate dark spaces are compared as
projectors, since individual eigenvectors inside them are not unique.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .dynamics import HamiltonianModel
from .errors import ConfigurationError
from .hilbert import CompositeBasis, MediumLevel, StateVector, make_basis
from .pulses import Coupling, TransitionLabel, active_mask, mixing_angle_rate

L = MediumLevel
DARK_REL_TOL = 1e-9
# excited population allowed on a numerically dark vector
EXCITED_POP_TOL = 1e-9
EDGE_REL_TOL = 1e-12

_SINGLE = make_basis(1, 0)


@dataclass(frozen=True)
class DarkSpace:
    time: float
    basis: CompositeBasis
    vectors: tuple[StateVector, ...]
    eigenvalue_residuals: np.ndarray = field(repr=False)

    @property
    def dimension(self) -> int:
        return len(self.vectors)

    def matrix(self) -> np.ndarray:
        """Columns are the dark vectors."""
        if not self.vectors:
            return np.zeros((self.basis.dimension, 0), dtype=complex)
        return np.column_stack([v.amplitudes for v in self.vectors])

    def projector(self) -> np.ndarray:
        V = self.matrix()
        return V @ V.conj().T

    def projection(self, psi: StateVector) -> float:
        """Fraction of ``psi``'s norm inside the dark space."""
        V = self.matrix()
        amps = psi.amplitudes
        total = float(np.vdot(amps, amps).real)
        if total == 0:
            return 0.0
        c = V.conj().T @ amps
        return float(np.vdot(c, c).real / total)


def _infer_basis(dim: int) -> CompositeBasis:
    if dim == 8:
        return _SINGLE
    if dim % 64 == 0 and dim // 64 >= 2:
        return make_basis(2, dim // 64 - 1)
    raise ConfigurationError(f"cannot infer a basis for dimension {dim}")


def _fix_phases(V: np.ndarray) -> np.ndarray:
    """Make the largest-magnitude entry of every column real and positive."""
    if V.shape[1] == 0:
        return V
    k = np.argmax(np.abs(V), axis=0)
    pivots = V[k, np.arange(V.shape[1])]
    return V * (np.abs(pivots) / pivots)


def coupling_component(H: np.ndarray, seeds, rel_tol: float = EDGE_REL_TOL) -> np.ndarray:
    """Indices connected to ``seeds`` through matrix elements above ``rel_tol * max|H|``."""
    H = np.asarray(H)
    scale = np.max(np.abs(H)) if H.size else 0.0
    adj = np.abs(H) > rel_tol * scale if scale > 0 else np.zeros(H.shape, dtype=bool)
    seen = set(int(s) for s in seeds)
    queue = deque(seen)
    while queue:
        i = queue.popleft()
        for j in np.flatnonzero(adj[i] | adj[:, i]):
            if j not in seen:
                seen.add(int(j))
                queue.append(int(j))
    return np.array(sorted(seen), dtype=int)


def dark_space(
    H,
    eps: float | None = None,
    *,
    basis: CompositeBasis | None = None,
    time: float = 0.0,
    support=None,
) -> DarkSpace:
    """Orthonormal basis of the dark space of ``H``.

    Parameters
    ----------
    H : array_like
        Square Hamiltonian matrix; only its Hermitian part is used.
    eps : float, optional
        Absolute null-eigenvalue cutoff, default ``1e-9 * max|lambda|``.
    basis : CompositeBasis, optional
        Inferred from the dimension when omitted.
    support : array_like of int, optional
        Restrict the search to these basis indices (e.g. one coupling
        component); returned vectors are embedded in the full space.
    """
    H = np.asarray(H, dtype=complex)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise ConfigurationError(f"H must be square, got shape {H.shape}")
    basis = basis or _infer_basis(H.shape[0])
    if basis.dimension != H.shape[0]:
        raise ConfigurationError("basis dimension does not match H")
    Hh = 0.5 * (H + H.conj().T)
    idx = np.arange(H.shape[0]) if support is None else np.asarray(support, dtype=int)
    sub = Hh[np.ix_(idx, idx)]
    w, U = np.linalg.eigh(sub)
    scale = float(np.max(np.abs(w))) if w.size else 0.0
    cut = DARK_REL_TOL * scale if eps is None else float(eps)
    null = U[:, np.abs(w) <= cut]

    excited = basis.excited_mask[idx]
    if null.shape[1] and excited.any():
        # intersect the null space with {no excited amplitude}
        A = null[excited, :]
        _, s, Wh = np.linalg.svd(A, full_matrices=True)
        rank = int(np.sum(s > math.sqrt(EXCITED_POP_TOL)))
        null = null @ Wh[rank:].conj().T
    null = _fix_phases(null)

    full = np.zeros((H.shape[0], null.shape[1]), dtype=complex)
    full[idx, :] = null
    residuals = np.linalg.norm(H @ full, axis=0) if full.shape[1] else np.zeros(0)
    vectors = tuple(StateVector(basis, full[:, j]) for j in range(full.shape[1]))
    return DarkSpace(float(time), basis, vectors, residuals)


def orthonormal_span(vectors, rank_tol: float = 1e-10) -> np.ndarray:
    """Orthonormal columns spanning ``vectors`` (StateVectors or arrays)."""
    cols = [v.amplitudes if isinstance(v, StateVector) else np.asarray(v, dtype=complex) for v in vectors]
    if not cols:
        raise ValueError("no vectors given")
    M = np.column_stack(cols)
    U, s, _ = np.linalg.svd(M, full_matrices=False)
    rank = int(np.sum(s > rank_tol * max(s[0], 1e-300)))
    return U[:, :rank]


def _as_columns(x) -> np.ndarray:
    if isinstance(x, DarkSpace):
        return x.matrix()
    if isinstance(x, np.ndarray) and x.ndim == 2:
        return x
    return orthonormal_span(list(x))


def projector_distance(a, b) -> float:
    """Spectral-norm distance ``||P_a - P_b||`` of two subspaces."""
    A, B = _as_columns(a), _as_columns(b)
    if A.shape[0] != B.shape[0]:
        raise ConfigurationError("subspaces live in different dimensions")
    return float(np.linalg.norm(A @ A.conj().T - B @ B.conj().T, ord=2))


# --------------------------------------------------------------------------
# closed-form dark states


def _single(components: dict) -> StateVector:
    amps = np.zeros(8, dtype=complex)
    for lvl, a in components.items():
        amps[int(lvl)] += a
    return StateVector(_SINGLE, amps)


def analytic_dark_storage(theta: float, phi: float = 0.0, polarization: str = "-") -> StateVector:
    """``cos(theta)|b,1_l> - sin(theta) e^{i phi}|c_l>`` for ``l`` = ``polarization``."""
    b1, c = (L.B1Minus, L.CMinus) if polarization == "-" else (L.B1Plus, L.CPlus)
    return _single({b1: math.cos(theta), c: -math.sin(theta) * np.exp(1j * phi)})


def analytic_dark_tripod(chi: float, xi: float, phases=(0.0, 0.0, 0.0)) -> tuple[StateVector, StateVector]:
    """The two tripod dark states; ``phases = (phi_cm, phi_cp, phi_d)``."""
    pcm, pcp, pd = (np.exp(1j * p) for p in phases)
    first = _single(
        {
            L.CMinus: pcm * math.cos(xi) * math.sin(chi),
            L.CPlus: pcp * math.sin(xi) * math.sin(chi),
            L.D: -pd * math.cos(chi),
        }
    )
    second = _single({L.CMinus: -pcm * math.sin(xi), L.CPlus: pcp * math.cos(xi)})
    return first, second


def analytic_dark_shelving(rho: float, phases=(0.0, 0.0)) -> StateVector:
    """``e^{i phi_+} cos(rho)|c_+> - e^{i phi_a+} sin(rho)|d>``; ``phases = (phi_+, phi_a+)``."""
    p_plus, p_a = phases
    return _single({L.CPlus: np.exp(1j * p_plus) * math.cos(rho), L.D: -np.exp(1j * p_a) * math.sin(rho)})


def shelving_companion(omega_plus: float, omega_a_plus: float, gN: float, phases=(0.0, 0.0)) -> StateVector:
    """Second shelving-phase dark state, the one carrying the photonic level.

    It is orthogonal to :func:`analytic_dark_shelving` and completes the
    two-dimensional null space of ``{b,1_+; a_+; c_+; d}``.
    """
    p_plus, p_a = phases
    v = _single(
        {
            L.B1Plus: omega_plus**2 + omega_a_plus**2,
            L.CPlus: -gN * omega_plus * np.exp(1j * p_plus),
            L.D: -gN * omega_a_plus * np.exp(1j * p_a),
        }
    )
    if v.norm == 0:
        raise ValueError("companion undefined: all couplings vanish")
    return v.normalized()


def analytic_dark_cavity(
    omega_c1: float,
    omega_c2: float,
    g1: float,
    g2: float,
    phases=(0.0, 0.0),
    basis: CompositeBasis | None = None,
) -> tuple[StateVector, StateVector]:
    """Cavity-mediated dark states (a) and (b), normalised.

    (a) ``Omega1 e^{-i phi1}|d, c_-, 1> - g1|c_+, c_-, 0>``
    (b) ``g1 Omega2 e^{-i phi2}|c_+, d, 0> + g2 Omega1 e^{-i phi1}|d, c_+, 0>
    - Omega1 Omega2 e^{-i(phi1+phi2)}|d, d, 1>``
    """
    basis = basis or make_basis(2, 2)
    e1, e2 = (np.exp(-1j * p) for p in phases)

    def build(terms):
        amps = np.zeros(basis.dimension, dtype=complex)
        for tup, a in terms:
            amps[basis.index_of(tup)] += a
        v = StateVector(basis, amps)
        if v.norm == 0:
            raise ValueError("cavity dark state undefined: all coefficients vanish")
        return v.normalized()

    a = build([((L.D, L.CMinus, 1), omega_c1 * e1), ((L.CPlus, L.CMinus, 0), -g1)])
    b = build(
        [
            ((L.CPlus, L.D, 0), g1 * omega_c2 * e2),
            ((L.D, L.CPlus, 0), g2 * omega_c1 * e1),
            ((L.D, L.D, 1), -omega_c1 * omega_c2 * e1 * e2),
        ]
    )
    return a, b


def embed_local(v: StateVector, medium: int, spectator: MediumLevel, basis: CompositeBasis, fock: int = 0) -> StateVector:
    """Lift a one-medium vector into a two-media basis next to a spectator level."""
    if v.basis.media_count != 1 or basis.media_count != 2:
        raise ConfigurationError("embed_local maps one-medium vectors into a two-media basis")
    amps = np.zeros(basis.dimension, dtype=complex)
    for lvl in MediumLevel:
        tup = (lvl, spectator, fock) if medium == 1 else (spectator, lvl, fock)
        amps[basis.index_of(tup)] = v.amplitudes[int(lvl)]
    return StateVector(basis, amps)


# --------------------------------------------------------------------------
# analytic frames for a model at time t

PHASE_KINDS = ("storage-", "storage+", "tripod", "shelving", "cavity_a", "cavity_b")


def _polar(c: complex) -> tuple[float, float]:
    return abs(c), float(np.angle(c)) if c != 0 else 0.0


def analytic_frame(kind: str, model: HamiltonianModel, t: float, medium: int = 1, spectator: MediumLevel = L.CPlus):
    """Seed basis state and closed-form dark vectors of one protocol phase at ``t``.

    The couplings (magnitudes and laser phases) are read off the model's
    schedule.  ``medium``/``spectator`` place one-medium forms inside a
    two-media register.
    """
    sched, cc, basis = model.schedule, model.couplings, model.basis
    cpl = lambda c, m=medium: complex(sched.coupling(TransitionLabel(c, m), t))  # noqa: E731

    def place(vecs, seed_level):
        if basis.media_count == 1:
            return basis.index_of((seed_level,)), list(vecs)
        seed = (seed_level, spectator, 0) if medium == 1 else (spectator, seed_level, 0)
        return basis.index_of(seed), [embed_local(v, medium, spectator, basis) for v in vecs]

    if kind in ("storage-", "storage+"):
        ell = kind[-1]
        om, phi = _polar(cpl(Coupling.OmegaMinus if ell == "-" else Coupling.OmegaPlus))
        theta = math.atan2(cc.gN(ell, medium), om)
        v = analytic_dark_storage(theta, phi, ell)
        return place([v], L.B1Minus if ell == "-" else L.B1Plus)
    if kind == "tripod":
        cm, pcm = _polar(cpl(Coupling.OmegaCMinus))
        cp, pcp = _polar(cpl(Coupling.OmegaCPlus))
        od, pd = _polar(cpl(Coupling.OmegaD))
        chi = math.atan2(od, math.hypot(cm, cp))
        xi = math.atan2(cp, cm)
        return place(analytic_dark_tripod(chi, xi, (pcm, pcp, pd)), L.CMinus)
    if kind == "shelving":
        op, pp = _polar(cpl(Coupling.OmegaPlus))
        oa, pa = _polar(cpl(Coupling.OmegaAPlus))
        rho = math.atan2(op, oa)
        vecs = [analytic_dark_shelving(rho, (pp, pa)), shelving_companion(op, oa, cc.gN("+", medium), (pp, pa))]
        return place(vecs, L.CPlus)
    if kind in ("cavity_a", "cavity_b"):
        if basis.media_count != 2:
            raise ConfigurationError("cavity dark states need the two-media model")
        o1, p1 = _polar(cpl(Coupling.OmegaCPlus, 1))
        o2, p2 = _polar(cpl(Coupling.OmegaCPlus, 2))
        a, b = analytic_dark_cavity(o1, o2, cc.g(1), cc.g(2), (p1, p2), basis)
        if kind == "cavity_a":
            return basis.index_of((L.CPlus, L.CMinus, 0)), [a]
        return basis.index_of((L.CPlus, L.D, 0)), [b]
    raise ValueError(f"unknown dark-state kind {kind!r}; expected one of {PHASE_KINDS}")


def compare_dark_space(kind: str, model: HamiltonianModel, t: float, **frame_kw) -> float:
    """Projector distance between numeric and closed-form dark spaces at ``t``.

    The numeric null space is taken inside the coupling component of the
    phase's seed state, so that spectator levels do not enter.
    """
    seed, vecs = analytic_frame(kind, model, t, **frame_kw)
    H = model.hermitian(t)
    comp = coupling_component(H, [seed])
    ds = dark_space(H, basis=model.basis, time=t, support=comp)
    return projector_distance(ds, vecs)


# --------------------------------------------------------------------------
# tracking


@dataclass(frozen=True)
class DarkTrackReport:
    times: np.ndarray = field(repr=False)
    projections: np.ndarray = field(repr=False)
    dimensions: np.ndarray = field(repr=False)
    geometric_phase: np.ndarray = field(repr=False)
    cross_terms: np.ndarray = field(repr=False)
    dimension_changes: tuple[float, ...]
    max_angle_rate: float

    @property
    def min_projection(self) -> float:
        return float(np.min(self.projections))

    @property
    def max_geometric_phase(self) -> float:
        return float(np.nanmax(self.geometric_phase, initial=0.0))

    @property
    def max_cross_term(self) -> float:
        return float(np.nanmax(self.cross_terms, initial=0.0))

    @property
    def degeneracy_crossed(self) -> bool:
        return bool(self.dimension_changes)


def _align(prev: np.ndarray, cur: np.ndarray) -> np.ndarray:
    """Rotate ``cur`` inside its span so that ``prev^H cur`` is Hermitian positive."""
    X, _, Yh = np.linalg.svd(prev.conj().T @ cur)
    return cur @ (Yh.conj().T @ X.conj().T)


def _connection(frames: list[np.ndarray], times: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Central-difference ``<v_q|dv_q'/ds>`` split into diagonal and off-diagonal maxima."""
    n = len(frames)
    diag = np.full(n, np.nan)
    off = np.full(n, np.nan)
    for k in range(1, n - 1):
        V = frames[k]
        if V.shape[1] == 0:
            continue
        A = V.conj().T @ (frames[k + 1] - frames[k - 1]) / (times[k + 1] - times[k - 1])
        diag[k] = float(np.max(np.abs(np.diag(A))))
        if A.shape[0] > 1:
            off[k] = float(np.max(np.abs(A - np.diag(np.diag(A)))))
        else:
            off[k] = 0.0
    return diag, off


def max_angle_rate(model: HamiltonianModel, times) -> float:
    """Largest mixing-angle rate of any protocol phase present in the schedule."""
    sched = model.schedule
    present = {tr.coupling for tr in sched.transitions()}
    best = 0.0
    for medium in model.media:
        phases = []
        if present & {Coupling.OmegaMinus, Coupling.OmegaPlus}:
            phases.append("storage")
        if present & {Coupling.OmegaCMinus, Coupling.OmegaCPlus, Coupling.OmegaD}:
            phases.append("tripod")
        if Coupling.OmegaAPlus in present:
            phases.append("shelving")
        for ph in phases:
            r = mixing_angle_rate(sched, model.couplings, times, ph, medium)
            best = max(best, float(np.max(r[np.isfinite(r)], initial=0.0)))
    return best


def track_dark_state(trajectory, model: HamiltonianModel, stride: int = 1) -> DarkTrackReport:
    """Follow ``psi(t)`` through the instantaneous dark spaces.

    At each sample the state is projected on ``dark_space(H(t))``.  Within a
    run of constant dark-space dimension the numeric frames are put in the
    continuity gauge (each frame rotated to have Hermitian positive overlap
    with its predecessor) and the connection ``<v_q|dv_q'/ds>`` is estimated
    by central differences; its diagonal is the geometric-phase integrand,
    its off-diagonal part the cross terms.  A dimension change restarts the
    gauge and is recorded.
    """
    idx = np.arange(0, trajectory.times.size, max(1, int(stride)))
    times = trajectory.times[idx]
    proj = np.empty(idx.size)
    dims = np.empty(idx.size, dtype=int)
    frames: list[np.ndarray] = []
    for k, i in enumerate(idx):
        ds = dark_space(model.hermitian(float(times[k])), basis=model.basis, time=float(times[k]))
        proj[k] = ds.projection(trajectory.state(int(i)))
        dims[k] = ds.dimension
        frames.append(ds.matrix())

    geo = np.full(idx.size, np.nan)
    cross = np.full(idx.size, np.nan)
    changes = []
    start = 0
    for k in range(1, idx.size + 1):
        if k == idx.size or dims[k] != dims[start]:
            seg = frames[start:k]
            for j in range(1, len(seg)):
                seg[j] = _align(seg[j - 1], seg[j])
            g, c = _connection(seg, times[start:k])
            geo[start:k], cross[start:k] = g, c
            if k < idx.size:
                changes.append(float(times[k]))
            start = k
    return DarkTrackReport(times, proj, dims, geo, cross, tuple(changes), max_angle_rate(model, times))


def analytic_connection(
    model: HamiltonianModel, times, kind: str, fraction: float = 1e-4, step: float = 1e-4, **frame_kw
):
    """Connection of the closed-form dark states in the fixed-laser-phase gauge.

    Returns ``(diag, off)`` arrays of ``max|<D_q|dD_q/dt>|`` and
    ``max|<D_q'|dD_q/dt>|`` at the sample times where the phase's pulses carry
    at least ``fraction`` of their peak (NaN elsewhere).  Derivatives are
    symmetric differences with ``step`` ns.
    """
    times = np.asarray(times, dtype=float)
    medium = frame_kw.get("medium", 1)
    needed = {
        "storage-": [Coupling.OmegaMinus],
        "storage+": [Coupling.OmegaPlus],
        "tripod": [Coupling.OmegaCMinus, Coupling.OmegaCPlus, Coupling.OmegaD],
        "shelving": [Coupling.OmegaPlus, Coupling.OmegaAPlus],
        "cavity_a": [(Coupling.OmegaCPlus, 1)],
        "cavity_b": [(Coupling.OmegaCPlus, 1), (Coupling.OmegaCPlus, 2)],
    }[kind]
    transitions = [
        TransitionLabel(*c) if isinstance(c, tuple) else TransitionLabel(c, medium) for c in needed
    ]
    transitions = [tr for tr in transitions if model.schedule.for_transition(tr)]
    mask = active_mask(model.schedule, times, transitions, fraction) if transitions else np.zeros(times.size, bool)

    def frame(t):
        return np.column_stack([v.amplitudes for v in analytic_frame(kind, model, float(t), **frame_kw)[1]])

    diag = np.full(times.size, np.nan)
    off = np.full(times.size, np.nan)
    for k in np.flatnonzero(mask):
        t = times[k]
        V = frame(t)
        A = V.conj().T @ (frame(t + step) - frame(t - step)) / (2 * step)
        diag[k] = float(np.max(np.abs(np.diag(A))))
        off[k] = float(np.max(np.abs(A - np.diag(np.diag(A))))) if A.shape[0] > 1 else 0.0
    return diag, off
