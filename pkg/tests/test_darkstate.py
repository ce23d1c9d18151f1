import math

import numpy as np
import pytest

from dsim.darkstate import (
    analytic_connection,
    analytic_dark_cavity,
    analytic_dark_shelving,
    analytic_dark_storage,
    analytic_dark_tripod,
    analytic_frame,
    compare_dark_space,
    coupling_component,
    dark_space,
    embed_local,
    orthonormal_span,
    projector_distance,
    shelving_companion,
    track_dark_state,
)
from dsim.dynamics import CouplingConstants, HamiltonianModel, propagate
from dsim.errors import ConfigurationError
from dsim.hilbert import MediumLevel as L, StateVector, make_basis
from dsim.protocols import (
    DEFAULT_TIMING,
    GateParameters,
    dark_input,
    default_couplings,
    plan_cphase,
    plan_one_qubit,
    plan_storage,
)
from dsim.pulses import Coupling, Gaussian, PulseEnvelope, PulseSchedule, TransitionLabel


def env(c, peak, center, phase=0.0, medium=1, fwhm=5.0):
    return PulseEnvelope(TransitionLabel(c, medium), Gaussian(peak, fwhm, center), phase)


def single_model(*envs, gN=0.6):
    return HamiltonianModel.single(CouplingConstants((gN,), (gN,)), PulseSchedule.from_envelopes(envs))


def residual(H, v):
    return float(np.linalg.norm(H @ v.amplitudes))


def test_undriven_medium_dark_space_is_metastable_manifold():
    m = single_model(env(Coupling.OmegaD, 1e-12, 0.0))
    ds = dark_space(m.hermitian(0.0))
    assert ds.dimension == 3
    expected = [StateVector.basis_state(m.basis, (lvl,)) for lvl in (L.CMinus, L.CPlus, L.D)]
    assert projector_distance(ds, expected) < 1e-12


@pytest.mark.parametrize("omega, phi", [(0.3, 0.0), (2.0, 1.1), (15.0, -2.5)])
@pytest.mark.parametrize("pol", ["-", "+"])
def test_storage_dark_state(omega, phi, pol):
    c = Coupling.OmegaMinus if pol == "-" else Coupling.OmegaPlus
    m = single_model(env(c, omega, 0.0, phi))
    H = m.hermitian(0.0)
    theta = math.atan2(0.6, omega)
    v = analytic_dark_storage(theta, phi, pol)
    assert v.norm == pytest.approx(1.0)
    assert residual(H, v) < 1e-13
    assert compare_dark_space("storage" + pol, m, 0.0) < 1e-12


def test_tripod_dark_space_is_two_dimensional():
    phases = (0.2, 1.3, -0.7)
    m = single_model(
        env(Coupling.OmegaCMinus, 1.1, 0.0, phases[0]),
        env(Coupling.OmegaCPlus, 0.7, 0.0, phases[1]),
        env(Coupling.OmegaD, 2.0, 0.0, phases[2]),
    )
    H = m.hermitian(0.0)
    chi = math.atan2(2.0, math.hypot(1.1, 0.7))
    xi = math.atan2(0.7, 1.1)
    d1, d2 = analytic_dark_tripod(chi, xi, phases)
    for v in (d1, d2):
        assert residual(H, v) < 1e-13
    assert abs(d1.inner(d2)) < 1e-15
    seed = m.basis.index_of((L.CMinus,))
    ds = dark_space(H, support=coupling_component(H, [seed]))
    assert ds.dimension == 2
    assert projector_distance(ds, [d1, d2]) < 1e-12


def test_projector_distance_ignores_basis_choice():
    rng = np.random.default_rng(3)
    A = orthonormal_span(list(rng.normal(size=(2, 6)) + 1j * rng.normal(size=(2, 6))))
    U = np.linalg.qr(rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2)))[0]
    assert projector_distance(A, A @ U) < 1e-13
    assert projector_distance(A[:, :1], A[:, 1:]) == pytest.approx(1.0)
    with pytest.raises(ConfigurationError):
        projector_distance(A, np.eye(5)[:, :1])


def test_shelving_dark_states_two_media():
    cc = CouplingConstants((0.6, 0.6), (0.6, 0.6), (1.0, 1.0), cavity_n_max=2)
    sched = PulseSchedule.from_envelopes(
        [env(Coupling.OmegaPlus, 3.0, 0.0, 0.4, medium=2), env(Coupling.OmegaAPlus, 5.0, 0.0, 0.4 + math.pi, medium=2)]
    )
    m = HamiltonianModel.two_media(cc, sched, cavity_windows=())
    H = m.hermitian(0.0)
    rho = math.atan2(3.0, 5.0)
    d = embed_local(analytic_dark_shelving(rho, (0.4, 0.4 + math.pi)), 2, L.CPlus, m.basis)
    comp = embed_local(shelving_companion(3.0, 5.0, 0.6, (0.4, 0.4 + math.pi)), 2, L.CPlus, m.basis)
    assert residual(H, d) < 1e-13 and residual(H, comp) < 1e-13
    assert abs(d.inner(comp)) < 1e-15
    assert compare_dark_space("shelving", m, 0.0, medium=2, spectator=L.CPlus) < 1e-12


def test_cavity_dark_states_are_annihilated():
    g1, g2, o1, o2, p1, p2 = 2.0, 3.0, 0.7, 1.9, 0.3, -1.2
    cc = CouplingConstants((0.6, 0.6), (0.6, 0.6), (g1, g2), cavity_n_max=2)
    sched = PulseSchedule.from_envelopes(
        [env(Coupling.OmegaCPlus, o1, 0.0, p1, medium=1), env(Coupling.OmegaCPlus, o2, 0.0, p2, medium=2)]
    )
    m = HamiltonianModel.two_media(cc, sched)
    H = m.hermitian(0.0)
    a, b = analytic_dark_cavity(o1, o2, g1, g2, (p1, p2), m.basis)
    assert residual(H, a) < 1e-13
    assert residual(H, b) < 1e-13
    assert compare_dark_space("cavity_a", m, 0.0) < 1e-12
    assert compare_dark_space("cavity_b", m, 0.0) < 1e-12
    with pytest.raises(ConfigurationError):
        analytic_frame("cavity_a", single_model(env(Coupling.OmegaD, 1, 0)), 0.0)


def test_dark_vectors_have_no_excited_amplitude_and_fixed_phase():
    m = single_model(env(Coupling.OmegaMinus, 1.0, 0.0, 0.5), env(Coupling.OmegaD, 0.3, 0.0, 1.0))
    ds = dark_space(m.hermitian(0.0))
    for v in ds.vectors:
        assert v.excited_population() < 1e-18
        k = np.argmax(np.abs(v.amplitudes))
        assert abs(v.amplitudes[k].imag) < 1e-15 and v.amplitudes[k].real > 0
    assert np.all(ds.eigenvalue_residuals < 1e-12)


def test_dark_space_arguments():
    with pytest.raises(ConfigurationError):
        dark_space(np.zeros((3, 4)))
    with pytest.raises(ConfigurationError):
        dark_space(np.zeros((5, 5)))
    # a generous cutoff swallows the bright pair of a weak storage coupling
    m = single_model(env(Coupling.OmegaMinus, 1.0, 0.0), gN=1e-3)
    assert dark_space(m.hermitian(0.0)).dimension == 3
    assert dark_space(m.hermitian(0.0), eps=1e-2).dimension > 3


def test_coupling_component():
    H = np.zeros((4, 4))
    H[0, 1] = H[1, 0] = 1.0
    H[2, 3] = H[3, 2] = 1e-14
    assert coupling_component(H, [0]).tolist() == [0, 1]
    assert coupling_component(H, [2]).tolist() == [2]


def test_plan_phases_match_closed_forms():
    couplings = default_couplings(1)
    plan = plan_one_qubit(GateParameters.rotation(0.4, 1.0, 2.0), couplings)
    model = plan.model(couplings)
    for step in plan.steps:
        t = float(np.mean(step.schedule.window))
        kinds = ("storage-", "storage+") if step.kind in ("storage", "release") else ("tripod",)
        for kind in kinds:
            assert compare_dark_space(kind, model, t) < 1e-10


def test_fixed_phase_gauge_has_no_connection():
    couplings = default_couplings(1)
    plan = plan_one_qubit(GateParameters.rotation(math.pi / 4, math.pi / 2, math.pi / 2), couplings)
    model = plan.model(couplings)
    step = plan.steps[1]
    times = np.linspace(*step.schedule.window, 201)
    diag, off = analytic_connection(model, times, "tripod")
    assert np.nanmax(diag) < 1e-8
    assert np.nanmax(off) < 1e-8
    assert np.isnan(diag[0])


def _storage_tracking(scale):
    couplings = default_couplings(1)
    plan = plan_storage(GateParameters(), couplings, DEFAULT_TIMING.with_(duration_scale=scale))
    model = plan.model(couplings)
    traj = propagate(model, dark_input(np.array([0.6, 0.8]), model), n_samples=401)
    return track_dark_state(traj, model)


def test_tracking_storage_follows_dark_state_better_when_slower():
    fast, slow = _storage_tracking(1.0), _storage_tracking(4.0)
    assert slow.min_projection > 0.995
    assert 1 - slow.min_projection < 0.5 * (1 - fast.min_projection)
    assert slow.max_angle_rate < fast.max_angle_rate
    assert not slow.degeneracy_crossed


def test_tracking_records_dimension_changes_across_steps():
    couplings = default_couplings(1)
    plan = plan_one_qubit(GateParameters.rotation(0.3, 0.0, 1.0), couplings)
    model = plan.model(couplings)
    traj = propagate(model, dark_input(np.array([1.0, 0.0]), model), n_samples=601)
    report = track_dark_state(traj, model, stride=3)
    assert report.degeneracy_crossed
    assert set(np.unique(report.dimensions)) >= {2, 3}


def test_cphase_plan_phases_match_closed_forms():
    couplings = default_couplings(2)
    plan = plan_cphase(GateParameters.cphase(math.pi), couplings)
    model = plan.model(couplings)
    checks = {
        "storage": [("storage-", {"medium": 1, "spectator": L.D}), ("storage+", {"medium": 2, "spectator": L.D})],
        "shelving": [("shelving", {"medium": 2, "spectator": L.CPlus})],
        "cavity": [("cavity_a", {}), ("cavity_b", {})],
    }
    for step in plan.steps:
        t = float(np.mean(step.schedule.window))
        for kind, kw in checks.get(step.kind, []):
            assert compare_dark_space(kind, model, t, **kw) < 1e-10, (step.name, kind)
