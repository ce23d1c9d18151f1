import math
from types import SimpleNamespace

import numpy as np
import pytest

from dsim import dynamics
from dsim.dynamics import (
    CouplingConstants,
    HamiltonianModel,
    add_decay,
    build_h_single,
    build_h_two,
    decay_diagonal,
    propagate,
)
from dsim.errors import ConfigurationError, IntegrationError
from dsim.hilbert import MediumLevel as L, StateVector, make_basis
from dsim.pulses import Coupling, Gaussian, PulseEnvelope, PulseSchedule, TransitionLabel

GAUSS_AREA = math.sqrt(math.pi / (4 * math.log(2)))  # integral of a unit-peak, unit-fwhm Gaussian


def env(c, peak, fwhm, center, phase=0.0, medium=1):
    return PulseEnvelope(TransitionLabel(c, medium), Gaussian(peak, fwhm, center), phase)


def sched(*envs, window=None):
    return PulseSchedule.from_envelopes(envs, window)


def test_single_medium_matrix_elements():
    phases = {c: 0.3 + 0.4 * k for k, c in enumerate(Coupling) if c is not Coupling.OmegaAPlus}
    envs = [env(c, 1.0 + k, 5.0, 0.0, phases[c]) for k, c in enumerate(phases)]
    cc = CouplingConstants((0.7,), (0.9,))
    m = HamiltonianModel.single(cc, sched(*envs))
    H = build_h_single(m, 0.0)
    b = m.basis
    i = lambda lvl: b.index_of((lvl,))  # noqa: E731
    amp = {c: (1.0 + k) * np.exp(1j * phases[c]) for k, c in enumerate(phases)}
    assert H[i(L.AMinus), i(L.B1Minus)] == pytest.approx(0.7)
    assert H[i(L.APlus), i(L.B1Plus)] == pytest.approx(0.9)
    assert H[i(L.AMinus), i(L.CMinus)] == pytest.approx(np.conj(amp[Coupling.OmegaMinus]))
    assert H[i(L.APlus), i(L.CPlus)] == pytest.approx(np.conj(amp[Coupling.OmegaPlus]))
    assert H[i(L.CMinus), i(L.E)] == pytest.approx(amp[Coupling.OmegaCMinus])
    assert H[i(L.CPlus), i(L.E)] == pytest.approx(amp[Coupling.OmegaCPlus])
    assert H[i(L.D), i(L.E)] == pytest.approx(amp[Coupling.OmegaD])
    assert np.allclose(H, H.conj().T)
    # nothing else is coupled
    assert np.count_nonzero(np.abs(H) > 1e-14) == 2 * 7


def test_shelving_coupling_needs_two_media_model():
    with pytest.raises(ConfigurationError):
        HamiltonianModel.single(CouplingConstants(), sched(env(Coupling.OmegaAPlus, 1, 5, 0)))


def test_two_media_cavity_elements():
    cc = CouplingConstants((0.6, 0.6), (0.6, 0.6), (1.5, 2.5), cavity_n_max=2)
    m = HamiltonianModel.two_media(cc, sched(env(Coupling.OmegaAPlus, 1.2, 5, 0, 0.5, medium=2)))
    H = build_h_two(m, 0.0)
    b = m.basis
    assert b.dimension == 192
    assert H[b.index_of((L.E, L.CMinus, 0)), b.index_of((L.D, L.CMinus, 1))] == pytest.approx(1.5)
    assert H[b.index_of((L.E, L.CMinus, 1)), b.index_of((L.D, L.CMinus, 2))] == pytest.approx(1.5 * math.sqrt(2))
    assert H[b.index_of((L.CMinus, L.E, 0)), b.index_of((L.CMinus, L.D, 1))] == pytest.approx(2.5)
    assert H[b.index_of((L.CMinus, L.APlus, 0)), b.index_of((L.CMinus, L.D, 0))] == pytest.approx(1.2 * np.exp(-0.5j))
    assert np.allclose(H, H.conj().T)
    with pytest.raises(ConfigurationError):
        build_h_single(m, 0.0)


def test_cavity_windows_gate_the_cavity_coupling():
    cc = CouplingConstants((0.6, 0.6), (0.6, 0.6), (1.0, 1.0), cavity_n_max=1)
    m = HamiltonianModel.two_media(cc, sched(env(Coupling.OmegaD, 1, 5, 0)), cavity_windows=[(5.0, 6.0)])
    b = m.basis
    k = (b.index_of((L.E, L.CMinus, 0)), b.index_of((L.D, L.CMinus, 1)))
    assert m.hermitian(0.0)[k] == 0
    assert m.hermitian(5.5)[k] == pytest.approx(1.0)
    assert m.breakpoints(-15.0, 15.0) == [-15.0, 5.0, 6.0, 15.0]


def test_decay_diagonal():
    cc = CouplingConstants((0.6, 0.6), (0.6, 0.6), (1.0, 1.0), gamma_a=0.1, gamma_e=0.2, kappa=0.3, cavity_n_max=2)
    b = make_basis(2, 2)
    d = decay_diagonal(b, cc)
    assert d[b.index_of((L.APlus, L.E, 2))] == pytest.approx(-0.5j * (0.1 + 0.2 + 0.6))
    assert d[b.index_of((L.CMinus, L.D, 0))] == 0
    H = add_decay(np.zeros((192, 192)), cc, b)
    assert np.allclose(np.diag(H), d)


def test_couplings_validation_and_broadcast():
    cc = CouplingConstants(0.5, (0.6, 0.7))
    assert cc.gN_minus == (0.5, 0.5)
    assert cc.gN("+", 2) == 0.7
    with pytest.raises(ConfigurationError):
        CouplingConstants(-1.0)
    with pytest.raises(ConfigurationError):
        CouplingConstants(cavity_n_max=-1)


def test_resonant_rabi_area_oracle():
    # two-level d <-> e: populations follow cos^2(pulse area)
    peak, fwhm = 0.5, 4.0
    m = HamiltonianModel.single(CouplingConstants(), sched(env(Coupling.OmegaD, peak, fwhm, 0.0, 0.4)))
    psi0 = StateVector.basis_state(m.basis, (L.D,))
    traj = propagate(m, psi0)
    area = peak * fwhm * GAUSS_AREA
    assert traj.final.population((L.D,)) == pytest.approx(math.cos(area) ** 2, abs=1e-8)
    assert traj.final.population((L.E,)) == pytest.approx(math.sin(area) ** 2, abs=1e-8)
    # amplitude phase: c_e = -i e^{-i phi} sin(area)
    assert traj.final.amplitude((L.E,)) == pytest.approx(-1j * np.exp(-0.4j) * math.sin(area), abs=1e-8)
    assert np.max(np.abs(traj.norms() - 1)) < 1e-8


def test_vacuum_rabi_oracle():
    g = 0.8
    cc = CouplingConstants((0.6, 0.6), (0.6, 0.6), (g, g), cavity_n_max=2)
    quiet = sched(env(Coupling.OmegaD, 1e-12, 1.0, 5.0, medium=1), window=(0.0, 10.0))
    m = HamiltonianModel.two_media(cc, quiet)
    psi0 = StateVector.basis_state(m.basis, (L.D, L.CMinus, 1))
    traj = propagate(m, psi0, n_samples=101)
    pops = traj.populations()[:, m.basis.index_of((L.D, L.CMinus, 1))]
    assert np.allclose(pops, np.cos(g * traj.times) ** 2, atol=1e-8)


def test_decay_oracle():
    # excited level with no drive decays as exp(-gamma t)
    cc = CouplingConstants(0.0, 0.0, gamma_e=0.25)
    m = HamiltonianModel.single(cc, sched(env(Coupling.OmegaD, 1e-12, 1.0, 5.0), window=(0.0, 10.0)), decay=True)
    traj = propagate(m, StateVector.basis_state(m.basis, (L.E,)))
    assert traj.norms()[-1] ** 2 == pytest.approx(math.exp(-2.5), rel=1e-8)
    assert np.all(np.diff(traj.norms()) <= 1e-14)


def test_propagate_sampling_and_arguments():
    m = HamiltonianModel.single(CouplingConstants(), sched(env(Coupling.OmegaD, 0.5, 4.0, 0.0)))
    psi0 = StateVector.basis_state(m.basis, (L.D,))
    traj = propagate(m, psi0, -5.0, 5.0, n_samples=11)
    assert np.allclose(traj.times, np.linspace(-5, 5, 11))
    assert traj.amplitudes.shape == (11, 8)
    assert traj.nfev > 0
    with pytest.raises(ConfigurationError):
        propagate(m, psi0, 1.0, 0.0)
    with pytest.raises(ConfigurationError):
        propagate(m, StateVector.basis_state(make_basis(2, 1), (L.D, L.D, 0)))


def test_piecewise_integration_matches_ungated_solution():
    # windows that cover the whole run must not change the result
    cc = CouplingConstants((0.6, 0.6), (0.6, 0.6), (0.8, 0.8), cavity_n_max=1)
    s = sched(env(Coupling.OmegaD, 0.3, 3.0, 0.0, medium=2))
    psi0 = StateVector.basis_state(make_basis(2, 1), (L.D, L.D, 1))
    a = propagate(HamiltonianModel.two_media(cc, s), psi0).final
    b = propagate(HamiltonianModel.two_media(cc, s, cavity_windows=[(-20.0, -1.0), (-1.0, 20.0)]), psi0).final
    assert np.allclose(a.amplitudes, b.amplitudes, atol=1e-8)


def test_integration_failure_raises(monkeypatch):
    m = HamiltonianModel.single(CouplingConstants(), sched(env(Coupling.OmegaD, 0.5, 4.0, 0.0)))
    fake = SimpleNamespace(status=-1, message="step size too small", t=np.array([-3.0]), y=np.zeros((8, 1)), nfev=1)
    monkeypatch.setattr(dynamics, "solve_ivp", lambda *a, **k: fake)
    with pytest.raises(IntegrationError) as err:
        propagate(m, StateVector.basis_state(m.basis, (L.D,)))
    assert err.value.t == -3.0
