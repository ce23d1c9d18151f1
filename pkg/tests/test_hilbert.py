import itertools

import numpy as np
import pytest

from dsim.errors import ConfigurationError, NotReleasedError
from dsim.hilbert import (
    CompositeBasis,
    MediumLevel as L,
    QubitState,
    StateVector,
    TwoQubitState,
    embed_qubit,
    embed_two_qubit,
    extract_qubit,
    extract_two_qubit,
    fidelity_states,
    fidelity_vectors,
    make_basis,
)


def test_single_medium_dimension_and_order():
    b = make_basis(1)
    assert b.dimension == 8
    assert [t[0] for t in b.tuples] == list(L)
    assert b.photonic_indices == (0, 1)


@pytest.mark.parametrize("n_max, dim", [(1, 128), (2, 192), (3, 256)])
def test_two_media_dimension(n_max, dim):
    assert make_basis(2, n_max).dimension == dim


def test_two_media_lexicographic_order():
    b = make_basis(2, 2)
    expected = list(itertools.product(L, L, range(3)))
    assert list(b.tuples) == expected
    for i, tup in enumerate(expected):
        assert b.index_of(tup) == i


def test_index_of_accepts_plain_ints():
    b = make_basis(2, 2)
    assert b.index_of((4, 5, 1)) == b.index_of((L.CMinus, L.CPlus, 1))
    with pytest.raises(KeyError):
        b.index_of((L.CMinus, L.CPlus, 3))


def test_excited_mask_and_fock_numbers():
    b = make_basis(2, 2)
    for i, (l1, l2, n) in enumerate(b.tuples):
        assert b.excited_mask[i] == (l1.is_excited or l2.is_excited)
        assert b.fock_numbers[i] == n
    assert make_basis(1).excited_mask.sum() == 3


def test_level_classes_partition():
    for lvl in L:
        assert lvl.is_excited + lvl.is_metastable + lvl.is_photonic == 1


def test_invalid_bases():
    with pytest.raises(ConfigurationError):
        CompositeBasis(3)
    with pytest.raises(ConfigurationError):
        CompositeBasis(1, 2)


def test_label():
    b = make_basis(2, 2)
    assert b.label(b.index_of((L.D, L.E, 1))) == "|D,E,n1>"


def test_state_vector_checks_length():
    with pytest.raises(ConfigurationError):
        StateVector(make_basis(1), np.zeros(5))


def test_state_vector_is_immutable():
    s = StateVector.basis_state(make_basis(1), (L.CMinus,))
    with pytest.raises(ValueError):
        s.amplitudes[0] = 1


def test_state_vector_algebra():
    b = make_basis(1)
    x = StateVector.basis_state(b, (L.CMinus,))
    y = StateVector.basis_state(b, (L.CPlus,), 1j)
    z = (x + y) * (1 / np.sqrt(2))
    assert z.norm == pytest.approx(1.0)
    assert z.inner(y) == pytest.approx(1 / np.sqrt(2))
    assert (x - x).norm == 0
    assert z.population((L.CPlus,)) == pytest.approx(0.5)


def test_basis_mismatch_is_rejected():
    a = StateVector.basis_state(make_basis(1), (L.CMinus,))
    b = StateVector.basis_state(make_basis(2, 1), (L.CMinus, L.CMinus, 0))
    with pytest.raises(ConfigurationError):
        a.inner(b)


def test_qubit_normalisation_enforced():
    with pytest.raises(ValueError):
        QubitState(1.0, 1.0)
    q = QubitState.from_vector([3, 4j])
    assert q.alpha == pytest.approx(0.6)
    assert q.beta == pytest.approx(0.8j)


def test_embed_extract_roundtrip_single():
    b = make_basis(1)
    q = QubitState.from_vector([0.6, 0.8j])
    s = embed_qubit(q, b)
    assert s.amplitude((L.B1Minus,)) == pytest.approx(0.6)
    assert s.amplitude((L.B1Plus,)) == pytest.approx(0.8j)
    back, leak = extract_qubit(s)
    assert np.allclose(back.vector, q.vector)
    assert leak == pytest.approx(0.0)


def test_embed_extract_roundtrip_two():
    b = make_basis(2, 2)
    q = TwoQubitState.from_vector([1, 2j, -3, 0.5])
    s = embed_two_qubit(q, b)
    assert s.amplitude((L.B1Plus, L.B1Minus, 0)) == pytest.approx(q.gamma)
    back, leak = extract_two_qubit(s)
    assert np.allclose(back.vector, q.vector)


def test_extract_reports_leakage_and_renormalises():
    b = make_basis(1)
    amps = np.zeros(8, complex)
    amps[0], amps[int(L.CMinus)] = 0.6, 0.8
    q, leak = extract_qubit(StateVector(b, amps))
    assert leak == pytest.approx(0.64)
    assert q.alpha == pytest.approx(1.0)


def test_extract_unreleased_state_raises():
    s = StateVector.basis_state(make_basis(1), (L.CMinus,))
    with pytest.raises(NotReleasedError):
        extract_qubit(s)


def test_fidelity_is_global_phase_invariant():
    v = np.array([0.6, 0.8j])
    assert fidelity_vectors(v, np.exp(0.7j) * v) == pytest.approx(1.0)
    assert fidelity_vectors([1, 0], [0, 1]) == 0.0
    b = make_basis(1)
    a = embed_qubit(QubitState(1, 0), b)
    c = embed_qubit(QubitState.from_vector([1, 1]), b)
    assert fidelity_states(a, c) == pytest.approx(0.5)
